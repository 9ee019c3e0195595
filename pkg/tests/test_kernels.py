import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from radioflow import _kernels_py as ref
from radioflow import kernels

compiled = pytest.importorskip("radioflow._kernels")


@given(st.integers(1, 20), st.integers(1, 70), st.integers(0, 2 ** 16))
def test_phasor_table_backends_agree(n_src, n, seed):
    rng = np.random.default_rng(seed)
    p0 = rng.uniform(-10, 10, n_src)
    step = rng.uniform(-3, 3, n_src)
    np.testing.assert_allclose(compiled.phasor_table(p0, step, n), ref.phasor_table(p0, step, n),
                               rtol=0, atol=1e-9)


conv_shapes = st.tuples(st.integers(1, 3), st.integers(1, 4), st.integers(3, 9), st.integers(3, 9),
                        st.sampled_from([1, 3]), st.integers(1, 2), st.integers(0, 1))


@given(conv_shapes, st.sampled_from([np.float32, np.float64]), st.integers(0, 2 ** 16))
def test_im2col_col2im_backends_agree(shape, dtype, seed):
    n, c, h, w, k, stride, pad = shape
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, c, h, w)).astype(dtype)
    a = compiled.im2col(x, k, k, stride, pad)
    b = ref.im2col(x, k, k, stride, pad)
    np.testing.assert_array_equal(a, b)
    cols = rng.standard_normal(b.shape).astype(dtype)
    tol = 1e-5 if dtype == np.float32 else 1e-12
    np.testing.assert_allclose(compiled.col2im(cols, x.shape, k, k, stride, pad),
                               ref.col2im(cols, x.shape, k, k, stride, pad), rtol=tol, atol=tol)


@given(conv_shapes, st.integers(0, 2 ** 16))
def test_col2im_is_adjoint(shape, seed):
    n, c, h, w, k, stride, pad = shape
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, c, h, w))
    cols = ref.im2col(x, k, k, stride, pad)
    y = rng.standard_normal(cols.shape)
    lhs = np.sum(cols * y)
    rhs = np.sum(x * kernels.col2im(y, x.shape, k, k, stride, pad))
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_pure_python_switch():
    env = dict(os.environ, RADIOFLOW_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import radioflow.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND == ("python" if os.environ.get("RADIOFLOW_PURE_PYTHON") else "cython")
