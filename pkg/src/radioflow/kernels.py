"""Backend selection for the hot kernels.

The compiled extension is used when it was built and imports cleanly.
Set ``RADIOFLOW_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from radioflow import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("RADIOFLOW_PURE_PYTHON"):
    try:
        from radioflow import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

phasor_table = _impl.phasor_table
im2col = _impl.im2col
col2im = _impl.col2im

__all__ = ["BACKEND", "phasor_table", "im2col", "col2im"]
