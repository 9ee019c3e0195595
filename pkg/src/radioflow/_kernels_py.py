"""Pure numpy implementations of the hot kernels.

These are the reference path. ``radioflow._kernels`` (Cython) must agree
with them to floating-point rounding.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def phasor_table(phase0, step, n):
    """Return ``exp(1j * (phase0[s] + k * step[s]))`` for ``k in range(n)``.

    Shape ``(len(phase0), n)``, complex128.
    """
    phase0 = np.asarray(phase0, dtype=np.float64)
    step = np.asarray(step, dtype=np.float64)
    k = np.arange(n, dtype=np.float64)
    return np.exp(1j * (phase0[:, None] + step[:, None] * k[None, :]))


def im2col(x, kh, kw, stride, pad):
    """Unfold NCHW input into a ``(N*Ho*Wo, C*kh*kw)`` patch matrix."""
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    return np.ascontiguousarray(cols)


def col2im(cols, x_shape, kh, kw, stride, pad):
    """Adjoint of :func:`im2col`: scatter-add patches back to NCHW."""
    n, c, h, w = x_shape
    hp, wp = h + 2 * pad, w + 2 * pad
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    patches = cols.reshape(n, ho, wo, c, kh, kw)
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += (
                patches[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    if pad:
        out = out[:, :, pad:pad + h, pad:pad + w]
    return out
