# cython: language_level=3
"""Compiled hot kernels. Same contracts as ``radioflow._kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()

ctypedef fused real_t:
    float
    double

# Rotation-recurrence drift is reset against libm every RESYNC steps.
cdef enum:
    RESYNC = 32


def phasor_table(phase0, step, Py_ssize_t n):
    cdef double[::1] p0 = np.ascontiguousarray(phase0, dtype=np.float64)
    cdef double[::1] st = np.ascontiguousarray(step, dtype=np.float64)
    cdef Py_ssize_t ns = p0.shape[0]
    out = np.empty((ns, n), dtype=np.complex128)
    cdef double[:, ::1] o = out.view(np.float64).reshape(ns, 2 * n)
    cdef Py_ssize_t s, k
    cdef double re, im, dre, dim, tmp, ph
    with nogil:
        for s in range(ns):
            dre = cos(st[s])
            dim = sin(st[s])
            re = 0.0
            im = 0.0
            for k in range(n):
                if k % RESYNC == 0:
                    ph = p0[s] + k * st[s]
                    re = cos(ph)
                    im = sin(ph)
                else:
                    tmp = re * dre - im * dim
                    im = re * dim + im * dre
                    re = tmp
                o[s, 2 * k] = re
                o[s, 2 * k + 1] = im
    return out


def _im2col(real_t[:, :, :, ::1] x, real_t[:, ::1] cols,
            int kh, int kw, int stride, int pad, int ho, int wo):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t b, oy, ox, ch, i, j, iy, ix, row, col
    with nogil:
        for b in range(n):
            for oy in range(ho):
                for ox in range(wo):
                    row = (b * ho + oy) * wo + ox
                    col = 0
                    for ch in range(c):
                        for i in range(kh):
                            iy = oy * stride + i - pad
                            for j in range(kw):
                                ix = ox * stride + j - pad
                                if 0 <= iy < h and 0 <= ix < w:
                                    cols[row, col] = x[b, ch, iy, ix]
                                else:
                                    cols[row, col] = 0
                                col += 1


def _col2im(real_t[:, ::1] cols, real_t[:, :, :, ::1] out,
            int kh, int kw, int stride, int pad, int ho, int wo):
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1], h = out.shape[2], w = out.shape[3]
    cdef Py_ssize_t b, oy, ox, ch, i, j, iy, ix, row, col
    with nogil:
        for b in range(n):
            for oy in range(ho):
                for ox in range(wo):
                    row = (b * ho + oy) * wo + ox
                    col = 0
                    for ch in range(c):
                        for i in range(kh):
                            iy = oy * stride + i - pad
                            for j in range(kw):
                                ix = ox * stride + j - pad
                                if 0 <= iy < h and 0 <= ix < w:
                                    out[b, ch, iy, ix] += cols[row, col]
                                col += 1


def im2col(x, int kh, int kw, int stride, int pad):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    cols = np.empty((n * ho * wo, c * kh * kw), dtype=x.dtype)
    if x.dtype != np.float32:
        x = x.astype(np.float64, copy=False)
        cols = cols.astype(np.float64, copy=False)
    _im2col(x, cols, kh, kw, stride, pad, ho, wo)
    return cols


def col2im(cols, x_shape, int kh, int kw, int stride, int pad):
    cols = np.ascontiguousarray(cols)
    n, c, h, w = x_shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((n, c, h, w), dtype=cols.dtype)
    if cols.dtype != np.float32:
        cols = cols.astype(np.float64, copy=False)
        out = out.astype(np.float64, copy=False)
    _col2im(cols, out, kh, kw, stride, pad, ho, wo)
    return out
