# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Fused C kernels for the CPU inference path.

Same semantics as sssp._kernels.fallback (the numpy reference): bilinear
tri-plane sampling with zero contribution outside the cube, and front-to-back
alpha compositing. float64 only.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, floor

cnp.import_array()


def sample_triplane(double[:, :, :, ::1] planes, double[:, ::1] pts, double extent):
    """planes [3, C, R, R] (rows=v, cols=u), pts [N, 3] -> features [N, C]."""
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t c = planes.shape[1]
    cdef Py_ssize_t r = planes.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.zeros((n, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double scale = r / (2.0 * extent)
    cdef Py_ssize_t i, k, ch, ax_u, ax_v
    cdef double u, v, fu, fv, tu, tv, w00, w01, w10, w11
    cdef Py_ssize_t iu0, iv0, iu1, iv1
    cdef bint u0ok, u1ok, v0ok, v1ok

    for i in range(n):
        for k in range(3):
            if k == 0:
                ax_u = 0; ax_v = 1
            elif k == 1:
                ax_u = 0; ax_v = 2
            else:
                ax_u = 1; ax_v = 2
            u = pts[i, ax_u]
            v = pts[i, ax_v]
            if u < -extent or u > extent or v < -extent or v > extent:
                continue
            fu = (u + extent) * scale - 0.5
            fv = (v + extent) * scale - 0.5
            iu0 = <Py_ssize_t>floor(fu)
            iv0 = <Py_ssize_t>floor(fv)
            tu = fu - floor(fu)
            tv = fv - floor(fv)
            iu1 = iu0 + 1
            iv1 = iv0 + 1
            u0ok = 0 <= iu0 < r
            u1ok = 0 <= iu1 < r
            v0ok = 0 <= iv0 < r
            v1ok = 0 <= iv1 < r
            w00 = (1.0 - tu) * (1.0 - tv)
            w10 = tu * (1.0 - tv)
            w01 = (1.0 - tu) * tv
            w11 = tu * tv
            for ch in range(c):
                if u0ok and v0ok:
                    out[i, ch] += w00 * planes[k, ch, iv0, iu0]
                if u1ok and v0ok:
                    out[i, ch] += w10 * planes[k, ch, iv0, iu1]
                if u0ok and v1ok:
                    out[i, ch] += w01 * planes[k, ch, iv1, iu0]
                if u1ok and v1ok:
                    out[i, ch] += w11 * planes[k, ch, iv1, iu1]
    return out_arr


def composite_rays(double[:, ::1] sigmas, double[:, :, ::1] feats, double delta,
                   background=None):
    """sigmas [Nr, Ns], feats [Nr, Ns, C] -> (features [Nr, C], weights [Nr, Ns])."""
    cdef Py_ssize_t nr = sigmas.shape[0]
    cdef Py_ssize_t ns = sigmas.shape[1]
    cdef Py_ssize_t c = feats.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.zeros((nr, c), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] w_arr = np.zeros((nr, ns), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] weights = w_arr
    cdef double[::1] bg
    cdef bint has_bg = background is not None
    if has_bg:
        bg = np.ascontiguousarray(background, dtype=np.float64)
    cdef Py_ssize_t i, j, ch
    cdef double trans, alpha, w

    for i in range(nr):
        trans = 1.0
        for j in range(ns):
            alpha = 1.0 - exp(-sigmas[i, j] * delta)
            w = trans * alpha
            weights[i, j] = w
            for ch in range(c):
                out[i, ch] += w * feats[i, j, ch]
            trans *= 1.0 - alpha
        if has_bg:
            for ch in range(c):
                out[i, ch] += trans * bg[ch]
    return out_arr, w_arr
