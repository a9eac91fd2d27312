# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``reference.py``.

Same contracts, same tie-breaking; see reference.py for documentation.
Fused-type dispatch picks the float32/float64 specialization from the
argument dtype.
"""

import numpy as np

cimport numpy as cnp
from libc.string cimport memcpy

cnp.import_array()

ctypedef fused real:
    float
    double

BACKEND = "native"


def im2col3(real[:, :, :, ::1] x):
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef cnp.ndarray out_arr = np.zeros((b, c * 9, h * w), dtype=np.asarray(x).dtype)
    cdef real[:, :, ::1] out = out_arr
    cdef Py_ssize_t bi, ci, di, dj, i, si, j0, j1
    with nogil:
        for bi in range(b):
            for ci in range(c):
                for di in range(3):
                    for dj in range(3):
                        # valid output columns for this kernel offset
                        j0 = 1 - dj if dj < 1 else 0
                        j1 = w if dj < 2 else w - 1
                        if j1 <= j0:
                            continue
                        for i in range(h):
                            si = i + di - 1
                            if si < 0 or si >= h:
                                continue
                            memcpy(&out[bi, ci * 9 + di * 3 + dj, i * w + j0],
                                   &x[bi, ci, si, j0 + dj - 1],
                                   (j1 - j0) * sizeof(real))
    return out_arr


def col2im3(real[:, :, ::1] cols, Py_ssize_t c, Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t b = cols.shape[0]
    cdef cnp.ndarray out_arr = np.zeros((b, c, h, w), dtype=np.asarray(cols).dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t bi, ci, di, dj, i, j, si, j0, j1
    cdef real * dst
    cdef const real * src
    with nogil:
        for bi in range(b):
            for ci in range(c):
                for di in range(3):
                    for dj in range(3):
                        j0 = 1 - dj if dj < 1 else 0
                        j1 = w if dj < 2 else w - 1
                        if j1 <= j0:
                            continue
                        for i in range(h):
                            si = i + di - 1
                            if si < 0 or si >= h:
                                continue
                            dst = &out[bi, ci, si, j0 + dj - 1]
                            src = &cols[bi, ci * 9 + di * 3 + dj, i * w + j0]
                            for j in range(j1 - j0):
                                dst[j] += src[j]
    return out_arr


def maxpool2x2_forward(real[:, :, :, ::1] x):
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t h2 = h // 2, w2 = w // 2
    cdef cnp.ndarray out_arr = np.empty((b, c, h2, w2), dtype=np.asarray(x).dtype)
    cdef cnp.ndarray idx_arr = np.empty((b, c, h2, w2), dtype=np.uint8)
    cdef real[:, :, :, ::1] out = out_arr
    cdef unsigned char[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t bi, ci, i, j, k
    cdef real best, v
    cdef unsigned char besti
    with nogil:
        for bi in range(b):
            for ci in range(c):
                for i in range(h2):
                    for j in range(w2):
                        best = x[bi, ci, 2 * i, 2 * j]
                        besti = 0
                        for k in range(1, 4):
                            v = x[bi, ci, 2 * i + (k >> 1), 2 * j + (k & 1)]
                            if v > best:
                                best = v
                                besti = <unsigned char> k
                        out[bi, ci, i, j] = best
                        idx[bi, ci, i, j] = besti
    return out_arr, idx_arr


def maxpool2x2_backward(real[:, :, :, ::1] grad_out, unsigned char[:, :, :, ::1] idx,
                        Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t b = grad_out.shape[0], c = grad_out.shape[1]
    cdef Py_ssize_t h2 = grad_out.shape[2], w2 = grad_out.shape[3]
    cdef cnp.ndarray gx_arr = np.zeros((b, c, h, w), dtype=np.asarray(grad_out).dtype)
    cdef real[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t bi, ci, i, j
    cdef unsigned char k
    with nogil:
        for bi in range(b):
            for ci in range(c):
                for i in range(h2):
                    for j in range(w2):
                        k = idx[bi, ci, i, j]
                        gx[bi, ci, 2 * i + (k >> 1), 2 * j + (k & 1)] += grad_out[bi, ci, i, j]
    return gx_arr
