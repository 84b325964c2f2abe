# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled 1-D convolution and max-pooling kernels.

Same contract as ``_kernels_py``.  Loops are serial and the summation order
is fixed, so results are reproducible run to run.  Stride-1 convolutions use
an axpy loop order that the C compiler vectorizes; strided ones use
contiguous dot products over the kernel taps.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def conv1d_forward(const double[:, :, ::1] x, const double[:, :, ::1] w, const double[::1] b, Py_ssize_t stride):
    cdef Py_ssize_t n = x.shape[0], c_in = x.shape[1], length = x.shape[2]
    cdef Py_ssize_t c_out = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t l_out = (length - k) // stride + 1
    out = np.empty((n, c_out, l_out), dtype=np.float64)
    cdef double[:, :, ::1] y = out
    cdef Py_ssize_t i, o, c, l, j, base
    cdef double acc, wv
    cdef const double* xr
    cdef const double* wr
    cdef double* yr
    with nogil:
        for i in range(n):
            for o in range(c_out):
                yr = &y[i, o, 0]
                if stride == 1:
                    for l in range(l_out):
                        yr[l] = b[o]
                    for c in range(c_in):
                        for j in range(k):
                            wv = w[o, c, j]
                            xr = &x[i, c, j]
                            for l in range(l_out):
                                yr[l] += wv * xr[l]
                else:
                    for l in range(l_out):
                        acc = b[o]
                        base = l * stride
                        for c in range(c_in):
                            xr = &x[i, c, base]
                            wr = &w[o, c, 0]
                            for j in range(k):
                                acc = acc + wr[j] * xr[j]
                        yr[l] = acc
    return out


def conv1d_backward(const double[:, :, ::1] x, const double[:, :, ::1] w, const double[:, :, ::1] grad_y,
                    Py_ssize_t stride, bint input_grad=True):
    cdef Py_ssize_t n = x.shape[0], c_in = x.shape[1], length = x.shape[2]
    cdef Py_ssize_t c_out = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t l_out = grad_y.shape[2]
    gx_arr = np.zeros((n, c_in, length), dtype=np.float64) if input_grad else None
    gw_arr = np.zeros((c_out, c_in, k), dtype=np.float64)
    gb_arr = np.zeros(c_out, dtype=np.float64)
    cdef double[:, :, ::1] gx
    cdef double[:, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t i, o, c, l, j, base
    cdef double g, acc, wv
    cdef const double* xr
    cdef const double* wr
    cdef const double* gr
    cdef double* gxr
    cdef double* gwr
    if input_grad:
        gx = gx_arr
    with nogil:
        for i in range(n):
            for o in range(c_out):
                gr = &grad_y[i, o, 0]
                acc = 0.0
                for l in range(l_out):
                    acc = acc + gr[l]
                gb[o] += acc
                if stride == 1:
                    for c in range(c_in):
                        for j in range(k):
                            xr = &x[i, c, j]
                            acc = 0.0
                            for l in range(l_out):
                                acc = acc + gr[l] * xr[l]
                            gw[o, c, j] += acc
                            if input_grad:
                                wv = w[o, c, j]
                                gxr = &gx[i, c, j]
                                for l in range(l_out):
                                    gxr[l] += wv * gr[l]
                else:
                    for l in range(l_out):
                        g = gr[l]
                        if g == 0.0:
                            continue
                        base = l * stride
                        for c in range(c_in):
                            xr = &x[i, c, base]
                            gwr = &gw[o, c, 0]
                            for j in range(k):
                                gwr[j] += g * xr[j]
                            if input_grad:
                                wr = &w[o, c, 0]
                                gxr = &gx[i, c, base]
                                for j in range(k):
                                    gxr[j] += g * wr[j]
    return gx_arr, gw_arr, gb_arr


def maxpool1d_forward(const double[:, :, ::1] x, Py_ssize_t pool, Py_ssize_t stride):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], length = x.shape[2]
    cdef Py_ssize_t l_out = (length - pool) // stride + 1
    out = np.empty((n, c, l_out), dtype=np.float64)
    idx_arr = np.empty((n, c, l_out), dtype=np.int64)
    cdef double[:, :, ::1] y = out
    cdef cnp.int64_t[:, :, ::1] idx = idx_arr
    cdef Py_ssize_t i, ch, l, j, base, best
    cdef double m
    with nogil:
        for i in range(n):
            for ch in range(c):
                for l in range(l_out):
                    base = l * stride
                    best = base
                    m = x[i, ch, base]
                    for j in range(base + 1, base + pool):
                        if x[i, ch, j] > m:
                            m = x[i, ch, j]
                            best = j
                    y[i, ch, l] = m
                    idx[i, ch, l] = best
    return out, idx_arr


def maxpool1d_backward(const double[:, :, ::1] grad_y, const cnp.int64_t[:, :, ::1] idx, Py_ssize_t length):
    cdef Py_ssize_t n = grad_y.shape[0], c = grad_y.shape[1], l_out = grad_y.shape[2]
    gx_arr = np.zeros((n, c, length), dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t i, ch, l
    with nogil:
        for i in range(n):
            for ch in range(c):
                for l in range(l_out):
                    gx[i, ch, idx[i, ch, l]] += grad_y[i, ch, l]
    return gx_arr
