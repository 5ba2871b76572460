# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels. Same contracts as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


def infonce_rows(double[:, ::1] logits, Py_ssize_t[::1] partner, unsigned char[:, ::1] valid):
    cdef Py_ssize_t R = logits.shape[0], C = logits.shape[1]
    cdef Py_ssize_t i, k
    cdef double peak, total, e
    cdef bint any_valid
    loss_arr = np.zeros(R, dtype=np.float64)
    grad_arr = np.zeros((R, C), dtype=np.float64)
    cdef double[::1] loss = loss_arr
    cdef double[:, ::1] grad = grad_arr

    with nogil:
        for i in range(R):
            peak = -INFINITY
            any_valid = False
            for k in range(C):
                if valid[i, k]:
                    any_valid = True
                    if logits[i, k] > peak:
                        peak = logits[i, k]
            if not any_valid:
                continue
            total = 0.0
            for k in range(C):
                if valid[i, k]:
                    e = exp(logits[i, k] - peak)
                    grad[i, k] = e
                    total += e
            for k in range(C):
                grad[i, k] /= total
            grad[i, partner[i]] -= 1.0
            loss[i] = peak + log(total) - logits[i, partner[i]]
    return loss_arr, grad_arr


def dense_rows(x, weight, bias, bint relu=False):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] wv = np.ascontiguousarray(weight, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(bias, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t B = xv.shape[0], K = xv.shape[1], J = wv.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double xik
    if wv.shape[0] != K or bv.shape[0] != J:
        raise ValueError("dense_rows: shape mismatch")
    out_arr = np.zeros((B, J), dtype=np.float64)
    cdef double[:, ::1] out = out_arr

    with nogil:
        for i in range(B):
            for k in range(K):
                xik = xv[i, k]
                for j in range(J):
                    out[i, j] += xik * wv[k, j]
            for j in range(J):
                out[i, j] += bv[j]
                if relu and out[i, j] < 0.0:
                    out[i, j] = 0.0
    return out_arr


def softmax_rows(x):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t B = xv.shape[0], J = xv.shape[1]
    cdef Py_ssize_t i, j
    cdef double peak, total
    out_arr = np.empty((B, J), dtype=np.float64)
    cdef double[:, ::1] out = out_arr

    with nogil:
        for i in range(B):
            peak = xv[i, 0]
            for j in range(1, J):
                if xv[i, j] > peak:
                    peak = xv[i, j]
            total = 0.0
            for j in range(J):
                out[i, j] = exp(xv[i, j] - peak)
                total += out[i, j]
            for j in range(J):
                out[i, j] /= total
    return out_arr
