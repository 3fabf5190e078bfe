# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: fused row softmax with key masking, layer norm
forward/backward, and GELU. Contracts match kernels.pyfallback."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt, tanh, INFINITY

cnp.import_array()

cdef double GELU_C0 = 0.7978845608028654
cdef double GELU_C1 = 0.044715


def layer_norm(double[:, ::1] x, double[::1] gain, double[::1] bias, double eps):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1]
    y_arr = np.empty((n, h), dtype=np.float64)
    mean_arr = np.empty(n, dtype=np.float64)
    rstd_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef double[::1] mean = mean_arr
    cdef double[::1] rstd = rstd_arr
    cdef Py_ssize_t i, j
    cdef double m, v, d, r
    for i in range(n):
        m = 0.0
        for j in range(h):
            m += x[i, j]
        m /= h
        v = 0.0
        for j in range(h):
            d = x[i, j] - m
            v += d * d
        v /= h
        r = 1.0 / sqrt(v + eps)
        mean[i] = m
        rstd[i] = r
        for j in range(h):
            y[i, j] = (x[i, j] - m) * r * gain[j] + bias[j]
    return y_arr, mean_arr, rstd_arr


def layer_norm_backward(double[:, ::1] dy, double[:, ::1] x, double[::1] gain,
                        double[::1] mean, double[::1] rstd):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1]
    dx_arr = np.empty((n, h), dtype=np.float64)
    dgain_arr = np.zeros(h, dtype=np.float64)
    dbias_arr = np.zeros(h, dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef double[::1] dgain = dgain_arr
    cdef double[::1] dbias = dbias_arr
    cdef Py_ssize_t i, j
    cdef double xhat, dxhat, m1, m2
    for i in range(n):
        m1 = 0.0
        m2 = 0.0
        for j in range(h):
            xhat = (x[i, j] - mean[i]) * rstd[i]
            dxhat = dy[i, j] * gain[j]
            dgain[j] += dy[i, j] * xhat
            dbias[j] += dy[i, j]
            m1 += dxhat
            m2 += dxhat * xhat
        m1 /= h
        m2 /= h
        for j in range(h):
            xhat = (x[i, j] - mean[i]) * rstd[i]
            dxhat = dy[i, j] * gain[j]
            dx[i, j] = rstd[i] * (dxhat - m1 - xhat * m2)
    return dx_arr, dgain_arr, dbias_arr


def masked_softmax(double[:, :, ::1] scores, double[:, ::1] key_mask):
    cdef Py_ssize_t b = scores.shape[0], r = scores.shape[1], l = scores.shape[2]
    out_arr = np.zeros((b, r, l), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, q, j
    cdef double peak, denom, e
    for i in range(b):
        for q in range(r):
            peak = -INFINITY
            for j in range(l):
                if key_mask[i, j] > 0 and scores[i, q, j] > peak:
                    peak = scores[i, q, j]
            if peak == -INFINITY:
                continue
            denom = 0.0
            for j in range(l):
                if key_mask[i, j] > 0:
                    e = exp(scores[i, q, j] - peak)
                    out[i, q, j] = e
                    denom += e
            for j in range(l):
                if key_mask[i, j] > 0:
                    out[i, q, j] /= denom
    return out_arr


def masked_softmax_backward(double[:, :, ::1] dprobs, double[:, :, ::1] probs):
    cdef Py_ssize_t b = probs.shape[0], r = probs.shape[1], l = probs.shape[2]
    out_arr = np.empty((b, r, l), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, q, j
    cdef double inner
    for i in range(b):
        for q in range(r):
            inner = 0.0
            for j in range(l):
                inner += dprobs[i, q, j] * probs[i, q, j]
            for j in range(l):
                out[i, q, j] = probs[i, q, j] * (dprobs[i, q, j] - inner)
    return out_arr


def gelu(x_in):
    cdef cnp.ndarray flat = np.ascontiguousarray(x_in, dtype=np.float64).reshape(-1)
    cdef double[::1] xv = flat
    out_arr = np.empty(flat.shape[0], dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, n = flat.shape[0]
    cdef double u, xi
    for i in range(n):
        xi = xv[i]
        u = GELU_C0 * (xi + GELU_C1 * xi * xi * xi)
        out[i] = 0.5 * xi * (1.0 + tanh(u))
    return out_arr.reshape(np.shape(x_in))


def gelu_backward(dy_in, x_in):
    cdef cnp.ndarray xflat = np.ascontiguousarray(x_in, dtype=np.float64).reshape(-1)
    cdef cnp.ndarray dyflat = np.ascontiguousarray(dy_in, dtype=np.float64).reshape(-1)
    cdef double[::1] xv = xflat
    cdef double[::1] dyv = dyflat
    out_arr = np.empty(xflat.shape[0], dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, n = xflat.shape[0]
    cdef double u, t, du, xi
    for i in range(n):
        xi = xv[i]
        u = GELU_C0 * (xi + GELU_C1 * xi * xi * xi)
        t = tanh(u)
        du = GELU_C0 * (1.0 + 3.0 * GELU_C1 * xi * xi)
        out[i] = dyv[i] * (0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du)
    return out_arr.reshape(np.shape(x_in))
