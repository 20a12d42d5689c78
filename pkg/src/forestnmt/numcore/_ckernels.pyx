# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled float64 kernels.

Same surface as numpy_kernels; selected automatically at import when this
extension is built. The win over numpy is per-call overhead on the small
vectors and matrices this model actually uses (H <= a few hundred), which
dominate training time; the arithmetic is identical straight-line C.

Only the shapes the tape can produce are specialized (0D/1D/2D, C
contiguous); anything else falls back to numpy on the spot.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp as c_exp, log as c_log, tanh as c_tanh

cnp.import_array()

NAME = "cython"

ctypedef cnp.float64_t f64


cdef inline cnp.ndarray _empty1(Py_ssize_t n):
    return cnp.PyArray_EMPTY(1, [n], cnp.NPY_FLOAT64, 0)


cdef inline cnp.ndarray _empty2(Py_ssize_t m, Py_ssize_t n):
    cdef cnp.npy_intp dims[2]
    dims[0] = m
    dims[1] = n
    return cnp.PyArray_EMPTY(2, dims, cnp.NPY_FLOAT64, 0)


# ---- forward ----

def matmul(a, b):
    cdef int an = a.ndim, bn = b.ndim
    if an == 2 and bn == 1:
        return _gemv_n(a, b)
    if an == 1 and bn == 2:
        return _gevm(a, b)
    if an == 2 and bn == 2:
        return _gemm_nn(a, b)
    return np.matmul(a, b)


cdef _gemv_n(f64[:, ::1] A, f64[::1] x):
    cdef Py_ssize_t m = A.shape[0], k = A.shape[1], i, j
    cdef cnp.ndarray out = _empty1(m)
    cdef f64[::1] o = out
    cdef f64 acc
    for i in range(m):
        acc = 0.0
        for j in range(k):
            acc += A[i, j] * x[j]
        o[i] = acc
    return out


cdef _gevm(f64[::1] x, f64[:, ::1] B):
    cdef Py_ssize_t k = B.shape[0], n = B.shape[1], i, j
    cdef cnp.ndarray out = _empty1(n)
    cdef f64[::1] o = out
    cdef f64 xi
    for j in range(n):
        o[j] = 0.0
    for i in range(k):
        xi = x[i]
        for j in range(n):
            o[j] += xi * B[i, j]
    return out


cdef _gemm_nn(f64[:, ::1] A, f64[:, ::1] B):
    cdef Py_ssize_t m = A.shape[0], k = A.shape[1], n = B.shape[1], i, j, l
    cdef cnp.ndarray out = _empty2(m, n)
    cdef f64[:, ::1] o = out
    cdef f64 a
    for i in range(m):
        for j in range(n):
            o[i, j] = 0.0
        for l in range(k):
            a = A[i, l]
            for j in range(n):
                o[i, j] += a * B[l, j]
    return out


def ew_add(a, b):
    if a.ndim == 1:
        return _ew_add1(a, b)
    if a.ndim == 2:
        return _ew_add2(a, b)
    return a + b


cdef _ew_add1(f64[::1] a, f64[::1] b):
    cdef Py_ssize_t n = a.shape[0], i
    cdef cnp.ndarray out = _empty1(n)
    cdef f64[::1] o = out
    for i in range(n):
        o[i] = a[i] + b[i]
    return out


cdef _ew_add2(f64[:, ::1] a, f64[:, ::1] b):
    cdef Py_ssize_t m = a.shape[0], n = a.shape[1], i, j
    cdef cnp.ndarray out = _empty2(m, n)
    cdef f64[:, ::1] o = out
    for i in range(m):
        for j in range(n):
            o[i, j] = a[i, j] + b[i, j]
    return out


def ew_sub(a, b):
    if a.ndim == 1:
        return _ew_sub1(a, b)
    return a - b


cdef _ew_sub1(f64[::1] a, f64[::1] b):
    cdef Py_ssize_t n = a.shape[0], i
    cdef cnp.ndarray out = _empty1(n)
    cdef f64[::1] o = out
    for i in range(n):
        o[i] = a[i] - b[i]
    return out


def ew_mul(a, b):
    if a.ndim == 1:
        return _ew_mul1(a, b)
    return a * b


cdef _ew_mul1(f64[::1] a, f64[::1] b):
    cdef Py_ssize_t n = a.shape[0], i
    cdef cnp.ndarray out = _empty1(n)
    cdef f64[::1] o = out
    for i in range(n):
        o[i] = a[i] * b[i]
    return out


def mv_add(a, b):
    if a.ndim == 2 and b.ndim == 1:
        return _mv_add(a, b)
    return a + b


cdef _mv_add(f64[:, ::1] m, f64[::1] v):
    cdef Py_ssize_t r = m.shape[0], c = m.shape[1], i, j
    cdef cnp.ndarray out = _empty2(r, c)
    cdef f64[:, ::1] o = out
    for i in range(r):
        for j in range(c):
            o[i, j] = m[i, j] + v[j]
    return out


def scale(a, double c):
    if a.ndim == 1:
        return _scale1(a, c)
    return a * c


cdef _scale1(f64[::1] a, double c):
    cdef Py_ssize_t n = a.shape[0], i
    cdef cnp.ndarray out = _empty1(n)
    cdef f64[::1] o = out
    for i in range(n):
        o[i] = a[i] * c
    return out


def neg(a):
    if a.ndim == 1:
        return _scale1(a, -1.0)
    return -a


def sigmoid(a):
    if a.ndim == 1:
        return _sigmoid1(a)
    return 1.0 / (1.0 + np.exp(-a))


cdef _sigmoid1(f64[::1] a):
    cdef Py_ssize_t n = a.shape[0], i
    cdef cnp.ndarray out = _empty1(n)
    cdef f64[::1] o = out
    for i in range(n):
        o[i] = 1.0 / (1.0 + c_exp(-a[i]))
    return out


def tanh(a):
    if a.ndim == 1:
        return _tanh1(a)
    return np.tanh(a)


cdef _tanh1(f64[::1] a):
    cdef Py_ssize_t n = a.shape[0], i
    cdef cnp.ndarray out = _empty1(n)
    cdef f64[::1] o = out
    for i in range(n):
        o[i] = c_tanh(a[i])
    return out


def softmax1d(f64[::1] a):
    cdef Py_ssize_t n = a.shape[0], i
    cdef cnp.ndarray out = _empty1(n)
    cdef f64[::1] o = out
    cdef f64 m = a[0], s = 0.0
    for i in range(1, n):
        if a[i] > m:
            m = a[i]
    for i in range(n):
        o[i] = c_exp(a[i] - m)
        s += o[i]
    for i in range(n):
        o[i] /= s
    return out


def ce_logits(f64[::1] z, Py_ssize_t k):
    cdef Py_ssize_t n = z.shape[0], i
    cdef cnp.ndarray probs = _empty1(n)
    cdef f64[::1] p = probs
    cdef f64 m = z[0], s = 0.0
    for i in range(1, n):
        if z[i] > m:
            m = z[i]
    for i in range(n):
        p[i] = c_exp(z[i] - m)
        s += p[i]
    for i in range(n):
        p[i] /= s
    return m + c_log(s) - z[k], probs


def sum_all(a):
    return a.sum()


# ---- backward accumulators ----

def acc(out, g):
    if out.ndim == 1:
        _acc1(out, g)
    elif out.ndim == 2:
        _acc2(out, g)
    else:
        out += g


cdef _acc1(f64[::1] out, f64[::1] g):
    cdef Py_ssize_t n = out.shape[0], i
    for i in range(n):
        out[i] += g[i]


cdef _acc2(f64[:, ::1] out, f64[:, ::1] g):
    cdef Py_ssize_t m = out.shape[0], n = out.shape[1], i, j
    for i in range(m):
        for j in range(n):
            out[i, j] += g[i, j]


def acc_scaled(out, g, double c):
    if out.ndim == 1:
        _acc_scaled1(out, g, c)
    else:
        out += g * c


cdef _acc_scaled1(f64[::1] out, f64[::1] g, double c):
    cdef Py_ssize_t n = out.shape[0], i
    for i in range(n):
        out[i] += g[i] * c


def acc_mul(out, g, b):
    if out.ndim == 1:
        _acc_mul1(out, g, b)
    else:
        out += g * b


cdef _acc_mul1(f64[::1] out, f64[::1] g, f64[::1] b):
    cdef Py_ssize_t n = out.shape[0], i
    for i in range(n):
        out[i] += g[i] * b[i]


def acc_colsum(f64[::1] out, f64[:, ::1] g):
    cdef Py_ssize_t m = g.shape[0], n = g.shape[1], i, j
    for i in range(m):
        for j in range(n):
            out[j] += g[i, j]


def acc_fill(out, gs):
    out += gs


def sigmoid_bwd(ga, g, y):
    if ga.ndim == 1:
        _sigmoid_bwd1(ga, g, y)
    else:
        ga += g * y * (1.0 - y)


cdef _sigmoid_bwd1(f64[::1] ga, f64[::1] g, f64[::1] y):
    cdef Py_ssize_t n = ga.shape[0], i
    for i in range(n):
        ga[i] += g[i] * y[i] * (1.0 - y[i])


def tanh_bwd(ga, g, y):
    if ga.ndim == 1:
        _tanh_bwd1(ga, g, y)
    elif ga.ndim == 2:
        _tanh_bwd2(ga, g, y)
    else:
        ga += g * (1.0 - y * y)


cdef _tanh_bwd1(f64[::1] ga, f64[::1] g, f64[::1] y):
    cdef Py_ssize_t n = ga.shape[0], i
    for i in range(n):
        ga[i] += g[i] * (1.0 - y[i] * y[i])


cdef _tanh_bwd2(f64[:, ::1] ga, f64[:, ::1] g, f64[:, ::1] y):
    cdef Py_ssize_t m = ga.shape[0], n = ga.shape[1], i, j
    for i in range(m):
        for j in range(n):
            ga[i, j] += g[i, j] * (1.0 - y[i, j] * y[i, j])


def softmax1d_bwd(f64[::1] ga, f64[::1] g, f64[::1] y):
    cdef Py_ssize_t n = ga.shape[0], i
    cdef f64 dot = 0.0
    for i in range(n):
        dot += g[i] * y[i]
    for i in range(n):
        ga[i] += y[i] * (g[i] - dot)


def ce_logits_bwd(f64[::1] gz, gs, f64[::1] p, Py_ssize_t k):
    cdef Py_ssize_t n = gz.shape[0], i
    cdef f64 s = <f64> gs
    for i in range(n):
        gz[i] += s * p[i]
    gz[k] -= s


def acc_gemm_nt(gA, g, B):
    if gA.ndim == 2 and g.ndim == 2:
        _acc_gemm_nt(gA, g, B)
    else:
        gA += g @ B.T


cdef _acc_gemm_nt(f64[:, ::1] gA, f64[:, ::1] g, f64[:, ::1] B):
    cdef Py_ssize_t m = gA.shape[0], k = gA.shape[1], n = g.shape[1], i, j, l
    cdef f64 acc
    for i in range(m):
        for j in range(k):
            acc = 0.0
            for l in range(n):
                acc += g[i, l] * B[j, l]
            gA[i, j] += acc


def acc_gemm_tn(gB, A, g):
    if gB.ndim == 2 and g.ndim == 2:
        _acc_gemm_tn(gB, A, g)
    else:
        gB += A.T @ g


cdef _acc_gemm_tn(f64[:, ::1] gB, f64[:, ::1] A, f64[:, ::1] g):
    cdef Py_ssize_t k = gB.shape[0], n = gB.shape[1], m = A.shape[0], i, j, l
    cdef f64 a
    for l in range(m):
        for i in range(k):
            a = A[l, i]
            for j in range(n):
                gB[i, j] += a * g[l, j]


def acc_ger(f64[:, ::1] gA, f64[::1] u, f64[::1] v):
    cdef Py_ssize_t m = gA.shape[0], n = gA.shape[1], i, j
    cdef f64 ui
    for i in range(m):
        ui = u[i]
        for j in range(n):
            gA[i, j] += ui * v[j]


def acc_gemv_t(f64[::1] gx, f64[:, ::1] A, f64[::1] g):
    cdef Py_ssize_t m = A.shape[0], k = A.shape[1], i, j
    cdef f64 gi
    for i in range(m):
        gi = g[i]
        for j in range(k):
            gx[j] += gi * A[i, j]


def acc_gemv_n(f64[::1] gx, f64[:, ::1] B, f64[::1] g):
    cdef Py_ssize_t m = B.shape[0], n = B.shape[1], i, j
    cdef f64 acc
    for i in range(m):
        acc = 0.0
        for j in range(n):
            acc += B[i, j] * g[j]
        gx[i] += acc
