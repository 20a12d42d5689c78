"""Numpy implementation of the dense float64 kernels.

This is the fallback backend; ``_ckernels`` (Cython) implements the same
surface. Every ``acc_*`` function accumulates into its first argument in
place, because gradient buffers are shared across a whole tape.
"""

import numpy as np

NAME = "numpy"


# ---- forward ----

def matmul(a, b):
    return np.matmul(a, b)


def ew_add(a, b):
    return a + b


def ew_sub(a, b):
    return a - b


def ew_mul(a, b):
    return a * b


def mv_add(m, v):
    return m + v


def scale(a, c):
    return a * c


def neg(a):
    return -a


def sigmoid(a):
    return 1.0 / (1.0 + np.exp(-a))


def tanh(a):
    return np.tanh(a)


def softmax1d(a):
    e = np.exp(a - a.max())
    return e / e.sum()


def ce_logits(z, k):
    """Cross entropy -log softmax(z)[k], fused for stability.

    Returns (loss, probs); probs are reused by the backward pass.
    """
    m = z.max()
    e = np.exp(z - m)
    s = e.sum()
    loss = m + np.log(s) - z[k]
    return loss, e / s


def sum_all(a):
    return a.sum()


# ---- backward accumulators ----

def acc(out, g):
    out += g


def acc_scaled(out, g, c):
    out += g * c


def acc_mul(out, g, b):
    out += g * b


def acc_colsum(out, g):
    out += g.sum(axis=0)


def acc_fill(out, gs):
    out += gs


def sigmoid_bwd(ga, g, y):
    ga += g * y * (1.0 - y)


def tanh_bwd(ga, g, y):
    ga += g * (1.0 - y * y)


def softmax1d_bwd(ga, g, y):
    ga += y * (g - np.dot(g, y))


def ce_logits_bwd(gz, gs, p, k):
    gz += gs * p
    gz[k] -= gs


def acc_gemm_nt(gA, g, B):
    gA += g @ B.T


def acc_gemm_tn(gB, A, g):
    gB += A.T @ g


def acc_ger(gA, u, v):
    gA += np.outer(u, v)


def acc_gemv_t(gx, A, g):
    gx += A.T @ g


def acc_gemv_n(gx, B, g):
    gx += B @ g
