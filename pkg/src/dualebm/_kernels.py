"""Fused loops for ReLU ridge features.

Each kernel makes a single pass over the (sample, feature) pairs in a fixed
order, so results do not depend on any thread count.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def relu_grad_x(A, T, c, D):
    """``out[i] = sum_j c[j] 1[<A_i, T_j> > 0] T_j[:D]``."""
    n, P = A.shape
    m = T.shape[0]
    out = np.zeros((n, D))
    for i in range(n):
        for j in range(m):
            u = 0.0
            for p in range(P):
                u += A[i, p] * T[j, p]
            if u > 0.0:
                for p in range(D):
                    out[i, p] += c[j] * T[j, p]
    return out


@numba.njit(cache=True)
def relu_mean_and_grad(A, T):
    """Sample means of ``relu(<A_i, T_j>)`` and of ``1[<A_i, T_j> > 0] A_i``."""
    n, P = A.shape
    m = T.shape[0]
    vals = np.zeros(m)
    grads = np.zeros((m, P))
    for i in range(n):
        for j in range(m):
            u = 0.0
            for p in range(P):
                u += A[i, p] * T[j, p]
            if u > 0.0:
                vals[j] += u
                for p in range(P):
                    grads[j, p] += A[i, p]
    return vals / n, grads / n
