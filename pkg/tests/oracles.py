"""Independent reference implementations used only by the tests."""

from itertools import combinations

import numpy as np


def segment_sse(seg, n):
    """SSE of a degree-n fit via numpy's polyfit on centered coordinates."""
    seg = np.asarray(seg, dtype=float)
    if seg.size <= n + 1:
        return 0.0
    x = np.arange(seg.size) - (seg.size - 1) / 2
    p = np.polyfit(x, seg, n)
    return float(np.sum((np.polyval(p, x) - seg) ** 2))


def exhaustive_projection(g, k, n):
    """Minimum SSE over all placements of exactly min(k, d-1) breakpoints."""
    g = np.asarray(g, dtype=float)
    d = g.size
    best, best_bp = np.inf, None
    for bp in combinations(range(1, d), min(k, d - 1)):
        edges = [0, *bp, d]
        sse = sum(segment_sse(g[a:b], n) for a, b in zip(edges[:-1], edges[1:]))
        if sse < best:
            best, best_bp = sse, bp
    return best, best_bp


def dense_difference(d):
    """(d-1) x d matrix with rows e_i - e_{i+1}."""
    D = np.zeros((d - 1, d))
    for i in range(d - 1):
        D[i, i], D[i, i + 1] = 1.0, -1.0
    return D


def dense_penalty(omega_rows, cosupport, n_coef, d):
    """Block-diagonal sum over cosupport rows of r r^T, repeated per coefficient."""
    L = np.zeros((d, d))
    for r, keep in zip(omega_rows, cosupport):
        if keep:
            L += np.outer(r, r)
    return np.kron(np.eye(n_coef), L)


def secular_solve(Q, A, g, eta):
    """Minimize b'Qb s.t. ||g - Ab|| = eta by root finding on the multiplier.

    Solves the saddle-point system [[Q, -A^T], [A, I/mu]] [b; y] = [0; g]
    and finds mu with brentq on log scale. A shared null space of Q and A
    makes b non-unique; lstsq then returns the minimum-norm member.
    """
    from scipy.optimize import brentq

    size, m = Q.shape[0], A.shape[0]

    def solve(mu):
        K = np.block([[Q, -A.T], [A, np.eye(m) / mu]])
        sol = np.linalg.lstsq(K, np.concatenate([np.zeros(size), g]), rcond=None)[0]
        return sol[:size]

    def f(t):
        return np.linalg.norm(g - A @ solve(np.exp(t))) - eta

    t = brentq(f, -40, 40, xtol=1e-14, rtol=1e-14, maxiter=500)
    return solve(np.exp(t)), np.exp(t)
