"""Exact projection onto piecewise polynomials with at most ``k`` jumps.

Breakpoint convention: a breakpoint ``t`` (1-based, ``1 <= t <= d-1``)
splits the samples into ``[.., t]`` and ``[t+1, ..]``. In 0-based terms the
right segment starts at index ``t`` and the jump sits on row ``t - 1`` of
the 1D difference operator.

All least-squares fits run on a per-segment local coordinate
``u = (i - center) / half`` in ``[-1, 1]``; coefficients are converted to
the requested coordinate convention only on output.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.polynomial import Polynomial
from scipy.linalg import null_space

from .operators import InvalidArgument, coordinates


# ---------------------------------------------------------------------------
# Local polynomial bases
# ---------------------------------------------------------------------------


def _center_half(start: int, length: int) -> tuple[float, float]:
    return start + (length - 1) / 2.0, max((length - 1) / 2.0, 1.0)


def local_basis(start: int, length: int, n: int, positions=None) -> np.ndarray:
    """Monomials ``u**0..u**n`` of the local coordinate of a segment.

    ``positions`` are 0-based sample positions (may be fractional); they
    default to the segment's own samples.
    """
    center, half = _center_half(start, length)
    if positions is None:
        positions = np.arange(start, start + length, dtype=float)
    u = (np.asarray(positions, dtype=float) - center) / half
    return np.vander(u, n + 1, increasing=True)


def local_to_output(c, start: int, length: int, d: int, scaling: str) -> np.ndarray:
    """Convert local-coordinate coefficients to monomials in the output coordinate."""
    n = len(c) - 1
    center, half = _center_half(start, length)
    step = 1.0 if scaling == "paper" else 1.0 / d
    # i = x / step - 1  and  u = (i - center) / half  =>  u = alpha * x + beta
    alpha, beta = 1.0 / (step * half), -(1.0 + center) / half
    out = np.zeros(n + 1)
    for k, ck in enumerate(c):
        for j in range(k + 1):
            out[j] += ck * comb(k, j) * alpha ** j * beta ** (k - j)
    return out


def segment_bounds(d: int, breakpoints) -> list[tuple[int, int]]:
    """0-based half-open ``(start, stop)`` pairs induced by breakpoints."""
    edges = [0, *[int(t) for t in breakpoints], d]
    return list(zip(edges[:-1], edges[1:]))


def validate_breakpoints(d: int, breakpoints) -> tuple[int, ...]:
    bp = tuple(int(t) for t in breakpoints)
    if any(b <= a for a, b in zip(bp, bp[1:])):
        raise InvalidArgument(f"breakpoints must be strictly increasing: {bp}")
    if bp and (bp[0] < 1 or bp[-1] > d - 1):
        raise InvalidArgument(f"breakpoints must lie in [1, {d - 1}]: {bp}")
    return bp


# ---------------------------------------------------------------------------
# Fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PiecewisePolyFit:
    degree: int
    breakpoints: tuple[int, ...]
    coeffs: np.ndarray
    fitted: np.ndarray
    sse: float
    scaling: str = "paper"

    @property
    def d(self) -> int:
        return self.fitted.size

    @property
    def segments(self) -> list[tuple[int, int]]:
        return segment_bounds(self.d, self.breakpoints)

    def evaluate(self) -> np.ndarray:
        """Re-evaluate the segment polynomials on the output coordinate."""
        x = coordinates(self.d, self.scaling)
        out = np.empty(self.d)
        for (a, b), c in zip(self.segments, self.coeffs):
            out[a:b] = Polynomial(c)(x[a:b])
        return out

    def coefficient_vectors(self) -> np.ndarray:
        """Piecewise-constant ``b_0..b_n`` of shape ``(n + 1, d)``."""
        lengths = [b - a for a, b in self.segments]
        return np.repeat(self.coeffs, lengths, axis=0).T.copy()


def _lstsq(A, y):
    return np.linalg.lstsq(A, y, rcond=None)[0]


def _check_signal(g) -> np.ndarray:
    g = np.asarray(g, dtype=float).ravel()
    if g.size == 0:
        raise InvalidArgument("empty signal")
    if not np.all(np.isfinite(g)):
        raise InvalidArgument("signal contains non-finite values")
    return g


def segment_fit(g, t: int, l: int, n: int, scaling: str = "paper"):
    """Least-squares degree-``n`` fit of samples ``t..l`` (1-based, inclusive).

    Returns ``(coeffs, sse)`` with coefficients in the given coordinate
    convention of the full signal. Segments with at most ``n + 1`` samples
    are interpolated and have zero error.
    """
    g = _check_signal(g)
    if n < 0:
        raise InvalidArgument(f"degree must be >= 0, got {n}")
    if not 1 <= t <= l <= g.size:
        raise InvalidArgument(f"invalid segment [{t}, {l}] for length {g.size}")
    start, length = t - 1, l - t + 1
    seg = g[start:start + length]
    V = local_basis(start, length, n)
    c = _lstsq(V, seg)
    sse = 0.0 if length <= n + 1 else float(np.sum((V @ c - seg) ** 2))
    return local_to_output(c, start, length, g.size, scaling), sse


def fit_segments(g, breakpoints, n: int, scaling: str = "paper") -> PiecewisePolyFit:
    """Independent least-squares fit on each segment of a fixed breakpoint set."""
    g = _check_signal(g)
    bp = validate_breakpoints(g.size, breakpoints)
    fitted = np.empty_like(g)
    coeffs = []
    for a, b in segment_bounds(g.size, bp):
        V = local_basis(a, b - a, n)
        c = _lstsq(V, g[a:b])
        fitted[a:b] = V @ c
        coeffs.append(local_to_output(c, a, b - a, g.size, scaling))
    return PiecewisePolyFit(n, bp, np.array(coeffs), fitted,
                            float(np.sum((fitted - g) ** 2)), scaling)


@dataclass(frozen=True)
class SegmentErrorTable:
    """Minimal degree-``n`` SSE for every segment of a signal.

    ``table[s, e]`` holds the error of samples ``s..e-1`` (0-based, half
    open); entries with ``e <= s`` are ``inf``.
    """

    d: int
    n: int
    table: np.ndarray

    def err(self, t: int, l: int) -> float:
        """SSE of samples ``t..l`` (1-based, inclusive)."""
        return float(self.table[t - 1, l])


@lru_cache(maxsize=4096)
def _window_basis(L: int, n: int) -> np.ndarray:
    Q = np.linalg.qr(local_basis(0, L, n))[0]
    Q.setflags(write=False)
    return Q


def segment_error_table(g, n: int) -> SegmentErrorTable:
    """All-segments SSE table, one batched residual computation per length.

    The residual of a window is taken directly as ``w - Q Q^T w`` with an
    orthonormal basis ``Q`` of the local Vandermonde, which is the same for
    every window of a given length.
    """
    g = _check_signal(g)
    d = g.size
    table = np.full((d + 1, d + 1), np.inf)
    starts = np.arange(d)
    for L in range(1, d + 1):
        s = starts[: d - L + 1]
        if L <= n + 1:
            table[s, s + L] = 0.0
            continue
        Q = _window_basis(L, n)
        win = sliding_window_view(g, L)
        resid = win - (win @ Q) @ Q.T
        table[s, s + L] = np.einsum("ij,ij->i", resid, resid)
    return SegmentErrorTable(d, n, table)


def optimal_projection(g, k: int, n: int, scaling: str = "paper",
                       table: SegmentErrorTable | None = None) -> PiecewisePolyFit:
    """Closest piecewise degree-``n`` polynomial with at most ``k`` jumps.

    Dynamic program over prefixes: ``E_j[e] = min_t E_{j-1}[t] + err(t, e)``.
    Since splitting a segment never increases the error, the optimum is
    always attained with ``min(k, d - 1)`` breakpoints; ties go to the
    smallest split index.
    """
    g = _check_signal(g)
    d = g.size
    if not 0 <= k <= d - 1:
        raise InvalidArgument(f"need 0 <= k <= d-1 = {d - 1}, got k={k}")
    if n < 0:
        raise InvalidArgument(f"degree must be >= 0, got {n}")
    if table is None:
        table = segment_error_table(g, n)
    seg = table.table
    E = seg[0].copy()  # E[e]: best error of prefix g[:e] with j jumps
    choices = []
    for _ in range(k):
        cand = E[:, None] + seg
        arg = np.argmin(cand, axis=0)
        E = cand[arg, np.arange(d + 1)]
        choices.append(arg)
    bp = []
    e = d
    for arg in reversed(choices):
        e = int(arg[e])
        bp.append(e)
    return fit_segments(g, sorted(bp), n, scaling)


def continuous_refit(g, breakpoints, n: int, scaling: str = "paper",
                     junction: float = 0.5) -> PiecewisePolyFit:
    """Least-squares fit with adjacent segments forced to agree at junctions.

    The junction between samples ``t`` and ``t + 1`` (1-based) is the
    coordinate ``t + junction``; the default is the midpoint. Constraints are
    eliminated through a null-space basis of the equality system.
    """
    g = _check_signal(g)
    d = g.size
    bp = validate_breakpoints(d, breakpoints)
    if not 0.0 <= junction <= 1.0:
        raise InvalidArgument(f"junction must lie in [0, 1], got {junction}")
    bounds = segment_bounds(d, bp)
    nb = n + 1
    nvar = nb * len(bounds)
    A = np.zeros((d, nvar))
    for s, (a, b) in enumerate(bounds):
        A[a:b, s * nb:(s + 1) * nb] = local_basis(a, b - a, n)
    C = np.zeros((len(bp), nvar))
    for s, t in enumerate(bp):
        pos = [t - 1 + junction]
        (a0, b0), (a1, b1) = bounds[s], bounds[s + 1]
        C[s, s * nb:(s + 1) * nb] = local_basis(a0, b0 - a0, n, pos)[0]
        C[s, (s + 1) * nb:(s + 2) * nb] = -local_basis(a1, b1 - a1, n, pos)[0]
    N = null_space(C) if bp else np.eye(nvar)
    c = N @ _lstsq(A @ N, g)
    fitted = A @ c
    coeffs = np.array([local_to_output(c[s * nb:(s + 1) * nb], a, b - a, d, scaling)
                       for s, (a, b) in enumerate(bounds)])
    return PiecewisePolyFit(n, bp, coeffs, fitted,
                            float(np.sum((fitted - g) ** 2)), scaling)


def junction_gaps(fit: PiecewisePolyFit, junction: float = 0.5) -> np.ndarray:
    """Difference of adjacent segment polynomials at each junction coordinate."""
    x = coordinates(fit.d, fit.scaling)
    step = x[1] - x[0] if fit.d > 1 else 1.0
    gaps = []
    for s, t in enumerate(fit.breakpoints):
        xj = x[t - 1] + junction * step
        gaps.append(Polynomial(fit.coeffs[s])(xj) - Polynomial(fit.coeffs[s + 1])(xj))
    return np.array(gaps)
