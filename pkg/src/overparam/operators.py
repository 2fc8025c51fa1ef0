"""Linear operators: parameterizations, analysis operators, the Heaviside
dictionary and measurement ensembles.

Signals are flat numpy vectors. Images are stored row-major, so pixel
``(r, c)`` of an ``h x w`` image lives at index ``r * w + c``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

PRNG_ALGORITHM = "numpy.random.PCG64/v1"

SCALINGS = ("paper", "normalized")
GEOMETRIES = ("1D", "2D-hv", "2D-hv-diag")


class InvalidArgument(ValueError):
    """Raised for arguments that violate an operation's preconditions."""


# ---------------------------------------------------------------------------
# Parameterizations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Parameterization:
    """Diagonal basis matrices ``X_j`` stored as their diagonals.

    ``weights[j]`` is the diagonal of ``X_j``; a coefficient set ``b`` of
    shape ``(n_coef, dim)`` synthesizes the signal ``sum_j weights[j] * b[j]``.
    """

    dim: int
    weights: np.ndarray
    kind: str = "custom"
    scaling: str = "paper"
    degree: int | None = None
    shape: tuple[int, int] | None = None

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if w.shape[1] != self.dim:
            raise InvalidArgument(
                f"weight vectors must have length {self.dim}, got {w.shape[1]}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_coef(self) -> int:
        return self.weights.shape[0]

    def synthesize(self, coeffs) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=float).reshape(self.n_coef, self.dim)
        return np.einsum("jd,jd->d", self.weights, coeffs)

    def matrix(self) -> sp.csr_matrix:
        """``[X_1, ..., X_n]`` as a sparse ``dim x (n_coef * dim)`` matrix."""
        return sp.hstack([sp.diags(w) for w in self.weights], format="csr")

    def normalized(self) -> tuple["Parameterization", np.ndarray]:
        """Equivalent parameterization on normalized coordinates.

        Returns the new parameterization and per-weight factors ``s`` with
        ``weights[j] = s[j] * new.weights[j]``; coefficients convert as
        ``b_paper[j] = b_norm[j] / s[j]``. Custom kinds are returned as-is.
        """
        if self.scaling == "normalized" or self.kind == "custom":
            return self, np.ones(self.n_coef)
        if self.kind == "polynomial":
            new = build_poly_parameterization(self.dim, self.degree, "normalized")
            s = float(self.dim) ** np.arange(self.n_coef)
        elif self.kind == "planar-2D":
            h, w = self.shape
            new = build_planar_parameterization(h, w, "normalized")
            s = np.array([1.0, w, h], dtype=float)
        else:
            raise InvalidArgument(f"unknown parameterization kind {self.kind!r}")
        return new, s


def coordinates(d: int, scaling: str = "paper") -> np.ndarray:
    """Sample coordinates ``1..d`` (paper) or ``1/d..1`` (normalized)."""
    if scaling not in SCALINGS:
        raise InvalidArgument(f"unknown scaling {scaling!r}")
    x = np.arange(1, d + 1, dtype=float)
    return x if scaling == "paper" else x / d


def build_poly_parameterization(d: int, n: int, scaling: str = "paper") -> Parameterization:
    """Weights ``x**j`` for ``j = 0..n`` on the chosen coordinate convention."""
    if d < 2 or n < 0:
        raise InvalidArgument(f"need d >= 2 and n >= 0, got d={d}, n={n}")
    x = coordinates(d, scaling)
    weights = np.vstack([x ** j for j in range(n + 1)])
    return Parameterization(d, weights, kind="polynomial", scaling=scaling, degree=n)


def build_planar_parameterization(h: int, w: int, scaling: str = "paper") -> Parameterization:
    """DC, within-row (column index) ramp and row-index ramp for an h x w image."""
    if h < 2 or w < 2:
        raise InvalidArgument(f"image must be at least 2x2, got {h}x{w}")
    cols = np.tile(coordinates(w, scaling), h)
    rows = np.repeat(coordinates(h, scaling), w)
    weights = np.vstack([np.ones(h * w), cols, rows])
    return Parameterization(h * w, weights, kind="planar-2D", scaling=scaling,
                            degree=1, shape=(h, w))


# ---------------------------------------------------------------------------
# Analysis operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalysisOperator:
    """Sparse finite-difference operator, stored row-wise (CSR).

    Every row holds ``+1`` at ``pos[j]`` and ``-1`` at ``neg[j]``.
    """

    matrix: sp.csr_matrix
    geometry: str
    dims: tuple[int, ...]
    pos: np.ndarray = field(repr=False)
    neg: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return v[..., self.pos] - v[..., self.neg]

    def adjoint(self, u) -> np.ndarray:
        return self.matrix.T @ np.asarray(u, dtype=float)

    def row_entries(self, j: int) -> list[tuple[int, float]]:
        return [(int(self.pos[j]), 1.0), (int(self.neg[j]), -1.0)]


def _difference_operator(pos, neg, ncols, geometry, dims) -> AnalysisOperator:
    pos = np.asarray(pos, dtype=np.int64)
    neg = np.asarray(neg, dtype=np.int64)
    p = pos.size
    rows = np.repeat(np.arange(p), 2)
    cols = np.column_stack([pos, neg]).ravel()
    vals = np.tile([1.0, -1.0], p)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(p, ncols))
    pos.setflags(write=False)
    neg.setflags(write=False)
    return AnalysisOperator(mat, geometry, tuple(dims), pos, neg)


def dif_operator(geometry: str, dims) -> AnalysisOperator:
    """First-difference operator for a 1D signal or an ``(h, w)`` image.

    1D rows compute ``v[i] - v[i+1]`` (p = d - 1, no boundary row). The 2D
    operator stacks horizontal then vertical differences; ``2D-hv-diag``
    appends the two diagonal filters ``[[1, 0], [0, -1]]`` and
    ``[[0, 1], [-1, 0]]``.
    """
    if geometry == "1D":
        (d,) = np.atleast_1d(dims)
        d = int(d)
        if d < 2:
            raise InvalidArgument(f"1D operator needs d >= 2, got {d}")
        i = np.arange(d - 1)
        return _difference_operator(i, i + 1, d, geometry, (d,))
    if geometry not in GEOMETRIES:
        raise InvalidArgument(f"unknown geometry {geometry!r}")
    h, w = (int(v) for v in dims)
    if h < 2 or w < 2:
        raise InvalidArgument(f"image must be at least 2x2, got {h}x{w}")
    idx = np.arange(h * w).reshape(h, w)
    pos = [idx[:, :-1].ravel(), idx[:-1, :].ravel()]
    neg = [idx[:, 1:].ravel(), idx[1:, :].ravel()]
    if geometry == "2D-hv-diag":
        pos += [idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()]
        neg += [idx[1:, 1:].ravel(), idx[1:, :-1].ravel()]
    return _difference_operator(np.concatenate(pos), np.concatenate(neg),
                                h * w, geometry, (h, w))


def heaviside_dictionary(d: int, drop_dc: bool = False) -> np.ndarray:
    """Upper-triangular matrix of ones: entry (i, j) is 1 when i <= j.

    With ``drop_dc`` the last (all-ones) column is removed, giving the
    right inverse of the 1D difference operator.
    """
    if d < 1:
        raise InvalidArgument(f"d must be positive, got {d}")
    D = np.triu(np.ones((d, d)))
    return D[:, :-1] if drop_dc else D


# ---------------------------------------------------------------------------
# Measurement operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeasurementOperator:
    kind: str
    m: int
    d: int
    matrix: np.ndarray | None = field(default=None, repr=False)
    seed: int | None = None
    prng: str | None = None

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.is_identity:
            return v.copy()
        return self.matrix @ v

    def adjoint(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.is_identity:
            return u.copy()
        return self.matrix.T @ u

    def dense(self) -> np.ndarray:
        return np.eye(self.d) if self.is_identity else self.matrix

    def metadata(self) -> dict:
        return {"kind": self.kind, "m": self.m, "d": self.d,
                "seed": self.seed, "prng": self.prng}


def identity_measurement(d: int) -> MeasurementOperator:
    if d < 1:
        raise InvalidArgument(f"d must be positive, got {d}")
    return MeasurementOperator("identity", d, d)


def dense_measurement(matrix) -> MeasurementOperator:
    A = np.array(matrix, dtype=float, ndmin=2)
    A.setflags(write=False)
    return MeasurementOperator("dense", A.shape[0], A.shape[1], A)


def gaussian_measurement(m: int, d: int, seed: int) -> MeasurementOperator:
    """i.i.d. normal ``m x d`` matrix with columns scaled to unit norm."""
    if m < 1 or d < 1:
        raise InvalidArgument(f"need m >= 1 and d >= 1, got m={m}, d={d}")
    rng = np.random.Generator(np.random.PCG64(seed))
    A = rng.standard_normal((m, d))
    A /= np.linalg.norm(A, axis=0)
    A.setflags(write=False)
    return MeasurementOperator("gaussian", m, d, A, seed=seed, prng=PRNG_ALGORITHM)
