"""Signal-space CoSaMP for piecewise polynomial signals.

The model projection is the exact dynamic program of
:func:`overparam.projection.optimal_projection`; jump sets use the
breakpoint convention of that module.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .operators import (InvalidArgument, MeasurementOperator, Parameterization,
                        build_poly_parameterization)
from .output import RecoveryOutput
from .projection import (local_basis, local_to_output, optimal_projection,
                         segment_bounds, validate_breakpoints)


@dataclass
class SSCoSaMPConfig:
    k: int
    n: int = 1
    gamma: float = 2.0
    epsilon: float | None = None   # default: 1e-6 * ||g||
    max_iters: int = 50

    def __post_init__(self):
        if self.k < 0 or self.n < 0:
            raise InvalidArgument("k and n must be >= 0")
        if self.gamma < 1:
            raise InvalidArgument("gamma must be >= 1")
        if self.epsilon is not None and self.epsilon < 0:
            raise InvalidArgument("epsilon must be >= 0")
        if self.max_iters < 1:
            raise InvalidArgument("max_iters must be >= 1")


class ConstrainedFit(NamedTuple):
    coeff_vectors: np.ndarray
    estimate: np.ndarray
    residual_norm: float


def constrained_ls(g, M: MeasurementOperator, param: Parameterization, jump_set) -> ConstrainedFit:
    """Best ``b`` whose coefficient vectors only jump inside ``jump_set``.

    The problem is reparameterized to one coefficient block per segment.
    Polynomial parameterizations use a centered local basis per segment;
    other kinds use the raw weights with unit-norm column scaling. Rank
    deficiency falls back to the minimum-norm solution.
    """
    g = np.asarray(g, dtype=float).ravel()
    d = param.dim
    if M.d != d or g.size != M.m:
        raise InvalidArgument(f"dimension mismatch: g={g.size}, M={M.m}x{M.d}, d={d}")
    bp = validate_breakpoints(d, sorted(set(int(t) for t in jump_set)))
    bounds = segment_bounds(d, bp)
    nb = param.n_coef
    poly = param.kind == "polynomial"
    D = np.zeros((d, nb * len(bounds)))
    for s, (a, b) in enumerate(bounds):
        block = local_basis(a, b - a, nb - 1) if poly else param.weights[:, a:b].T
        D[a:b, s * nb:(s + 1) * nb] = block
    colnorm = np.linalg.norm(D, axis=0)
    colnorm[colnorm == 0] = 1.0
    A = M.dense() @ D if not M.is_identity else D
    c = np.linalg.lstsq(A / colnorm, g, rcond=None)[0] / colnorm
    estimate = D @ c
    coeffs = np.empty((nb, d))
    for s, (a, b) in enumerate(bounds):
        cs = c[s * nb:(s + 1) * nb]
        if poly:
            cs = local_to_output(cs, a, b - a, d, param.scaling)
        coeffs[:, a:b] = cs[:, None]
    return ConstrainedFit(coeffs, estimate, float(np.linalg.norm(g - M.apply(estimate))))


def sscosamp(g, M: MeasurementOperator, cfg: SSCoSaMPConfig,
             scaling: str = "paper") -> RecoveryOutput:
    """Recover a piecewise degree-``n`` polynomial with ``k`` jumps from ``g = M f + e``.

    Per iteration: project the proxy ``M^T g_r`` onto ``gamma * k`` jumps,
    merge its jumps with the current ones, solve the jump-constrained least
    squares, prune by projecting that signal onto ``k`` jumps, and update
    the residual. Halts once ``||g_r|| <= epsilon``; otherwise the iterate
    with the smallest residual is returned with ``converged=False``. A run
    whose state repeats exactly is stopped early, since from then on it
    only cycles through iterates already seen.
    """
    g = np.asarray(g, dtype=float).ravel()
    d = M.d
    if g.size != M.m:
        raise InvalidArgument(f"g has length {g.size}, expected {M.m}")
    if cfg.k > d - 1:
        raise InvalidArgument(f"k={cfg.k} exceeds d-1={d - 1}")
    param = build_poly_parameterization(d, cfg.n, scaling)
    eps = cfg.epsilon if cfg.epsilon is not None else 1e-6 * float(np.linalg.norm(g))
    expand = min(int(round(cfg.gamma * cfg.k)), d - 1)

    jumps: tuple[int, ...] = ()
    g_r = g
    history = []
    best = None
    converged = False
    it = 0
    seen = set()
    while it < cfg.max_iters:
        it += 1
        proxy = M.adjoint(g_r)
        candidates = optimal_projection(proxy, expand, cfg.n).breakpoints
        merged = sorted(set(jumps) | set(candidates))
        temp = constrained_ls(g, M, param, merged)
        fit = optimal_projection(temp.estimate, cfg.k, cfg.n, scaling)
        new_r = g - M.apply(fit.fitted)
        jumps, g_r = fit.breakpoints, new_r
        # the state (jumps, residual) fully determines the next iterate
        state = (jumps, g_r.tobytes())
        stalled = state in seen
        seen.add(state)
        res = float(np.linalg.norm(g_r))
        history.append(res)
        if best is None or res < best[0]:
            best = (res, fit, it)
        if res <= eps:
            converged = True
            break
        if stalled:
            break

    _, fit, best_it = best if not converged else (res, fit, it)
    return RecoveryOutput(
        coeff_vectors=fit.coefficient_vectors(),
        estimate=fit.fitted.copy(),
        jump_set=fit.breakpoints,
        residual_history=history,
        iterations=it,
        converged=converged,
        info={"epsilon": eps, "expansion": expand, "best_iteration": best_it,
              "segment_coeffs": fit.coeffs, "scaling": scaling},
    )
