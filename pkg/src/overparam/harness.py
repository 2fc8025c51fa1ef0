"""Experiment drivers: signal generation, noise, metrics, the denoising
sweep, the compressed-sensing recovery curve and an empirical P_n-RIP
estimate.

Every random draw comes from a seed derived from a master seed and the
draw's role, so a (config, master seed) pair replays bit-identically.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .bgapn import BGAPNConfig, bgapn
from .operators import (PRNG_ALGORITHM, InvalidArgument, MeasurementOperator,
                        build_poly_parameterization, dif_operator, gaussian_measurement,
                        identity_measurement)
from .projection import (PiecewisePolyFit, continuous_refit, fit_segments, local_basis,
                         optimal_projection)
from .sscosamp import SSCoSaMPConfig, sscosamp

SWEEP_METHODS = ("bgapn", "bgapn-continuity", "projection-oracle-k",
                 "projection-oracle-k-continuity")
CS_METHODS = ("sscosamp", "bgapn")
PSNR_CAP = 99.0


def derive_seed(master: int, *keys) -> int:
    """Deterministic 63-bit seed for one role of one draw."""
    words = [int(master) & 0xFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            words.extend(key.encode())
        else:
            words.append(int(key) & 0xFFFFFFFF)
    state = np.random.SeedSequence(words).generate_state(2, np.uint32)
    return int(state[0]) << 31 | int(state[1]) >> 1


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


# ---------------------------------------------------------------------------
# Signals and noise
# ---------------------------------------------------------------------------


@dataclass
class SignalSpec:
    d: int = 300
    k: int = 6
    n: int = 1
    continuous: bool = True
    value_range: tuple[float, float] = (-1.0, 1.0)
    min_segment: int | None = None    # default: 2 * (n + 1)
    seed: int = 0

    def __post_init__(self):
        self.value_range = tuple(float(v) for v in self.value_range)
        if self.d < 2 or self.k < 0 or self.n < 0:
            raise InvalidArgument(f"need d >= 2, k >= 0, n >= 0 (got {self.d}, {self.k}, {self.n})")
        lo, hi = self.value_range
        if not lo < hi:
            raise InvalidArgument(f"empty range {self.value_range}")
        if self.continuous and self.n == 0 and self.k > 0:
            raise InvalidArgument("a continuous piecewise constant signal has no jumps; use k=0")
        if self.segment_length < 1:
            raise InvalidArgument("min_segment must be >= 1")
        if (self.k + 1) * self.segment_length > self.d:
            raise InvalidArgument(
                f"{self.k + 1} segments of length >= {self.segment_length} do not fit in d={self.d}")

    @property
    def segment_length(self) -> int:
        return self.min_segment if self.min_segment is not None else 2 * (self.n + 1)


def gen_piecewise_poly(spec: SignalSpec) -> tuple[np.ndarray, PiecewisePolyFit]:
    """Random piecewise degree-``n`` polynomial with exactly ``k`` breakpoints.

    Breakpoints are uniform subject to the minimum segment length. Segment
    coefficients are standard normal in each segment's local coordinate;
    continuous signals shift each new segment so that neighbours agree at
    the midpoint between the two boundary samples. The result is affinely
    mapped onto ``value_range``.
    """
    rng = rng_from_seed(spec.seed)
    d, k, n, ms = spec.d, spec.k, spec.n, spec.segment_length
    slack = d - (k + 1) * ms
    offsets = np.sort(rng.integers(0, slack + 1, size=k))
    bp = [int((i + 1) * ms + offsets[i]) for i in range(k)]
    edges = [0, *bp, d]
    f = np.empty(d)
    prev = None
    for a, b in zip(edges[:-1], edges[1:]):
        c = rng.standard_normal(n + 1)
        if spec.continuous and prev is not None:
            pa, pb, pc = prev
            at = [a - 0.5]
            c[0] += (local_basis(pa, pb - pa, n, at)[0] @ pc
                     - local_basis(a, b - a, n, at)[0] @ c)
        f[a:b] = local_basis(a, b - a, n) @ c
        prev = (a, b, c)
    lo, hi = spec.value_range
    span = f.max() - f.min()
    if span > 1e-12 * max(1.0, np.max(np.abs(f))):
        f = lo + (hi - lo) * (f - f.min()) / span
    else:
        f = np.full(d, 0.5 * (lo + hi))
    return f, fit_segments(f, bp, n)


def add_noise(signal, sigma: float, seed: int) -> np.ndarray:
    """Add white Gaussian noise of standard deviation ``sigma``."""
    if sigma < 0:
        raise InvalidArgument("sigma must be >= 0")
    signal = np.asarray(signal, dtype=float)
    if sigma == 0:
        return signal.copy()
    return signal + sigma * rng_from_seed(seed).standard_normal(signal.shape)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


class Metrics(NamedTuple):
    mse: float
    psnr: float
    rel_err: float
    rel_is_absolute: bool


def metrics(reference, estimate, peak: float = 255.0) -> Metrics:
    """MSE, PSNR (capped at 99 dB) and relative error.

    For an all-zero reference the relative error falls back to the plain
    norm of the difference and ``rel_is_absolute`` is set.
    """
    ref = np.asarray(reference, dtype=float).ravel()
    est = np.asarray(estimate, dtype=float).ravel()
    if ref.shape != est.shape:
        raise InvalidArgument(f"length mismatch: {ref.size} vs {est.size}")
    diff = est - ref
    mse = float(np.mean(diff ** 2))
    psnr = PSNR_CAP if mse == 0 else min(PSNR_CAP, 10 * math.log10(peak ** 2 / mse))
    ref_norm = float(np.linalg.norm(ref))
    err = float(np.linalg.norm(diff))
    if ref_norm == 0:
        return Metrics(mse, psnr, err, True)
    return Metrics(mse, psnr, err / ref_norm, False)


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    """Per-trial rows plus aggregates keyed by grid point and method.

    ``rows`` carry a ``runtime`` column; it is dropped from the replayable
    exports because wall time is not reproducible.
    """

    kind: str
    config: dict
    rows: list[dict]
    group_by: tuple[str, ...]
    value_keys: tuple[str, ...]
    aggregates: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if not self.aggregates:
            self.aggregates = self.aggregate()

    def aggregate(self) -> list[dict]:
        groups: dict[tuple, list[dict]] = {}
        for row in self.rows:
            groups.setdefault(tuple(row[g] for g in self.group_by), []).append(row)
        out = []
        for key, rows in groups.items():
            agg = dict(zip(self.group_by, key))
            agg["trials"] = len(rows)
            for name in self.value_keys:
                vals = np.array([float(r[name]) for r in rows])
                agg[f"mean_{name}"] = float(np.mean(vals))
                agg[f"std_{name}"] = float(np.std(vals))
                if name in ("success", "delta_hat"):
                    agg[f"median_{name}"] = float(np.median(vals))
            out.append(agg)
        return out

    def table(self, method: str, key: str) -> tuple[np.ndarray, np.ndarray]:
        """Grid values and aggregate ``key`` for one method, in grid order."""
        grid = self.group_by[0]
        sel = [a for a in self.aggregates if a.get("method", method) == method]
        return (np.array([a[grid] for a in sel], dtype=float),
                np.array([a[key] for a in sel], dtype=float))

    def replayable_rows(self) -> list[dict]:
        return [{k: v for k, v in r.items() if k != "runtime"} for r in self.rows]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "config": self.config,
                "rows": self.replayable_rows(), "aggregates": self.aggregates}


def _run_trials(fn, items, threads: int) -> list:
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


# ---------------------------------------------------------------------------
# Denoising sweep
# ---------------------------------------------------------------------------


def _denoise(method: str, g, spec: SignalSpec, sigma: float, gamma: float) -> np.ndarray:
    d, n = spec.d, spec.n
    if method.startswith("projection-oracle-k"):
        fit = optimal_projection(g, spec.k, n)
        if method.endswith("continuity"):
            fit = continuous_refit(g, fit.breakpoints, n)
        return fit.fitted
    cfg = BGAPNConfig(noise_norm=sigma * math.sqrt(d),
                      gamma=gamma if method == "bgapn-continuity" else 0.0)
    out = bgapn(g, identity_measurement(d), build_poly_parameterization(d, n, "normalized"),
                dif_operator("1D", d), cfg)
    return out.estimate


def denoising_sweep(spec: SignalSpec, sigmas, methods=SWEEP_METHODS, trials: int = 20,
                    gamma: float = 100.0, threads: int = 1) -> ExperimentResult:
    """Mean recovery error per (sigma, method) with the identity as ``M``.

    Trial ``t`` uses the same clean signal and the same unit noise draw at
    every sigma, so the curves differ only through the noise level.
    ``spec.seed`` is the master seed.
    """
    sigmas = [float(s) for s in sigmas]
    methods = list(methods)
    if not sigmas or not methods or trials < 1:
        raise InvalidArgument("need a nonempty sigma grid, methods and trials >= 1")
    bad = [m for m in methods if m not in SWEEP_METHODS]
    if bad:
        raise InvalidArgument(f"unknown method(s) {bad}; choose from {SWEEP_METHODS}")
    if any(s < 0 for s in sigmas):
        raise InvalidArgument("sigmas must be >= 0")
    peak = spec.value_range[1] - spec.value_range[0]

    def trial(t):
        sub = SignalSpec(**{**asdict(spec), "seed": derive_seed(spec.seed, "signal", t)})
        f, _ = gen_piecewise_poly(sub)
        unit = add_noise(np.zeros(spec.d), 1.0, derive_seed(spec.seed, "noise", t))
        rows = []
        for sigma in sigmas:
            g = f + sigma * unit
            for method in methods:
                est, dt = _timed(_denoise, method, g, spec, sigma, gamma)
                mt = metrics(f, est, peak)
                rows.append({"sigma": sigma, "method": method, "trial": t, "mse": mt.mse,
                             "rmse": math.sqrt(mt.mse), "psnr": mt.psnr,
                             "rel_err": mt.rel_err, "runtime": dt})
        return rows

    rows = [r for rs in _run_trials(trial, range(trials), threads) for r in rs]
    rows.sort(key=lambda r: (sigmas.index(r["sigma"]), methods.index(r["method"]), r["trial"]))
    config = {"spec": asdict(spec), "sigmas": sigmas, "methods": methods,
              "trials": trials, "gamma": gamma, "prng": PRNG_ALGORITHM}
    return ExperimentResult("sweep", config, rows, ("sigma", "method"),
                            ("mse", "rmse", "psnr", "rel_err"))


# ---------------------------------------------------------------------------
# Compressed sensing
# ---------------------------------------------------------------------------


def _recover(method: str, g, M: MeasurementOperator, spec: SignalSpec) -> np.ndarray:
    if method == "sscosamp":
        return sscosamp(g, M, SSCoSaMPConfig(k=spec.k, n=spec.n)).estimate
    d = spec.d
    out = bgapn(g, M, build_poly_parameterization(d, spec.n, "normalized"),
                dif_operator("1D", d), BGAPNConfig(noise_norm=0.0))
    return out.estimate


def cs_experiment(spec: SignalSpec, m_over_d_grid, methods=CS_METHODS, trials: int = 50,
                  success_tol: float = 1e-4, threads: int = 1) -> ExperimentResult:
    """Noiseless recovery rate per (m/d, method) from Gaussian measurements.

    Signals are unit-norm; trial ``t`` reuses its signal across the grid and
    draws a fresh matrix per grid point.
    """
    grid = [float(r) for r in m_over_d_grid]
    methods = list(methods)
    if not grid or not methods or trials < 1:
        raise InvalidArgument("need a nonempty grid, methods and trials >= 1")
    if any(not 0 < r <= 1 for r in grid):
        raise InvalidArgument("m/d values must lie in (0, 1]")
    bad = [m for m in methods if m not in CS_METHODS]
    if bad:
        raise InvalidArgument(f"unknown method(s) {bad}; choose from {CS_METHODS}")
    spec = SignalSpec(**{**asdict(spec), "continuous": False})

    def trial(t):
        sub = SignalSpec(**{**asdict(spec), "seed": derive_seed(spec.seed, "signal", t)})
        f, _ = gen_piecewise_poly(sub)
        f = f / np.linalg.norm(f)
        rows = []
        for gi, ratio in enumerate(grid):
            m = max(1, int(round(ratio * spec.d)))
            M = gaussian_measurement(m, spec.d, derive_seed(spec.seed, "matrix", t, gi))
            g = M.apply(f)
            for method in methods:
                est, dt = _timed(_recover, method, g, M, spec)
                rel = metrics(f, est).rel_err
                rows.append({"m_over_d": ratio, "m": m, "method": method, "trial": t,
                             "rel_err": rel, "success": int(rel < success_tol),
                             "runtime": dt})
        return rows

    rows = [r for rs in _run_trials(trial, range(trials), threads) for r in rs]
    rows.sort(key=lambda r: (grid.index(r["m_over_d"]), methods.index(r["method"]), r["trial"]))
    config = {"spec": asdict(spec), "m_over_d": grid, "methods": methods, "trials": trials,
              "success_tol": success_tol, "prng": PRNG_ALGORITHM}
    return ExperimentResult("cs", config, rows, ("m_over_d", "method"),
                            ("success", "rel_err"))


# ---------------------------------------------------------------------------
# P_n-RIP
# ---------------------------------------------------------------------------


def estimate_pn_rip(M: MeasurementOperator, n: int, k: int, trials: int, seed: int) -> float:
    """Largest ``| ||M f||^2 - 1 |`` over random unit-norm model signals.

    The maximum over finitely many draws is a lower bound on the true
    restricted isometry constant.
    """
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    worst = 0.0
    for t in range(trials):
        spec = SignalSpec(d=M.d, k=k, n=n, continuous=False,
                          seed=derive_seed(seed, "rip", t))
        f, _ = gen_piecewise_poly(spec)
        f = f / np.linalg.norm(f)
        worst = max(worst, abs(float(np.sum(M.apply(f) ** 2)) - 1.0))
    return worst


def rip_experiment(d: int, n: int, k: int, ms, draws: int = 10, trials: int = 200,
                   seed: int = 0, identity: bool = False) -> ExperimentResult:
    """``estimate_pn_rip`` for Gaussian matrices of each row count ``m``.

    With ``identity`` the identity operator is used (one row per draw).
    """
    ms = [int(m) for m in ms]
    if not ms or draws < 1:
        raise InvalidArgument("need a nonempty m grid and draws >= 1")
    rows = []
    for m in ms:
        for r in range(draws):
            if identity:
                M = identity_measurement(d)
            else:
                M = gaussian_measurement(m, d, derive_seed(seed, "rip-matrix", m, r))
            delta, dt = _timed(estimate_pn_rip, M, n, k, trials, derive_seed(seed, "rip-draw", r))
            rows.append({"m": m, "draw": r, "delta_hat": delta, "runtime": dt})
    config = {"d": d, "n": n, "k": k, "ms": ms, "draws": draws, "trials": trials,
              "seed": seed, "identity": identity, "prng": PRNG_ALGORITHM}
    return ExperimentResult("rip", config, rows, ("m",), ("delta_hat",))
