"""Command-line front end.

    overparam project SIGNAL.csv --k 2 --n 1 [--continuous]
    overparam denoise1d SIGNAL.csv --method {bgapn,bgapn-cont,sscosamp} ...
    overparam image {denoise,segment,gradmap} IMAGE.pgm ...
    overparam experiment {sweep,cs,rip} ...
    overparam replay OUT/manifest.json --out NEW_DIR

Every run writes its outputs plus ``manifest.json`` into ``--out``. Exit
codes: 0 success, 2 usage, 3 parse error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy.linalg as la

from . import harness, imaging
from .bgapn import BGAPNConfig, bgapn
from .operators import (PRNG_ALGORITHM, InvalidArgument, build_poly_parameterization,
                        dif_operator, identity_measurement)
from .projection import continuous_refit, optimal_projection
from .sscosamp import SSCoSaMPConfig, sscosamp
from .svgplot import line_plot

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_NUMERICAL = 0, 2, 3, 4


class ParseError(ValueError):
    """Malformed input file."""


class UsageError(ValueError):
    """Missing or inconsistent command-line flags."""


class NumericalFailure(RuntimeError):
    """A solver could not meet its constraint."""


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def read_signal_csv(path) -> np.ndarray:
    """One value per line; blank lines and ``#`` comments are ignored."""
    values = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            v = float(line)
        except ValueError:
            raise ParseError(f"{path}:{lineno}: not a number: {line!r}") from None
        if not math.isfinite(v):
            raise ParseError(f"{path}:{lineno}: non-finite value {line!r}")
        values.append(v)
    if not values:
        raise ParseError(f"{path}: no values")
    return np.array(values)


def _num(v) -> str:
    return repr(float(v))


def write_signal_csv(path, values, header: str | None = None) -> None:
    lines = [f"# {header}"] if header else []
    lines += [_num(v) for v in np.asarray(values, dtype=float).ravel()]
    Path(path).write_text("\n".join(lines) + "\n")


def write_matrix_csv(path, columns: dict) -> None:
    """Columns of equal length, comma separated, with a ``#`` header line."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    lines = ["# " + ",".join(names)] + [",".join(_num(v) for v in row) for row in data]
    Path(path).write_text("\n".join(lines) + "\n")


def write_table_csv(path, rows: list[dict]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    keys = list(rows[0])
    lines = [",".join(keys)]
    for r in rows:
        lines.append(",".join(_num(r[k]) if isinstance(r[k], float) else str(r[k]) for k in keys))
    Path(path).write_text("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


class Run:
    """Collects outputs of one command and writes them with a manifest."""

    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.paths: list[str] = []
        self.report: dict = {}

    def path(self, name: str) -> Path:
        p = self.out / name
        self.paths.append(str(p))
        return p

    def finish(self, wall: float) -> None:
        self.path("report.json").write_text(dump_json(self.report))
        manifest = {
            "command": self.args.command,
            "config": _replay_config(self.args),
            "seeds": {"master": self.args.seed},
            "prng": PRNG_ALGORITHM,
            "version": _version(),
            "wall_time": wall,
            "outputs": self.paths,
        }
        (self.out / "manifest.json").write_text(dump_json(manifest))
        if self.args.json:
            sys.stdout.write(dump_json(self.report))


def _replay_config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "out")}
    for key in ("input", "reference"):
        if cfg.get(key):
            cfg[key] = str(Path(cfg[key]).resolve())
    return cfg


def cmd_project(args, run: Run) -> None:
    g = read_signal_csv(args.input)
    if not 0 <= args.k <= g.size - 1:
        raise UsageError(f"--k must lie in [0, {g.size - 1}] for a signal of length {g.size}")
    fit = optimal_projection(g, args.k, args.n, args.scaling)
    if args.continuous:
        fit = continuous_refit(g, fit.breakpoints, args.n, args.scaling)
    write_signal_csv(run.path("fitted.csv"), fit.fitted)
    run.report = {"breakpoints": list(fit.breakpoints), "segments": fit.segments,
                  "coefficients": fit.coeffs, "sse": fit.sse, "degree": args.n,
                  "scaling": args.scaling, "continuous": args.continuous}


def cmd_denoise1d(args, run: Run) -> None:
    g = read_signal_csv(args.input)
    d = g.size
    if d < 2:
        raise UsageError("signal needs at least 2 samples")
    if args.method == "sscosamp":
        if args.k is None:
            raise UsageError("--method sscosamp requires --k")
        eps = args.epsilon
        if eps is None and (args.noise_norm is not None or args.sigma is not None):
            eps = args.noise_norm if args.noise_norm is not None else args.sigma * math.sqrt(d)
        out = sscosamp(g, identity_measurement(d),
                       SSCoSaMPConfig(k=args.k, n=args.n, gamma=args.expand, epsilon=eps,
                                      max_iters=args.max_iters or 50), args.scaling)
        failed = False
    else:
        if args.noise_norm is None and args.sigma is None:
            raise UsageError(f"--method {args.method} requires --sigma or --noise-norm")
        noise = args.noise_norm if args.noise_norm is not None else args.sigma * math.sqrt(d)
        gamma = args.gamma if args.gamma is not None else (100.0 if args.method == "bgapn-cont" else 0.0)
        if args.method == "bgapn" and gamma != 0:
            raise UsageError("--gamma applies to --method bgapn-cont only")
        cfg = BGAPNConfig(noise_norm=noise, epsilon=args.epsilon,
                          rows_per_iter=args.rows_per_iter, gamma=gamma,
                          max_iters=args.max_iters)
        out = bgapn(g, identity_measurement(d), build_poly_parameterization(d, args.n, args.scaling),
                    dif_operator("1D", d), cfg)
        failed = not out.info["bound_met"]
    write_signal_csv(run.path("recovered.csv"), out.estimate)
    write_matrix_csv(run.path("coefficients.csv"),
                     {f"b{j}": out.coeff_vectors[j] for j in range(out.coeff_vectors.shape[0])})
    run.report = {"method": args.method, "jump_set": list(out.jump_set),
                  "iterations": out.iterations, "converged": out.converged,
                  "residual_history": out.residual_history,
                  "bound_met": not failed}
    if args.reference:
        ref = read_signal_csv(args.reference)
        if ref.size != d:
            raise UsageError(f"reference has {ref.size} samples, signal has {d}")
        peak = float(np.ptp(ref)) or 1.0
        run.report["metrics"] = harness.metrics(ref, out.estimate, peak)._asdict()
        run.report["input_metrics"] = harness.metrics(ref, g, peak)._asdict()
    if failed:
        run.report["error"] = "residual bound not met"
        raise NumericalFailure("BGAPN could not meet the residual bound")


def _denoise_opts(args) -> imaging.DenoiseOptions:
    return imaging.DenoiseOptions(geometry=args.geometry, epsilon=args.epsilon,
                                  rows_per_iter=args.rows_per_iter, gamma=args.gamma,
                                  threads=args.threads)


def _grid(args):
    return None if args.ensemble else [{}]


def cmd_image(args, run: Run) -> None:
    img = imaging.read_pgm(args.input)
    ref = imaging.read_pgm(args.reference) if args.reference else None
    if ref is not None and ref.shape != img.shape:
        raise UsageError(f"reference is {ref.shape}, image is {img.shape}")
    if args.sigma < 0:
        raise UsageError("--sigma must be >= 0")
    write = lambda name, im, **kw: imaging.write_pgm(run.path(name), im, plain=args.plain, **kw)
    run.report = {"subcommand": args.subcommand, "shape": list(img.shape)}
    if args.subcommand == "gradmap":
        gm = imaging.gradient_map(img)
        write("gradmap.pgm", gm)
        run.report["max_magnitude"] = float(gm.max())
        return
    if args.subcommand == "denoise":
        rep = imaging.ensemble_denoise_report(img, args.sigma, _grid(args), _denoise_opts(args))
        write("denoised.pgm", rep.image)
        run.report["bound_met"] = rep.bound_met
        if ref is not None:
            run.report["psnr"] = harness.metrics(ref, rep.image).psnr
            run.report["input_psnr"] = harness.metrics(ref, img).psnr
        if not rep.bound_met:
            run.report["error"] = "residual bound not met"
            raise NumericalFailure("BGAPN could not meet the residual bound")
        return
    opts = imaging.SegmentOptions(rel_threshold=args.rel_threshold, min_region=args.min_region,
                                  sigma=args.sigma, param_grid=_grid(args),
                                  denoise=_denoise_opts(args))
    seg = imaging.segment_image(img, opts)
    write("piecewise.pgm", seg.piecewise_version)
    write("boundary.pgm", seg.boundary_map.astype(float) * 255)
    imaging.write_pgm(run.path("labels.pgm"), seg.labels, plain=True,
                      maxval=max(1, int(seg.labels.max())))
    run.report.update({"regions": seg.n_regions, "threshold": seg.threshold_used,
                       "boundary_pixels": int(seg.boundary_map.sum()), **seg.metadata})


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    return vals


def _int_list(text: str) -> list[int]:
    return [int(v) for v in _float_list(text)]


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def cmd_experiment(args, run: Run) -> None:
    sub = args.subcommand
    if sub == "sweep":
        if not args.sigmas:
            raise UsageError("--sigmas must be nonempty")
        spec = harness.SignalSpec(d=args.d, k=args.k, n=args.n, continuous=not args.discontinuous,
                                  seed=args.seed)
        res = harness.denoising_sweep(spec, args.sigmas, args.methods or harness.SWEEP_METHODS,
                                      args.trials, args.gamma, args.threads)
        key, xlabel, ylabel, logy = "mean_mse", "noise standard deviation", "mean MSE", True
    elif sub == "cs":
        if not args.grid:
            raise UsageError("--grid must be nonempty")
        spec = harness.SignalSpec(d=args.d, k=args.k, n=args.n, continuous=False, seed=args.seed)
        res = harness.cs_experiment(spec, args.grid, args.methods or harness.CS_METHODS,
                                    args.trials, args.tol, args.threads)
        key, xlabel, ylabel, logy = "mean_success", "m / d", "recovery rate", False
    else:
        if not args.ms:
            raise UsageError("--ms must be nonempty")
        res = harness.rip_experiment(args.d, args.n, args.k, args.ms, args.draws, args.trials,
                                     args.seed, args.identity)
        key, xlabel, ylabel, logy = "median_delta_hat", "m", "estimated delta", False
    write_table_csv(run.path("results.csv"), res.aggregates)
    write_table_csv(run.path("trials.csv"), res.replayable_rows())
    run.path("results.json").write_text(dump_json(res.to_dict()))
    methods = sorted({a.get("method", sub) for a in res.aggregates},
                     key=[a.get("method", sub) for a in res.aggregates].index)
    series = {m: res.table(m, key) for m in methods}
    run.path("plot.svg").write_text(line_plot(series, f"{sub} experiment", xlabel, ylabel, logy))
    run.report = {"subcommand": sub, "aggregates": res.aggregates}


def cmd_replay(args, _run=None) -> int:
    try:
        manifest = json.loads(Path(args.manifest).read_text())
        config = manifest["config"]
    except (OSError, ValueError, KeyError) as exc:
        raise ParseError(f"{args.manifest}: unreadable manifest ({exc})") from None
    ns = argparse.Namespace(**config)
    ns.out = args.out
    ns.json = args.json
    ns.func = COMMANDS[ns.command]
    return _execute(ns)


COMMANDS = {"project": cmd_project, "denoise1d": cmd_denoise1d, "image": cmd_image,
            "experiment": cmd_experiment}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--out", default="out", help="output directory (default ./out)")
    p.add_argument("--json", action="store_true", help="print the report as JSON")
    p.add_argument("--threads", type=int, default=1, help="worker threads for trials/tiles")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="overparam",
        description="Piecewise polynomial recovery with overparameterized sparsity models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="optimal piecewise polynomial fit with k jumps")
    p.add_argument("input", help="CSV, one value per line")
    p.add_argument("--k", type=int, required=True, help="number of jumps")
    p.add_argument("--n", type=int, default=1, help="polynomial degree")
    p.add_argument("--continuous", action="store_true", help="refit with continuity at junctions")
    p.add_argument("--scaling", choices=("paper", "normalized"), default="paper")
    _common(p)

    p = sub.add_parser("denoise1d", help="recover a 1D signal from noisy samples")
    p.add_argument("input")
    p.add_argument("--method", choices=("bgapn", "bgapn-cont", "sscosamp"), default="bgapn")
    p.add_argument("--n", type=int, default=1, help="polynomial degree")
    p.add_argument("--k", type=int, help="jump count (sscosamp)")
    p.add_argument("--sigma", type=float, help="noise standard deviation")
    p.add_argument("--noise-norm", type=float, help="noise norm bound (overrides --sigma)")
    p.add_argument("--epsilon", type=float, help="stopping threshold")
    p.add_argument("--rows-per-iter", type=int)
    p.add_argument("--gamma", type=float, help="continuity weight (bgapn-cont, default 100)")
    p.add_argument("--expand", type=float, default=2.0, help="candidate expansion (sscosamp)")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--scaling", choices=("paper", "normalized"), default="paper")
    p.add_argument("--reference", help="clean signal CSV for metrics")
    _common(p)

    p = sub.add_parser("image", help="piecewise-planar image pipelines")
    p.add_argument("subcommand", choices=("denoise", "segment", "gradmap"))
    p.add_argument("input", help="PGM (P2 or P5)")
    p.add_argument("--sigma", type=float, default=0.0, help="noise standard deviation")
    p.add_argument("--geometry", choices=("2D-hv", "2D-hv-diag"), default="2D-hv")
    p.add_argument("--ensemble", action="store_true", help="average over the default grid")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--rows-per-iter", type=int)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--rel-threshold", type=float, default=0.1)
    p.add_argument("--min-region", type=int, default=16)
    p.add_argument("--reference", help="clean PGM for PSNR")
    p.add_argument("--plain", action="store_true", help="write P2 instead of P5")
    _common(p)

    p = sub.add_parser("experiment", help="denoising sweep, CS curve, RIP estimate")
    p.add_argument("subcommand", choices=("sweep", "cs", "rip"))
    p.add_argument("--d", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--methods", type=_str_list)
    p.add_argument("--sigmas", type=_float_list,
                   default=[round(0.05 * i, 2) for i in range(1, 11)])
    p.add_argument("--discontinuous", action="store_true", help="sweep: jumps in value")
    p.add_argument("--gamma", type=float, default=100.0, help="sweep: continuity weight")
    p.add_argument("--grid", type=_float_list, default=[round(0.1 * i, 1) for i in range(1, 11)])
    p.add_argument("--tol", type=float, default=1e-4, help="cs: success tolerance")
    p.add_argument("--ms", type=_int_list, default=[40, 60, 80])
    p.add_argument("--draws", type=int, default=10, help="rip: matrices per m")
    p.add_argument("--identity", action="store_true", help="rip: use the identity")
    _common(p)

    p = sub.add_parser("replay", help="rerun a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    return parser


_EXPERIMENT_DEFAULTS = {
    "sweep": {"d": 300, "k": 6, "n": 1, "trials": 20},
    "cs": {"d": 100, "k": 6, "n": 2, "trials": 50},
    "rip": {"d": 100, "k": 3, "n": 1, "trials": 200},
}


def _execute(args) -> int:
    t0 = time.perf_counter()
    run = Run(args)
    try:
        args.func(args, run)
    except NumericalFailure as exc:
        run.finish(time.perf_counter() - t0)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    run.finish(time.perf_counter() - t0)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "experiment":
        for key, val in _EXPERIMENT_DEFAULTS[args.subcommand].items():
            if getattr(args, key) is None:
                setattr(args, key, val)
    if args.command == "replay":
        args.func = cmd_replay
    else:
        args.func = COMMANDS[args.command]
    try:
        if args.command == "replay":
            return cmd_replay(args)
        return _execute(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (InvalidArgument, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, imaging.PGMError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (la.LinAlgError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
