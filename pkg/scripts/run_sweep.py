"""Denoising sweep for piecewise-linear and piecewise-quadratic signals.

Writes one experiment directory per degree under --out, each with
results.csv, trials.csv, results.json, plot.svg and a replay manifest.

    python3 scripts/run_sweep.py --out runs/sweep --trials 20
"""

import argparse
import sys

from overparam.cli import main


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/sweep")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--d", type=int, default=300)
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--degrees", default="1,2")
    p.add_argument("--seed", type=int, default=0)
    return p.parse_args()


if __name__ == "__main__":
    args = parse_args()
    for n in args.degrees.split(","):
        code = main(["experiment", "sweep", "--d", str(args.d), "--k", str(args.k), "--n", n,
                     "--trials", str(args.trials), "--seed", str(args.seed),
                     "--out", f"{args.out}/n{n}"])
        if code:
            sys.exit(code)
