"""Compressed-sensing recovery curve and the matching P_n-RIP estimates.

    python3 scripts/run_cs.py --out runs/cs            # desk scale, d=100
    python3 scripts/run_cs.py --out runs/cs --d 300    # full length
"""

import argparse
import sys

from overparam.cli import main


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/cs")
    p.add_argument("--d", type=int, default=100)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    return p.parse_args()


if __name__ == "__main__":
    args = parse_args()
    d = args.d
    code = main(["experiment", "cs", "--d", str(d), "--k", "6", "--n", "2",
                 "--trials", str(args.trials), "--seed", str(args.seed),
                 "--out", f"{args.out}/curve"])
    ms = ",".join(str(int(r * d)) for r in (0.4, 0.6, 0.8))
    code = code or main(["experiment", "rip", "--d", str(d), "--k", "3", "--n", "1",
                         "--ms", ms, "--seed", str(args.seed), "--out", f"{args.out}/rip"])
    sys.exit(code)
