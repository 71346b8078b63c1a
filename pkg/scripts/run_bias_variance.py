"""Bias/variance split across augmentation weights at a fixed small
ridge penalty. Writes results/bias_variance.csv.

Usage: python scripts/run_bias_variance.py [--out DIR] [--seed N]
"""

import argparse
import sys
from pathlib import Path

from augridge.cli import main as cli_main

ROOT = Path(__file__).resolve().parent.parent


def run():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()
    argv = ["bias-variance", "--config",
            str(ROOT / "configs" / "bias_variance.json")]
    if args.out is not None:
        argv += ["--out", args.out]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    if args.workers is not None:
        argv += ["--workers", str(args.workers)]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(run())
