"""MNIST center-patch inpainting experiment. Expects the raw IDX image
files under data/ (paths configurable in configs/mnist.json). Writes
results/mnist.csv.

Usage: python scripts/run_mnist.py [--out DIR] [--seed N] [--workers N]
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
    argv = ["mnist", "--config", str(ROOT / "configs" / "mnist.json")]
    if args.out is not None:
        argv += ["--out", args.out]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    if args.workers is not None:
        argv += ["--workers", str(args.workers)]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(run())
