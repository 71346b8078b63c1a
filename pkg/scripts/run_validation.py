"""Concentration-rate validation: compares Monte-Carlo fluctuations
around the deterministic equivalents at (p, n) and (4p, 4n). Writes
results/validate.json and prints the report.

Usage: python scripts/run_validation.py [--out DIR] [--seed N]
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
    args = ap.parse_args()
    argv = ["validate", "--config", str(ROOT / "configs" / "validate.json")]
    if args.out is not None:
        argv += ["--out", args.out]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(run())
