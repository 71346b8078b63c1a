"""Run the three synthetic sweeps (lambda, alpha, aspect ratio) with the
stock configs. Results land in results/ as CSV files.

Usage: python scripts/run_sweeps.py [--out DIR] [--seed N] [--workers N]
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
    extra = []
    if args.out is not None:
        extra += ["--out", args.out]
    if args.seed is not None:
        extra += ["--seed", str(args.seed)]
    if args.workers is not None:
        extra += ["--workers", str(args.workers)]
    for cmd in ("sweep-lambda", "sweep-alpha", "sweep-aspect"):
        cfg = ROOT / "configs" / f"{cmd.replace('-', '_')}.json"
        print(f"== {cmd} ({cfg}) ==")
        code = cli_main([cmd, "--config", str(cfg)] + extra)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(run())
