#!/usr/bin/env python3
"""Quick desk-scale run of one Monte-Carlo design.

Thin wrapper over `drcombine simulate --desk-scale`; results land in
out/<case>/ as metrics.csv, metrics.txt, and replicates.jsonl.
"""

import argparse
import sys

from drcombine.cli import main as cli_main
from drcombine.simulate import CASE_NAMES


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("case", choices=list(CASE_NAMES))
    parser.add_argument("--reps", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="out")
    parser.add_argument("--estimators", default=None)
    parser.add_argument("--no-penalty", action="store_true")
    args = parser.parse_args()
    argv = [
        "simulate",
        "--case", args.case,
        "--reps", str(args.reps),
        "--seed", str(args.seed),
        "--jobs", str(args.jobs),
        "--out", f"{args.out}/{args.case}",
        "--desk-scale",
    ]
    if args.estimators:
        argv += ["--estimators", args.estimators]
    if args.no_penalty:
        argv.append("--no-penalty")
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
