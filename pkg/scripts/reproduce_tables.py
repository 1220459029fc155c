#!/usr/bin/env python3
"""Full-scale reproduction driver: every design, 500 replicates each.

This is the long run (days on one core).  Pass --desk-scale for the small
population instead, or --cases to restrict the set.  Each design writes its
own subdirectory under --out.
"""

import argparse
import sys
import time

from drcombine.cli import main as cli_main
from drcombine.simulate import CASE_NAMES


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--cases", default=",".join(CASE_NAMES),
                        help="comma-separated design names (default: all)")
    parser.add_argument("--reps", type=int, default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="out/tables")
    parser.add_argument("--desk-scale", action="store_true")
    args = parser.parse_args()
    names = [c.strip() for c in args.cases.split(",") if c.strip()]
    for name in names:
        argv = [
            "simulate",
            "--case", name,
            "--seed", str(args.seed),
            "--jobs", str(args.jobs),
            "--out", f"{args.out}/{name}",
        ]
        if args.reps is not None:
            argv += ["--reps", str(args.reps)]
        if args.desk_scale:
            argv.append("--desk-scale")
        started = time.time()
        code = cli_main(argv)
        print(f"[{name}] exit {code} after {time.time() - started:.0f}s", file=sys.stderr)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
