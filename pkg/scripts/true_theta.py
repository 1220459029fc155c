#!/usr/bin/env python3
"""Regenerate the frozen population-contrast constants in simulate.py.

Each design without a closed-form effect gets a 10^6-unit draw at the
fixed truth seed; the printed values are the ones hard-coded as THETA_*.
"""

import argparse

from drcombine.simulate import TRUTH_SEED, case_spec, oracle_true_theta

CASES = ("case1b", "case5b", "s3", "s1b", "s3b")
LABELS = {
    "case1b": "THETA_BINARY_A",
    "case5b": "THETA_BINARY_B",
    "s3": "THETA_JOINT_CONT_B",
    "s1b": "THETA_JOINT_BIN_A",
    "s3b": "THETA_JOINT_BIN_B",
}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=1_000_000, help="draw size (default 1e6)")
    parser.add_argument("--seed", type=int, default=TRUTH_SEED)
    args = parser.parse_args()
    for name in CASES:
        case = case_spec(name)
        value = oracle_true_theta(case, n=args.n, seed=args.seed)
        print(f"{LABELS[name]:<22} {name:<8} {value:.5f}")


if __name__ == "__main__":
    main()
