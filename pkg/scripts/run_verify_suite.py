"""Run the reformulation identity suite and write its JSON report.

Usage: python3 scripts/run_verify_suite.py [--count 100] [--seed 2020] [--out verify_report.json]
"""

import argparse
import sys

from taylorattr.taylor import POLY_TOL, SuiteConfig, run_proposition_suite


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=100)
    ap.add_argument("--seed", type=int, default=2020)
    ap.add_argument("--out", default="verify_report.json")
    args = ap.parse_args()
    report = run_proposition_suite(SuiteConfig(count=args.count, seed=args.seed))
    print(report.table())
    with open(args.out, "w") as fh:
        fh.write(report.to_json() + "\n")
    print(f"report written to {args.out}")
    return 0 if report.passed(POLY_TOL) else 1


if __name__ == "__main__":
    sys.exit(main())
