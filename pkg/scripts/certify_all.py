"""Run every certification suite and print one line per check.

    python3 scripts/certify_all.py [--seed N] [--jobs J]
"""

import argparse
import sys
import time

from dfs_cavity.certify import DEFAULT_SEED, run_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=DEFAULT_SEED)
    ap.add_argument("--jobs", type=int, default=None)
    args = ap.parse_args()
    ok = True
    for suite in ("dfs", "odes", "oracle"):
        t0 = time.perf_counter()
        for r in run_suite(suite, args.seed, args.jobs):
            print(r.line())
            ok &= r.passed
        print(f"  [{suite}: {time.perf_counter() - t0:.1f} s]")
    sys.exit(0 if ok else 3)


if __name__ == "__main__":
    main()
