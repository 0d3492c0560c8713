"""Resonant-mode fringes for a grid of cross-rate ratios, plus a tail summary.

    python3 scripts/dfs_ratio_scan.py configs/dfs_scan.json out/dfs_scan.csv
"""

import argparse
from pathlib import Path

from dfs_cavity.dfs import ratio_scan
from dfs_cavity.io import SweepResult, describe_run, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("out")
    args = ap.parse_args()

    params, cfg, run = load_config(args.config)
    T = cfg.times
    curves, reports = ratio_scan(params, cfg, run.ratio_grid, T)
    result = SweepResult(metadata=describe_run(params, cfg, {"ratios": list(run.ratio_grid)}))
    print(f"{'ratio':>6} {'tail P_e':>12} {'min|Re lambda|':>15} protected")
    for r in run.ratio_grid:
        result.add_curve(f"ratio={r:g}", T, curves[r])
        rep = reports[r]
        print(f"{r:6.2f} {curves[r][-1]:12.4e} {rep.condition_residual:15.3e} {rep.protected_branch}")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    result.write_csv(args.out)


if __name__ == "__main__":
    main()
