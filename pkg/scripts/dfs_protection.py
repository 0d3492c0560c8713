"""Purity and normal-mode populations of a DFS state versus a lossy one.

    python3 scripts/dfs_protection.py --kappa 2 --k11 0.1
"""

import argparse

import numpy as np

from dfs_cavity.core import pure_state
from dfs_cavity.dfs import dfs_invariance_test, dfs_params, dfs_state


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kappa", type=float, default=1.0)
    ap.add_argument("--k11", type=float, default=0.1)
    ap.add_argument("--omega", type=float, default=1.0)
    args = ap.parse_args()

    params = dfs_params(args.k11, args.kappa, omega=args.omega)
    times = np.linspace(0, 10 / args.k11, 11)
    for label, state in (("dfs fock", dfs_state("fock", args.kappa)), ("|1,0>", pure_state([((1, 0), 1.0)]))):
        rep = dfs_invariance_test(state, params, times, kappa=args.kappa)
        for method in ("analytic", "oracle"):
            print(f"{label:9s} {method:8s} min purity {rep.min_purity(method):.10f}  "
                  f"<B+B> drift {rep.nB_drift(method):.2e}  <A+A> lost {rep.nA_decay(method):.4f}")


if __name__ == "__main__":
    main()
