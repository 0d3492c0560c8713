"""Fringe sweeps, DFS scans, state propagation and certification for two lossy cavity modes.

Exit codes: 0 success, 2 invalid input or config, 3 numerical diagnostics or
failed certification.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from functools import partial
from pathlib import Path

import numpy as np

from .certify import DEFAULT_SEED, parallel_map, resolve_jobs, run_suite
from .core import DiagnosticsError, SystemParams, TruncationError, bell_state, vacuum
from .dfs import dfs_check, dfs_state, ratio_scan
from .experiment import (
    ExperimentConfig,
    pe_diagonal,
    pe_dissipative,
    pe_ideal,
    rotating_frame,
    run_protocol,
)
from .io import (
    ConfigError,
    OverlayDataset,
    RangeError,
    SweepResult,
    describe_run,
    load_config,
    residuals,
)
from .oracle import StepSizeError
from .propagator import SingularFactorizationError, compute_coefficients, factorization_params

log = logging.getLogger("dfs_cavity")

EXIT_OK, EXIT_INVALID, EXIT_DIAGNOSTICS = 0, 2, 3
MODELS = ("ideal", "diagonal", "general", "protocol")


def _cx(z) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def _evaluate(model: str, params: SystemParams, cfg: ExperimentConfig, propagation: str, T) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    if model == "ideal":
        return np.asarray(pe_ideal(T, cfg))
    if model == "diagonal":
        return np.asarray(pe_diagonal(T, params.k11, params.k22, cfg))
    if model == "general":
        return np.asarray(pe_dissipative(T, params, cfg))
    if model == "protocol":
        return np.asarray(run_protocol(params, cfg, T, propagation=propagation))
    raise ValueError(f"unknown model {model!r}")


def sweep(model: str, params: SystemParams, cfg: ExperimentConfig, T, propagation: str = "analytic",
          jobs: int | None = None) -> np.ndarray:
    """Evaluate a fringe model on ``T``, chunked over ``jobs`` workers in order."""
    T = np.asarray(T, dtype=float)
    jobs = resolve_jobs(jobs)
    chunks = [c for c in np.array_split(T, jobs) if c.size]
    parts = parallel_map(partial(_evaluate, model, params, cfg, propagation), chunks, jobs)
    return np.concatenate(parts)


def _emit(sweep_result: SweepResult, out: str | None) -> None:
    if out:
        sweep_result.write_csv(out)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(sweep_result.to_csv())


def cmd_coeffs(args) -> int:
    params, cfg, _ = load_config(args.config, args.strict)
    p = rotating_frame(params, cfg)
    rows = []
    for t in args.t:
        co = compute_coefficients(p, t)
        row = {"t": t, **{k: _cx(getattr(co, k)) for k in
                          ("c", "r", "R", "lambda_minus", "lambda_plus", "F1", "F2", "L1", "L2")}}
        if args.schedule:
            try:
                s = factorization_params(p, t, dps=30)
                row["schedule"] = {k: _cx(v) for k, v in s.as_dict().items()}
            except SingularFactorizationError as exc:
                row["schedule"] = {"error": str(exc)}
        rows.append(row)
    print(json.dumps({"params": p.as_dict(), "coefficients": rows}, indent=2))
    return EXIT_OK


def cmd_propagate(args) -> int:
    from .generator import build_liouvillian
    from .oracle import integrate
    from .propagator import propagate_analytic

    params, cfg, run = load_config(args.config, args.strict)
    p = rotating_frame(params, cfg)
    n = args.n_trunc or run.n_trunc
    if args.state == "bell":
        rho0 = bell_state(args.phi if args.phi is not None else cfg.phi, n)
    elif args.state == "vacuum":
        rho0 = vacuum(n)
    else:
        rho0 = dfs_state("fock", dfs_check(p).kappa_fit, n)
    method = args.method or run.propagation
    if method == "analytic":
        rho = propagate_analytic(rho0, p, args.t)
    else:
        rho = integrate(rho0, build_liouvillian(p, n), args.t)
    report = {
        "t": args.t, "method": method, "n_trunc": n, "state": args.state,
        "trace": rho.trace(), "purity": rho.purity(),
        "min_eigenvalue": float(rho.eigenvalues().min()),
        "populations": {f"{i},{j}": rho.population(i, j) for i in range(n + 1) for j in range(n + 1)},
    }
    if args.out:
        np.save(args.out, rho.data)
        report["saved"] = args.out
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_pe_curve(args) -> int:
    params, cfg, run = load_config(args.config, args.strict)
    model = args.model or run.model
    T = cfg.times
    values = sweep(model, params, cfg, T, run.propagation, args.jobs)
    result = SweepResult(metadata=describe_run(params, cfg, {
        "model": model, "propagation": run.propagation, "frame": "rotating with mode b",
    }))
    result.add_curve(model, T, values)
    overlay_path = args.overlay or run.overlay
    if overlay_path:
        overlay = OverlayDataset.read_csv(overlay_path)
        bracket = tuple(args.bracket) if args.bracket else run.offset_bracket
        rep = residuals(result, overlay, run.phase_offset, bracket=bracket)
        summary = {"rms": rep.rms, "chi2": rep.chi2, "phase_offset": rep.phase_offset,
                   "best_offset": rep.best_offset, "best_rms": rep.best_rms}
        result.metadata["overlay"] = {"path": str(overlay_path), **summary}
        print(json.dumps(summary), file=sys.stderr)
    _emit(result, args.out or run.out)
    return EXIT_OK


def cmd_dfs_scan(args) -> int:
    params, cfg, run = load_config(args.config, args.strict)
    if cfg.delta != 0:
        warnings.warn(f"dfs-scan runs at zero splitting; ignoring delta={cfg.delta}", stacklevel=1)
        cfg = ExperimentConfig(0.0, cfg.Omega, cfg.Tr_a, cfg.Tr_b, cfg.nbar, cfg.reduction, cfg.T_grid)
    ratios = args.ratio_grid if args.ratio_grid is not None else list(run.ratio_grid)
    T = cfg.times
    curves, reports = ratio_scan(params, cfg, ratios, T, partial(sweep, jobs=args.jobs))
    report_meta = {
        f"{r:g}": {
            "lambda_minus": _cx(rep.lambda_minus), "lambda_plus": _cx(rep.lambda_plus),
            "protected_branch": rep.protected_branch, "min_abs_re_lambda": rep.condition_residual,
            "kappa_fit": rep.kappa_fit, "kappa_residual": rep.kappa_residual,
        }
        for r, rep in reports.items()
    }
    result = SweepResult(metadata=describe_run(params, cfg, {"ratios": list(ratios), "dfs_reports": report_meta}))
    for r in ratios:
        result.add_curve(f"ratio={r:g}", T, curves[r])
    _emit(result, args.out or run.out)
    return EXIT_OK


def cmd_protocol(args) -> int:
    params, cfg, run = load_config(args.config, args.strict)
    T = np.asarray(args.T, dtype=float) if args.T else cfg.times
    prop = args.propagation or run.propagation
    values = sweep("protocol", params, cfg, T, prop, args.jobs)
    result = SweepResult(metadata=describe_run(params, cfg, {"model": "protocol", "propagation": prop}))
    result.add_curve("protocol", T, values)
    _emit(result, args.out or run.out)
    return EXIT_OK


def cmd_certify(args) -> int:
    results = run_suite(args.suite, args.seed, args.jobs)
    for r in results:
        log.info(r.line())
    report = {"suite": args.suite, "seed": args.seed, "passed": all(r.passed for r in results),
              "checks": [r.to_dict() for r in results]}
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK if report["passed"] else EXIT_DIAGNOSTICS


def _ratio_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-q", "--quiet", action="store_true", help="only errors on stderr")
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    common.add_argument("--jobs", type=int, default=None,
                        help="worker processes (default: $DFS_CAVITY_JOBS or 1)")
    common.add_argument("--strict", action="store_true", help="reject unknown config keys")

    parser = argparse.ArgumentParser(prog="dfs-cavity", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coeffs", parents=[common], help="one-photon amplitudes and factor parameters")
    p.add_argument("config")
    p.add_argument("--t", type=float, nargs="+", required=True)
    p.add_argument("--schedule", action="store_true", help="also print the twelve factor parameters")
    p.set_defaults(func=cmd_coeffs)

    p = sub.add_parser("propagate", parents=[common], help="evolve a field state")
    p.add_argument("config")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--state", choices=("bell", "vacuum", "dfs-fock"), default="bell")
    p.add_argument("--phi", type=float, default=None, help="Bell-state phase (default: protocol value)")
    p.add_argument("--method", choices=("analytic", "oracle"), default=None)
    p.add_argument("--n-trunc", type=int, default=None)
    p.add_argument("--out", help="save the density matrix as .npy")
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("pe-curve", parents=[common], help="fringe P_e(T) over the config grid")
    p.add_argument("config")
    p.add_argument("--model", choices=MODELS, default=None)
    p.add_argument("--overlay", help="CSV with columns T,pe[,sigma]")
    p.add_argument("--bracket", type=float, nargs=2, metavar=("LO", "HI"), help="offset search range")
    p.add_argument("--out")
    p.set_defaults(func=cmd_pe_curve)

    p = sub.add_parser("dfs-scan", parents=[common], help="fringes for a grid of cross-rate ratios")
    p.add_argument("config")
    p.add_argument("--ratio-grid", type=_ratio_list, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dfs_scan)

    p = sub.add_parser("protocol", parents=[common], help="simulate the pulse sequence")
    p.add_argument("config")
    p.add_argument("--T", type=float, nargs="+", default=None)
    p.add_argument("--propagation", choices=("analytic", "oracle"), default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_protocol)

    p = sub.add_parser("certify", parents=[common], help="run cross-validation suites")
    p.add_argument("--suite", choices=("oracle", "odes", "dfs", "all"), default="all")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_certify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.ERROR if args.quiet else logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    logging.captureWarnings(True)
    try:
        return args.func(args)
    except ConfigError as exc:
        for path, msg in exc.violations:
            print(f"config error at {path or '<root>'}: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except (DiagnosticsError, StepSizeError, SingularFactorizationError, ArithmeticError) as exc:
        print(f"diagnostics failure: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    except (RangeError, TruncationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
