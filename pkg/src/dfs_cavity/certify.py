"""Cross-validation harnesses: analytic propagator vs oracle, factor ODEs, DFS scan."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import mpmath
import numpy as np

from .core import SystemParams, photon_sector, random_pure, trace_distance
from .generator import build_liouvillian
from .oracle import integrate_grid
from .propagator import compute_coefficients, factorization_params, propagate_analytic

log = logging.getLogger(__name__)

DEFAULT_SEED = 20240611
ODE_DPS = 50
ODE_EQUATIONS = 12


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    seed: int | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: measured {self.measured:.3e} (tolerance {self.tolerance:.1e})"


def resolve_jobs(jobs: int | None) -> int:
    if jobs is None:
        jobs = int(os.environ.get("DFS_CAVITY_JOBS", "1") or 1)
    return max(1, int(jobs))


def parallel_map(fn: Callable, items: Iterable, jobs: int | None = None) -> list:
    """Ordered map, spread over processes when ``jobs > 1``."""
    items = list(items)
    jobs = resolve_jobs(jobs)
    if jobs == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def random_params(rng: np.random.Generator, boundary: bool = False) -> SystemParams:
    """Random physical coefficients with rates at 5-10% of the frequencies.

    The jump-matrix off-diagonal is drawn as ``s sqrt(k11 k22) e^{i theta}``
    times two, with ``s`` uniform in [0, 1] or exactly 1 on the PSD boundary.
    The parts of k12, k21, d12, d21 that do not enter the jump matrix are
    drawn freely.
    """
    om1, om2 = rng.uniform(0.5, 1.5, size=2)
    k11, k22 = rng.uniform(0.05, 0.1, size=2)
    d11, d22 = rng.uniform(-0.05, 0.05, size=2)
    s = 1.0 if boundary else rng.uniform(0.0, 1.0)
    theta = rng.uniform(0, 2 * math.pi)
    g = s * math.sqrt(k11 * k22)
    k_sum, d_diff = 2 * g * math.cos(theta), 2 * g * math.sin(theta)
    k_split = rng.uniform(-0.01, 0.01)
    d_sum = rng.uniform(-0.04, 0.04)
    return SystemParams(
        omega1=om1, omega2=om2, k11=k11, k22=k22,
        k12=k_sum / 2 + k_split, k21=k_sum / 2 - k_split,
        delta11=d11, delta22=d22,
        delta12=(d_sum + d_diff) / 2, delta21=(d_sum - d_diff) / 2,
    )


def random_param_sets(n: int, seed: int, boundary_every: int = 5) -> list[SystemParams]:
    rng = np.random.default_rng(seed)
    return [random_params(rng, boundary=(i % boundary_every == boundary_every - 1)) for i in range(n)]


# --- analytic vs oracle --------------------------------------------------------


def _equivalence_case(args) -> float:
    params, photons, n_trunc, seed, time_factors = args
    rng = np.random.default_rng(seed)
    rho0 = random_pure(photon_sector(photons, n_trunc), n_trunc, rng)
    times = [f / params.max_rate for f in time_factors]
    L = build_liouvillian(params, n_trunc)
    ref = integrate_grid(rho0, L, times)
    return max(trace_distance(propagate_analytic(rho0, params, t), r) for t, r in zip(times, ref))


def oracle_equivalence(n_sets: int = 100, seed: int = DEFAULT_SEED, photons: int = 1,
                       n_trunc: int = 1, tolerance: float = 1e-6,
                       time_factors=(0.5, 2.0, 5.0), jobs: int | None = None) -> CheckResult:
    """Max trace distance between both propagators over random problems."""
    sets = random_param_sets(n_sets, seed)
    cases = [(p, photons, n_trunc, seed + 1 + i, tuple(time_factors)) for i, p in enumerate(sets)]
    dists = parallel_map(_equivalence_case, cases, jobs)
    worst = float(max(dists))
    return CheckResult(
        f"oracle_equivalence[{photons}-photon, N={n_trunc}]", worst <= tolerance, worst, tolerance, seed,
        {"n_sets": n_sets, "worst_index": int(np.argmax(dists))},
    )


# --- factor ODE residuals -------------------------------------------------------

_LOG_PARAMS = ("m1", "m2", "p1", "p2")
_STENCIL = ((-2, 1), (-1, -8), (1, 8), (2, -1))   # (offset, weight) / (12 h)


def _schedule_derivatives(params: SystemParams, t: float, h: float, ctx) -> tuple[dict, dict]:
    """Schedule at t and its time derivatives by a five-point central stencil.

    Times are formed in mpmath so the stencil points are exactly equispaced.
    Logarithmic parameters are unwrapped before differencing.
    """
    T = ctx.mpf(t)
    H = ctx.mpf(h)
    centre = factorization_params(params, T, dps=ctx.dps).as_dict()
    deriv = {k: ctx.mpc(0) for k in centre}
    for off, w in _STENCIL:
        s = factorization_params(params, T + off * H, dps=ctx.dps).as_dict()
        for k in centre:
            d = s[k] - centre[k]
            if k in _LOG_PARAMS:
                d = d - 2j * ctx.pi * ctx.nint(d.imag / (2 * ctx.pi))
            deriv[k] += w * d
    for k in deriv:
        deriv[k] /= 12 * H
    return centre, deriv


def ode_residuals_at(params: SystemParams, t: float, step: float | None = None) -> np.ndarray:
    """The twelve coupled equations for the factor parameters, as residuals."""
    ctx = mpmath.MPContext()
    ctx.dps = ODE_DPS
    h = step if step is not None else 1e-6 / params.max_rate
    x, d = _schedule_derivatives(params, t, h, ctx)
    p = {k: ctx.mpf(v) for k, v in params.as_dict().items()}
    I = ctx.mpc(1j)
    k11, k22, k12, k21 = p["k11"], p["k22"], p["k12"], p["k21"]
    D11, D22, D12, D21 = p["delta11"], p["delta22"], p["delta12"], p["delta21"]
    O1, O2 = p["omega1"], p["omega2"]
    s = ctx.exp(x["m1"] - x["m2"])
    sl = ctx.exp(x["p1"] - x["p2"])
    n, nl = x["n"], x["n_l"]
    res = [
        I * (D11 - O1) - k11 - (d["m1"] - n * d["q"] * s),
        I * (D22 - O2) - k22 - (d["m2"] + n * d["q"] * s),
        I * D12 - k12 - d["q"] * s,
        I * D21 - k21 - (d["n"] + n * (d["m1"] - d["m2"]) - n**2 * d["q"] * s),
        I * (O1 - D11) - k11 - (d["p1"] - nl * d["q_l"] * sl),
        I * (O2 - D22) - k22 - (d["p2"] + nl * d["q_l"] * sl),
        -I * D12 - k12 - d["q_l"] * sl,
        -I * D21 - k21 - (d["n_l"] + nl * (d["p1"] - d["p2"]) - nl**2 * d["q_l"] * sl),
        2 * k11 - (x["z"] * (I * D21 - k21) - x["z_l"] * (I * D21 + k21) - 2 * k11 * x["h1"] + d["h1"]),
        2 * k22 - (x["z_l"] * (I * D12 - k12) - x["z"] * (I * D12 + k12) - 2 * k22 * x["h2"] + d["h2"]),
        I * (D21 - D12) + k21 + k12 - (
            x["z"] * (I * (O1 - D11 - O2 + D22) - k11 - k22)
            - x["h2"] * (I * D21 + k21) + x["h1"] * (I * D12 - k12) + d["z"]
        ),
        I * (D12 - D21) + k12 + k21 - (
            x["z_l"] * (I * (O2 - D22 - O1 + D11) - k22 - k11)
            - x["h1"] * (I * D12 + k12) + x["h2"] * (I * D21 - k21) + d["z_l"]
        ),
    ]
    return np.array([float(abs(r)) for r in res])


def conjugation_residual(params: SystemParams, t: float) -> float:
    s = factorization_params(params, t, dps=ODE_DPS)
    pairs = (("n_l", "n"), ("q_l", "q"), ("p1", "m1"), ("p2", "m2"), ("z_l", "z"))
    return max(float(abs(s[a] - s[b].conjugate())) for a, b in pairs)


def _ode_case(args):
    params, factors = args
    worst, conj = 0.0, 0.0
    for f in factors:
        t = f / params.max_rate
        worst = max(worst, float(ode_residuals_at(params, t).max()))
        conj = max(conj, conjugation_residual(params, t))
    return worst, conj


def ode_residuals(n_sets: int = 20, seed: int = DEFAULT_SEED, time_factors=(0.1, 1.0, 5.0),
                  tolerance: float = 1e-6, conj_tolerance: float = 1e-12,
                  jobs: int | None = None) -> list[CheckResult]:
    sets = random_param_sets(n_sets, seed)
    out = parallel_map(_ode_case, [(p, tuple(time_factors)) for p in sets], jobs)
    worst = max(o[0] for o in out)
    conj = max(o[1] for o in out)
    return [
        CheckResult("factor_odes", worst <= tolerance, worst, tolerance, seed,
                    {"n_sets": n_sets, "equations": ODE_EQUATIONS}),
        CheckResult("conjugate_pairs", conj <= conj_tolerance, conj, conj_tolerance, seed),
    ]


# --- DFS manifold ----------------------------------------------------------------


def min_abs_real_rate(params: SystemParams) -> float:
    co = compute_coefficients(params, 0.0)
    return min(abs(complex(co.lambda_minus).real), abs(complex(co.lambda_plus).real))


def dfs_manifold_scan(n: int = 50, k11: float = 1.0, k22: float = 2.25, span: float = 4.0,
                      tolerance: float = 1e-12) -> CheckResult:
    """Grid over cross-rate ratios (log-spaced, symmetric about 1).

    On the curve k12 k21 = k11 k22 the slowest rate must vanish to
    ``tolerance``; everywhere else it must exceed it.
    """
    ratios = np.geomspace(1 / span, span, n)
    g = math.sqrt(k11 * k22)
    rates = np.empty((n, n))
    for i, x in enumerate(ratios):
        for j, y in enumerate(ratios):
            rates[i, j] = min_abs_real_rate(SystemParams(k11=k11, k22=k22, k12=x * g, k21=y * g))
    on = np.abs(np.outer(ratios, ratios) - 1.0) <= 1e-12
    on_worst = float(rates[on].max()) if on.any() else math.inf
    off_min = float(rates[~on].min())
    passed = bool(on.any() and on_worst <= tolerance and off_min > tolerance)
    return CheckResult("dfs_manifold_iff", passed, on_worst, tolerance, None,
                       {"grid": n, "on_curve_points": int(on.sum()), "off_curve_min": off_min})


SUITES = ("oracle", "odes", "dfs")


def run_suite(name: str, seed: int = DEFAULT_SEED, jobs: int | None = None) -> list[CheckResult]:
    if name == "all":
        return [r for s in SUITES for r in run_suite(s, seed, jobs)]
    if name == "oracle":
        return [
            oracle_equivalence(100, seed, photons=1, n_trunc=1, tolerance=1e-6, jobs=jobs),
            oracle_equivalence(20, seed, photons=2, n_trunc=3, tolerance=1e-5, jobs=jobs),
        ]
    if name == "odes":
        return ode_residuals(20, seed, jobs=jobs)
    if name == "dfs":
        return [dfs_manifold_scan()]
    raise ValueError(f"unknown suite {name!r}")
