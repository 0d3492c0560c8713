"""Brute-force reference integration of d rho/dt = L rho.

Plain fixed-step RK4 on the vectorized density matrix. It deliberately knows
nothing about the structure of L, so it can certify the analytic propagator.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import DiagnosticsError, TwoModeDensityMatrix, symmetrize
from .generator import LiouvillianMatrix

log = logging.getLogger(__name__)

STABILITY_LIMIT = 0.1
# above this vectorized size the generator is stored sparse; only the storage
# changes, the arithmetic is the same dense RK4
SPARSE_MIN_DIM = 64
ORACLE_POSITIVITY_TOL = 1e-6


class StepSizeError(ValueError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float | None = None
    max_steps: int = 10_000_000
    method: str = "rk4"
    check_every: int = 1

    def __post_init__(self):
        if self.method != "rk4":
            raise ValueError(f"unsupported method {self.method!r}")
        if self.dt is not None and not self.dt > 0:
            raise StepSizeError(f"dt must be positive, got {self.dt!r}")


def default_dt(L: LiouvillianMatrix, norm: float | None = None) -> float:
    """min(1/(50 * largest coefficient), 0.1/||L||_2)."""
    if norm is None:
        norm = L.norm2()
    candidates = []
    if L.params is not None and L.params.max_coefficient > 0:
        candidates.append(1.0 / (50.0 * L.params.max_coefficient))
    if norm > 0:
        candidates.append(STABILITY_LIMIT / norm)
    return min(candidates) if candidates else 1.0


def _rk4_step(M, v: np.ndarray, h: float) -> np.ndarray:
    k1 = M @ v
    k2 = M @ (v + 0.5 * h * k1)
    k3 = M @ (v + 0.5 * h * k2)
    k4 = M @ (v + h * k3)
    return v + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(
    rho0: TwoModeDensityMatrix,
    L: LiouvillianMatrix,
    t: float,
    cfg: IntegratorConfig = IntegratorConfig(),
) -> TwoModeDensityMatrix:
    """Evolve ``rho0`` for a duration ``t`` under ``L``.

    The step is shrunk so an integer number of steps lands exactly on ``t``.
    After each step the state is re-symmetrized; positivity is checked every
    ``cfg.check_every`` steps and a violation beyond 1e-6 raises
    DiagnosticsError.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if rho0.n_trunc != L.n_trunc:
        raise ValueError("state and Liouvillian truncations differ")
    if t == 0:
        return rho0
    norm = L.norm2()
    dt = cfg.dt if cfg.dt is not None else default_dt(L, norm)
    if dt * norm > STABILITY_LIMIT * (1 + 1e-12):
        raise StepSizeError(f"dt*||L|| = {dt * norm:.3g} exceeds {STABILITY_LIMIT}")
    steps = max(1, math.ceil(t / dt - 1e-9))
    if steps > cfg.max_steps:
        raise StepSizeError(f"{steps} steps needed, max_steps={cfg.max_steps}")
    h = t / steps

    d = rho0.dim
    M = sp.csr_matrix(L.matrix) if L.dim >= SPARSE_MIN_DIM else np.ascontiguousarray(L.matrix)
    v = rho0.vec().copy()
    worst_fix = 0.0
    for i in range(1, steps + 1):
        v = _rk4_step(M, v, h)
        sym, fix = symmetrize(v.reshape(d, d))
        worst_fix = max(worst_fix, fix)
        v = sym.reshape(-1)
        if i % cfg.check_every == 0 or i == steps:
            lo = float(np.linalg.eigvalsh(sym).min())
            if lo < -ORACLE_POSITIVITY_TOL:
                raise DiagnosticsError(
                    f"positivity lost at step {i} (t={i * h:.6g}): eigenvalue {lo:.3e}",
                    eigenvalue=lo,
                )
    log.debug("rk4: %d steps of %.3g, largest Hermitian correction %.2e", steps, h, worst_fix)
    return TwoModeDensityMatrix(v.reshape(d, d), rho0.n_trunc)


def integrate_grid(
    rho0: TwoModeDensityMatrix,
    L: LiouvillianMatrix,
    times,
    cfg: IntegratorConfig = IntegratorConfig(),
) -> list[TwoModeDensityMatrix]:
    """States at each of the (non-decreasing) ``times``, chaining segments."""
    out = []
    rho, now = rho0, 0.0
    for t in times:
        if t < now:
            raise ValueError("times must be non-decreasing")
        rho = integrate(rho, L, t - now, cfg)
        now = t
        out.append(rho)
    return out
