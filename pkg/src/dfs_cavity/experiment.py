"""Two-atom fringe experiment: source atom, dissipative wait, probe atom.

Everything is evaluated in a frame rotating at the frequency of mode b, so the
propagator sees mode frequencies ``(delta, 0)`` and only the splitting enters.

Timeline. The source atom (excited) gives mode a a pi/2 pulse and then mode b a
pi pulse, ending at ``t_prep = 3 pi/(2 Omega)``. The field then decays for
``tau = T - t_prep``. The probe atom (ground) gives mode a a pi pulse and mode b
a pi/2 pulse, and we read out its excited population.

Pulse phases: a pulse on mode m maps ``|e,n> -> cos|e,n> + e^{i chi_m} sin|g,n+1>``.
With ``chi_a = 0`` and ``chi_b = pi/2`` the simulated sequence reproduces the
closed-form fringe exactly, including the offset ``Phi``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    SystemParams,
    TruncationError,
    TwoModeDensityMatrix,
    vacuum,
)
from .propagator import (
    SingularFactorizationError,
    compute_coefficients,
    propagate_analytic,
)

log = logging.getLogger(__name__)

MODE_A, MODE_B = 0, 1
GROUND, EXCITED = 0, 1


@dataclass(frozen=True)
class ExperimentConfig:
    delta: float
    Omega: float
    Tr_a: float
    Tr_b: float
    nbar: float = 0.0
    reduction: float = 1.0
    T_grid: tuple[float, ...] = ()

    def __post_init__(self):
        if not math.isfinite(self.delta):
            raise ValueError("delta must be finite")
        if not self.Omega > 0:
            raise ValueError(f"Omega must be positive, got {self.Omega!r}")
        if not (self.Tr_a > 0 and self.Tr_b > 0):
            raise ValueError("Tr_a and Tr_b must be positive")
        if not self.nbar >= 0:
            raise ValueError("nbar must be non-negative")
        if not 0.0 <= self.reduction <= 1.0:
            raise ValueError("reduction must lie in [0, 1]")
        object.__setattr__(self, "T_grid", tuple(float(t) for t in self.T_grid))

    @property
    def Phi(self) -> float:
        return self.delta * math.pi / (2 * self.Omega)

    @property
    def phi(self) -> float:
        return math.pi / 2 + math.pi * self.delta / self.Omega

    @property
    def t_prep(self) -> float:
        return 3 * math.pi / (2 * self.Omega)

    @property
    def k11_eff(self) -> float:
        return effective_decay(self.nbar, self.Tr_a)

    @property
    def k22_eff(self) -> float:
        return effective_decay(self.nbar, self.Tr_b)

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.T_grid, dtype=float)

    def default_params(self) -> SystemParams:
        """Diagonal damping at the thermal effective rates, rotating frame."""
        return SystemParams(omega1=self.delta, omega2=0.0, k11=self.k11_eff, k22=self.k22_eff)


def effective_decay(nbar: float, Tr: float) -> float:
    """Amplitude decay rate (nbar + 1)/(2 Tr) for a mode with energy lifetime Tr."""
    if not Tr > 0:
        raise ValueError(f"decay time must be positive, got {Tr!r}")
    if not nbar >= 0:
        raise ValueError(f"nbar must be non-negative, got {nbar!r}")
    return (nbar + 1.0) / (2.0 * Tr)


def rotating_frame(params: SystemParams, cfg: ExperimentConfig) -> SystemParams:
    return params.with_(omega1=cfg.delta, omega2=0.0)


def _waits(T, cfg: ExperimentConfig) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    tau = T - cfg.t_prep
    # allow rounding when T is computed as exactly t_prep
    if np.any(tau < -1e-12 * max(1.0, cfg.t_prep)):
        raise ValueError(f"T must be >= 3 pi/(2 Omega) = {cfg.t_prep:.6g}")
    return np.clip(tau, 0.0, None)


def _scalar_or_array(T, values: np.ndarray):
    return float(values) if np.ndim(T) == 0 else values


def pe_ideal(T, cfg: ExperimentConfig):
    """Lossless fringe [1 + cos(delta T + Phi)]/2, times the reduction factor."""
    _waits(T, cfg)
    T = np.asarray(T, dtype=float)
    return _scalar_or_array(T, cfg.reduction * 0.5 * (1.0 + np.cos(cfg.delta * T + cfg.Phi)))


def pe_diagonal(T, k11: float, k22: float, cfg: ExperimentConfig):
    """Fringe with independent damping of the two modes."""
    tau = _waits(T, cfg)
    T = np.asarray(T, dtype=float)
    offset = 0.5 * (np.exp(-2 * k11 * tau) + np.exp(-2 * k22 * tau))
    cross = np.exp(-(k11 + k22) * tau) * np.cos(cfg.delta * T + cfg.Phi)
    return _scalar_or_array(T, cfg.reduction * 0.5 * (offset + cross))


def pe_dissipative(T, params: SystemParams, cfg: ExperimentConfig):
    """General fringe from the one-photon amplitudes F1, F2, L1, L2 at tau.

    The mode frequencies of ``params`` are replaced by the rotating-frame
    values ``(cfg.delta, 0)``.
    """
    tau = np.atleast_1d(_waits(T, cfg))
    p = rotating_frame(params, cfg)
    e_phi = np.exp(1j * cfg.phi)
    probe = 1j * np.exp(2j * cfg.Phi)
    out = np.empty(tau.shape)
    for i, t in enumerate(tau):
        co = compute_coefficients(p, float(t))
        amp = -(co.F1 + e_phi * co.L1) + probe * (e_phi * co.F2 + co.L2)
        out[i] = 0.25 * abs(amp) ** 2
    out = cfg.reduction * out.reshape(np.shape(T))
    return _scalar_or_array(T, out)


# --- atom + field simulation --------------------------------------------------
# Atom-field kets are indexed atom * D + field with D = (N+1)**2 and the field
# index row-major in (n_a, n_b).


@dataclass(frozen=True)
class PulsePhaseConvention:
    """Dipole phase of the pulse on mode b relative to mode a."""

    chi: float = math.pi / 2

    def phase(self, mode: int) -> float:
        return 0.0 if mode == MODE_A else self.chi


def _field_occupations(n_trunc: int) -> tuple[np.ndarray, np.ndarray]:
    d = n_trunc + 1
    idx = np.arange(d * d)
    return idx // d, idx % d


def rabi_unitary(n_trunc: int, mode: int, angle: float,
                 convention: PulsePhaseConvention = PulsePhaseConvention()) -> np.ndarray:
    """Resonant pulse rotating every doublet {|e,n>, |g,n+1>} of ``mode``.

    The doublet rotates by ``angle * sqrt(n + 1)``. States |e,N> have no
    partner inside the truncation and are left alone here; ``rabi_pulse``
    refuses states that populate them.
    """
    d = n_trunc + 1
    D = d * d
    occ = _field_occupations(n_trunc)[mode]
    step = d if mode == MODE_A else 1
    chi = convention.phase(mode)
    U = np.eye(2 * D, dtype=complex)
    for f in range(D):
        n = occ[f]
        if n >= n_trunc:
            continue
        th = angle * math.sqrt(n + 1) / 2
        e_idx = EXCITED * D + f
        g_idx = GROUND * D + f + step
        c, s = math.cos(th), math.sin(th)
        U[e_idx, e_idx] = c
        U[g_idx, e_idx] = np.exp(1j * chi) * s
        U[g_idx, g_idx] = c
        U[e_idx, g_idx] = -np.exp(-1j * chi) * s
    return U


def _edge_weight(state: np.ndarray, n_trunc: int, mode: int) -> float:
    D = (n_trunc + 1) ** 2
    occ = _field_occupations(n_trunc)[mode]
    edge = EXCITED * D + np.flatnonzero(occ == n_trunc)
    if state.ndim == 1:
        return float(np.sum(np.abs(state[edge]) ** 2))
    return float(np.sum(np.diag(state)[edge].real))


def rabi_pulse(state: np.ndarray, mode: int, angle: float, n_trunc: int,
               convention: PulsePhaseConvention = PulsePhaseConvention(),
               tol: float = 1e-14) -> np.ndarray:
    """Apply a resonant pulse to an atom+field ket (or density matrix)."""
    state = np.asarray(state, dtype=complex)
    w = _edge_weight(state, n_trunc, mode)
    if w > tol:
        raise TruncationError(
            f"weight {w:.3e} on |e, n={n_trunc}> in mode {mode}: raise n_trunc"
        )
    U = rabi_unitary(n_trunc, mode, angle, convention)
    if state.ndim == 1:
        return U @ state
    return U @ state @ U.conj().T


def _free_phases(n_trunc: int, delta: float, t: float, atom_at_a: bool) -> np.ndarray:
    """Diagonal of exp(-i H_free t) in the frame rotating with mode b.

    H_free = delta * n_a + omega_atom * sigma_ee, where the Stark-tuned atom
    sits at delta while resonant with mode a and at 0 while resonant with b.
    """
    n_a = _field_occupations(n_trunc)[MODE_A]
    energy = np.concatenate([delta * n_a, delta * n_a + (delta if atom_at_a else 0.0)])
    return np.exp(-1j * energy * t)


def _pulse_step(state, mode, angle, cfg, n_trunc, convention):
    # the pulse Hamiltonian conserves n_mode + sigma_ee, so it commutes with
    # the free part and the two can be applied one after the other
    duration = angle / cfg.Omega
    state = rabi_pulse(state, mode, angle, n_trunc, convention)
    ph = _free_phases(n_trunc, cfg.delta, duration, atom_at_a=(mode == MODE_A))
    if state.ndim == 1:
        return ph * state
    return ph[:, None] * state * ph.conj()[None, :]


def prepare_source_state(cfg: ExperimentConfig, n_trunc: int = 1,
                         convention: PulsePhaseConvention = PulsePhaseConvention()) -> TwoModeDensityMatrix:
    """Field state left behind by the source atom at t_prep."""
    D = (n_trunc + 1) ** 2
    psi = np.zeros(2 * D, dtype=complex)
    psi[EXCITED * D + 0] = 1.0
    psi = _pulse_step(psi, MODE_A, math.pi / 2, cfg, n_trunc, convention)
    psi = _pulse_step(psi, MODE_B, math.pi, cfg, n_trunc, convention)
    excited = float(np.sum(np.abs(psi[EXCITED * D:]) ** 2))
    if excited > 1e-12:
        log.warning("source atom left with excited population %.3e", excited)
    rho = np.outer(psi, psi.conj())
    field = rho[:D, :D] + rho[D:, D:]
    return TwoModeDensityMatrix(field, n_trunc)


def probe_excited_probability(field: TwoModeDensityMatrix, cfg: ExperimentConfig,
                              convention: PulsePhaseConvention = PulsePhaseConvention()) -> float:
    n_trunc = field.n_trunc
    D = field.dim
    rho = np.zeros((2 * D, 2 * D), dtype=complex)
    rho[:D, :D] = field.data
    rho = _pulse_step(rho, MODE_A, math.pi, cfg, n_trunc, convention)
    rho = _pulse_step(rho, MODE_B, math.pi / 2, cfg, n_trunc, convention)
    return float(np.trace(rho[D:, D:]).real)


def _propagate(rho, params, tau, propagation):
    if tau == 0:
        return rho
    if propagation == "analytic":
        try:
            return propagate_analytic(rho, params, tau)
        except SingularFactorizationError as exc:
            log.info("falling back to the oracle at tau=%.6g: %s", tau, exc)
    elif propagation != "oracle":
        raise ValueError(f"propagation must be 'analytic' or 'oracle', got {propagation!r}")
    from .generator import build_liouvillian
    from .oracle import integrate
    return integrate(rho, build_liouvillian(params, rho.n_trunc), tau)


def run_protocol(params: SystemParams, cfg: ExperimentConfig, T, propagation: str = "analytic",
                 n_trunc: int = 1,
                 convention: PulsePhaseConvention = PulsePhaseConvention()):
    """Simulate pulses and dissipative wait; return P_e at each entry time ``T``.

    The sequence never holds more than one photon, so ``n_trunc=1`` is exact.
    """
    taus = np.atleast_1d(_waits(T, cfg))
    p = rotating_frame(params, cfg)
    rho0 = prepare_source_state(cfg, n_trunc, convention)
    out = np.empty(taus.shape)
    for i, tau in enumerate(taus):
        rho = _propagate(rho0, p, float(tau), propagation)
        out[i] = probe_excited_probability(rho, cfg, convention)
    out = cfg.reduction * out.reshape(np.shape(T))
    return _scalar_or_array(T, out)


def fringe_contrast(T: Sequence[float], values: Sequence[float], delta: float,
                    periods: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Fringe contrast per period by local least squares.

    Each period window is fitted with ``a + b cos(delta T) + c sin(delta T) +
    d (T - Tc)``; the contrast (max minus min of the oscillating part) is
    ``2 sqrt(b^2 + c^2)``. Returns window centres and contrasts.
    """
    T = np.asarray(T, dtype=float)
    y = np.asarray(values, dtype=float)
    if delta == 0:
        raise ValueError("no fringe at zero splitting")
    period = 2 * math.pi / abs(delta)
    n = int(math.floor((T[-1] - T[0]) / period + 1e-9))
    if periods is not None:
        n = min(n, periods)
    if n < 1:
        raise ValueError("grid shorter than one fringe period")
    centres, contrasts = [], []
    for j in range(n):
        lo = T[0] + j * period
        sel = (T >= lo - 1e-12) & (T <= lo + period + 1e-12)
        t = T[sel]
        tc = lo + period / 2
        X = np.column_stack([np.ones_like(t), np.cos(delta * t), np.sin(delta * t), t - tc])
        coef, *_ = np.linalg.lstsq(X, y[sel], rcond=None)
        centres.append(tc)
        contrasts.append(2 * math.hypot(coef[1], coef[2]))
    return np.array(centres), np.array(contrasts)


def envelope_rate(T, values, delta: float, periods: int | None = None) -> float:
    """Decay rate of the fringe contrast from a log-linear fit."""
    centres, contrasts = fringe_contrast(T, values, delta, periods)
    if len(centres) < 2:
        raise ValueError("need at least two periods")
    slope, _ = np.polyfit(centres, np.log(contrasts), 1)
    return float(-slope)
