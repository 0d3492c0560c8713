"""Decoherence-free subspace diagnostics and state constructors.

Under the correlated conditions

    k22 + i d22 = kappa^2 (k11 + i d11),
    k12 + i d12 = k21 + i d21 = kappa (k11 + i d11),   kappa real,

with equal mode frequencies, the rate matrix is ``k11 [[1, kappa], [kappa,
kappa^2]]``: rank one, proportional to the projector on
``A = (a1 + kappa a2)/sqrt(1 + kappa^2)``. All loss goes through A, and the
orthogonal mode ``B = (a2 - kappa a1)/sqrt(1 + kappa^2)`` only rotates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .core import (
    DEFAULT_N_TRUNC,
    DegenerateStateError,
    SystemParams,
    TruncationError,
    TwoModeDensityMatrix,
    dag,
    fidelity,
    mode_operators,
)
from .generator import LiouvillianMatrix, build_liouvillian, commutator, dissipator
from .oracle import IntegratorConfig, integrate_grid
from .propagator import compute_coefficients, propagate_analytic

MANIFOLD_RTOL = 1e-9


class NotOnDfsManifoldError(ValueError):
    pass


@dataclass(frozen=True)
class DfsReport:
    lambda_minus: complex
    lambda_plus: complex
    protected_branch: str | None
    condition_residual: float
    kappa_fit: float
    kappa_residual: float

    @property
    def protected(self) -> bool:
        return self.protected_branch is not None


def _condition_terms(params: SystemParams) -> tuple[complex, complex, complex, complex]:
    p = params
    return (
        complex(p.k11, p.delta11),
        complex(p.k22, p.delta22),
        complex(p.k12, p.delta12),
        complex(p.k21, p.delta21),
    )


def fit_kappa(params: SystemParams) -> tuple[float, float]:
    """Real kappa minimizing the squared mismatch of the correlated conditions.

    The objective is a quartic in kappa, so its stationary points are the
    real roots of a cubic. Returns (kappa, root of the minimal objective).
    """
    x11, x22, x12, x21 = _condition_terms(params)

    def cost(k: float) -> float:
        return abs(x22 - k * k * x11) ** 2 + abs(x12 - k * x11) ** 2 + abs(x21 - k * x11) ** 2

    a = abs(x11) ** 2
    if a == 0.0:
        return 0.0, math.sqrt(cost(0.0))
    # cost = a k^4 + 2(a - b) k^2 - 2 s k + const
    b = (x22 * x11.conjugate()).real
    s = ((x12 + x21) * x11.conjugate()).real
    roots = np.roots([4 * a, 0.0, 4 * a - 4 * b, -2 * s])
    cands = [float(r.real) for r in roots if abs(r.imag) <= 1e-9 * max(1.0, abs(r))]
    best = min(cands, key=cost)
    return best, math.sqrt(max(cost(best), 0.0))


def dfs_check(params: SystemParams, tolerance: float = 1e-12) -> DfsReport:
    """Locate a non-decaying one-photon branch and fit kappa."""
    co = compute_coefficients(params, 0.0)
    lm, lp = complex(co.lambda_minus), complex(co.lambda_plus)
    res_m, res_p = abs(lm.real), abs(lp.real)
    branch = None
    if min(res_m, res_p) <= tolerance:
        branch = "minus" if res_m <= res_p else "plus"
    kappa, kres = fit_kappa(params)
    return DfsReport(lm, lp, branch, min(res_m, res_p), kappa, kres)


def dfs_params(k11: float, kappa: float, omega: float = 0.0, delta11: float = 0.0) -> SystemParams:
    """Parameters satisfying the correlated conditions exactly."""
    return SystemParams(
        omega1=omega, omega2=omega,
        k11=k11, k22=kappa**2 * k11, k12=kappa * k11, k21=kappa * k11,
        delta11=delta11, delta22=kappa**2 * delta11,
        delta12=kappa * delta11, delta21=kappa * delta11,
    )


def manifold_residual(params: SystemParams, kappa: float) -> float:
    """Relative mismatch of the correlated conditions, including equal frequencies."""
    x11, x22, x12, x21 = _condition_terms(params)
    scale = max(abs(x11), abs(x22), abs(x12), abs(x21), 1e-300)
    freq_scale = max(abs(params.omega1), abs(params.omega2), 1.0)
    return max(
        abs(x22 - kappa**2 * x11) / scale,
        abs(x12 - kappa * x11) / scale,
        abs(x21 - kappa * x11) / scale,
        abs(params.omega1 - params.omega2) / freq_scale,
    )


@dataclass(frozen=True, eq=False)
class NormalModes:
    kappa: float
    A_matrix: np.ndarray
    B_matrix: np.ndarray
    k_aa: float
    delta_aa: float

    @classmethod
    def build(cls, kappa: float, n_trunc: int = DEFAULT_N_TRUNC, k_aa: float = 0.0,
              delta_aa: float = 0.0) -> "NormalModes":
        a1, a2 = mode_operators(n_trunc)
        norm = math.sqrt(1.0 + kappa**2)
        return cls(kappa, (a1 + kappa * a2) / norm, (a2 - kappa * a1) / norm, k_aa, delta_aa)

    def commutator_residual(self, n_trunc: int) -> float:
        """Largest deviation from bosonic commutators on states below the edge.

        Truncated ladder operators fail [a, a^dag] = 1 only on the edge states,
        so the check is restricted to total photon number < n_trunc.
        """
        d = n_trunc + 1
        idx = np.arange(d * d)
        inner = (idx // d + idx % d) < n_trunc
        sel = np.ix_(inner, inner)
        A, B = self.A_matrix, self.B_matrix
        eye = np.eye(d * d)
        errs = [
            A @ dag(A) - dag(A) @ A - eye,
            B @ dag(B) - dag(B) @ B - eye,
            A @ B - B @ A,
            A @ dag(B) - dag(B) @ A,
        ]
        return max(float(np.abs(e[sel]).max()) for e in errs)


def normal_mode_split(params: SystemParams, kappa: float,
                      n_trunc: int = DEFAULT_N_TRUNC) -> tuple[LiouvillianMatrix, LiouvillianMatrix, NormalModes]:
    """Split the generator into a lossy A part and a purely rotating B part.

    The A mode carries rate ``(1 + kappa^2) k_aa`` and frequency
    ``omega - (1 + kappa^2) delta_aa`` with ``k_aa = k11``, ``delta_aa = d11``.
    """
    res = manifold_residual(params, kappa)
    if res > MANIFOLD_RTOL:
        raise NotOnDfsManifoldError(f"conditions violated for kappa={kappa}: relative residual {res:.3e}")
    modes = NormalModes.build(kappa, n_trunc, k_aa=params.k11, delta_aa=params.delta11)
    A, B = modes.A_matrix, modes.B_matrix
    omega = params.omega1
    g = 1.0 + kappa**2
    H_A = (omega - modes.delta_aa * g) * dag(A) @ A
    H_B = omega * dag(B) @ B
    L_A = -1j * commutator(H_A) + g * modes.k_aa * dissipator(A)
    L_B = -1j * commutator(H_B)
    return (
        LiouvillianMatrix(L_A, n_trunc, params, "L_A"),
        LiouvillianMatrix(L_B, n_trunc, params, "L_B"),
        modes,
    )


def _coherent_amplitudes(alpha: complex, n_trunc: int, tail_tol: float) -> np.ndarray:
    n = np.arange(n_trunc + 1)
    logfact = np.array([math.lgamma(k + 1) for k in n])
    if alpha == 0:
        c = np.zeros(n_trunc + 1, dtype=complex)
        c[0] = 1.0
        return c
    mag = np.exp(-abs(alpha) ** 2 / 2 + n * math.log(abs(alpha)) - 0.5 * logfact)
    c = mag * np.exp(1j * n * np.angle(alpha))
    tail = 1.0 - float(np.sum(np.abs(c) ** 2))
    if tail > tail_tol:
        raise TruncationError(f"coherent amplitude {alpha} leaves {tail:.3e} above n_trunc={n_trunc}")
    return c


def coherent_overlap(alpha: complex, beta: complex) -> complex:
    """<alpha|beta> for untruncated coherent states."""
    return complex(np.exp(-abs(alpha) ** 2 / 2 - abs(beta) ** 2 / 2 + np.conj(alpha) * beta))


def _product_ket(alpha1: complex, alpha2: complex, n_trunc: int, tail_tol: float) -> np.ndarray:
    c1 = _coherent_amplitudes(alpha1, n_trunc, tail_tol)
    c2 = _coherent_amplitudes(alpha2, n_trunc, tail_tol)
    return np.kron(c1, c2)


def cat_normalization(kappa: float, v: complex, w: complex, phi: float) -> float:
    """N with N^-2 = 2 + 2 Re(e^{i phi} <-kappa v|-kappa w><v|w>)."""
    ov = coherent_overlap(-kappa * v, -kappa * w) * coherent_overlap(v, w)
    inv2 = 2.0 + 2.0 * (np.exp(1j * phi) * ov).real
    if inv2 <= 1e-14:
        raise DegenerateStateError("cat components cancel")
    return 1.0 / math.sqrt(inv2)


def dfs_state(kind: str, kappa: float, n_trunc: int = DEFAULT_N_TRUNC, v: complex = 0.0,
              w: complex = 0.0, phi: float = 0.0, tail_tol: float = 1e-8) -> TwoModeDensityMatrix:
    """States built from the B mode alone.

    ``fock``: one B photon, (|0,1> - kappa|1,0>)/sqrt(1+kappa^2).
    ``coherent``: |-kappa v>|v>.
    ``cat``: N(|-kappa v>|v> + e^{i phi}|-kappa w>|w>).
    """
    d = n_trunc + 1
    if kind == "fock":
        psi = np.zeros(d * d, dtype=complex)
        psi[0 * d + 1] = 1.0
        psi[1 * d + 0] = -kappa
        psi /= math.sqrt(1.0 + kappa**2)
    elif kind == "coherent":
        psi = _product_ket(-kappa * v, v, n_trunc, tail_tol)
    elif kind == "cat":
        norm = cat_normalization(kappa, v, w, phi)
        psi = norm * (
            _product_ket(-kappa * v, v, n_trunc, tail_tol)
            + np.exp(1j * phi) * _product_ket(-kappa * w, w, n_trunc, tail_tol)
        )
    else:
        raise ValueError(f"unknown DFS state kind {kind!r}")
    # renormalize away the (checked) truncation tail
    psi = psi / np.linalg.norm(psi)
    return TwoModeDensityMatrix(np.outer(psi, psi.conj()), n_trunc)


def _rotated(rho: np.ndarray, nB: np.ndarray, theta: float) -> np.ndarray:
    w, v = np.linalg.eigh(nB)
    U = (v * np.exp(-1j * theta * w)) @ dag(v)
    return U @ rho @ dag(U)


def fidelity_modulo_rotation(rho: TwoModeDensityMatrix, ref: TwoModeDensityMatrix,
                             nB: np.ndarray) -> float:
    """max over theta of F(rho, e^{-i theta nB} ref e^{i theta nB})."""
    def neg(theta):
        return -fidelity(rho, TwoModeDensityMatrix(_rotated(ref.data, nB, theta), ref.n_trunc))

    grid = np.linspace(0, 2 * math.pi, 65)[:-1]
    vals = [neg(t) for t in grid]
    i = int(np.argmin(vals))
    step = grid[1] - grid[0]
    res = minimize_scalar(neg, bounds=(grid[i] - step, grid[i] + step), method="bounded",
                          options={"xatol": 1e-12})
    return max(-res.fun, -vals[i])


@dataclass
class InvarianceReport:
    times: np.ndarray
    kappa: float
    purity: dict[str, np.ndarray] = field(default_factory=dict)
    fidelity: dict[str, np.ndarray] = field(default_factory=dict)
    nA: dict[str, np.ndarray] = field(default_factory=dict)
    nB: dict[str, np.ndarray] = field(default_factory=dict)

    def min_purity(self, method: str) -> float:
        return float(self.purity[method].min())

    def min_fidelity(self, method: str) -> float:
        return float(self.fidelity[method].min())

    def nB_drift(self, method: str) -> float:
        x = self.nB[method]
        return float(np.abs(x - x[0]).max())

    def nA_decay(self, method: str) -> float:
        x = self.nA[method]
        return float(x[0] - x[-1])

    def summary(self) -> dict:
        out = {"kappa": self.kappa}
        for m in self.purity:
            out[m] = {
                "min_purity": self.min_purity(m),
                "min_fidelity": self.min_fidelity(m),
                "nB_drift": self.nB_drift(m),
                "nA_decay": self.nA_decay(m),
            }
        return out


def dfs_invariance_test(state: TwoModeDensityMatrix, params: SystemParams, t_grid,
                        kappa: float | None = None,
                        methods: tuple[str, ...] = ("analytic", "oracle"),
                        oracle_cfg: IntegratorConfig = IntegratorConfig()) -> InvarianceReport:
    """Track purity, rotated fidelity and normal-mode populations over ``t_grid``."""
    if kappa is None:
        kappa = dfs_check(params).kappa_fit
    n_trunc = state.n_trunc
    modes = NormalModes.build(kappa, n_trunc)
    nA_op = dag(modes.A_matrix) @ modes.A_matrix
    nB_op = dag(modes.B_matrix) @ modes.B_matrix
    times = np.asarray(t_grid, dtype=float)
    report = InvarianceReport(times, kappa)
    for method in methods:
        if method == "analytic":
            traj = [propagate_analytic(state, params, float(t)) for t in times]
        elif method == "oracle":
            traj = integrate_grid(state, build_liouvillian(params, n_trunc), times, oracle_cfg)
        else:
            raise ValueError(f"unknown method {method!r}")
        report.purity[method] = np.array([r.purity() for r in traj])
        report.fidelity[method] = np.array([fidelity_modulo_rotation(r, state, nB_op) for r in traj])
        report.nA[method] = np.array([r.expect(nA_op).real for r in traj])
        report.nB[method] = np.array([r.expect(nB_op).real for r in traj])
    return report


def ratio_scan(params: SystemParams, cfg, ratios, T, evaluate=None):
    """Fringes at zero splitting for k12 = k21 = ratio * sqrt(k11 k22).

    ``evaluate(model, params, cfg, T)`` defaults to the closed-form general
    fringe. Returns ({ratio: values}, {ratio: DfsReport}).
    """
    from .experiment import pe_dissipative

    g = math.sqrt(params.k11 * params.k22)
    curves, reports = {}, {}
    for ratio in ratios:
        p = params.with_(k12=ratio * g, k21=ratio * g, omega1=0.0, omega2=0.0)
        if evaluate is None:
            curves[ratio] = np.asarray(pe_dissipative(np.asarray(T, dtype=float), p, cfg))
        else:
            curves[ratio] = np.asarray(evaluate("general", p, cfg, T))
        reports[ratio] = dfs_check(p)
    return curves, reports
