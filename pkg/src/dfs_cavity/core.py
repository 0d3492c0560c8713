"""Shared domain types for two bosonic modes on a truncated Fock space.

Basis ordering is row-major: ``|n1, n2>`` sits at flat index ``n1*(N+1) + n2``.
Rates and frequencies are plain numbers in whatever reciprocal-time unit the
caller picks; nothing in the package converts units.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields, replace
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_N_TRUNC = 3

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-9


class InvalidDimensionError(ValueError):
    pass


class DegenerateStateError(ValueError):
    pass


class TruncationError(ValueError):
    """A state or operation needs photon numbers above the truncation."""


class DiagnosticsError(RuntimeError):
    """A numerical state check failed (trace, Hermiticity or positivity)."""

    def __init__(self, message: str, eigenvalue: float | None = None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


@dataclass(frozen=True)
class SystemParams:
    """The ten coefficients of the two-mode master equation.

    ``k12``/``k21`` and ``delta12``/``delta21`` are the cross terms through
    which the common reservoir couples the modes.
    """

    omega1: float = 0.0
    omega2: float = 0.0
    k11: float = 0.0
    k22: float = 0.0
    k12: float = 0.0
    k21: float = 0.0
    delta11: float = 0.0
    delta22: float = 0.0
    delta12: float = 0.0
    delta21: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v):
                raise ValueError(f"{f.name} must be finite, got {v!r}")
            object.__setattr__(self, f.name, float(v))
        if self.k11 < 0 or self.k22 < 0:
            raise ValueError("k11 and k22 must be non-negative")

    def jump_matrix(self) -> np.ndarray:
        """Hermitian matrix J with L_jump(rho) = sum_ij J[i, j] a_i rho a_j^dag."""
        off = self.k12 + self.k21 + 1j * (self.delta12 - self.delta21)
        return np.array([[2 * self.k11, off], [np.conj(off), 2 * self.k22]])

    @property
    def physical(self) -> bool:
        # reduces to k12**2 <= k11*k22 when k12 == k21 and delta12 == delta21
        J = self.jump_matrix()
        scale = max(np.abs(J).max(), 1e-300)
        return bool(np.linalg.eigvalsh(J).min() >= -1e-12 * scale)

    @property
    def max_rate(self) -> float:
        return max(abs(self.k11), abs(self.k22), abs(self.k12), abs(self.k21))

    @property
    def max_coefficient(self) -> float:
        return max(abs(getattr(self, f.name)) for f in fields(self))

    def swapped(self) -> "SystemParams":
        """Same physics with the mode labels exchanged."""
        return SystemParams(
            omega1=self.omega2, omega2=self.omega1,
            k11=self.k22, k22=self.k11, k12=self.k21, k21=self.k12,
            delta11=self.delta22, delta22=self.delta11,
            delta12=self.delta21, delta21=self.delta12,
        )

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class FockIndex:
    n1: int
    n2: int

    def flat(self, n_trunc: int) -> int:
        return flatten(self.n1, self.n2, n_trunc)


def _check_n_trunc(n_trunc: int) -> int:
    if int(n_trunc) != n_trunc or n_trunc < 1:
        raise InvalidDimensionError(f"N_trunc must be an integer >= 1, got {n_trunc!r}")
    return int(n_trunc)


def flatten(n1: int, n2: int, n_trunc: int) -> int:
    if not (0 <= n1 <= n_trunc and 0 <= n2 <= n_trunc):
        raise IndexError(f"|{n1},{n2}> outside truncation N={n_trunc}")
    return n1 * (n_trunc + 1) + n2


def unflatten(index: int, n_trunc: int) -> tuple[int, int]:
    d = n_trunc + 1
    if not 0 <= index < d * d:
        raise IndexError(f"flat index {index} outside 0..{d * d - 1}")
    return divmod(index, d)


def ladder(n_trunc: int) -> np.ndarray:
    """Single-mode annihilation operator on {|0>, ..., |N>}."""
    n_trunc = _check_n_trunc(n_trunc)
    return np.diag(np.sqrt(np.arange(1, n_trunc + 1, dtype=float)), 1)


def mode_operators(n_trunc: int = DEFAULT_N_TRUNC) -> tuple[np.ndarray, np.ndarray]:
    """Annihilation operators ``(a1, a2)`` on the truncated two-mode space."""
    a = ladder(n_trunc)
    eye = np.eye(n_trunc + 1)
    return np.kron(a, eye), np.kron(eye, a)


def number_operators(n_trunc: int = DEFAULT_N_TRUNC) -> tuple[np.ndarray, np.ndarray]:
    a1, a2 = mode_operators(n_trunc)
    return a1.T @ a1, a2.T @ a2


def dag(x: np.ndarray) -> np.ndarray:
    return x.conj().T


@dataclass(frozen=True, eq=False)
class TwoModeDensityMatrix:
    """Density operator on the truncated two-mode space (read-only array)."""

    data: np.ndarray
    n_trunc: int

    def __post_init__(self):
        n = _check_n_trunc(self.n_trunc)
        arr = np.array(self.data, dtype=complex)
        d = (n + 1) ** 2
        if arr.shape != (d, d):
            raise InvalidDimensionError(f"expected shape {(d, d)}, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "n_trunc", n)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.data).real)

    def purity(self) -> float:
        return float(np.einsum("ij,ji->", self.data, self.data).real)

    def expect(self, op: np.ndarray) -> complex:
        return complex(np.einsum("ij,ji->", op, self.data))

    def element(self, bra: tuple[int, int], ket: tuple[int, int]) -> complex:
        """<bra| rho |ket>."""
        i = flatten(*bra, self.n_trunc)
        j = flatten(*ket, self.n_trunc)
        return complex(self.data[i, j])

    def population(self, n1: int, n2: int) -> float:
        return self.element((n1, n2), (n1, n2)).real

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.data + dag(self.data)))

    def vec(self) -> np.ndarray:
        return self.data.reshape(-1)

    @classmethod
    def from_vec(cls, v: np.ndarray, n_trunc: int) -> "TwoModeDensityMatrix":
        d = (n_trunc + 1) ** 2
        return cls(np.asarray(v).reshape(d, d), n_trunc)

    def validate(
        self,
        positivity_tol: float = POSITIVITY_TOL,
        hermiticity_tol: float = HERMITICITY_TOL,
        trace_tol: float = TRACE_TOL,
        subnormalized: bool = False,
    ) -> "TwoModeDensityMatrix":
        """Raise DiagnosticsError unless Hermitian, trace-one and positive.

        ``subnormalized=True`` accepts any trace in [0, 1 + 1e-12], for
        sector blocks that leave the vacuum weight out.
        """
        herm = np.abs(self.data - dag(self.data)).max()
        if herm > hermiticity_tol:
            raise DiagnosticsError(f"state not Hermitian: max |rho - rho^dag| = {herm:.3e}")
        tr = self.trace()
        if subnormalized:
            if not -trace_tol <= tr <= 1.0 + 1e-12:
                raise DiagnosticsError(f"trace {tr!r} outside [0, 1]")
        elif abs(tr - 1.0) > trace_tol:
            raise DiagnosticsError(f"trace {tr!r} differs from 1 by more than {trace_tol}")
        lo = float(self.eigenvalues().min())
        if lo < -positivity_tol:
            raise DiagnosticsError(f"negative eigenvalue {lo:.3e}", eigenvalue=lo)
        return self

    def __repr__(self) -> str:
        return f"TwoModeDensityMatrix(n_trunc={self.n_trunc}, trace={self.trace():.12g})"


AmplitudeSpec = Iterable[tuple["FockIndex | tuple[int, int]", complex]]


def ket(amplitudes: AmplitudeSpec, n_trunc: int = DEFAULT_N_TRUNC) -> np.ndarray:
    """Normalized state vector from ``[((n1, n2), amplitude), ...]``."""
    n_trunc = _check_n_trunc(n_trunc)
    psi = np.zeros((n_trunc + 1) ** 2, dtype=complex)
    for idx, amp in amplitudes:
        if isinstance(idx, FockIndex):
            idx = (idx.n1, idx.n2)
        psi[flatten(*idx, n_trunc)] += amp
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise DegenerateStateError("all amplitudes are zero")
    return psi / norm


def pure_state(amplitudes: AmplitudeSpec, n_trunc: int = DEFAULT_N_TRUNC) -> TwoModeDensityMatrix:
    psi = ket(amplitudes, n_trunc)
    return TwoModeDensityMatrix(np.outer(psi, psi.conj()), n_trunc)


def from_ket(psi: np.ndarray, n_trunc: int) -> TwoModeDensityMatrix:
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise DegenerateStateError("zero vector")
    psi = psi / norm
    return TwoModeDensityMatrix(np.outer(psi, psi.conj()), n_trunc)


def vacuum(n_trunc: int = DEFAULT_N_TRUNC) -> TwoModeDensityMatrix:
    return pure_state([((0, 0), 1.0)], n_trunc)


def bell_state(phi: float, n_trunc: int = DEFAULT_N_TRUNC) -> TwoModeDensityMatrix:
    """(e^{i phi}|0,1> + |1,0>)/sqrt(2), the state left by the source atom."""
    return pure_state([((0, 1), np.exp(1j * phi)), ((1, 0), 1.0)], n_trunc)


def tail_population(rho: TwoModeDensityMatrix) -> float:
    """Population sitting on the truncation edge (n1 == N or n2 == N)."""
    N = rho.n_trunc
    pops = np.diag(rho.data).real.reshape(N + 1, N + 1)
    return float(pops[N, :].sum() + pops[:N, N].sum())


def trace_distance(rho: TwoModeDensityMatrix | np.ndarray, sigma: TwoModeDensityMatrix | np.ndarray) -> float:
    a = rho.data if isinstance(rho, TwoModeDensityMatrix) else np.asarray(rho)
    b = sigma.data if isinstance(sigma, TwoModeDensityMatrix) else np.asarray(sigma)
    diff = a - b
    diff = 0.5 * (diff + dag(diff))
    return 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())


def fidelity(rho: TwoModeDensityMatrix, sigma: TwoModeDensityMatrix) -> float:
    """Uhlmann fidelity (squared convention).

    If either argument is pure, this is <psi|other|psi>, evaluated directly:
    square roots of round-off eigenvalues would otherwise add ~1e-8.
    """
    for pure, other in ((rho, sigma), (sigma, rho)):
        w, v = np.linalg.eigh(0.5 * (pure.data + dag(pure.data)))
        if w[-1] > 1 - 1e-10:
            psi = v[:, -1]
            return float(np.real(psi.conj() @ other.data @ psi)) * float(w[-1])
    w, v = np.linalg.eigh(0.5 * (rho.data + dag(rho.data)))
    sq = (v * np.sqrt(np.clip(w, 0, None))) @ dag(v)
    m = sq @ sigma.data @ sq
    ev = np.linalg.eigvalsh(0.5 * (m + dag(m)))
    return float(np.sqrt(np.clip(ev, 0, None)).sum() ** 2)


def symmetrize(data: np.ndarray) -> tuple[np.ndarray, float]:
    """Return ``(rho + rho^dag)/2`` and the norm of the correction applied."""
    sym = 0.5 * (data + dag(data))
    return sym, float(np.abs(sym - data).max())


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return x + dag(x)


def random_pure(
    sector: Sequence[tuple[int, int]], n_trunc: int, rng: np.random.Generator
) -> TwoModeDensityMatrix:
    """Random pure state supported on the given Fock states."""
    amps = rng.normal(size=len(sector)) + 1j * rng.normal(size=len(sector))
    return pure_state(list(zip(sector, amps)), n_trunc)


def photon_sector(total: int, n_trunc: int) -> list[tuple[int, int]]:
    """Fock states with exactly ``total`` photons shared between the modes."""
    return [(n1, total - n1) for n1 in range(total + 1) if n1 <= n_trunc and total - n1 <= n_trunc]

