"""Liouvillian of two modes damped by a common reservoir.

Vectorization is row-major: ``vec(X @ rho @ Y) = kron(X, Y.T) @ vec(rho)``.
So left multiplication by X is ``kron(X, I)`` and right multiplication by Y is
``kron(I, Y.T)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    DEFAULT_N_TRUNC,
    SystemParams,
    TwoModeDensityMatrix,
    dag,
    mode_operators,
)


class NonPhysicalWarning(UserWarning):
    """Jump matrix is not positive semidefinite (k12**2 > k11*k22 style)."""


def left(x: np.ndarray) -> np.ndarray:
    return np.kron(x, np.eye(x.shape[0]))


def right(y: np.ndarray) -> np.ndarray:
    return np.kron(np.eye(y.shape[0]), y.T)


def sandwich(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Superoperator rho -> x @ rho @ y."""
    return np.kron(x, y.T)


def commutator(h: np.ndarray) -> np.ndarray:
    """Superoperator rho -> [h, rho]."""
    return left(h) - right(h)


def dissipator(x: np.ndarray) -> np.ndarray:
    """rho -> 2 x rho x^dag - x^dag x rho - rho x^dag x."""
    xdx = dag(x) @ x
    return 2 * sandwich(x, dag(x)) - left(xdx) - right(xdx)


@dataclass(frozen=True, eq=False)
class LiouvillianMatrix:
    matrix: np.ndarray
    n_trunc: int
    params: SystemParams | None = None
    label: str = ""

    def __post_init__(self):
        self.matrix.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, rho: TwoModeDensityMatrix) -> np.ndarray:
        d = rho.dim
        return (self.matrix @ rho.vec()).reshape(d, d)

    def __add__(self, other: "LiouvillianMatrix") -> "LiouvillianMatrix":
        if other.n_trunc != self.n_trunc:
            raise ValueError("truncations differ")
        return LiouvillianMatrix(self.matrix + other.matrix, self.n_trunc, self.params,
                                 f"{self.label}+{other.label}")

    def __sub__(self, other: "LiouvillianMatrix") -> "LiouvillianMatrix":
        if other.n_trunc != self.n_trunc:
            raise ValueError("truncations differ")
        return LiouvillianMatrix(self.matrix - other.matrix, self.n_trunc, self.params,
                                 f"{self.label}-{other.label}")

    def norm2(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


def build_liouvillian(params: SystemParams, n_trunc: int = DEFAULT_N_TRUNC) -> LiouvillianMatrix:
    """Assemble the master-equation generator term by term.

    The seven coefficient groups are written out exactly as in the master
    equation, with ``left``/``right``/``sandwich`` standing for the operator
    placed before, after, or around rho.
    """
    p = params
    if not p.physical:
        warnings.warn(f"non-physical reservoir coefficients: {p}", NonPhysicalWarning, stacklevel=2)
    a1, a2 = mode_operators(n_trunc)
    a1d, a2d = dag(a1), dag(a2)
    n1, n2 = a1d @ a1, a2d @ a2

    L = p.k11 * (2 * sandwich(a1, a1d) - right(n1) - left(n1))
    L = L + 1j * (p.delta11 - p.omega1) * commutator(n1)
    L = L + p.k22 * (2 * sandwich(a2, a2d) - right(n2) - left(n2))
    L = L + 1j * (p.delta22 - p.omega2) * commutator(n2)
    L = L + p.k12 * (sandwich(a1, a2d) + sandwich(a2, a1d) - right(a2d @ a1) - left(a1d @ a2))
    L = L + p.k21 * (sandwich(a2, a1d) + sandwich(a1, a2d) - right(a1d @ a2) - left(a2d @ a1))
    L = L + 1j * (p.delta12 - p.delta21) / 2 * (
        sandwich(a1, a2d) - sandwich(a2, a1d) - right(a2d @ a1) + left(a1d @ a2)
    )
    L = L + 1j * (p.delta21 - p.delta12) / 2 * (
        sandwich(a2, a1d) - sandwich(a1, a2d) - right(a1d @ a2) + left(a2d @ a1)
    )
    L = L + 1j * (p.delta12 + p.delta21) / 2 * commutator(a1d @ a2 + a2d @ a1)
    return LiouvillianMatrix(L, n_trunc, params, "L")


def swap_permutation(n_trunc: int) -> np.ndarray:
    """Hilbert-space permutation |n1, n2> -> |n2, n1>."""
    d = n_trunc + 1
    P = np.zeros((d * d, d * d))
    for n1 in range(d):
        for n2 in range(d):
            P[n2 * d + n1, n1 * d + n2] = 1.0
    return P


@dataclass(frozen=True)
class ReservoirSpectrum:
    """Discrete reservoir: mode frequencies and their couplings to both cavity modes."""

    omega: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    tau_c: float

    def __post_init__(self):
        om = np.atleast_1d(np.asarray(self.omega, dtype=float))
        a1 = np.atleast_1d(np.asarray(self.alpha1, dtype=complex))
        a2 = np.atleast_1d(np.asarray(self.alpha2, dtype=complex))
        if om.size == 0:
            raise ValueError("reservoir spectrum is empty")
        if not (om.shape == a1.shape == a2.shape):
            raise ValueError("omega, alpha1, alpha2 must have equal length")
        if np.any(om <= 0):
            raise ValueError("reservoir frequencies must be strictly positive")
        if not self.tau_c > 0:
            raise ValueError("tau_c must be positive")
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "alpha1", a1)
        object.__setattr__(self, "alpha2", a2)

    @classmethod
    def factorized(cls, omega: Sequence[float], gamma: Sequence[complex],
                   alpha1: float, alpha2: float, tau_c: float) -> "ReservoirSpectrum":
        """Correlated couplings alpha_ik = alpha_i * gamma_k with real alpha_i."""
        g = np.asarray(gamma, dtype=complex)
        return cls(np.asarray(omega, dtype=float), alpha1 * g, alpha2 * g, tau_c)


def memory_integral(detuning: np.ndarray, tau_c: float) -> np.ndarray:
    """Closed form of int_0^tau_c exp(i x tau) d tau, elementwise in x."""
    x = np.asarray(detuning, dtype=float)
    out = np.empty(x.shape, dtype=complex)
    # sin and half-angle forms avoid the cancellation in exp(i x tau) - 1
    half = 0.5 * x * tau_c
    safe = np.where(x == 0, 1.0, x)
    out.real = np.where(x == 0, tau_c, np.sin(2 * half) / safe)
    out.imag = np.where(x == 0, 0.0, 2 * np.sin(half) ** 2 / safe)
    return out


def coefficients_from_couplings(
    spectrum: ReservoirSpectrum, omega1: float, omega2: float
) -> SystemParams:
    """Rates k_ij and shifts delta_ij generated by a discrete reservoir."""
    alphas = (spectrum.alpha1, spectrum.alpha2)
    integrals = (
        memory_integral(spectrum.omega - omega1, spectrum.tau_c),
        memory_integral(spectrum.omega - omega2, spectrum.tau_c),
    )
    X = np.empty((2, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            X[i, j] = np.sum(alphas[i] * np.conj(alphas[j]) * integrals[j])
    return SystemParams(
        omega1=omega1, omega2=omega2,
        k11=X[0, 0].real, k22=X[1, 1].real, k12=X[0, 1].real, k21=X[1, 0].real,
        delta11=X[0, 0].imag, delta22=X[1, 1].imag,
        delta12=X[0, 1].imag, delta21=X[1, 0].imag,
    )

