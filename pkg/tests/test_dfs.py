import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dfs_cavity.core import SystemParams, TruncationError, TwoModeDensityMatrix, from_ket, pure_state, random_pure, photon_sector, vacuum
from dfs_cavity.dfs import (
    NormalModes,
    NotOnDfsManifoldError,
    cat_normalization,
    dfs_check,
    dfs_invariance_test,
    dfs_params,
    dfs_state,
    fit_kappa,
    manifold_residual,
    normal_mode_split,
    ratio_scan,
)
from dfs_cavity.experiment import ExperimentConfig
from dfs_cavity.generator import build_liouvillian
from dfs_cavity.oracle import integrate_grid


class TestCheck:
    @pytest.mark.parametrize("k11,k22", [(0.1, 0.1), (0.04, 0.09), (1.0, 2.25)])
    def test_protected_branch(self, k11, k22):
        g = math.sqrt(k11 * k22)
        rep = dfs_check(SystemParams(k11=k11, k22=k22, k12=g, k21=g))
        assert rep.protected
        assert rep.condition_residual <= 1e-12
        assert rep.kappa_fit == pytest.approx(math.sqrt(k22 / k11), rel=1e-9)

    def test_decoupled(self):
        rep = dfs_check(SystemParams(k11=0.1, k22=0.3))
        assert not rep.protected
        assert sorted([rep.lambda_minus.real, rep.lambda_plus.real]) == pytest.approx([-0.3, -0.1])

    def test_below_threshold(self):
        g = 0.9 * math.sqrt(0.1 * 0.2)
        rep = dfs_check(SystemParams(k11=0.1, k22=0.2, k12=g, k21=g))
        assert not rep.protected
        assert rep.lambda_minus.real < 0 and rep.lambda_plus.real < 0

    @given(st.floats(0.01, 1.0), st.floats(0.0, 3.0), st.floats(-0.1, 0.1))
    def test_fit_recovers_kappa(self, k11, kappa, d11):
        p = dfs_params(k11, kappa, omega=1.0, delta11=d11)
        fitted, res = fit_kappa(p)
        assert fitted == pytest.approx(kappa, abs=1e-7)
        assert res <= 1e-9 * max(1.0, kappa**2) * k11
        assert manifold_residual(p, kappa) <= 1e-12


class TestNormalModes:
    @pytest.mark.parametrize("kappa", [0.0, 0.5, 1.0, 2.0])
    def test_split_reproduces_generator(self, kappa):
        p = dfs_params(0.07, kappa, omega=1.2, delta11=0.01)
        L_A, L_B, _ = normal_mode_split(p, kappa, 2)
        L = build_liouvillian(p, 2)
        assert np.abs(L.matrix - L_A.matrix - L_B.matrix).max() <= 1e-10

    def test_zero_kappa_decouples(self):
        p = dfs_params(0.1, 0.0, omega=1.0)
        L_A, L_B, _ = normal_mode_split(p, 0.0, 1)
        ref_A = build_liouvillian(SystemParams(omega1=1.0, k11=0.1), 1)
        ref_B = build_liouvillian(SystemParams(omega2=1.0), 1)
        np.testing.assert_allclose(L_A.matrix, ref_A.matrix, atol=1e-14)
        np.testing.assert_allclose(L_B.matrix, ref_B.matrix, atol=1e-14)

    @pytest.mark.parametrize("kappa", [0.0, 0.7, 2.0])
    def test_commutators(self, kappa):
        assert NormalModes.build(kappa, 3).commutator_residual(3) <= 1e-12

    def test_off_manifold(self):
        with pytest.raises(NotOnDfsManifoldError):
            normal_mode_split(SystemParams(k11=0.1, k22=0.1, k12=0.05, k21=0.1), 1.0, 1)

    def test_lossy_mode_decay_rate(self):
        kappa, k = 2.0, 0.05
        p = dfs_params(k, kappa, omega=1.0)
        modes = NormalModes.build(kappa, 1)
        psi = np.zeros(4, dtype=complex)
        psi[2], psi[1] = 1.0, kappa  # A^dag |0,0>, unnormalized
        rho0 = from_ket(psi / np.linalg.norm(psi), 1)
        nA = modes.A_matrix.conj().T @ modes.A_matrix
        t = np.linspace(0.5, 4.0, 8)
        traj = integrate_grid(rho0, build_liouvillian(p, 1), t)
        y = np.log([r.expect(nA).real for r in traj])
        rate = -np.polyfit(t, y, 1)[0]
        assert rate == pytest.approx(2 * (1 + kappa**2) * k, rel=0.01)


class TestStates:
    def test_fock_singlet(self):
        rho = dfs_state("fock", 1.0, 1)
        ref = pure_state([((0, 1), 1 / math.sqrt(2)), ((1, 0), -1 / math.sqrt(2))], 1)
        np.testing.assert_allclose(rho.data, ref.data, atol=1e-15)
        A = NormalModes.build(1.0, 1).A_matrix
        assert abs(rho.expect(A.conj().T @ A)) < 1e-15

    def test_fock_zero_kappa(self):
        np.testing.assert_allclose(dfs_state("fock", 0.0, 2).data, pure_state([((0, 1), 1.0)], 2).data)

    def test_even_cat(self):
        kappa, v, N = 0.8, 0.4 + 0.2j, 8
        rho = dfs_state("cat", kappa, N, v=v, w=-v, phi=0.0)
        TwoModeDensityMatrix(rho.data, N).validate()
        # normalization from a direct inner product of truncated kets
        def coh(a):
            n = np.arange(N + 1)
            return np.exp(-abs(a) ** 2 / 2) * a**n / np.sqrt([math.factorial(k) for k in n])
        k1 = np.kron(coh(-kappa * v), coh(v))
        k2 = np.kron(coh(kappa * v), coh(-v))
        direct = 2 + 2 * np.vdot(k1, k2).real
        assert cat_normalization(kappa, v, -v, 0.0) ** -2 == pytest.approx(direct, rel=1e-8)

    def test_coherent_tail_error(self):
        with pytest.raises(TruncationError):
            dfs_state("coherent", 1.0, 2, v=1.5)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            dfs_state("squeezed", 1.0, 2)

    @given(st.floats(0.0, 2.0), st.complex_numbers(max_magnitude=0.3))
    def test_coherent_is_b_mode_only(self, kappa, v):
        N = 7
        rho = dfs_state("coherent", kappa, N, v=v)
        A = NormalModes.build(kappa, N).A_matrix
        assert abs(rho.expect(A.conj().T @ A)) < 1e-7


class TestInvariance:
    def _params(self, k=0.1, omega=1.0):
        return dfs_params(k, 1.0, omega=omega)

    def test_fock_state_is_protected(self):
        p = self._params()
        rep = dfs_invariance_test(dfs_state("fock", 1.0, 1), p, np.linspace(0, 100, 6))
        for m in ("analytic", "oracle"):
            assert rep.min_purity(m) >= 1 - 1e-8
            assert rep.nB_drift(m) <= 1e-8
            assert rep.min_fidelity(m) >= 1 - 1e-8

    def test_vacuum_trivial(self):
        rep = dfs_invariance_test(vacuum(1), self._params(), [0.0, 5.0, 50.0], kappa=1.0)
        for m in ("analytic", "oracle"):
            assert rep.min_purity(m) == pytest.approx(1.0, abs=1e-14)
            assert rep.nB_drift(m) < 1e-14 and abs(rep.nA_decay(m)) < 1e-14

    def test_contrast_state_decoheres(self):
        rep = dfs_invariance_test(pure_state([((1, 0), 1.0)], 1), self._params(), np.linspace(0, 30, 4))
        for m in ("analytic", "oracle"):
            assert rep.min_purity(m) < 0.9
            assert rep.nA_decay(m) > 0.4

    @given(st.integers(0, 2**32 - 1))
    def test_b_number_conserved_for_any_state(self, seed):
        rng = np.random.default_rng(seed)
        p = dfs_params(0.08, 1.5, omega=0.9, delta11=0.01)
        rho0 = random_pure(photon_sector(1, 2) + photon_sector(2, 2), 2, rng)
        rep = dfs_invariance_test(rho0, p, [0.0, 10.0, 40.0], kappa=1.5, methods=("analytic",))
        assert rep.nB_drift("analytic") <= 1e-8

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            dfs_invariance_test(vacuum(1), self._params(), [1.0], methods=("euler",))


def test_ratio_scan_order_and_limits():
    k = 0.1
    cfg = ExperimentConfig(delta=0.0, Omega=1.0, Tr_a=5.0, Tr_b=5.0)
    T = cfg.t_prep + np.array([10.0, 20 / k])
    curves, reports = ratio_scan(SystemParams(k11=k, k22=k), cfg, [0.0, 0.5, 0.9, 1.0], T)
    tails = [curves[r][-1] for r in (0.0, 0.5, 0.9, 1.0)]
    assert tails == sorted(tails)
    assert tails[-1] == pytest.approx(0.25, abs=1e-3)
    assert reports[1.0].protected and not reports[0.9].protected
