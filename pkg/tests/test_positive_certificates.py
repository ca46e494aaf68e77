import itertools

import numpy as np
import pytest

from src.algorithms.value_methods import Trace, run_vc, run_vi
from src.certificates.positive import (
    ConditionKind,
    LyapunovKind,
    VcCertificate,
    certificate_to_dict,
    construct_vc_certificate,
    copositive_split_bound,
    lyapunov_trace,
    rounding_level,
    verify_common_g,
    verify_common_nu,
    verify_lp_left,
    verify_lp_right,
    verify_positive,
    verify_sdp,
    verify_switched_linf,
)
from src.mdp.bellman import optimal_value, selected_kernel
from src.mdp.instances import random_mdp, random_policy, single_action_mdp
from src.mdp.model import Mdp, induce_policy
from src.utils.errors import (
    KindUnavailable,
    NonPositiveNu,
    NonPositiveXi,
    NotPositiveDefinite,
    TooLarge,
)

from conftest import induce_single


@pytest.fixture
def reducible_ind():
    return induce_single(single_action_mdp(np.eye(2), [1.0, 0.0], 0.9))


class TestConstruction:
    def test_stationary_certificate(self, biased_ind):
        cert = construct_vc_certificate(biased_ind)
        np.testing.assert_array_equal(cert.xi, [1.0, 1.0])
        np.testing.assert_allclose(cert.nu, [2 / 3, 1 / 3], atol=1e-14)
        np.testing.assert_allclose(cert.g, np.diag([2 / 3, 1 / 3]), atol=1e-14)
        assert not cert.restricted

    def test_reducible_chain_gives_xi_only(self, reducible_ind):
        cert = construct_vc_certificate(reducible_ind)
        assert cert.restricted
        assert cert.g is None
        np.testing.assert_array_equal(cert.xi, [1.0, 1.0])

    def test_to_dict(self, biased_ind, reducible_ind):
        full = certificate_to_dict(construct_vc_certificate(biased_ind))
        assert full["restricted"] is False
        assert full["g_diag"] == pytest.approx([2 / 3, 1 / 3])
        restricted = certificate_to_dict(construct_vc_certificate(reducible_ind))
        assert restricted["nu"] is None
        assert restricted["g_diag"] is None


class TestSinglePolicyConditions:
    def test_lp_conditions_hold_with_zero_margin(self, biased_ind):
        cert = construct_vc_certificate(biased_ind)
        a = biased_ind.a_pi()
        for report in (
            verify_lp_right(a, cert.xi, 0.9),
            verify_lp_left(a, cert.nu, 0.9),
            verify_sdp(a, cert.g, 0.9),
        ):
            assert report.satisfied
            assert not report.strict
            assert report.margin == pytest.approx(0.0, abs=1e-12)

    def test_lp_right_strict_for_larger_rate(self, biased_ind):
        report = verify_lp_right(biased_ind.a_pi(), np.ones(2), 0.95)
        assert report.kind is ConditionKind.LP_RIGHT
        assert report.margin == pytest.approx(0.05)
        assert report.strict

    def test_lp_fails_below_gamma(self, biased_ind):
        cert = construct_vc_certificate(biased_ind)
        assert not verify_lp_left(biased_ind.a_pi(), cert.nu, 0.8).satisfied

    def test_uniform_weights_fail_on_biased_chain(self, biased_ind):
        report = verify_sdp(biased_ind.a_pi(), np.diag([0.5, 0.5]), 0.9)
        assert not report.satisfied
        assert report.margin < -1e-3

    def test_uniform_weights_on_uniform_chain(self, two_state_ind):
        report = verify_sdp(two_state_ind.a_pi(), np.diag([0.5, 0.5]), 0.9)
        assert report.satisfied
        assert report.margin == pytest.approx(0.0, abs=1e-12)

    def test_sdp_holds_for_random_policies(self):
        for seed in range(10):
            mdp = random_mdp(6, 3, 0.9, seed=seed)
            ind = induce_policy(mdp, random_policy(6, 3, seed=seed))
            cert = construct_vc_certificate(ind)
            assert verify_sdp(ind.a_pi(), cert.g, 0.9).satisfied
            assert verify_lp_left(ind.a_pi(), cert.nu, 0.9).satisfied

    def test_non_positive_weights(self, biased_ind):
        a = biased_ind.a_pi()
        with pytest.raises(NonPositiveXi):
            verify_lp_right(a, [1.0, 0.0], 0.9)
        with pytest.raises(NonPositiveNu):
            verify_lp_left(a, [1.0, -1.0], 0.9)
        with pytest.raises(NotPositiveDefinite):
            verify_sdp(a, np.diag([1.0, 0.0]), 0.9)

    def test_positive(self, biased_ind):
        report = verify_positive(biased_ind.a_pi())
        assert report.satisfied
        assert report.margin == pytest.approx(0.09)
        assert not verify_positive([[0.5, -0.1], [0.0, 0.5]]).satisfied


def kernel_with_row_sums(total: float) -> Mdp:
    p = np.full((2, 2, 2), total / 2)
    return Mdp(p=p, r=np.zeros((2, 2)), gamma=0.9)


class TestSwitchedConditions:
    def test_stochastic_rows_zero_margin(self):
        report = verify_switched_linf(random_mdp(5, 3, 0.9, seed=1))
        assert report.satisfied
        assert report.margin == pytest.approx(0.0, abs=1e-12)

    def test_substochastic_rows(self):
        report = verify_switched_linf(kernel_with_row_sums(0.9))
        assert report.margin == pytest.approx(0.09)
        assert report.strict

    def test_superstochastic_rows(self):
        report = verify_switched_linf(kernel_with_row_sums(1.1))
        assert report.margin == pytest.approx(-0.09)
        assert not report.satisfied

    def test_common_nu_is_worst_over_modes(self):
        mdp = random_mdp(3, 2, 0.9, seed=4)
        nu = np.array([0.5, 0.3, 0.2])
        common = verify_common_nu(mdp, nu)
        margins = []
        for mode in itertools.product(range(2), repeat=3):
            p_m, _ = selected_kernel(mdp, np.asarray(mode))
            margins.append(verify_lp_left(mdp.gamma * p_m, nu, mdp.gamma).margin)
        assert common.margin <= min(margins) + 1e-14

    def test_common_nu_single_action_matches_lp_left(self, biased_ind):
        mdp = single_action_mdp([[0.9, 0.1], [0.2, 0.8]], [1.0, 0.0], 0.9)
        nu = np.array([2 / 3, 1 / 3])
        assert verify_common_nu(mdp, nu).margin == pytest.approx(
            verify_lp_left(biased_ind.a_pi(), nu, 0.9).margin, abs=1e-15
        )

    def test_common_g_single_action_matches_sdp(self, biased_ind):
        mdp = single_action_mdp([[0.9, 0.1], [0.2, 0.8]], [1.0, 0.0], 0.9)
        g = np.diag([2 / 3, 1 / 3])
        assert verify_common_g(mdp, g).margin == pytest.approx(
            verify_sdp(biased_ind.a_pi(), g, 0.9).margin, abs=1e-15
        )

    def test_common_g_enumeration_limit(self):
        with pytest.raises(TooLarge):
            verify_common_g(random_mdp(5, 3, 0.9, seed=0), np.eye(5), max_modes=100)


class TestLyapunovTraces:
    def test_vc_rates(self, biased_ind):
        cert = construct_vc_certificate(biased_ind)
        trace = run_vc(biased_ind, np.array([3.0, -4.0]), 50)
        for kind in LyapunovKind:
            result = lyapunov_trace(trace, biased_ind.j_pi, cert, kind)
            assert result.rate_ok, kind
        v2 = lyapunov_trace(trace, biased_ind.j_pi, cert, "V2")
        assert v2.worst_ratio == pytest.approx(1.0, abs=1e-9)
        assert v2.target == 0.9
        assert lyapunov_trace(trace, biased_ind.j_pi, cert, "V3").target == pytest.approx(0.81)

    def test_start_at_fixed_point_tests_nothing(self, biased_ind):
        cert = construct_vc_certificate(biased_ind)
        trace = run_vc(biased_ind, biased_ind.j_pi, 10)
        result = lyapunov_trace(trace, biased_ind.j_pi, cert, LyapunovKind.V1)
        assert result.worst_ratio == 0.0
        assert result.rate_ok

    def test_floor_follows_rounding_level(self, biased_ind):
        cert = construct_vc_certificate(biased_ind)
        trace = run_vc(biased_ind, biased_ind.j_pi + 1e3, 10)
        result = lyapunov_trace(trace, biased_ind.j_pi, cert, LyapunovKind.V1)
        delta = rounding_level(trace, biased_ind.j_pi, 0.9)
        assert result.floor == pytest.approx(max(1e-13, delta))
        assert result.floor < 1e-9

    def test_growth_far_below_start_is_caught(self):
        trace = Trace(iterates=np.array([[1.0], [0.9], [1e-6], [1e-3]]))
        cert = VcCertificate(xi=np.ones(1), nu=None, g=None, gamma=0.9)
        result = lyapunov_trace(trace, np.zeros(1), cert, LyapunovKind.V1)
        assert not result.rate_ok
        assert result.worst_ratio > 1e3

    def test_rounding_sized_wiggle_passes(self):
        trace = Trace(iterates=np.array([[1.0], [0.9], [1e-14], [2e-14]]))
        cert = VcCertificate(xi=np.ones(1), nu=None, g=None, gamma=0.9)
        assert lyapunov_trace(trace, np.zeros(1), cert, LyapunovKind.V1).rate_ok

    def test_vi_v1_rate(self):
        mdp = random_mdp(5, 3, 0.9, seed=12, zero_rewards=True)
        j_star, _ = optimal_value(mdp)
        trace = run_vi(mdp, np.linspace(1.0, 2.0, 5), 60)
        cert = construct_vc_certificate(induce_single(single_action_mdp(np.eye(5), np.zeros(5), 0.9)))
        assert lyapunov_trace(trace, j_star, cert, LyapunovKind.V1).rate_ok

    def test_restricted_certificate(self, reducible_ind):
        cert = construct_vc_certificate(reducible_ind)
        trace = run_vc(reducible_ind, np.zeros(2), 20)
        assert lyapunov_trace(trace, reducible_ind.j_pi, cert, "V1").rate_ok
        with pytest.raises(KindUnavailable):
            lyapunov_trace(trace, reducible_ind.j_pi, cert, "V2")
        with pytest.raises(KindUnavailable):
            lyapunov_trace(trace, reducible_ind.j_pi, cert, "V3")

    def test_to_dict_marks_available(self, biased_ind):
        cert = construct_vc_certificate(biased_ind)
        trace = run_vc(biased_ind, np.zeros(2), 5)
        entry = lyapunov_trace(trace, biased_ind.j_pi, cert, "V3").to_dict()
        assert entry["available"] is True
        assert entry["kind"] == "V3"
        assert len(entry["values"]) == 6


class TestSplitBound:
    def test_mixed_sign_start(self):
        mdp = random_mdp(6, 2, 0.9, seed=3)
        ind = induce_policy(mdp, random_policy(6, 2, seed=3))
        cert = construct_vc_certificate(ind)
        holds, worst = copositive_split_bound(ind, np.array([1.0, -2.0, 0.5, -0.5, 3.0, -1.0]), 40, cert)
        assert holds
        assert 0.0 <= worst <= 1.0 + 1e-9

    def test_nonnegative_start_is_tight(self, biased_ind):
        cert = construct_vc_certificate(biased_ind)
        holds, worst = copositive_split_bound(biased_ind, np.array([1.0, 2.0]), 20, cert)
        assert holds
        assert worst == pytest.approx(1.0, abs=1e-12)

    def test_needs_nu(self, reducible_ind):
        cert = construct_vc_certificate(reducible_ind)
        with pytest.raises(KindUnavailable):
            copositive_split_bound(reducible_ind, np.ones(2), 5, cert)


class TestNonnegativeOrthant:
    def test_vc_keeps_nonnegative_errors_nonnegative(self):
        for seed in range(30):
            mdp = random_mdp(8, 3, (0.5, 0.9, 0.99)[seed % 3], seed=1100 + seed, sparsity=0.3)
            ind = induce_policy(mdp, random_policy(8, 3, seed=1200 + seed))
            zeta0 = np.random.default_rng(seed).uniform(0.0, 3.0, 8)
            zeta0[seed % 8] = 0.0
            zetas = run_vc(ind, ind.j_pi + zeta0, 50).iterates - ind.j_pi
            scale = 1e-12 * (1 + np.max(np.abs(ind.j_pi)))
            assert np.all(zetas >= -scale), seed

    def test_exact_with_zero_rewards(self):
        mdp = random_mdp(6, 2, 0.9, seed=5, zero_rewards=True)
        ind = induce_policy(mdp, random_policy(6, 2, seed=6))
        iterates = run_vc(ind, np.linspace(0.0, 1.0, 6), 80).iterates
        assert np.all(iterates >= 0.0)
