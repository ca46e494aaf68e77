import numpy as np
import pandas as pd
import pytest

from src.algorithms.value_methods import (
    make_feature_map,
    run_sandwich,
    run_td0,
    run_td0_batch,
    run_vc,
    run_vi,
    run_vi_until,
    sandwich_violation,
    trace_to_frame,
    write_trace_csv,
)
from src.mdp.bellman import bellman_optimality, optimal_value
from src.mdp.instances import (
    random_features,
    random_mdp,
    scalar_features,
    single_action_mdp,
    two_state_demo,
    uniform_chain_mdp,
)
from src.mdp.model import Policy, induce_policy, validate_mdp, validate_policy
from src.utils.errors import FeatureRankDeficient, NotErgodic, ShapeMismatch

from conftest import DEMO_DIR, induce_single


def three_state_ind():
    import json

    mdp = validate_mdp(json.loads((DEMO_DIR / "three_state_mdp.json").read_text()))
    policy = validate_policy(json.loads((DEMO_DIR / "three_state_policy.json").read_text()), 3, 2)
    return induce_policy(mdp, policy)


class TestValueComputation:
    def test_two_hand_steps(self, two_state_ind):
        trace = run_vc(two_state_ind, np.zeros(2), 2)
        np.testing.assert_allclose(trace.iterates[1], [1.0, 0.0])
        np.testing.assert_allclose(trace.iterates[2], [1.45, 0.45], atol=1e-15)
        assert trace.switching is None

    def test_fixed_point_is_constant(self, two_state_ind):
        trace = run_vc(two_state_ind, two_state_ind.j_pi, 20)
        np.testing.assert_allclose(trace.iterates, np.tile(two_state_ind.j_pi, (21, 1)), atol=1e-12)

    def test_error_recursion_is_exact(self):
        mdp = random_mdp(8, 3, 0.9, seed=1)
        ind = induce_policy(mdp, Policy.deterministic(np.zeros(8, dtype=int), 3))
        trace = run_vc(ind, np.ones(8), 50)
        zeta = trace.iterates - ind.j_pi
        np.testing.assert_allclose(zeta[1:], (ind.a_pi() @ zeta[:-1].T).T, atol=1e-12)

    def test_zero_rewards_decay(self):
        ind = induce_single(single_action_mdp([[0.3, 0.7], [0.6, 0.4]], [0.0, 0.0], 0.8))
        trace = run_vc(ind, np.array([1.0, -2.0]), 30)
        norms = np.max(np.abs(trace.iterates), axis=1)
        assert np.all(norms <= 0.8 ** np.arange(31) * 2.0 * (1 + 1e-12))

    def test_wrong_j0_shape(self, two_state_ind):
        with pytest.raises(ShapeMismatch):
            run_vc(two_state_ind, np.zeros(3), 5)


class TestValueIteration:
    def test_single_action_matches_vc_bitwise(self, two_state, two_state_ind):
        vi = run_vi(two_state, np.array([0.3, -1.0]), 40)
        vc = run_vc(two_state_ind, np.array([0.3, -1.0]), 40)
        np.testing.assert_array_equal(vi.iterates, vc.iterates)
        assert np.all(vi.switching == 0)

    def test_start_at_optimum(self):
        mdp = random_mdp(6, 3, 0.9, seed=5)
        j_star, pi_star = optimal_value(mdp)
        trace = run_vi(mdp, j_star, 10)
        np.testing.assert_allclose(trace.iterates, np.tile(j_star, (11, 1)), atol=1e-10)
        assert np.all(trace.switching == np.argmax(pi_star.pi, axis=1))

    def test_contraction_rate(self):
        mdp = random_mdp(6, 3, 0.9, seed=6)
        j_star, _ = optimal_value(mdp)
        trace = run_vi(mdp, np.zeros(6), 80)
        errors = np.max(np.abs(trace.iterates - j_star), axis=1)
        slack = 1e-12 * (1 + np.max(np.abs(j_star)))
        assert np.all(errors <= 0.9 ** np.arange(81) * errors[0] * (1 + 1e-9) + slack)

    def test_monotone_from_below(self):
        mdp = random_mdp(5, 3, 0.9, seed=9)
        j0 = np.full(5, mdp.r.min() / (1 - mdp.gamma))
        t_j0, _ = bellman_optimality(mdp, j0)
        assert np.all(t_j0 >= j0 - 1e-12)
        trace = run_vi(mdp, j0, 60)
        assert np.all(np.diff(trace.iterates, axis=0) >= -1e-12)

    def test_run_until_tolerance(self):
        mdp = random_mdp(6, 3, 0.9, seed=2)
        trace = run_vi_until(mdp, np.zeros(6), 1e-8)
        last_change = np.max(np.abs(trace.iterates[-1] - trace.iterates[-2]))
        assert last_change <= 1e-8
        assert trace.switching.shape == (trace.steps, 6)


class TestSandwich:
    def test_start_at_optimum_is_constant(self):
        mdp = random_mdp(5, 2, 0.9, seed=3)
        j_star, _ = optimal_value(mdp)
        sandwich = run_sandwich(mdp, j_star, 10, j_star=j_star)
        for traj in (sandwich.j.iterates, sandwich.j_upper, sandwich.j_lower):
            np.testing.assert_allclose(traj, np.tile(j_star, (11, 1)), atol=1e-10)

    def test_zero_reward_mdp(self):
        mdp = random_mdp(5, 3, 0.9, seed=4, zero_rewards=True)
        sandwich = run_sandwich(mdp, np.linspace(-1.0, 1.0, 5), 40)
        np.testing.assert_array_equal(sandwich.j_star, np.zeros(5))
        assert sandwich_violation(sandwich) <= 1e-12

    @pytest.mark.parametrize("seed", range(20))
    def test_containment(self, seed):
        mdp = random_mdp(6, 3, 0.9, seed=100 + seed)
        j0 = np.random.default_rng(seed).uniform(-5.0, 5.0, 6)
        sandwich = run_sandwich(mdp, j0, 50)
        assert sandwich_violation(sandwich) <= 1e-9
        np.testing.assert_array_equal(sandwich.j_upper[0], j0)
        np.testing.assert_array_equal(sandwich.j_lower[0], j0)


class TestFeatureMap:
    def test_full_rank(self):
        features = make_feature_map(random_features(5, 3, seed=1), 5)
        assert (features.n, features.d) == (5, 3)

    def test_rank_deficient(self):
        with pytest.raises(FeatureRankDeficient) as e:
            make_feature_map([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
        assert any("lambda_min" in d for d in e.value.details)

    def test_too_many_columns(self):
        with pytest.raises(ShapeMismatch):
            make_feature_map(np.eye(2, 3))

    def test_wrong_row_count(self):
        with pytest.raises(ShapeMismatch):
            make_feature_map(scalar_features(3), 2)


class TestTd0:
    def test_zero_rewards_stay_at_zero(self):
        ind = induce_single(uniform_chain_mdp(3, 0.9))
        features = make_feature_map(random_features(3, 2, seed=0))
        trace = run_td0(ind, features, 0.5, np.zeros(2), 200, seed=1)
        np.testing.assert_array_equal(trace.iterates, np.zeros((201, 2)))

    def test_reproducible(self):
        ind = three_state_ind()
        features = make_feature_map(random_features(3, 2, seed=0))
        a = run_td0(ind, features, 0.1, np.zeros(2), 500, seed=42)
        b = run_td0(ind, features, 0.1, np.zeros(2), 500, seed=42)
        np.testing.assert_array_equal(a.iterates, b.iterates)
        np.testing.assert_array_equal(a.visited, b.visited)

    def test_samples_follow_the_chain(self):
        p = [[0.5, 0.0, 0.5], [0.5, 0.5, 0.0], [0.0, 0.5, 0.5]]
        ind = induce_single(single_action_mdp(p, [1.0, 0.0, 0.0], 0.9))
        features = make_feature_map(scalar_features(3))
        trace = run_td0(ind, features, 0.01, np.zeros(1), 20000, seed=3)
        transitions = set(zip(trace.visited[:-1].tolist(), trace.visited[1:].tolist()))
        assert (0, 1) not in transitions
        assert (1, 2) not in transitions
        assert (2, 0) not in transitions
        frequencies = np.bincount(trace.visited, minlength=3) / len(trace.visited)
        np.testing.assert_allclose(frequencies, ind.omega, atol=0.02)

    def test_stable_stepsize_stays_bounded(self, two_state_ind):
        features = make_feature_map(scalar_features(2))
        trace = run_td0(two_state_ind, features, 19.0, np.zeros(1), 100000, seed=0)
        assert not trace.diverged
        assert np.max(np.abs(trace.iterates)) < 1e3

    def test_unstable_stepsize_diverges(self, two_state_ind):
        features = make_feature_map(scalar_features(2))
        trace = run_td0(two_state_ind, features, 21.0, np.zeros(1), 5000, seed=0)
        assert np.max(np.abs(trace.iterates)) > 1e6

    def test_periodic_chain_rejected(self):
        ind = induce_single(single_action_mdp([[0.0, 1.0], [1.0, 0.0]], [1.0, 0.0], 0.9))
        features = make_feature_map(scalar_features(2))
        with pytest.raises(NotErgodic):
            run_td0(ind, features, 0.1, np.zeros(1), 10, seed=0)

    def test_non_positive_stepsize(self, two_state_ind):
        features = make_feature_map(scalar_features(2))
        with pytest.raises(ValueError):
            run_td0(two_state_ind, features, 0.0, np.zeros(1), 10, seed=0)

    def test_batch_uses_derived_seeds_in_order(self):
        ind = three_state_ind()
        features = make_feature_map(random_features(3, 2, seed=2))
        serial = run_td0_batch(ind, features, 0.2, np.zeros(2), 100, runs=4, seed=10, workers=1)
        threaded = run_td0_batch(ind, features, 0.2, np.zeros(2), 100, runs=4, seed=10, workers=3)
        for i, (a, b) in enumerate(zip(serial, threaded)):
            np.testing.assert_array_equal(a.iterates, b.iterates)
            single = run_td0(ind, features, 0.2, np.zeros(2), 100, seed=10 + i)
            np.testing.assert_array_equal(a.visited, single.visited)


class TestTraceExport:
    def test_vi_frame_columns(self):
        trace = run_vi(two_state_demo(), np.zeros(2), 3)
        frame = trace_to_frame(trace)
        assert list(frame.columns) == ["k", "J1", "J2", "sigma1", "sigma2"]
        assert len(frame) == 4
        assert frame["sigma1"].iloc[0] == 1
        assert pd.isna(frame["sigma1"].iloc[-1])

    def test_td_frame_has_states(self, two_state_ind):
        features = make_feature_map(scalar_features(2))
        trace = run_td0(two_state_ind, features, 1.0, np.zeros(1), 5, seed=0)
        frame = trace_to_frame(trace)
        assert list(frame.columns) == ["k", "theta1", "s_k"]
        assert frame["s_k"].between(1, 2).all()

    def test_write_csv(self, tmp_path, two_state_ind):
        path = tmp_path / "trace.csv"
        trace = run_vc(two_state_ind, np.zeros(2), 10)
        write_trace_csv(trace, path)
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["k", "J1", "J2"]
        np.testing.assert_array_equal(frame[["J1", "J2"]].to_numpy(), trace.iterates)
