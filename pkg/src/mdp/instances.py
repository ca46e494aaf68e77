"""
Seeded instance generators for demos and property tests.

All randomness comes from ``numpy.random.default_rng(seed)``, so an instance
is a fixed function of its arguments.
"""

from typing import Optional, Sequence

import numpy as np

from src.mdp.model import Mdp, Policy


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    return x / x.sum(axis=-1, keepdims=True)


def random_mdp(
    n: int,
    l: int,  # noqa: E741
    gamma: float,
    seed: int,
    sparsity: float = 0.0,
    zero_rewards: bool = False,
) -> Mdp:
    """
    Random MDP with kernel weights uniform on [0.05, 1.05) and rewards uniform on [-1, 1).

    Args:
        n: Number of states
        l: Number of actions
        gamma: Discount factor
        seed: RNG seed
        sparsity: Fraction of kernel entries zeroed (each row keeps at least
                  one entry). With sparsity 0 every induced chain is
                  irreducible and aperiodic.
        zero_rewards: Use R ≡ 0

    Returns:
        Mdp (not re-validated; rows sum to 1 up to rounding)
    """
    rng = np.random.default_rng(seed)
    weights = rng.random((n, l, n)) + 0.05
    if sparsity > 0:
        mask = rng.random((n, l, n)) >= sparsity
        keep = rng.integers(0, n, size=(n, l))
        mask[np.arange(n)[:, None], np.arange(l)[None, :], keep] = True
        weights = weights * mask
    p = _normalize_rows(weights)
    r = np.zeros((n, l)) if zero_rewards else rng.uniform(-1.0, 1.0, size=(n, l))
    return Mdp(p=p, r=r, gamma=gamma)


def random_policy(n: int, l: int, seed: int, deterministic: bool = False) -> Policy:  # noqa: E741
    rng = np.random.default_rng(seed)
    if deterministic:
        return Policy.deterministic(rng.integers(0, l, size=n), l)
    return Policy(_normalize_rows(rng.random((n, l)) + 0.05))


def random_features(n: int, d: int, seed: int) -> np.ndarray:
    """Gaussian n×d feature matrix (full column rank with probability one)."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, d))


def scalar_features(n: int, value: float = 1.0) -> np.ndarray:
    """Constant one-dimensional features φ ≡ value."""
    return np.full((n, 1), float(value))


def single_action_mdp(
    p_pi: np.ndarray, r_pi: Sequence[float], gamma: float
) -> Mdp:
    """Wrap a Markov reward process as a one-action MDP."""
    p_pi = np.asarray(p_pi, dtype=float)
    n = p_pi.shape[0]
    return Mdp(
        p=p_pi.reshape(n, 1, n).copy(),
        r=np.asarray(r_pi, dtype=float).reshape(n, 1).copy(),
        gamma=gamma,
    )


def uniform_chain_mdp(n: int, gamma: float, rewards: Optional[Sequence[float]] = None) -> Mdp:
    """One-action MDP whose chain jumps uniformly; every pair has mass 1/n²."""
    rewards = np.zeros(n) if rewards is None else rewards
    return single_action_mdp(np.full((n, n), 1.0 / n), rewards, gamma)


def two_state_demo(gamma: float = 0.9) -> Mdp:
    """P_π = [[0.5,0.5],[0.5,0.5]], R_π = (1,0)."""
    return uniform_chain_mdp(2, gamma, rewards=[1.0, 0.0])


def three_state_demo(gamma: float = 0.9) -> Mdp:
    """Hand-written 3-state, 2-action MDP used by the VI and TD walkthroughs."""
    p = np.array(
        [
            [[0.9, 0.1, 0.0], [0.2, 0.3, 0.5]],
            [[0.0, 0.6, 0.4], [0.5, 0.5, 0.0]],
            [[0.3, 0.0, 0.7], [0.1, 0.1, 0.8]],
        ]
    )
    r = np.array([[1.0, 0.5], [0.0, 0.2], [-0.5, 0.3]])
    return Mdp(p=p, r=r, gamma=gamma)


def three_state_demo_policy() -> Policy:
    """Mixed policy whose induced chain is irreducible and aperiodic."""
    return Policy(np.array([[0.5, 0.5], [0.25, 0.75], [1.0, 0.0]]))


def three_state_demo_features() -> np.ndarray:
    return np.array([[1.0, 0.0], [0.5, 1.0], [0.0, 1.0]])
