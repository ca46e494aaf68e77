import itertools
import logging
from typing import List, Optional, Tuple

import numpy as np

from config.settings import config
from src.mdp.model import Mdp, Policy
from src.numerics.linalg import inf_norm, solve_linear
from src.utils.errors import NonConvergence, TooLarge

logger = logging.getLogger(__name__)


def action_values(mdp: Mdp, j: np.ndarray) -> np.ndarray:
    """Q(s, a) = R(s, a) + γ Σ_s' P((s,a), s') J(s'), shape (n, l)."""
    j = np.asarray(j, dtype=float)
    q = np.empty((mdp.n, mdp.l))
    for a in range(mdp.l):
        q[:, a] = mdp.gamma * (mdp.action_matrix(a) @ j) + mdp.r[:, a]
    return q


def bellman_optimality(mdp: Mdp, j: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Apply the Bellman optimality operator T.

    Args:
        mdp: Validated MDP
        j: Value vector of length n

    Returns:
        Tuple of (T(J), selector) where selector[s] is the 0-based greedy
        action; ties go to the smallest action index.
    """
    q = action_values(mdp, j)
    selector = np.argmax(q, axis=1)  # first maximum wins
    return q[np.arange(mdp.n), selector], selector


def selected_kernel(mdp: Mdp, selector: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(P_σ, R_σ) for a per-state action selector."""
    rows = np.arange(mdp.n)
    return np.ascontiguousarray(mdp.p[rows, selector, :]), mdp.r[rows, selector]


def evaluate_selector(mdp: Mdp, selector: np.ndarray) -> np.ndarray:
    """Exact value of the deterministic policy given by ``selector``."""
    p_sel, r_sel = selected_kernel(mdp, selector)
    return solve_linear(np.eye(mdp.n) - mdp.gamma * p_sel, r_sel)


def greedy_policy(mdp: Mdp, j: np.ndarray) -> Policy:
    """One-hot policy greedy with respect to ``j``."""
    _, selector = bellman_optimality(mdp, j)
    return Policy.deterministic(selector, mdp.l)


def optimal_value(mdp: Mdp) -> Tuple[np.ndarray, Policy]:
    """
    Compute J* and a greedy optimal policy by policy iteration.

    An action is only replaced when another action improves on it by more
    than rounding noise, so the loop cannot cycle between tied actions.
    The returned policy is the smallest-index greedy selector at J*.

    Args:
        mdp: Validated MDP

    Returns:
        Tuple of (J*, π*)

    Raises:
        NonConvergence: more than lⁿ improvement steps
    """
    max_iterations = mdp.l ** mdp.n
    selector = np.argmax(mdp.r, axis=1)
    rows = np.arange(mdp.n)

    iteration = 0
    while True:
        iteration += 1
        if iteration > max_iterations:
            raise NonConvergence(f"policy iteration exceeded {max_iterations} steps")

        j = evaluate_selector(mdp, selector)
        q = action_values(mdp, j)
        current = q[rows, selector]
        best = np.argmax(q, axis=1)
        noise = 1e-12 * (1.0 + np.abs(current))
        improve = q[rows, best] > current + noise
        if not np.any(improve):
            break
        selector = np.where(improve, best, selector)

    t_j, greedy = bellman_optimality(mdp, j)
    residual = inf_norm(t_j - j)
    if residual > config.BELLMAN_RESIDUAL_TOL:
        logger.warning("Optimal Bellman residual %.3e above tolerance", residual)
    logger.debug("Policy iteration converged in %d steps", iteration)
    return j, Policy.deterministic(greedy, mdp.l)


def deterministic_policy_values(
    mdp: Mdp, max_policies: Optional[int] = None
) -> List[Tuple[Tuple[int, ...], np.ndarray]]:
    """
    Exact values of all lⁿ deterministic policies (brute-force J* oracle).

    Args:
        mdp: Validated MDP
        max_policies: Enumeration guard. If None, uses config default.

    Returns:
        List of (0-based action tuple, J_π)
    """
    max_policies = config.MAX_ENUMERATED_POLICIES if max_policies is None else max_policies
    count = mdp.l ** mdp.n
    if count > max_policies:
        raise TooLarge(f"{count} deterministic policies exceed the limit of {max_policies}")

    return [
        (actions, evaluate_selector(mdp, np.asarray(actions)))
        for actions in itertools.product(range(mdp.l), repeat=mdp.n)
    ]
