"""
MDP and policy data model.

Internally states and actions are 0-based; every JSON surface (inputs,
reports, CSV traces) uses the 1-based convention of the input schema.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional

import numpy as np

from config.settings import config
from src.mdp.chain import ChainStructure, chain_structure, stationary_distribution
from src.numerics.linalg import inf_norm, solve_linear
from src.utils.errors import (
    InvalidGamma,
    InvalidKernel,
    InvalidPolicy,
    ShapeMismatch,
    UnknownField,
)

logger = logging.getLogger(__name__)

MDP_FIELDS = ("num_states", "num_actions", "gamma", "transitions", "rewards")
POLICY_FIELDS = ("pi", "deterministic")


@dataclass(frozen=True)
class Mdp:
    """Finite discounted MDP (S, A, P, R, γ)."""

    p: np.ndarray  # shape (n, l, n): p[s, a] is the row P((s,a), ·)
    r: np.ndarray  # shape (n, l)
    gamma: float

    @property
    def n(self) -> int:
        return self.p.shape[0]

    @property
    def l(self) -> int:  # noqa: E743
        return self.p.shape[1]

    def action_matrix(self, a: int) -> np.ndarray:
        """Contiguous n×n transition matrix of action ``a`` at every state."""
        return np.ascontiguousarray(self.p[:, a, :])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "num_states": self.n,
            "num_actions": self.l,
            "gamma": self.gamma,
            "transitions": self.p.tolist(),
            "rewards": self.r.tolist(),
        }


@dataclass(frozen=True)
class Policy:
    """Stochastic policy, one probability row over actions per state."""

    pi: np.ndarray  # shape (n, l)

    @classmethod
    def deterministic(cls, actions, num_actions: int) -> "Policy":
        """One-hot policy from 0-based action indices."""
        actions = np.asarray(actions, dtype=int)
        pi = np.zeros((len(actions), num_actions))
        pi[np.arange(len(actions)), actions] = 1.0
        return cls(pi)

    def to_dict(self) -> Dict[str, Any]:
        return {"pi": self.pi.tolist()}


@dataclass(frozen=True)
class PolicyInduced:
    """Markov chain and value function induced by a policy."""

    p_pi: np.ndarray
    r_pi: np.ndarray
    omega: Optional[np.ndarray]  # present only for irreducible chains
    j_pi: np.ndarray
    gamma: float
    structure: ChainStructure

    @property
    def n(self) -> int:
        return self.p_pi.shape[0]

    def a_pi(self) -> np.ndarray:
        """Error dynamics matrix A_π = γP_π."""
        return self.gamma * self.p_pi


def _unknown_fields(raw: Mapping[str, Any], allowed) -> List[str]:
    return sorted(set(raw) - set(allowed))


def _count(value: Any, name: str) -> int:
    """Integer count from JSON; integral floats such as 3.0 are accepted."""
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ShapeMismatch(f"{name} must be an integer, got {value!r}")
    if isinstance(value, float) and not value.is_integer():
        raise ShapeMismatch(f"{name} must be an integer, got {value!r}")
    return int(value)


def validate_mdp(raw: Mapping[str, Any], row_tol: Optional[float] = None) -> Mdp:
    """
    Validate raw MDP data (the JSON schema field names) and build an Mdp.

    Every violated invariant is collected before raising, so a single call
    reports all bad rows at once.

    Args:
        raw: Mapping with num_states, num_actions, gamma, transitions, rewards
        row_tol: Allowed deviation of row sums from 1. If None, uses config default.

    Returns:
        Validated Mdp

    Raises:
        UnknownField, ShapeMismatch, InvalidKernel, InvalidGamma
    """
    row_tol = config.STOCHASTIC_ROW_TOL if row_tol is None else row_tol

    if not isinstance(raw, Mapping):
        raise ShapeMismatch("MDP data must be a JSON object")

    unknown = _unknown_fields(raw, MDP_FIELDS)
    if unknown:
        raise UnknownField(f"unknown MDP fields: {', '.join(unknown)}", unknown)
    missing = [f for f in MDP_FIELDS if f not in raw]
    if missing:
        raise ShapeMismatch(f"missing MDP fields: {', '.join(missing)}", missing)

    try:
        n = _count(raw["num_states"], "num_states")
        l = _count(raw["num_actions"], "num_actions")  # noqa: E741
        p = np.asarray(raw["transitions"], dtype=float)
        r = np.asarray(raw["rewards"], dtype=float)
        gamma = float(raw["gamma"])
    except (TypeError, ValueError) as e:
        raise ShapeMismatch(f"MDP fields have the wrong type: {e}") from e

    shape_errors = []
    if n < 1 or l < 1:
        shape_errors.append(f"num_states={n} and num_actions={l} must be positive")
    if p.shape != (n, l, n):
        shape_errors.append(f"transitions has shape {p.shape}, expected {(n, l, n)}")
    if r.shape != (n, l):
        shape_errors.append(f"rewards has shape {r.shape}, expected {(n, l)}")
    if shape_errors:
        raise ShapeMismatch("MDP arrays do not match the declared sizes", shape_errors)

    kernel_errors = []
    for s in range(n):
        for a in range(l):
            row = p[s, a]
            if not np.all(np.isfinite(row)):
                kernel_errors.append(f"row (state {s + 1}, action {a + 1}) has non-finite entries")
                continue
            negative = np.flatnonzero(row < 0)
            for t in negative:
                kernel_errors.append(
                    f"row (state {s + 1}, action {a + 1}) has negative entry {row[t]!r} "
                    f"at next state {t + 1}"
                )
            total = float(row.sum())
            if abs(total - 1.0) > row_tol:
                kernel_errors.append(
                    f"row (state {s + 1}, action {a + 1}) sums to {total!r}"
                )
    if not np.all(np.isfinite(r)):
        kernel_errors.append("rewards contain non-finite entries")

    gamma_errors = []
    if not (0.0 < gamma < 1.0):
        gamma_errors.append(f"gamma={gamma!r} is outside (0, 1)")

    if kernel_errors:
        raise InvalidKernel(
            f"{len(kernel_errors)} transition-kernel violation(s)", kernel_errors + gamma_errors
        )
    if gamma_errors:
        raise InvalidGamma(gamma_errors[0], gamma_errors)

    return Mdp(p=p, r=r, gamma=gamma)


def validate_policy(
    raw: Mapping[str, Any], n: int, l: int, row_tol: Optional[float] = None  # noqa: E741
) -> Policy:
    """
    Validate a policy given as {"pi": [...]} or {"deterministic": [...]}.

    Deterministic actions are 1-based, as in the JSON schema.
    """
    row_tol = config.STOCHASTIC_ROW_TOL if row_tol is None else row_tol

    if not isinstance(raw, Mapping):
        raise ShapeMismatch("policy data must be a JSON object")
    unknown = _unknown_fields(raw, POLICY_FIELDS)
    if unknown:
        raise UnknownField(f"unknown policy fields: {', '.join(unknown)}", unknown)
    if ("pi" in raw) == ("deterministic" in raw):
        raise InvalidPolicy("policy must have exactly one of 'pi' or 'deterministic'")

    if "deterministic" in raw:
        actions = list(raw["deterministic"])
        if len(actions) != n:
            raise ShapeMismatch(f"deterministic policy has {len(actions)} entries, expected {n}")
        bad = [
            f"state {s + 1}: action {a!r} not in 1..{l}"
            for s, a in enumerate(actions)
            if not isinstance(a, int) or isinstance(a, bool) or not 1 <= a <= l
        ]
        if bad:
            raise InvalidPolicy("deterministic policy has invalid actions", bad)
        return Policy.deterministic([a - 1 for a in actions], l)

    try:
        pi = np.asarray(raw["pi"], dtype=float)
    except (TypeError, ValueError) as e:
        raise ShapeMismatch(f"policy 'pi' has the wrong type: {e}") from e
    if pi.shape != (n, l):
        raise ShapeMismatch(f"policy has shape {pi.shape}, expected {(n, l)}")

    errors = []
    for s in range(n):
        row = pi[s]
        if not np.all(np.isfinite(row)) or np.any(row < 0):
            errors.append(f"state {s + 1}: entries must be finite and non-negative")
        elif abs(float(row.sum()) - 1.0) > row_tol:
            errors.append(f"state {s + 1}: probabilities sum to {float(row.sum())!r}")
    if errors:
        raise InvalidPolicy(f"{len(errors)} policy row violation(s)", errors)
    return Policy(pi)


def induce_policy(mdp: Mdp, policy: Policy) -> PolicyInduced:
    """
    Build P_π, R_π, the stationary distribution ω and the exact value J_π.

    Args:
        mdp: Validated MDP
        policy: Validated policy with matching dimensions

    Returns:
        PolicyInduced; omega is None when P_π is reducible
    """
    if policy.pi.shape != (mdp.n, mdp.l):
        raise ShapeMismatch(
            f"policy has shape {policy.pi.shape}, MDP needs {(mdp.n, mdp.l)}"
        )

    p_pi = np.einsum("sa,sat->st", policy.pi, mdp.p)
    r_pi = np.sum(policy.pi * mdp.r, axis=1)

    j_pi = solve_linear(np.eye(mdp.n) - mdp.gamma * p_pi, r_pi)
    residual = inf_norm(j_pi - r_pi - mdp.gamma * (p_pi @ j_pi))
    if residual > config.BELLMAN_RESIDUAL_TOL:
        logger.warning("Bellman residual of J_pi is %.3e", residual)

    structure = chain_structure(p_pi)
    omega = stationary_distribution(p_pi) if structure.irreducible else None
    if omega is None:
        logger.info("Induced chain is reducible; no stationary distribution is attached")

    return PolicyInduced(
        p_pi=p_pi,
        r_pi=r_pi,
        omega=omega,
        j_pi=j_pi,
        gamma=mdp.gamma,
        structure=structure,
    )
