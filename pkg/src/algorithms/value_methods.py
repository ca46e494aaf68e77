"""
Value computation (VC), value iteration (VI), the VI sandwich envelope and
TD(0) with linear function approximation.

Random sampling contract for TD(0): ``numpy.random.default_rng(seed)`` (PCG64)
produces one vector ``u = rng.random(k + 1)``. The start state is the
inverse-CDF image of ``u[0]`` under ω, and s_{t+1} is the inverse-CDF image of
``u[t + 1]`` under the row P_π(s_t, ·). Inverse-CDF means the smallest index
whose cumulative probability exceeds ``u`` (scaled by the row total).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd
from scipy import linalg as sla

from config.settings import config
from src.mdp.bellman import bellman_optimality, optimal_value, selected_kernel
from src.mdp.model import Mdp, PolicyInduced
from src.numerics.linalg import inf_norm, sym_eig_extremes
from src.utils.errors import FeatureRankDeficient, NotErgodic, ShapeMismatch

logger = logging.getLogger(__name__)



@dataclass
class Trace:
    """Iterates of a value method, plus switching and sampled states when present."""

    iterates: np.ndarray  # shape (K+1, dim)
    switching: Optional[np.ndarray] = None  # shape (K, n), 0-based actions
    visited: Optional[np.ndarray] = None  # shape (K+1,), 0-based states
    label: str = "J"  # column prefix: J for values, theta for weights
    diverged: bool = False

    @property
    def steps(self) -> int:
        return self.iterates.shape[0] - 1


@dataclass
class SandwichTrace:
    """VI trajectory bracketed by two linear positive systems."""

    j: Trace
    j_upper: np.ndarray
    j_lower: np.ndarray
    p_star_selector: np.ndarray
    j_star: np.ndarray


@dataclass(frozen=True)
class FeatureMap:
    """Feature matrix Φ; row s is φ(s)ᵀ."""

    phi: np.ndarray

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    @property
    def d(self) -> int:
        return self.phi.shape[1]


def make_feature_map(phi, n: Optional[int] = None, rank_tol: Optional[float] = None) -> FeatureMap:
    """
    Validate a feature matrix and wrap it.

    Full column rank is required: λ_min(ΦᵀΦ) must exceed rank_tol² and the
    smallest singular value of Φ must exceed rank_tol·max(1, σ_max).

    Raises:
        ShapeMismatch: wrong number of rows or d > n
        FeatureRankDeficient: Φ is (numerically) rank deficient
    """
    rank_tol = config.FEATURE_RANK_TOL if rank_tol is None else rank_tol
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2 or phi.shape[1] < 1:
        raise ShapeMismatch(f"features must be an n×d matrix, got shape {phi.shape}")
    if n is not None and phi.shape[0] != n:
        raise ShapeMismatch(f"features have {phi.shape[0]} rows, MDP has {n} states")
    if phi.shape[1] > phi.shape[0]:
        raise ShapeMismatch(f"feature dimension d={phi.shape[1]} exceeds n={phi.shape[0]}")
    if not np.all(np.isfinite(phi)):
        raise ShapeMismatch("features contain NaN or Inf entries")

    gram = sym_eig_extremes(phi.T @ phi)
    singular = sla.svdvals(phi)
    if gram.lambda_min <= rank_tol**2 or singular[-1] <= rank_tol * max(1.0, singular[0]):
        raise FeatureRankDeficient(
            "feature matrix does not have full column rank",
            [
                f"lambda_min(PhiᵀPhi) = {gram.lambda_min:.3e}",
                f"smallest singular value = {singular[-1]:.3e} (largest {singular[0]:.3e})",
            ],
        )
    return FeatureMap(phi)


def run_vc(pi_ind: PolicyInduced, j0, k: int) -> Trace:
    """
    Value computation J_{t+1} = γP_πJ_t + R_π for t < k.

    Args:
        pi_ind: Induced chain quantities
        j0: Initial value vector
        k: Number of steps

    Returns:
        Trace with k+1 iterates
    """
    j0 = np.asarray(j0, dtype=float)
    if j0.shape != (pi_ind.n,):
        raise ShapeMismatch(f"j0 has shape {j0.shape}, expected ({pi_ind.n},)")

    p_pi = np.ascontiguousarray(pi_ind.p_pi)
    iterates = np.empty((k + 1, pi_ind.n))
    iterates[0] = j0
    for t in range(k):
        iterates[t + 1] = pi_ind.gamma * (p_pi @ iterates[t]) + pi_ind.r_pi
    return Trace(iterates=iterates)


def run_vi(mdp: Mdp, j0, k: int) -> Trace:
    """
    Value iteration J_{t+1} = T(J_t), recording the greedy selector σ_t.

    Args:
        mdp: Validated MDP
        j0: Initial value vector
        k: Number of steps

    Returns:
        Trace with k+1 iterates and k selectors
    """
    j0 = np.asarray(j0, dtype=float)
    if j0.shape != (mdp.n,):
        raise ShapeMismatch(f"j0 has shape {j0.shape}, expected ({mdp.n},)")

    iterates = np.empty((k + 1, mdp.n))
    switching = np.empty((k, mdp.n), dtype=int)
    iterates[0] = j0
    for t in range(k):
        iterates[t + 1], switching[t] = bellman_optimality(mdp, iterates[t])
    return Trace(iterates=iterates, switching=switching)


def run_vi_until(mdp: Mdp, j0, tol: float, max_k: Optional[int] = None) -> Trace:
    """
    Value iteration until ‖J_{k+1} − J_k‖∞ ≤ tol (or max_k steps).
    """
    max_k = config.VI_MAX_STEPS if max_k is None else max_k
    j = np.asarray(j0, dtype=float)
    if j.shape != (mdp.n,):
        raise ShapeMismatch(f"j0 has shape {j.shape}, expected ({mdp.n},)")

    iterates = [j]
    switching = []
    for _ in range(max_k):
        j_next, selector = bellman_optimality(mdp, iterates[-1])
        iterates.append(j_next)
        switching.append(selector)
        if inf_norm(j_next - iterates[-2]) <= tol:
            break
    else:
        logger.warning("Value iteration did not reach tol=%.1e within %d steps", tol, max_k)

    return Trace(
        iterates=np.array(iterates),
        switching=np.array(switching, dtype=int).reshape(len(switching), mdp.n),
    )


def sandwich_from_trace(
    mdp: Mdp, trace: Trace, j_star: np.ndarray, p_star_selector: np.ndarray
) -> SandwichTrace:
    """Bounding trajectories driven by the switching sequence of a VI trace."""
    j_star = np.asarray(j_star, dtype=float)
    p_star, _ = selected_kernel(mdp, p_star_selector)
    k = trace.steps

    upper = np.empty_like(trace.iterates)
    lower = np.empty_like(trace.iterates)
    upper[0] = lower[0] = trace.iterates[0]
    for t in range(k):
        p_sigma, _ = selected_kernel(mdp, trace.switching[t])
        upper[t + 1] = j_star + mdp.gamma * (p_sigma @ (upper[t] - j_star))
        lower[t + 1] = j_star + mdp.gamma * (p_star @ (lower[t] - j_star))

    return SandwichTrace(
        j=trace,
        j_upper=upper,
        j_lower=lower,
        p_star_selector=np.asarray(p_star_selector),
        j_star=j_star,
    )


def run_sandwich(
    mdp: Mdp,
    j0,
    k: int,
    j_star: Optional[np.ndarray] = None,
    p_star_selector: Optional[np.ndarray] = None,
) -> SandwichTrace:
    """
    Run VI together with its upper (switched) and lower (P*) envelopes.

    Args:
        mdp: Validated MDP
        j0: Common initial vector J₀ = J₀ᵘ = J₀ᵒ
        k: Number of steps
        j_star: Optimal value. If None, computed by policy iteration.
        p_star_selector: Greedy selector at J*. If None, derived from j_star.

    Returns:
        SandwichTrace
    """
    if j_star is None:
        j_star, _ = optimal_value(mdp)
    if p_star_selector is None:
        _, p_star_selector = bellman_optimality(mdp, j_star)
    return sandwich_from_trace(mdp, run_vi(mdp, j0, k), j_star, p_star_selector)


def sandwich_violation(sandwich: SandwichTrace) -> float:
    """
    Largest violation of Jᵒ_k ≤ J_k ≤ Jᵘ_k over all steps and states.

    Subtracting J* from all three sides leaves the inequality unchanged, so
    the comparison is made directly on the value vectors. Non-positive
    results mean the envelope holds.
    """
    j = sandwich.j.iterates
    below = np.max(sandwich.j_lower - j)
    above = np.max(j - sandwich.j_upper)
    return float(max(below, above))


def _inverse_cdf(cdf: np.ndarray, u: float) -> int:
    index = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(index, len(cdf) - 1)


def run_td0(
    pi_ind: PolicyInduced,
    features: FeatureMap,
    alpha: float,
    theta0,
    k: int,
    seed: int,
    divergence_cap: Optional[float] = None,
) -> Trace:
    """
    TD(0) with linear function approximation along one sampled trajectory.

    θ_{t+1} = θ_t − α φ(s_t)((φ(s_t) − γφ(s_{t+1}))ᵀθ_t − R_π(s_t))

    Args:
        pi_ind: Induced chain (must be irreducible and aperiodic)
        features: Feature map with n rows
        alpha: Constant stepsize, alpha > 0
        theta0: Initial weights (length d)
        k: Number of updates
        seed: RNG seed (see module docstring for the sampling contract)
        divergence_cap: Weight magnitude at which the run is abandoned.
                        If None, uses config default.

    Returns:
        Trace of weights (label "theta") with the visited states. A run whose
        weights reach divergence_cap stops early with diverged=True.
    """
    if not pi_ind.structure.aperiodic:
        raise NotErgodic(
            "TD(0) sampling needs an irreducible aperiodic chain",
            [f"irreducible={pi_ind.structure.irreducible}, period={pi_ind.structure.period}"],
        )
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if features.n != pi_ind.n:
        raise ShapeMismatch(f"features have {features.n} rows, chain has {pi_ind.n} states")

    theta = np.array(theta0, dtype=float)
    if theta.shape != (features.d,):
        raise ShapeMismatch(f"theta0 has shape {theta.shape}, expected ({features.d},)")

    divergence_cap = config.TD_DIVERGENCE_CAP if divergence_cap is None else divergence_cap

    rng = np.random.default_rng(seed)
    u = rng.random(k + 1)
    omega_cdf = np.cumsum(pi_ind.omega)
    row_cdfs = np.cumsum(pi_ind.p_pi, axis=1)

    phi = [np.ascontiguousarray(row) for row in features.phi]
    r_pi = pi_ind.r_pi
    gamma = pi_ind.gamma

    iterates = np.empty((k + 1, features.d))
    visited = np.empty(k + 1, dtype=int)
    iterates[0] = theta
    s = _inverse_cdf(omega_cdf, u[0])
    visited[0] = s

    for t in range(k):
        s_next = _inverse_cdf(row_cdfs[s], u[t + 1])
        td_error = (phi[s] - gamma * phi[s_next]) @ theta - r_pi[s]
        theta = theta - alpha * td_error * phi[s]
        iterates[t + 1] = theta
        visited[t + 1] = s_next
        s = s_next
        if not np.all(np.abs(theta) < divergence_cap):
            logger.debug("TD(0) run with seed %d diverged at step %d", seed, t + 1)
            return Trace(
                iterates=iterates[: t + 2],
                visited=visited[: t + 2],
                label="theta",
                diverged=True,
            )

    return Trace(iterates=iterates, visited=visited, label="theta")


def run_td0_batch(
    pi_ind: PolicyInduced,
    features: FeatureMap,
    alpha: float,
    theta0,
    k: int,
    runs: int,
    seed: int,
    workers: Optional[int] = None,
) -> List[Trace]:
    """
    Independent TD(0) runs with derived seeds seed+i, returned in index order.

    Args:
        workers: Thread count. If None, uses config default; 1 runs inline.
    """
    workers = config.MC_WORKERS if workers is None else workers

    def one(i: int) -> Trace:
        return run_td0(pi_ind, features, alpha, theta0, k, seed + i)

    if workers <= 1:
        return [one(i) for i in range(runs)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(runs)))


def trace_to_frame(trace: Trace) -> pd.DataFrame:
    """
    Tabulate a trace: one row per iteration with columns k, J1..Jn (or
    theta1..thetad), sigma1..sigman and s_k when present. Actions and states
    are written 1-based; the last iterate has no selector (left empty).
    """
    steps = trace.iterates.shape[0]
    frame = pd.DataFrame({"k": np.arange(steps)})
    for i in range(trace.iterates.shape[1]):
        frame[f"{trace.label}{i + 1}"] = trace.iterates[:, i]
    if trace.switching is not None:
        for s in range(trace.switching.shape[1]):
            column = np.full(steps, np.nan)
            column[: trace.switching.shape[0]] = trace.switching[:, s] + 1
            frame[f"sigma{s + 1}"] = pd.array(column, dtype="Int64")
    if trace.visited is not None:
        frame["s_k"] = trace.visited + 1
    return frame


def write_trace_csv(trace: Trace, path) -> None:
    """Write a trace table to CSV with full float round-trip precision."""
    trace_to_frame(trace).to_csv(path, index=False, float_format="%.17g")
    logger.info("Wrote %d trace rows to %s", trace.iterates.shape[0], path)
