"""
Markov jump linear system view of TD(0) and its mean-square stability certificate.

With z_k = (s_k, s_{k+1}) the TD(0) error ζ_k = θ_k − θ_π obeys

    ζ_{k+1} = H_{z_k} ζ_k + α b_{z_k},     H_i = I + αA_i

where mode i ranges over the pairs with positive stationary mass. The
certificate is G_i = Ḡ + αG̃_i: Ḡ solves the Lyapunov equation of the mean
matrix Ā, and G̃ solves the coupled equations G̃_i − Σ_j p_ij G̃_j = X_i with
G̃_N pinned to zero. The stepsize bound alpha_max keeps every G_i positive
definite and every coupled SDP inequality strict.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from config.settings import config
from src.algorithms.value_methods import FeatureMap, run_td0_batch
from src.mdp.chain import chain_structure
from src.mdp.model import PolicyInduced
from src.numerics.linalg import (
    inf_norm,
    lyapunov_residual,
    solve_continuous_lyapunov,
    solve_linear,
    spectral_radius,
    sym_eig_extremes,
)
from src.utils.errors import NotErgodic, NotHurwitz, SingularAbar, SingularMatrix, TooLarge

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AugmentedChain:
    """Pair chain on 𝒩 = {(s, s') : ω(s)P_π(s, s') > 0}, lexicographic order."""

    states: List[Tuple[int, int]]  # 0-based pairs
    trans: np.ndarray  # N×N, (s,s') → (s',s'') with probability P_π(s',s'')
    p_inf: np.ndarray  # stationary pair mass ω(s)P_π(s,s')

    @property
    def n_pairs(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class MjlsModel:
    """Per-mode matrices of the TD(0) error recursion."""

    a_mats: np.ndarray  # (N, d, d)
    b_vecs: np.ndarray  # (N, d)
    theta_pi: np.ndarray
    a_bar: np.ndarray

    @property
    def d(self) -> int:
        return self.a_bar.shape[0]

    @property
    def n_pairs(self) -> int:
        return self.a_mats.shape[0]

    def h_mats(self, alpha: float) -> np.ndarray:
        """H_i = I + αA_i for every mode."""
        return np.eye(self.d)[None, :, :] + alpha * self.a_mats


@dataclass
class MssCertificate:
    """Explicit candidate {Ḡ + αG̃_i} and the stepsize bounds derived from it."""

    g_bar: np.ndarray
    g_tilde: np.ndarray  # (N, d, d), g_tilde[N-1] = 0
    x_mats: np.ndarray
    m_mats: np.ndarray
    m_tilde_mats: np.ndarray
    g_bar_residual: float  # ‖ĀᵀḠ + ḠĀ + I‖∞
    alpha_bars: Optional[np.ndarray] = None
    g_bar_bounds: Optional[np.ndarray] = None
    alpha_max: float = math.inf


@dataclass
class MssReport:
    """Eigenvalue test of the coupled SDP at one stepsize."""

    alpha: float
    sdp_margins: np.ndarray  # λ_min(G_i − H_iᵀ(Σ_j p_ij G_j)H_i)
    g_min_eigs: np.ndarray  # λ_min(G_i)
    feasible: bool
    oracle_rho: Optional[float] = None
    mse_curve: Optional[np.ndarray] = None

    @property
    def oracle_consistent(self) -> bool:
        """A feasible certificate must not disagree with the oracle."""
        if not self.feasible or self.oracle_rho is None:
            return True
        return self.oracle_rho < 1.0 + config.ORACLE_MSS_SLACK


def build_augmented_chain(
    pi_ind: PolicyInduced, edge_threshold: Optional[float] = None
) -> AugmentedChain:
    """
    Build the pair chain z_k = (s_k, s_{k+1}) restricted to positive mass.

    Args:
        pi_ind: Induced chain; must be irreducible and aperiodic
        edge_threshold: Pairs with P_π(s, s') ≤ threshold are dropped

    Returns:
        AugmentedChain

    Raises:
        NotErgodic: the state chain or the pair chain is not irreducible and aperiodic
    """
    edge_threshold = config.EDGE_THRESHOLD if edge_threshold is None else edge_threshold
    if not pi_ind.structure.aperiodic:
        raise NotErgodic(
            "TD(0) analysis needs an irreducible aperiodic chain",
            [f"irreducible={pi_ind.structure.irreducible}, period={pi_ind.structure.period}"],
        )

    p = pi_ind.p_pi
    omega = pi_ind.omega
    states = [
        (s, t) for s in range(pi_ind.n) for t in range(pi_ind.n) if p[s, t] > edge_threshold
    ]
    index = {pair: i for i, pair in enumerate(states)}

    n_pairs = len(states)
    trans = np.zeros((n_pairs, n_pairs))
    for i, (_, t) in enumerate(states):
        for u in range(pi_ind.n):
            j = index.get((t, u))
            if j is not None:
                trans[i, j] = p[t, u]
    p_inf = np.array([omega[s] * p[s, t] for s, t in states])

    row_error = inf_norm(trans.sum(axis=1) - 1.0)
    if row_error > config.STOCHASTIC_ROW_TOL * pi_ind.n:
        logger.warning("Pair chain rows deviate from 1 by %.3e", row_error)
    stationarity = inf_norm(p_inf @ trans - p_inf)
    if stationarity > config.STATIONARITY_TOL:
        logger.warning("Pair distribution stationarity residual %.3e", stationarity)

    structure = chain_structure(trans, edge_threshold)
    if not structure.aperiodic:
        raise NotErgodic(
            "pair chain is not irreducible and aperiodic on its support",
            [f"irreducible={structure.irreducible}, period={structure.period}"],
        )

    logger.info("Pair chain built with N=%d modes", n_pairs)
    return AugmentedChain(states=states, trans=trans, p_inf=p_inf)


def build_mjls(chain: AugmentedChain, pi_ind: PolicyInduced, features: FeatureMap) -> MjlsModel:
    """
    Per-mode A_i = φ(s)(γφ(s') − φ(s))ᵀ and b_i = φ(s)(R_π(s) − (φ(s) − γφ(s'))ᵀθ_π).

    θ_π solves Āθ_π + Σ_i p_i φ(s)R_π(s) = 0 (the projected Bellman fixed
    point), which makes Σ_i p_i b_i vanish.

    Raises:
        SingularAbar: Ā is singular, so there is no unique fixed point
    """
    phi = features.phi
    gamma = pi_ind.gamma
    src = np.array([s for s, _ in chain.states])
    dst = np.array([t for _, t in chain.states])

    phi_s = phi[src]  # (N, d)
    diff = gamma * phi[dst] - phi_s  # γφ(s') − φ(s)
    a_mats = np.einsum("ia,ib->iab", phi_s, diff)
    a_bar = np.einsum("i,iab->ab", chain.p_inf, a_mats)
    c = np.einsum("i,ia->a", chain.p_inf * pi_ind.r_pi[src], phi_s)

    try:
        theta_pi = solve_linear(a_bar, -c)
    except SingularMatrix as e:
        raise SingularAbar("mean TD matrix A_bar is singular", [e.message]) from e

    b_vecs = phi_s * (pi_ind.r_pi[src] + diff @ theta_pi)[:, None]

    drift = inf_norm(chain.p_inf @ b_vecs)
    if drift > config.BELLMAN_RESIDUAL_TOL * (1.0 + inf_norm(c)):
        logger.warning("Stationary mean of b_i is %.3e, expected 0", drift)

    return MjlsModel(a_mats=a_mats, b_vecs=b_vecs, theta_pi=theta_pi, a_bar=a_bar)


def _sym(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + np.swapaxes(x, -1, -2))


def build_mss_certificate(model: MjlsModel, chain: AugmentedChain) -> MssCertificate:
    """
    Construct Ḡ, G̃_i, X_i, M_i, M̃_i and the stepsize bound.

    G̃ for the first N−1 modes comes from a single LU solve with (I − P̂) over
    all d² matrix positions at once, where P̂ is the leading (N−1)×(N−1)
    block of the pair transition matrix. G̃_N = 0.

    Raises:
        NotHurwitz: λ_min(Ḡ) is not positive, or the Lyapunov equation has no unique solution
    """
    d = model.d
    n_pairs = model.n_pairs

    try:
        g_bar = solve_continuous_lyapunov(model.a_bar)
    except SingularMatrix as e:
        raise NotHurwitz("A_bar has eigenvalues λ, μ with λ + μ = 0", [e.message]) from e
    g_bar_min = sym_eig_extremes(g_bar).lambda_min
    if g_bar_min <= config.POSITIVE_DEFINITE_TOL:
        raise NotHurwitz(
            "A_bar is not Hurwitz",
            [f"lambda_min(G_bar) = {g_bar_min:.6g}"],
        )

    a = model.a_mats
    a_t = np.swapaxes(a, 1, 2)
    eye = np.eye(d)
    x_mats = _sym(a_t @ g_bar + g_bar @ a + eye / (chain.p_inf * n_pairs)[:, None, None])

    g_tilde = np.zeros((n_pairs, d, d))
    if n_pairs > 1:
        p_hat = chain.trans[:-1, :-1]
        rhs = x_mats[:-1].reshape(n_pairs - 1, d * d)
        g_tilde[:-1] = solve_linear(np.eye(n_pairs - 1) - p_hat, rhs).reshape(n_pairs - 1, d, d)
        g_tilde = _sym(g_tilde)

    s_mats = np.einsum("ij,jab->iab", chain.trans, g_tilde)
    m_mats = _sym(-a_t @ g_bar @ a - a_t @ s_mats - s_mats @ a)
    m_tilde_mats = _sym(-a_t @ s_mats @ a)

    cert = MssCertificate(
        g_bar=g_bar,
        g_tilde=g_tilde,
        x_mats=x_mats,
        m_mats=m_mats,
        m_tilde_mats=m_tilde_mats,
        g_bar_residual=lyapunov_residual(model.a_bar, g_bar),
    )

    residual = g_tilde_residual(cert, chain)
    if residual > config.LYAPUNOV_RESIDUAL_TOL:
        logger.warning("Coupled G_tilde equations residual %.3e", residual)

    cert.g_bar_bounds = g_bar_bounds(cert)
    cert.alpha_bars, cert.alpha_max = compute_alpha_bound(cert, chain)
    logger.info("MSS certificate built: alpha_max = %.6g", cert.alpha_max)
    return cert


def _mode_alpha_bar(m_min: float, m_tilde_min: float, c: float, psd_tol: float) -> float:
    # positive root of m_tilde·α² + m·α + c = 0, or the linear bound when m_tilde ⪰ 0
    bound = math.inf
    if m_tilde_min >= -psd_tol and m_min < 0:
        bound = c / -m_min
    if m_tilde_min < 0:
        root = 2.0 * c / (-m_min + math.sqrt(m_min**2 - 4.0 * m_tilde_min * c))
        bound = min(bound, root)
    return bound


def g_bar_bounds(cert: MssCertificate, psd_tol: Optional[float] = None) -> np.ndarray:
    """Per-mode bound λ_min(Ḡ)/|λ_min(G̃_i)| keeping Ḡ + αG̃_i ≻ 0 (+inf if G̃_i ⪰ 0)."""
    psd_tol = config.STRICT_FEASIBILITY_TOL if psd_tol is None else psd_tol
    g_bar_min = sym_eig_extremes(cert.g_bar).lambda_min
    bounds = np.full(cert.g_tilde.shape[0], math.inf)
    for i, g_t in enumerate(cert.g_tilde):
        lam = sym_eig_extremes(g_t).lambda_min
        if lam < -psd_tol:
            bounds[i] = g_bar_min / -lam
    return bounds


def compute_alpha_bound(
    cert: MssCertificate, chain: AugmentedChain, psd_tol: Optional[float] = None
) -> Tuple[np.ndarray, float]:
    """
    Per-mode stepsize bounds ᾱ_i and the overall bound alpha_max.

    With c_i = 1/(p_i N), m = λ_min(M_i) and t = λ_min(M̃_i):
    if t ≥ −psd_tol, ᾱ_i = c_i/|m| for m < 0 (else +inf); if t < 0 the
    positive root of tα² + mα + c_i is also taken and the smaller bound kept.

    Returns:
        Tuple of (alpha_bars, alpha_max); alpha_max is +inf when no bound is finite
    """
    psd_tol = config.STRICT_FEASIBILITY_TOL if psd_tol is None else psd_tol
    n_pairs = chain.n_pairs

    alpha_bars = np.empty(n_pairs)
    for i in range(n_pairs):
        alpha_bars[i] = _mode_alpha_bar(
            sym_eig_extremes(cert.m_mats[i]).lambda_min,
            sym_eig_extremes(cert.m_tilde_mats[i]).lambda_min,
            1.0 / (chain.p_inf[i] * n_pairs),
            psd_tol,
        )

    bounds = np.concatenate([alpha_bars, g_bar_bounds(cert, psd_tol)])
    finite = bounds[np.isfinite(bounds)]
    alpha_max = float(finite.min()) if finite.size else math.inf
    return alpha_bars, alpha_max


def verify_mss_sdp(
    model: MjlsModel,
    cert: MssCertificate,
    chain: AugmentedChain,
    alpha: float,
    feasibility_tol: Optional[float] = None,
) -> MssReport:
    """
    Test G_i − H_iᵀ(Σ_j p_ij G_j)H_i ≻ 0 and G_i ≻ 0 with G_i = Ḡ + αG̃_i.

    Returns:
        MssReport; feasible iff every margin and every λ_min(G_i) exceeds feasibility_tol
    """
    feasibility_tol = config.STRICT_FEASIBILITY_TOL if feasibility_tol is None else feasibility_tol
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")

    g_mats = cert.g_bar[None, :, :] + alpha * cert.g_tilde
    h_mats = model.h_mats(alpha)
    s_mats = np.einsum("ij,jab->iab", chain.trans, g_mats)

    n_pairs = model.n_pairs
    margins = np.empty(n_pairs)
    g_min = np.empty(n_pairs)
    for i in range(n_pairs):
        h = h_mats[i]
        margins[i] = sym_eig_extremes(_sym(g_mats[i] - h.T @ s_mats[i] @ h)).lambda_min
        g_min[i] = sym_eig_extremes(g_mats[i]).lambda_min

    feasible = bool(np.all(margins > feasibility_tol) and np.all(g_min > feasibility_tol))
    logger.info("Coupled SDP at alpha=%.6g: feasible=%s, worst margin %.3e", alpha, feasible, margins.min())
    return MssReport(alpha=alpha, sdp_margins=margins, g_min_eigs=g_min, feasible=feasible)


def mss_spectral_oracle(
    model: MjlsModel,
    chain: AugmentedChain,
    alpha: float,
    max_size: Optional[int] = None,
) -> float:
    """
    Spectral radius of the second-moment operator of the homogeneous MJLS.

    Block (i, j) is p_ji·(H_j ⊗ H_j): the mode-j second moment at step k
    feeds mode i at step k+1. Mean-square stable iff the result is < 1.

    Raises:
        TooLarge: N·d² exceeds max_size
    """
    max_size = config.ORACLE_MAX_SIZE if max_size is None else max_size
    n_pairs, d = model.n_pairs, model.d
    size = n_pairs * d * d
    if size > max_size:
        raise TooLarge(f"second-moment operator of size {size} exceeds {max_size}")

    h_mats = model.h_mats(alpha)
    kron = np.stack([np.kron(h, h) for h in h_mats])  # (N, d², d²)
    operator = np.einsum("ji,jab->iajb", chain.trans, kron).reshape(size, size)
    rho = spectral_radius(operator)
    logger.debug("Second-moment spectral radius at alpha=%.6g: %.10g", alpha, rho)
    return rho


def estimate_mse_curve(
    model: MjlsModel,
    pi_ind: PolicyInduced,
    features: FeatureMap,
    alpha: float,
    runs: int,
    k: int,
    seed: int,
    theta0=None,
    workers: Optional[int] = None,
) -> np.ndarray:
    """
    Monte Carlo estimate of E‖θ_t − θ_π‖² for t = 0..k.

    Runs use seeds seed+i and are averaged in index order. Diverged runs
    contribute +inf from the step they were abandoned.

    Args:
        theta0: Common initial weights. If None, starts from zero.
    """
    if runs < 1:
        raise ValueError(f"runs must be at least 1, got {runs}")
    theta0 = np.zeros(model.d) if theta0 is None else np.asarray(theta0, dtype=float)

    traces = run_td0_batch(pi_ind, features, alpha, theta0, k, runs, seed, workers)
    errors = np.full((runs, k + 1), math.inf)
    with np.errstate(over="ignore"):
        for i, trace in enumerate(traces):
            sq = np.sum((trace.iterates - model.theta_pi) ** 2, axis=1)
            errors[i, : sq.shape[0]] = sq

    diverged = sum(trace.diverged for trace in traces)
    if diverged:
        logger.info("%d of %d TD(0) runs diverged at alpha=%.6g", diverged, runs, alpha)
    return errors.mean(axis=0)


def terminal_mode_identity_residual(model: MjlsModel, chain: AugmentedChain, cert: MssCertificate) -> float:
    """
    ‖p_N(A_NᵀḠ + ḠA_N) + I + Σ_{i<N} p_i(A_iᵀḠ + ḠA_i)‖∞.

    Zero whenever Ḡ solves the Lyapunov equation of Ā.
    """
    a = model.a_mats
    terms = np.swapaxes(a, 1, 2) @ cert.g_bar + cert.g_bar @ a
    weighted = np.einsum("i,iab->iab", chain.p_inf, terms)
    lhs = weighted[-1]
    rhs = -np.eye(model.d) - weighted[:-1].sum(axis=0)
    return inf_norm(lhs - rhs)


def g_tilde_residual(cert: MssCertificate, chain: AugmentedChain) -> float:
    """max over i < N of ‖G̃_i − Σ_j p_ij G̃_j − X_i‖∞."""
    if chain.n_pairs == 1:
        return 0.0
    s_mats = np.einsum("ij,jab->iab", chain.trans, cert.g_tilde)
    residuals = cert.g_tilde - s_mats - cert.x_mats
    return max(inf_norm(r) for r in residuals[:-1])


def fit_decay_factor(curve, head_fraction: float = 0.25, tail_fraction: float = 0.25) -> float:
    """
    Per-step decay factor of the curve's excess over its plateau.

    The plateau is the mean of the tail; log|curve − plateau| is fitted by
    least squares on the head, over the steps where the excess is still
    resolvable. An excess that vanishes within the head counts as decay
    factor 0.
    """
    curve = np.asarray(curve, dtype=float)
    tail = curve[-max(1, int(len(curve) * tail_fraction)):]
    plateau = float(np.mean(tail))
    head = curve[: max(2, int(len(curve) * head_fraction))]

    excess = np.abs(head - plateau)
    resolvable = excess > 1e-12 * max(1.0, abs(plateau))
    steps = np.flatnonzero(resolvable)
    if steps.size < 2:
        return 0.0
    slope, _ = np.polyfit(steps, np.log(excess[steps]), 1)
    return float(math.exp(slope))


def plateau_variation(curve, tail_fraction: float = 0.25) -> float:
    """max |tail − mean| / |mean| over the last tail_fraction of the curve."""
    curve = np.asarray(curve, dtype=float)
    tail = curve[-max(1, int(len(curve) * tail_fraction)):]
    mean = float(np.mean(tail))
    spread = float(np.max(np.abs(tail - mean)))
    if mean == 0.0:
        return 0.0 if spread == 0.0 else math.inf
    return spread / abs(mean)


def mss_certificate_to_dict(
    cert: MssCertificate,
    chain: AugmentedChain,
    model: Optional[MjlsModel] = None,
    report: Optional[MssReport] = None,
) -> Dict[str, Any]:
    """Certificate dump; pairs are written 1-based and matrices row-major."""
    out: Dict[str, Any] = {
        "pairs": [[s + 1, t + 1] for s, t in chain.states],
        "p_inf": chain.p_inf.tolist(),
        "g_bar": cert.g_bar.tolist(),
        "g_tilde": cert.g_tilde.tolist(),
        "alpha_bars": cert.alpha_bars.tolist(),
        "g_bar_bounds": cert.g_bar_bounds.tolist(),
        "alpha_max": cert.alpha_max,
        "g_bar_residual": cert.g_bar_residual,
        "g_tilde_residual": g_tilde_residual(cert, chain),
    }
    if model is not None:
        out["theta_pi"] = model.theta_pi.tolist()
        out["identity_residual"] = terminal_mode_identity_residual(model, chain, cert)
    if report is not None:
        out.update(
            {
                "alpha": report.alpha,
                "sdp_margins": report.sdp_margins.tolist(),
                "g_min_eigs": report.g_min_eigs.tolist(),
                "feasible": report.feasible,
                "oracle_rho": report.oracle_rho,
                "oracle_consistent": report.oracle_consistent,
            }
        )
        if report.mse_curve is not None:
            out["mse_curve"] = report.mse_curve.tolist()
    return out
