"""
Positive-system stability certificates for value computation and value iteration.

For VC the error ζ_k = J_k − J_π evolves as ζ_{k+1} = γP_πζ_k with a
nonnegative matrix, and (ξ, ν, G) = (1ₙ, ω, diag(ω)) certify the rate γ in
three Lyapunov functions:

    V1(ζ) = max_i |ζ(i)|       rate γ
    V2(ζ) = |νᵀζ|              rate γ
    V3(ζ) = ζᵀGζ               rate γ²

For VI the error dynamics switch between γP_σ for greedy selectors σ. All
switched conditions are checked row by row over the n·l action rows rather
than over the lⁿ modes, except the common quadratic test which must enumerate.
"""

import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from config.settings import config
from src.algorithms.value_methods import Trace
from src.mdp.bellman import selected_kernel
from src.mdp.model import Mdp, PolicyInduced
from src.numerics.linalg import as_square, sym_eig_extremes
from src.utils.errors import (
    KindUnavailable,
    NonPositiveNu,
    NonPositiveXi,
    NotPositiveDefinite,
    ShapeMismatch,
    TooLarge,
)

logger = logging.getLogger(__name__)


class ConditionKind(str, Enum):
    LP_RIGHT = "LP_RIGHT"  # Aξ ≤ γξ
    LP_LEFT = "LP_LEFT"  # νᵀA ≤ γνᵀ
    SDP = "SDP"  # AᵀGA ⪯ γ²G
    SWITCHED_LP = "SWITCHED_LP"  # A_mξ ≤ γξ for every mode, ξ = 1ₙ
    COMMON_NU = "COMMON_NU"  # νᵀA_m ≤ γνᵀ for every mode
    COMMON_G = "COMMON_G"  # A_mᵀGA_m ⪯ γ²G for every mode
    POSITIVE = "POSITIVE"  # A ≥ 0 entrywise


class LyapunovKind(str, Enum):
    V1 = "V1"
    V2 = "V2"
    V3 = "V3"


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of one certificate condition."""

    kind: ConditionKind
    satisfied: bool  # margin ≥ −MARGIN_TOL
    margin: float
    strict: bool  # margin > STRICT_FEASIBILITY_TOL

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "satisfied": self.satisfied,
            "margin": self.margin,
            "strict": self.strict,
        }


@dataclass(frozen=True)
class VcCertificate:
    """Explicit solution (ξ, ν, G) of the VC certificate conditions."""

    xi: np.ndarray
    nu: Optional[np.ndarray]
    g: Optional[np.ndarray]
    gamma: float

    @property
    def restricted(self) -> bool:
        """True when only ξ is available (reducible chain)."""
        return self.nu is None


@dataclass(frozen=True)
class LyapunovTrace:
    """Lyapunov function values along a trace and the observed decrease rate."""

    kind: LyapunovKind
    values: np.ndarray
    rate_ok: bool
    worst_ratio: float  # max V(ζ_{k+1}) / (target·V(ζ_k)) over tested steps
    target: float
    floor: float  # V at the rounding level; steps at or below it are not tested

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "available": True,
            "values": self.values.tolist(),
            "rate_ok": self.rate_ok,
            "worst_ratio": self.worst_ratio,
            "target": self.target,
            "floor": self.floor,
        }


def _report(kind: ConditionKind, margin: float, margin_tol: Optional[float] = None) -> ConditionReport:
    margin_tol = config.MARGIN_TOL if margin_tol is None else margin_tol
    margin = float(margin)
    return ConditionReport(
        kind=kind,
        satisfied=margin >= -margin_tol,
        margin=margin,
        strict=margin > config.STRICT_FEASIBILITY_TOL,
    )


def construct_vc_certificate(pi_ind: PolicyInduced) -> VcCertificate:
    """
    Build ξ = 1ₙ, ν = ω and G = diag(ν/ξ) for the induced chain.

    A reducible chain has no unique ω, so only ξ is returned. V1 stays
    valid; V2 and V3 then report KindUnavailable.
    """
    xi = np.ones(pi_ind.n)
    if pi_ind.omega is None:
        logger.warning("Chain is reducible: certificate restricted to xi (V1 only)")
        return VcCertificate(xi=xi, nu=None, g=None, gamma=pi_ind.gamma)

    nu = np.asarray(pi_ind.omega, dtype=float).copy()
    return VcCertificate(xi=xi, nu=nu, g=np.diag(nu / xi), gamma=pi_ind.gamma)


def verify_lp_right(a, xi, rate: float, margin_tol: Optional[float] = None) -> ConditionReport:
    """
    Check Aξ ≤ rate·ξ.

    Returns:
        ConditionReport with margin = min_i (rate·ξ(i) − (Aξ)(i))

    Raises:
        NonPositiveXi: some ξ(i) ≤ 0
    """
    a = as_square(a)
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (a.shape[0],):
        raise ShapeMismatch(f"xi has shape {xi.shape}, expected ({a.shape[0]},)")
    if not np.all(xi > 0):
        raise NonPositiveXi("xi must be strictly positive", [f"xi = {xi.tolist()}"])
    return _report(ConditionKind.LP_RIGHT, np.min(rate * xi - a @ xi), margin_tol)


def verify_lp_left(a, nu, rate: float, margin_tol: Optional[float] = None) -> ConditionReport:
    """
    Check νᵀA ≤ rate·νᵀ.

    Raises:
        NonPositiveNu: some ν(j) ≤ 0
    """
    a = as_square(a)
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (a.shape[0],):
        raise ShapeMismatch(f"nu has shape {nu.shape}, expected ({a.shape[0]},)")
    if not np.all(nu > 0):
        raise NonPositiveNu("nu must be strictly positive", [f"nu = {nu.tolist()}"])
    return _report(ConditionKind.LP_LEFT, np.min(rate * nu - nu @ a), margin_tol)


def _check_positive_definite(g: np.ndarray) -> None:
    lam = sym_eig_extremes(g).lambda_min
    if lam <= config.POSITIVE_DEFINITE_TOL:
        raise NotPositiveDefinite(
            f"G is not positive definite (lambda_min = {lam:.3e})"
        )


def verify_sdp(a, g, rate: float, margin_tol: Optional[float] = None) -> ConditionReport:
    """
    Check AᵀGA ⪯ rate²·G.

    Returns:
        ConditionReport with margin = λ_min(rate²G − AᵀGA)

    Raises:
        NotPositiveDefinite: λ_min(G) ≤ POSITIVE_DEFINITE_TOL
    """
    a = as_square(a)
    g = as_square(g, "G")
    if g.shape != a.shape:
        raise ShapeMismatch(f"G has shape {g.shape}, A has {a.shape}")
    _check_positive_definite(g)
    margin = sym_eig_extremes(rate**2 * g - a.T @ g @ a).lambda_min
    return _report(ConditionKind.SDP, margin, margin_tol)


def verify_switched_linf(mdp: Mdp, margin_tol: Optional[float] = None) -> ConditionReport:
    """
    Check γP_m1ₙ ≤ γ1ₙ for every mode m.

    Mode m picks one action row per state, so the condition holds for all
    modes iff it holds for each of the n·l rows: margin = min over (s, a)
    of γ(1 − Σ_{s'} P((s,a), s')).
    """
    row_sums = mdp.p.sum(axis=2)
    return _report(ConditionKind.SWITCHED_LP, np.min(mdp.gamma * (1.0 - row_sums)), margin_tol)


def verify_common_nu(
    mdp: Mdp, nu, rate: Optional[float] = None, margin_tol: Optional[float] = None
) -> ConditionReport:
    """
    Check νᵀ(γP_m) ≤ rate·νᵀ for every mode m.

    Column j of νᵀA_m is Σ_s ν(s)·γP((s, m(s)), j); each state picks its
    action independently, so the worst mode maximizes per state:
    margin = min_j (rate·ν(j) − Σ_s ν(s)·max_a γP((s,a), j)).
    """
    rate = mdp.gamma if rate is None else rate
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (mdp.n,):
        raise ShapeMismatch(f"nu has shape {nu.shape}, expected ({mdp.n},)")
    if not np.all(nu > 0):
        raise NonPositiveNu("nu must be strictly positive", [f"nu = {nu.tolist()}"])

    worst_rows = mdp.gamma * mdp.p.max(axis=1)  # (n, n): max over actions per (s, j)
    return _report(ConditionKind.COMMON_NU, np.min(rate * nu - nu @ worst_rows), margin_tol)


def verify_common_g(
    mdp: Mdp,
    g,
    rate: Optional[float] = None,
    max_modes: Optional[int] = None,
    margin_tol: Optional[float] = None,
) -> ConditionReport:
    """
    Check (γP_m)ᵀG(γP_m) ⪯ rate²·G for every mode m by enumeration.

    Raises:
        TooLarge: lⁿ exceeds max_modes
        NotPositiveDefinite: G is not positive definite
    """
    rate = mdp.gamma if rate is None else rate
    max_modes = config.MAX_ENUMERATED_POLICIES if max_modes is None else max_modes
    g = as_square(g, "G")
    if g.shape != (mdp.n, mdp.n):
        raise ShapeMismatch(f"G has shape {g.shape}, expected {(mdp.n, mdp.n)}")
    count = mdp.l**mdp.n
    if count > max_modes:
        raise TooLarge(f"{count} switching modes exceed the limit of {max_modes}")
    _check_positive_definite(g)

    worst = np.inf
    for mode in itertools.product(range(mdp.l), repeat=mdp.n):
        p_m, _ = selected_kernel(mdp, np.asarray(mode))
        a_m = mdp.gamma * p_m
        worst = min(worst, sym_eig_extremes(rate**2 * g - a_m.T @ g @ a_m).lambda_min)
    logger.debug("Common G checked over %d modes", count)
    return _report(ConditionKind.COMMON_G, worst, margin_tol)


def verify_positive(a, margin_tol: Optional[float] = None) -> ConditionReport:
    """Entrywise nonnegativity; margin is the smallest entry."""
    a = np.asarray(a, dtype=float)
    return _report(ConditionKind.POSITIVE, np.min(a), margin_tol)


def _lyapunov_values(zetas: np.ndarray, cert: VcCertificate, kind: LyapunovKind) -> np.ndarray:
    if kind is LyapunovKind.V1:
        return np.max(np.abs(zetas), axis=1)
    if cert.restricted:
        raise KindUnavailable(f"{kind.value} needs nu and G, which require an irreducible chain")
    if kind is LyapunovKind.V2:
        return np.abs(zetas @ cert.nu)
    return np.einsum("ki,ij,kj->k", zetas, cert.g, zetas)


def rounding_level(trace: Trace, j_ref, gamma: float) -> float:
    """
    Absolute rounding level δ of ζ_k = J_k − j_ref.

    δ = LYAPUNOV_ROUNDING_FACTOR·eps·n·(‖j_ref‖∞ + max_k ‖J_k‖∞)/(1 − γ).
    """
    j_ref = np.asarray(j_ref, dtype=float)
    scale = float(np.max(np.abs(j_ref), initial=0.0)) + float(np.max(np.abs(trace.iterates), initial=0.0))
    n = trace.iterates.shape[1]
    return config.LYAPUNOV_ROUNDING_FACTOR * np.finfo(float).eps * n * scale / (1.0 - gamma)


def _value_noise(zetas: np.ndarray, cert: VcCertificate, kind: LyapunovKind, delta: float) -> np.ndarray:
    """Bound on |V(ζ + e) − V(ζ)| for ‖e‖∞ ≤ δ, per step."""
    if kind is LyapunovKind.V1:
        return np.full(zetas.shape[0], delta)
    if kind is LyapunovKind.V2:
        return np.full(zetas.shape[0], delta * float(np.sum(np.abs(cert.nu))))
    g_abs = np.abs(cert.g)
    return 2.0 * delta * np.sum(np.abs(zetas @ cert.g), axis=1) + delta**2 * float(np.sum(g_abs))


def lyapunov_trace(
    trace: Trace,
    j_ref,
    cert: VcCertificate,
    kind: Union[LyapunovKind, str],
    rate_slack: Optional[float] = None,
) -> LyapunovTrace:
    """
    Evaluate a Lyapunov function along ζ_k = J_k − j_ref and check its decrease.

    Every step with V(ζ_k) above max(LYAPUNOV_FLOOR, its rounding noise) is
    tested. The ratio discounts the rounding noise of both steps:

        max(V_{k+1} − noise_{k+1}, 0) / (target·(V_k + noise_k))

    Args:
        trace: VC or VI trace (V2/V3 are meaningful on VC traces only)
        j_ref: Fixed point (J_π for VC, J* for VI)
        cert: Certificate supplying ν and G
        kind: V1, V2 or V3
        rate_slack: Allowed relative excess of the worst ratio over 1

    Returns:
        LyapunovTrace

    Raises:
        KindUnavailable: V2/V3 requested on a ξ-only certificate
    """
    rate_slack = config.RATE_SLACK if rate_slack is None else rate_slack
    kind = LyapunovKind(kind)
    zetas = trace.iterates - np.asarray(j_ref, dtype=float)
    values = _lyapunov_values(zetas, cert, kind)

    target = cert.gamma**2 if kind is LyapunovKind.V3 else cert.gamma
    delta = rounding_level(trace, j_ref, cert.gamma)
    noise = _value_noise(zetas, cert, kind, delta)
    floor = max(config.LYAPUNOV_FLOOR, float(_lyapunov_values(np.full((1, zetas.shape[1]), delta), cert, kind)[0]))

    tested = values[:-1] > np.maximum(floor, noise[:-1])
    if np.any(tested):
        grown = np.maximum(values[1:] - noise[1:], 0.0)
        ratios = grown[tested] / (target * (values[:-1] + noise[:-1])[tested])
        worst_ratio = float(np.max(ratios))
    else:
        worst_ratio = 0.0

    return LyapunovTrace(
        kind=kind,
        values=values,
        rate_ok=worst_ratio <= 1.0 + rate_slack,
        worst_ratio=worst_ratio,
        target=target,
        floor=floor,
    )


def copositive_split_bound(
    pi_ind: PolicyInduced,
    zeta0,
    k: int,
    cert: VcCertificate,
    rate_slack: Optional[float] = None,
) -> Tuple[bool, float]:
    """
    Check V2(ζ_t) ≤ γᵗ(V2(ζ₀⁺) + V2(ζ₀⁻)) along the VC error recursion.

    ζ₀ is split into nonnegative parts ζ₀ = ζ₀⁺ − ζ₀⁻; each part stays in the
    nonnegative orthant and decays at rate γ in νᵀζ.

    Returns:
        Tuple of (bound holds for every t ≤ k, worst ratio V2(ζ_t)/bound_t)
    """
    rate_slack = config.RATE_SLACK if rate_slack is None else rate_slack
    if cert.restricted:
        raise KindUnavailable("the split bound needs nu, which requires an irreducible chain")

    zeta = np.asarray(zeta0, dtype=float)
    bound = cert.nu @ np.maximum(zeta, 0.0) + cert.nu @ np.maximum(-zeta, 0.0)
    a_pi = pi_ind.a_pi()

    worst = 0.0
    for _ in range(k + 1):
        if bound > config.LYAPUNOV_FLOOR:
            worst = max(worst, abs(cert.nu @ zeta) / bound)
        zeta = a_pi @ zeta
        bound *= pi_ind.gamma
    return worst <= 1.0 + rate_slack, float(worst)


def certificate_to_dict(cert: VcCertificate) -> Dict[str, Any]:
    return {
        "xi": cert.xi.tolist(),
        "nu": None if cert.restricted else cert.nu.tolist(),
        "g_diag": None if cert.restricted else np.diag(cert.g).tolist(),
        "gamma": cert.gamma,
        "restricted": cert.restricted,
    }
