"""
Dense linear-algebra kernel.

Every routine here is a pure function of its inputs. Tolerances default to the
values in ``config.settings`` and can be overridden per call.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg as sla

from config.settings import config
from src.utils.errors import NonConvergence, NonFinite, ShapeMismatch, SingularMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SymEigReport:
    """Extreme eigenvalues of a symmetrized matrix."""

    lambda_min: float
    lambda_max: float
    residual: float  # ‖Sv − λv‖∞ over the two extreme eigenpairs

    def to_dict(self) -> dict:
        return {
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
            "residual": self.residual,
        }


def inf_norm(x: np.ndarray) -> float:
    """Max-abs for vectors, max absolute row sum for matrices."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return 0.0
    if x.ndim == 1:
        return float(np.max(np.abs(x)))
    return float(np.max(np.sum(np.abs(x), axis=1)))


def as_square(a, name: str = "matrix") -> np.ndarray:
    """Convert to a finite 2-D float array and check it is square."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite(f"{name} contains NaN or Inf entries")
    return a


def is_symmetric(s, tol: Optional[float] = None) -> bool:
    """True when ‖s − sᵀ‖∞ ≤ tol·‖s‖∞."""
    tol = config.SYMMETRY_TOL if tol is None else tol
    s = as_square(s)
    return inf_norm(s - s.T) <= tol * max(inf_norm(s), 1e-300)


def solve_linear(
    a,
    b,
    pivot_tol: Optional[float] = None,
    residual_tol: Optional[float] = None,
) -> np.ndarray:
    """
    Solve ``a x = b`` by LU factorization with partial pivoting.

    Args:
        a: Square coefficient matrix
        b: Right-hand side vector (or matrix of stacked right-hand sides)
        pivot_tol: Relative pivot threshold. If None, uses config default.
        residual_tol: Relative residual target. If None, uses config default.

    Returns:
        Solution with the same trailing shape as ``b``

    Raises:
        SingularMatrix: a pivot magnitude falls below pivot_tol·‖a‖∞
    """
    pivot_tol = config.PIVOT_TOL if pivot_tol is None else pivot_tol
    residual_tol = config.SOLVE_RESIDUAL_TOL if residual_tol is None else residual_tol

    a = as_square(a, "coefficient matrix")
    b = np.asarray(b, dtype=float)
    if b.shape[0] != a.shape[0]:
        raise ShapeMismatch(
            f"right-hand side has {b.shape[0]} rows, matrix has {a.shape[0]}"
        )
    if not np.all(np.isfinite(b)):
        raise NonFinite("right-hand side contains NaN or Inf entries")

    norm_a = inf_norm(a)
    with warnings.catch_warnings():
        # exact zeros on the diagonal are reported below as SingularMatrix
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(a, check_finite=False)

    pivots = np.abs(np.diag(lu))
    min_pivot = float(pivots.min()) if pivots.size else 0.0
    if norm_a == 0.0 or min_pivot < pivot_tol * norm_a:
        raise SingularMatrix(
            f"pivot {min_pivot:.3e} below {pivot_tol:.0e}·‖a‖∞ = {pivot_tol * norm_a:.3e}"
        )

    x = sla.lu_solve((lu, piv), b, check_finite=False)

    bound = residual_tol * (1.0 + inf_norm(b))
    residual = inf_norm(a @ x - b)
    if residual > bound:
        # one step of iterative refinement
        x = x + sla.lu_solve((lu, piv), b - a @ x, check_finite=False)
        residual = inf_norm(a @ x - b)
        if residual > bound:
            logger.warning(
                "Linear solve residual %.3e exceeds %.3e (n=%d)", residual, bound, a.shape[0]
            )
    return x


def sym_eig_extremes(s, symmetry_tol: Optional[float] = None) -> SymEigReport:
    """
    Smallest and largest eigenvalues of (s + sᵀ)/2.

    Args:
        s: Symmetric (up to rounding) square matrix
        symmetry_tol: Asymmetry tolerance for the precondition check

    Returns:
        SymEigReport with the extreme eigenvalues and their residual
    """
    s = as_square(s, "symmetric matrix")
    if not is_symmetric(s, symmetry_tol):
        logger.warning(
            "Input to sym_eig_extremes is not symmetric (‖s−sᵀ‖∞=%.3e); symmetrizing",
            inf_norm(s - s.T),
        )
    sym = 0.5 * (s + s.T)
    w, v = sla.eigh(sym, check_finite=False)

    residual = 0.0
    for idx in (0, len(w) - 1):
        vec = v[:, idx]
        residual = max(residual, inf_norm(sym @ vec - w[idx] * vec))

    report = SymEigReport(float(w[0]), float(w[-1]), float(residual))
    if report.residual > config.EIG_RESIDUAL_TOL * max(1.0, abs(report.lambda_max)):
        logger.warning("Eigenpair residual %.3e above tolerance", report.residual)
    return report


def lyapunov_residual(a, g) -> float:
    """‖aᵀg + g a + I‖∞ for the continuous Lyapunov equation."""
    a = np.asarray(a, dtype=float)
    g = np.asarray(g, dtype=float)
    return inf_norm(a.T @ g + g @ a + np.eye(a.shape[0]))


def solve_continuous_lyapunov(a) -> np.ndarray:
    """
    Solve ``aᵀG + G a = −I`` through the d²×d² vectorized system.

    With column-major vec: vec(aᵀG) = (I⊗aᵀ)vec(G) and vec(G a) = (aᵀ⊗I)vec(G).

    Args:
        a: Square d×d matrix

    Returns:
        Symmetric solution G

    Raises:
        SingularMatrix: a and −a share an eigenvalue (no unique solution)
    """
    a = as_square(a, "Lyapunov matrix")
    d = a.shape[0]
    eye = np.eye(d)
    kron_system = np.kron(eye, a.T) + np.kron(a.T, eye)
    rhs = -eye.reshape(-1, order="F")

    g = solve_linear(kron_system, rhs).reshape(d, d, order="F")
    g = 0.5 * (g + g.T)

    residual = lyapunov_residual(a, g)
    if residual > config.LYAPUNOV_RESIDUAL_TOL:
        logger.warning("Lyapunov residual %.3e above %.0e", residual, config.LYAPUNOV_RESIDUAL_TOL)
    return g


def spectral_radius(
    a,
    tol: Optional[float] = None,
    max_squarings: Optional[int] = None,
) -> float:
    """
    Spectral radius as the limit of ‖A^k‖∞^(1/k), k = 2^m.

    Each squaring is renormalized to unit norm and the logarithm of the
    discarded scale is accumulated, so nothing overflows or underflows.

    Args:
        a: Square matrix
        tol: Stop when two successive estimates differ by less than this
        max_squarings: Squaring cap before NonConvergence

    Returns:
        Estimate of ρ(a)
    """
    tol = config.SPECTRAL_RADIUS_TOL if tol is None else tol
    max_squarings = config.SPECTRAL_RADIUS_MAX_SQUARINGS if max_squarings is None else max_squarings

    a = as_square(a)
    scale = inf_norm(a)
    if scale == 0.0:
        return 0.0

    b = a / scale
    log_rate = math.log(scale)  # A^(2^m) = exp(2^m · log_rate) · b, ‖b‖∞ = 1
    power = 1
    estimate = scale

    for _ in range(max_squarings):
        b = b @ b
        s = inf_norm(b)
        if s == 0.0:
            return 0.0  # nilpotent
        b /= s
        power *= 2
        log_rate += math.log(s) / power
        new_estimate = math.exp(log_rate)
        if abs(new_estimate - estimate) < tol:
            return new_estimate
        estimate = new_estimate

    raise NonConvergence(
        f"spectral radius did not settle after {max_squarings} squarings (last {estimate:.10g})"
    )
