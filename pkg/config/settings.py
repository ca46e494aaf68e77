import math
import os
from dataclasses import dataclass, fields
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Project root directory
PROJECT_ROOT = Path(__file__).parent.parent


def _env_float(name: str, default: float) -> float:
    return float(os.getenv(f"VBCERT_{name}", default))


def _env_int(name: str, default: int) -> int:
    return int(os.getenv(f"VBCERT_{name}", default))


@dataclass
class Config:
    """Configuration settings for vbcert"""

    # Linear algebra tolerances
    SOLVE_RESIDUAL_TOL: float = _env_float("SOLVE_RESIDUAL_TOL", 1e-10)  # ‖ax−b‖∞ ≤ tol·(1+‖b‖∞)
    PIVOT_TOL: float = _env_float("PIVOT_TOL", 1e-13)  # relative to ‖a‖∞
    SYMMETRY_TOL: float = _env_float("SYMMETRY_TOL", 1e-10)
    LYAPUNOV_RESIDUAL_TOL: float = _env_float("LYAPUNOV_RESIDUAL_TOL", 1e-9)
    EIG_RESIDUAL_TOL: float = _env_float("EIG_RESIDUAL_TOL", 1e-9)

    # Spectral radius by repeated squaring
    SPECTRAL_RADIUS_TOL: float = _env_float("SPECTRAL_RADIUS_TOL", 1e-8)
    SPECTRAL_RADIUS_MAX_SQUARINGS: int = _env_int("SPECTRAL_RADIUS_MAX_SQUARINGS", 200)

    # Markov chain / MDP validation
    STOCHASTIC_ROW_TOL: float = _env_float("STOCHASTIC_ROW_TOL", 1e-12)
    STATIONARITY_TOL: float = _env_float("STATIONARITY_TOL", 1e-10)
    EDGE_THRESHOLD: float = _env_float("EDGE_THRESHOLD", 1e-14)  # structural zero vs rounding
    BELLMAN_RESIDUAL_TOL: float = _env_float("BELLMAN_RESIDUAL_TOL", 1e-9)
    FEATURE_RANK_TOL: float = _env_float("FEATURE_RANK_TOL", 1e-10)  # smallest singular value
    MAX_ENUMERATED_POLICIES: int = _env_int("MAX_ENUMERATED_POLICIES", 4096)

    # Certificate verdicts
    MARGIN_TOL: float = _env_float("MARGIN_TOL", 1e-9)  # satisfied ⇔ margin ≥ −tol
    STRICT_FEASIBILITY_TOL: float = _env_float("STRICT_FEASIBILITY_TOL", 1e-12)
    POSITIVE_DEFINITE_TOL: float = _env_float("POSITIVE_DEFINITE_TOL", 1e-12)
    RATE_SLACK: float = _env_float("RATE_SLACK", 1e-9)
    LYAPUNOV_FLOOR: float = _env_float("LYAPUNOV_FLOOR", 1e-13)  # absolute floor for ratio tests
    LYAPUNOV_ROUNDING_FACTOR: float = _env_float("LYAPUNOV_ROUNDING_FACTOR", 16.0)  # multiples of eps·n·scale/(1−γ)

    # MJLS oracle and stepsize selection
    ORACLE_MAX_SIZE: int = _env_int("ORACLE_MAX_SIZE", 4000)  # N·d² guard
    ORACLE_MSS_SLACK: float = _env_float("ORACLE_MSS_SLACK", 1e-6)
    ALPHA_FRACTION: float = _env_float("ALPHA_FRACTION", 0.99)  # "auto" stepsize
    MC_WORKERS: int = _env_int("MC_WORKERS", 1)
    TD_DIVERGENCE_CAP: float = _env_float("TD_DIVERGENCE_CAP", 1e100)

    # CLI defaults
    VC_STEPS: int = _env_int("VC_STEPS", 200)
    VI_TOL: float = _env_float("VI_TOL", 1e-8)
    VI_MAX_STEPS: int = _env_int("VI_MAX_STEPS", 100000)
    TD_STEPS: int = _env_int("TD_STEPS", 5000)
    LOG_LEVEL: str = os.getenv("VBCERT_LOG_LEVEL", "WARNING")

    # Storage Paths
    DEMO_DIR: str = str(PROJECT_ROOT / "data" / "demo")
    REPORT_SCHEMA_PATH: str = str(PROJECT_ROOT / "schemas" / "analysis_report.schema.json")

    def validate(self) -> tuple[bool, list[str]]:
        """
        Validate configuration settings.

        Returns:
            Tuple of (is_valid, list of error messages)
        """
        errors = []

        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                continue
            if not math.isfinite(value) or value <= 0:
                errors.append(f"{f.name} must be positive and finite (got {value})")

        if not 0 < self.ALPHA_FRACTION < 1:
            errors.append(f"ALPHA_FRACTION must lie in (0, 1) (got {self.ALPHA_FRACTION})")

        if not os.path.exists(self.REPORT_SCHEMA_PATH):
            errors.append(f"Report schema not found: {self.REPORT_SCHEMA_PATH}")

        return len(errors) == 0, errors


# Global config instance
config = Config()
