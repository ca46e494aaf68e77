"""
Exception hierarchy shared by every vbcert module.

Each error carries a short ``code`` (the class name) and an optional list of
``details`` so validators can report every violation at once.
"""

from typing import List, Optional


class VbcertError(Exception):
    """Base class for all analysis errors."""

    def __init__(self, message: str, details: Optional[List[str]] = None):
        super().__init__(message)
        self.message = message
        self.details = list(details or [])

    @property
    def code(self) -> str:
        return type(self).__name__

    def format(self) -> str:
        lines = [f"{self.code}: {self.message}"]
        lines.extend(f"   - {d}" for d in self.details)
        return "\n".join(lines)


# Numerics
class SingularMatrix(VbcertError):
    pass


class NonFinite(VbcertError):
    pass


class NonConvergence(VbcertError):
    pass


class TooLarge(VbcertError):
    pass


# Model validation
class ShapeMismatch(VbcertError):
    pass


class InvalidKernel(VbcertError):
    pass


class InvalidGamma(VbcertError):
    pass


class InvalidPolicy(VbcertError):
    pass


class UnknownField(VbcertError):
    pass


class FeatureRankDeficient(VbcertError):
    pass


# Chain structure
class Reducible(VbcertError):
    pass


class NotErgodic(VbcertError):
    pass


# Certificates
class NonPositiveXi(VbcertError):
    pass


class NonPositiveNu(VbcertError):
    pass


class NotPositiveDefinite(VbcertError):
    pass


class KindUnavailable(VbcertError):
    pass


class SingularAbar(VbcertError):
    pass


class NotHurwitz(VbcertError):
    pass


class UnboundedStepsize(VbcertError):
    pass


# Reporting
class ReportSchemaError(VbcertError):
    pass


class MalformedInput(VbcertError):
    pass
