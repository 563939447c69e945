"""
Exception hierarchy for graphonlqr.

Every error raised by the library derives from :class:`GraphonLQRError` and from
the builtin exception a caller would expect for the same failure, so
``except ValueError`` keeps working for precondition failures and
``except ArithmeticError`` for numerical blow-up.
"""

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from graphonlqr.subspace import CertificateReport


class GraphonLQRError(Exception):
    """Base class for all graphonlqr errors."""


class ConstructionError(GraphonLQRError, ValueError):
    """A graphon, dictionary element or model could not be constructed."""


class DimensionError(GraphonLQRError, ValueError):
    """Grid sizes or state dimensions are incompatible."""


class SpectrumRangeError(GraphonLQRError, ValueError):
    """More eigenpairs were requested than the operator has."""


class BasisError(GraphonLQRError, ValueError):
    """A subspace basis is not orthonormal or could not be orthonormalized."""


class CertificateError(GraphonLQRError, ValueError):
    """The invariance or low-rank certificate failed for at least one operator."""

    def __init__(self, message: str, report: "CertificateReport") -> None:
        super().__init__(message)
        self.report = report


class HorizonError(GraphonLQRError, ValueError):
    """A time lies outside the control horizon, or two horizons disagree."""


class OracleSizeError(GraphonLQRError, ValueError):
    """The centralized problem is larger than the configured cap."""


class ConfigError(GraphonLQRError, ValueError):
    """An experiment config file is unreadable or invalid.

    Attributes:
        issues: Every problem found while reading the file, in file order.
    """

    def __init__(self, message: str, issues: list[str] | None = None) -> None:
        super().__init__(message)
        self.issues = issues or [message]


class RiccatiIntegrationError(GraphonLQRError, ArithmeticError):
    """A Riccati solution became non-finite during backward integration."""

    def __init__(self, message: str, time: float) -> None:
        super().__init__(message)
        self.time = time


class SimulationError(GraphonLQRError, ArithmeticError):
    """A forward simulation produced a non-finite state."""
