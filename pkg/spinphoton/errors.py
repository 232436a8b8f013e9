from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from spinphoton.device import ValidationReport


class SpinPhotonError(Exception):
    pass


class ConfigError(SpinPhotonError, ValueError):
    """
    A config document could not be parsed, or names a field that does not exist.
    """


class DeviceValidationError(SpinPhotonError, ValueError):
    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__("; ".join(report.errors) or "device validation failed")


class BasisTooLargeError(SpinPhotonError, ValueError):
    def __init__(self, dimension: int, limit: int):
        self.dimension = dimension
        self.limit = limit
        super().__init__(f"Basis dimension {dimension} exceeds the configured limit {limit}")


class UnknownLabelError(SpinPhotonError, ValueError):
    pass


class CompilationError(SpinPhotonError, ValueError):
    pass


class LedgerError(SpinPhotonError, ValueError):
    pass


class IntegratorError(SpinPhotonError, ValueError):
    pass


class NumericalError(SpinPhotonError, ArithmeticError):
    pass


class ToleranceError(NumericalError):
    def __init__(self, message: str, worst_error: float):
        self.worst_error = worst_error
        super().__init__(f"{message} (worst error estimate {worst_error:.3e})")


class OracleError(NumericalError):
    pass


class CPBConvergenceError(NumericalError):
    def __init__(self, quantity: str, change: float):
        self.quantity = quantity
        self.change = change
        super().__init__(f"CPB {quantity} not converged in the charge cutoff (change {change:.3e})")
