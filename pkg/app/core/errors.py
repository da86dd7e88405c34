from typing import Any, Optional


class CertificationError(Exception):
    exit_code = 1

    def __init__(self, message: str, partial_report: Optional[Any] = None):
        super().__init__(message)
        self.partial_report = partial_report


class ConfigValidationError(CertificationError):
    exit_code = 2


class ConstantsUnavailableError(CertificationError):
    """Raised when a constant table is missing from the cache and computing it is disabled."""
    exit_code = 3


class IntegratorError(CertificationError):
    exit_code = 4


class QuadratureError(IntegratorError):
    pass
