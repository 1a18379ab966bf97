from typing import Any, Dict, Optional


class LabError(ValueError):
    """Base class for laboratory failures; `module` names the owning module."""

    exit_code = 1

    def __init__(self, message: str, module: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.module = module
        self.details = details or {}

    def qualified(self) -> str:
        if self.module:
            return f"[{self.module}] {self}"
        return str(self)


class ConfigError(LabError):
    exit_code = 2


class NumericalError(LabError):
    exit_code = 3


class CalibrationError(NumericalError):
    pass


class SizeGuardError(LabError):
    exit_code = 4
