"""
Exception hierarchy for the enhancement-aware streaming simulator.

Every error raised on purpose by this project derives from EnhanceAbrError so the
CLI can turn it into a machine-readable message.
"""
from typing import Any, Dict, Optional


class EnhanceAbrError(Exception):
    """Base class for all project errors"""


class CalibrationError(EnhanceAbrError, ValueError):
    """Rate-quality calibration points cannot determine a model"""


class DomainError(EnhanceAbrError, ValueError):
    """A value lies outside the range an operation is defined on"""


class ConfigError(EnhanceAbrError, ValueError):
    """Invalid configuration value, file or schema"""


class TraceParseError(EnhanceAbrError, ValueError):
    """Malformed bandwidth trace input"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SimulationError(EnhanceAbrError, ValueError):
    """Illegal use of the pipeline simulator (bad action, step after done)"""


class TrainingError(EnhanceAbrError):
    """Numerical failure or divergence during actor-critic training"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class BudgetExceededError(EnhanceAbrError):
    """Exhaustive search would enumerate more sequences than allowed"""


class ComparisonError(EnhanceAbrError, ValueError):
    """Reports cannot be compared (too few, or different conditions)"""


class UnknownPolicyError(EnhanceAbrError, ValueError):
    """Policy name or checkpoint path does not resolve to a policy"""
