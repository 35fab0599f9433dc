"""
errors.py - Exception Hierarchy

Two families:
- validation errors (bad input, bad scenario files) -> CLI exit code 2
- numeric errors (instability, non-convergence, infeasible caps) -> CLI exit code 3
"""

from typing import Any, Dict, Optional


EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


class CurbflowError(Exception):
    """Base class for all curbflow errors"""
    exit_code = EXIT_NUMERIC


# ---------------------------------------------------------------- validation

class InvalidInputError(CurbflowError, ValueError):
    """An argument is outside the domain of the operation"""
    exit_code = EXIT_VALIDATION


class ScenarioError(InvalidInputError):
    """A scenario file is malformed or violates the schema"""

    def __init__(self, message: str, path: Optional[str] = None,
                 line: Optional[int] = None, field: Optional[str] = None):
        self.path = path
        self.line = line
        self.field = field
        location = []
        if path:
            location.append(str(path))
        if line is not None:
            location.append(f"line {line}")
        if field:
            location.append(f"field '{field}'")
        prefix = ", ".join(location)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ReportError(InvalidInputError):
    """A report is missing the solve needed for the requested output"""


# ------------------------------------------------------------------- numeric

class NumericError(CurbflowError, ArithmeticError):
    """A numeric procedure failed"""


class InstabilityError(NumericError):
    """Offered demand exceeds what the stalls can serve"""


class ConvergenceError(NumericError):
    """An iteration did not converge; carries the last iterate"""

    def __init__(self, message: str, last_iterate: Optional[Dict[str, float]] = None,
                 residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.last_iterate = last_iterate or {}
        self.residual = residual
        self.iterations = iterations


class InfeasibleCapError(NumericError):
    """No price in range brings a block's rejection rate under its cap"""

    def __init__(self, block_id: str, message: str):
        super().__init__(f"block '{block_id}': {message}")
        self.block_id = block_id


class SimulationOverloadError(NumericError):
    """Circulating population exceeded the watchdog bound"""

    def __init__(self, message: str, partial: Any = None):
        super().__init__(message)
        self.partial = partial


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code"""
    if isinstance(exc, CurbflowError):
        return exc.exit_code
    if isinstance(exc, ValueError):
        return EXIT_VALIDATION
    return EXIT_NUMERIC
