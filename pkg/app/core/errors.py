# app/core/errors.py

from typing import Any, Optional, Sequence

import numpy as np


class ExitCode:
    SUCCESS = 0
    INPUT_ERROR = 1
    NUMERICAL_FAILURE = 2


class UnmixError(Exception):
    """Base class for every error raised by the package."""

    exit_code: int = ExitCode.NUMERICAL_FAILURE

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class InputError(UnmixError, ValueError):
    exit_code = ExitCode.INPUT_ERROR


class DimensionError(InputError):
    def __init__(self, what: str, expected: Any, actual: Any):
        super().__init__(f"{what}: expected {expected}, got {actual}")
        self.what = what
        self.expected = expected
        self.actual = actual


class FeasibilityError(InputError):
    def __init__(self, constraint: str, violation: float):
        super().__init__(
            f"constraint '{constraint}' violated by {violation:.3e}"
        )
        self.constraint = constraint
        self.violation = violation


class ParseError(InputError):
    def __init__(
            self,
            path: str,
            message: str,
            row: Optional[int] = None,
            column: Optional[int] = None,
            offset: Optional[int] = None
    ):
        where = [f"{path}"]
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{', '.join(where)}: {message}")
        self.path = path
        self.row = row
        self.column = column
        self.offset = offset


class ConfigError(InputError):
    def __init__(self, field: str, message: str):
        super().__init__(f"invalid field '{field}': {message}")
        self.field = field


class NumericalError(UnmixError, ArithmeticError):
    exit_code = ExitCode.NUMERICAL_FAILURE


class LineSearchError(NumericalError):
    """Backtracking ran out before finding sufficient decrease."""

    def __init__(self, detail: str, best_point: np.ndarray, best_cost: float):
        super().__init__(detail)
        self.best_point = best_point
        self.best_cost = best_cost


class ConvergenceError(NumericalError):
    def __init__(self, detail: str, trace: Any = None):
        super().__init__(detail)
        self.trace = trace


class PixelFailureError(NumericalError):
    def __init__(self, failed: int, total: int, errors: Sequence[str] = ()):
        super().__init__(
            f"{failed} of {total} pixels failed to unmix "
            f"({100.0 * failed / max(total, 1):.2f}%)"
        )
        self.failed = failed
        self.total = total
        self.errors = list(errors)
