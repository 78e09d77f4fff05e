"""
Railway-Oriented Programming (ROP) Framework for Python.

Explicit, composable, functional error handling — stage functions return
Result instead of raising.

    from railway import Result, ErrorCode

    def check_rate(rate: float) -> Result[float]:
        if not 0.0 <= rate < 1.0:
            return Result.failure(ErrorCode.VALIDATION_ERROR, f"rate {rate} outside [0, 1)")
        return Result.success(rate)

    result = check_rate(0.1).map(lambda r: f"masking {r:.0%} of cells")
"""

from railway.assertions import ResultAssertions
from railway.execution import (
    ComposableExecutionContext,
    ExecutionContext,
    LoggingExecutionContext,
)
from railway.exit_codes import ErrorReport, ExitCodeMapper, report_outcome
from railway.failure import ErrorCode, FailureDescription
from railway.result import Failure, Result, Success
from railway.result_failures import ResultFailures

__all__ = [
    "Result",
    "Success",
    "Failure",
    "ErrorCode",
    "FailureDescription",
    "ExecutionContext",
    "LoggingExecutionContext",
    "ComposableExecutionContext",
    "ExitCodeMapper",
    "ErrorReport",
    "report_outcome",
    "ResultFailures",
    "ResultAssertions",
]

__version__ = "1.1.0"
