"""
Convenience factory methods for common Result failures.

    ResultFailures.validation_error("subset must not be empty")
    ResultFailures.capture(lambda: risky(), "dataio.load_tables")
"""

from __future__ import annotations

from collections.abc import Callable
from typing import Any, TypeVar

from railway.failure import ErrorCode
from railway.result import Result

T = TypeVar("T")


class ResultFailures:
    """Factory methods for common failure types, plus exception → ErrorCode capture."""

    @staticmethod
    def validation_error(message: str) -> Result[Any]:
        """Invalid argument — empty collection, out-of-range value."""
        return Result.failure(ErrorCode.VALIDATION_ERROR, message)

    @staticmethod
    def io_error(message: str, exception: BaseException | None = None) -> Result[Any]:
        """Filesystem problem."""
        return Result.failure(ErrorCode.IO_ERROR, message, exception)

    @staticmethod
    def capture(computation: Callable[[], T], message: str) -> Result[T]:
        """
        Run a computation that may raise, inferring the failure code from the exception.

        The code comes from the exception's own `code` attribute when it carries
        an ErrorCode, otherwise from map_exception_to_code.
        """
        try:
            return Result.success(computation())
        except Exception as e:
            return Result.failure(map_exception_to_code(e), message, e)


def map_exception_to_code(exception: BaseException) -> ErrorCode:
    """Map a Python exception to the most appropriate ErrorCode."""
    code = getattr(exception, "code", None)
    if isinstance(code, ErrorCode):
        return code
    match exception:
        case OSError():
            return ErrorCode.IO_ERROR
        case ValueError() | TypeError() | KeyError():
            return ErrorCode.VALIDATION_ERROR
        case _:
            return ErrorCode.UNKNOWN_ERROR
