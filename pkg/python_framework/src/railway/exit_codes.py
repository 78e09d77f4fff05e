"""
Command-line integration — ErrorCode → process exit code mapping and error reports.

    code = ExitCodeMapper.map_error_code(ErrorCode.IO_ERROR)  # → 2
    exit_code = report_outcome(result, stream=sys.stderr, program="fuselab")
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Any

from railway.failure import ErrorCode, FailureDescription
from railway.result import Result

EXIT_SUCCESS = 0
EXIT_RUNTIME_ERROR = 1
EXIT_USAGE_ERROR = 2


class ExitCodeMapper:
    """Maps ErrorCode values to process exit codes (0 success, 1 runtime, 2 usage/I-O)."""

    _CODE_TO_EXIT: dict[ErrorCode, int] = {
        ErrorCode.IO_ERROR: EXIT_USAGE_ERROR,
        ErrorCode.CONFIGURATION_ERROR: EXIT_USAGE_ERROR,
    }

    @classmethod
    def map_error_code(cls, code: ErrorCode) -> int:
        """Map an ErrorCode to an exit code; unlisted codes are runtime errors."""
        return cls._CODE_TO_EXIT.get(code, EXIT_RUNTIME_ERROR)

    @classmethod
    def map_failure(cls, failure: FailureDescription) -> int:
        return cls.map_error_code(failure.code)


@dataclass(frozen=True, slots=True)
class ErrorReport:
    """
    One-line error summary for a terminal.

        fuselab: SCHEMA_ERROR: dataio.load_tables: missing required column 'sms_count'
    """

    error_code: str
    message: str
    timestamp: str

    @staticmethod
    def from_failure(failure: FailureDescription) -> ErrorReport:
        return ErrorReport(
            error_code=failure.code.value,
            message=failure.detail(),
            timestamp=failure.timestamp.isoformat(),
        )

    def render(self, program: str) -> str:
        return f"{program}: {self.error_code}: {self.message}"


def report_outcome(result: Result[Any], stream: IO[str], program: str) -> int:
    """Write an ErrorReport line for failures and return the exit code for the Result."""
    if result.is_success():
        return EXIT_SUCCESS
    failure = result.error()
    stream.write(ErrorReport.from_failure(failure).render(program) + "\n")
    return ExitCodeMapper.map_failure(failure)
