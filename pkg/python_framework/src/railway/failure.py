"""
Failure description — structured error information for the failure track.

An ErrorCode enum plus an immutable descriptor carrying the message, the
originating exception (if any) and a timestamp.

Codes are grouped by how a command-line front end reports them: usage and
I/O problems (exit code 2) versus runtime and model errors (exit code 1).
See railway.exit_codes for the mapping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import UTC, datetime
from enum import Enum, unique


@unique
class ErrorCode(Enum):
    """
    Structured error codes for the failure track.

    - Usage / I-O (→ exit 2): IO_ERROR, CONFIGURATION_ERROR
    - Runtime / model (→ exit 1): everything else
    """

    # --- Usage and I/O ---
    IO_ERROR = "IO_ERROR"
    """Missing file, unwritable path, unreadable directory."""

    CONFIGURATION_ERROR = "CONFIGURATION_ERROR"
    """Invalid settings, unknown config key, bad flag value."""

    # --- Input contracts ---
    VALIDATION_ERROR = "VALIDATION_ERROR"
    """Invalid argument: out-of-range rate, empty subset, empty grid."""

    SCHEMA_ERROR = "SCHEMA_ERROR"
    """Input table lacks a required column."""

    PARSE_ERROR = "PARSE_ERROR"
    """Malformed record in an input file."""

    ENCODING_ERROR = "ENCODING_ERROR"
    """Category value outside the fitted category list."""

    # --- Numerical contracts ---
    SHAPE_ERROR = "SHAPE_ERROR"
    """Non-conforming array dimensions."""

    DOMAIN_ERROR = "DOMAIN_ERROR"
    """Parameter outside its mathematical domain (e.g. negative sd)."""

    STATE_ERROR = "STATE_ERROR"
    """Object used before it was fitted."""

    IMPUTATION_ERROR = "IMPUTATION_ERROR"
    """Column cannot be imputed (no observed value)."""

    SPLIT_ERROR = "SPLIT_ERROR"
    """Train/test partition would be empty."""

    METRIC_ERROR = "METRIC_ERROR"
    """Metric undefined for the given inputs (e.g. R² on constant y)."""

    # --- Catch-all ---
    TECHNICAL_ERROR = "TECHNICAL_ERROR"
    """Unexpected failure inside an execution context."""

    UNKNOWN_ERROR = "UNKNOWN_ERROR"
    """Unclassified failure."""


@dataclass(frozen=True, slots=True)
class FailureDescription:
    """
    Immutable failure descriptor carrying error code, message, optional exception, and timestamp.

    >>> desc = FailureDescription(ErrorCode.SPLIT_ERROR, "empty test partition")
    >>> desc.code
    <ErrorCode.SPLIT_ERROR: 'SPLIT_ERROR'>
    >>> desc.message
    'empty test partition'
    """

    code: ErrorCode
    message: str
    exception: BaseException | None = field(default=None, repr=False)
    timestamp: datetime = field(default_factory=lambda: datetime.now(UTC))

    def detail(self) -> str:
        """Message followed by the exception text, when one is attached."""
        if self.exception is None:
            return self.message
        return f"{self.message}: {self.exception}"
