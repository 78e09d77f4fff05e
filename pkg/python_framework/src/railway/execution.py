"""
Execution contexts — separate WHAT (pure logic) from HOW (side effects).

  - Pure stage functions describe WHAT should happen → return Result[T]
  - An ExecutionContext describes HOW it happens → logging, atomic output, timing
  - They are never mixed inside a stage

Usage:
    context = ComposableExecutionContext(
        LoggingExecutionContext(operation="run", logger=structlog.get_logger()),
        staging_context,
    )
    result = context.execute(lambda: run_command(cfg))
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable
from typing import Any, Protocol, TypeVar, runtime_checkable

from railway.failure import ErrorCode, FailureDescription
from railway.result import Failure, Result

T = TypeVar("T")


# ──────────────────────── Protocols ────────────────────────


@runtime_checkable
class ExecutionContext(Protocol):
    """
    Protocol for execution contexts.

    Any class implementing execute(computation) satisfies this protocol
    via structural typing — no explicit inheritance needed.
    """

    def execute(self, computation: Callable[[], Result[T]]) -> Result[T]:
        """Execute a Result-returning computation within this context."""
        ...


class EventLogger(Protocol):
    """Key-value event logger (structlog's BoundLogger satisfies it)."""

    def info(self, event: str, **kw: Any) -> Any: ...

    def error(self, event: str, **kw: Any) -> Any: ...


class _StdlibEventLogger:
    """Adapter rendering key-value events through the stdlib logging module."""

    def __init__(self, name: str = "railway.execution") -> None:
        self._logger = logging.getLogger(name)

    def info(self, event: str, **kw: Any) -> None:
        self._logger.info("%s %s", event, kw)

    def error(self, event: str, **kw: Any) -> None:
        self._logger.error("%s %s", event, kw)


# ──────────────────────── Logging ────────────────────────


class LoggingExecutionContext:
    """
    Execution context that logs entry, exit, duration, and result state.

    Wraps another context (decorator pattern) to add observability.
    Exceptions escaping the computation are turned into TECHNICAL_ERROR failures.

        ctx = LoggingExecutionContext(operation="ablate", logger=structlog.get_logger())
    """

    def __init__(
        self,
        inner: ExecutionContext | None = None,
        operation: str = "unknown",
        logger: EventLogger | None = None,
    ) -> None:
        self._inner = inner
        self._operation = operation
        self._log: EventLogger = logger or _StdlibEventLogger()

    def execute(self, computation: Callable[[], Result[T]]) -> Result[T]:
        self._log.info("execution.started", operation=self._operation)
        start = time.monotonic()

        try:
            result = computation() if self._inner is None else self._inner.execute(computation)
        except Exception as e:
            self._log.error(
                "execution.crashed",
                operation=self._operation,
                elapsed_s=round(time.monotonic() - start, 3),
                error=str(e),
            )
            return Failure(
                FailureDescription(ErrorCode.TECHNICAL_ERROR, f"Execution failed: {e}", e)
            )

        elapsed = round(time.monotonic() - start, 3)
        if result.is_success():
            self._log.info("execution.completed", operation=self._operation, elapsed_s=elapsed)
        else:
            self._log.error(
                "execution.failed",
                operation=self._operation,
                elapsed_s=elapsed,
                code=result.error().code.value,
                message=result.error().detail(),
            )
        return result


# ──────────────────────── Composable ────────────────────────


class ComposableExecutionContext:
    """
    Compose multiple execution contexts into a single one.

    The first context is the outermost:

        composed = ComposableExecutionContext(logging_ctx, staging_ctx)
        # logging wraps staging wraps computation
    """

    def __init__(self, *contexts: ExecutionContext) -> None:
        if not contexts:
            raise ValueError("At least one execution context is required")
        self._contexts = list(contexts)

    def execute(self, computation: Callable[[], Result[T]]) -> Result[T]:
        wrapped = computation
        for ctx in reversed(self._contexts):
            prev = wrapped
            wrapped = lambda _ctx=ctx, _prev=prev: _ctx.execute(_prev)  # noqa: E731
        return wrapped()
