"""
Atomic output staging as an ExecutionContext.

A command writes into `context.path`, a temporary directory created next to
the output directory. When the computation succeeds every staged file is moved
into the output directory (os.replace, one file at a time); when it fails or
raises, the staging directory is removed and the output directory is left as
it was. Files already in the output directory that the command does not write
are never touched.

    staging = AtomicOutputContext(out_dir)
    result = ComposableExecutionContext(
        LoggingExecutionContext(operation="run", logger=log), staging
    ).execute(lambda: run_command(config, staging.path))
"""

from __future__ import annotations

import os
import shutil
import tempfile
from collections.abc import Callable
from pathlib import Path
from typing import TypeVar

import structlog
from railway import Result, ResultFailures

from fuselab.errors import StateError

log = structlog.get_logger()

T = TypeVar("T")


class AtomicOutputContext:
    """Stage outputs in a sibling temp dir; publish on success, discard on failure."""

    def __init__(self, target: Path) -> None:
        self._target = target
        self._staging: Path | None = None

    @property
    def target(self) -> Path:
        return self._target

    @property
    def path(self) -> Path:
        if self._staging is None:
            raise StateError("staging directory is only available while the context executes")
        return self._staging

    def execute(self, computation: Callable[[], Result[T]]) -> Result[T]:
        if self._target.exists() and not self._target.is_dir():
            return ResultFailures.io_error(f"output path {self._target} is not a directory")
        parent = self._target.resolve().parent
        try:
            parent.mkdir(parents=True, exist_ok=True)
            self._staging = Path(tempfile.mkdtemp(prefix=f".{self._target.name}.", dir=parent))
        except OSError as e:
            return ResultFailures.io_error(f"cannot stage outputs for {self._target}", e)
        try:
            result = computation()
            if result.is_success():
                try:
                    published = self._publish(self._staging)
                except OSError as e:
                    return ResultFailures.io_error(f"cannot publish outputs to {self._target}", e)
                log.info("output.published", target=str(self._target), files=published)
            else:
                log.info("output.discarded", target=str(self._target))
            return result
        finally:
            shutil.rmtree(self._staging, ignore_errors=True)
            self._staging = None

    def _publish(self, staging: Path) -> int:
        files = sorted(p for p in staging.rglob("*") if p.is_file())
        for source in files:
            destination = self._target / source.relative_to(staging)
            destination.parent.mkdir(parents=True, exist_ok=True)
            os.replace(source, destination)
        return len(files)
