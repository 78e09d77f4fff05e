"""
Integration test fixtures — isolated environment and CLI invocation.

Every test runs with no FUSELAB_* variables set, so only flags, config files
and defaults shape the resolved configuration. `cli` runs `fuselab.main.main`
in-process and returns the exit code with captured stdout and stderr.
"""

from __future__ import annotations

import os
from collections.abc import Callable
from dataclasses import dataclass

import pytest

from fuselab.main import main
from tests.conftest import fixture_path


@dataclass(frozen=True, slots=True)
class CliOutcome:
    code: int
    out: str
    err: str


Cli = Callable[..., CliOutcome]


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    """Drop FUSELAB_* variables inherited from the developer's shell."""
    for name in list(os.environ):
        if name.startswith("FUSELAB_"):
            monkeypatch.delenv(name)


@pytest.fixture()
def cli(capsys: pytest.CaptureFixture[str]) -> Cli:
    """Run fuselab in-process with the given argv."""

    def invoke(*argv: str) -> CliOutcome:
        capsys.readouterr()
        code = main(list(argv))
        captured = capsys.readouterr()
        return CliOutcome(code, captured.out, captured.err)

    return invoke


@pytest.fixture()
def fast_config() -> str:
    return str(fixture_path("fast.conf"))
