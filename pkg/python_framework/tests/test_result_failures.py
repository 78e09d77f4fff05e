"""Tests for ResultFailures factories and exception → ErrorCode mapping."""

from __future__ import annotations

import pytest

from railway import ErrorCode, ResultFailures
from railway.result_failures import map_exception_to_code


class CodedError(Exception):
    code = ErrorCode.SPLIT_ERROR


class TestFactories:
    def test_validation_error(self) -> None:
        assert ResultFailures.validation_error("x").error().code is ErrorCode.VALIDATION_ERROR

    def test_io_error_keeps_exception(self) -> None:
        exc = PermissionError("denied")
        assert ResultFailures.io_error("x", exc).error().exception is exc


class TestExceptionMapping:
    @pytest.mark.parametrize(
        "exception,expected",
        [
            (CodedError("x"), ErrorCode.SPLIT_ERROR),
            (FileNotFoundError("a"), ErrorCode.IO_ERROR),
            (PermissionError("a"), ErrorCode.IO_ERROR),
            (ValueError("a"), ErrorCode.VALIDATION_ERROR),
            (KeyError("a"), ErrorCode.VALIDATION_ERROR),
            (RuntimeError("a"), ErrorCode.UNKNOWN_ERROR),
        ],
    )
    def test_map_exception_to_code(self, exception: BaseException, expected: ErrorCode) -> None:
        assert map_exception_to_code(exception) is expected

    def test_capture_success(self) -> None:
        assert ResultFailures.capture(lambda: 3, "never").value() == 3

    def test_capture_infers_code(self) -> None:
        def boom() -> int:
            raise CodedError("empty test partition")

        result = ResultFailures.capture(boom, "harness.split_temporal")
        assert result.error().code is ErrorCode.SPLIT_ERROR
        assert result.error().detail() == "harness.split_temporal: empty test partition"
