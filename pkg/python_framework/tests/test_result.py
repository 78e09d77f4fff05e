"""
Tests for the Result monad.

Tests cover:
  - Success/Failure creation and introspection
  - map, flat_map transformations
  - Static factories (failure_from, all_of)
  - Pattern matching (match/case)
"""

from __future__ import annotations

import pytest

from railway import ErrorCode, Failure, FailureDescription, Result, Success


class TestCreation:
    def test_success_holds_value(self) -> None:
        result = Result.success(3)
        assert result.is_success()
        assert result.value() == 3

    def test_success_rejects_none(self) -> None:
        with pytest.raises(TypeError):
            Success(None)

    def test_failure_holds_description(self) -> None:
        result: Result[int] = Result.failure(ErrorCode.SPLIT_ERROR, "empty test partition")
        assert result.is_failure()
        assert result.error().code is ErrorCode.SPLIT_ERROR

    def test_value_on_failure_raises(self) -> None:
        with pytest.raises(ValueError, match="empty"):
            Result.failure(ErrorCode.SPLIT_ERROR, "empty").value()

    def test_error_on_success_raises(self) -> None:
        with pytest.raises(ValueError):
            Result.success(1).error()


class TestTransformations:
    def test_map_transforms_success(self) -> None:
        assert Result.success(5).map(lambda x: x * 2).value() == 10

    def test_map_passes_failure_through(self) -> None:
        result: Result[int] = Result.failure(ErrorCode.SHAPE_ERROR, "bad")
        assert result.map(lambda x: x * 2).error().message == "bad"

    def test_flat_map_short_circuits(self) -> None:
        calls: list[int] = []

        def stage(x: int) -> Result[int]:
            calls.append(x)
            return Result.success(x + 1)

        result: Result[int] = Result.failure(ErrorCode.SCHEMA_ERROR, "no column")
        assert result.flat_map(stage).is_failure()
        assert calls == []


class TestFactories:
    def test_failure_from_keeps_description(self) -> None:
        description = FailureDescription(ErrorCode.TECHNICAL_ERROR, "failed")
        result: Result[int] = Result.failure_from(description)
        assert result.error() is description

    def test_all_of_returns_first_failure(self) -> None:
        results: list[Result[int]] = [
            Result.success(1),
            Result.failure(ErrorCode.SPLIT_ERROR, "first"),
            Result.failure(ErrorCode.SHAPE_ERROR, "second"),
        ]
        assert Result.all_of(results).error().message == "first"

    def test_all_of_collects_values(self) -> None:
        assert Result.all_of([Result.success(1), Result.success(2)]).value() == [1, 2]


class TestPatternMatching:
    def test_match_success_and_failure(self) -> None:
        def describe(result: Result[int]) -> str:
            match result:
                case Success(v):
                    return f"ok {v}"
                case Failure(err):
                    return f"err {err.code.value}"
            return "unreachable"

        assert describe(Result.success(2)) == "ok 2"
        assert describe(Result.failure(ErrorCode.IO_ERROR, "x")) == "err IO_ERROR"

    def test_failure_equality_ignores_timestamp(self) -> None:
        assert Result.failure(ErrorCode.IO_ERROR, "x") == Result.failure(ErrorCode.IO_ERROR, "x")

    def test_bool_is_success(self) -> None:
        assert Result.success(1)
        assert not Result.failure(ErrorCode.IO_ERROR, "x")
