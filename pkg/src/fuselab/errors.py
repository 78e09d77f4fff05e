"""
Typed exceptions raised by the pure transforms and numerical kernels.

numerics, forest, neural, linreg, synth, impute and the in-memory dataio
transforms raise these. Filesystem and orchestration entry points wrap their
bodies in ResultFailures.capture, which reads the `code` attribute to pick the
ErrorCode of the failure.
"""

from __future__ import annotations

from typing import ClassVar

from railway import ErrorCode


class FuselabError(Exception):
    """Base class; subclasses pin the ErrorCode used on the failure track."""

    code: ClassVar[ErrorCode] = ErrorCode.UNKNOWN_ERROR


class ArgumentError(FuselabError, ValueError):
    code = ErrorCode.VALIDATION_ERROR


class ShapeError(FuselabError, ValueError):
    code = ErrorCode.SHAPE_ERROR


class DomainError(FuselabError, ValueError):
    code = ErrorCode.DOMAIN_ERROR


class StateError(FuselabError, RuntimeError):
    code = ErrorCode.STATE_ERROR


class SchemaError(FuselabError, KeyError):
    code = ErrorCode.SCHEMA_ERROR

    def __str__(self) -> str:
        # KeyError quotes its argument; keep the plain message
        return str(self.args[0]) if self.args else ""


class ParseError(FuselabError, ValueError):
    code = ErrorCode.PARSE_ERROR


class EncodingError(FuselabError, ValueError):
    code = ErrorCode.ENCODING_ERROR


class ImputationError(FuselabError, ValueError):
    code = ErrorCode.IMPUTATION_ERROR


class SplitError(FuselabError, ValueError):
    code = ErrorCode.SPLIT_ERROR


class MetricError(FuselabError, ValueError):
    code = ErrorCode.METRIC_ERROR
