"""
Domain models — immutable value objects for feature tables and experiment results.

All models are frozen dataclasses. Array fields are numpy arrays marked
read-only on construction, so a Dataset can be shared freely between
stages and threads.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import StrEnum

import numpy as np
from numpy.typing import ArrayLike, NDArray

from fuselab.errors import ArgumentError, ShapeError


class Modality(StrEnum):
    """Modality tags: passive features, background demographics, baseline PHQ-9."""

    PF = "PF"
    BG = "BG"
    PHQ9 = "PHQ9"


# Fixed order used for latent concatenation and for labels.
MODALITY_ORDER: tuple[Modality, ...] = (Modality.PF, Modality.BG, Modality.PHQ9)


class ColumnKind(StrEnum):
    CONTINUOUS = "continuous"
    CATEGORICAL = "categorical"


def modality_label(subset: frozenset[Modality] | set[Modality]) -> str:
    """Canonical label of a modality subset, e.g. 'PF+BG+PHQ9'."""
    return "+".join(m.value for m in MODALITY_ORDER if m in subset)


def parse_modalities(label: str) -> frozenset[Modality]:
    """Inverse of modality_label; accepts '+' or ',' separators and 'ALL'."""
    text = label.strip().upper()
    if text == "ALL":
        return frozenset(MODALITY_ORDER)
    parts = [p.strip() for p in text.replace(",", "+").split("+") if p.strip()]
    try:
        return frozenset(Modality(p) for p in parts)
    except ValueError as e:
        raise ArgumentError(f"unknown modality in {label!r}") from e


@dataclass(frozen=True, slots=True)
class Column:
    """
    One feature column.

    Categorical columns hold integer category codes (index into `categories`)
    before one-hot encoding. Indicator columns produced by one-hot encoding are
    continuous and remember their `source` categorical column.
    """

    name: str
    modality: Modality
    kind: ColumnKind = ColumnKind.CONTINUOUS
    categories: tuple[str, ...] = ()
    source: str | None = None

    def __post_init__(self) -> None:
        if self.kind is ColumnKind.CATEGORICAL:
            if len(self.categories) < 2:
                raise ArgumentError(f"categorical column {self.name!r} needs >= 2 categories")
            if list(self.categories) != sorted(self.categories):
                raise ArgumentError(f"categories of {self.name!r} must be sorted")
            if len(set(self.categories)) != len(self.categories):
                raise ArgumentError(f"categories of {self.name!r} must be unique")

    @property
    def is_categorical(self) -> bool:
        return self.kind is ColumnKind.CATEGORICAL


@dataclass(frozen=True, slots=True)
class FeatureSchema:
    """Ordered feature columns with unique names."""

    columns: tuple[Column, ...]

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(names) != len(set(names)):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ArgumentError(f"duplicate column names: {dupes}")

    @property
    def width(self) -> int:
        return len(self.columns)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def index_of(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise ArgumentError(f"no column named {name!r}")

    def indices_for(self, modality: Modality) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.columns) if c.modality is modality)

    @property
    def modalities(self) -> frozenset[Modality]:
        return frozenset(c.modality for c in self.columns)

    @property
    def categorical_indices(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.columns) if c.is_categorical)


def _frozen(values: ArrayLike, dtype: type | np.dtype[np.generic] | str) -> NDArray[np.generic]:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, slots=True)
class Dataset:
    """
    Longitudinal table keyed by (participant_id, day_index).

    `features` uses NaN as the missing sentinel. `day_index` counts days since
    the participant's first observed day. `row_ids` are stable provenance ids
    that survive subsetting. `oracle` holds per-row ground-truth columns of
    synthetic data (never used as features).
    """

    schema: FeatureSchema
    participant_ids: NDArray[np.str_]
    day_index: NDArray[np.int64]
    dates: NDArray[np.str_]
    features: NDArray[np.float64]
    target: NDArray[np.float64]
    row_ids: NDArray[np.int64]
    oracle: Mapping[str, NDArray[np.float64]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        set_ = object.__setattr__
        set_(self, "participant_ids", _frozen(self.participant_ids, np.str_))
        set_(self, "day_index", _frozen(self.day_index, np.int64))
        set_(self, "dates", _frozen(self.dates, np.str_))
        set_(self, "features", _frozen(self.features, np.float64).reshape(-1, self.schema.width))
        set_(self, "target", _frozen(self.target, np.float64))
        set_(self, "row_ids", _frozen(self.row_ids, np.int64))
        set_(self, "oracle", {k: _frozen(v, np.float64) for k, v in self.oracle.items()})

        n = self.participant_ids.shape[0]
        per_row = {
            "day_index": self.day_index,
            "dates": self.dates,
            "target": self.target,
            "row_ids": self.row_ids,
            **{f"oracle[{k}]": v for k, v in self.oracle.items()},
        }
        for name, arr in per_row.items():
            if arr.shape != (n,):
                raise ShapeError(f"{name} has shape {arr.shape}, expected ({n},)")
        if self.features.shape[0] != n:
            raise ShapeError(f"features have {self.features.shape[0]} rows, expected {n}")
        if n and self.day_index.min() < 0:
            raise ArgumentError("day_index must be >= 0")
        keys = set(zip(self.participant_ids.tolist(), self.day_index.tolist(), strict=True))
        if len(keys) != n:
            raise ArgumentError("(participant_id, day_index) pairs must be unique")

    # ── views ──

    @property
    def n_rows(self) -> int:
        return int(self.participant_ids.shape[0])

    @property
    def n_features(self) -> int:
        return self.schema.width

    @property
    def participants(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.participant_ids.tolist())))

    def column(self, name: str) -> NDArray[np.float64]:
        return self.features[:, self.schema.index_of(name)]

    def missing_mask(self) -> NDArray[np.bool_]:
        return np.isnan(self.features)

    # ── derivations ──

    def take(self, index: ArrayLike) -> Dataset:
        """Row subset by integer index or boolean mask, keeping every per-row array."""
        idx = np.asarray(index)
        if idx.dtype == np.bool_:
            idx = np.flatnonzero(idx)
        return Dataset(
            schema=self.schema,
            participant_ids=self.participant_ids[idx],
            day_index=self.day_index[idx],
            dates=self.dates[idx],
            features=self.features[idx],
            target=self.target[idx],
            row_ids=self.row_ids[idx],
            oracle={k: v[idx] for k, v in self.oracle.items()},
        )

    def with_features(self, schema: FeatureSchema, features: ArrayLike) -> Dataset:
        return replace(self, schema=schema, features=np.asarray(features, dtype=np.float64))


@dataclass(frozen=True, slots=True)
class SeedScores:
    """Train/test metrics of one repeat, with the hyperparameters it selected."""

    seed: int
    train_mse: float
    test_mse: float
    train_r2: float
    test_r2: float
    chosen_hparams: Mapping[str, str] = field(default_factory=dict)

    @property
    def overfit_gap(self) -> float:
        """Train R² minus test R²."""
        return self.train_r2 - self.test_r2


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def _sample_sd(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    m = _mean(values)
    return math.sqrt(math.fsum((v - m) ** 2 for v in values) / (len(values) - 1))


@dataclass(frozen=True, slots=True)
class ExperimentResult:
    """
    Outcome of one experiment: per-seed scores plus a spec echo.

    Aggregates are computed from `per_seed` on access, so they can never
    disagree with the rows they summarise.
    """

    model: str
    modalities: frozenset[Modality]
    split_mode: str
    train_weeks: int | None
    test_fraction: float | None
    per_seed: tuple[SeedScores, ...]
    provenance: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.per_seed:
            raise ArgumentError("an experiment result needs at least one seed")
        object.__setattr__(self, "per_seed", tuple(sorted(self.per_seed, key=lambda s: s.seed)))

    @property
    def modality_label(self) -> str:
        return modality_label(self.modalities)

    def _metric(self, name: str) -> list[float]:
        return [float(getattr(s, name)) for s in self.per_seed]

    def mean(self, metric: str) -> float:
        return _mean(self._metric(metric))

    def sd(self, metric: str) -> float:
        return _sample_sd(self._metric(metric))

    @property
    def mean_test_r2(self) -> float:
        return self.mean("test_r2")

    @property
    def mean_test_mse(self) -> float:
        return self.mean("test_mse")

    @property
    def mean_overfit_gap(self) -> float:
        return self.mean("overfit_gap")
