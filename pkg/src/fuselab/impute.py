"""
MissForest — iterative random-forest imputation of mixed continuous/categorical columns.

Runs on the raw (pre-one-hot) feature matrix: categorical columns hold category
codes and are imputed with classification forests, continuous columns with
regression forests. Predictors for a column are all other feature columns; the
target is never used.

Each sweep visits the columns with missing cells in ascending order of missing
count (ties by column index) and refits that column's forest on its observed
rows, so later columns see earlier columns' fresh imputations. After a sweep:

  Δ_continuous  = Σ (new − old)² / Σ new²   over imputed continuous cells
  Δ_categorical = share of imputed categorical cells whose category changed

The loop stops at the first sweep whose deltas are all ≥ the previous sweep's
(only kinds with missing cells count) and returns the previous sweep's matrix,
or after max_iter sweeps.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import structlog
from numpy.typing import NDArray

from fuselab.config import ImputeConfig
from fuselab.domain.models import Dataset
from fuselab.errors import ArgumentError, ImputationError, ShapeError
from fuselab.forest import Forest, Task, fit_forest, forest_predict
from fuselab.numerics import Matrix, Vector, derive_seed

log = structlog.get_logger()


@dataclass(frozen=True, slots=True)
class DeltaStep:
    iteration: int
    delta_continuous: float
    delta_categorical: float


class Imputation(NamedTuple):
    dataset: Dataset
    iterations_run: int
    trace: tuple[DeltaStep, ...]


# ── starting values ──────────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class FillValues:
    """Column means (continuous) and modes (categorical codes) used as starting values."""

    values: Vector

    @staticmethod
    def fit(dataset: Dataset) -> FillValues:
        features = dataset.features
        missing = np.isnan(features)
        values = np.zeros(dataset.n_features)
        for j, column in enumerate(dataset.schema.columns):
            observed = features[~missing[:, j], j]
            if observed.size == 0:
                if missing[:, j].any():
                    raise ImputationError(f"column {column.name!r} has no observed values")
                continue
            if column.is_categorical:
                counts = np.bincount(observed.astype(np.int64), minlength=len(column.categories))
                values[j] = float(counts.argmax())
            else:
                values[j] = float(observed.mean())
        return FillValues(values=values)

    def apply(self, dataset: Dataset) -> Dataset:
        if self.values.shape[0] != dataset.n_features:
            raise ShapeError("fill values do not match the dataset width")
        filled = np.where(np.isnan(dataset.features), self.values, dataset.features)
        return dataset.with_features(dataset.schema, filled)


def initial_fill(dataset: Dataset) -> Dataset:
    """Mean (continuous) / mode (categorical, ties → smallest category) fill of missing cells."""
    if not np.isnan(dataset.features).any():
        return dataset
    return FillValues.fit(dataset).apply(dataset)


# ── sweeps ───────────────────────────────────────────────────────────────────


# (previous matrix, visit order, iteration) -> matrix after one pass
Sweep = Callable[[Matrix, list[int], int], Matrix]


def _visit_order(missing: NDArray[np.bool_]) -> list[int]:
    counts = missing.sum(axis=0)
    return [int(j) for j in np.argsort(counts, kind="stable") if counts[j] > 0]


def _deltas(
    new: Matrix, old: Matrix, missing: NDArray[np.bool_], categorical: NDArray[np.bool_]
) -> tuple[float, float]:
    cont_cells = missing & ~categorical[None, :]
    cat_cells = missing & categorical[None, :]
    delta_cont = 0.0
    if cont_cells.any():
        change = float(np.sum((new[cont_cells] - old[cont_cells]) ** 2))
        scale = float(np.sum(new[cont_cells] ** 2))
        delta_cont = change / scale if scale > 0 else 0.0
    delta_cat = 0.0
    if cat_cells.any():
        delta_cat = float(np.mean(new[cat_cells] != old[cat_cells]))
    return delta_cont, delta_cat


def _stalled(current: DeltaStep, previous: DeltaStep, has_cont: bool, has_cat: bool) -> bool:
    checks = []
    if has_cont:
        checks.append(current.delta_continuous >= previous.delta_continuous)
    if has_cat:
        checks.append(current.delta_categorical >= previous.delta_categorical)
    return bool(checks) and all(checks)


def _column_forest(
    dataset: Dataset, x: Matrix, rows: NDArray[np.bool_], j: int, config: ImputeConfig, seed: int
) -> Forest:
    column = dataset.schema.columns[j]
    predictors = np.delete(x[rows], j, axis=1)
    if column.is_categorical:
        return fit_forest(
            predictors,
            x[rows, j],
            config.forest(seed),
            Task.CLASSIFICATION,
            len(column.categories),
        )
    return fit_forest(predictors, x[rows, j], config.forest(seed), Task.REGRESSION)


def _iterate(
    dataset: Dataset,
    start: Matrix,
    missing: NDArray[np.bool_],
    config: ImputeConfig,
    sweep: Sweep,
) -> Imputation:
    categorical = np.array([c.is_categorical for c in dataset.schema.columns], dtype=bool)
    has_cont = bool((missing & ~categorical[None, :]).any())
    has_cat = bool((missing & categorical[None, :]).any())
    order = _visit_order(missing)

    previous: Matrix = start
    previous_step: DeltaStep | None = None
    trace: list[DeltaStep] = []
    for iteration in range(1, config.max_iter + 1):
        current = sweep(previous, order, iteration)
        step = DeltaStep(iteration, *_deltas(current, previous, missing, categorical))
        trace.append(step)
        log.info(
            "impute.iteration",
            iteration=iteration,
            delta_continuous=step.delta_continuous,
            delta_categorical=step.delta_categorical,
        )
        if previous_step is not None and _stalled(step, previous_step, has_cont, has_cat):
            log.info("impute.converged", iterations_run=iteration, kept_iteration=iteration - 1)
            kept = dataset.with_features(dataset.schema, previous)
            return Imputation(kept, iteration, tuple(trace))
        previous, previous_step = current, step
    final = dataset.with_features(dataset.schema, previous)
    return Imputation(final, config.max_iter, tuple(trace))


def missforest(dataset: Dataset, config: ImputeConfig) -> Imputation:
    """Impute every missing feature cell; observed cells are never modified."""
    missing = np.isnan(dataset.features)
    if not missing.any():
        return Imputation(dataset, 0, ())
    start = initial_fill(dataset).features
    width = dataset.n_features

    def sweep(previous: Matrix, order: list[int], iteration: int) -> Matrix:
        current = previous.copy()
        for j in order:
            rows = ~missing[:, j]
            forest = _column_forest(
                dataset, current, rows, j, config, derive_seed(config.seed, iteration * width + j)
            )
            current[~rows, j] = forest_predict(forest, np.delete(current[~rows], j, axis=1))
        return current

    log.info("impute.started", rows=dataset.n_rows, missing_cells=int(missing.sum()))
    return _iterate(dataset, start, missing, config, sweep)


def impute_with(train_imputed: Dataset, dataset: Dataset, config: ImputeConfig) -> Imputation:
    """
    Impute `dataset` (held-out rows) with forests fitted on complete training rows only.

    Starting values are the training means/modes; each column's forest is fitted
    once on `train_imputed` and reused across sweeps.
    """
    if train_imputed.schema != dataset.schema:
        raise ShapeError("training and held-out datasets have different schemas")
    if np.isnan(train_imputed.features).any():
        raise ArgumentError("impute_with needs fully imputed training rows")
    missing = np.isnan(dataset.features)
    if not missing.any():
        return Imputation(dataset, 0, ())
    start = FillValues.fit(train_imputed).apply(dataset).features
    every_row = np.ones(train_imputed.n_rows, dtype=bool)
    forests = {
        j: _column_forest(
            train_imputed, train_imputed.features, every_row, j, config, derive_seed(config.seed, j)
        )
        for j in _visit_order(missing)
    }

    def sweep(previous: Matrix, order: list[int], iteration: int) -> Matrix:
        current = previous.copy()
        for j in order:
            rows = missing[:, j]
            current[rows, j] = forest_predict(forests[j], np.delete(current[rows], j, axis=1))
        return current

    log.info("impute.held_out_started", rows=dataset.n_rows, missing_cells=int(missing.sum()))
    return _iterate(dataset, start, missing, config, sweep)


# ── error measures ───────────────────────────────────────────────────────────


def nrmse(truth: Dataset, imputed: Dataset, mask: NDArray[np.bool_]) -> float:
    """
    Normalised RMSE over masked continuous cells.

    Each cell's error is divided by the sd of its column in `truth`.
    """
    continuous = np.array([not c.is_categorical for c in truth.schema.columns], dtype=bool)
    cells = mask & continuous[None, :]
    if not cells.any():
        raise ArgumentError("no masked continuous cells to score")
    sd = truth.features.std(axis=0)
    scale = np.where(sd > 0, sd, 1.0)
    errors = (truth.features - imputed.features) / scale
    return float(np.sqrt(np.mean(errors[cells] ** 2)))


def pfc(truth: Dataset, imputed: Dataset, mask: NDArray[np.bool_]) -> float:
    """Proportion of falsely classified masked categorical cells."""
    categorical = np.array([c.is_categorical for c in truth.schema.columns], dtype=bool)
    cells = mask & categorical[None, :]
    if not cells.any():
        raise ArgumentError("no masked categorical cells to score")
    return float(np.mean(truth.features[cells] != imputed.features[cells]))
