"""
Estimators — the three model families behind the Estimator port.

  CM  Combined Model: per-modality autoencoders + neural regressor (latent fusion)
  RF  random forest on the concatenated raw features (early fusion)
  LR  least squares on the concatenated raw features (early fusion)

Each estimator owns its grid from GridSettings. Cells are the cartesian product
over the grid's keys in sorted order; `complexity` is the tie-break key of
grid search:

  LR  p + 1 coefficients
  RF  n_trees · ⌈n_train / min_samples_leaf⌉, an upper bound on stored leaf values
  CM  exact parameter count of the autoencoders and the regressor
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Any

import structlog

from fuselab.config import ForestConfig, GridSettings, ModelKind, TrainConfig
from fuselab.dataio import validation_split
from fuselab.domain.models import Dataset
from fuselab.domain.ports import Estimator, FittedModel, Hparams, HparamValue
from fuselab.errors import ArgumentError
from fuselab.forest import Forest, fit_forest, forest_predict
from fuselab.linreg import LinearModel, fit_ols, lin_predict
from fuselab.neural import (
    CombinedCurves,
    CombinedModel,
    init_combined,
    predict_combined,
    train_combined,
)
from fuselab.numerics import Rng, Vector

log = structlog.get_logger()


def grid_cells(grid: Mapping[str, Sequence[HparamValue]]) -> list[dict[str, HparamValue]]:
    """Cartesian product of a grid, keys sorted; an empty grid or empty axis is an error."""
    if not grid:
        raise ArgumentError("hyperparameter grid must not be empty")
    keys = sorted(grid)
    empty = [k for k in keys if not grid[k]]
    if empty:
        raise ArgumentError(f"hyperparameter grid has empty axes {empty}")
    axes = [grid[k] for k in keys]
    return [dict(zip(keys, values, strict=True)) for values in itertools.product(*axes)]


def describe(hparams: Hparams) -> dict[str, str]:
    """String form of a cell, as stored in results."""
    return {k: str(hparams[k]) for k in sorted(hparams)}


# ── fitted models ────────────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class FittedLinear:
    model: LinearModel

    @property
    def n_parameters(self) -> int:
        return self.model.n_parameters

    def predict(self, dataset: Dataset) -> Vector:
        return lin_predict(self.model, dataset.features)


@dataclass(frozen=True, slots=True)
class FittedForest:
    forest: Forest

    @property
    def n_parameters(self) -> int:
        return sum(t.node_count for t in self.forest.trees)

    def predict(self, dataset: Dataset) -> Vector:
        return forest_predict(self.forest, dataset.features)


@dataclass(frozen=True, slots=True)
class FittedCombined:
    model: CombinedModel
    curves: CombinedCurves

    @property
    def n_parameters(self) -> int:
        return self.model.n_parameters

    def predict(self, dataset: Dataset) -> Vector:
        return predict_combined(self.model, dataset)


# ── estimators ───────────────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class LinearEstimator:
    ridges: tuple[float, ...]

    @property
    def kind(self) -> str:
        return "LR"

    def cells(self) -> list[dict[str, HparamValue]]:
        return grid_cells({"ridge": list(self.ridges)})

    def complexity(self, hparams: Hparams, train: Dataset) -> int:
        return train.n_features + 1

    def fit(self, train: Dataset, hparams: Hparams, seed: int) -> FittedModel:
        return FittedLinear(fit_ols(train.features, train.target, float(hparams["ridge"])))


@dataclass(frozen=True, slots=True)
class ForestEstimator:
    """Regression forest; the grid overrides n_trees, min_samples_leaf and mtry of `base`."""

    base: ForestConfig
    grid: Mapping[str, Sequence[HparamValue]]

    @property
    def kind(self) -> str:
        return "RF"

    def cells(self) -> list[dict[str, HparamValue]]:
        return grid_cells(self.grid)

    def _config(self, hparams: Hparams, seed: int) -> ForestConfig:
        return self.base.model_copy(update={**hparams, "seed": seed})

    def complexity(self, hparams: Hparams, train: Dataset) -> int:
        cfg = self._config(hparams, 0)
        return cfg.n_trees * math.ceil(train.n_rows / cfg.min_samples_leaf)

    def fit(self, train: Dataset, hparams: Hparams, seed: int) -> FittedModel:
        return FittedForest(fit_forest(train.features, train.target, self._config(hparams, seed)))


@dataclass(frozen=True, slots=True)
class CombinedEstimator:
    """
    Combined Model over the modalities present in the training schema.

    The grid overrides latent_dim, learning_rate and hidden of `base`. Early
    stopping uses a validation slice carved from the training rows passed to fit.
    """

    base: TrainConfig
    grid: Mapping[str, Sequence[HparamValue]]

    @property
    def kind(self) -> str:
        return "CM"

    def cells(self) -> list[dict[str, HparamValue]]:
        return grid_cells(self.grid)

    def _config(self, hparams: Hparams, seed: int) -> TrainConfig:
        return self.base.model_copy(update={**hparams, "seed": seed})

    def complexity(self, hparams: Hparams, train: Dataset) -> int:
        cfg = self._config(hparams, 0)
        return init_combined(train.schema, train.schema.modalities, cfg, Rng(0)).n_parameters

    def fit(self, train: Dataset, hparams: Hparams, seed: int) -> FittedModel:
        cfg = self._config(hparams, seed)
        rng = Rng(seed)
        fit_rows, val_rows = validation_split(
            train, cfg.validation_fraction, cfg.validation_mode, rng.child(0)
        )
        model = init_combined(train.schema, train.schema.modalities, cfg, rng.child(1))
        fitted, curves = train_combined(model, fit_rows, val_rows, cfg, rng.child(2))
        regression = curves.regression
        log.debug(
            "estimators.cm_fitted",
            hparams=describe(hparams),
            epochs_run=regression.epochs_run if regression else 0,
            best_validation=regression.best_validation if regression else float("nan"),
        )
        return FittedCombined(fitted, curves)


def estimator_for(
    kind: ModelKind, forest: ForestConfig, train: TrainConfig, grid: GridSettings
) -> Estimator:
    """Estimator of one model family with its configured grid."""
    match kind:
        case "LR":
            return LinearEstimator(tuple(grid.lr.ridge))
        case "RF":
            axes: dict[str, Any] = grid.rf.model_dump()
            return ForestEstimator(forest, axes)
        case "CM":
            return CombinedEstimator(train, grid.cm.model_dump())
    raise ArgumentError(f"unknown model kind {kind!r}")
