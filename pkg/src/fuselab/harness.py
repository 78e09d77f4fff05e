"""
Experiment harness — splits, metrics, grid search and repeated seeded runs.

One experiment = one model family × one modality subset × one split definition,
repeated n_repeats times. Repeat r draws everything from
seed_r = derive_seed(master_seed, r):

  default stage order:
      impute all rows → one-hot → split → select modalities → scale → grid search
      → final fit on the full training rows → score train and test
  leakage_safe:
      split → impute training rows → impute test rows with the training forests
      → one-hot → select → scale → grid search → fit → score

The standardizer is fitted on training rows, or on all rows with paper_order.
Provenance counters record, per stage, how many test rows took part in
fitting; with leakage_safe and without paper_order all of them are zero.

Imputation is expensive, so prepared (imputed + encoded) matrices are kept in a
PreparedCache keyed by everything they depend on; ablation and sweep runs over
the same dataset share it.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field, replace
from typing import TypeVar

import numpy as np
import structlog
from numpy.typing import ArrayLike, NDArray
from railway import Result, ResultFailures

from fuselab.config import (
    ForestConfig,
    GridSettings,
    ImputeConfig,
    ModelKind,
    RunConfig,
    SplitSpec,
    TrainConfig,
)
from fuselab.dataio import (
    apply_standardizer,
    fit_standardizer,
    one_hot,
    select_modalities,
    validation_split,
    week_index,
)
from fuselab.domain.models import (
    MODALITY_ORDER,
    Dataset,
    ExperimentResult,
    Modality,
    SeedScores,
    modality_label,
    parse_modalities,
)
from fuselab.domain.ports import Estimator, FittedModel, Hparams
from fuselab.errors import ArgumentError, MetricError, ShapeError, SplitError
from fuselab.estimators import describe, estimator_for
from fuselab.impute import impute_with, missforest
from fuselab.numerics import Rng, Vector, derive_seed, seeded_shuffle

log = structlog.get_logger()

T = TypeVar("T")

STAGES = ("impute", "scale", "grid_search", "fit")

ABLATION_SUBSETS: tuple[frozenset[Modality], ...] = (
    frozenset({Modality.PF}),
    frozenset({Modality.PF, Modality.BG}),
    frozenset({Modality.BG, Modality.PHQ9}),
    frozenset(MODALITY_ORDER),
)

# per-repeat Rng streams
_SPLIT_STREAM = 0
_GRID_STREAM = 1
_FIT_STREAM = 2
_IMPUTE_STREAM = 3


# ── splits ───────────────────────────────────────────────────────────────────


def _checked_partition(train_mask: NDArray[np.bool_], what: str) -> None:
    if not train_mask.any():
        raise SplitError(f"{what} left the training partition empty")
    if train_mask.all():
        raise SplitError(f"{what} left the test partition empty")


def temporal_mask(
    dataset: Dataset, train_weeks: int, basis: str = "participant"
) -> NDArray[np.bool_]:
    if dataset.n_rows == 0:
        raise SplitError("cannot split an empty dataset")
    if train_weeks < 1:
        raise ArgumentError(f"train_weeks must be >= 1, got {train_weeks}")
    mask = week_index(dataset, "calendar" if basis == "calendar" else "participant") < train_weeks
    _checked_partition(mask, f"train_weeks={train_weeks}")
    return mask


def random_mask(dataset: Dataset, test_fraction: float, rng: Rng) -> NDArray[np.bool_]:
    if not 0.0 < test_fraction < 1.0:
        raise ArgumentError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = dataset.n_rows
    if n < 2:
        raise SplitError(f"a random split needs at least two rows, got {n}")
    n_test = round(test_fraction * n)
    mask = np.ones(n, dtype=bool)
    mask[seeded_shuffle(rng, range(n))[:n_test]] = False
    _checked_partition(mask, f"test_fraction={test_fraction}")
    return mask


def split_temporal(
    dataset: Dataset, train_weeks: int, basis: str = "participant"
) -> tuple[Dataset, Dataset]:
    """Row → train iff its week index < train_weeks; the rest is test."""
    mask = temporal_mask(dataset, train_weeks, basis)
    return dataset.take(mask), dataset.take(~mask)


def split_random(dataset: Dataset, test_fraction: float, rng: Rng) -> tuple[Dataset, Dataset]:
    """Uniform row-level holdout of round(test_fraction · n) rows."""
    mask = random_mask(dataset, test_fraction, rng)
    return dataset.take(mask), dataset.take(~mask)


def split_mask(dataset: Dataset, spec: SplitSpec, rng: Rng) -> NDArray[np.bool_]:
    """Training-row mask for a SplitSpec."""
    if spec.mode == "temporal":
        return temporal_mask(dataset, spec.train_weeks, spec.week_basis)
    return random_mask(dataset, spec.test_fraction, rng)


# ── metrics ──────────────────────────────────────────────────────────────────


def _pair(y: ArrayLike, y_hat: ArrayLike) -> tuple[Vector, Vector]:
    truth = np.asarray(y, dtype=np.float64).ravel()
    prediction = np.asarray(y_hat, dtype=np.float64).ravel()
    if truth.shape != prediction.shape:
        raise ShapeError(f"y has {truth.size} values, prediction has {prediction.size}")
    if truth.size == 0:
        raise MetricError("metrics need at least one value")
    return truth, prediction


def mse(y: ArrayLike, y_hat: ArrayLike) -> float:
    truth, prediction = _pair(y, y_hat)
    return float(np.mean((truth - prediction) ** 2))


def r2(y: ArrayLike, y_hat: ArrayLike) -> float:
    """1 − SS_res / SS_tot, with ȳ the mean of the evaluated y."""
    truth, prediction = _pair(y, y_hat)
    total = float(np.sum((truth - truth.mean()) ** 2))
    if total == 0.0:
        raise MetricError("R² is undefined when y has zero variance")
    return 1.0 - float(np.sum((truth - prediction) ** 2)) / total


# ── grid search ──────────────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class GridOutcome:
    """Chosen cell plus the validation MSE of every cell (empty for a singleton grid)."""

    hparams: Hparams
    index: int
    scores: tuple[float, ...] = ()
    fit_rows: NDArray[np.int64] = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def grid_search(
    estimator: Estimator,
    train: Dataset,
    rng: Rng,
    validation_fraction: float = 0.2,
    seed: int = 0,
) -> GridOutcome:
    """
    Pick the cell with the lowest validation MSE.

    Validation is a seeded `validation_fraction` of `train`; every cell is fitted
    on the remaining rows with the same `seed`. Ties go to the lower complexity,
    then to the earlier cell.
    """
    cells = list(estimator.cells())
    if not cells:
        raise ArgumentError(f"empty hyperparameter grid for {estimator.kind}")
    if len(cells) == 1:
        return GridOutcome(hparams=cells[0], index=0)

    fit_rows, val_rows = validation_split(train, validation_fraction, "random", rng)
    scores = tuple(
        mse(val_rows.target, estimator.fit(fit_rows, cell, seed).predict(val_rows))
        for cell in cells
    )
    ranked = sorted(
        range(len(cells)),
        key=lambda i: (
            scores[i] if math.isfinite(scores[i]) else math.inf,
            estimator.complexity(cells[i], fit_rows),
            i,
        ),
    )
    best = ranked[0]
    log.info(
        "harness.grid_selected",
        model=estimator.kind,
        cells=len(cells),
        chosen=describe(cells[best]),
        validation_mse=scores[best],
    )
    return GridOutcome(
        hparams=cells[best],
        index=best,
        scores=scores,
        fit_rows=np.concatenate([fit_rows.row_ids, val_rows.row_ids]),
    )


# ── experiment specification ─────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class ExperimentSpec:
    """Everything one experiment depends on."""

    model: ModelKind
    modalities: frozenset[Modality]
    split: SplitSpec = field(default_factory=SplitSpec)
    impute: ImputeConfig = field(default_factory=ImputeConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    grid: GridSettings = field(default_factory=GridSettings)
    n_repeats: int = 5
    seed: int = 0
    leakage_safe: bool = False
    paper_order: bool = False

    def __post_init__(self) -> None:
        if self.n_repeats < 1:
            raise ArgumentError(f"n_repeats must be >= 1, got {self.n_repeats}")
        if not self.modalities:
            raise ArgumentError("modality subset must not be empty")

    @staticmethod
    def from_config(config: RunConfig, model: ModelKind) -> ExperimentSpec:
        return ExperimentSpec(
            model=model,
            modalities=parse_modalities(config.experiment.modalities),
            split=config.split,
            impute=config.impute,
            forest=config.forest,
            train=config.train,
            grid=config.grid,
            n_repeats=config.experiment.n_repeats,
            seed=config.seed,
            leakage_safe=config.experiment.leakage_safe,
            paper_order=config.experiment.paper_order,
        )

    @property
    def label(self) -> str:
        split = (
            f"temporal w={self.split.train_weeks}"
            if self.split.mode == "temporal"
            else f"random f={self.split.test_fraction:.3g}"
        )
        return f"{self.model} {modality_label(self.modalities)} {split}"


# ── prepared data ────────────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class Prepared:
    """Imputed, one-hot encoded rows in input order, plus the training mask."""

    dataset: Dataset
    train_mask: NDArray[np.bool_]
    impute_rows: NDArray[np.int64]


class PreparedCache:
    """Memo of prepared matrices for one input dataset."""

    def __init__(self) -> None:
        self._imputed: dict[tuple[object, ...], Dataset] = {}
        self.hits = 0
        self.misses = 0

    def imputed(
        self, key: tuple[object, ...], compute: Callable[[], Dataset]
    ) -> Dataset:
        if key in self._imputed:
            self.hits += 1
            return self._imputed[key]
        self.misses += 1
        value = compute()
        self._imputed[key] = value
        return value


def _impute_full(dataset: Dataset, config: ImputeConfig) -> Dataset:
    return one_hot(missforest(dataset, config).dataset)


def _impute_split(
    dataset: Dataset, train_mask: NDArray[np.bool_], config: ImputeConfig
) -> Dataset:
    train = missforest(dataset.take(train_mask), config).dataset
    test = impute_with(train, dataset.take(~train_mask), config).dataset
    features = np.empty(dataset.features.shape)
    features[train_mask] = train.features
    features[~train_mask] = test.features
    return one_hot(dataset.with_features(dataset.schema, features))


def _split_key(spec: SplitSpec) -> tuple[object, ...]:
    if spec.mode == "temporal":
        return ("temporal", spec.train_weeks, spec.week_basis)
    return ("random", spec.test_fraction)


def prepare(
    spec: ExperimentSpec, dataset: Dataset, repeat_seed: int, cache: PreparedCache
) -> Prepared:
    """Imputed + encoded rows and the training mask for one repeat."""
    train_mask = split_mask(dataset, spec.split, Rng(repeat_seed).child(_SPLIT_STREAM))
    if not spec.leakage_safe:
        encoded = cache.imputed(
            ("full", spec.impute), lambda: _impute_full(dataset, spec.impute)
        )
        return Prepared(encoded, train_mask, dataset.row_ids)
    config = spec.impute.model_copy(update={"seed": derive_seed(repeat_seed, _IMPUTE_STREAM)})
    key: tuple[object, ...] = ("split", config, _split_key(spec.split))
    if spec.split.mode == "random":
        key += (repeat_seed,)
    encoded = cache.imputed(key, lambda: _impute_split(dataset, train_mask, config))
    return Prepared(encoded, train_mask, dataset.row_ids[train_mask])


# ── experiments ──────────────────────────────────────────────────────────────


def _touched(rows: NDArray[np.int64], test_ids: NDArray[np.int64]) -> int:
    return int(np.isin(rows, test_ids).sum())


@dataclass(slots=True)
class RecordingEstimator:
    """Estimator wrapper that remembers the row ids of every Dataset handed to `fit`."""

    inner: Estimator
    consumed: list[NDArray[np.int64]] = field(default_factory=list)

    @property
    def kind(self) -> str:
        return self.inner.kind

    def cells(self) -> Sequence[Hparams]:
        return self.inner.cells()

    def complexity(self, hparams: Hparams, train: Dataset) -> int:
        return self.inner.complexity(hparams, train)

    def fit(self, train: Dataset, hparams: Hparams, seed: int) -> FittedModel:
        self.consumed.append(np.array(train.row_ids, dtype=np.int64))
        return self.inner.fit(train, hparams, seed)

    def rows(self) -> NDArray[np.int64]:
        if not self.consumed:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(self.consumed))


@dataclass(frozen=True, slots=True)
class RepeatOutcome:
    scores: SeedScores
    provenance: dict[str, int]
    model: FittedModel


def _run_repeat(
    spec: ExperimentSpec,
    estimator: Estimator,
    dataset: Dataset,
    repeat: int,
    cache: PreparedCache,
) -> RepeatOutcome:
    repeat_seed = derive_seed(spec.seed, repeat)
    rng = Rng(repeat_seed)
    prepared = prepare(spec, dataset, repeat_seed, cache)
    selected = select_modalities(prepared.dataset, spec.modalities)
    mask = prepared.train_mask
    scaler_rows = None if spec.paper_order else mask
    scaler = fit_standardizer(selected, scaler_rows)
    scaled = apply_standardizer(scaler, selected)
    train, test = scaled.take(mask), scaled.take(~mask)

    fit_seed = derive_seed(repeat_seed, _FIT_STREAM)
    grid = grid_search(
        estimator, train, rng.child(_GRID_STREAM), spec.grid.validation_fraction, fit_seed
    )
    recorder = RecordingEstimator(estimator)
    model = recorder.fit(train, grid.hparams, fit_seed)
    train_pred, test_pred = model.predict(train), model.predict(test)

    test_ids = test.row_ids
    scaler_fit_ids = scaled.row_ids if scaler_rows is None else train.row_ids
    provenance = {
        "impute": _touched(prepared.impute_rows, test_ids),
        "scale": _touched(scaler_fit_ids, test_ids),
        "grid_search": _touched(grid.fit_rows, test_ids),
        "fit": _touched(recorder.rows(), test_ids),
    }
    scores = SeedScores(
        seed=repeat,
        train_mse=mse(train.target, train_pred),
        test_mse=mse(test.target, test_pred),
        train_r2=r2(train.target, train_pred),
        test_r2=r2(test.target, test_pred),
        chosen_hparams=describe(grid.hparams),
    )
    log.info(
        "harness.repeat_completed",
        experiment=spec.label,
        repeat=repeat,
        train_rows=train.n_rows,
        test_rows=test.n_rows,
        test_mse=scores.test_mse,
        test_r2=scores.test_r2,
        **{f"test_rows_in_{k}": v for k, v in provenance.items()},
    )
    return RepeatOutcome(scores, provenance, model)


def _run(
    spec: ExperimentSpec,
    dataset: Dataset,
    cache: PreparedCache,
    on_fitted: Callable[[int, FittedModel], None] | None,
) -> ExperimentResult:
    estimator = estimator_for(spec.model, spec.forest, spec.train, spec.grid)
    outcomes = []
    for repeat in range(spec.n_repeats):
        outcome = _run_repeat(spec, estimator, dataset, repeat, cache)
        if on_fitted is not None:
            on_fitted(repeat, outcome.model)
        outcomes.append(outcome)
    provenance = {stage: sum(o.provenance[stage] for o in outcomes) for stage in STAGES}
    result = ExperimentResult(
        model=spec.model,
        modalities=spec.modalities,
        split_mode=spec.split.mode,
        train_weeks=spec.split.train_weeks if spec.split.mode == "temporal" else None,
        test_fraction=spec.split.test_fraction if spec.split.mode == "random" else None,
        per_seed=tuple(o.scores for o in outcomes),
        provenance=provenance,
    )
    log.info(
        "harness.experiment_completed",
        experiment=spec.label,
        repeats=spec.n_repeats,
        mean_test_mse=result.mean_test_mse,
        mean_test_r2=result.mean_test_r2,
    )
    return result


def run_experiment(
    spec: ExperimentSpec,
    dataset: Dataset,
    cache: PreparedCache | None = None,
    on_fitted: Callable[[int, FittedModel], None] | None = None,
) -> Result[ExperimentResult]:
    """
    Run every repeat of one experiment.

    `on_fitted(repeat, model)` receives each final model (used to save checkpoints).
    Failures carry the experiment label.
    """
    memo = cache if cache is not None else PreparedCache()
    return ResultFailures.capture(
        lambda: _run(spec, dataset, memo, on_fitted),
        f"harness.run_experiment[{spec.label}]",
    )


def _collect(results: Iterable[Result[T]]) -> Result[list[T]]:
    """Lazily gather Results, stopping at the first failure."""
    values: list[T] = []
    for result in results:
        if result.is_failure():
            return Result.failure_from(result.error())
        values.append(result.value())
    return Result.success(values)


def ablation_suite(
    spec: ExperimentSpec,
    dataset: Dataset,
    models: Sequence[ModelKind],
    cache: PreparedCache | None = None,
) -> Result[list[ExperimentResult]]:
    """run_experiment for every model × {PF}, {PF,BG}, {BG,PHQ9}, ALL, in that order."""
    absent = [m.value for m in MODALITY_ORDER if m not in dataset.schema.modalities]
    if absent:
        return ResultFailures.validation_error(
            f"harness.ablation_suite: dataset has no columns for {absent}"
        )
    memo = cache if cache is not None else PreparedCache()
    return _collect(
        run_experiment(replace(spec, model=model, modalities=subset), dataset, memo)
        for model in models
        for subset in ABLATION_SUBSETS
    )


def duration_sweep(
    spec: ExperimentSpec,
    dataset: Dataset,
    weeks: Iterable[int],
    models: Sequence[ModelKind],
    cache: PreparedCache | None = None,
) -> Result[list[ExperimentResult]]:
    """run_experiment per model × train_weeks; the test set is every later week."""
    if spec.split.mode != "temporal":
        return ResultFailures.validation_error(
            "harness.duration_sweep: the sweep needs a temporal split"
        )
    memo = cache if cache is not None else PreparedCache()
    week_list = list(weeks)
    return _collect(
        run_experiment(
            replace(spec, model=model, split=spec.split.model_copy(update={"train_weeks": w})),
            dataset,
            memo,
        )
        for model in models
        for w in week_list
    )
