"""
Shared test fixtures and helpers for the fuselab test suite.

Builders produce small, fully deterministic datasets: `make_dataset` by hand
(no generator involved), `small_cohort` through the synthetic generator at a
size every unit test can afford.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from numpy.typing import NDArray

from fuselab.config import ForestConfig, ImputeConfig, SynthConfig, TrainConfig
from fuselab.dataio import FILE_NAMES, PASSIVE_FEATURES, raw_schema
from fuselab.domain.models import Dataset
from fuselab.neural import Mlp, forward, mse_loss
from fuselab.synth import generate, generate_benchmark

FIXTURES_DIR = Path(__file__).parent / "fixtures"


def fixture_path(filename: str) -> Path:
    """Absolute path to a test fixture file; FileNotFoundError when it is missing."""
    path = FIXTURES_DIR / filename
    if not path.exists():
        raise FileNotFoundError(f"Test fixture not found: {path}")
    return path


def finite_difference_gradients(
    mlp: Mlp, x: NDArray[np.float64], target: NDArray[np.float64], h: float = 1e-5
) -> list[NDArray[np.float64]]:
    """Central-difference gradient of the MSE loss for every parameter array of `mlp`."""
    params = list(mlp.params())
    numeric = []
    for k, p in enumerate(params):
        slope = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            plus = [q.copy() for q in params]
            minus = [q.copy() for q in params]
            plus[k][idx] += h
            minus[k][idx] -= h
            up = mse_loss(forward(mlp.with_params(plus), x).output, target)
            down = mse_loss(forward(mlp.with_params(minus), x).output, target)
            slope[idx] = (up - down) / (2 * h)
        numeric.append(slope)
    return numeric


def max_relative_error(analytic: NDArray[np.float64], numeric: NDArray[np.float64]) -> float:
    """Elementwise max of |g - ĝ| / max(|g|, |ĝ|, 1e-8)."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / scale))


def make_dataset(
    n_participants: int = 4,
    days: int = 14,
    seed: int = 0,
    missing_rate: float = 0.0,
) -> Dataset:
    """
    Raw-schema dataset with a linear target in the first passive feature.

    Categorical columns hold valid codes; `missing_rate` masks PF/BG cells.
    """
    rng = np.random.default_rng(seed)
    schema = raw_schema()
    n = n_participants * days
    pf = rng.lognormal(0.0, 0.5, size=(n, len(PASSIVE_FEATURES)))
    per_participant = np.repeat(np.arange(n_participants), days)
    age = (30.0 + 5.0 * per_participant).astype(float)
    gender = (per_participant % 3).astype(float)
    marital = (per_participant % 4).astype(float)
    phq9 = (4.0 + 2.0 * per_participant).astype(float)
    features = np.column_stack([pf, age, gender, marital, phq9])
    if missing_rate:
        mask = rng.random(features.shape) < missing_rate
        mask[:, -1] = False
        features = np.where(mask, np.nan, features)
    target = np.clip(1.0 + pf[:, 0] + 0.1 * phq9 + rng.normal(0, 0.1, n), 0.0, 6.0)
    dates = [
        (np.datetime64("2020-01-01") + np.timedelta64(d + 3 * p, "D")).astype(str)
        for p in range(n_participants)
        for d in range(days)
    ]
    return Dataset(
        schema=schema,
        participant_ids=np.array([f"P{p:03d}" for p in per_participant]),
        day_index=np.tile(np.arange(days), n_participants),
        dates=np.array(dates),
        features=features,
        target=target,
        row_ids=np.arange(n),
    )


@pytest.fixture()
def dataset() -> Dataset:
    """Fully observed hand-built dataset: 4 participants × 14 days."""
    return make_dataset()


@pytest.fixture()
def small_synth() -> SynthConfig:
    return SynthConfig(n_participants=12, fixed_days=21, missing_rate=0.1, seed=7)


@pytest.fixture()
def small_cohort(small_synth: SynthConfig) -> Dataset:
    """Synthetic benchmark (with missingness) at unit-test size."""
    return generate_benchmark(small_synth)


@pytest.fixture()
def complete_cohort(small_synth: SynthConfig) -> Dataset:
    return generate(small_synth)


@pytest.fixture()
def fast_forest() -> ForestConfig:
    return ForestConfig(n_trees=10, min_samples_leaf=3, seed=0)


@pytest.fixture()
def fast_impute() -> ImputeConfig:
    return ImputeConfig(n_trees=10, max_iter=4, seed=0)


@pytest.fixture()
def fast_train() -> TrainConfig:
    return TrainConfig(
        latent_dim=3, hidden=8, max_epochs=15, patience=5, pretrain_epochs=5, batch_size=32
    )


def write_csv(path: Path, header: str, rows: list[str]) -> Path:
    path.write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")
    return path


@pytest.fixture()
def csv_dir(tmp_path: Path) -> Path:
    """Minimal valid four-CSV directory: two participants, three PHQ-2 days each."""
    passive_cols = ",".join(PASSIVE_FEATURES)
    write_csv(
        tmp_path / FILE_NAMES["passive"],
        f"participant_id,date,{passive_cols}",
        [
            "A,2020-01-01,1.0,0.5,0.1,10,3,1,4",
            "A,2020-01-02,2.0,0.6,0.2,12,4,0,5",
            "B,2020-01-05,3.0,0.7,0.3,NA,2,2,3",
        ],
    )
    write_csv(
        tmp_path / FILE_NAMES["demographics"],
        "participant_id,age,gender,marital_status",
        ["A,34,Female,Single", "B,51,Male,Married"],
    )
    write_csv(tmp_path / FILE_NAMES["phq9"], "participant_id,phq9_baseline", ["A,8", "B,15"])
    write_csv(
        tmp_path / FILE_NAMES["phq2"],
        "participant_id,date,phq2",
        [
            "A,2020-01-01,2",
            "A,2020-01-02,3",
            "A,2020-01-09,1",
            "B,2020-01-05,4",
            "B,2020-01-06,5",
            "B,2020-01-07,6",
        ],
    )
    return tmp_path
