"""
Acceptance test fixtures — the default synthetic benchmark at desk scale.

The cohort keeps its default size (131 participants, geometric enrolment
lengths, 10% MCAR); the models are shrunk to fixed hyperparameter cells, fewer
trees and fewer epochs so the whole suite finishes in minutes. Session-scoped
so the trend tests share one imputation through a PreparedCache.
"""

from __future__ import annotations

import pytest

from fuselab.config import (
    CmGrid,
    ForestConfig,
    GridSettings,
    ImputeConfig,
    RfGrid,
    SplitSpec,
    SynthConfig,
    TrainConfig,
)
from fuselab.domain.models import MODALITY_ORDER, Dataset
from fuselab.harness import ExperimentSpec, PreparedCache
from fuselab.synth import generate_benchmark


@pytest.fixture(scope="session")
def benchmark() -> Dataset:
    return generate_benchmark(SynthConfig())


@pytest.fixture(scope="session")
def benchmark_cache() -> PreparedCache:
    return PreparedCache()


@pytest.fixture(scope="session")
def desk_spec() -> ExperimentSpec:
    """Temporal split at four weeks, five repeats, singleton grids."""
    return ExperimentSpec(
        model="CM",
        modalities=frozenset(MODALITY_ORDER),
        split=SplitSpec(train_weeks=4),
        impute=ImputeConfig(n_trees=20, max_iter=4),
        forest=ForestConfig(n_trees=60),
        train=TrainConfig(max_epochs=80, pretrain_epochs=20, patience=10),
        grid=GridSettings(
            cm=CmGrid(latent_dim=[4], learning_rate=[1e-2], hidden=[32]),
            rf=RfGrid(n_trees=[60], min_samples_leaf=[1], mtry=["third"]),
        ),
        n_repeats=5,
    )
