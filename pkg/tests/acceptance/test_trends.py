"""
Acceptance tests — numerical oracles and qualitative trends on the synthetic benchmark.

The published cohort is private, so acceptance is property-based: gradients
against finite differences, a linear autoencoder against PCA, MissForest
against mean imputation, exact baselines, and the benchmark trends
(latent fusion ahead of early fusion, forest overfitting, all modalities
ahead of any subset, longer training lowering test error).

Each test follows Given/When/Then BDD structure in its docstring.

Markers: @pytest.mark.acceptance, @pytest.mark.slow — minutes of CPU time.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
from railway.assertions import ResultAssertions

from fuselab.config import ImputeConfig, SynthConfig, TrainConfig
from fuselab.domain.models import MODALITY_ORDER, Dataset, ExperimentResult
from fuselab.forest import Task, TreeParams, fit_tree, tree_predict
from fuselab.harness import (
    ExperimentSpec,
    PreparedCache,
    ablation_suite,
    duration_sweep,
    r2,
    run_experiment,
)
from fuselab.impute import initial_fill, missforest, nrmse
from fuselab.linreg import fit_ols
from fuselab.neural import (
    grad,
    init_autoencoder,
    init_mlp,
    mse_loss,
    reconstruct,
    train_autoencoder,
)
from fuselab.numerics import Rng
from fuselab.synth import apply_missingness, generate
from tests.conftest import finite_difference_gradients, max_relative_error

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]


# ── numerical oracles ────────────────────────────────────────────────────────


class TestOracles:
    def test_gradients_on_random_tanh_architectures(self) -> None:
        """
        GIVEN ten random tanh networks
        WHEN analytic gradients are compared with central differences (h = 1e-5)
        THEN the elementwise relative error stays below 1e-5 for every parameter.
        """
        shapes = np.random.default_rng(0)
        for trial in range(10):
            widths = [int(w) for w in shapes.integers(1, 6, size=int(shapes.integers(2, 5)))]
            activations = ["tanh"] * (len(widths) - 2) + ["linear"]
            mlp = init_mlp(widths, activations, Rng(trial))
            x = shapes.normal(size=(7, widths[0]))
            target = shapes.normal(size=(7, widths[-1]))
            analytic = grad(mlp, x, target).gradients
            numeric = finite_difference_gradients(mlp, x, target, h=1e-5)
            for a, n in zip(analytic, numeric, strict=True):
                assert max_relative_error(a, n) <= 1e-5, widths

    def test_linear_autoencoder_matches_pca(self) -> None:
        """
        GIVEN 1000 rows of rank-2 data in six columns plus small noise
        WHEN a linear autoencoder with a two-unit code is trained
        THEN its reconstruction MSE is within 10% of the PCA(k=2) oracle.
        """
        rng = np.random.default_rng(1)
        signal = rng.normal(size=(1000, 2)) @ rng.normal(size=(2, 6))
        x = signal + 0.3 * rng.normal(size=(1000, 6))
        centred = x - x.mean(axis=0)
        eigenvalues = np.linalg.eigvalsh(centred.T @ centred / len(x))
        pca_mse = float(eigenvalues[:-2].sum() / x.shape[1])

        ae = init_autoencoder(6, 6, 2, "linear", Rng(0))
        cfg = TrainConfig(learning_rate=5e-3, batch_size=100, patience=600)
        trained, _ = train_autoencoder(ae, x, np.empty((0, 6)), cfg, Rng(1), epochs=600)
        assert mse_loss(reconstruct(trained, x), x) <= 1.1 * pca_mse

    def test_missforest_beats_mean_imputation(self) -> None:
        """
        GIVEN the default synthetic cohort with 10% MCAR cells held back
        WHEN imputed by MissForest and by column means/modes
        THEN MissForest's NRMSE is at least 5% lower.
        """
        truth = generate(SynthConfig())
        masked = apply_missingness(truth, 0.1, "MCAR", Rng(9))
        mask = np.isnan(masked.features)
        forest = missforest(masked, ImputeConfig(n_trees=20, max_iter=4)).dataset
        assert nrmse(truth, forest, mask) <= 0.95 * nrmse(truth, initial_fill(masked), mask)

    def test_exact_baselines(self) -> None:
        """
        GIVEN noise-free data
        WHEN OLS, a fully grown tree and R² are evaluated
        THEN they reproduce the exact answers.
        """
        x = np.linspace(-3, 3, 25)[:, None]
        model = fit_ols(x, 2.0 * x[:, 0] + 1.0, ridge=0.0)
        assert model.coefficients is not None
        assert abs(model.coefficients[0] - 2.0) <= 1e-8
        assert abs(model.intercept - 1.0) <= 1e-8

        rng = np.random.default_rng(2)
        features = rng.permutation(40).astype(float)[:, None]
        target = rng.normal(size=40)
        tree = fit_tree(features, target, Task.REGRESSION, TreeParams(mtry=1), Rng(0))
        assert mse_loss(tree_predict(tree, features), target) == 0.0

        assert r2([0.0, 1.0, 2.0, 3.0], [0.5, 0.5, 2.5, 2.5]) == 0.8


# ── benchmark trends ─────────────────────────────────────────────────────────


def _run(spec: ExperimentSpec, dataset: Dataset, cache: PreparedCache) -> ExperimentResult:
    return ResultAssertions.assert_success(run_experiment(spec, dataset, cache))


@pytest.fixture(scope="module")
def headline(
    desk_spec: ExperimentSpec, benchmark: Dataset, benchmark_cache: PreparedCache
) -> dict[str, ExperimentResult]:
    return {
        model: _run(replace(desk_spec, model=model), benchmark, benchmark_cache)
        for model in ("CM", "RF", "LR")
    }


class TestTrends:
    def test_latent_fusion_ahead_of_early_fusion(
        self, headline: dict[str, ExperimentResult]
    ) -> None:
        """
        GIVEN the default benchmark, a four-week temporal split and five repeats
        WHEN CM, RF and LR are evaluated
        THEN mean test R² orders CM > RF > LR with gaps of at least 0.02.
        """
        cm, rf, lr = (headline[m].mean_test_r2 for m in ("CM", "RF", "LR"))
        assert cm - rf >= 0.02
        assert rf - lr >= 0.02

    def test_forest_overfits_more_than_combined_model(
        self, headline: dict[str, ExperimentResult]
    ) -> None:
        assert headline["RF"].mean_overfit_gap > headline["CM"].mean_overfit_gap

    def test_all_modalities_best_for_combined_model(
        self, desk_spec: ExperimentSpec, benchmark: Dataset, benchmark_cache: PreparedCache
    ) -> None:
        """
        GIVEN the modality ablation for CM
        WHEN every subset is scored
        THEN the full subset has the highest mean test R².
        """
        results = ResultAssertions.assert_success(
            ablation_suite(desk_spec, benchmark, ["CM"], benchmark_cache)
        )
        full = next(r for r in results if r.modalities == frozenset(MODALITY_ORDER))
        assert all(full.mean_test_r2 >= r.mean_test_r2 for r in results)

    def test_longer_training_lowers_test_error(
        self, desk_spec: ExperimentSpec, benchmark: Dataset, benchmark_cache: PreparedCache
    ) -> None:
        """
        GIVEN the duration sweep for CM
        WHEN trained on one week and on eight weeks
        THEN test MSE at eight weeks is below test MSE at one week.
        """
        one, eight = ResultAssertions.assert_success(
            duration_sweep(desk_spec, benchmark, [1, 8], ["CM"], benchmark_cache)
        )
        assert eight.mean_test_mse < one.mean_test_mse
