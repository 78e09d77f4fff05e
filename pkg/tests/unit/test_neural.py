"""
Unit tests for dense networks, autoencoders and the Combined Model.

Gradients are checked against central finite differences; training tests
use tiny networks and few epochs.
"""

from __future__ import annotations

import numpy as np
import pytest

from fuselab.config import TrainConfig
from fuselab.dataio import apply_standardizer, fit_standardizer, one_hot, select_modalities
from fuselab.domain.models import Dataset, Modality
from fuselab.errors import ArgumentError, ShapeError, StateError
from fuselab.neural import (
    adam_init,
    adam_step,
    encode,
    forward,
    grad,
    init_autoencoder,
    init_combined,
    init_mlp,
    mse_loss,
    predict_combined,
    reconstruct,
    train_autoencoder,
    train_combined,
)
from fuselab.numerics import Rng
from tests.conftest import finite_difference_gradients, make_dataset, max_relative_error


def scaled(dataset: Dataset) -> Dataset:
    encoded = one_hot(dataset)
    return apply_standardizer(fit_standardizer(encoded), encoded)


class TestMlp:
    def test_glorot_bounds_and_zero_bias(self) -> None:
        mlp = init_mlp([4, 6, 1], ["relu", "linear"], Rng(0))
        bound = np.sqrt(6.0 / 10.0)
        assert np.abs(mlp.layers[0].weight).max() <= bound
        assert not mlp.layers[0].bias.any()
        assert mlp.widths == (4, 6, 1)
        assert mlp.n_parameters == 4 * 6 + 6 + 6 * 1 + 1

    def test_width_activation_mismatch(self) -> None:
        with pytest.raises(ArgumentError):
            init_mlp([3, 2], ["relu", "relu"], Rng(0))

    def test_forward_rejects_wrong_width(self) -> None:
        mlp = init_mlp([3, 1], ["linear"], Rng(0))
        with pytest.raises(ShapeError):
            forward(mlp, np.ones((2, 4)))

    @pytest.mark.parametrize("activation", ["tanh", "linear", "relu"])
    def test_gradients_match_finite_differences(self, activation: str) -> None:
        """
        GIVEN a two-layer network and a batch
        WHEN analytic gradients are computed
        THEN every component agrees with central differences to 1e-5 relative error.
        """
        rng = np.random.default_rng(0)
        mlp = init_mlp([3, 4, 2], [activation, "linear"], Rng(1))
        x = rng.normal(size=(5, 3))
        target = rng.normal(size=(5, 2))
        analytic = grad(mlp, x, target).gradients
        numeric = finite_difference_gradients(mlp, x, target)
        for a, n in zip(analytic, numeric, strict=True):
            assert max_relative_error(a, n) <= 1e-5

    def test_relative_error_guards_tiny_denominators(self) -> None:
        assert max_relative_error(np.zeros(3), np.full(3, 1e-12)) == pytest.approx(1e-4)
        assert max_relative_error(np.array([2.0]), np.array([1.0])) == pytest.approx(0.5)


class TestAdam:
    def test_first_step_moves_by_learning_rate(self) -> None:
        """
        GIVEN zero moments
        WHEN one bias-corrected step is taken
        THEN every parameter moves by lr against the gradient sign.
        """
        params = (np.array([1.0, -2.0]),)
        grads = (np.array([0.5, -3.0]),)
        updated, state = adam_step(params, grads, adam_init(params), lr=0.1)
        np.testing.assert_allclose(updated[0], [0.9, -1.9], atol=1e-6)
        assert state.step == 1

    def test_minimises_quadratic(self) -> None:
        params: tuple[np.ndarray, ...] = (np.array([5.0]),)
        state = adam_init(params)
        for _ in range(2000):
            params, state = adam_step(params, (2.0 * params[0],), state, lr=0.05)
        assert abs(params[0][0]) < 0.1

    def test_length_mismatch(self) -> None:
        params = (np.zeros(1),)
        with pytest.raises(ShapeError):
            adam_step(params, (), adam_init(params), lr=0.1)


class TestAutoencoder:
    def test_training_reduces_reconstruction_loss(self) -> None:
        rng = np.random.default_rng(3)
        latent = rng.normal(size=(80, 2))
        x = latent @ rng.normal(size=(2, 5))
        ae = init_autoencoder(5, 8, 2, "tanh", Rng(0))
        cfg = TrainConfig(learning_rate=1e-2, batch_size=16, patience=50)
        trained, curves = train_autoencoder(ae, x[:60], x[60:], cfg, Rng(1), epochs=60)
        assert curves.best_validation < curves.validation[0]
        assert mse_loss(reconstruct(trained, x[60:]), x[60:]) == pytest.approx(
            curves.best_validation
        )
        assert encode(trained, x).shape == (80, 2)

    def test_empty_training_set(self) -> None:
        ae = init_autoencoder(3, 4, 2, "relu", Rng(0))
        with pytest.raises(ArgumentError):
            train_autoencoder(ae, np.empty((0, 3)), np.empty((0, 3)), TrainConfig(), Rng(0))


class TestCombinedModel:
    def test_init_sizes_from_schema(self, dataset: Dataset) -> None:
        data = scaled(dataset)
        cfg = TrainConfig(latent_dim=2, hidden=4)
        cm = init_combined(data.schema, {Modality.PHQ9, Modality.PF}, cfg, Rng(0))
        assert cm.modalities == (Modality.PF, Modality.PHQ9)
        assert [ae.input_width for ae in cm.autoencoders] == [7, 1]
        assert cm.latent_width == 4
        assert not cm.fitted

    def test_unknown_modality_block_rejected(self, dataset: Dataset) -> None:
        pf_only = select_modalities(scaled(dataset), {Modality.PF})
        with pytest.raises(ArgumentError):
            init_combined(pf_only.schema, {Modality.BG}, TrainConfig(), Rng(0))

    def test_predict_before_training(self, dataset: Dataset) -> None:
        data = scaled(dataset)
        cm = init_combined(data.schema, {Modality.PF}, TrainConfig(), Rng(0))
        with pytest.raises(StateError):
            predict_combined(cm, data)

    def test_training_is_deterministic_and_clipped(self, fast_train: TrainConfig) -> None:
        """
        GIVEN one seed
        WHEN a combined model is trained twice
        THEN predictions are identical and lie inside [0, 6].
        """
        data = scaled(make_dataset(n_participants=5, days=14))
        train, val = data.take(data.day_index < 10), data.take(data.day_index >= 10)
        modalities = {Modality.PF, Modality.BG, Modality.PHQ9}

        def fit() -> np.ndarray:
            cm = init_combined(data.schema, modalities, fast_train, Rng(1))
            fitted, curves = train_combined(cm, train, val, fast_train, Rng(2))
            assert fitted.fitted
            assert curves.regression is not None
            assert set(curves.pretrain) == modalities
            return predict_combined(fitted, data)

        first, second = fit(), fit()
        np.testing.assert_array_equal(first, second)
        assert first.min() >= 0.0
        assert first.max() <= 6.0

    def test_restored_parameters_never_worse_than_start(self, fast_train: TrainConfig) -> None:
        data = scaled(make_dataset(n_participants=5, days=14))
        train, val = data.take(data.day_index < 10), data.take(data.day_index >= 10)
        cfg = fast_train.model_copy(update={"max_epochs": 40, "learning_rate": 1e-2})
        cm = init_combined(data.schema, {Modality.PF}, cfg, Rng(1))
        _, curves = train_combined(cm, train, val, cfg, Rng(2))
        assert curves.regression is not None
        assert curves.regression.best_validation <= curves.regression.validation[0]

    def test_frozen_encoders_stay_at_pretrained_weights(self, fast_train: TrainConfig) -> None:
        data = scaled(make_dataset(n_participants=3, days=10))
        train, val = data.take(data.day_index < 7), data.take(data.day_index >= 7)
        cfg = fast_train.model_copy(update={"fine_tune_encoders": False, "pretrain_epochs": 0})
        cm = init_combined(data.schema, {Modality.PF}, cfg, Rng(1))
        fitted, _ = train_combined(cm, train, val, cfg, Rng(2))
        np.testing.assert_array_equal(
            fitted.autoencoders[0].encoder.layers[0].weight,
            cm.autoencoders[0].encoder.layers[0].weight,
        )

    def test_encode_accepts_modality_mapping(self, dataset: Dataset) -> None:
        data = scaled(dataset)
        cm = init_combined(data.schema, {Modality.PF, Modality.PHQ9}, TrainConfig(), Rng(0))
        blocks = {
            m: data.features[:, list(b)]
            for m, b in zip(cm.modalities, cm.blocks, strict=True)
        }
        np.testing.assert_array_equal(encode(cm, blocks), encode(cm, data.features))
        with pytest.raises(ArgumentError):
            encode(cm, {Modality.PF: blocks[Modality.PF]})

