"""
Unit tests for domain models — value objects.

Verifies frozen dataclass behavior, schema invariants, row subsetting
and the aggregates computed from per-seed scores.
"""

from __future__ import annotations

import numpy as np
import pytest

from fuselab.domain.models import (
    Column,
    ColumnKind,
    Dataset,
    ExperimentResult,
    FeatureSchema,
    Modality,
    SeedScores,
    modality_label,
    parse_modalities,
)
from fuselab.errors import ArgumentError, ShapeError
from tests.conftest import make_dataset


class TestModalityLabels:
    def test_label_follows_fixed_order(self) -> None:
        """
        GIVEN a subset given in arbitrary order
        WHEN labelled
        THEN modalities appear in PF, BG, PHQ9 order.
        """
        assert modality_label({Modality.PHQ9, Modality.PF}) == "PF+PHQ9"

    @pytest.mark.parametrize(
        "text,expected",
        [
            ("ALL", {Modality.PF, Modality.BG, Modality.PHQ9}),
            ("pf,bg", {Modality.PF, Modality.BG}),
            ("BG+PHQ9", {Modality.BG, Modality.PHQ9}),
        ],
    )
    def test_parse_accepts_separators_and_all(self, text: str, expected: set[Modality]) -> None:
        assert parse_modalities(text) == frozenset(expected)

    def test_parse_rejects_unknown_modality(self) -> None:
        with pytest.raises(ArgumentError, match="unknown modality"):
            parse_modalities("PF+GPS")


class TestColumnAndSchema:
    def test_categorical_needs_two_sorted_categories(self) -> None:
        """
        GIVEN categorical columns with too few or unsorted categories
        WHEN constructed
        THEN ArgumentError is raised.
        """
        with pytest.raises(ArgumentError):
            Column("g", Modality.BG, ColumnKind.CATEGORICAL, ("A",))
        with pytest.raises(ArgumentError):
            Column("g", Modality.BG, ColumnKind.CATEGORICAL, ("B", "A"))

    def test_duplicate_names_rejected(self) -> None:
        with pytest.raises(ArgumentError, match="duplicate"):
            FeatureSchema((Column("x", Modality.PF), Column("x", Modality.BG)))

    def test_indices_for_modality(self, dataset: Dataset) -> None:
        assert dataset.schema.indices_for(Modality.PF) == tuple(range(7))
        assert dataset.schema.indices_for(Modality.PHQ9) == (10,)
        assert dataset.schema.categorical_indices == (8, 9)


class TestDataset:
    def test_arrays_are_read_only(self, dataset: Dataset) -> None:
        """
        GIVEN a Dataset
        WHEN writing into its feature matrix
        THEN numpy refuses.
        """
        with pytest.raises(ValueError):
            dataset.features[0, 0] = 1.0

    def test_frozen_prevents_mutation(self, dataset: Dataset) -> None:
        with pytest.raises(AttributeError):
            dataset.target = np.zeros(3)  # type: ignore[misc]

    def test_take_keeps_row_ids(self, dataset: Dataset) -> None:
        """
        GIVEN a boolean mask
        WHEN taking rows
        THEN every per-row array follows and row_ids keep their provenance.
        """
        mask = dataset.day_index >= 10
        subset = dataset.take(mask)
        assert subset.n_rows == int(mask.sum())
        np.testing.assert_array_equal(subset.row_ids, dataset.row_ids[mask])
        np.testing.assert_array_equal(subset.target, dataset.target[mask])

    def test_duplicate_participant_day_rejected(self) -> None:
        base = make_dataset(n_participants=1, days=2)
        with pytest.raises(ArgumentError, match="unique"):
            Dataset(
                schema=base.schema,
                participant_ids=np.array(["P000", "P000"]),
                day_index=np.array([0, 0]),
                dates=base.dates,
                features=base.features,
                target=base.target,
                row_ids=base.row_ids,
            )

    def test_per_row_shape_mismatch_rejected(self) -> None:
        base = make_dataset(n_participants=1, days=3)
        with pytest.raises(ShapeError, match="target"):
            Dataset(
                schema=base.schema,
                participant_ids=base.participant_ids,
                day_index=base.day_index,
                dates=base.dates,
                features=base.features,
                target=base.target[:2],
                row_ids=base.row_ids,
            )


class TestExperimentResult:
    def _result(self) -> ExperimentResult:
        return ExperimentResult(
            model="RF",
            modalities=frozenset({Modality.PF}),
            split_mode="temporal",
            train_weeks=4,
            test_fraction=None,
            per_seed=(
                SeedScores(1, 0.4, 0.6, 0.5, 0.3),
                SeedScores(0, 0.2, 0.4, 0.7, 0.5),
            ),
        )

    def test_per_seed_sorted_by_seed(self) -> None:
        assert [s.seed for s in self._result().per_seed] == [0, 1]

    def test_aggregates(self) -> None:
        """
        GIVEN two repeats
        WHEN aggregates are read
        THEN mean, sample sd and the overfitting gap agree with the rows.
        """
        result = self._result()
        assert result.mean_test_mse == pytest.approx(0.5)
        assert result.sd("test_mse") == pytest.approx(np.std([0.4, 0.6], ddof=1))
        assert result.mean_test_r2 == pytest.approx(0.4)
        assert result.mean_overfit_gap == pytest.approx(0.2)

    def test_needs_one_seed(self) -> None:
        with pytest.raises(ArgumentError):
            ExperimentResult("LR", frozenset({Modality.PF}), "random", None, 0.3, ())
