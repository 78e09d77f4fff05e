"""
Unit tests for the synthetic cohort generator.
"""

from __future__ import annotations

import numpy as np
import pytest

from fuselab.config import SynthConfig
from fuselab.dataio import one_hot
from fuselab.domain.models import Dataset, Modality
from fuselab.errors import ArgumentError
from fuselab.harness import r2
from fuselab.linreg import fit_ols, lin_predict
from fuselab.numerics import Rng
from fuselab.synth import apply_missingness, generate, generate_benchmark, geometric_p
from tests.conftest import make_dataset


class TestGeometricLength:
    @pytest.mark.parametrize("mean_days,max_days", [(36.03, 84), (5.0, 10), (2.0, 100)])
    def test_truncated_mean_hits_target(self, mean_days: float, max_days: int) -> None:
        p = geometric_p(mean_days, max_days)
        truncated_mean = (1.0 - (1.0 - p) ** max_days) / p
        assert truncated_mean == pytest.approx(mean_days, rel=1e-9)

    def test_unreachable_mean(self) -> None:
        with pytest.raises(ArgumentError):
            geometric_p(90.0, 84)

    def test_sampled_lengths_respect_cap(self) -> None:
        cohort = generate(SynthConfig(n_participants=60, mean_days=20.0, max_days=30, seed=2))
        _, counts = np.unique(cohort.participant_ids, return_counts=True)
        assert counts.max() <= 30
        assert counts.min() >= 1

    def test_mean_length_near_target_at_default_seed(self) -> None:
        config = SynthConfig()
        cohort = generate(config)
        _, counts = np.unique(cohort.participant_ids, return_counts=True)
        assert counts.size == 131
        assert counts.mean() == pytest.approx(config.mean_days, rel=0.15)


class TestGenerate:
    def test_fixed_length_cohort_size(self) -> None:
        """
        GIVEN 10 participants with 14 days each
        WHEN generated
        THEN 140 rows, day indices 0..13 per participant.
        """
        cohort = generate(SynthConfig(n_participants=10, fixed_days=14, seed=0))
        assert cohort.n_rows == 140
        assert len(cohort.participants) == 10
        assert cohort.day_index[:14].tolist() == list(range(14))
        assert cohort.participant_ids[0] == "P001"

    def test_same_seed_same_cohort(self, small_synth: SynthConfig) -> None:
        a, b = generate(small_synth), generate(small_synth)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.target, b.target)
        assert a.dates.tolist() == b.dates.tolist()

    def test_different_seed_different_cohort(self, small_synth: SynthConfig) -> None:
        other = small_synth.model_copy(update={"seed": small_synth.seed + 1})
        assert not np.array_equal(generate(small_synth).target, generate(other).target)

    def test_value_ranges(self, complete_cohort: Dataset) -> None:
        assert complete_cohort.target.min() >= 0.0
        assert complete_cohort.target.max() <= 6.0
        assert not np.isnan(complete_cohort.features).any()
        age = complete_cohort.column("age")
        assert age.min() >= 18 and age.max() <= 80
        phq9 = complete_cohort.column("phq9_baseline")
        assert phq9.min() >= 0 and phq9.max() <= 27
        pf = complete_cohort.features[:, list(complete_cohort.schema.indices_for(Modality.PF))]
        assert (pf >= 0).all()

    def test_background_constant_within_participant(self, complete_cohort: Dataset) -> None:
        first = complete_cohort.participant_ids == complete_cohort.participants[0]
        for name in ("age", "gender", "marital_status", "phq9_baseline"):
            assert np.unique(complete_cohort.column(name)[first]).size == 1

    def test_oracle_columns(self, complete_cohort: Dataset) -> None:
        assert set(complete_cohort.oracle) == {"trait", "state", "mobility", "signal"}
        for values in complete_cohort.oracle.values():
            assert values.shape == (complete_cohort.n_rows,)

    def test_dates_are_consecutive(self, complete_cohort: Dataset) -> None:
        first = complete_cohort.participant_ids == complete_cohort.participants[0]
        dates = complete_cohort.dates[first].astype("datetime64[D]")
        assert (np.diff(dates) == np.timedelta64(1, "D")).all()

    def test_noise_free_target_is_affine_in_trait_and_state(self) -> None:
        """
        GIVEN no noise, no interaction and no autocorrelation
        WHEN OLS is fitted on the oracle trait and state
        THEN it explains the target exactly.
        """
        cohort = generate(
            SynthConfig(
                n_participants=30,
                fixed_days=20,
                noise_sd=0.0,
                interaction_strength=0.0,
                daily_ar_coeff=0.0,
                latent_trait_sd=0.5,
                state_sd=0.5,
                seed=4,
            )
        )
        x = np.column_stack([cohort.oracle["trait"], cohort.oracle["state"]])
        model = fit_ols(x, cohort.target)
        assert r2(cohort.target, lin_predict(model, x)) == pytest.approx(1.0, abs=1e-6)

    def test_interaction_hidden_from_linear_fusion(self) -> None:
        """
        GIVEN the default cohort
        WHEN OLS on the observed columns is compared with OLS on the true terms
        THEN the observed-column model trails by at least 0.05 test R².
        """
        cohort = one_hot(generate(SynthConfig()))
        train = cohort.day_index < 28
        trait, state, mobility = (cohort.oracle[k] for k in ("trait", "state", "mobility"))
        true_terms = np.column_stack([trait, state, trait * mobility])

        def held_out_r2(x: np.ndarray) -> float:
            model = fit_ols(x[train], cohort.target[train])
            return r2(cohort.target[~train], lin_predict(model, x[~train]))

        assert held_out_r2(cohort.features) <= held_out_r2(true_terms) - 0.05


class TestMissingness:
    def test_zero_rate_leaves_data_unchanged(self, complete_cohort: Dataset) -> None:
        assert apply_missingness(complete_cohort, 0.0, "MCAR", Rng(0)) is complete_cohort

    def test_phq9_and_target_never_masked(self, complete_cohort: Dataset) -> None:
        """
        GIVEN a heavy masking rate
        WHEN MCAR missingness is applied
        THEN PF and BG lose cells, PHQ-9 and the target keep all of them.
        """
        masked = apply_missingness(complete_cohort, 0.5, "MCAR", Rng(1))
        assert not np.isnan(masked.column("phq9_baseline")).any()
        assert not np.isnan(masked.target).any()
        pf = list(masked.schema.indices_for(Modality.PF))
        share = np.isnan(masked.features[:, pf]).mean()
        assert 0.4 < share < 0.6

    def test_mcar_rate_matches_over_ten_thousand_cells(self) -> None:
        cohort = generate(SynthConfig(n_participants=50, fixed_days=20, seed=5))
        masked = apply_missingness(cohort, 0.1, "MCAR", Rng(6))
        cells = list(masked.schema.indices_for(Modality.PF)) + list(
            masked.schema.indices_for(Modality.BG)
        )
        share = np.isnan(masked.features[:, cells])
        assert share.size == 10_000
        assert share.mean() == pytest.approx(0.1, abs=0.02)

    def test_mar_needs_state_oracle(self) -> None:
        with pytest.raises(ArgumentError, match="oracle"):
            apply_missingness(make_dataset(), 0.2, "MAR", Rng(0))

    def test_mar_masks_high_state_days_more_often(self) -> None:
        cohort = generate(SynthConfig(n_participants=40, fixed_days=30, seed=3))
        masked = apply_missingness(cohort, 0.3, "MAR", Rng(4), mar_slope=2.0)
        pf = list(masked.schema.indices_for(Modality.PF))
        row_missing = np.isnan(masked.features[:, pf]).mean(axis=1)
        high = cohort.oracle["state"] > 0
        assert row_missing[high].mean() > row_missing[~high].mean()

    def test_rate_out_of_range(self, complete_cohort: Dataset) -> None:
        with pytest.raises(ArgumentError):
            apply_missingness(complete_cohort, 1.0, "MCAR", Rng(0))

    def test_benchmark_is_deterministic(self, small_synth: SynthConfig) -> None:
        a, b = generate_benchmark(small_synth), generate_benchmark(small_synth)
        np.testing.assert_array_equal(np.isnan(a.features), np.isnan(b.features))
        assert np.isnan(a.features).any()
