"""
Synthetic mood-study cohort with a known cross-modal interaction.

Per participant i (own derived Rng stream):
  trait       tᵢ ~ N(0, latent_trait_sd²)
  length      Lᵢ = min(G, max_days), G ~ Geometric(p) on {1, 2, ...}, p solved so
              that E[Lᵢ] = mean_days (or Lᵢ = fixed_days)
  state       AR(1): s₀ ~ N(0, σ²/(1−ar²)), s_d = ar·s_{d−1} + N(0, σ²), σ = state_sd
  mobility    m = −0.5·s + 0.5·u,  u ~ N(0, 1) per day

Passive features (εₖ ~ N(0, 1) per cell):
  distance_travelled_km  exp(1.0 + m + 0.1ε₁)
  movement_radius_km     exp(0.5 + 0.8m + 0.1ε₂)
  location_variance      exp(m + 0.2ε₃)
  call_duration_min      exp(2.0 − 0.4s − 0.3t + 0.3ε₄)
  sms_count              round(exp(1.5 − 0.3s − 0.2t + 0.3ε₅))
  missed_interactions    round(exp(0.5 + 0.4s + 0.3ε₆))
  unique_contacts        round(exp(1.2 − 0.2s − 0.3t + 0.3ε₇))

Background and baseline:
  age            clip(round(40 − 3t + 10z), 18, 80)
  gender         softmax over (Female, Male, Other) with logits (0.5t, 0, −2)
  marital_status softmax over (Divorced, Married, Single, Widowed)
                 with logits (0.4t − 0.5, −0.5t, 0.3t, −1.5)
  phq9_baseline  round(clip(10 + 4t, 0, 27))

Target:
  phq2 = clip(2.4 + 0.7t + 0.5s + 0.8·interaction_strength·t·m + noise_sd·ε, 0, 6)

The t·m product is invisible to a main-effects linear model on the raw columns.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
import structlog
from scipy.optimize import brentq

from fuselab.config import SynthConfig
from fuselab.dataio import KNOWN_CATEGORIES, PASSIVE_FEATURES, raw_schema
from fuselab.domain.models import Dataset, Modality
from fuselab.errors import ArgumentError
from fuselab.numerics import Rng, Vector, rng_normal

log = structlog.get_logger()

TARGET_INTERCEPT = 2.4
TRAIT_EFFECT = 0.7
STATE_EFFECT = 0.5
INTERACTION_EFFECT = 0.8

_PARTICIPANT_STREAM = 0
_MISSINGNESS_STREAM = 1
_ENROLMENT_SPREAD_DAYS = 90


def geometric_p(mean_days: float, max_days: int) -> float:
    """Success probability p with E[min(Geometric(p), max_days)] = mean_days."""
    if not 1.0 < mean_days < max_days:
        raise ArgumentError(f"mean_days must lie in (1, {max_days}), got {mean_days}")

    def gap(p: float) -> float:
        return (1.0 - (1.0 - p) ** max_days) / p - mean_days

    return float(brentq(gap, 1e-12, 1.0 - 1e-12, xtol=1e-14))


def participation_lengths(config: SynthConfig, rngs: list[Rng]) -> list[int]:
    if config.fixed_days is not None:
        return [config.fixed_days] * len(rngs)
    p = geometric_p(config.mean_days, config.max_days)
    return [min(int(r.generator.geometric(p)), config.max_days) for r in rngs]


def _softmax_draw(rng: Rng, logits: list[float]) -> int:
    weights = np.exp(np.asarray(logits) - max(logits))
    return int(rng.generator.choice(len(logits), p=weights / weights.sum()))


@dataclass(frozen=True, slots=True)
class _Participant:
    trait: float
    state: Vector
    mobility: Vector
    passive: np.ndarray
    age: float
    gender: int
    marital: int
    phq9: float
    phq2: Vector
    signal: Vector
    start: dt.date


def _state_path(config: SynthConfig, rng: Rng, length: int) -> Vector:
    ar, sd = config.daily_ar_coeff, config.state_sd
    shocks = rng_normal(rng, length, 0.0, sd)
    state = np.empty(length)
    state[0] = shocks[0] / math.sqrt(1.0 - ar * ar)
    for d in range(1, length):
        state[d] = ar * state[d - 1] + shocks[d]
    return state


def _participant(config: SynthConfig, rng: Rng, length: int) -> _Participant:
    t = float(rng_normal(rng, 1, 0.0, config.latent_trait_sd)[0])
    s = _state_path(config, rng, length)
    m = -0.5 * s + 0.5 * rng_normal(rng, length)
    e = rng.generator.standard_normal((length, len(PASSIVE_FEATURES)))
    passive = np.column_stack(
        [
            np.exp(1.0 + m + 0.1 * e[:, 0]),
            np.exp(0.5 + 0.8 * m + 0.1 * e[:, 1]),
            np.exp(m + 0.2 * e[:, 2]),
            np.exp(2.0 - 0.4 * s - 0.3 * t + 0.3 * e[:, 3]),
            np.round(np.exp(1.5 - 0.3 * s - 0.2 * t + 0.3 * e[:, 4])),
            np.round(np.exp(0.5 + 0.4 * s + 0.3 * e[:, 5])),
            np.round(np.exp(1.2 - 0.2 * s - 0.3 * t + 0.3 * e[:, 6])),
        ]
    )
    age = float(np.clip(np.round(40.0 - 3.0 * t + 10.0 * rng.generator.standard_normal()), 18, 80))
    gender = _softmax_draw(rng, [0.5 * t, 0.0, -2.0])
    marital = _softmax_draw(rng, [0.4 * t - 0.5, -0.5 * t, 0.3 * t, -1.5])
    signal = (
        TARGET_INTERCEPT
        + TRAIT_EFFECT * t
        + STATE_EFFECT * s
        + INTERACTION_EFFECT * config.interaction_strength * t * m
    )
    noise = rng_normal(rng, length, 0.0, config.noise_sd)
    offset = int(rng.generator.integers(0, _ENROLMENT_SPREAD_DAYS))
    return _Participant(
        trait=t,
        state=s,
        mobility=m,
        passive=passive,
        age=age,
        gender=gender,
        marital=marital,
        phq9=float(np.round(np.clip(10.0 + 4.0 * t, 0.0, 27.0))),
        phq2=np.clip(signal + noise, 0.0, 6.0),
        signal=signal,
        start=config.start_date + dt.timedelta(days=offset),
    )


def generate(config: SynthConfig) -> Dataset:
    """
    Fully observed synthetic cohort.

    Oracle columns: trait, state, mobility, signal (the noise-free, unclipped target).
    """
    root = Rng(config.seed).child(_PARTICIPANT_STREAM)
    rngs = [root.child(i) for i in range(config.n_participants)]
    lengths = participation_lengths(config, rngs)
    width = max(3, len(str(config.n_participants)))

    ids: list[str] = []
    days: list[int] = []
    dates: list[str] = []
    blocks: list[np.ndarray] = []
    target: list[Vector] = []
    oracle: dict[str, list[Vector]] = {"trait": [], "state": [], "mobility": [], "signal": []}
    for i, (rng, length) in enumerate(zip(rngs, lengths, strict=True)):
        p = _participant(config, rng, length)
        ids.extend([f"P{i + 1:0{width}d}"] * length)
        days.extend(range(length))
        dates.extend((p.start + dt.timedelta(days=d)).isoformat() for d in range(length))
        background = np.tile([p.age, p.gender, p.marital, p.phq9], (length, 1))
        blocks.append(np.hstack([p.passive, background]))
        target.append(p.phq2)
        oracle["trait"].append(np.full(length, p.trait))
        oracle["state"].append(p.state)
        oracle["mobility"].append(p.mobility)
        oracle["signal"].append(p.signal)

    schema = raw_schema(KNOWN_CATEGORIES)
    dataset = Dataset(
        schema=schema,
        participant_ids=np.asarray(ids, dtype=str),
        day_index=np.asarray(days, dtype=np.int64),
        dates=np.asarray(dates, dtype=str),
        features=np.vstack(blocks) if blocks else np.empty((0, schema.width)),
        target=np.concatenate(target) if target else np.empty(0),
        row_ids=np.arange(len(ids), dtype=np.int64),
        oracle={k: np.concatenate(v) if v else np.empty(0) for k, v in oracle.items()},
    )
    log.info(
        "synth.generated",
        participants=config.n_participants,
        rows=dataset.n_rows,
        mean_length=float(np.mean(lengths)) if lengths else 0.0,
        seed=config.seed,
    )
    return dataset


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def apply_missingness(
    dataset: Dataset,
    missing_rate: float,
    mechanism: Literal["MCAR", "MAR"],
    rng: Rng,
    mar_slope: float = 1.0,
) -> Dataset:
    """
    Mask PF and BG cells; targets and the PHQ-9 baseline are never masked.

    MCAR: every cell with probability `missing_rate`.
    MAR: PF cells with sigmoid(logit(rate) + mar_slope·state) using the row's true
    state from the oracle; BG cells stay MCAR.
    """
    if not 0.0 <= missing_rate < 1.0:
        raise ArgumentError(f"missing_rate must lie in [0, 1), got {missing_rate}")
    if missing_rate == 0.0:
        return dataset
    if mechanism not in ("MCAR", "MAR"):
        raise ArgumentError(f"unknown missingness mechanism {mechanism!r}")
    pf = list(dataset.schema.indices_for(Modality.PF))
    bg = list(dataset.schema.indices_for(Modality.BG))
    probability = np.zeros(dataset.features.shape)
    probability[:, pf + bg] = missing_rate
    if mechanism == "MAR":
        if "state" not in dataset.oracle:
            raise ArgumentError("MAR missingness needs the synthetic state oracle")
        logit = math.log(missing_rate / (1.0 - missing_rate))
        probability[:, pf] = _sigmoid(logit + mar_slope * dataset.oracle["state"])[:, None]
    mask = rng.generator.random(dataset.features.shape) < probability
    features = np.where(mask, np.nan, dataset.features)
    log.info(
        "synth.missingness_applied",
        mechanism=mechanism,
        rate=missing_rate,
        masked_cells=int(mask.sum()),
    )
    return dataset.with_features(dataset.schema, features)


def generate_benchmark(config: SynthConfig) -> Dataset:
    """generate followed by apply_missingness with the config's rate and mechanism."""
    dataset = generate(config)
    return apply_missingness(
        dataset,
        config.missing_rate,
        config.mechanism,
        Rng(config.seed).child(_MISSINGNESS_STREAM),
        config.mar_slope,
    )
