"""
Configuration — typed, validated settings for every stage of an experiment.

Uses pydantic / pydantic-settings to:
  - Express every tunable with its documented default and range
  - Load `FUSELAB_`-prefixed environment variables (FUSELAB_SEED, FUSELAB_SYNTH__N_PARTICIPANTS)
  - Merge a flat `key = value` config file and command-line flags on top
  - Reject invalid values and unknown keys at startup, naming the offending key

Load order (highest priority first):
  1. Command-line flags
  2. `--config` file
  3. Environment variables
  4. Field defaults

Architecture: only RunConfig is a BaseSettings instance. Section settings are plain
frozen BaseModel classes so library code can build them directly, and so the env var
FUSELAB_SPLIT__TRAIN_WEEKS maps to split.train_weeks via env_nested_delimiter="__".

Config file format: one `key = value` per line, `#` starts a comment, dotted keys
address sections (`grid.cm.latent_dim = 4,8`), lists are comma-separated.
`dump_config` writes the same format, and loading a dump yields an equal RunConfig.
"""

from __future__ import annotations

import datetime as dt
from collections.abc import Mapping
from pathlib import Path
from typing import Annotated, Any, Literal

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)
from pydantic_settings import BaseSettings, SettingsConfigDict
from railway import ErrorCode, Result

from fuselab.domain.models import modality_label, parse_modalities

MAX_SEED = (1 << 64) - 1

MtryRule = Literal["third", "sqrt", "all"] | int
ModelKind = Literal["CM", "RF", "LR"]

Seed = Annotated[int, Field(ge=0, le=MAX_SEED)]


def _split_commas(value: Any) -> Any:
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


def _upper(value: Any) -> Any:
    return value.upper() if isinstance(value, str) else value


# Comma-separated in config files and flags.
PositiveInts = Annotated[list[Annotated[int, Field(ge=1)]], BeforeValidator(_split_commas)]
PositiveFloats = Annotated[list[Annotated[float, Field(gt=0)]], BeforeValidator(_split_commas)]
NonNegativeFloats = Annotated[list[Annotated[float, Field(ge=0)]], BeforeValidator(_split_commas)]
MtryRules = Annotated[list[MtryRule], BeforeValidator(_split_commas)]


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class SynthConfig(_Section):
    """Synthetic mood-study cohort; link functions in docs/developer/synthetic-generator.md."""

    n_participants: int = Field(default=131, ge=1)
    mean_days: float = Field(default=36.03, gt=1.0)
    max_days: int = Field(default=84, ge=7)
    fixed_days: int | None = Field(default=None, ge=1, description="Force every length")
    latent_trait_sd: float = Field(default=1.0, ge=0.0)
    daily_ar_coeff: float = Field(default=0.6, ge=0.0, lt=1.0)
    state_sd: float = Field(default=1.0, ge=0.0)
    noise_sd: float = Field(default=0.5, ge=0.0)
    missing_rate: float = Field(default=0.1, ge=0.0, lt=1.0)
    mechanism: Annotated[Literal["MCAR", "MAR"], BeforeValidator(_upper)] = "MCAR"
    mar_slope: float = Field(default=1.0, description="Logit slope of MAR masking in state")
    interaction_strength: float = Field(default=1.0)
    start_date: dt.date = dt.date(2014, 8, 1)
    seed: Seed = 0

    @model_validator(mode="after")
    def check_lengths(self) -> SynthConfig:
        """mean_days must be reachable below the cap, fixed_days must respect it."""
        if self.mean_days >= self.max_days:
            raise ValueError(
                f"mean_days ({self.mean_days}) must be below max_days ({self.max_days})"
            )
        if self.fixed_days is not None and self.fixed_days > self.max_days:
            raise ValueError(
                f"fixed_days ({self.fixed_days}) must not exceed max_days ({self.max_days})"
            )
        return self


class ForestConfig(_Section):
    """
    Random-forest hyperparameters.

    mtry: an integer, or a rule resolved against the feature count p:
    "third" = max(1, ⌊p/3⌋), "sqrt" = max(1, ⌊√p⌋), "all" = p.
    None picks "third" for regression and "sqrt" for classification.
    """

    n_trees: int = Field(default=300, ge=1)
    max_depth: int | None = Field(default=None, ge=1)
    min_samples_leaf: int = Field(default=5, ge=1)
    mtry: MtryRule | None = None
    bootstrap: bool = True
    n_jobs: int = Field(default=1, description="joblib workers for tree fitting")
    seed: Seed = 0

    @field_validator("n_jobs")
    @classmethod
    def validate_n_jobs(cls, value: int) -> int:
        if value == 0 or value < -1:
            raise ValueError(f"n_jobs must be >= 1 or -1, got {value}")
        return value


class ImputeConfig(_Section):
    """MissForest settings; mtry follows the task default of ForestConfig."""

    n_trees: int = Field(default=50, ge=1)
    max_iter: int = Field(default=10, ge=1)
    min_samples_leaf: int = Field(default=1, ge=1)
    max_depth: int | None = Field(default=None, ge=1)
    n_jobs: int = 1
    seed: Seed = 0

    def forest(self, seed: int) -> ForestConfig:
        return ForestConfig(
            n_trees=self.n_trees,
            max_depth=self.max_depth,
            min_samples_leaf=self.min_samples_leaf,
            n_jobs=self.n_jobs,
            seed=seed,
        )


class TrainConfig(_Section):
    """Combined Model architecture and Adam training schedule."""

    latent_dim: int = Field(default=8, ge=1)
    hidden: int = Field(default=32, ge=1)
    activation: Literal["relu", "tanh", "linear"] = "relu"
    learning_rate: float = Field(default=1e-3, gt=0.0)
    batch_size: int = Field(default=64, ge=1)
    max_epochs: int = Field(default=200, ge=1)
    patience: int = Field(default=15, ge=1)
    pretrain_epochs: int = Field(default=50, ge=0)
    fine_tune_encoders: bool = True
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    epsilon: float = Field(default=1e-8, gt=0.0)
    validation_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    validation_mode: Literal["random", "last_week"] = "random"
    clip_predictions: bool = True
    seed: Seed = 0


class SplitSpec(_Section):
    """
    Train/test split.

    temporal: row → train iff its week index < train_weeks. week_basis
    "participant" counts days from each participant's first observation,
    "calendar" counts from the earliest date in the dataset.
    random: uniform row-level holdout of test_fraction.
    """

    mode: Literal["temporal", "random"] = "temporal"
    train_weeks: int = Field(default=4, ge=1)
    test_fraction: float = Field(default=1.0 / 3.0, gt=0.0, lt=1.0)
    week_basis: Literal["participant", "calendar"] = "participant"
    seed: Seed = 0


class CmGrid(_Section):
    latent_dim: PositiveInts = Field(default_factory=lambda: [4, 8, 16])
    learning_rate: PositiveFloats = Field(default_factory=lambda: [1e-3, 1e-2])
    hidden: PositiveInts = Field(default_factory=lambda: [32, 64])


class RfGrid(_Section):
    n_trees: PositiveInts = Field(default_factory=lambda: [100, 300])
    min_samples_leaf: PositiveInts = Field(default_factory=lambda: [1, 5])
    mtry: MtryRules = Field(default_factory=lambda: ["third", "sqrt"])


class LrGrid(_Section):
    ridge: NonNegativeFloats = Field(default_factory=lambda: [1e-8])


class GridSettings(_Section):
    """Per-model hyperparameter grids; validation is a seeded share of the train rows."""

    cm: CmGrid = Field(default_factory=CmGrid)
    rf: RfGrid = Field(default_factory=RfGrid)
    lr: LrGrid = Field(default_factory=LrGrid)
    validation_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)


class ExperimentSettings(_Section):
    """
    What to run: models, modality subset, repeats and leakage flags.

    leakage_safe: impute train rows only, then impute test rows with forests fitted
    on the imputed train rows. paper_order: fit the standardizer on all rows.
    """

    models: Annotated[
        list[Annotated[ModelKind, BeforeValidator(_upper)]],
        BeforeValidator(_split_commas),
        Field(min_length=1),
    ] = Field(default_factory=lambda: ["CM", "RF", "LR"])
    modalities: str = "ALL"
    n_repeats: int = Field(default=5, ge=1)
    leakage_safe: bool = False
    paper_order: bool = False
    save_models: bool = False

    @field_validator("models")
    @classmethod
    def dedupe_models(cls, value: list[ModelKind]) -> list[ModelKind]:
        return list(dict.fromkeys(value))

    @field_validator("modalities")
    @classmethod
    def validate_modalities(cls, value: str) -> str:
        subset = parse_modalities(value)
        if not subset:
            raise ValueError("modality subset must not be empty")
        return modality_label(subset)


class SweepSettings(_Section):
    weeks_from: int = Field(default=1, ge=1)
    weeks_to: int = Field(default=8, ge=1)

    @model_validator(mode="after")
    def check_range(self) -> SweepSettings:
        if self.weeks_to < self.weeks_from:
            raise ValueError(f"weeks_to ({self.weeks_to}) < weeks_from ({self.weeks_from})")
        return self

    @property
    def weeks(self) -> range:
        return range(self.weeks_from, self.weeks_to + 1)


class RunConfig(BaseSettings):
    """
    Root settings — aggregates every section.

    `seed` is the master seed; FUSELAB_SEED is its default of last resort. Section
    seeds always follow the master seed; repeats derive their own from it.
    """

    model_config = SettingsConfigDict(
        env_prefix="FUSELAB_",
        env_nested_delimiter="__",
        extra="forbid",
        frozen=True,
    )

    seed: Seed = 0
    out: Path = Path("out")
    input_dir: Path | None = None
    log_level: str = "INFO"
    quiet: bool = False

    synth: SynthConfig = Field(default_factory=SynthConfig)
    impute: ImputeConfig = Field(default_factory=ImputeConfig)
    forest: ForestConfig = Field(default_factory=ForestConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    split: SplitSpec = Field(default_factory=SplitSpec)
    grid: GridSettings = Field(default_factory=GridSettings)
    experiment: ExperimentSettings = Field(default_factory=ExperimentSettings)
    sweep: SweepSettings = Field(default_factory=SweepSettings)

    @model_validator(mode="after")
    def align_seeds(self) -> RunConfig:
        """Section seeds follow the master seed."""
        for section in ("synth", "impute", "forest", "train", "split"):
            current = getattr(self, section)
            if current.seed != self.seed:
                object.__setattr__(self, section, current.model_copy(update={"seed": self.seed}))
        return self


# ── key = value files ────────────────────────────────────────────────────────


class ConfigFileError(ValueError):
    """Malformed config line or unknown key."""

    code = ErrorCode.CONFIGURATION_ERROR


def parse_config_text(text: str) -> dict[str, str]:
    """Parse `key = value` lines into a flat dotted-key mapping (later lines win)."""
    flat: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigFileError(f"line {number}: expected 'key = value', got {raw.strip()!r}")
        flat[key.strip()] = value.strip()
    return flat


def nest(flat: Mapping[str, Any]) -> dict[str, Any]:
    """Expand dotted keys into nested dicts: {'a.b': 1} → {'a': {'b': 1}}."""
    nested: dict[str, Any] = {}
    for key, value in flat.items():
        *parents, leaf = key.split(".")
        node = nested
        for part in parents:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigFileError(f"key {key!r} conflicts with scalar {part!r}")
            node = child
        if isinstance(node.get(leaf), dict):
            raise ConfigFileError(f"key {key!r} names a section, not a value")
        node[leaf] = value
    return nested


def merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> dict[str, Any]:
    """Deep-merge nested mappings; values from `override` win."""
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _flatten(values: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in values.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def _render(value: Any) -> str:
    match value:
        case bool():
            return "true" if value else "false"
        case list() | tuple():
            return ",".join(_render(v) for v in value)
        case float():
            return repr(value)
        case _:
            return str(value)


_SECTION_SEED_KEYS = frozenset(f"{s}.seed" for s in ("synth", "impute", "forest", "train", "split"))


def dump_config(config: RunConfig) -> str:
    """Render the resolved configuration as a loadable key = value file."""
    flat = _flatten(config.model_dump(mode="json"))
    lines = ["# fuselab resolved configuration"]
    for key in sorted(flat):
        value = flat[key]
        if value is None or key in _SECTION_SEED_KEYS:
            continue
        lines.append(f"{key} = {_render(value)}")
    return "\n".join(lines) + "\n"


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        key = ".".join(str(p) for p in item["loc"])
        parts.append(f"{key}: {item['msg']}")
    return "; ".join(parts)


def build_run_config(
    file_values: Mapping[str, Any] | None = None,
    flag_values: Mapping[str, Any] | None = None,
) -> Result[RunConfig]:
    """
    Resolve RunConfig from nested file values and flag values (flags win).

    Environment variables and defaults fill whatever neither provides.
    """
    merged = merge(file_values or {}, flag_values or {})
    try:
        return Result.success(RunConfig(**merged))
    except ValidationError as e:
        return Result.failure(
            ErrorCode.CONFIGURATION_ERROR, f"invalid configuration: {_describe(e)}"
        )


def load_config_file(path: Path) -> Result[dict[str, Any]]:
    """Read and nest a key = value config file."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        return Result.failure(ErrorCode.IO_ERROR, f"cannot read config file {path}", e)
    try:
        return Result.success(nest(parse_config_text(text)))
    except ConfigFileError as e:
        return Result.failure(ErrorCode.CONFIGURATION_ERROR, f"config file {path}", e)
