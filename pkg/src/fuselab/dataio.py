"""
Data I/O and preprocessing — the four-CSV ingestion contract, merge, encoding, scaling.

CSV contract (UTF-8, comma-separated, header row, RFC-4180 quoting):
  passive.csv       participant_id, date, distance_travelled_km, movement_radius_km,
                    location_variance, call_duration_min, sms_count,
                    missed_interactions, unique_contacts
  demographics.csv  participant_id, age, gender, marital_status
  phq9.csv          participant_id, phq9_baseline   (0–27)
  phq2.csv          participant_id, date, phq2      (0–6)

Dates are ISO-8601 (YYYY-MM-DD). Missing cells: empty, "NA", "n/a", "NaN" in any
case; unparseable numeric cells also become missing. Internally NaN is the only
missing sentinel.

load_tables / write_tables touch the filesystem and return Results. The pure
transforms (assemble, one_hot, standardizer, select_modalities) raise typed
errors from fuselab.errors.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd
import structlog
from numpy.typing import ArrayLike, NDArray
from railway import Result, ResultFailures

from fuselab.domain.models import Column, ColumnKind, Dataset, FeatureSchema, Modality
from fuselab.errors import (
    ArgumentError,
    DomainError,
    EncodingError,
    ParseError,
    SchemaError,
    ShapeError,
    SplitError,
    StateError,
)
from fuselab.numerics import Rng, Vector, permutation

log = structlog.get_logger()

MISSING_TOKENS = frozenset({"", "na", "n/a", "nan"})

PASSIVE_FEATURES: tuple[str, ...] = (
    "distance_travelled_km",
    "movement_radius_km",
    "location_variance",
    "call_duration_min",
    "sms_count",
    "missed_interactions",
    "unique_contacts",
)

# Vocabularies are unioned with observed labels so every categorical has >= 2 levels.
KNOWN_CATEGORIES: Mapping[str, tuple[str, ...]] = {
    "gender": ("Female", "Male", "Other"),
    "marital_status": ("Divorced", "Married", "Single", "Widowed"),
}

FILE_NAMES: Mapping[str, str] = {
    "passive": "passive.csv",
    "demographics": "demographics.csv",
    "phq9": "phq9.csv",
    "phq2": "phq2.csv",
}

PHQ2_RANGE = (0.0, 6.0)
PHQ9_RANGE = (0.0, 27.0)


def raw_schema(categories: Mapping[str, tuple[str, ...]] = KNOWN_CATEGORIES) -> FeatureSchema:
    """Pre-encoding schema: PF block, BG block (age + two categoricals), PHQ-9 baseline."""
    return FeatureSchema(
        columns=(
            *(Column(name, Modality.PF) for name in PASSIVE_FEATURES),
            Column("age", Modality.BG),
            Column("gender", Modality.BG, ColumnKind.CATEGORICAL, tuple(categories["gender"])),
            Column(
                "marital_status",
                Modality.BG,
                ColumnKind.CATEGORICAL,
                tuple(categories["marital_status"]),
            ),
            Column("phq9_baseline", Modality.PHQ9),
        )
    )


# ── loading ──────────────────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class RawTables:
    """The four parsed CSV tables; numeric columns float, dates datetime64, ids str."""

    passive: pd.DataFrame
    demographics: pd.DataFrame
    phq9: pd.DataFrame
    phq2: pd.DataFrame


def _read_table(
    path: Path,
    required: Iterable[str],
    numeric: Iterable[str] = (),
    dates: Iterable[str] = (),
) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    required = list(required)
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8")
    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path.name}: missing required column(s) {', '.join(missing)}")
    frame = frame[required].copy()
    for name in required:
        text = frame[name].str.strip()
        frame[name] = text.mask(text.str.lower().isin(MISSING_TOKENS))
    for name in numeric:
        parsed = pd.to_numeric(frame[name], errors="coerce")
        unparseable = int((frame[name].notna() & parsed.isna()).sum())
        if unparseable:
            log.warning("dataio.unparseable_cells", file=path.name, column=name, count=unparseable)
        frame[name] = parsed.astype(np.float64)
    for name in dates:
        frame[name] = pd.to_datetime(frame[name], format="%Y-%m-%d", errors="coerce")
    log.debug("dataio.table_loaded", file=path.name, rows=len(frame))
    return frame


def _read_all(
    passive_path: Path, demographics_path: Path, phq9_path: Path, phq2_path: Path
) -> RawTables:
    return RawTables(
        passive=_read_table(
            passive_path, ("participant_id", "date", *PASSIVE_FEATURES), PASSIVE_FEATURES, ("date",)
        ),
        demographics=_read_table(
            demographics_path, ("participant_id", "age", "gender", "marital_status"), ("age",)
        ),
        phq9=_read_table(phq9_path, ("participant_id", "phq9_baseline"), ("phq9_baseline",)),
        phq2=_read_table(phq2_path, ("participant_id", "date", "phq2"), ("phq2",), ("date",)),
    )


def load_tables(
    passive_path: Path, demographics_path: Path, phq9_path: Path, phq2_path: Path
) -> Result[RawTables]:
    """Read and type the four CSVs; missing file → IO_ERROR, missing header → SCHEMA_ERROR."""
    return ResultFailures.capture(
        lambda: _read_all(passive_path, demographics_path, phq9_path, phq2_path),
        "dataio.load_tables",
    )


def load_directory(directory: Path) -> Result[RawTables]:
    """load_tables on the standard file names inside `directory`."""
    d = Path(directory)
    return load_tables(
        d / FILE_NAMES["passive"],
        d / FILE_NAMES["demographics"],
        d / FILE_NAMES["phq9"],
        d / FILE_NAMES["phq2"],
    )


# ── assembly ─────────────────────────────────────────────────────────────────


def _last_wins(frame: pd.DataFrame, keys: list[str], table: str) -> pd.DataFrame:
    dupes = frame.duplicated(keys, keep="last")
    for _, row in frame[dupes].iterrows():
        key = {
            k: v.date().isoformat() if isinstance(v, pd.Timestamp) else v
            for k, v in row[keys].items()
        }
        log.warning(f"dataio.duplicate_{table}", **key)
    return frame[~dupes]


def _check_range(values: pd.Series, bounds: tuple[float, float], name: str) -> None:
    low, high = bounds
    bad = values.notna() & ((values < low) | (values > high))
    if bad.any():
        raise DomainError(f"{name} value {values[bad].iloc[0]} outside [{low:g}, {high:g}]")


def _phq2_rows(phq2: pd.DataFrame) -> pd.DataFrame:
    incomplete = phq2["participant_id"].isna() | phq2["date"].isna()
    if incomplete.any():
        line = int(np.flatnonzero(incomplete.to_numpy())[0]) + 2
        raise ParseError(f"phq2.csv line {line}: participant_id and a valid date are required")
    unobserved = phq2["phq2"].isna()
    if unobserved.any():
        log.warning("dataio.phq2_missing_value", rows=int(unobserved.sum()))
    observed = phq2[~unobserved]
    _check_range(observed["phq2"], PHQ2_RANGE, "phq2")
    return _last_wins(observed, ["participant_id", "date"], "phq2")


def _per_participant(frame: pd.DataFrame, table: str) -> pd.DataFrame:
    frame = frame[frame["participant_id"].notna()]
    return _last_wins(frame, ["participant_id"], table).set_index("participant_id")


def _codes(labels: pd.Series, categories: tuple[str, ...]) -> Vector:
    lookup = {c: float(i) for i, c in enumerate(categories)}
    return np.array([lookup[v] if isinstance(v, str) else np.nan for v in labels], dtype=np.float64)


def assemble(tables: RawTables) -> Dataset:
    """
    One row per observed PHQ-2 (participant, date), sorted by participant then day.

    PF joins on (participant, date) and stays missing where absent; BG and the
    PHQ-9 baseline broadcast to every day of their participant. day_index counts
    days since the participant's first PHQ-2 observation.
    """
    phq2 = _phq2_rows(tables.phq2)

    passive = tables.passive
    undated = passive["participant_id"].isna() | passive["date"].isna()
    if undated.any():
        log.warning("dataio.passive_rows_dropped", rows=int(undated.sum()), reason="no id or date")
    passive = _last_wins(passive[~undated], ["participant_id", "date"], "passive")

    demographics = _per_participant(tables.demographics, "demographics")
    phq9 = _per_participant(tables.phq9, "phq9")
    _check_range(phq9["phq9_baseline"], PHQ9_RANGE, "phq9_baseline")

    merged = phq2.merge(passive, on=["participant_id", "date"], how="left")
    merged = merged.sort_values(["participant_id", "date"], kind="stable").reset_index(drop=True)
    participants = merged["participant_id"]

    absent = sorted(set(participants) - set(demographics.index))
    if absent:
        log.warning("dataio.participants_without_demographics", participants=absent)
    absent9 = sorted(set(participants) - set(phq9.index))
    if absent9:
        log.warning("dataio.participants_without_phq9", participants=absent9)

    bg = demographics.reindex(participants)
    categories = {
        name: tuple(sorted(set(KNOWN_CATEGORIES[name]) | set(bg[name].dropna())))
        for name in KNOWN_CATEGORIES
    }
    schema = raw_schema(categories)

    first_day = merged.groupby("participant_id")["date"].transform("min")
    columns = [
        *(merged[name].to_numpy(dtype=np.float64) for name in PASSIVE_FEATURES),
        bg["age"].to_numpy(dtype=np.float64),
        _codes(bg["gender"], categories["gender"]),
        _codes(bg["marital_status"], categories["marital_status"]),
        phq9["phq9_baseline"].reindex(participants).to_numpy(dtype=np.float64),
    ]
    dataset = Dataset(
        schema=schema,
        participant_ids=participants.to_numpy(dtype=str),
        day_index=(merged["date"] - first_day).dt.days.to_numpy(dtype=np.int64),
        dates=merged["date"].dt.strftime("%Y-%m-%d").to_numpy(dtype=str),
        features=np.column_stack(columns) if len(merged) else np.empty((0, schema.width)),
        target=merged["phq2"].to_numpy(dtype=np.float64),
        row_ids=np.arange(len(merged), dtype=np.int64),
    )
    log.info(
        "dataio.assembled",
        rows=dataset.n_rows,
        participants=len(dataset.participants),
        missing_cells=int(dataset.missing_mask().sum()),
    )
    return dataset


# ── writing ──────────────────────────────────────────────────────────────────


def _labels(dataset: Dataset, name: str) -> list[str | None]:
    column = dataset.schema.columns[dataset.schema.index_of(name)]
    return [None if np.isnan(c) else column.categories[int(c)] for c in dataset.column(name)]


def _background(dataset: Dataset) -> pd.DataFrame:
    """One row per participant holding the first observed value of each per-participant column."""
    frame = pd.DataFrame(
        {
            "participant_id": dataset.participant_ids,
            "age": dataset.column("age"),
            "gender": _labels(dataset, "gender"),
            "marital_status": _labels(dataset, "marital_status"),
            "phq9_baseline": dataset.column("phq9_baseline"),
        }
    )
    return frame.groupby("participant_id", sort=False).first().reset_index()


def _write_all(dataset: Dataset, out_dir: Path) -> dict[str, Path]:
    missing = [c for c in raw_schema().names if c not in dataset.schema.names]
    if missing:
        raise SchemaError(f"dataset lacks contract column(s) {', '.join(missing)}")
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {key: out_dir / name for key, name in FILE_NAMES.items()}

    passive = pd.DataFrame({"participant_id": dataset.participant_ids, "date": dataset.dates})
    for name in PASSIVE_FEATURES:
        passive[name] = dataset.column(name)
    passive = passive[passive[list(PASSIVE_FEATURES)].notna().any(axis=1)]
    passive.to_csv(paths["passive"], index=False, lineterminator="\n")

    background = _background(dataset)
    demographics = background[["participant_id", "age", "gender", "marital_status"]]
    demographics.to_csv(paths["demographics"], index=False, lineterminator="\n")

    phq9 = pd.DataFrame(
        {
            "participant_id": background["participant_id"],
            "phq9_baseline": pd.array(
                np.round(background["phq9_baseline"].to_numpy(dtype=np.float64)), dtype="Float64"
            ).astype("Int64"),
        }
    )
    phq9.to_csv(paths["phq9"], index=False, lineterminator="\n")

    phq2 = pd.DataFrame(
        {"participant_id": dataset.participant_ids, "date": dataset.dates, "phq2": dataset.target}
    )
    phq2.to_csv(paths["phq2"], index=False, lineterminator="\n")
    log.info("dataio.tables_written", directory=str(out_dir), rows=dataset.n_rows)
    return paths


def write_tables(dataset: Dataset, out_dir: Path) -> Result[dict[str, Path]]:
    """Write a raw (pre-encoding) Dataset back out as the four-CSV contract."""
    return ResultFailures.capture(lambda: _write_all(dataset, Path(out_dir)), "dataio.write_tables")


def row_counts(paths: Mapping[str, Path]) -> dict[str, int]:
    """Data rows per written CSV (lines minus header)."""
    return {key: len(pd.read_csv(path, dtype=str)) for key, path in paths.items()}


# ── encoding ─────────────────────────────────────────────────────────────────


def one_hot(dataset: Dataset) -> Dataset:
    """
    Replace each k-category column by k indicator columns `name=category`.

    A missing category makes all k indicators missing. A code outside the
    category list is an EncodingError naming the value.
    """
    if not dataset.schema.categorical_indices:
        return dataset
    columns: list[Column] = []
    blocks: list[NDArray[np.float64]] = []
    for i, column in enumerate(dataset.schema.columns):
        values = dataset.features[:, i]
        if not column.is_categorical:
            columns.append(column)
            blocks.append(values[:, None])
            continue
        observed = ~np.isnan(values)
        k = len(column.categories)
        codes = values[observed]
        bad = (codes < 0) | (codes >= k) | (codes != np.round(codes))
        if bad.any():
            raise EncodingError(
                f"unseen category code {codes[bad][0]!r} in column {column.name!r} "
                f"(categories {list(column.categories)})"
            )
        indicators = np.full((dataset.n_rows, k), np.nan)
        indicators[observed] = codes.astype(np.int64)[:, None] == np.arange(k)[None, :]
        blocks.append(indicators)
        columns.extend(
            Column(f"{column.name}={c}", column.modality, source=column.name)
            for c in column.categories
        )
    return dataset.with_features(FeatureSchema(tuple(columns)), np.hstack(blocks))


def encode_labels(column: Column, labels: Iterable[str | None]) -> Vector:
    """Category labels → float codes for a categorical column; unknown label → EncodingError."""
    lookup = {c: i for i, c in enumerate(column.categories)}
    codes = []
    for label in labels:
        if label is None:
            codes.append(np.nan)
        elif label in lookup:
            codes.append(float(lookup[label]))
        else:
            raise EncodingError(f"unseen category {label!r} in column {column.name!r}")
    return np.asarray(codes, dtype=np.float64)


# ── standardisation ──────────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class Standardizer:
    """
    Per-column mean and population sd over observed entries of the fit rows.

    Categorical code columns are not scaled (mean 0, sd 1). Columns with sd == 0
    are centered only.
    """

    column_names: tuple[str, ...] = ()
    mean: Vector | None = None
    sd: Vector | None = None

    @property
    def fitted(self) -> bool:
        return self.mean is not None and self.sd is not None


def fit_standardizer(dataset: Dataset, row_mask: ArrayLike | None = None) -> Standardizer:
    mask = np.ones(dataset.n_rows, dtype=bool) if row_mask is None else np.asarray(row_mask)
    if mask.dtype != np.bool_:
        selected = np.zeros(dataset.n_rows, dtype=bool)
        selected[mask] = True
        mask = selected
    if mask.shape != (dataset.n_rows,):
        raise ShapeError(f"row mask has shape {mask.shape}, expected ({dataset.n_rows},)")
    if int(mask.sum()) < 2:
        raise ArgumentError("standardizer needs at least two fit rows")
    rows = dataset.features[mask]
    observed = ~np.isnan(rows)
    counts = observed.sum(axis=0)
    filled = np.where(observed, rows, 0.0)
    mean = np.divide(filled.sum(axis=0), counts, out=np.zeros(rows.shape[1]), where=counts > 0)
    centered = np.where(observed, rows - mean, 0.0)
    var = np.divide(
        (centered**2).sum(axis=0), counts, out=np.zeros(rows.shape[1]), where=counts > 0
    )
    sd = np.sqrt(var)
    for i in dataset.schema.categorical_indices:
        mean[i], sd[i] = 0.0, 1.0
    empty = [dataset.schema.names[i] for i in np.flatnonzero(counts == 0)]
    if empty:
        log.warning("dataio.standardizer_unobserved_columns", columns=empty)
    mean.setflags(write=False)
    sd.setflags(write=False)
    return Standardizer(column_names=dataset.schema.names, mean=mean, sd=sd)


def apply_standardizer(std: Standardizer, dataset: Dataset) -> Dataset:
    """(x − mean) / sd per column; zero-sd columns centered only; NaN stays NaN."""
    if std.mean is None or std.sd is None:
        raise StateError("standardizer applied before fit_standardizer")
    if dataset.schema.names != std.column_names:
        raise ShapeError("dataset columns do not match the fitted standardizer")
    scale = np.where(std.sd > 0.0, std.sd, 1.0)
    return dataset.with_features(dataset.schema, (dataset.features - std.mean) / scale)


# ── modality selection and row subsets ───────────────────────────────────────


def select_modalities(dataset: Dataset, subset: Iterable[Modality]) -> Dataset:
    """Keep only columns whose modality is in `subset`, in schema order."""
    wanted = frozenset(Modality(m) for m in subset)
    if not wanted:
        raise ArgumentError("modality subset must not be empty")
    keep = [i for i, c in enumerate(dataset.schema.columns) if c.modality in wanted]
    if not keep:
        raise ArgumentError(f"no columns for modalities {sorted(m.value for m in wanted)}")
    schema = FeatureSchema(tuple(dataset.schema.columns[i] for i in keep))
    return dataset.with_features(schema, dataset.features[:, keep])


def subset_rows(dataset: Dataset, mask: ArrayLike) -> Dataset:
    return dataset.take(mask)


def week_index(dataset: Dataset, basis: Literal["participant", "calendar"]) -> NDArray[np.int64]:
    """
    Week number of each row.

    participant: day_index // 7. calendar: days since the dataset's earliest date // 7.
    """
    if basis == "participant":
        return dataset.day_index // 7
    if dataset.n_rows == 0:
        return np.zeros(0, dtype=np.int64)
    dates = dataset.dates.astype("datetime64[D]")
    return ((dates - dates.min()).astype(np.int64) // 7).astype(np.int64)


def validation_split(
    dataset: Dataset,
    fraction: float,
    mode: Literal["random", "last_week"],
    rng: Rng,
) -> tuple[Dataset, Dataset]:
    """
    Carve a validation slice out of training rows.

    random: a seeded `fraction` of rows (at least one). last_week: each
    participant's final seven days of training data, or only the last day when
    the participant has seven days or fewer; falls back to random when every
    row would be held.
    """
    n = dataset.n_rows
    if n < 2:
        raise SplitError(f"need at least two rows to hold out validation data, got {n}")
    held = np.zeros(n, dtype=bool)
    if mode == "last_week":
        days = pd.Series(dataset.day_index).groupby(dataset.participant_ids)
        first = days.transform("min").to_numpy()
        last = days.transform("max").to_numpy()
        short = last - first < 7
        held = np.where(short, dataset.day_index == last, dataset.day_index > last - 7)
        if held.all():
            log.debug("dataio.last_week_fallback", rows=n)
            mode = "random"
    if mode == "random":
        n_val = min(n - 1, max(1, round(fraction * n)))
        held[permutation(rng, n)[:n_val]] = True
    if held.all() or not held.any():
        raise SplitError(f"validation mode {mode!r} left an empty partition")
    return dataset.take(~held), dataset.take(held)
