"""
Results CSV store — one row per (experiment, repeat).

Columns, in order:

  model, modalities, split_mode, train_weeks, seed,
  train_mse, test_mse, train_r2, test_r2, chosen_hparams

`chosen_hparams` is `key=value;key=value` with keys and values URL-encoded.
Ablation tables append `subset`, sweep tables append `sweep_weeks`. Floats are
written in shortest round-trip form, so a reread reproduces every metric
exactly and reruns with the same seed are byte-identical.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path
from urllib.parse import quote, unquote

import pandas as pd
import structlog
from railway import Result, ResultFailures

from fuselab.domain.models import ExperimentResult, SeedScores, parse_modalities
from fuselab.errors import ArgumentError, ParseError

log = structlog.get_logger()

RESULT_COLUMNS = (
    "model",
    "modalities",
    "split_mode",
    "train_weeks",
    "seed",
    "train_mse",
    "test_mse",
    "train_r2",
    "test_r2",
    "chosen_hparams",
)
_METRICS = ("train_mse", "test_mse", "train_r2", "test_r2")


class TableKind(StrEnum):
    RESULTS = "results"
    ABLATION = "ablation"
    SWEEP = "sweep"

    @property
    def columns(self) -> tuple[str, ...]:
        match self:
            case TableKind.ABLATION:
                return (*RESULT_COLUMNS, "subset")
            case TableKind.SWEEP:
                return (*RESULT_COLUMNS, "sweep_weeks")
        return RESULT_COLUMNS


def encode_hparams(hparams: Mapping[str, str]) -> str:
    return ";".join(
        f"{quote(k, safe='')}={quote(hparams[k], safe='')}" for k in sorted(hparams)
    )


def decode_hparams(text: str) -> dict[str, str]:
    if not text:
        return {}
    pairs = {}
    for item in text.split(";"):
        key, sep, value = item.partition("=")
        if not sep:
            raise ParseError(f"malformed hyperparameter entry {item!r}")
        pairs[unquote(key)] = unquote(value)
    return pairs


def _row(result: ExperimentResult, scores: SeedScores, kind: TableKind) -> list[str]:
    weeks = "" if result.train_weeks is None else str(result.train_weeks)
    row = [
        result.model,
        result.modality_label,
        result.split_mode,
        weeks,
        str(scores.seed),
        *(repr(float(getattr(scores, m))) for m in _METRICS),
        encode_hparams(scores.chosen_hparams),
    ]
    if kind is TableKind.ABLATION:
        row.append(result.modality_label)
    elif kind is TableKind.SWEEP:
        row.append(weeks)
    return row


def results_frame(results: Sequence[ExperimentResult], kind: TableKind) -> pd.DataFrame:
    """All rows as strings, experiments in the given order, repeats by seed."""
    rows = [_row(r, s, kind) for r in results for s in r.per_seed]
    return pd.DataFrame(rows, columns=list(kind.columns), dtype=str)


def _write(results: Sequence[ExperimentResult], path: Path, kind: TableKind) -> Path:
    if not results:
        raise ArgumentError("no results to write")
    path.parent.mkdir(parents=True, exist_ok=True)
    results_frame(results, kind).to_csv(path, index=False, lineterminator="\n")
    log.info("results.written", path=str(path), kind=kind.value, experiments=len(results))
    return path


def write_results(
    results: Sequence[ExperimentResult], path: Path, kind: TableKind = TableKind.RESULTS
) -> Result[Path]:
    return ResultFailures.capture(lambda: _write(results, path, kind), "results_store.write")


# ── reading ──────────────────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class LoadedResults:
    kind: TableKind
    experiments: tuple[ExperimentResult, ...]


def _kind_of(header: list[str], path: Path) -> TableKind:
    for kind in TableKind:
        if tuple(header) == kind.columns:
            return kind
    raise ParseError(f"{path} line 1: unexpected header {header}")


def _float(text: str, column: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"line {line}: {column} is not a number: {text!r}") from None


def _read(path: Path) -> LoadedResults:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise ParseError(f"{path} is empty") from None
    kind = _kind_of(list(frame.columns), path)
    if frame.empty:
        raise ParseError(f"{path} has a header but no result rows")
    groups: dict[tuple[str, str, str, str, str], list[SeedScores]] = {}
    for offset, record in enumerate(frame.to_dict("records")):
        line = offset + 2
        key = (
            record["model"],
            record["modalities"],
            record["split_mode"],
            record["train_weeks"],
            record.get("subset", record.get("sweep_weeks", "")),
        )
        if record["split_mode"] not in ("temporal", "random"):
            raise ParseError(f"line {line}: unknown split_mode {record['split_mode']!r}")
        try:
            seed = int(record["seed"])
            if record["train_weeks"]:
                int(record["train_weeks"])
            hparams = decode_hparams(record["chosen_hparams"])
        except (ValueError, ParseError) as e:
            raise ParseError(f"line {line}: {e}") from None
        groups.setdefault(key, []).append(
            SeedScores(
                seed=seed,
                train_mse=_float(record["train_mse"], "train_mse", line),
                test_mse=_float(record["test_mse"], "test_mse", line),
                train_r2=_float(record["train_r2"], "train_r2", line),
                test_r2=_float(record["test_r2"], "test_r2", line),
                chosen_hparams=hparams,
            )
        )
    experiments = []
    for (model, modalities, split_mode, weeks, _), scores in groups.items():
        try:
            subset = parse_modalities(modalities)
        except ArgumentError as e:
            raise ParseError(f"{path}: {e}") from None
        experiments.append(
            ExperimentResult(
                model=model,
                modalities=subset,
                split_mode=split_mode,
                train_weeks=int(weeks) if weeks else None,
                test_fraction=None,
                per_seed=tuple(scores),
            )
        )
    return LoadedResults(kind=kind, experiments=tuple(experiments))


def read_results(path: Path) -> Result[LoadedResults]:
    """Parse a results, ablation or sweep CSV; errors name the offending line."""
    return ResultFailures.capture(lambda: _read(path), f"results_store.read {path}")
