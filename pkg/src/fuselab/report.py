"""
Report — SVG charts and a markdown summary of results tables.

  report.svg  grouped bars of mean train/test MSE and R² per experiment
  sweep.svg   mean train/test MSE per training-week count (only for sweep tables)
  report.md   run table, train–test R² gap per model, and the published
              reference values, labelled as not reproducible here

SVG is emitted as plain markup: one `<rect class="bar">` per plotted value and
one `<polyline class="series">` per sweep series, so charts can be checked
structurally. Output is a pure function of the input rows.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import structlog
from railway import Result, ResultFailures

from fuselab.adapters.results_store import LoadedResults, TableKind, read_results
from fuselab.domain.models import ExperimentResult
from fuselab.errors import ArgumentError

log = structlog.get_logger()

REFERENCE_LABEL = "reference (BRIGHTEN, not reproducible here)"


@dataclass(frozen=True, slots=True)
class ReferenceScore:
    model: str
    split_mode: str
    test_mse: float
    test_r2: float


# Published test scores on the private BRIGHTEN V1 cohort; documentation only.
REFERENCE_SCORES: tuple[ReferenceScore, ...] = (
    ReferenceScore("CM", "temporal", 0.4985, 0.4695),
    ReferenceScore("RF", "temporal", 0.5305, 0.4356),
    ReferenceScore("LR", "temporal", 0.65, 0.29),
    ReferenceScore("CM", "random", 0.5635, 0.4316),
    ReferenceScore("RF", "random", 0.6007, 0.3943),
)
# CM test MSE from one training week to the longest training period.
REFERENCE_SWEEP_TEST_MSE = (0.52, 0.44)
REFERENCE_SWEEP_TRAIN_MSE = (0.46, 0.48)

_PALETTE = {"train": "#9ecae1", "test": "#3182bd"}
_MODEL_COLOURS = {"CM": "#3182bd", "RF": "#e6550d", "LR": "#31a354"}
_QUOTE = {'"': "&quot;"}


# ── svg primitives ───────────────────────────────────────────────────────────


def _num(x: float) -> str:
    text = f"{x:.2f}".rstrip("0").rstrip(".")
    return "0" if text == "-0" else text


def _attrs(attr: dict[str, object]) -> str:
    parts = []
    for key, value in attr.items():
        rendered = _num(value) if isinstance(value, float) else str(value)
        name = key.rstrip("_").replace("_", "-")
        parts.append(f'{name}="{escape(rendered, _QUOTE)}"')
    return " ".join(parts)


def _tag(name: str, text: str | None = None, **attr: object) -> str:
    props = _attrs(attr)
    head = f"<{name} {props}" if props else f"<{name}"
    if text is None:
        return head + " />"
    return f"{head}>{escape(text)}</{name}>"


def _svg(width: float, height: float, body: Iterable[str]) -> str:
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(width)}" '
        f'height="{_num(height)}" viewBox="0 0 {_num(width)} {_num(height)}" '
        'font-family="sans-serif" font-size="11">',
        _tag("rect", x=0.0, y=0.0, width=width, height=height, fill="white"),
        *body,
        "</svg>",
    ]
    return "\n".join(lines) + "\n"


def _label(result: ExperimentResult) -> str:
    split = result.split_mode
    if result.train_weeks is not None:
        split += f" {result.train_weeks}w"
    return f"{result.model} {result.modality_label} ({split})"


# ── bar chart ────────────────────────────────────────────────────────────────


def _bar_panel(
    results: Sequence[ExperimentResult],
    metric: str,
    title: str,
    top: float,
    left: float = 60.0,
    group_width: float = 70.0,
    height: float = 160.0,
) -> list[str]:
    values = [(r, part, r.mean(f"{part}_{metric}")) for r in results for part in ("train", "test")]
    low = min(0.0, *(v for _, _, v in values))
    high = max(1e-12, *(v for _, _, v in values))
    span = high - low
    baseline = top + height * high / span
    body = [
        _tag("text", title, x=left, y=top - 8.0, font_weight="bold"),
        _tag("line", x1=left, y1=baseline, x2=left + group_width * len(results), y2=baseline,
             stroke="black"),
        _tag("text", _num(high), x=left - 6.0, y=top + 4.0, text_anchor="end"),
        _tag("text", _num(low), x=left - 6.0, y=top + height + 4.0, text_anchor="end"),
    ]
    bar = group_width * 0.35
    for g, result in enumerate(results):
        x0 = left + g * group_width + group_width * 0.1
        for b, part in enumerate(("train", "test")):
            value = result.mean(f"{part}_{metric}")
            extent = height * abs(value) / span
            y = baseline - extent if value >= 0 else baseline
            body.append(
                _tag(
                    "rect",
                    class_="bar",
                    x=x0 + b * bar,
                    y=y,
                    width=bar,
                    height=extent,
                    fill=_PALETTE[part],
                    data_experiment=_label(result),
                    data_metric=f"{part}_{metric}",
                    data_value=repr(value),
                )
            )
        body.append(
            _tag(
                "text",
                _label(result),
                x=x0 + bar,
                y=top + height + 14.0,
                text_anchor="end",
                transform=f"rotate(-35 {_num(x0 + bar)} {_num(top + height + 14.0)})",
            )
        )
    return body


def bar_chart_svg(results: Sequence[ExperimentResult]) -> str:
    """Two panels (MSE, R²) with a train and a test bar per experiment."""
    if not results:
        raise ArgumentError("nothing to chart")
    width = 60.0 + 70.0 * len(results) + 40.0
    body = [
        *_bar_panel(results, "mse", "Mean squared error (lower is better)", top=40.0),
        *_bar_panel(results, "r2", "R² (higher is better)", top=340.0),
    ]
    legend_x = width - 120.0
    for i, part in enumerate(("train", "test")):
        body.append(_tag("rect", x=legend_x, y=10.0 + 14.0 * i, width=10.0, height=10.0,
                         fill=_PALETTE[part]))
        body.append(_tag("text", part, x=legend_x + 14.0, y=19.0 + 14.0 * i))
    return _svg(max(width, 360.0), 620.0, body)


# ── sweep chart ──────────────────────────────────────────────────────────────


def sweep_svg(results: Sequence[ExperimentResult]) -> str:
    """Mean train (dashed) and test (solid) MSE against training weeks, one pair per model."""
    points = [r for r in results if r.train_weeks is not None]
    if not points:
        raise ArgumentError("sweep chart needs temporal results")
    weeks = sorted({r.train_weeks for r in points if r.train_weeks is not None})
    values = [r.mean(m) for r in points for m in ("train_mse", "test_mse")]
    low, high = min(values), max(values)
    span = (high - low) or 1.0
    left, top, width, height = 60.0, 30.0, 400.0, 220.0
    w_low, w_span = weeks[0], (weeks[-1] - weeks[0]) or 1

    def xy(week: int, value: float) -> str:
        x = left + width * (week - w_low) / w_span
        y = top + height * (high - value) / span
        return f"{_num(x)},{_num(y)}"

    body = [
        _tag("line", x1=left, y1=top + height, x2=left + width, y2=top + height, stroke="black"),
        _tag("line", x1=left, y1=top, x2=left, y2=top + height, stroke="black"),
        _tag("text", "training weeks", x=left + width / 2, y=top + height + 32.0,
             text_anchor="middle"),
        _tag("text", _num(high), x=left - 6.0, y=top + 4.0, text_anchor="end"),
        _tag("text", _num(low), x=left - 6.0, y=top + height + 4.0, text_anchor="end"),
    ]
    for week in weeks:
        x = left + width * (week - w_low) / w_span
        body.append(_tag("text", str(week), x=x, y=top + height + 16.0, text_anchor="middle"))
    models = list(dict.fromkeys(r.model for r in points))
    for row, model in enumerate(models):
        series = sorted(
            (r for r in points if r.model == model), key=lambda r: r.train_weeks or 0
        )
        colour = _MODEL_COLOURS.get(model, "black")
        for part, dash in (("train", "4 3"), ("test", "none")):
            body.append(
                _tag(
                    "polyline",
                    class_="series",
                    points=" ".join(xy(r.train_weeks or 0, r.mean(f"{part}_mse")) for r in series),
                    fill="none",
                    stroke=colour,
                    stroke_dasharray=dash,
                    data_series=f"{model} {part}",
                )
            )
        body.append(
            _tag("text", f"{model} (dashed: train, solid: test)", x=left + width + 10.0,
                 y=top + 12.0 + 14.0 * row, fill=colour)
        )
    return _svg(left + width + 220.0, top + height + 50.0, body)


# ── markdown ─────────────────────────────────────────────────────────────────


def _mean_sd(result: ExperimentResult, metric: str) -> str:
    return f"{result.mean(metric):.4f} ± {result.sd(metric):.4f}"


def _table(header: Sequence[str], rows: Iterable[Sequence[str]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return lines


def markdown_report(tables: Sequence[LoadedResults]) -> str:
    experiments = [e for t in tables for e in t.experiments]
    if not experiments:
        raise ArgumentError("no results to report")
    lines = ["# fuselab report", "", "## Runs", ""]
    lines += _table(
        ("model", "modalities", "split", "train weeks", "repeats", "test MSE", "test R²",
         "train R²"),
        (
            (
                e.model,
                e.modality_label,
                e.split_mode,
                "" if e.train_weeks is None else str(e.train_weeks),
                str(len(e.per_seed)),
                _mean_sd(e, "test_mse"),
                _mean_sd(e, "test_r2"),
                _mean_sd(e, "train_r2"),
            )
            for e in experiments
        ),
    )
    lines += ["", "## Overfitting gap (train R² − test R²)", ""]
    lines += _table(
        ("model", "modalities", "split", "train weeks", "gap"),
        (
            (
                e.model,
                e.modality_label,
                e.split_mode,
                "" if e.train_weeks is None else str(e.train_weeks),
                f"{e.mean_overfit_gap:.4f}",
            )
            for e in experiments
        ),
    )
    lines += ["", f"## {REFERENCE_LABEL}", ""]
    lines += [
        "Published test scores on the BRIGHTEN V1 cohort (all modalities). The cohort and the",
        "tuned hyperparameters are not available, so these values are context, not targets.",
        "",
    ]
    lines += _table(
        ("model", "split", "test MSE", "test R²"),
        (
            (r.model, r.split_mode, f"{r.test_mse:.4f}", f"{r.test_r2:.4f}")
            for r in REFERENCE_SCORES
        ),
    )
    lines += [
        "",
        f"Training-duration sweep: CM test MSE falls from {REFERENCE_SWEEP_TEST_MSE[0]} to about "
        f"{REFERENCE_SWEEP_TEST_MSE[1]}; train MSE stays between {REFERENCE_SWEEP_TRAIN_MSE[0]} "
        f"and {REFERENCE_SWEEP_TRAIN_MSE[1]}.",
    ]
    return "\n".join(lines) + "\n"


# ── command entry ────────────────────────────────────────────────────────────


def _write_report(tables: Sequence[LoadedResults], out_dir: Path) -> list[Path]:
    if not any(t.experiments for t in tables):
        raise ArgumentError("no results to report")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    bar_results = [e for t in tables if t.kind is not TableKind.SWEEP for e in t.experiments]
    if not bar_results:
        bar_results = [e for t in tables for e in t.experiments]
    chart = out_dir / "report.svg"
    chart.write_text(bar_chart_svg(bar_results), encoding="utf-8", newline="\n")
    written.append(chart)
    sweep_results = [e for t in tables if t.kind is TableKind.SWEEP for e in t.experiments]
    if sweep_results:
        sweep = out_dir / "sweep.svg"
        sweep.write_text(sweep_svg(sweep_results), encoding="utf-8", newline="\n")
        written.append(sweep)
    summary = out_dir / "report.md"
    summary.write_text(markdown_report(tables), encoding="utf-8", newline="\n")
    written.append(summary)
    log.info("report.written", files=[p.name for p in written])
    return written


def build_report(results_paths: Sequence[Path], out_dir: Path) -> Result[list[Path]]:
    """Read every results CSV, then write report.svg, report.md and (for sweeps) sweep.svg."""
    if not results_paths:
        return ResultFailures.validation_error("report: no results files given")
    loaded = Result.all_of([read_results(p) for p in results_paths])
    return loaded.flat_map(
        lambda tables: ResultFailures.capture(
            lambda: _write_report(tables, out_dir), "report.write"
        )
    )
