"""
Command-line entry point — composition root for every fuselab command.

    fuselab generate --participants 10 --days 14 --out data/
    fuselab impute   --in data/ --out imputed/
    fuselab run      --model all --split temporal --train-weeks 4 --out runs/
    fuselab ablate   --model cm --out runs/
    fuselab sweep    --weeks-from 1 --weeks-to 8 --out runs/
    fuselab report   runs/results.csv runs/sweep.csv --out report/

Responsibilities:
  1. Parse flags and resolve RunConfig (flags → --config file → environment → defaults)
  2. Configure structlog (stderr, so stdout carries only command output)
  3. Run the command inside LoggingExecutionContext → AtomicOutputContext
  4. Map the Result to the process exit code (0 ok, 1 runtime, 2 usage/I-O)

Commands write into the staging directory only; nothing reaches --out unless
the whole command succeeds.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import pandas as pd
import structlog
from railway import (
    ComposableExecutionContext,
    LoggingExecutionContext,
    Result,
    ResultFailures,
    report_outcome,
)
from railway.exit_codes import EXIT_SUCCESS

from fuselab import dataio, impute, synth
from fuselab.adapters.checkpoint import save_checkpoint
from fuselab.adapters.output_context import AtomicOutputContext
from fuselab.adapters.results_store import TableKind, write_results
from fuselab.config import (
    ModelKind,
    RunConfig,
    build_run_config,
    dump_config,
    load_config_file,
    nest,
)
from fuselab.domain.models import Dataset, ExperimentResult
from fuselab.domain.ports import FittedModel
from fuselab.estimators import FittedCombined
from fuselab.harness import (
    ExperimentSpec,
    PreparedCache,
    ablation_suite,
    duration_sweep,
    run_experiment,
)
from fuselab.report import build_report

PROGRAM = "fuselab"

log = structlog.get_logger()

Command = Callable[[RunConfig, argparse.Namespace, Path], Result[list[Path]]]


def configure_structlog(log_level: str = "INFO", quiet: bool = False) -> None:
    """Console-rendered key-value logs on stderr; --quiet raises the threshold to WARNING."""
    level = logging.WARNING if quiet else getattr(logging, log_level.upper(), logging.INFO)
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.StackInfoRenderer(),
            structlog.dev.set_exc_info,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.dev.ConsoleRenderer(colors=False),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level),
        context_class=dict,
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )


# ── flags ────────────────────────────────────────────────────────────────────

# dest → dotted RunConfig key; flags left unset never override the config file.
_FLAG_KEYS: dict[str, str] = {
    "seed": "seed",
    "out": "out",
    "input_dir": "input_dir",
    "log_level": "log_level",
    "quiet": "quiet",
    "paper_order": "experiment.paper_order",
    "leakage_safe": "experiment.leakage_safe",
    "save_models": "experiment.save_models",
    "models": "experiment.models",
    "modalities": "experiment.modalities",
    "repeats": "experiment.n_repeats",
    "split": "split.mode",
    "train_weeks": "split.train_weeks",
    "test_fraction": "split.test_fraction",
    "week_basis": "split.week_basis",
    "participants": "synth.n_participants",
    "days": "synth.fixed_days",
    "missing_rate": "synth.missing_rate",
    "mechanism": "synth.mechanism",
    "weeks_from": "sweep.weeks_from",
    "weeks_to": "sweep.weeks_to",
}

_MODEL_CHOICES: dict[str, str] = {"cm": "CM", "rf": "RF", "lr": "LR", "all": "CM,RF,LR"}


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--out", type=Path, help="output directory (default ./out)")
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument(
        "--dump-config",
        nargs="?",
        const="-",
        metavar="PATH",
        help="write the resolved configuration (stdout when no PATH) and exit",
    )
    common.add_argument(
        "--paper-order",
        dest="paper_order",
        action="store_true",
        help="fit the standardizer on all rows before splitting",
    )
    common.add_argument(
        "--leakage-safe",
        dest="leakage_safe",
        action="store_true",
        help="impute test rows with forests fitted on train rows only",
    )
    common.add_argument("--quiet", action="store_true", help="warnings only, no summary lines")
    common.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING, ERROR")
    return common


def _data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--in", dest="input_dir", type=Path, help="directory with the four input CSVs"
    )
    parser.add_argument("--participants", type=int, help="synthetic cohort size (default 131)")
    parser.add_argument("--days", type=int, help="fixed participation length in days")
    parser.add_argument("--missing-rate", dest="missing_rate", type=float)
    parser.add_argument("--mechanism", choices=["MCAR", "MAR", "mcar", "mar"])


def _experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", dest="models", choices=sorted(_MODEL_CHOICES))
    parser.add_argument("--split", choices=["temporal", "random"])
    parser.add_argument("--train-weeks", dest="train_weeks", type=int)
    parser.add_argument("--test-fraction", dest="test_fraction", type=float)
    parser.add_argument("--week-basis", dest="week_basis", choices=["participant", "calendar"])
    parser.add_argument("--modalities", help="e.g. PF,BG or ALL")
    parser.add_argument("--repeats", type=int, help="independent repeats (default 5)")


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog=PROGRAM,
        description="Early versus latent fusion for daily PHQ-2 regression.",
        parents=[common],
        argument_default=argparse.SUPPRESS,
    )
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    generate = commands.add_parser(
        "generate", parents=[common], help="write a synthetic cohort as the four CSVs"
    )
    _data_flags(generate)

    imputing = commands.add_parser(
        "impute", parents=[common], help="MissForest-impute a CSV directory"
    )
    imputing.add_argument("--in", dest="input_dir", type=Path, required=True)

    run = commands.add_parser("run", parents=[common], help="run experiments → results.csv")
    _data_flags(run)
    _experiment_flags(run)
    run.add_argument(
        "--save-models",
        dest="save_models",
        action="store_true",
        help="write a Combined Model checkpoint per repeat",
    )

    ablate = commands.add_parser(
        "ablate", parents=[common], help="modality ablation → ablation.csv"
    )
    _data_flags(ablate)
    _experiment_flags(ablate)

    sweep = commands.add_parser(
        "sweep", parents=[common], help="training-duration sweep → sweep.csv"
    )
    _data_flags(sweep)
    _experiment_flags(sweep)
    sweep.add_argument("--weeks-from", dest="weeks_from", type=int)
    sweep.add_argument("--weeks-to", dest="weeks_to", type=int)

    reporting = commands.add_parser(
        "report", parents=[common], help="charts and tables from result CSVs"
    )
    reporting.add_argument("results", nargs="*", type=Path, default=[], metavar="CSV")
    return parser


def flag_values(args: argparse.Namespace) -> dict[str, Any]:
    """Nested RunConfig overrides for the flags actually given."""
    given = vars(args)
    flat: dict[str, Any] = {}
    for dest, key in _FLAG_KEYS.items():
        value = given.get(dest)
        if value is not None:
            flat[key] = _MODEL_CHOICES[value] if dest == "models" else value
    return nest(flat)


def resolve_config(args: argparse.Namespace) -> Result[RunConfig]:
    config_path: Path | None = getattr(args, "config", None)
    file_values: Result[dict[str, Any]] = (
        load_config_file(config_path) if config_path is not None else Result.success({})
    )
    return file_values.flat_map(lambda values: build_run_config(values, flag_values(args)))


def _dump(config: RunConfig, target: str) -> Result[list[Path]]:
    text = dump_config(config)
    if target == "-":
        sys.stdout.write(text)
        return Result.success([])

    def write() -> list[Path]:
        path = Path(target)
        path.write_text(text, encoding="utf-8")
        return [path]

    return ResultFailures.capture(write, "main.dump_config")


# ── commands ─────────────────────────────────────────────────────────────────


def _echo(config: RunConfig, line: str) -> None:
    if not config.quiet:
        sys.stdout.write(line + "\n")


def load_dataset(config: RunConfig) -> Result[Dataset]:
    """The --in CSV directory when given, otherwise the synthetic benchmark."""
    if config.input_dir is not None:
        return dataio.load_directory(config.input_dir).flat_map(
            lambda tables: ResultFailures.capture(
                lambda: dataio.assemble(tables), "dataio.assemble"
            )
        )
    return ResultFailures.capture(
        lambda: synth.generate_benchmark(config.synth), "synth.generate_benchmark"
    )


def _write_manifest(config: RunConfig, paths: dict[str, Path], staging: Path) -> list[Path]:
    manifest = {
        "seed": config.seed,
        "config": config.model_dump(mode="json"),
        "rows": dataio.row_counts(paths),
    }
    path = staging / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return [*paths.values(), path]


def cmd_generate(config: RunConfig, args: argparse.Namespace, staging: Path) -> Result[list[Path]]:
    """Four CSVs of the synthetic cohort plus manifest.json."""
    return (
        ResultFailures.capture(lambda: synth.generate_benchmark(config.synth), "synth.generate")
        .flat_map(lambda dataset: dataio.write_tables(dataset, staging))
        .flat_map(
            lambda paths: ResultFailures.capture(
                lambda: _write_manifest(config, paths, staging), "main.generate"
            )
        )
    )


def _write_trace(result: impute.Imputation, staging: Path) -> Path:
    path = staging / "impute_trace.csv"
    frame = pd.DataFrame(
        [(s.iteration, s.delta_continuous, s.delta_categorical) for s in result.trace],
        columns=["iteration", "delta_continuous", "delta_categorical"],
    )
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def cmd_impute(config: RunConfig, args: argparse.Namespace, staging: Path) -> Result[list[Path]]:
    """Imputed CSV directory plus impute_trace.csv."""
    imputed = load_dataset(config).flat_map(
        lambda dataset: ResultFailures.capture(
            lambda: impute.missforest(dataset, config.impute), "impute.missforest"
        )
    )

    def write(result: impute.Imputation) -> Result[list[Path]]:
        _echo(config, f"imputed in {result.iterations_run} iteration(s)")
        return dataio.write_tables(result.dataset, staging).flat_map(
            lambda paths: ResultFailures.capture(
                lambda: [*paths.values(), _write_trace(result, staging)], "main.impute"
            )
        )

    return imputed.flat_map(write)


def _summary(result: ExperimentResult) -> str:
    split = (
        f"temporal w={result.train_weeks}"
        if result.split_mode == "temporal"
        else f"random f={result.test_fraction:.3g}"
    )
    return (
        f"{result.model} {result.modality_label} {split}: "
        f"test MSE {result.mean('test_mse'):.4f} ± {result.sd('test_mse'):.4f}  "
        f"test R² {result.mean('test_r2'):.4f} ± {result.sd('test_r2'):.4f}  "
        f"train MSE {result.mean('train_mse'):.4f}  "
        f"R² gap {result.mean_overfit_gap:.4f}"
    )


def _run_models(
    config: RunConfig, dataset: Dataset, staging: Path
) -> Result[tuple[list[ExperimentResult], list[Path]]]:
    cache = PreparedCache()
    results: list[ExperimentResult] = []
    checkpoints: list[Path] = []
    for model in config.experiment.models:
        fitted: dict[int, FittedModel] = {}
        outcome = run_experiment(
            ExperimentSpec.from_config(config, model),
            dataset,
            cache,
            on_fitted=fitted.__setitem__ if config.experiment.save_models else None,
        )
        if outcome.is_failure():
            return Result.failure_from(outcome.error())
        results.append(outcome.value())
        for repeat, candidate in sorted(fitted.items()):
            if isinstance(candidate, FittedCombined):
                saved = save_checkpoint(
                    candidate.model, staging / "models" / f"cm_repeat{repeat}.npz"
                )
                if saved.is_failure():
                    return Result.failure_from(saved.error())
                checkpoints.append(saved.value())
    return Result.success((results, checkpoints))


def cmd_run(config: RunConfig, args: argparse.Namespace, staging: Path) -> Result[list[Path]]:
    """results.csv (and checkpoints with --save-models); one summary line per model."""

    def write(outcome: tuple[list[ExperimentResult], list[Path]]) -> Result[list[Path]]:
        results, checkpoints = outcome
        for result in results:
            _echo(config, _summary(result))
        return write_results(results, staging / "results.csv").map(
            lambda path: [path, *checkpoints]
        )

    return (
        load_dataset(config)
        .flat_map(lambda dataset: _run_models(config, dataset, staging))
        .flat_map(write)
    )


def _write_suite(
    config: RunConfig, results: list[ExperimentResult], path: Path, kind: TableKind
) -> Result[list[Path]]:
    for result in results:
        _echo(config, _summary(result))
    return write_results(results, path, kind).map(lambda written: [written])


def _models(config: RunConfig) -> list[ModelKind]:
    return list(config.experiment.models)


def cmd_ablate(config: RunConfig, args: argparse.Namespace, staging: Path) -> Result[list[Path]]:
    """ablation.csv: every model × {PF}, {PF,BG}, {BG,PHQ9}, ALL."""
    spec = ExperimentSpec.from_config(config, _models(config)[0])
    return (
        load_dataset(config)
        .flat_map(lambda dataset: ablation_suite(spec, dataset, _models(config)))
        .flat_map(
            lambda results: _write_suite(
                config, results, staging / "ablation.csv", TableKind.ABLATION
            )
        )
    )


def cmd_sweep(config: RunConfig, args: argparse.Namespace, staging: Path) -> Result[list[Path]]:
    """sweep.csv: every model × training weeks weeks_from..weeks_to."""
    spec = ExperimentSpec.from_config(config, _models(config)[0])
    return (
        load_dataset(config)
        .flat_map(
            lambda dataset: duration_sweep(spec, dataset, config.sweep.weeks, _models(config))
        )
        .flat_map(
            lambda results: _write_suite(config, results, staging / "sweep.csv", TableKind.SWEEP)
        )
    )


def cmd_report(config: RunConfig, args: argparse.Namespace, staging: Path) -> Result[list[Path]]:
    """report.svg, sweep.svg (when a sweep table is given) and report.md."""
    return build_report(list(args.results), staging)


COMMANDS: dict[str, Command] = {
    "generate": cmd_generate,
    "impute": cmd_impute,
    "run": cmd_run,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def execute(config: RunConfig, args: argparse.Namespace) -> Result[list[Path]]:
    """Run one command inside the logging and atomic-output contexts."""
    command = COMMANDS[args.command]
    staging = AtomicOutputContext(config.out)
    context = ComposableExecutionContext(
        LoggingExecutionContext(operation=f"{PROGRAM}.{args.command}", logger=log),
        staging,
    )
    return context.execute(lambda: command(config, args, staging.path))


def main(argv: Sequence[str] | None = None) -> int:
    """Parse, resolve configuration, run the command; returns the exit code."""
    args = build_parser().parse_args(argv)
    resolved = resolve_config(args)
    if resolved.is_failure():
        configure_structlog()
        return report_outcome(resolved, sys.stderr, PROGRAM)
    config = resolved.value()
    configure_structlog(config.log_level, config.quiet)
    log.info("app.starting", command=args.command, seed=config.seed, out=str(config.out))

    dump_target: str | None = getattr(args, "dump_config", None)
    if dump_target is not None:
        return report_outcome(_dump(config, dump_target), sys.stderr, PROGRAM)

    outcome = execute(config, args)
    code = report_outcome(outcome, sys.stderr, PROGRAM)
    if code == EXIT_SUCCESS:
        log.info("app.finished", command=args.command, files=len(outcome.value()))
    return code


def run() -> None:
    """Console-script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    run()
