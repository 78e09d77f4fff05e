"""
Integration tests for the results CSV store.

Writes real files under tmp_path and reads them back, checking the column
contract, exact float round-trips and line-numbered parse failures.

Markers: @pytest.mark.integration — touches the filesystem.
"""

from __future__ import annotations

from pathlib import Path

import pytest
from railway import ErrorCode
from railway.assertions import ResultAssertions

from fuselab.adapters.results_store import (
    RESULT_COLUMNS,
    TableKind,
    decode_hparams,
    encode_hparams,
    read_results,
    write_results,
)
from fuselab.domain.models import ExperimentResult, Modality, SeedScores
from fuselab.errors import ParseError

pytestmark = pytest.mark.integration


# ── Helpers ──────────────────────────────────────────────────────────────────


def _scores(seed: int, test_mse: float = 0.1 + 0.2) -> SeedScores:
    return SeedScores(
        seed=seed,
        train_mse=0.5 / 3,
        test_mse=test_mse,
        train_r2=0.61,
        test_r2=-0.125,
        chosen_hparams={"latent_dim": "8", "note": "a=b;c"},
    )


def _result(model: str = "CM", weeks: int | None = 4) -> ExperimentResult:
    return ExperimentResult(
        model=model,
        modalities=frozenset({Modality.PF, Modality.BG}),
        split_mode="temporal" if weeks is not None else "random",
        train_weeks=weeks,
        test_fraction=None if weeks is not None else 0.25,
        per_seed=(_scores(1, 2.0 / 7), _scores(0)),
    )


# ── Tests ────────────────────────────────────────────────────────────────────


class TestHparamEncoding:
    def test_reserved_characters_survive(self) -> None:
        hparams = {"note": "a=b;c", "lr": "0.001"}
        assert decode_hparams(encode_hparams(hparams)) == hparams

    def test_empty(self) -> None:
        assert encode_hparams({}) == ""
        assert decode_hparams("") == {}

    def test_malformed_entry(self) -> None:
        with pytest.raises(ParseError):
            decode_hparams("novalue")


class TestWriteResults:
    def test_header_and_row_order(self, tmp_path: Path) -> None:
        """
        GIVEN one experiment with seeds stored out of order
        WHEN written
        THEN the header follows the contract and rows are sorted by seed.
        """
        path = ResultAssertions.assert_success(write_results([_result()], tmp_path / "r.csv"))
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(RESULT_COLUMNS)
        assert lines[1].startswith("CM,PF+BG,temporal,4,0,")
        assert lines[2].startswith("CM,PF+BG,temporal,4,1,")

    def test_floats_reread_exactly(self, tmp_path: Path) -> None:
        path = ResultAssertions.assert_success(write_results([_result()], tmp_path / "r.csv"))
        loaded = ResultAssertions.assert_success(read_results(path))
        (experiment,) = loaded.experiments
        assert loaded.kind is TableKind.RESULTS
        assert experiment.per_seed == _result().per_seed
        assert experiment.modalities == frozenset({Modality.PF, Modality.BG})

    def test_random_split_leaves_weeks_blank(self, tmp_path: Path) -> None:
        path = ResultAssertions.assert_success(
            write_results([_result(weeks=None)], tmp_path / "r.csv")
        )
        row = path.read_text(encoding="utf-8").splitlines()[1].split(",")
        assert row[2:4] == ["random", ""]

    def test_rewrite_is_byte_identical(self, tmp_path: Path) -> None:
        a = ResultAssertions.assert_success(write_results([_result()], tmp_path / "a.csv"))
        b = ResultAssertions.assert_success(write_results([_result()], tmp_path / "b.csv"))
        assert a.read_bytes() == b.read_bytes()

    @pytest.mark.parametrize(
        "kind,extra", [(TableKind.ABLATION, "subset"), (TableKind.SWEEP, "sweep_weeks")]
    )
    def test_table_kinds_append_a_column(
        self, tmp_path: Path, kind: TableKind, extra: str
    ) -> None:
        path = ResultAssertions.assert_success(
            write_results([_result(), _result("RF")], tmp_path / "t.csv", kind)
        )
        assert path.read_text(encoding="utf-8").splitlines()[0].endswith(f",{extra}")
        loaded = ResultAssertions.assert_success(read_results(path))
        assert loaded.kind is kind
        assert [e.model for e in loaded.experiments] == ["CM", "RF"]

    def test_nothing_to_write(self, tmp_path: Path) -> None:
        ResultAssertions.assert_failure(
            write_results([], tmp_path / "r.csv"), ErrorCode.VALIDATION_ERROR
        )


class TestReadResults:
    def test_missing_file(self, tmp_path: Path) -> None:
        ResultAssertions.assert_failure(read_results(tmp_path / "nope.csv"), ErrorCode.IO_ERROR)

    def test_unexpected_header(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.csv"
        path.write_text("model,score\nCM,1\n", encoding="utf-8")
        result = read_results(path)
        ResultAssertions.assert_failure(result, ErrorCode.PARSE_ERROR)
        ResultAssertions.assert_failure_message_contains(result, "line 1")

    def test_bad_number_names_the_line(self, tmp_path: Path) -> None:
        """
        GIVEN a results file whose second data row has a non-numeric test_mse
        WHEN read
        THEN a PARSE_ERROR names line 3 and the column.
        """
        path = ResultAssertions.assert_success(write_results([_result()], tmp_path / "r.csv"))
        lines = path.read_text(encoding="utf-8").splitlines()
        cells = lines[2].split(",")
        cells[RESULT_COLUMNS.index("test_mse")] = "oops"
        lines[2] = ",".join(cells)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        result = read_results(path)
        ResultAssertions.assert_failure(result, ErrorCode.PARSE_ERROR)
        ResultAssertions.assert_failure_message_contains(result, "line 3: test_mse")

    def test_header_only(self, tmp_path: Path) -> None:
        path = tmp_path / "empty.csv"
        path.write_text(",".join(RESULT_COLUMNS) + "\n", encoding="utf-8")
        ResultAssertions.assert_failure(read_results(path), ErrorCode.PARSE_ERROR)

    def test_unknown_modality(self, tmp_path: Path) -> None:
        path = ResultAssertions.assert_success(write_results([_result()], tmp_path / "r.csv"))
        text = path.read_text(encoding="utf-8").replace("PF+BG", "PF+GPS")
        path.write_text(text, encoding="utf-8")
        ResultAssertions.assert_failure(read_results(path), ErrorCode.PARSE_ERROR)
