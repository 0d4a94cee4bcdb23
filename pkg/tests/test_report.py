"""Job reports: exit codes, strict JSON values and the data exports."""

import csv
import json
from fractions import Fraction

import numpy as np
import pytest

from folia.constants import Verdict
from folia.utils.report import (
    EXIT_INCONCLUSIVE,
    EXIT_PASS,
    EXIT_REFUTED,
    CheckRecord,
    DataBlock,
    Report,
    config_hash,
    merge_notes,
    to_jsonable,
    write_csv,
    write_plot_data,
)


def _report(*verdicts: Verdict) -> Report:
    report = Report("check-involutivity", "job.json", "abc", {"samples": 5})
    for i, verdict in enumerate(verdicts):
        report.add(CheckRecord(f"m{i}", "involutivity", verdict))
    return report


@pytest.mark.parametrize(
    "verdicts, code",
    [
        ((), EXIT_PASS),
        ((Verdict.INVOLUTIVE, Verdict.EXISTS), EXIT_PASS),
        ((Verdict.INVOLUTIVE, Verdict.CANNOT_DECIDE), EXIT_INCONCLUSIVE),
        ((Verdict.INCONCLUSIVE, Verdict.NOT_INVOLUTIVE), EXIT_REFUTED),
        ((Verdict.NON_SMOOTH_CANDIDATE,), EXIT_REFUTED),
    ],
)
def test_refutation_wins_over_inconclusive(verdicts, code):
    assert _report(*verdicts).exit_code == code


def test_values_become_strict_json():
    value = {
        "ratio": Fraction(-3, 4),
        "bound": float("inf"),
        "matrix": np.array([[1.0, 2.5]]),
        "count": np.int64(3),
        "verdict": Verdict.COMMUTES,
        1: (True, None),
    }
    assert to_jsonable(value) == {
        "ratio": "-3/4",
        "bound": "inf",
        "matrix": [[1.0, 2.5]],
        "count": 3,
        "verdict": "Commutes",
        "1": [True, None],
    }


def test_dumps_is_deterministic():
    report = _report(Verdict.INVOLUTIVE)
    report.notes = ["z", "a"]
    text = report.dumps()
    assert text == report.dumps()
    parsed = json.loads(text)
    assert parsed["notes"] == ["z", "a"]
    assert list(parsed) == sorted(parsed)
    assert parsed["checks"][0]["outcome"] == "pass"
    assert parsed["exit_code"] == 0
    assert "timing" not in parsed


def test_report_writes_timing_when_asked(tmp_path):
    report = _report(Verdict.FAIL)
    report.timing = {"involutivity:m0": 0.1234567891}
    parsed = json.loads(report.write(tmp_path / "out" / "report.json").read_text(encoding="utf-8"))
    assert parsed["timing"] == {"involutivity:m0": 0.123457}
    assert parsed["exit_code"] == 1


def test_config_hash_follows_the_options():
    source = b'{"samples": 5}'
    assert config_hash(source, {"samples": 5}) == config_hash(source, {"samples": 5})
    assert config_hash(source, {"samples": 5}) != config_hash(source, {"samples": 6})
    assert config_hash(source, {"point": [Fraction(1, 2)]}) == config_hash(source, {"point": ["1/2"]})


BLOCKS = [
    DataBlock("first", ["t", "x"], np.array([[0.0, 1.0], [0.5, 2.0]])),
    DataBlock("second", ["t", "x", "y"], np.array([[0.0, 0.0, 0.0]])),
]


def test_plot_data_separates_blocks(tmp_path):
    text = write_plot_data(tmp_path / "plot.dat", BLOCKS).read_text(encoding="utf-8")
    first, second = text.split("\n\n\n")
    assert first.splitlines() == ["# first", "# t x", "0.0 1.0", "0.5 2.0"]
    assert second.splitlines()[1] == "# t x y"


def test_csv_names_the_block_of_every_row(tmp_path):
    path = write_csv(tmp_path / "data.csv", BLOCKS)
    with path.open(newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["set", "t", "x"]
    assert rows[2] == ["first", "0.5", "2.0"]
    assert rows[3] == ["set", "t", "x", "y"]
    assert len(rows) == 5


def test_merge_notes_keeps_first_seen_order():
    assert merge_notes(["b", "a"], [], ["a", "c", "b"]) == ["b", "a", "c"]
