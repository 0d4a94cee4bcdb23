#!/usr/bin/env python3
"""
Machine-readable job reports and exports.

Reports are JSON with sorted keys; exact rationals are written as "p/q"
strings and non-finite floats as strings so the output is strict JSON.
"""

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import sympy

from folia.constants import REPORT_SCHEMA_VERSION, Outcome, Verdict

logger = logging.getLogger(__name__)

# Exit codes of a job
EXIT_PASS = 0
EXIT_REFUTED = 1
EXIT_INCONCLUSIVE = 2
EXIT_USAGE = 3


def to_jsonable(value: Any) -> Any:
    """Recursively convert folia and numpy values to plain JSON values"""
    if hasattr(value, "to_dict"):
        return to_jsonable(value.to_dict())
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, (Fraction, sympy.Rational)):
        return str(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        number = float(value)
        return number if np.isfinite(number) else str(number)
    if isinstance(value, Path):
        return str(value)
    return str(value)


def config_hash(source: bytes, options: Dict[str, Any]) -> str:
    """SHA-256 of the config bytes and the effective options"""
    digest = hashlib.sha256(source)
    digest.update(json.dumps(to_jsonable(options), sort_keys=True).encode("utf-8"))
    return digest.hexdigest()


@dataclass
class CheckRecord:
    """One verdict of a job"""
    name: str
    kind: str
    verdict: Verdict
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def outcome(self) -> Outcome:
        return self.verdict.outcome

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "kind": self.kind,
            "verdict": self.verdict.value,
            "outcome": self.outcome.value,
            "details": to_jsonable(self.details),
        }


@dataclass
class Report:
    command: str
    config_path: str
    config_hash: str
    options: Dict[str, Any]
    checks: List[CheckRecord] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    timing: Optional[Dict[str, float]] = None

    def add(self, record: CheckRecord) -> None:
        self.checks.append(record)

    @property
    def exit_code(self) -> int:
        outcomes = {record.outcome for record in self.checks}
        if Outcome.REFUTED in outcomes:
            return EXIT_REFUTED
        if Outcome.INCONCLUSIVE in outcomes:
            return EXIT_INCONCLUSIVE
        return EXIT_PASS

    def to_dict(self) -> Dict[str, Any]:
        result = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "command": self.command,
            "config_path": self.config_path,
            "config_hash": self.config_hash,
            "options": to_jsonable(self.options),
            "checks": [record.to_dict() for record in self.checks],
            "notes": list(self.notes),
            "exit_code": self.exit_code,
        }
        if self.timing is not None:
            result["timing"] = {k: round(v, 6) for k, v in self.timing.items()}
        return result

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(), encoding="utf-8")
        logger.info(f"📄 Report written to {path}")
        return path


# --- exports -------------------------------------------------------------------

@dataclass
class DataBlock:
    """Columns of one plot data set"""
    title: str
    columns: Sequence[str]
    rows: np.ndarray


def write_plot_data(path: Union[str, Path], blocks: Sequence[DataBlock]) -> Path:
    """Whitespace columns with '#' headers, data sets separated by two blank lines"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chunks = []
    for block in blocks:
        lines = [f"# {block.title}", "# " + " ".join(block.columns)]
        for row in np.atleast_2d(block.rows):
            lines.append(" ".join(repr(float(v)) for v in row))
        chunks.append("\n".join(lines))
    path.write_text("\n\n\n".join(chunks) + "\n", encoding="utf-8")
    logger.info(f"📄 Plot data ({len(blocks)} blocks) written to {path}")
    return path


def write_csv(path: Union[str, Path], blocks: Sequence[DataBlock]) -> Path:
    """One CSV table; a leading 'set' column names the block of each row"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    width = max((len(block.columns) for block in blocks), default=0)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        for block in blocks:
            writer.writerow(["set", *block.columns])
            for row in np.atleast_2d(block.rows):
                writer.writerow([block.title, *(repr(float(v)) for v in row)])
    logger.info(f"📄 CSV ({len(blocks)} blocks, up to {width} columns) written to {path}")
    return path


def trace_block(title: str, variables: Sequence[str], times: np.ndarray, points: np.ndarray) -> DataBlock:
    return DataBlock(title, ["t", *variables], np.column_stack([times, points]))


def apath_block(title: str, variables: Sequence[str], frame: Sequence[str], path) -> DataBlock:
    return DataBlock(title, ["t", *variables, *frame], np.column_stack([path.times, path.base, path.fiber]))


def merge_notes(*groups: Sequence[str]) -> List[str]:
    """Notes in first-seen order without duplicates"""
    seen: Dict[str, None] = {}
    for group in groups:
        for note in group:
            seen.setdefault(note, None)
    return list(seen)
