"""Strict readers for the experiment-runner artifact formats.

The runner's contract (documented in its README) is one CSV + one JSON per
run:

* CSV: first line ``# obo-run-csv v1``, then a header with exactly the
  columns in :data:`CSV_COLUMNS` in order, then one row per round.  Cells
  are empty when the metric was disabled.
* JSON: a summary object with ``schema == "obo-summary-v1"`` carrying the
  config echo, final metrics and wallclock totals.

Any drift from that contract raises :class:`SchemaError` naming the
offending part; rendering partial data is never attempted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CSV_SCHEMA_LINE = "# obo-run-csv v1"
SUMMARY_SCHEMA = "obo-summary-v1"
CSV_COLUMNS = (
    "t",
    "blr_instant",
    "blr_cumulative",
    "blr_static_cumulative",
    "hg_error",
    "inner_err",
    "h2_increment",
    "v1_increment",
    "x_norm",
    "y_norm",
    "wallclock_ns",
)


class SchemaError(Exception):
    """Artifact does not match the documented run-file contract."""


@dataclass
class RunArtifact:
    """One run's parsed CSV columns plus its JSON summary."""

    run_id: str
    columns: dict
    summary: dict

    def column(self, name: str) -> np.ndarray:
        values = self.columns[name]
        if all(v is None for v in values):
            raise SchemaError(f"run {self.run_id!r}: column {name!r} is empty (metric disabled?)")
        return np.array([np.nan if v is None else v for v in values])


def read_run_csv(path: Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"missing file: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != CSV_SCHEMA_LINE:
        raise SchemaError(f"{path}: first line must be {CSV_SCHEMA_LINE!r}")
    if len(lines) < 2:
        raise SchemaError(f"{path}: missing header row")
    header = tuple(lines[1].split(","))
    if header != CSV_COLUMNS:
        for got, want in zip(header, CSV_COLUMNS):
            if got != want:
                raise SchemaError(f"{path}: expected column {want!r}, found {got!r}")
        raise SchemaError(f"{path}: header has {len(header)} columns, expected {len(CSV_COLUMNS)}")
    columns = {name: [] for name in CSV_COLUMNS}
    for lineno, line in enumerate(lines[2:], start=3):
        cells = line.split(",")
        if len(cells) != len(CSV_COLUMNS):
            raise SchemaError(f"{path}:{lineno}: expected {len(CSV_COLUMNS)} cells, got {len(cells)}")
        for name, cell in zip(CSV_COLUMNS, cells):
            if cell == "":
                columns[name].append(None)
            else:
                try:
                    columns[name].append(float(cell))
                except ValueError as exc:
                    raise SchemaError(f"{path}:{lineno}: column {name!r} is not numeric: {cell!r}") from exc
    if not columns["t"]:
        raise SchemaError(f"{path}: no data rows")
    return columns


def read_run_summary(path: Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"missing file: {path}")
    try:
        summary = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
    if summary.get("schema") != SUMMARY_SCHEMA:
        raise SchemaError(f"{path}: summary schema is {summary.get('schema')!r}, expected {SUMMARY_SCHEMA!r}")
    for key in ("run_id", "config", "final", "wallclock"):
        if key not in summary:
            raise SchemaError(f"{path}: summary lacks required key {key!r}")
    return summary


def load_runs(input_dir) -> list:
    """All CSV/JSON run pairs under ``input_dir``, sorted by run id."""
    input_dir = Path(input_dir)
    if not input_dir.is_dir():
        raise SchemaError(f"input directory does not exist: {input_dir}")
    csvs = sorted(input_dir.glob("*.csv"))
    if not csvs:
        raise SchemaError(f"no run CSVs found under {input_dir}")
    missing = [str(c.with_suffix(".json")) for c in csvs if not c.with_suffix(".json").exists()]
    if missing:
        raise SchemaError("runs lack their JSON summaries: " + ", ".join(missing))
    runs = []
    for csv_path in csvs:
        summary = read_run_summary(csv_path.with_suffix(".json"))
        columns = read_run_csv(csv_path)
        runs.append(RunArtifact(run_id=str(summary["run_id"]), columns=columns, summary=summary))
    runs.sort(key=lambda r: r.run_id)
    return runs
