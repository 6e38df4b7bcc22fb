"""Benchmark score averages and base-vs-merged delta tables.

Two delta metrics per cell: change in percent (merged - base, in points) and
percent change (100 * (merged - base) / base).  All reported numbers are
rounded half-up to 2 decimals via exact decimal arithmetic; intermediate
math is never pre-rounded.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Sequence

RENDER_FORMATS = ("aligned-text", "csv", "markdown")
UNDEFINED_CELL = "n/a"


class MissingTaskError(KeyError):
    def __init__(self, model: str, task: str):
        super().__init__(f"model {model!r} has no score for task {task!r}")
        self.model = model
        self.task = task


@dataclass
class EvalScores:
    """Per-model benchmark percentages, keyed by task name."""

    model: str
    scores: dict[str, float] = field(default_factory=dict)


def load_scores(path: str | Path) -> dict[str, EvalScores]:
    """Read line-delimited {model, task, score} records."""
    out: dict[str, EvalScores] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            for key in ("model", "task", "score"):
                if key not in obj:
                    raise ValueError(f"{path}:{line_no}: score record needs {key!r}")
            entry = out.setdefault(obj["model"], EvalScores(obj["model"]))
            entry.scores[obj["task"]] = float(obj["score"])
    return out


def _round2(value: Decimal) -> float:
    return float(value.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _dec(value: float) -> Decimal:
    return Decimal(repr(value))


def average(scores: EvalScores, tasks: Sequence[str]) -> float:
    """Arithmetic mean over the named tasks, rounded half-up to 2 decimals."""
    for task in tasks:
        if task not in scores.scores:
            raise MissingTaskError(scores.model, task)
    total = sum((_dec(scores.scores[t]) for t in tasks), Decimal(0))
    return _round2(total / len(tasks))


def change_in_percent(base: float, merged: float) -> float:
    """merged - base, in percentage points."""
    return _round2(_dec(merged) - _dec(base))


def percent_change(base: float, merged: float) -> float | None:
    """100 * (merged - base) / base; None marks the undefined base-zero cell."""
    if base == 0:
        return None
    return _round2(100 * (_dec(merged) - _dec(base)) / _dec(base))


@dataclass
class DeltaCell:
    change_in_percent: float
    percent_change: float | None


@dataclass
class DeltaColumn:
    label: str
    base_model: str
    merged_model: str
    cells: dict[str, DeltaCell] = field(default_factory=dict)


@dataclass
class DeltaTable:
    """Rows are tasks in manifest order; columns are (base, merged) pairs."""

    tasks: list[str]
    columns: list[DeltaColumn]


def delta_table(
    tasks: Sequence[str],
    pairs: Sequence[tuple[str, EvalScores, EvalScores]],
) -> DeltaTable:
    """Build both delta metrics for every (label, base, merged) column."""
    columns = []
    for label, base, merged in pairs:
        cells = {}
        for task in tasks:
            if task not in base.scores:
                raise MissingTaskError(base.model, task)
            if task not in merged.scores:
                raise MissingTaskError(merged.model, task)
            b, m = base.scores[task], merged.scores[task]
            cells[task] = DeltaCell(change_in_percent(b, m), percent_change(b, m))
        columns.append(DeltaColumn(label, base.model, merged.model, cells))
    return DeltaTable(list(tasks), columns)


@dataclass
class AveragesTable:
    """Leaderboard-style rows: model name and its task average."""

    tasks: list[str]
    rows: list[tuple[str, float]]


def averages_table(models: Sequence[EvalScores], tasks: Sequence[str]) -> AveragesTable:
    return AveragesTable(list(tasks), [(m.model, average(m, tasks)) for m in models])


def fmt_delta(value: float | None) -> str:
    """Signed to 2 decimals; zero prints bare, undefined prints a marker."""
    if value is None:
        return UNDEFINED_CELL
    if value == 0:
        return "0.00"
    return f"{value:+.2f}"


def _delta_grid(table: DeltaTable) -> tuple[list[str], list[list[str]]]:
    header = ["Test Name"]
    for col in table.columns:
        header.append(f"{col.label} change")
        header.append(f"{col.label} %change")
    rows = []
    for task in table.tasks:
        row = [task]
        for col in table.columns:
            cell = col.cells[task]
            row.append(fmt_delta(cell.change_in_percent))
            row.append(fmt_delta(cell.percent_change))
        rows.append(row)
    return header, rows


def _averages_grid(table: AveragesTable) -> tuple[list[str], list[list[str]]]:
    header = ["Model", "Avg."]
    rows = [[model, f"{avg:.2f}"] for model, avg in table.rows]
    return header, rows


def render(table: DeltaTable | AveragesTable, format: str = "aligned-text") -> str:
    """Render a table deterministically in the requested text format."""
    if format not in RENDER_FORMATS:
        raise ValueError(f"format must be one of {RENDER_FORMATS}, got {format!r}")
    if isinstance(table, DeltaTable):
        header, rows = _delta_grid(table)
    else:
        header, rows = _averages_grid(table)

    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if c == UNDEFINED_CELL else c for c in row])
        return buf.getvalue()

    if format == "markdown":
        lines = ["| " + " | ".join(header) + " |"]
        lines.append("|" + "|".join(" --- " for _ in header) + "|")
        lines.extend("| " + " | ".join(row) + " |" for row in rows)
        return "\n".join(lines) + "\n"

    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i])
              for i in range(len(header))]
    def fmt_row(cols: Sequence[str]) -> str:
        return "  ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip()
    lines = [fmt_row(header), fmt_row(["-" * w for w in widths])]
    lines.extend(fmt_row(r) for r in rows)
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> tuple[list[str], list[list[float | str | None]]]:
    """Inverse of the CSV render on the numeric payload (empty -> None)."""
    rows = list(csv.reader(io.StringIO(text)))
    header, data = rows[0], rows[1:]
    parsed: list[list[float | str | None]] = []
    for row in data:
        out: list[float | str | None] = [row[0]]
        for cell in row[1:]:
            out.append(None if cell == "" else float(cell))
        parsed.append(out)
    return header, parsed
