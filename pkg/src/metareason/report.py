"""Table-style reports: one row per method or policy, one column per task."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .errors import ColumnMismatch
from .metrics import arithmetic_macro, fmt3, harmonic_macro
from .tasks.types import TASK_LABELS, TASK_ORDER, TaskKind

MACRO = "Macro Avg."
HARMONIC = "Harmonic"


@dataclass
class MetricReport:
    label: str
    accuracies: dict[TaskKind, Fraction]
    macro_arithmetic: Fraction = field(init=False)
    macro_harmonic: Fraction | None = field(init=False)
    # printed macro average this row is expected to reproduce, if any
    reference_macro: str | None = None
    flags: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.accuracies = {TaskKind(k): Fraction(v) for k, v in self.accuracies.items()}
        values = [self.accuracies[k] for k in self.tasks]
        self.macro_arithmetic = arithmetic_macro(values)
        self.macro_harmonic = harmonic_macro(values)
        if self.macro_harmonic is not None and self.macro_harmonic > self.macro_arithmetic:
            raise AssertionError(f"{self.label}: harmonic mean exceeds arithmetic mean")
        if self.reference_macro is not None and fmt3(self.macro_arithmetic) != self.reference_macro:
            self.flags.append(
                f"printed macro {self.reference_macro} differs from recomputed "
                f"{fmt3(self.macro_arithmetic)}"
            )

    @property
    def tasks(self) -> list[TaskKind]:
        return [k for k in TASK_ORDER if k in self.accuracies]


def _columns(reports: list[MetricReport]) -> list[TaskKind]:
    if not reports:
        raise ColumnMismatch("no reports to emit")
    cols = reports[0].tasks
    for r in reports[1:]:
        if r.tasks != cols:
            raise ColumnMismatch(f"{r.label} covers {[str(t) for t in r.tasks]}, "
                                 f"expected {[str(t) for t in cols]}")
    return cols


def _cells(report: MetricReport, cols: list[TaskKind]) -> dict[str, Fraction | None]:
    cells: dict[str, Fraction | None] = {TASK_LABELS[k]: report.accuracies[k] for k in cols}
    cells[MACRO] = report.macro_arithmetic
    cells[HARMONIC] = report.macro_harmonic
    return cells


def rank_marks(values: list[Fraction | None]) -> list[str]:
    """'best', 'second' or '' per value; every holder of a tied value shares its mark."""
    distinct = sorted({v for v in values if v is not None}, reverse=True)
    marks = []
    for v in values:
        if v is None or not distinct:
            marks.append("")
        elif v == distinct[0]:
            marks.append("best")
        elif len(distinct) > 1 and v == distinct[1]:
            marks.append("second")
        else:
            marks.append("")
    return marks


def _markdown(reports: list[MetricReport], cols: list[TaskKind]) -> str:
    rows = [_cells(r, cols) for r in reports]
    headers = list(rows[0])
    styled = [[""] * len(headers) for _ in rows]
    for j, h in enumerate(headers):
        marks = rank_marks([row[h] for row in rows])
        for i, row in enumerate(rows):
            text = fmt3(row[h])
            if marks[i] == "best":
                text = f"**{text}**"
            elif marks[i] == "second":
                text = f"<u>{text}</u>"
            styled[i][j] = text
    lines = [
        "| Method | " + " | ".join(headers) + " |",
        "|---|" + "---:|" * len(headers),
    ]
    for r, cells in zip(reports, styled):
        lines.append(f"| {r.label} | " + " | ".join(cells) + " |")
    notes = [f"- {r.label}: {flag}" for r in reports for flag in r.flags]
    if notes:
        lines += ["", "Flags:", *notes]
    return "\n".join(lines) + "\n"


def _csv(reports: list[MetricReport], cols: list[TaskKind]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    rows = [_cells(r, cols) for r in reports]
    writer.writerow(["method", *rows[0]])
    for r, cells in zip(reports, rows):
        writer.writerow([r.label, *(fmt3(v) for v in cells.values())])
    return buf.getvalue()


def _json(reports: list[MetricReport], cols: list[TaskKind]) -> str:
    doc = {
        "columns": [TASK_LABELS[k] for k in cols] + [MACRO, HARMONIC],
        "rows": [
            {
                "label": r.label,
                "cells": {k: fmt3(v) for k, v in _cells(r, cols).items()},
                "flags": list(r.flags),
            }
            for r in reports
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


_FORMATS = {"markdown": _markdown, "md": _markdown, "csv": _csv, "json": _json}


def emit_report(runs: list[MetricReport], format: str = "markdown") -> str:
    if format not in _FORMATS:
        raise ValueError(f"unknown report format {format!r}")
    cols = _columns(runs)
    return _FORMATS[format](runs, cols)


def report_from_mapping(label: str, accs: Mapping[str, object], reference_macro: str | None = None
                        ) -> MetricReport:
    return MetricReport(label, {TaskKind(k): Fraction(str(v)) for k, v in accs.items()},
                        reference_macro=reference_macro)
