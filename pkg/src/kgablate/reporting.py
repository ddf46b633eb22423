"""Report emission: the baseline-footprint table, the intervention
table, and the per-question detail CSV.

All numeric cells render through exact integer arithmetic (half-up to
one decimal), so reports are byte-stable across platforms.
"""
from __future__ import annotations

import csv
import logging
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from .evaluation import (BASELINE_CONDITION, FootprintMeans, MetricCell,
                         RunResult)

log = logging.getLogger(__name__)

SYSTEM_ORDER = ("agentic", "evidence_first", "visited_only", "graphrag",
                "rag", "llm_only")
GRAPH_SYSTEMS = ("agentic", "evidence_first", "visited_only", "graphrag")

SYSTEM_LABELS = {
    "agentic": "Agentic",
    "evidence_first": "Evidence-first",
    "visited_only": "Visited-only",
    "graphrag": "GraphRAG",
    "rag": "RAG",
    "llm_only": "LLM",
}

CONDITION_ORDER = ("cited_removal", "random_removal", "full_isolation",
                   "text_only_isolation", "entity_removal",
                   "entity_text_mask")

CONDITION_LABELS = {
    "cited_removal": "Cited ablation",
    "random_removal": "Random ablation",
    "full_isolation": "Full isolation",
    "text_only_isolation": "Text-only isolation",
    "entity_removal": "Entity removal",
    "entity_text_mask": "Entity text mask",
}

NA = "n/a"
DASH = "-"

DOWN, UP, SAME = "↓", "↑", "="


def fmt_1dp(value: Fraction) -> str:
    """Exact half-up rendering to one decimal place."""
    if value < 0:
        raise ValueError("negative values not expected in reports")
    scaled = value * 10
    q, r = divmod(scaled.numerator, scaled.denominator)
    if Fraction(r, scaled.denominator) >= Fraction(1, 2):
        q += 1
    return f"{q // 10}.{q % 10}"


def fmt_count(value: Fraction) -> str:
    """Integers plain, fractional means to one decimal."""
    if value.denominator == 1:
        return str(value.numerator)
    return fmt_1dp(value)


def fmt_pct(value: Optional[Fraction]) -> str:
    if value is None:
        return NA
    return fmt_1dp(value) + "%"


def direction_marker(cell: MetricCell, baseline: MetricCell) -> str:
    a = cell.accuracy_pct
    b = baseline.accuracy_pct
    if a is None or b is None:
        return ""
    if a < b:
        return DOWN
    if a > b:
        return UP
    return SAME


def changed_cell(cell: MetricCell) -> str:
    """Output-changed percentage with (stayed correct / originally
    correct) in parentheses."""
    if cell.total == 0 or cell.changed_count is None:
        return NA
    assert cell.stayed_correct is not None
    assert cell.originally_correct is not None
    return (f"{fmt_pct(cell.changed_pct)} "
            f"({fmt_count(cell.stayed_correct)}/{cell.originally_correct})")


def accuracy_cell(cell: MetricCell,
                  baseline: Optional[MetricCell] = None) -> str:
    if cell.total == 0:
        return NA
    body = (f"{fmt_pct(cell.accuracy_pct)} "
            f"({fmt_count(cell.correct_count)}/{cell.total})")
    if baseline is not None:
        marker = direction_marker(cell, baseline)
        if marker:
            body += f" {marker}"
    return body


# --- intervention table ----------------------------------------------------


def render_intervention_cells(
        cells: dict[tuple[str, str], MetricCell]
) -> list[list[str]]:
    """Rows of rendered strings for the intervention table.

    `cells` maps (system, condition) to a MetricCell and must include
    (system, "baseline") per system. Layout: one baseline-accuracy row,
    then an output-changed row and an accuracy row per condition.
    """
    rows: list[list[str]] = []
    header = ["Condition", "Metric"] + [SYSTEM_LABELS[s]
                                        for s in GRAPH_SYSTEMS]
    rows.append(header)
    base_row = ["Baseline", "Accuracy"]
    for system in GRAPH_SYSTEMS:
        cell = cells.get((system, BASELINE_CONDITION))
        base_row.append(NA if cell is None else accuracy_cell(cell))
    rows.append(base_row)
    for condition in CONDITION_ORDER:
        oc_row = [CONDITION_LABELS[condition], "Output changed"]
        acc_row = [CONDITION_LABELS[condition], "Accuracy"]
        for system in GRAPH_SYSTEMS:
            cell = cells.get((system, condition))
            base = cells.get((system, BASELINE_CONDITION))
            if cell is None:
                oc_row.append(NA)
                acc_row.append(NA)
                continue
            oc_row.append(changed_cell(cell))
            acc_row.append(accuracy_cell(cell, base))
        rows.append(oc_row)
        rows.append(acc_row)
    return rows


# --- baseline table --------------------------------------------------------


def render_baseline_cells(
        accuracy: dict[str, MetricCell],
        footprints: dict[str, FootprintMeans]) -> list[list[str]]:
    """Rows for the baseline accuracy-and-footprint table."""
    rows = [["System", "Accuracy", "Retrieved TUs", "Cited TUs",
             "Visited entities", "Cited entities"]]
    for system in SYSTEM_ORDER:
        cell = accuracy.get(system)
        if cell is None:
            continue
        row = [SYSTEM_LABELS[system], fmt_pct(cell.accuracy_pct)]
        means = footprints.get(system)
        for idx in range(4):
            value = None if means is None else means[idx]
            row.append(DASH if value is None else fmt_1dp(value))
        rows.append(row)
    return rows


# --- emission --------------------------------------------------------------


def _markdown_table(rows: list[list[str]]) -> str:
    widths = [max(len(row[i]) for row in rows)
              for i in range(len(rows[0]))]
    out = []
    for idx, row in enumerate(rows):
        padded = [cell.ljust(widths[i]) for i, cell in enumerate(row)]
        out.append("| " + " | ".join(padded) + " |")
        if idx == 0:
            out.append("|" + "|".join("-" * (w + 2) for w in widths) + "|")
    return "\n".join(out) + "\n"


def _write_csv(path: Path, rows: list[list[str]]) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def parse_cells_csv(path: str | Path) -> list[list[str]]:
    """Inverse of the CSV emission: the rendered cell rows."""
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        return [list(row) for row in csv.reader(fh)]


def detail_rows(results: Sequence[RunResult],
                baseline_answers: dict[tuple[str, str], str]) -> list[list[str]]:
    """Per-question detail rows. `baseline_answers` maps (system,
    question_id) to the baseline answer for change detection."""
    from .scoring import answers_differ
    rows = [["question_id", "system", "condition", "answer", "correct",
             "changed", "cited_entities"]]
    ordered = sorted(results, key=lambda r: (
        r.system, r.condition,
        -1 if r.replicate is None else r.replicate, r.question_id))
    for res in ordered:
        if res.skipped is not None:
            rows.append([res.question_id, res.system, res.condition,
                         f"skipped: {res.skipped}", "", "", ""])
            continue
        base = baseline_answers.get((res.system, res.question_id))
        if res.condition == BASELINE_CONDITION or base is None:
            changed = ""
        else:
            changed = str(answers_differ(res.answer, base)).lower()
        condition = res.condition
        if res.replicate is not None:
            condition = f"{condition}.r{res.replicate}"
        rows.append([res.question_id, res.system, condition, res.answer,
                     str(res.correct).lower(), changed,
                     ";".join(sorted(res.citations.entities))])
    return rows


def emit_reports(out_dir: str | Path,
                 baseline_rows: list[list[str]],
                 intervention_rows: list[list[str]],
                 details: list[list[str]],
                 fmt: str = "both",
                 provenance: Optional[dict[str, str]] = None) -> list[Path]:
    """Write report files; returns the paths written."""
    if fmt not in ("md", "csv", "both"):
        raise ValueError(f"unknown format {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("md", "both"):
        lines = ["# Evidence ablation report", ""]
        if provenance:
            for key in sorted(provenance):
                lines.append(f"- {key}: {provenance[key]}")
            lines.append("")
        lines.append("## Baseline accuracy and evidence footprint")
        lines.append("")
        lines.append(_markdown_table(baseline_rows))
        lines.append("## Interventions on the evidence graph")
        lines.append("")
        lines.append(_markdown_table(intervention_rows))
        path = out / "report.md"
        path.write_text("\n".join(lines), encoding="utf-8")
        written.append(path)
    if fmt in ("csv", "both"):
        t1 = out / "baseline.csv"
        _write_csv(t1, baseline_rows)
        written.append(t1)
        t2 = out / "interventions.csv"
        _write_csv(t2, intervention_rows)
        written.append(t2)
        td = out / "details.csv"
        _write_csv(td, details)
        written.append(td)
    return written
