"""Scoring plumbing, the direct-answer filter, and metric computation.

Replicate aggregation keeps exact fractions end to end; rendering to
one decimal happens only in the report layer, half-up.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, NamedTuple, Optional, Sequence

from .agent import Citations, TraceRecord
from .dataset import Question
from .errors import CoverageGap
from .scoring import answers_differ, score_answer

log = logging.getLogger(__name__)

BASELINE_CONDITION = "baseline"


class Footprint(NamedTuple):
    """Per-question evidence-usage counts; None where a system has no
    such notion (direct answering has none at all)."""
    retrieved_tus: Optional[int] = None
    cited_tus: Optional[int] = None
    visited_entities: Optional[int] = None
    cited_entities: Optional[int] = None


def footprint_from_trace(trace: TraceRecord) -> Footprint:
    return Footprint(
        retrieved_tus=len(trace.retrieved_textunits),
        cited_tus=len(trace.cited_textunits),
        visited_entities=len(trace.visited_entities),
        cited_entities=len(trace.cited_entities),
    )


@dataclass(frozen=True)
class RunResult:
    question_id: str
    system: str
    condition: str
    answer: str
    correct: Optional[bool]  # None on skipped rows
    citations: Citations
    footprint: Footprint = Footprint()
    replicate: Optional[int] = None
    skipped: Optional[str] = None


def make_result(system: str, condition: str, question: Question,
                answer: str, citations: Citations, footprint: Footprint,
                replicate: Optional[int] = None) -> RunResult:
    return RunResult(
        question_id=question.id, system=system, condition=condition,
        answer=answer,
        correct=score_answer(answer, question.gold_answer,
                             question.aliases),
        citations=citations, footprint=footprint, replicate=replicate)


def skipped_result(system: str, condition: str, question_id: str,
                   reason: str,
                   replicate: Optional[int] = None) -> RunResult:
    return RunResult(question_id=question_id, system=system,
                     condition=condition, answer="", correct=None,
                     citations=Citations(), replicate=replicate,
                     skipped=reason)


def result_to_row(res: RunResult) -> dict[str, Any]:
    return {
        "question_id": res.question_id,
        "system": res.system,
        "condition": res.condition,
        "answer": res.answer,
        "correct": res.correct,
        "citations": res.citations.as_dict(),
        "footprint": list(res.footprint),
        "replicate": res.replicate,
        "skipped": res.skipped,
    }


def result_from_row(row: dict[str, Any]) -> RunResult:
    cit = row["citations"]
    return RunResult(
        question_id=row["question_id"], system=row["system"],
        condition=row["condition"], answer=row["answer"],
        correct=row["correct"],
        citations=Citations(
            entities=frozenset(cit["entities"]),
            textunits=frozenset(cit["textunits"]),
            relationships=frozenset(cit["relationships"]),
            communities=frozenset(cit["communities"])),
        footprint=Footprint(*row["footprint"]),
        replicate=row["replicate"], skipped=row["skipped"])


def results_path(base: str | Path, system: str, condition: str) -> Path:
    return Path(base) / system / f"{condition}.jsonl"


def save_results(results: Sequence[RunResult], base: str | Path,
                 system: str, condition: str) -> Path:
    path = results_path(base, system, condition)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = sorted(results,
                  key=lambda r: (r.question_id,
                                 -1 if r.replicate is None else r.replicate))
    with path.open("w", encoding="utf-8") as fh:
        for res in rows:
            fh.write(json.dumps(result_to_row(res), ensure_ascii=False,
                                sort_keys=True) + "\n")
    return path


def load_results(base: str | Path, system: str,
                 condition: str) -> list[RunResult]:
    path = results_path(base, system, condition)
    out = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(result_from_row(json.loads(line)))
    return out


# --- the direct-answer filter ----------------------------------------------


def apply_llm_filter(question_ids: Sequence[str],
                     llm_only_results: Sequence[RunResult]) -> list[str]:
    """Question ids that the direct-answer baseline got wrong.

    Idempotent and order-independent; raises CoverageGap when a
    question has no direct-answer result.
    """
    by_qid = {r.question_id: r for r in llm_only_results}
    missing = [q for q in question_ids if q not in by_qid]
    if missing:
        raise CoverageGap(
            "no direct-answer result for: " + ", ".join(sorted(missing)))
    kept = [q for q in sorted(set(question_ids)) if not by_qid[q].correct]
    if not kept:
        log.warning("filter removed every question; downstream metrics "
                    "will have total=0")
    return kept


# --- metric cells ----------------------------------------------------------


@dataclass(frozen=True)
class MetricCell:
    """One system under one condition over the filtered question set.

    Counts are exact fractions so replicate means survive rendering
    decisions; integers appear as denominator-1 fractions.
    """
    system: str
    condition: str
    total: int
    correct_count: Fraction
    changed_count: Optional[Fraction] = None
    stayed_correct: Optional[Fraction] = None
    originally_correct: Optional[int] = None
    skipped_questions: tuple[str, ...] = ()

    @property
    def accuracy_pct(self) -> Optional[Fraction]:
        if self.total == 0:
            return None
        return Fraction(100) * self.correct_count / self.total

    @property
    def changed_pct(self) -> Optional[Fraction]:
        if self.changed_count is None or self.total == 0:
            return None
        return Fraction(100) * self.changed_count / self.total


def _index_single(results: Sequence[RunResult]) -> dict[str, RunResult]:
    out: dict[str, RunResult] = {}
    for res in results:
        if res.skipped is None:
            out[res.question_id] = res
    return out


def baseline_cell(system: str, baseline_results: Sequence[RunResult],
                  question_ids: Sequence[str]) -> MetricCell:
    """Accuracy-only cell over the given question set."""
    by_qid = _index_single(baseline_results)
    missing = [q for q in question_ids if q not in by_qid]
    if missing:
        raise CoverageGap(f"{system}/baseline missing: "
                          + ", ".join(sorted(missing)))
    correct = sum(1 for q in question_ids if by_qid[q].correct)
    return MetricCell(system=system, condition=BASELINE_CONDITION,
                      total=len(question_ids),
                      correct_count=Fraction(correct))


def compute_metrics(baseline_results: Sequence[RunResult],
                    intervention_results: Sequence[RunResult],
                    filtered_ids: Sequence[str]) -> MetricCell:
    """Accuracy, output-changed, and stayed-correct for one condition.

    Replicated runs contribute per-replicate counts averaged as exact
    fractions. Questions the condition skipped are excluded from the
    denominators and reported on the cell.
    """
    if not intervention_results:
        raise CoverageGap("no intervention results")
    system = intervention_results[0].system
    condition = intervention_results[0].condition
    base_by_qid = _index_single(baseline_results)
    missing = [q for q in filtered_ids if q not in base_by_qid]
    if missing:
        raise CoverageGap(f"{system}/baseline missing: "
                          + ", ".join(sorted(missing)))

    skipped = sorted({r.question_id for r in intervention_results
                      if r.skipped is not None and
                      r.question_id in set(filtered_ids)})
    eligible = [q for q in filtered_ids if q not in set(skipped)]

    by_replicate: dict[Optional[int], dict[str, RunResult]] = {}
    for res in intervention_results:
        if res.skipped is not None:
            continue
        by_replicate.setdefault(res.replicate, {})[res.question_id] = res
    if not by_replicate:
        raise CoverageGap(f"{system}/{condition}: every result skipped")

    originally = sum(1 for q in eligible if base_by_qid[q].correct)
    correct_counts = []
    changed_counts = []
    stayed_counts = []
    for rep in sorted(by_replicate, key=lambda r: (r is not None, r)):
        rows = by_replicate[rep]
        missing = [q for q in eligible if q not in rows]
        if missing:
            raise CoverageGap(
                f"{system}/{condition} replicate {rep} missing: "
                + ", ".join(sorted(missing)))
        correct = changed = stayed = 0
        for q in eligible:
            res = rows[q]
            base = base_by_qid[q]
            if res.correct:
                correct += 1
            if answers_differ(res.answer, base.answer):
                changed += 1
            if base.correct and res.correct:
                stayed += 1
        correct_counts.append(correct)
        changed_counts.append(changed)
        stayed_counts.append(stayed)

    n = len(correct_counts)
    return MetricCell(
        system=system, condition=condition, total=len(eligible),
        correct_count=Fraction(sum(correct_counts), n),
        changed_count=Fraction(sum(changed_counts), n),
        stayed_correct=Fraction(sum(stayed_counts), n),
        originally_correct=originally,
        skipped_questions=tuple(skipped))


# --- footprint means -------------------------------------------------------


class FootprintMeans(NamedTuple):
    retrieved_tus: Optional[Fraction]
    cited_tus: Optional[Fraction]
    visited_entities: Optional[Fraction]
    cited_entities: Optional[Fraction]


def footprint_stats(footprints: Sequence[Footprint]) -> FootprintMeans:
    """Column-wise arithmetic means; a column with no values is None."""
    if not footprints:
        raise ValueError("footprints must be non-empty")
    cols = []
    for idx in range(4):
        values = [fp[idx] for fp in footprints if fp[idx] is not None]
        if values:
            cols.append(Fraction(sum(values), len(values)))
        else:
            cols.append(None)
    return FootprintMeans(*cols)
