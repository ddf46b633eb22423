"""Result records, the direct-answer filter, and exact-fraction
metric cells."""
from __future__ import annotations

from fractions import Fraction

import pytest

from kgablate.agent import Citations, TraceRecord
from kgablate.errors import CoverageGap
from kgablate.evaluation import (Footprint, FootprintMeans, MetricCell,
                                 RunResult, apply_llm_filter, baseline_cell,
                                 compute_metrics, footprint_from_trace,
                                 footprint_stats, load_results, save_results,
                                 skipped_result)


def res(qid, system="agentic", condition="baseline", answer="Paris",
        correct=True, replicate=None, footprint=Footprint()):
    return RunResult(question_id=qid, system=system, condition=condition,
                     answer=answer, correct=correct,
                     citations=Citations(entities=frozenset({"e1"})),
                     footprint=footprint, replicate=replicate)


def test_footprint_from_trace():
    trace = TraceRecord(question_id="q1")
    trace.mark_visited("e1")
    trace.mark_visited("e2")
    trace.retrieved_textunits |= {"t1", "t2", "t3"}
    trace.cited_entities = {"e1"}
    trace.cited_textunits = {"t1"}
    fp = footprint_from_trace(trace)
    assert fp == Footprint(retrieved_tus=3, cited_tus=1,
                           visited_entities=2, cited_entities=1)


def test_results_round_trip(tmp_path):
    rows = [
        res("q2", condition="random_removal", replicate=1),
        res("q2", condition="random_removal", replicate=0),
        res("q1", condition="random_removal", replicate=0,
            footprint=Footprint(3, 1, 2, 1)),
        skipped_result("agentic", "random_removal", "q0",
                       "insufficient_pool"),
    ]
    path = save_results(rows, tmp_path, "agentic", "random_removal")
    assert path == tmp_path / "agentic" / "random_removal.jsonl"
    loaded = load_results(tmp_path, "agentic", "random_removal")
    # sorted by (question id, replicate)
    assert [(r.question_id, r.replicate) for r in loaded] == [
        ("q0", None), ("q1", 0), ("q2", 0), ("q2", 1)]
    assert set(loaded) == set(rows)
    assert loaded[0].skipped == "insufficient_pool"
    assert loaded[0].correct is None


# --- direct-answer filter --------------------------------------------------


def llm_results(correct_ids, all_ids):
    return [res(q, system="llm_only", correct=q in correct_ids)
            for q in all_ids]


def test_filter_keeps_wrong_answers_only():
    ids = ["q1", "q2", "q3", "q4"]
    kept = apply_llm_filter(ids, llm_results({"q2"}, ids))
    assert kept == ["q1", "q3", "q4"]


def test_filter_idempotent_and_order_independent():
    ids = ["q3", "q1", "q2"]
    rows = llm_results({"q1"}, ids)
    once = apply_llm_filter(ids, rows)
    assert apply_llm_filter(once, rows) == once
    assert apply_llm_filter(list(reversed(ids)), rows) == once


def test_filter_missing_coverage():
    with pytest.raises(CoverageGap, match="q2"):
        apply_llm_filter(["q1", "q2"], llm_results(set(), ["q1"]))


def test_filter_can_empty_the_benchmark():
    ids = ["q1", "q2"]
    assert apply_llm_filter(ids, llm_results({"q1", "q2"}, ids)) == []


# --- metric cells ----------------------------------------------------------


def test_baseline_cell_accuracy():
    rows = [res("q1"), res("q2", correct=False), res("q3")]
    cell = baseline_cell("agentic", rows, ["q1", "q2", "q3"])
    assert cell.total == 3
    assert cell.correct_count == Fraction(2)
    assert cell.accuracy_pct == Fraction(200, 3)
    assert cell.changed_pct is None


def test_baseline_cell_missing_question():
    with pytest.raises(CoverageGap, match="q9"):
        baseline_cell("agentic", [res("q1")], ["q1", "q9"])


def test_empty_cell_renders_none():
    cell = MetricCell(system="s", condition="c", total=0,
                      correct_count=Fraction(0))
    assert cell.accuracy_pct is None


def intervention_rows(answers, condition="cited_removal", replicate=None):
    """answers: {qid: (answer, correct)}"""
    return [res(q, condition=condition, answer=a, correct=c,
                replicate=replicate)
            for q, (a, c) in answers.items()]


def test_compute_metrics_single_replicate():
    baseline = [res("q1", answer="Paris"),
                res("q2", answer="Berlin", correct=False),
                res("q3", answer="Rome")]
    inter = intervention_rows({
        "q1": ("Paris", True),     # unchanged, stayed correct
        "q2": ("Berlin", False),   # unchanged, still wrong
        "q3": ("Madrid", False),   # changed, went wrong
    })
    cell = compute_metrics(baseline, inter, ["q1", "q2", "q3"])
    assert cell.total == 3
    assert cell.correct_count == Fraction(1)
    assert cell.changed_count == Fraction(1)
    assert cell.stayed_correct == Fraction(1)
    assert cell.originally_correct == 2
    assert cell.accuracy_pct == Fraction(100, 3)
    assert cell.changed_pct == Fraction(100, 3)


def test_compute_metrics_replicate_means():
    baseline = [res("q1", answer="Paris"),
                res("q2", answer="Berlin", correct=False)]
    inter = []
    # replicate 0: q1 flips, q2 stays; replicate 1: both stay
    inter += intervention_rows({"q1": ("Lyon", False),
                                "q2": ("Berlin", False)},
                               condition="random_removal", replicate=0)
    inter += intervention_rows({"q1": ("Paris", True),
                                "q2": ("Berlin", False)},
                               condition="random_removal", replicate=1)
    cell = compute_metrics(baseline, inter, ["q1", "q2"])
    assert cell.correct_count == Fraction(1, 2)
    assert cell.changed_count == Fraction(1, 2)
    assert cell.stayed_correct == Fraction(1, 2)
    assert cell.originally_correct == 1


def test_compute_metrics_change_uses_normalized_comparison():
    baseline = [res("q1", answer="The Paris")]
    inter = intervention_rows({"q1": ("paris!", True)})
    cell = compute_metrics(baseline, inter, ["q1"])
    assert cell.changed_count == Fraction(0)


def test_compute_metrics_excludes_skips():
    baseline = [res("q1"), res("q2")]
    inter = intervention_rows({"q1": ("Paris", True)})
    inter.append(skipped_result("agentic", "cited_removal", "q2",
                                "empty_cited_set"))
    cell = compute_metrics(baseline, inter, ["q1", "q2"])
    assert cell.total == 1
    assert cell.skipped_questions == ("q2",)
    assert cell.originally_correct == 1


def test_compute_metrics_missing_replicate_row():
    baseline = [res("q1"), res("q2")]
    inter = intervention_rows({"q1": ("Paris", True)},
                              condition="random_removal", replicate=0)
    inter += intervention_rows({"q1": ("Paris", True),
                                "q2": ("Rome", False)},
                               condition="random_removal", replicate=1)
    with pytest.raises(CoverageGap, match="replicate 0"):
        compute_metrics(baseline, inter, ["q1", "q2"])


def test_compute_metrics_requires_baseline_coverage():
    inter = intervention_rows({"q1": ("Paris", True)})
    with pytest.raises(CoverageGap):
        compute_metrics([], inter, ["q1"])


# --- footprint means -------------------------------------------------------


def test_footprint_means():
    stats = footprint_stats([
        Footprint(3, 1, 2, 1),
        Footprint(5, 2, 4, 1),
    ])
    assert stats == FootprintMeans(Fraction(4), Fraction(3, 2),
                                   Fraction(3), Fraction(1))


def test_footprint_means_skip_none_columns():
    stats = footprint_stats([
        Footprint(5, None, None, None),
        Footprint(None, None, None, None),
    ])
    assert stats.retrieved_tus == Fraction(5)
    assert stats.cited_tus is None
    assert stats.visited_entities is None


def test_footprint_means_empty_input():
    with pytest.raises(ValueError):
        footprint_stats([])
