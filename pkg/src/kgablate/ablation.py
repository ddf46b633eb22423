"""Entity categorization from traces, the six intervention views, and
the confinement audit that proves blocked content never surfaced.
"""
from __future__ import annotations

import logging
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .agent import (AgentPolicy, SYSTEM_POLICIES, TraceRecord, load_trace,
                    run_question, save_trace)
from .baselines import BaselineConfig, run_graphrag
from .dataset import Question
from .errors import EmptyCitedSet, InsufficientPool, MissingTrace
from .evaluation import (RunResult, footprint_from_trace, make_result,
                         skipped_result)
from .gateway import ChatBackend
from .graph import GraphView, KnowledgeGraph
from .kb import Kb

log = logging.getLogger(__name__)

CONDITIONS = ("full_isolation", "text_only_isolation", "cited_removal",
              "random_removal", "entity_removal", "entity_text_mask")

# conditions whose view construction needs a non-empty cited set
CITED_DEPENDENT = ("full_isolation", "cited_removal")

DEFAULT_REPLICATES = 3


@dataclass(frozen=True)
class Condition:
    name: str
    seed: int = 0
    replicates: int = DEFAULT_REPLICATES

    def __post_init__(self) -> None:
        if self.name not in CONDITIONS:
            raise ValueError(f"unknown condition {self.name!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")


@dataclass(frozen=True)
class EntityCategorization:
    """Per-question split of the graph's entities.

    `cited` keeps citations that were never visited (possible under the
    unconstrained policy); the three sets partition the entity ids.
    """
    question_id: str
    cited: frozenset[str]
    visited_uncited: frozenset[str]
    not_visited: frozenset[str]


def categorize(trace: TraceRecord,
               graph: KnowledgeGraph) -> EntityCategorization:
    all_ids = frozenset(graph.entities)
    cited = frozenset(trace.cited_entities) & all_ids
    visited = frozenset(trace.visited_entities) & all_ids
    visited_uncited = visited - cited
    return EntityCategorization(
        question_id=trace.question_id,
        cited=cited,
        visited_uncited=visited_uncited,
        not_visited=all_ids - cited - visited_uncited,
    )


def _random_pool(cat: EntityCategorization,
                 graph: KnowledgeGraph) -> list[str]:
    # only entities that could plausibly have been retrieved: they
    # carry at least one linked text unit
    pool = [e for e in cat.visited_uncited | cat.not_visited
            if graph.entities[e].textunit_ids]
    return sorted(pool)


def build_view(condition: Condition, cat: EntityCategorization,
               graph: KnowledgeGraph) -> list[GraphView]:
    """The view(s) implementing one condition for one question.

    Single-element list for every condition except random_removal,
    which yields one view per replicate (seeded seed+replicate_index).
    """
    name = condition.name
    if name in CITED_DEPENDENT and not cat.cited:
        raise EmptyCitedSet(cat.question_id)
    uncited = cat.visited_uncited | cat.not_visited
    if name == "full_isolation":
        return [GraphView(removed_entities=frozenset(uncited),
                          label=name)]
    if name == "text_only_isolation":
        return [GraphView(text_blocked_entities=frozenset(uncited),
                          label=name)]
    if name == "cited_removal":
        return [GraphView(removed_entities=cat.cited, label=name)]
    if name == "entity_removal":
        return [GraphView(removed_entities=cat.visited_uncited,
                          label=name)]
    if name == "entity_text_mask":
        return [GraphView(metadata_blocked_entities=cat.visited_uncited,
                          label=name)]
    # random_removal
    pool = _random_pool(cat, graph)
    size = len(cat.cited)
    if size > len(pool):
        raise InsufficientPool(
            f"{cat.question_id}: need {size} removable entities, "
            f"pool has {len(pool)}")
    views = []
    for r in range(condition.replicates):
        rng = random.Random(condition.seed + r)
        sample = frozenset(rng.sample(pool, size))
        views.append(GraphView(removed_entities=sample,
                               label=f"{condition.name}.r{r}"))
    return views


# --- intervention orchestration --------------------------------------------

GRAPH_SYSTEMS = tuple(SYSTEM_POLICIES) + ("graphrag",)


def load_baseline_trace(traces_base: str | Path, system: str,
                        question_id: str) -> TraceRecord:
    try:
        return load_trace(traces_base, system, "baseline", question_id)
    except FileNotFoundError:
        raise MissingTrace(f"{system}/baseline/{question_id}")


def _run_under_view(system: str, question: Question, kb: Kb,
                    view: GraphView, backend: ChatBackend,
                    cfg: BaselineConfig, policy: Optional[AgentPolicy]):
    """One fresh run of `system` for one question under one view;
    returns (answer record, trace, transcript)."""
    if system == "graphrag":
        return run_graphrag(question, kb, backend, cfg, view)
    if policy is None:
        policy = AgentPolicy(kind=SYSTEM_POLICIES[system])
    return run_question(question, kb, view, policy, backend)


def run_intervention(system: str, condition: Condition,
                     questions: list[Question], kb: Kb,
                     backend: ChatBackend, traces_base: str | Path,
                     cfg: Optional[BaselineConfig] = None,
                     policy: Optional[AgentPolicy] = None,
                     jobs: int = 1, save_traces: bool = True
                     ) -> tuple[list[RunResult], list[tuple[str, str]]]:
    """Fresh runs of one system under one condition's views.

    Per-question skips (empty cited set, exhausted sampling pool) are
    recorded and the run continues; unexpected per-question errors
    propagate. Returns (results including skip rows, skip reasons).
    """
    if system not in GRAPH_SYSTEMS:
        raise ValueError(f"system {system!r} has no graph to ablate")
    if cfg is None:
        cfg = BaselineConfig()

    def run_one(question: Question) -> list[RunResult]:
        base_trace = load_baseline_trace(traces_base, system, question.id)
        cat = categorize(base_trace, kb.graph)
        try:
            views = build_view(condition, cat, kb.graph)
        except (EmptyCitedSet, InsufficientPool) as exc:
            reason = ("empty_cited_set" if isinstance(exc, EmptyCitedSet)
                      else "insufficient_pool")
            log.warning("%s/%s: skipping %s (%s)", system, condition.name,
                        question.id, reason)
            return [skipped_result(system, condition.name, question.id,
                                   reason)]
        out = []
        replicated = len(views) > 1
        for idx, view in enumerate(views):
            replicate = idx if replicated else None
            record, trace, transcript = _run_under_view(
                system, question, kb, view, backend, cfg, policy)
            out.append(make_result(
                system, condition.name, question, record.answer,
                record.citations, footprint_from_trace(trace),
                replicate=replicate))
            if save_traces:
                suffix = "" if replicate is None else f".r{replicate}"
                save_trace(
                    trace, traces_base, system, condition.name,
                    transcript=transcript, view=view,
                    policy_kind=record.policy_kind,
                    filename=f"{question.id}{suffix}.json")
        return out

    results: list[RunResult] = []
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for rows in pool.map(run_one, questions):
                results.extend(rows)
    else:
        for question in questions:
            results.extend(run_one(question))
    skips = [(r.question_id, r.skipped) for r in results
             if r.skipped is not None]
    return results, skips


# --- confinement audit -----------------------------------------------------


def _unreadable_textunits(graph: KnowledgeGraph,
                          view: GraphView) -> list[str]:
    unreadable = view.text_unreadable
    out = []
    for tid, tu in graph.textunits.items():
        if not any(e not in unreadable for e in tu.entity_ids):
            out.append(tid)
    return sorted(out)


def confinement_probes(graph: KnowledgeGraph,
                       view: GraphView) -> list[tuple[str, str, str]]:
    """Strings that must never appear in a transcript under `view`.

    Rows are (kind, owner id, probe text): the name and description of
    every metadata-blocked entity, plus the text of every unreadable
    text unit. Names are matched as whole words by audit_transcript;
    the rest as substrings.
    """
    probes = []
    for eid in sorted(view.metadata_blocked_entities):
        ent = graph.entities[eid]
        probes.append(("masked_name", eid, ent.name))
        probes.append(("masked_description", eid, ent.description))
    for tid in _unreadable_textunits(graph, view):
        probes.append(("blocked_text", tid, graph.textunits[tid].text))
    return probes


def audit_transcript(text: str, graph: KnowledgeGraph,
                     view: GraphView) -> list[tuple[str, str]]:
    """Blocked content found in a transcript; empty means confined."""
    hits = []
    for kind, owner, probe in confinement_probes(graph, view):
        if not probe:
            continue
        if kind == "masked_name":
            pattern = re.compile(
                r"(?<!\w)" + re.escape(probe) + r"(?!\w)")
            if pattern.search(text):
                hits.append((kind, owner))
        elif probe in text:
            hits.append((kind, owner))
    return hits
