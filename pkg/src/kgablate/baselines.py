"""Non-iterative QA systems: direct answering, passage retrieval, and
single-shot graph-context answering.

The graph system reads through the same view-aware accessors as the
tool loop, so it participates in every ablation condition unchanged.
Citations for the retrieval systems come from a structured final line
of the reply (the tool loop has submit_answer instead):

    CITATIONS: entities=[...]; textunits=[...]; relationships=[...]; communities=[...]
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Optional

from .agent import AnswerRecord, Citations, EMPTY_CITATIONS, TraceRecord
from .dataset import Question
from .gateway import ChatBackend, ChatMessage, complete
from .graph import (EMPTY_VIEW, MASKED, GraphView, community_visible,
                    entity_details, neighbors, textunit_content)
from .kb import Kb, load_prompt
from .vector_index import search

log = logging.getLogger(__name__)

FOOTER_RE = re.compile(
    r"^CITATIONS:\s*entities=\[([^\]]*)\];\s*textunits=\[([^\]]*)\];\s*"
    r"relationships=\[([^\]]*)\];\s*communities=\[([^\]]*)\]\s*$")


@dataclass(frozen=True)
class BaselineConfig:
    rag_k: int = 5
    graphrag_entity_k: int = 5
    graphrag_community_k: int = 2
    graphrag_tu_cap: int = 14

    def __post_init__(self) -> None:
        for name in ("rag_k", "graphrag_entity_k", "graphrag_community_k",
                     "graphrag_tu_cap"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def render_footer(citations: Citations) -> str:
    def part(ids: frozenset[str]) -> str:
        return ",".join(sorted(ids))
    return (f"CITATIONS: entities=[{part(citations.entities)}]; "
            f"textunits=[{part(citations.textunits)}]; "
            f"relationships=[{part(citations.relationships)}]; "
            f"communities=[{part(citations.communities)}]")


def parse_footer(reply: str) -> tuple[str, Citations]:
    """Split a reply into (answer text, citations from the final line).

    A reply without a well-formed final citation line yields the whole
    text as the answer and empty citations.
    """
    lines = reply.rstrip().splitlines()
    if not lines:
        return "", EMPTY_CITATIONS
    m = FOOTER_RE.match(lines[-1].strip())
    if m is None:
        return reply.strip(), EMPTY_CITATIONS

    def ids(group: str) -> frozenset[str]:
        return frozenset(s.strip() for s in group.split(",") if s.strip())

    citations = Citations(entities=ids(m.group(1)), textunits=ids(m.group(2)),
                          relationships=ids(m.group(3)),
                          communities=ids(m.group(4)))
    return "\n".join(lines[:-1]).strip(), citations


def run_llm_only(question: Question, backend: ChatBackend) -> AnswerRecord:
    """Answer from model knowledge alone; no context, no citations."""
    if not question.text.strip():
        raise ValueError("question text must be non-empty")
    messages = [
        ChatMessage(role="system", content=load_prompt("llm_only")),
        ChatMessage(role="user", content=question.text),
    ]
    reply = complete(backend, messages)
    return AnswerRecord(question_id=question.id,
                        answer=reply.content.strip(),
                        citations=EMPTY_CITATIONS, accepted=True,
                        policy_kind="llm_only", steps_used=1)


def run_rag(question: Question, kb: Kb, backend: ChatBackend,
            cfg: BaselineConfig) -> tuple[AnswerRecord, list[str]]:
    """Top-k passage retrieval with answer-from-passages-only prompting.

    Returns the answer plus the retrieved text-unit ids. Cited text
    units are taken from the reply footer, restricted to the retrieved
    set; other citation categories in the footer are ignored.
    """
    if not question.text.strip():
        raise ValueError("question text must be non-empty")
    if len(kb.textunit_index) == 0:
        raise ValueError("text-unit index is empty")
    k = min(cfg.rag_k, len(kb.textunit_index))
    qv = kb.embedder.embed(question.text)
    hits = search(kb.textunit_index, qv, k=k)
    retrieved = [tid for tid, _ in hits]
    passages = "\n\n".join(
        f"[{tid}] {kb.graph.textunits[tid].text}" for tid in retrieved)
    prompt = load_prompt("rag").format(passages=passages,
                                       question=question.text)
    messages = [
        ChatMessage(role="system",
                    content="Answer strictly from the provided passages."),
        ChatMessage(role="user", content=prompt),
    ]
    reply = complete(backend, messages)
    answer, footer = parse_footer(reply.content)
    cited = footer.textunits & frozenset(retrieved)
    record = AnswerRecord(question_id=question.id, answer=answer,
                          citations=Citations(textunits=cited),
                          accepted=True, policy_kind="rag", steps_used=1)
    return record, retrieved


def _entity_block(kb: Kb, view: GraphView, eid: str,
                  trace: TraceRecord) -> tuple[list[str], list[str]]:
    """Render one retrieved entity; returns (lines, linked tu ids)."""
    details = entity_details(kb.graph, view, eid)
    lines: list[str] = []
    if details.masked:
        lines.append(f"entity {eid}: {MASKED}")
        return lines, []
    lines.append(f"entity {eid}: {details.name}")
    lines.append(f"  {details.description}")
    for rel, other in neighbors(kb.graph, view, eid):
        trace.mark_seen(other)
        if other in view.metadata_blocked_entities:
            other_name = MASKED
        else:
            other_name = kb.graph.entities[other].name
        arrow = "->" if rel.src == eid else "<-"
        lines.append(f"  {rel.label} {arrow} {other} | {other_name}")
    return lines, list(details.textunit_ids)


def run_graphrag(question: Question, kb: Kb, backend: ChatBackend,
                 cfg: BaselineConfig,
                 view: GraphView = EMPTY_VIEW
                 ) -> tuple[AnswerRecord, TraceRecord, list[ChatMessage]]:
    """Single-prompt answering over assembled graph context.

    Retrieves the top entities and community summaries by similarity,
    expands one hop of relationships plus linked text units (capped,
    nearest to the query first), and asks once. Retrieved entities
    count as visited; their neighbors as seen. Citations come from the
    reply footer, recorded as given. Returns the answer, the trace,
    and the transcript.
    """
    if not question.text.strip():
        raise ValueError("question text must be non-empty")
    trace = TraceRecord(question_id=question.id)
    qv = kb.embedder.embed(question.text)

    retrieved_entities: list[str] = []
    if len(kb.entity_index) > 0:
        for eid, _ in search(kb.entity_index, qv, k=len(kb.entity_index)):
            if eid in view.removed_entities:
                continue
            retrieved_entities.append(eid)
            if len(retrieved_entities) >= cfg.graphrag_entity_k:
                break

    communities: list[str] = []
    if len(kb.community_index) > 0:
        for cid, _ in search(kb.community_index, qv,
                             k=len(kb.community_index)):
            if not community_visible(kb.graph, view, cid):
                continue
            communities.append(cid)
            if len(communities) >= cfg.graphrag_community_k:
                break

    sections: list[str] = ["## Entities"]
    tu_pool: list[str] = []
    for eid in retrieved_entities:
        trace.mark_visited(eid)
        lines, tids = _entity_block(kb, view, eid, trace)
        sections.extend(lines)
        for tid in tids:
            if tid not in tu_pool:
                tu_pool.append(tid)

    sections.append("## Communities")
    for cid in communities:
        sections.append(f"{cid}: {kb.graph.communities[cid].summary}")

    # nearest-first cap over the pooled text units
    tu_rank: dict[str, int] = {}
    if len(kb.textunit_index) > 0:
        ranked = search(kb.textunit_index, qv, k=len(kb.textunit_index))
        tu_rank = {tid: pos for pos, (tid, _) in enumerate(ranked)}
    tu_pool.sort(key=lambda tid: (tu_rank.get(tid, len(tu_rank)), tid))
    kept = tu_pool[:cfg.graphrag_tu_cap]

    sections.append("## Text units")
    for tid in kept:
        trace.retrieved_textunits.add(tid)
        sections.append(f"[{tid}] {textunit_content(kb.graph, view, tid)}")

    context = "\n".join(sections)
    prompt = load_prompt("graphrag").format(context=context,
                                            question=question.text)
    messages = [
        ChatMessage(role="system",
                    content="Answer strictly from the provided graph "
                            "context."),
        ChatMessage(role="user", content=prompt),
    ]
    reply = complete(backend, messages)
    messages.append(reply)
    answer, citations = parse_footer(reply.content)
    trace.final_answer = answer
    trace.cited_entities = set(citations.entities)
    trace.cited_textunits = set(citations.textunits)
    trace.cited_relationships = set(citations.relationships)
    trace.cited_communities = set(citations.communities)
    record = AnswerRecord(question_id=question.id, answer=answer,
                          citations=citations, accepted=True,
                          policy_kind="graphrag", steps_used=1)
    return record, trace, messages


def graphrag_context_audit(context: str, kb: Kb,
                           retrieved_tus: list[str]) -> list[str]:
    """Text units from the corpus that appear in a context string
    without having been retrieved. Empty means the context is clean."""
    leaks = []
    allowed = set(retrieved_tus)
    for tid, tu in kb.graph.textunits.items():
        if tid in allowed:
            continue
        if tu.text in context:
            leaks.append(tid)
    return sorted(leaks)
