"""Agentic graph-QA loop: tool registry, trace recording, citation
policies, and answer finalization.

"Visited" means focal inspection (details or neighbors of an id);
appearing in someone else's results only makes an entity "seen". The
distinction drives both the visited_only policy and the downstream
entity categorization.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

from .dataset import Question
from .embedding import EmbeddingProvider
from .errors import TextBlocked, UnknownEntity, UnknownTextUnit
from .gateway import ChatBackend, ChatMessage, ToolInvocation, complete
from .graph import (MASKED, GraphView, KnowledgeGraph, community_visible,
                    entity_details, neighbors, textunit_content)
from .kb import Kb, load_prompt
from .vector_index import search

log = logging.getLogger(__name__)

POLICY_KINDS = ("unconstrained", "visited_only", "evidence_first")

DEFAULT_SEARCH_K = 5
DEFAULT_COMMUNITY_K = 2
SNIPPET_LEN = 160

NUDGE = ("Use the tools to research the graph, then call submit_answer "
         "with your citations.")

# experiment system name -> tool-loop policy kind
SYSTEM_POLICIES = {
    "agentic": "unconstrained",
    "evidence_first": "evidence_first",
    "visited_only": "visited_only",
}

_POLICY_RULES = {
    "unconstrained": "Cite any ids that exist in the graph.",
    "visited_only": ("Citation rule: every entity you cite must be one you "
                     "inspected with get_entity_details or get_neighbors. "
                     "Citations of merely-seen entities are rejected."),
    "evidence_first": ("Citation rule: before answering you must call "
                       "submit_evidence with the entities you inspected and "
                       "the text units you read. Only after your evidence "
                       "is validated may you call submit_answer, citing a "
                       "subset of that evidence."),
}


@dataclass(frozen=True)
class AgentPolicy:
    kind: str
    max_steps: int = 25
    max_citation_retries: int = 3

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.max_steps < 3:
            raise ValueError("max_steps must be >= 3")
        if self.max_citation_retries < 1:
            raise ValueError("max_citation_retries must be >= 1")


@dataclass(frozen=True)
class Citations:
    entities: frozenset[str] = frozenset()
    textunits: frozenset[str] = frozenset()
    relationships: frozenset[str] = frozenset()
    communities: frozenset[str] = frozenset()

    @classmethod
    def from_args(cls, args: dict[str, Any]) -> "Citations":
        def ids(key: str) -> frozenset[str]:
            return frozenset(str(x) for x in args.get(key, []))
        return cls(entities=ids("entities"), textunits=ids("textunits"),
                   relationships=ids("relationships"),
                   communities=ids("communities"))

    def as_dict(self) -> dict[str, list[str]]:
        return {
            "entities": sorted(self.entities),
            "textunits": sorted(self.textunits),
            "relationships": sorted(self.relationships),
            "communities": sorted(self.communities),
        }

    def issubset(self, other: "Citations") -> bool:
        return (self.entities <= other.entities
                and self.textunits <= other.textunits
                and self.relationships <= other.relationships
                and self.communities <= other.communities)

    def union(self, other: "Citations") -> "Citations":
        return Citations(
            entities=self.entities | other.entities,
            textunits=self.textunits | other.textunits,
            relationships=self.relationships | other.relationships,
            communities=self.communities | other.communities,
        )


EMPTY_CITATIONS = Citations()


@dataclass(frozen=True)
class ToolCallRecord:
    step: int
    tool_name: str
    arguments: dict[str, Any]
    result_digest: str


@dataclass
class TraceRecord:
    question_id: str
    tool_calls: list[ToolCallRecord] = field(default_factory=list)
    visited_entities: list[str] = field(default_factory=list)
    seen_entities: set[str] = field(default_factory=set)
    retrieved_textunits: set[str] = field(default_factory=set)
    final_answer: str = ""
    cited_entities: set[str] = field(default_factory=set)
    cited_textunits: set[str] = field(default_factory=set)
    cited_relationships: set[str] = field(default_factory=set)
    cited_communities: set[str] = field(default_factory=set)
    rejected_citation_attempts: int = 0

    def mark_visited(self, eid: str) -> None:
        if eid not in self.visited_entities:
            self.visited_entities.append(eid)
        self.seen_entities.discard(eid)

    def mark_seen(self, eid: str) -> None:
        if eid not in self.visited_entities:
            self.seen_entities.add(eid)


@dataclass(frozen=True)
class AnswerRecord:
    question_id: str
    answer: str
    citations: Citations
    accepted: bool
    policy_kind: str
    steps_used: int


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: str = ""

    @classmethod
    def accepted(cls) -> "Verdict":
        return cls(ok=True)

    @classmethod
    def rejected(cls, reason: str) -> "Verdict":
        return cls(ok=False, reason=reason)


def result_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


# --- tool registry ---------------------------------------------------------

# name -> {param: (json type, required)}
_STR = ("string", True)
_STR_OPT = ("string", False)
_INT_OPT = ("integer", False)
_LIST_OPT = ("array", False)

TOOL_PARAMS: dict[str, dict[str, tuple[str, bool]]] = {
    "search_entities": {"query": _STR, "k": _INT_OPT},
    "get_entity_details": {"id": _STR},
    "get_neighbors": {"id": _STR},
    "read_textunit": {"id": _STR},
    "search_communities": {"query": _STR, "k": _INT_OPT},
    "read_community": {"id": _STR},
    "submit_answer": {"answer": _STR, "entities": _LIST_OPT,
                      "textunits": _LIST_OPT, "relationships": _LIST_OPT,
                      "communities": _LIST_OPT},
    "submit_evidence": {"entities": _LIST_OPT, "textunits": _LIST_OPT,
                        "relationships": _LIST_OPT, "communities": _LIST_OPT},
}

_TOOL_DESCRIPTIONS = {
    "search_entities": "Rank graph entities by similarity to a query.",
    "get_entity_details": "Full details of one entity by id.",
    "get_neighbors": "Relationships incident to one entity by id.",
    "read_textunit": "Read the text of one text unit by id.",
    "search_communities": "Rank community summaries by similarity.",
    "read_community": "Read one community summary by id.",
    "submit_answer": "Submit the final short answer with citation ids.",
    "submit_evidence": "Submit evidence ids for validation before answering.",
}

_JSON_TYPE_CHECK = {
    "string": lambda v: isinstance(v, str),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "array": lambda v: isinstance(v, list),
}


def registered_tools(policy_kind: str) -> list[str]:
    tools = ["search_entities", "get_entity_details", "get_neighbors",
             "read_textunit", "search_communities", "read_community",
             "submit_answer"]
    if policy_kind == "evidence_first":
        tools.insert(-1, "submit_evidence")
    return tools


def tool_schema(policy_kind: str) -> list[dict[str, Any]]:
    """OpenAI-style function declarations for the registered tools."""
    out = []
    for name in registered_tools(policy_kind):
        props: dict[str, Any] = {}
        required = []
        for param, (jtype, req) in TOOL_PARAMS[name].items():
            props[param] = {"type": jtype}
            if jtype == "array":
                props[param]["items"] = {"type": "string"}
            if req:
                required.append(param)
        out.append({
            "type": "function",
            "function": {
                "name": name,
                "description": _TOOL_DESCRIPTIONS[name],
                "parameters": {"type": "object", "properties": props,
                               "required": required},
            },
        })
    return out


def parse_tool_args(tool_name: str, raw_arguments: str,
                    allowed: Sequence[str]) -> dict[str, Any]:
    """Decode and schema-check a tool call; raises MalformedToolCall."""
    from .errors import MalformedToolCall
    if tool_name not in allowed:
        raise MalformedToolCall(f"unknown tool {tool_name!r}")
    try:
        args = json.loads(raw_arguments)
    except json.JSONDecodeError as exc:
        raise MalformedToolCall(f"arguments are not valid JSON: {exc}")
    if not isinstance(args, dict):
        raise MalformedToolCall("arguments must be a JSON object")
    schema = TOOL_PARAMS[tool_name]
    for key in args:
        if key not in schema:
            raise MalformedToolCall(f"unexpected argument {key!r}")
    for key, (jtype, req) in schema.items():
        if key not in args:
            if req:
                raise MalformedToolCall(f"missing required argument {key!r}")
            continue
        if not _JSON_TYPE_CHECK[jtype](args[key]):
            raise MalformedToolCall(f"argument {key!r} must be {jtype}")
    return args


# --- citation validation ---------------------------------------------------


def _missing_under_view(citations: Citations, graph: KnowledgeGraph,
                        view: GraphView) -> list[str]:
    """Cited ids that do not exist under the view. A removed entity, a
    text unit all of whose links are removed, and a relationship with a
    removed endpoint are all treated as nonexistent."""
    bad: list[str] = []
    for eid in sorted(citations.entities):
        if eid not in graph.entities or eid in view.removed_entities:
            bad.append(eid)
    for tid in sorted(citations.textunits):
        tu = graph.textunits.get(tid)
        if tu is None or not any(e not in view.removed_entities
                                 for e in tu.entity_ids):
            bad.append(tid)
    rel_ids = graph.relationship_ids()
    by_id = {r.rel_id: r for r in graph.relationships}
    for rid in sorted(citations.relationships):
        if rid not in rel_ids:
            bad.append(rid)
            continue
        rel = by_id[rid]
        if (rel.src in view.removed_entities
                or rel.dst in view.removed_entities):
            bad.append(rid)
    for cid in sorted(citations.communities):
        if cid not in graph.communities:
            bad.append(cid)
    return bad


def validate_citations(citations: Citations, trace: TraceRecord,
                       graph: KnowledgeGraph, view: GraphView,
                       policy: AgentPolicy,
                       validated_evidence: Optional[Citations]) -> Verdict:
    """Accept or reject a submit_answer's citations under the policy."""
    missing = _missing_under_view(citations, graph, view)
    if missing:
        return Verdict.rejected("unknown ids: " + ", ".join(missing))
    if policy.kind == "visited_only":
        unvisited = sorted(citations.entities
                           - set(trace.visited_entities))
        if unvisited:
            return Verdict.rejected(
                "entities not visited: " + ", ".join(unvisited))
    if policy.kind == "evidence_first":
        if validated_evidence is None:
            return Verdict.rejected(
                "evidence required first: call submit_evidence before "
                "submit_answer")
        if not citations.issubset(validated_evidence):
            extras = sorted(
                (citations.entities - validated_evidence.entities)
                | (citations.textunits - validated_evidence.textunits)
                | (citations.relationships - validated_evidence.relationships)
                | (citations.communities - validated_evidence.communities))
            return Verdict.rejected(
                "citations outside validated evidence: " + ", ".join(extras))
    return Verdict.accepted()


def validate_evidence(citations: Citations, trace: TraceRecord,
                      graph: KnowledgeGraph, view: GraphView) -> Verdict:
    """Evidence must exist under the view, cited entities must have
    been visited, and cited text units must have been read."""
    missing = _missing_under_view(citations, graph, view)
    if missing:
        return Verdict.rejected("unknown ids: " + ", ".join(missing))
    unvisited = sorted(citations.entities - set(trace.visited_entities))
    if unvisited:
        return Verdict.rejected(
            "entities not visited: " + ", ".join(unvisited))
    unread = sorted(citations.textunits - trace.retrieved_textunits)
    if unread:
        return Verdict.rejected("text units not read: " + ", ".join(unread))
    return Verdict.accepted()


# --- the runtime -----------------------------------------------------------


class ToolRuntime:
    """Per-question tool dispatcher; owns the trace and policy state."""

    def __init__(self, kb: Kb, view: GraphView, policy: AgentPolicy,
                 trace: TraceRecord):
        self.kb = kb
        self.graph = kb.graph
        self.view = view
        self.policy = policy
        self.trace = trace
        self.allowed = registered_tools(policy.kind)
        self.validated_evidence: Optional[Citations] = None
        self.answer_rejections = 0
        self.last_answer_text = ""

    # rendering helpers -----------------------------------------------------

    def _entity_label(self, eid: str) -> str:
        if eid in self.view.metadata_blocked_entities:
            return MASKED
        return self.graph.entities[eid].name

    def _search_entities(self, args: dict[str, Any]) -> str:
        k = args.get("k", DEFAULT_SEARCH_K)
        if k < 1:
            return "error: k must be >= 1"
        if not args["query"].strip():
            return "error: empty query"
        if len(self.kb.entity_index) == 0:
            return "no results"
        qv = self.kb.embedder.embed(args["query"])
        ranked = search(self.kb.entity_index, qv,
                        k=len(self.kb.entity_index))
        lines = []
        for eid, score in ranked:
            if eid in self.view.removed_entities:
                continue
            self.trace.mark_seen(eid)
            lines.append(f"{eid} | {self._entity_label(eid)} | {score:.4f}")
            if len(lines) >= k:
                break
        return "\n".join(lines) if lines else "no results"

    def _get_entity_details(self, args: dict[str, Any]) -> str:
        details = entity_details(self.graph, self.view, args["id"])
        self.trace.mark_visited(args["id"])
        if details.masked:
            return f"id: {details.id}\n{MASKED}"
        tus = ", ".join(details.textunit_ids) if details.textunit_ids else "(none)"
        community = details.community_id or "(none)"
        return (f"id: {details.id}\nname: {details.name}\n"
                f"type: {details.entity_type}\n"
                f"description: {details.description}\n"
                f"textunits: {tus}\ncommunity: {community}")

    def _get_neighbors(self, args: dict[str, Any]) -> str:
        pairs = neighbors(self.graph, self.view, args["id"])
        self.trace.mark_visited(args["id"])
        lines = []
        for rel, other in pairs:
            self.trace.mark_seen(other)
            arrow = "->" if rel.src == args["id"] else "<-"
            lines.append(
                f"{rel.label} {arrow} {other} | {self._entity_label(other)}")
        return "\n".join(lines) if lines else "no neighbors"

    def _read_textunit(self, args: dict[str, Any]) -> str:
        text = textunit_content(self.graph, self.view, args["id"])
        self.trace.retrieved_textunits.add(args["id"])
        return text

    def _search_communities(self, args: dict[str, Any]) -> str:
        k = args.get("k", DEFAULT_COMMUNITY_K)
        if k < 1:
            return "error: k must be >= 1"
        if not args["query"].strip():
            return "error: empty query"
        if len(self.kb.community_index) == 0:
            return "no results"
        qv = self.kb.embedder.embed(args["query"])
        ranked = search(self.kb.community_index, qv,
                        k=len(self.kb.community_index))
        lines = []
        for cid, score in ranked:
            if not community_visible(self.graph, self.view, cid):
                continue
            snippet = self.graph.communities[cid].summary[:SNIPPET_LEN]
            lines.append(f"{cid} | {score:.4f} | {snippet}")
            if len(lines) >= k:
                break
        return "\n".join(lines) if lines else "no results"

    def _read_community(self, args: dict[str, Any]) -> str:
        com = self.graph.communities.get(args["id"])
        if com is None:
            return f"error: unknown community {args['id']}"
        if not community_visible(self.graph, self.view, com.id):
            return f"id: {com.id}\n{MASKED}"
        return f"{com.id}: {com.summary}"

    def _submit_evidence(self, args: dict[str, Any]) -> str:
        citations = Citations.from_args(args)
        verdict = validate_evidence(citations, self.trace, self.graph,
                                    self.view)
        if verdict.ok:
            if self.validated_evidence is None:
                self.validated_evidence = citations
            else:
                self.validated_evidence = self.validated_evidence.union(
                    citations)
            return "evidence validated; you may now submit_answer"
        self.trace.rejected_citation_attempts += 1
        return f"evidence rejected: {verdict.reason}"

    def _submit_answer(self,
                       args: dict[str, Any]) -> tuple[str, Optional[AnswerRecord]]:
        citations = Citations.from_args(args)
        answer = args["answer"].strip()
        self.last_answer_text = answer
        if not answer:
            verdict = Verdict.rejected("answer must be non-empty")
        else:
            verdict = validate_citations(citations, self.trace, self.graph,
                                         self.view, self.policy,
                                         self.validated_evidence)
        if verdict.ok:
            self.trace.cited_entities = set(citations.entities)
            self.trace.cited_textunits = set(citations.textunits)
            self.trace.cited_relationships = set(citations.relationships)
            self.trace.cited_communities = set(citations.communities)
            record = AnswerRecord(
                question_id=self.trace.question_id, answer=answer,
                citations=citations, accepted=True,
                policy_kind=self.policy.kind, steps_used=0)
            return "answer accepted", record
        self.trace.rejected_citation_attempts += 1
        self.answer_rejections += 1
        if self.answer_rejections >= self.policy.max_citation_retries:
            record = AnswerRecord(
                question_id=self.trace.question_id, answer=answer,
                citations=EMPTY_CITATIONS, accepted=False,
                policy_kind=self.policy.kind, steps_used=0)
            return (f"citations rejected: {verdict.reason}; "
                    "retry limit reached", record)
        return (f"citations rejected: {verdict.reason}; "
                "revise and submit again", None)

    # dispatch --------------------------------------------------------------

    def dispatch(self,
                 call: ToolInvocation) -> tuple[str, Optional[AnswerRecord]]:
        """Execute one tool call; kg_store errors become tool-message
        text, never exceptions. Returns (result text, final record)."""
        from .errors import MalformedToolCall
        final: Optional[AnswerRecord] = None
        recorded_args: dict[str, Any]
        try:
            args = parse_tool_args(call.tool_name, call.arguments,
                                   self.allowed)
            recorded_args = args
        except MalformedToolCall as exc:
            recorded_args = {"_raw": call.arguments}
            result = f"error: {exc}"
        else:
            try:
                if call.tool_name == "submit_answer":
                    result, final = self._submit_answer(args)
                elif call.tool_name == "submit_evidence":
                    result = self._submit_evidence(args)
                else:
                    handler = {
                        "search_entities": self._search_entities,
                        "get_entity_details": self._get_entity_details,
                        "get_neighbors": self._get_neighbors,
                        "read_textunit": self._read_textunit,
                        "search_communities": self._search_communities,
                        "read_community": self._read_community,
                    }[call.tool_name]
                    result = handler(args)
            except UnknownEntity as exc:
                result = f"error: unknown entity {exc}"
            except UnknownTextUnit as exc:
                result = f"error: unknown text unit {exc}"
            except TextBlocked as exc:
                result = f"error: text unit {exc} is not readable"
        self.trace.tool_calls.append(ToolCallRecord(
            step=len(self.trace.tool_calls) + 1,
            tool_name=call.tool_name,
            arguments=recorded_args,
            result_digest=result_digest(result),
        ))
        return result, final


def run_question(question: Question, kb: Kb, view: GraphView,
                 policy: AgentPolicy, backend: ChatBackend
                 ) -> tuple[AnswerRecord, TraceRecord, list[ChatMessage]]:
    """Run the tool loop for one question.

    Ends when a submit_answer is accepted, the citation retry limit is
    hit, or max_steps runs out; in the failure cases the answer is the
    model's best final text with empty citations and accepted=False.
    Returns the answer, the trace, and the full transcript.
    """
    trace = TraceRecord(question_id=question.id)
    runtime = ToolRuntime(kb, view, policy, trace)
    system = load_prompt("agent_system").format(
        policy_rules=_POLICY_RULES[policy.kind])
    user = load_prompt("agent_user").format(question=question.text)
    messages: list[ChatMessage] = [
        ChatMessage(role="system", content=system),
        ChatMessage(role="user", content=user),
    ]
    schema = tool_schema(policy.kind)
    steps = 0
    final: Optional[AnswerRecord] = None
    last_text = ""
    while steps < policy.max_steps and final is None:
        reply = complete(backend, messages, schema)
        steps += 1
        messages.append(reply)
        if not reply.tool_calls:
            last_text = reply.content
            if steps < policy.max_steps:
                messages.append(ChatMessage(role="user", content=NUDGE))
            continue
        for call in reply.tool_calls:
            result, final = runtime.dispatch(call)
            messages.append(ChatMessage(role="tool", content=result,
                                        tool_call_id=call.id))
            if final is not None:
                break
    if final is None:
        answer = runtime.last_answer_text or last_text
        final = AnswerRecord(
            question_id=question.id, answer=answer,
            citations=EMPTY_CITATIONS, accepted=False,
            policy_kind=policy.kind, steps_used=steps)
    else:
        final = AnswerRecord(
            question_id=final.question_id, answer=final.answer,
            citations=final.citations, accepted=final.accepted,
            policy_kind=final.policy_kind, steps_used=steps)
    trace.final_answer = final.answer
    return final, trace, messages


def replay_trace(trace: TraceRecord, kb: Kb, view: GraphView,
                 policy: AgentPolicy) -> list[tuple[int, str, bool]]:
    """Re-dispatch a trace's tool calls against a fresh runtime and
    compare result digests. Returns (step, tool_name, digest_match)
    rows; the regenerated visited set is checked by the caller."""
    fresh = TraceRecord(question_id=trace.question_id)
    runtime = ToolRuntime(kb, view, policy, fresh)
    rows = []
    for rec in trace.tool_calls:
        if "_raw" in rec.arguments and len(rec.arguments) == 1:
            raw = rec.arguments["_raw"]
        else:
            raw = json.dumps(rec.arguments, sort_keys=True)
        call = ToolInvocation(id=f"replay_{rec.step}",
                              tool_name=rec.tool_name, arguments=raw)
        result, _ = runtime.dispatch(call)
        rows.append((rec.step, rec.tool_name,
                     result_digest(result) == rec.result_digest))
    trace_visited = list(trace.visited_entities)
    if fresh.visited_entities != trace_visited:
        rows.append((len(rows) + 1, "visited_set_mismatch", False))
    return rows


# --- trace persistence -----------------------------------------------------


def trace_to_row(trace: TraceRecord) -> dict[str, Any]:
    return {
        "question_id": trace.question_id,
        "tool_calls": [
            {"step": c.step, "tool_name": c.tool_name,
             "arguments": c.arguments, "result_digest": c.result_digest}
            for c in trace.tool_calls
        ],
        "visited_entities": list(trace.visited_entities),
        "seen_entities": sorted(trace.seen_entities),
        "retrieved_textunits": sorted(trace.retrieved_textunits),
        "final_answer": trace.final_answer,
        "cited_entities": sorted(trace.cited_entities),
        "cited_textunits": sorted(trace.cited_textunits),
        "cited_relationships": sorted(trace.cited_relationships),
        "cited_communities": sorted(trace.cited_communities),
        "rejected_citation_attempts": trace.rejected_citation_attempts,
    }


def trace_from_row(row: dict[str, Any]) -> TraceRecord:
    return TraceRecord(
        question_id=row["question_id"],
        tool_calls=[ToolCallRecord(step=c["step"], tool_name=c["tool_name"],
                                   arguments=c["arguments"],
                                   result_digest=c["result_digest"])
                    for c in row["tool_calls"]],
        visited_entities=list(row["visited_entities"]),
        seen_entities=set(row["seen_entities"]),
        retrieved_textunits=set(row["retrieved_textunits"]),
        final_answer=row["final_answer"],
        cited_entities=set(row["cited_entities"]),
        cited_textunits=set(row["cited_textunits"]),
        cited_relationships=set(row["cited_relationships"]),
        cited_communities=set(row["cited_communities"]),
        rejected_citation_attempts=row["rejected_citation_attempts"],
    )


def view_to_row(view: GraphView) -> dict[str, Any]:
    return {
        "label": view.label,
        "removed": sorted(view.removed_entities),
        "text_blocked": sorted(view.text_blocked_entities),
        "metadata_blocked": sorted(view.metadata_blocked_entities),
    }


def view_from_row(row: dict[str, Any]) -> GraphView:
    return GraphView(
        removed_entities=frozenset(row["removed"]),
        text_blocked_entities=frozenset(row["text_blocked"]),
        metadata_blocked_entities=frozenset(row["metadata_blocked"]),
        label=row["label"])


def render_transcript(messages: Sequence[ChatMessage]) -> str:
    parts = []
    for msg in messages:
        parts.append(f"--- {msg.role} ---")
        if msg.content:
            parts.append(msg.content)
        for call in msg.tool_calls:
            parts.append(f"[tool_call {call.tool_name} {call.arguments}]")
    return "\n".join(parts) + "\n"


def trace_path(base: str | Path, system: str, condition: str,
               question_id: str, filename: Optional[str] = None) -> Path:
    name = filename if filename is not None else f"{question_id}.json"
    return Path(base) / system / condition / name


def save_trace(trace: TraceRecord, base: str | Path, system: str,
               condition: str,
               transcript: Optional[list[ChatMessage]] = None,
               view: Optional[GraphView] = None,
               policy_kind: Optional[str] = None,
               filename: Optional[str] = None) -> Path:
    path = trace_path(base, system, condition, trace.question_id, filename)
    path.parent.mkdir(parents=True, exist_ok=True)
    row = trace_to_row(trace)
    if view is not None:
        row["view"] = view_to_row(view)
    if policy_kind is not None:
        row["policy_kind"] = policy_kind
    with path.open("w", encoding="utf-8") as fh:
        json.dump(row, fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")
    if transcript is not None:
        path.with_suffix(".txt").write_text(
            render_transcript(transcript), encoding="utf-8")
    return path


def load_trace(base: str | Path, system: str, condition: str,
               question_id: str) -> TraceRecord:
    path = trace_path(base, system, condition, question_id)
    with path.open("r", encoding="utf-8") as fh:
        return trace_from_row(json.load(fh))


def load_trace_bundle(path: str | Path
                      ) -> tuple[TraceRecord, GraphView, Optional[str]]:
    """A trace file plus the view and policy it ran under; traces
    saved without a view get the unablated one."""
    from .graph import EMPTY_VIEW
    with Path(path).open("r", encoding="utf-8") as fh:
        row = json.load(fh)
    view = view_from_row(row["view"]) if "view" in row else EMPTY_VIEW
    return trace_from_row(row), view, row.get("policy_kind")
