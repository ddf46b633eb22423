"""Knowledge-base construction pipeline.

Stages: corpus merge -> chunking -> gold-evidence initialization ->
distractor enrichment -> community detection -> summarization.
Entity ids are pure functions of the case-normalized name, so a
rebuild from the same inputs reproduces every identifier.
"""
from __future__ import annotations

import hashlib
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

from .communities import leiden_partition
from .dataset import Question
from .errors import KgablateError
from .extraction import EntityExtractor, extract_or_fail
from .graph import (Community, Entity, KnowledgeGraph, Relationship, TextUnit,
                    make_graph)

log = logging.getLogger(__name__)

DEFAULT_MAX_TOKENS = 300
MIN_MAX_TOKENS = 50
SUMMARY_TEXTUNIT_CAP = 10


def _norm_name(name: str) -> str:
    return " ".join(name.split()).casefold()


def _slug(text: str) -> str:
    out = re.sub(r"[^a-z0-9]+", "-", text.casefold()).strip("-")
    return out or "x"


def _short_hash(text: str) -> str:
    return hashlib.sha1(text.encode("utf-8")).hexdigest()[:6]


def entity_id(name: str) -> str:
    """Stable id derived from the case-normalized name only."""
    norm = _norm_name(name)
    return f"e:{_slug(norm)}-{_short_hash(norm)}"


def paragraph_id(title: str, text: str) -> str:
    return f"p:{_slug(title)}-{_short_hash(title + chr(31) + text)}"


@dataclass(frozen=True)
class Paragraph:
    id: str
    title: str
    sentences: tuple[str, ...]

    @property
    def text(self) -> str:
        return "".join(self.sentences)


def build_corpus(questions: list[Question]) -> list[Paragraph]:
    """Union of all question paragraphs, deduplicated by (title, text
    hash), in first-appearance order."""
    out: list[Paragraph] = []
    seen: set[tuple[str, str]] = set()
    for q in questions:
        for title, sentences in q.paragraphs:
            text = "".join(sentences)
            key = (title, hashlib.sha1(text.encode("utf-8")).hexdigest())
            if key in seen:
                continue
            seen.add(key)
            out.append(Paragraph(id=paragraph_id(title, text), title=title,
                                 sentences=sentences))
    return out


def _token_count(text: str) -> int:
    return len(text.split())


def chunk(paragraphs: list[Paragraph],
          max_tokens: int = DEFAULT_MAX_TOKENS) -> list[TextUnit]:
    """Split each paragraph into ceil(tokens/max_tokens) units at
    sentence boundaries; concatenating a paragraph's units reproduces
    its text byte for byte."""
    if max_tokens < MIN_MAX_TOKENS:
        raise ValueError(f"max_tokens must be >= {MIN_MAX_TOKENS}")
    units: list[TextUnit] = []
    for para in paragraphs:
        sent_tokens = [_token_count(s) for s in para.sentences]
        total = sum(sent_tokens)
        n_units = max(1, math.ceil(total / max_tokens))
        n_units = min(n_units, len(para.sentences))
        prefix = [0]
        for t in sent_tokens:
            prefix.append(prefix[-1] + t)
        start = 0
        for g in range(1, n_units + 1):
            if g == n_units:
                end = len(para.sentences)
            else:
                target = total * g / n_units
                end = start + 1
                limit = len(para.sentences) - (n_units - g)
                while end < limit and prefix[end] < target - 1e-9:
                    end += 1
            units.append(TextUnit(
                id=f"{para.id}:tu{g - 1}",
                text="".join(para.sentences[start:end]),
                paragraph_id=para.id,
                title=para.title,
            ))
            start = end
    return units


@dataclass
class _DraftEntity:
    id: str
    name: str
    norm: str
    gold: bool
    triple_count: int = 0
    textunit_ids: set[str] = field(default_factory=set)
    community_id: Optional[str] = None

    def description(self) -> str:
        # self-referential on purpose: a description names only its own
        # entity, so it can never carry another entity's name into a
        # masked-view transcript; embedding the name also keeps every
        # description unique, which the confinement audit relies on
        if self.gold:
            word = "relation" if self.triple_count == 1 else "relations"
            return (f"{self.name}: appears in {self.triple_count} "
                    f"annotated evidence {word}.")
        return f"{self.name}: extracted from distractor text."


@dataclass
class GraphDraft:
    """Mutable accumulator; frozen into a KnowledgeGraph at the end."""

    entities: dict[str, _DraftEntity] = field(default_factory=dict)  # by norm
    relationships: dict[tuple[str, str, str], Relationship] = field(
        default_factory=dict)
    textunits: dict[str, TextUnit] = field(default_factory=dict)
    tu_entities: dict[str, set[str]] = field(default_factory=dict)
    communities: dict[str, Community] = field(default_factory=dict)

    def entity_by_id(self, eid: str) -> Optional[_DraftEntity]:
        for ent in self.entities.values():
            if ent.id == eid:
                return ent
        return None


def _link_entity(draft: GraphDraft, ent: _DraftEntity,
                 lowered: dict[str, tuple[str, str]]) -> None:
    """Attach `ent` to every text unit whose title equals its name or
    whose text mentions it as a whole word (case-insensitive)."""
    pattern = re.compile(r"(?<!\w)" + re.escape(ent.norm) + r"(?!\w)")
    for tid, (title_cf, text_cf) in lowered.items():
        if title_cf == ent.norm or (ent.norm in text_cf
                                    and pattern.search(text_cf)):
            ent.textunit_ids.add(tid)
            draft.tu_entities[tid].add(ent.id)


def _lowered_units(draft: GraphDraft) -> dict[str, tuple[str, str]]:
    return {tid: (tu.title.casefold(), tu.text.casefold())
            for tid, tu in draft.textunits.items()}


def _add_entity(draft: GraphDraft, name: str, gold: bool) -> _DraftEntity:
    norm = _norm_name(name)
    ent = draft.entities.get(norm)
    if ent is None:
        ent = _DraftEntity(id=entity_id(name), name=" ".join(name.split()),
                           norm=norm, gold=gold)
        draft.entities[norm] = ent
    return ent


def init_graph_from_evidence(questions: list[Question],
                             textunits: list[TextUnit]) -> GraphDraft:
    """Gold entities/relationships from evidence triples, linked into
    the chunked corpus."""
    draft = GraphDraft()
    for tu in textunits:
        draft.textunits[tu.id] = tu
        draft.tu_entities[tu.id] = set()
    for q in questions:
        for subj, label, obj in q.evidence_triples:
            s_ent = _add_entity(draft, subj, gold=True)
            o_ent = _add_entity(draft, obj, gold=True)
            key = (s_ent.id, label, o_ent.id)
            if key not in draft.relationships:
                draft.relationships[key] = Relationship(
                    src=s_ent.id, dst=o_ent.id, label=label,
                    description="", gold=True)
                s_ent.triple_count += 1
                if o_ent is not s_ent:
                    o_ent.triple_count += 1
    lowered = _lowered_units(draft)
    for norm in sorted(draft.entities):
        _link_entity(draft, draft.entities[norm], lowered)
    return draft


def gold_paragraph_titles(questions: list[Question]) -> set[str]:
    return {title.casefold() for q in questions
            for title, _ in q.supporting_facts}


def enrich_from_distractors(draft: GraphDraft, questions: list[Question],
                            extractor: EntityExtractor) -> int:
    """Extract non-gold entities/relationships from distractor text
    units and merge them (case-normalized dedup). Returns the number
    of entities added; running twice adds nothing the second time."""
    gold_titles = gold_paragraph_titles(questions)
    distractor_units = [tu for tid, tu in sorted(draft.textunits.items())
                        if tu.title.casefold() not in gold_titles]
    new_entities: list[_DraftEntity] = []
    for tu in distractor_units:
        result = extract_or_fail(extractor, tu.id, tu.text)
        for name in result.entities:
            if _norm_name(name) not in draft.entities:
                new_entities.append(_add_entity(draft, name, gold=False))
        for subj, label, obj in result.triples:
            s_ent = _add_entity(draft, subj, gold=False)
            o_ent = _add_entity(draft, obj, gold=False)
            key = (s_ent.id, label, o_ent.id)
            if key not in draft.relationships:
                draft.relationships[key] = Relationship(
                    src=s_ent.id, dst=o_ent.id, label=label,
                    description="", gold=False)
    lowered = _lowered_units(draft)
    for ent in new_entities:
        _link_entity(draft, ent, lowered)
    return len(new_entities)


def detect_communities(draft: GraphDraft, seed: int = 0,
                       resolution: float = 1.0) -> list[frozenset[str]]:
    """Leiden partition over the entity-relationship graph; assigns
    community ids c0, c1, ... ordered by smallest member entity id."""
    if not draft.entities:
        raise KgablateError("graph has no entities")
    nodes = sorted(ent.id for ent in draft.entities.values())
    edges = [(rel.src, rel.dst) for rel in draft.relationships.values()]
    partition = leiden_partition(nodes, edges, seed=seed,
                                 resolution=resolution)
    draft.communities = {}
    id_to_entity = {ent.id: ent for ent in draft.entities.values()}
    for i, members in enumerate(partition):
        cid = f"c{i}"
        draft.communities[cid] = Community(
            id=cid, member_entity_ids=members, summary="")
        for eid in members:
            id_to_entity[eid].community_id = cid
    return partition


def _entity_degree(draft: GraphDraft) -> dict[str, int]:
    degree = {ent.id: 0 for ent in draft.entities.values()}
    for rel in draft.relationships.values():
        degree[rel.src] += 1
        if rel.dst != rel.src:
            degree[rel.dst] += 1
    return degree


def community_summary_input(draft: GraphDraft, cid: str) -> dict[str, Any]:
    """Member names/descriptions plus a capped text-unit sample,
    largest-degree entities first."""
    com = draft.communities[cid]
    degree = _entity_degree(draft)
    id_to_entity = {ent.id: ent for ent in draft.entities.values()}
    members = sorted(com.member_entity_ids,
                     key=lambda eid: (-degree[eid], eid))
    unit_ids: list[str] = []
    for eid in members:
        for tid in sorted(id_to_entity[eid].textunit_ids):
            if tid not in unit_ids:
                unit_ids.append(tid)
            if len(unit_ids) >= SUMMARY_TEXTUNIT_CAP:
                break
        if len(unit_ids) >= SUMMARY_TEXTUNIT_CAP:
            break
    return {
        "members": [(id_to_entity[eid].name,
                     id_to_entity[eid].description()) for eid in members],
        "textunits": [draft.textunits[tid].text for tid in unit_ids],
    }


def template_summary(draft: GraphDraft, cid: str) -> str:
    com = draft.communities[cid]
    id_to_entity = {ent.id: ent for ent in draft.entities.values()}
    names = sorted(id_to_entity[eid].name for eid in com.member_entity_ids)
    n = len(names)
    noun = "entity" if n == 1 else "entities"
    return f"Community of {n} {noun}: " + ", ".join(names) + "."


def summarize_communities(draft: GraphDraft, backend=None,
                          prompt_template: str | None = None) -> None:
    """Fill in community summaries. Without a backend the canonical
    member-name template is used; with one, the model is prompted with
    the community_summary_input material."""
    for cid in sorted(draft.communities):
        if backend is None:
            summary = template_summary(draft, cid)
        else:
            from .gateway import ChatMessage, complete
            material = community_summary_input(draft, cid)
            lines = [f"- {name}: {desc}" for name, desc in material["members"]]
            lines += [f"> {text}" for text in material["textunits"]]
            template = prompt_template or "Summarize this group:\n{body}"
            try:
                reply = complete(backend, [
                    ChatMessage(role="system",
                                content="You write short factual summaries."),
                    ChatMessage(role="user",
                                content=template.format(body="\n".join(lines))),
                ])
            except KgablateError as exc:
                raise KgablateError(f"summarization failed for {cid}: {exc}") from exc
            summary = (reply.content or "").strip() or template_summary(draft, cid)
        com = draft.communities[cid]
        draft.communities[cid] = Community(
            id=cid, member_entity_ids=com.member_entity_ids, summary=summary)


def finalize(draft: GraphDraft) -> KnowledgeGraph:
    """Freeze the draft into an immutable, validated KnowledgeGraph."""
    entities = {
        ent.id: Entity(
            id=ent.id, name=ent.name, entity_type="entity",
            description=ent.description(), gold=ent.gold,
            textunit_ids=frozenset(ent.textunit_ids),
            community_id=ent.community_id,
        )
        for ent in draft.entities.values()
    }
    textunits = {
        tid: TextUnit(id=tu.id, text=tu.text, paragraph_id=tu.paragraph_id,
                      title=tu.title,
                      entity_ids=frozenset(draft.tu_entities[tid]))
        for tid, tu in draft.textunits.items()
    }
    return make_graph(entities, draft.relationships.values(), textunits,
                      draft.communities)


def dataset_sha256(raw_bytes: bytes) -> str:
    return hashlib.sha256(raw_bytes).hexdigest()
