"""Typed in-memory knowledge graph with visibility-mediated reads.

All reads go through a GraphView overlay. A removed entity is
indistinguishable from one that never existed; text-blocked and
metadata-blocked entities stay traversable but hide progressively
more of themselves.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

from .errors import TextBlocked, UnknownEntity, UnknownTextUnit

# Marker string returned in place of hidden metadata fields.
MASKED = "[masked]"


@dataclass(frozen=True)
class Entity:
    id: str
    name: str
    entity_type: str
    description: str
    gold: bool
    textunit_ids: frozenset[str] = frozenset()
    community_id: Optional[str] = None


@dataclass(frozen=True)
class Relationship:
    src: str
    dst: str
    label: str
    description: str
    gold: bool

    @property
    def rel_id(self) -> str:
        """Stable citable identifier derived from the triple itself."""
        return f"{self.src}|{self.label}|{self.dst}"


@dataclass(frozen=True)
class TextUnit:
    id: str
    text: str
    paragraph_id: str
    title: str
    entity_ids: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Community:
    id: str
    member_entity_ids: frozenset[str]
    summary: str = ""


@dataclass(frozen=True)
class KnowledgeGraph:
    """Immutable after construction; shared freely across runs."""

    entities: dict[str, Entity]
    relationships: tuple[Relationship, ...]
    textunits: dict[str, TextUnit]
    communities: dict[str, Community]
    # entity id -> indices into `relationships`, in insertion order
    adjacency: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def relationship_ids(self) -> set[str]:
        return {r.rel_id for r in self.relationships}


@dataclass(frozen=True)
class GraphView:
    """Visibility overlay; the three sets must be pairwise disjoint."""

    removed_entities: frozenset[str] = frozenset()
    text_blocked_entities: frozenset[str] = frozenset()
    metadata_blocked_entities: frozenset[str] = frozenset()
    label: str = "baseline"

    def __post_init__(self) -> None:
        if (self.removed_entities & self.text_blocked_entities
                or self.removed_entities & self.metadata_blocked_entities
                or self.text_blocked_entities & self.metadata_blocked_entities):
            raise ValueError("view sets must be pairwise disjoint")

    @property
    def text_unreadable(self) -> frozenset[str]:
        """Entities whose linkage does not make a text unit readable."""
        return (self.removed_entities | self.text_blocked_entities
                | self.metadata_blocked_entities)


EMPTY_VIEW = GraphView()


class GraphStats(NamedTuple):
    entities: int
    relationships: int
    textunits: int
    communities: int


@dataclass(frozen=True)
class EntityDetails:
    id: str
    masked: bool
    name: str = ""
    entity_type: str = ""
    description: str = ""
    textunit_ids: tuple[str, ...] = ()
    community_id: Optional[str] = None


def build_adjacency(entities: Iterable[str],
                    relationships: Iterable[Relationship]) -> dict[str, tuple[int, ...]]:
    adj: dict[str, list[int]] = {e: [] for e in entities}
    for i, rel in enumerate(relationships):
        adj[rel.src].append(i)
        if rel.dst != rel.src:
            adj[rel.dst].append(i)
    return {e: tuple(ix) for e, ix in adj.items()}


def make_graph(entities: dict[str, Entity],
               relationships: Iterable[Relationship],
               textunits: dict[str, TextUnit],
               communities: dict[str, Community]) -> KnowledgeGraph:
    """Freeze collections into a KnowledgeGraph and check its invariants."""
    rels = tuple(relationships)
    for rel in rels:
        if rel.src not in entities or rel.dst not in entities:
            raise ValueError(f"dangling relationship {rel.rel_id}")
    graph = KnowledgeGraph(
        entities=dict(entities),
        relationships=rels,
        textunits=dict(textunits),
        communities=dict(communities),
        adjacency=build_adjacency(entities, rels),
    )
    validate_graph(graph)
    return graph


def validate_graph(graph: KnowledgeGraph) -> None:
    """Raise ValueError on any structural invariant violation."""
    for eid, ent in graph.entities.items():
        if ent.id != eid:
            raise ValueError(f"entity keyed as {eid} carries id {ent.id}")
        for tid in ent.textunit_ids:
            if tid not in graph.textunits:
                raise ValueError(f"{eid} references missing text unit {tid}")
        if ent.community_id is not None:
            com = graph.communities.get(ent.community_id)
            if com is None or eid not in com.member_entity_ids:
                raise ValueError(f"{eid} references inconsistent community")
    for rel in graph.relationships:
        if rel.src not in graph.entities or rel.dst not in graph.entities:
            raise ValueError(f"dangling relationship {rel.rel_id}")
    for tid, tu in graph.textunits.items():
        if not tu.text:
            raise ValueError(f"text unit {tid} is empty")
        for eid in tu.entity_ids:
            ent = graph.entities.get(eid)
            if ent is None or tid not in ent.textunit_ids:
                raise ValueError(f"one-way link between {tid} and {eid}")
    # entity -> TU direction of the bidirectional check
    for eid, ent in graph.entities.items():
        for tid in ent.textunit_ids:
            if eid not in graph.textunits[tid].entity_ids:
                raise ValueError(f"one-way link between {eid} and {tid}")
    seen_members: set[str] = set()
    for cid, com in graph.communities.items():
        if not com.member_entity_ids:
            raise ValueError(f"community {cid} is empty")
        overlap = seen_members & com.member_entity_ids
        if overlap:
            raise ValueError(f"entities {sorted(overlap)} in two communities")
        seen_members |= com.member_entity_ids
        for eid in com.member_entity_ids:
            ent = graph.entities.get(eid)
            if ent is None:
                raise ValueError(f"community {cid} references missing {eid}")
            if ent.community_id != cid:
                raise ValueError(f"{eid} does not point back to {cid}")
    if graph.adjacency != build_adjacency(graph.entities, graph.relationships):
        raise ValueError("adjacency inconsistent with relationship list")


def neighbors(graph: KnowledgeGraph, view: GraphView,
              e: str) -> list[tuple[Relationship, str]]:
    """Incident relationships of `e` whose other endpoint is visible.

    Sorted by (other entity id, label) so results are stable across
    runs. Raises UnknownEntity for ids that are absent or removed.
    """
    if e not in graph.entities or e in view.removed_entities:
        raise UnknownEntity(e)
    out = []
    for idx in graph.adjacency.get(e, ()):
        rel = graph.relationships[idx]
        other = rel.dst if rel.src == e else rel.src
        if other in view.removed_entities:
            continue
        out.append((rel, other))
    out.sort(key=lambda p: (p[1], p[0].label, p[0].src, p[0].dst))
    return out


def entity_details(graph: KnowledgeGraph, view: GraphView,
                   e: str) -> EntityDetails:
    """Details of `e` with masking applied.

    Metadata-blocked entities yield only the id plus a masked marker;
    text-blocked entities yield details without their text-unit ids.
    """
    if e not in graph.entities or e in view.removed_entities:
        raise UnknownEntity(e)
    if e in view.metadata_blocked_entities:
        return EntityDetails(id=e, masked=True)
    ent = graph.entities[e]
    tids: tuple[str, ...] = ()
    if e not in view.text_blocked_entities:
        tids = tuple(sorted(ent.textunit_ids))
    return EntityDetails(
        id=e, masked=False, name=ent.name, entity_type=ent.entity_type,
        description=ent.description, textunit_ids=tids,
        community_id=ent.community_id,
    )


def textunit_content(graph: KnowledgeGraph, view: GraphView, t: str) -> str:
    """Text of unit `t`, readable iff some linked entity is unblocked."""
    tu = graph.textunits.get(t)
    if tu is None:
        raise UnknownTextUnit(t)
    unreadable = view.text_unreadable
    if not any(eid not in unreadable for eid in tu.entity_ids):
        raise TextBlocked(t)
    return tu.text


def community_visible(graph: KnowledgeGraph, view: GraphView,
                      c: str) -> bool:
    """Whether a community summary may be served under the view.

    Summaries are generated from member names and descriptions, so a
    metadata-blocked member makes the whole summary unreadable. Removed
    members do not hide it: the summary predates the removal and is
    served as generated.
    """
    com = graph.communities.get(c)
    if com is None:
        return False
    return not any(m in view.metadata_blocked_entities
                   for m in com.member_entity_ids)


def stats(graph: KnowledgeGraph) -> GraphStats:
    return GraphStats(
        entities=len(graph.entities),
        relationships=len(graph.relationships),
        textunits=len(graph.textunits),
        communities=len(graph.communities),
    )
