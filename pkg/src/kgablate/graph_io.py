"""Directory-of-JSONL persistence for knowledge graphs.

Layout: entities.jsonl, relationships.jsonl, textunits.jsonl,
communities.jsonl, meta.json. Rows are sorted and keys ordered so a
save -> load -> save round trip is byte identical.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .graph import (Community, Entity, KnowledgeGraph, Relationship, TextUnit,
                    make_graph)

ENTITIES = "entities.jsonl"
RELATIONSHIPS = "relationships.jsonl"
TEXTUNITS = "textunits.jsonl"
COMMUNITIES = "communities.jsonl"
META = "meta.json"


def _dump_rows(path: Path, rows: list[dict[str, Any]]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def _load_rows(path: Path) -> list[dict[str, Any]]:
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def save_graph(graph: KnowledgeGraph, out_dir: str | Path,
               meta: dict[str, Any] | None = None) -> Path:
    """Write `graph` under `out_dir`; returns the directory path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump_rows(out / ENTITIES, [
        {
            "id": e.id, "name": e.name, "entity_type": e.entity_type,
            "description": e.description, "gold": e.gold,
            "textunit_ids": sorted(e.textunit_ids),
            "community_id": e.community_id,
        }
        for e in sorted(graph.entities.values(), key=lambda e: e.id)
    ])
    _dump_rows(out / RELATIONSHIPS, [
        {
            "src": r.src, "dst": r.dst, "label": r.label,
            "description": r.description, "gold": r.gold,
        }
        for r in sorted(graph.relationships,
                        key=lambda r: (r.src, r.label, r.dst))
    ])
    _dump_rows(out / TEXTUNITS, [
        {
            "id": t.id, "text": t.text, "paragraph_id": t.paragraph_id,
            "title": t.title, "entity_ids": sorted(t.entity_ids),
        }
        for t in sorted(graph.textunits.values(), key=lambda t: t.id)
    ])
    _dump_rows(out / COMMUNITIES, [
        {
            "id": c.id, "member_entity_ids": sorted(c.member_entity_ids),
            "summary": c.summary,
        }
        for c in sorted(graph.communities.values(), key=lambda c: c.id)
    ])
    meta_path = out / META
    with meta_path.open("w", encoding="utf-8") as fh:
        json.dump(meta or {}, fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")
    return out


def load_graph(kb_dir: str | Path) -> KnowledgeGraph:
    """Load and validate a graph persisted by save_graph."""
    kb = Path(kb_dir)
    entities = {
        row["id"]: Entity(
            id=row["id"], name=row["name"], entity_type=row["entity_type"],
            description=row["description"], gold=row["gold"],
            textunit_ids=frozenset(row["textunit_ids"]),
            community_id=row["community_id"],
        )
        for row in _load_rows(kb / ENTITIES)
    }
    relationships = [
        Relationship(src=row["src"], dst=row["dst"], label=row["label"],
                     description=row["description"], gold=row["gold"])
        for row in _load_rows(kb / RELATIONSHIPS)
    ]
    textunits = {
        row["id"]: TextUnit(
            id=row["id"], text=row["text"], paragraph_id=row["paragraph_id"],
            title=row["title"], entity_ids=frozenset(row["entity_ids"]),
        )
        for row in _load_rows(kb / TEXTUNITS)
    }
    communities = {
        row["id"]: Community(
            id=row["id"],
            member_entity_ids=frozenset(row["member_entity_ids"]),
            summary=row["summary"],
        )
        for row in _load_rows(kb / COMMUNITIES)
    }
    return make_graph(entities, relationships, textunits, communities)


def load_meta(kb_dir: str | Path) -> dict[str, Any]:
    with (Path(kb_dir) / META).open("r", encoding="utf-8") as fh:
        return json.load(fh)
