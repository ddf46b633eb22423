"""Loaded knowledge-base bundle: graph, questions, indices, embedder."""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

from .dataset import Question, load_questions
from .embedding import EmbeddingProvider, HashedBowEmbedder
from .graph import KnowledgeGraph
from .graph_io import load_graph, load_meta
from .vector_index import VectorIndex, load_index

QUESTIONS_FILE = "questions.jsonl"


@dataclass
class Kb:
    graph: KnowledgeGraph
    questions: list[Question]
    entity_index: VectorIndex
    textunit_index: VectorIndex
    community_index: VectorIndex
    embedder: EmbeddingProvider
    meta: dict[str, Any]

    def question_by_id(self, qid: str) -> Question:
        for q in self.questions:
            if q.id == qid:
                return q
        raise KeyError(qid)


def embedder_from_meta(meta: dict[str, Any]) -> EmbeddingProvider:
    cfg = meta.get("embedder", {})
    if cfg.get("kind", "hashed_bow") != "hashed_bow":
        raise ValueError(f"unsupported embedder kind {cfg.get('kind')!r}")
    return HashedBowEmbedder(dim=int(cfg.get("dim", 256)),
                             seed=int(cfg.get("seed", 0)))


def load_kb(kb_dir: str | Path) -> Kb:
    kb_dir = Path(kb_dir)
    meta = load_meta(kb_dir)
    return Kb(
        graph=load_graph(kb_dir),
        questions=load_questions(kb_dir / QUESTIONS_FILE),
        entity_index=load_index(kb_dir, "entity"),
        textunit_index=load_index(kb_dir, "textunit"),
        community_index=load_index(kb_dir, "community"),
        embedder=embedder_from_meta(meta),
        meta=meta,
    )


def load_prompt(name: str) -> str:
    return (resources.files("kgablate") / "prompts" / f"{name}.txt"
            ).read_text(encoding="utf-8")
