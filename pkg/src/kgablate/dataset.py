"""Benchmark question selection from a 2WikiMultiHopQA-style dev file.

Raw records carry `_id`, `question`, `answer`, `type`,
`supporting_facts` ([title, sentence_index] pairs), `evidences`
([subject, relation, object] triples) and `context` ([title,
[sentence, ...]] pairs). An optional `answer_aliases` list is honored
when present.
"""
from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

from .errors import InsufficientPool
from .scoring import answer_token_count

CATEGORIES = ("local_path", "distractor_path", "summary_vs_local")

MAX_ANSWER_TOKENS = 10


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    qtype: str  # bridge | comparison
    category: str  # one of CATEGORIES
    gold_answer: str
    evidence_triples: tuple[tuple[str, str, str], ...]
    supporting_facts: tuple[tuple[str, int], ...]
    paragraphs: tuple[tuple[str, tuple[str, ...]], ...]
    aliases: tuple[str, ...] = ()


@dataclass(frozen=True)
class SelectionConfig:
    n_local: int = 12
    n_distractor: int = 12
    n_comparison: int = 6
    seed: int = 0
    # category thresholds; defaults make the two bridge buckets disjoint
    max_local_overlap: int = 0
    min_distractor_overlap: int = 1

    @property
    def benchmark_size(self) -> int:
        return self.n_local + self.n_distractor + self.n_comparison


def _qtype(raw_type: str) -> str:
    return "comparison" if "comparison" in raw_type.lower() else "bridge"


def _contains_word(haystack: str, needle: str) -> bool:
    pattern = r"(?<!\w)" + re.escape(needle) + r"(?!\w)"
    return re.search(pattern, haystack, re.IGNORECASE) is not None


def _distractor_overlap(gold_chain: set[str],
                        sf_titles: set[str],
                        paragraphs: Iterable[tuple[str, tuple[str, ...]]]) -> int:
    """Count distractor paragraphs sharing an entity name with the
    gold evidence chain (title match or whole-word text mention)."""
    count = 0
    for title, sentences in paragraphs:
        if title.casefold() in sf_titles:
            continue
        if title.casefold() in gold_chain:
            count += 1
            continue
        text = "".join(sentences)
        if any(_contains_word(text, name) for name in gold_chain):
            count += 1
    return count


def _categorize(qtype: str, triples: tuple[tuple[str, str, str], ...],
                supporting_facts: tuple[tuple[str, int], ...],
                paragraphs: tuple[tuple[str, tuple[str, ...]], ...],
                cfg: SelectionConfig) -> Optional[str]:
    if qtype == "comparison":
        return "summary_vs_local"
    gold_chain = {s.casefold() for s, _, _ in triples}
    gold_chain |= {o.casefold() for _, _, o in triples}
    sf_titles = {t.casefold() for t, _ in supporting_facts}
    on_chain = all(t in gold_chain for t in sf_titles)
    overlap = _distractor_overlap(gold_chain, sf_titles, paragraphs)
    if on_chain and overlap <= cfg.max_local_overlap:
        return "local_path"
    if overlap >= cfg.min_distractor_overlap:
        return "distractor_path"
    return None


def parse_record(raw: dict[str, Any],
                 cfg: SelectionConfig) -> Optional[Question]:
    """Turn one raw dev-set record into a categorized Question, or
    None when any eligibility filter rejects it."""
    answer = str(raw.get("answer", "")).strip()
    if not answer or answer_token_count(answer) > MAX_ANSWER_TOKENS:
        return None
    triples = tuple((str(s), str(r), str(o))
                    for s, r, o in raw.get("evidences", []))
    if len(triples) < 2:
        return None
    sfacts = tuple((str(t), int(i))
                   for t, i in raw.get("supporting_facts", []))
    if len(sfacts) < 2:
        return None
    paragraphs = tuple((str(t), tuple(str(s) for s in sents))
                       for t, sents in raw.get("context", []))
    if not paragraphs:
        return None
    titles = {t.casefold() for t, _ in paragraphs}
    if any(t.casefold() not in titles for t, _ in sfacts):
        return None
    qtype = _qtype(str(raw.get("type", "")))
    category = _categorize(qtype, triples, sfacts, paragraphs, cfg)
    if category is None:
        return None
    return Question(
        id=str(raw["_id"]),
        text=str(raw["question"]).strip(),
        qtype=qtype,
        category=category,
        gold_answer=answer,
        evidence_triples=triples,
        supporting_facts=sfacts,
        paragraphs=paragraphs,
        aliases=tuple(str(a) for a in raw.get("answer_aliases", [])),
    )


def select_questions(dev_set: list[dict[str, Any]],
                     cfg: SelectionConfig) -> list[Question]:
    """Seeded sample of eligible questions, bucketed per category.

    Raises InsufficientPool naming the first bucket that cannot be
    filled. Output is sorted by question id.
    """
    buckets: dict[str, list[Question]] = {c: [] for c in CATEGORIES}
    seen_ids: set[str] = set()
    for raw in dev_set:
        q = parse_record(raw, cfg)
        if q is None or q.id in seen_ids:
            continue
        seen_ids.add(q.id)
        buckets[q.category].append(q)
    wanted = {
        "local_path": cfg.n_local,
        "distractor_path": cfg.n_distractor,
        "summary_vs_local": cfg.n_comparison,
    }
    rng = random.Random(cfg.seed)
    selected: list[Question] = []
    for category in CATEGORIES:
        pool = sorted(buckets[category], key=lambda q: q.id)
        need = wanted[category]
        if len(pool) < need:
            raise InsufficientPool(
                f"bucket {category}: need {need}, have {len(pool)}")
        selected.extend(rng.sample(pool, need))
    return sorted(selected, key=lambda q: q.id)


def load_dev_set(path: str | Path) -> list[dict[str, Any]]:
    with Path(path).open("r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise ValueError("dev set must be a JSON array of records")
    return data


def question_to_row(q: Question) -> dict[str, Any]:
    return {
        "id": q.id, "text": q.text, "qtype": q.qtype, "category": q.category,
        "gold_answer": q.gold_answer, "aliases": list(q.aliases),
        "evidence_triples": [list(t) for t in q.evidence_triples],
        "supporting_facts": [list(s) for s in q.supporting_facts],
        "paragraphs": [[t, list(s)] for t, s in q.paragraphs],
    }


def question_from_row(row: dict[str, Any]) -> Question:
    return Question(
        id=row["id"], text=row["text"], qtype=row["qtype"],
        category=row["category"], gold_answer=row["gold_answer"],
        aliases=tuple(row.get("aliases", [])),
        evidence_triples=tuple(tuple(t) for t in row["evidence_triples"]),
        supporting_facts=tuple((t, int(i))
                               for t, i in row["supporting_facts"]),
        paragraphs=tuple((t, tuple(s)) for t, s in row["paragraphs"]),
    )


def save_questions(questions: list[Question], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for q in questions:
            fh.write(json.dumps(question_to_row(q), ensure_ascii=False,
                                sort_keys=True))
            fh.write("\n")


def load_questions(path: str | Path) -> list[Question]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(question_from_row(json.loads(line)))
    return out
