"""Normalized exact-match answer scoring.

Matching is equality on normalized strings against the gold answer or
any alias. Containment earns no credit: "Paris, France" does not match
gold "Paris".
"""
from __future__ import annotations

import re
import string
from typing import Iterable

_ARTICLES = re.compile(r"\b(a|an|the)\b", re.UNICODE)
_PUNCT = str.maketrans("", "", string.punctuation)


def normalize_answer(text: str) -> str:
    """Lowercase, drop punctuation and articles, collapse whitespace."""
    text = text.lower()
    text = text.translate(_PUNCT)
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


def answer_token_count(text: str) -> int:
    return len(normalize_answer(text).split())


def score_answer(predicted: str, gold: str,
                 aliases: Iterable[str] = ()) -> bool:
    """True iff the normalized prediction equals the normalized gold
    answer or any normalized alias."""
    pred = normalize_answer(predicted)
    if pred == normalize_answer(gold):
        return True
    return any(pred == normalize_answer(a) for a in aliases)


def answers_differ(a: str, b: str) -> bool:
    """Output-change comparison used by the ablation studies."""
    return normalize_answer(a) != normalize_answer(b)
