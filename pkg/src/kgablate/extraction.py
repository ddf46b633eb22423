"""Pluggable entity extraction for distractor enrichment."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Protocol

from .errors import ExtractorFailure

# Proper-noun span: capitalized word, optionally continued by more
# capitalized/numeric words or lowercase connectors.
_NAME = (r"[A-Z][\w'.-]*"
         r"(?:\s+(?:of|the|de|la|van|der|von)\s+[A-Z][\w'.-]*"
         r"|\s+[A-Z0-9][\w'.-]*)*")

# (pattern, relation label); checked by hand against the fixtures.
_RULES = [
    (rf"({_NAME}) was born in ({_NAME})", "born_in"),
    (rf"({_NAME}) was directed by ({_NAME})", "directed_by"),
    (rf"({_NAME}) directed ({_NAME})", "directed"),
    (rf"({_NAME}) was founded by ({_NAME})", "founded_by"),
    (rf"({_NAME}) founded ({_NAME})", "founded"),
    (rf"({_NAME}) is located in ({_NAME})", "located_in"),
    (rf"({_NAME}) is the capital of ({_NAME})", "capital_of"),
    (rf"({_NAME}) married ({_NAME})", "spouse"),
    (rf"({_NAME}) starred in ({_NAME})", "starred_in"),
    (rf"({_NAME}) wrote ({_NAME})", "wrote"),
    (rf"({_NAME}) died in ({_NAME})", "died_in"),
    (rf"({_NAME}) worked (?:at|for) ({_NAME})", "worked_at"),
]


@dataclass
class ExtractionResult:
    entities: list[str] = field(default_factory=list)
    # (subject, label, object) over surface names
    triples: list[tuple[str, str, str]] = field(default_factory=list)


class EntityExtractor(Protocol):
    extractor_id: str

    def extract(self, text: str) -> ExtractionResult: ...


class RuleBasedExtractor:
    """Deterministic pattern extractor; the offline test path."""

    extractor_id = "rules"

    def __init__(self) -> None:
        self._compiled = [(re.compile(pat), label) for pat, label in _RULES]

    def extract(self, text: str) -> ExtractionResult:
        result = ExtractionResult()
        seen: set[str] = set()
        for pattern, label in self._compiled:
            for match in pattern.finditer(text):
                subj, obj = match.group(1).strip(), match.group(2).strip()
                for name in (subj, obj):
                    if name.casefold() not in seen:
                        seen.add(name.casefold())
                        result.entities.append(name)
                result.triples.append((subj, label, obj))
        return result


class LlmExtractor:
    """Extraction via a chat backend; response must be a JSON object
    with "entities" and "triples" keys."""

    extractor_id = "llm"

    def __init__(self, backend, prompt_template: str | None = None):
        if prompt_template is None:
            from .kb import load_prompt
            prompt_template = load_prompt("extract")
        self._backend = backend
        self._template = prompt_template

    def extract(self, text: str) -> ExtractionResult:
        from .gateway import ChatMessage, complete
        messages = [
            ChatMessage(role="system",
                        content="You extract entities and relations."),
            ChatMessage(role="user",
                        content=self._template.format(text=text)),
        ]
        reply = complete(self._backend, messages)
        raw = reply.content or ""
        start, end = raw.find("{"), raw.rfind("}")
        if start < 0 or end <= start:
            raise ValueError(f"no JSON object in extractor reply: {raw!r}")
        data = json.loads(raw[start:end + 1])
        result = ExtractionResult()
        for name in data.get("entities", []):
            result.entities.append(str(name))
        for triple in data.get("triples", []):
            s, r, o = triple
            result.triples.append((str(s), str(r), str(o)))
        return result


def extract_or_fail(extractor: EntityExtractor, textunit_id: str,
                    text: str) -> ExtractionResult:
    try:
        return extractor.extract(text)
    except Exception as exc:
        raise ExtractorFailure(textunit_id, str(exc)) from exc
