"""Chat-completion boundary: remote OpenAI-style HTTP backend and a
deterministic scripted backend for offline runs.

Callers own transcript assembly; complete() never mutates its input.
"""
from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Protocol, Sequence

import httpx
import yaml

from .errors import (BackendFailure, BackendTimeout, RateLimited,
                     ScriptExhausted)

log = logging.getLogger(__name__)

API_KEY_ENV = "LLM_API_KEY"

ROLES = ("system", "user", "assistant", "tool")


@dataclass(frozen=True)
class ToolInvocation:
    id: str
    tool_name: str
    arguments: str  # JSON-object string; parsed and validated at dispatch


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str = ""
    tool_calls: tuple[ToolInvocation, ...] = ()
    tool_call_id: Optional[str] = None

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"bad role {self.role!r}")
        if self.tool_calls and self.role != "assistant":
            raise ValueError("tool_calls only allowed on assistant messages")
        if self.tool_call_id is not None and self.role != "tool":
            raise ValueError("tool_call_id only allowed on tool messages")


class ChatBackend(Protocol):
    def complete(self, messages: Sequence[ChatMessage],
                 tool_schema: Optional[list[dict[str, Any]]] = None
                 ) -> ChatMessage: ...


def complete(backend: ChatBackend, messages: Sequence[ChatMessage],
             tool_schema: Optional[list[dict[str, Any]]] = None
             ) -> ChatMessage:
    """One assistant turn from the backend.

    The transcript must be non-empty and start with a system message.
    The input sequence is passed through untouched.
    """
    if not messages:
        raise ValueError("messages must be non-empty")
    if messages[0].role != "system":
        raise ValueError("first message must have system role")
    reply = backend.complete(tuple(messages), tool_schema)
    if reply.role != "assistant":
        raise BackendFailure(f"backend returned role {reply.role!r}")
    if not reply.content and not reply.tool_calls:
        raise BackendFailure("backend returned an empty assistant message")
    return reply


class RateLimiter:
    """Token bucket; acquire() blocks until a request slot is free."""

    def __init__(self, requests_per_minute: float, burst: int = 1):
        if requests_per_minute <= 0:
            raise ValueError("requests_per_minute must be positive")
        self._rate = requests_per_minute / 60.0
        self._capacity = float(max(1, burst))
        self._tokens = self._capacity
        self._updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self._capacity,
                                   self._tokens + (now - self._updated) * self._rate)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            time.sleep(wait)


# --- scripted backend ------------------------------------------------------


def _normalize_turn(turn: dict[str, Any]) -> dict[str, Any]:
    if "tool" in turn:
        return {
            "when": turn.get("when"),
            "tool": str(turn["tool"]),
            "args": turn.get("args", {}),
            "id": turn.get("id"),
        }
    if "content" in turn:
        return {"when": turn.get("when"), "content": str(turn["content"])}
    raise ValueError(f"script turn needs 'tool' or 'content': {turn!r}")


class ScriptedBackend:
    """Canned assistant turns from a fixture script.

    A script is either a flat turn list or a set of sessions selected
    by substring match on the first user message. Within a session,
    turns are consumed in order; a turn with a `when` matcher is
    skipped unless the matcher occurs in the last user/tool message.
    All state is reconstructed from the transcript, so one backend
    instance serves any number of concurrent runs.
    """

    def __init__(self, spec: dict[str, Any]):
        self._sessions: list[tuple[Optional[str], list[dict[str, Any]]]] = []
        if "turns" in spec:
            self._sessions.append(
                (None, [_normalize_turn(t) for t in spec["turns"]]))
        for sess in spec.get("sessions", []):
            self._sessions.append(
                (str(sess["match"]),
                 [_normalize_turn(t) for t in sess.get("turns", [])]))
        if "default" in spec:
            self._sessions.append(
                (None,
                 [_normalize_turn(t) for t in spec["default"].get("turns", [])]))
        if not self._sessions:
            raise ValueError("script has no turns or sessions")

    def _select_session(self,
                        messages: Sequence[ChatMessage]) -> list[dict[str, Any]]:
        first_user = next((m.content for m in messages if m.role == "user"), "")
        fallback = None
        for match, turns in self._sessions:
            if match is None:
                if fallback is None:
                    fallback = turns
            elif match in first_user:
                return turns
        if fallback is not None:
            return fallback
        raise ScriptExhausted(
            f"no scripted session matches: {first_user[:80]!r}")

    def _turn_to_message(self, turn: dict[str, Any],
                         slot: int) -> ChatMessage:
        if "tool" in turn and turn["tool"] is not None and "content" not in turn:
            call = ToolInvocation(
                id=turn["id"] or f"call_{slot}",
                tool_name=turn["tool"],
                arguments=json.dumps(turn["args"], sort_keys=True),
            )
            return ChatMessage(role="assistant", tool_calls=(call,))
        return ChatMessage(role="assistant", content=turn["content"])

    def complete(self, messages: Sequence[ChatMessage],
                 tool_schema: Optional[list[dict[str, Any]]] = None
                 ) -> ChatMessage:
        turns = self._select_session(messages)
        # replay guard decisions for the assistant slots already filled
        cursor = 0
        last_visible = ""
        for msg in messages:
            if msg.role in ("user", "tool"):
                last_visible = msg.content
            elif msg.role == "assistant":
                cursor = self._advance(turns, cursor, last_visible)
                if cursor >= len(turns):
                    raise ScriptExhausted("script shorter than transcript")
                cursor += 1
        cursor = self._advance(turns, cursor, last_visible)
        if cursor >= len(turns):
            raise ScriptExhausted(
                f"script exhausted after {cursor} turns")
        return self._turn_to_message(turns[cursor], cursor)

    @staticmethod
    def _advance(turns: list[dict[str, Any]], cursor: int,
                 last_visible: str) -> int:
        while cursor < len(turns):
            when = turns[cursor].get("when")
            if when is None or when in last_visible:
                return cursor
            cursor += 1
        return cursor


def load_script(path: str | Path) -> ScriptedBackend:
    """Load a script from a YAML or JSON fixture file."""
    raw = Path(path).read_text(encoding="utf-8")
    if str(path).endswith(".json"):
        spec = json.loads(raw)
    else:
        spec = yaml.safe_load(raw)
    if not isinstance(spec, dict):
        raise ValueError(f"script file {path} must hold a mapping")
    return ScriptedBackend(spec)


# --- remote backend --------------------------------------------------------


def _wire_message(msg: ChatMessage) -> dict[str, Any]:
    out: dict[str, Any] = {"role": msg.role, "content": msg.content}
    if msg.tool_calls:
        out["tool_calls"] = [
            {
                "id": call.id,
                "type": "function",
                "function": {"name": call.tool_name,
                             "arguments": call.arguments},
            }
            for call in msg.tool_calls
        ]
    if msg.tool_call_id is not None:
        out["tool_call_id"] = msg.tool_call_id
    return out


class RemoteBackend:
    """OpenAI-compatible chat-completions client.

    Temperature is 0 unless overridden; transient failures (timeouts,
    429, 5xx) retry with exponential backoff before surfacing as
    BackendTimeout/RateLimited/BackendFailure.
    """

    def __init__(self, base_url: str, model: str,
                 api_key: Optional[str] = None, temperature: float = 0.0,
                 timeout: float = 120.0, max_retries: int = 3,
                 backoff: float = 1.0,
                 rate_limiter: Optional[RateLimiter] = None):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(
            API_KEY_ENV, "")
        self.temperature = temperature
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.rate_limiter = rate_limiter

    def _parse(self, payload: dict[str, Any]) -> ChatMessage:
        message = payload["choices"][0]["message"]
        calls = []
        for i, call in enumerate(message.get("tool_calls") or []):
            fn = call.get("function", {})
            args = fn.get("arguments", "{}")
            if not isinstance(args, str):
                args = json.dumps(args, sort_keys=True)
            calls.append(ToolInvocation(
                id=str(call.get("id") or f"call_{i}"),
                tool_name=str(fn.get("name", "")),
                arguments=args,
            ))
        return ChatMessage(role="assistant",
                           content=message.get("content") or "",
                           tool_calls=tuple(calls))

    def complete(self, messages: Sequence[ChatMessage],
                 tool_schema: Optional[list[dict[str, Any]]] = None
                 ) -> ChatMessage:
        body: dict[str, Any] = {
            "model": self.model,
            "messages": [_wire_message(m) for m in messages],
            "temperature": self.temperature,
        }
        if tool_schema:
            body["tools"] = tool_schema
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception = BackendFailure("no attempt made")
        rate_limited = False
        timed_out = False
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            if self.rate_limiter is not None:
                self.rate_limiter.acquire()
            try:
                resp = httpx.post(f"{self.base_url}/chat/completions",
                                  json=body, headers=headers,
                                  timeout=self.timeout)
            except httpx.TimeoutException as exc:
                timed_out = True
                last_error = exc
                log.warning("chat request timed out (attempt %d)", attempt + 1)
                continue
            except httpx.TransportError as exc:
                last_error = exc
                log.warning("chat transport error (attempt %d): %s",
                            attempt + 1, exc)
                continue
            if resp.status_code == 429:
                rate_limited = True
                last_error = BackendFailure("HTTP 429")
                continue
            if resp.status_code >= 500:
                last_error = BackendFailure(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise BackendFailure(
                    f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return self._parse(resp.json())
            except (KeyError, IndexError, ValueError) as exc:
                raise BackendFailure(f"malformed response: {exc}") from exc
        if rate_limited:
            raise RateLimited(f"gave up after {self.max_retries + 1} attempts")
        if timed_out:
            raise BackendTimeout(
                f"gave up after {self.max_retries + 1} attempts")
        raise BackendFailure(str(last_error))
