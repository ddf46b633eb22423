"""Chat transport layer: message validation, scripted replays, and
the retrying remote client."""
from __future__ import annotations

import json

import httpx
import pytest

from kgablate.errors import (BackendFailure, RateLimited, ScriptExhausted)
from kgablate.gateway import (ChatMessage, RemoteBackend, ScriptedBackend,
                              ToolInvocation, complete, load_script)


def sys_user(text="hello"):
    return [ChatMessage(role="system", content="sys"),
            ChatMessage(role="user", content=text)]


# --- message validation ----------------------------------------------------


def test_bad_role_rejected():
    with pytest.raises(ValueError):
        ChatMessage(role="robot", content="x")


def test_tool_calls_only_on_assistant():
    call = ToolInvocation(id="1", tool_name="t", arguments="{}")
    with pytest.raises(ValueError):
        ChatMessage(role="user", tool_calls=(call,))
    ChatMessage(role="assistant", tool_calls=(call,))


def test_tool_call_id_only_on_tool():
    with pytest.raises(ValueError):
        ChatMessage(role="user", content="x", tool_call_id="1")
    ChatMessage(role="tool", content="x", tool_call_id="1")


def test_complete_preconditions():
    backend = ScriptedBackend({"turns": [{"content": "hi"}]})
    with pytest.raises(ValueError):
        complete(backend, [])
    with pytest.raises(ValueError):
        complete(backend, [ChatMessage(role="user", content="x")])


def test_complete_rejects_empty_reply():
    class Empty:
        def complete(self, messages, tool_schema=None):
            return ChatMessage(role="assistant", content="")

    with pytest.raises(BackendFailure):
        complete(Empty(), sys_user())


# --- scripted backend ------------------------------------------------------


def test_flat_turns_consumed_in_order():
    backend = ScriptedBackend({"turns": [
        {"content": "first"},
        {"tool": "search_entities", "args": {"query": "x"}},
        {"content": "done"},
    ]})
    msgs = sys_user()
    r1 = complete(backend, msgs)
    assert r1.content == "first"
    msgs.append(r1)
    msgs.append(ChatMessage(role="user", content="go on"))
    r2 = complete(backend, msgs)
    assert r2.tool_calls[0].tool_name == "search_entities"
    assert json.loads(r2.tool_calls[0].arguments) == {"query": "x"}
    msgs.append(r2)
    msgs.append(ChatMessage(role="tool", content="result",
                            tool_call_id=r2.tool_calls[0].id))
    assert complete(backend, msgs).content == "done"


def test_stateless_same_transcript_same_reply():
    backend = ScriptedBackend({"turns": [{"content": "a"}, {"content": "b"}]})
    msgs = sys_user()
    assert complete(backend, msgs).content == "a"
    assert complete(backend, msgs).content == "a"


def test_exhaustion_raises():
    backend = ScriptedBackend({"turns": [{"content": "only"}]})
    msgs = sys_user()
    msgs.append(complete(backend, msgs))
    msgs.append(ChatMessage(role="user", content="more"))
    with pytest.raises(ScriptExhausted):
        complete(backend, msgs)


def test_when_guard_skips_unmatched_turns():
    backend = ScriptedBackend({"turns": [
        {"tool": "read_textunit", "args": {"textunit_id": "t1"}},
        {"when": "not readable", "content": "blocked path"},
        {"when": "capital", "content": "open path"},
    ]})
    msgs = sys_user()
    reply = complete(backend, msgs)
    msgs.append(reply)
    msgs.append(ChatMessage(role="tool",
                            content="Paris is the capital of France.",
                            tool_call_id=reply.tool_calls[0].id))
    assert complete(backend, msgs).content == "open path"
    # same script, other branch
    msgs2 = sys_user()
    reply2 = complete(backend, msgs2)
    msgs2.append(reply2)
    msgs2.append(ChatMessage(role="tool",
                             content="error: text unit t1 is not readable",
                             tool_call_id=reply2.tool_calls[0].id))
    assert complete(backend, msgs2).content == "blocked path"


def test_sessions_matched_on_first_user_message():
    backend = ScriptedBackend({"sessions": [
        {"match": "capital of France", "turns": [{"content": "Paris"}]},
        {"match": "capital of Germany", "turns": [{"content": "Berlin"}]},
    ], "default": {"turns": [{"content": "Unknown"}]}})
    assert complete(backend, sys_user(
        "What is the capital of France?")).content == "Paris"
    assert complete(backend, sys_user(
        "What is the capital of Germany?")).content == "Berlin"
    assert complete(backend, sys_user("something else")).content == "Unknown"


def test_no_matching_session_raises():
    backend = ScriptedBackend({"sessions": [
        {"match": "France", "turns": [{"content": "Paris"}]},
    ]})
    with pytest.raises(ScriptExhausted):
        complete(backend, sys_user("no match here"))


def test_invalid_turn_rejected():
    with pytest.raises(ValueError):
        ScriptedBackend({"turns": [{"neither": 1}]})
    with pytest.raises(ValueError):
        ScriptedBackend({})


def test_load_script_yaml_and_json(tmp_path):
    yml = tmp_path / "s.yaml"
    yml.write_text("turns:\n  - content: from yaml\n")
    assert complete(load_script(yml), sys_user()).content == "from yaml"
    jsn = tmp_path / "s.json"
    jsn.write_text(json.dumps({"turns": [{"content": "from json"}]}))
    assert complete(load_script(jsn), sys_user()).content == "from json"


# --- remote backend --------------------------------------------------------


def ok_payload(content="hi", tool_calls=None):
    message = {"content": content}
    if tool_calls:
        message["tool_calls"] = tool_calls
    return {"choices": [{"message": message}]}


class FakePost:
    """Monkeypatched httpx.post returning queued responses."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def __call__(self, url, json=None, headers=None, timeout=None):
        self.requests.append({"url": url, "json": json, "headers": headers})
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        status, payload = item
        return httpx.Response(status_code=status, json=payload)


def make_backend(**over):
    args = dict(base_url="http://llm.test/v1", model="m", api_key="k",
                max_retries=2, backoff=0.0)
    args.update(over)
    return RemoteBackend(**args)


def test_remote_success_and_wire_format(monkeypatch):
    fake = FakePost([(200, ok_payload("answer"))])
    monkeypatch.setattr(httpx, "post", fake)
    reply = complete(make_backend(), sys_user("q"))
    assert reply.content == "answer"
    req = fake.requests[0]
    assert req["url"].endswith("/chat/completions")
    assert req["headers"]["Authorization"] == "Bearer k"
    assert req["json"]["temperature"] == 0.0
    assert [m["role"] for m in req["json"]["messages"]] == ["system", "user"]


def test_remote_parses_tool_calls(monkeypatch):
    payload = ok_payload(None, tool_calls=[{
        "id": "abc",
        "type": "function",
        "function": {"name": "search_entities",
                     "arguments": "{\"query\": \"x\"}"},
    }])
    monkeypatch.setattr(httpx, "post", FakePost([(200, payload)]))
    reply = complete(make_backend(), sys_user())
    assert reply.tool_calls[0].tool_name == "search_entities"
    assert reply.tool_calls[0].id == "abc"


def test_remote_retries_transient_500(monkeypatch):
    fake = FakePost([(500, {}), (200, ok_payload("ok"))])
    monkeypatch.setattr(httpx, "post", fake)
    assert complete(make_backend(), sys_user()).content == "ok"
    assert len(fake.requests) == 2


def test_remote_rate_limit_exhausted(monkeypatch):
    fake = FakePost([(429, {})] * 3)
    monkeypatch.setattr(httpx, "post", fake)
    with pytest.raises(RateLimited):
        make_backend().complete(sys_user())
    assert len(fake.requests) == 3  # initial + 2 retries


def test_remote_client_error_no_retry(monkeypatch):
    fake = FakePost([(400, {"error": "bad"})])
    monkeypatch.setattr(httpx, "post", fake)
    with pytest.raises(BackendFailure):
        make_backend().complete(sys_user())
    assert len(fake.requests) == 1


def test_remote_malformed_payload(monkeypatch):
    monkeypatch.setattr(httpx, "post", FakePost([(200, {"weird": 1})]))
    with pytest.raises(BackendFailure):
        make_backend().complete(sys_user())
