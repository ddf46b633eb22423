"""Dev-set parsing, categorization, and seeded question selection."""
from __future__ import annotations

import json

import pytest

from kgablate.dataset import (Question, SelectionConfig, load_dev_set,
                              load_questions, parse_record,
                              question_from_row, question_to_row,
                              save_questions, select_questions)
from kgablate.errors import InsufficientPool

CFG = SelectionConfig(n_local=1, n_distractor=1, n_comparison=1)


def bridge_record(qid="q1", **over):
    rec = {
        "_id": qid,
        "type": "compositional",
        "question": "Where was the director of Film X born?",
        "answer": "Town Y",
        "evidences": [
            ["Film X", "director", "Person P"],
            ["Person P", "place of birth", "Town Y"],
        ],
        "supporting_facts": [["Film X", 0], ["Person P", 0]],
        "context": [
            ["Film X", ["Film X was directed by Person P."]],
            ["Person P", ["Person P was born in Town Y."]],
            ["Other Place", ["Other Place is a coastal village."]],
        ],
    }
    rec.update(over)
    return rec


def comparison_record(qid="q2", **over):
    rec = {
        "_id": qid,
        "type": "comparison",
        "question": "Which came first, Film X or Film Z?",
        "answer": "Film X",
        "evidences": [
            ["Film X", "publication date", "1950"],
            ["Film Z", "publication date", "1960"],
        ],
        "supporting_facts": [["Film X", 0], ["Film Z", 0]],
        "context": [
            ["Film X", ["Film X premiered in 1950."]],
            ["Film Z", ["Film Z premiered in 1960."]],
        ],
    }
    rec.update(over)
    return rec


def test_parse_clean_bridge_is_local_path():
    q = parse_record(bridge_record(), CFG)
    assert q is not None
    assert q.qtype == "bridge"
    assert q.category == "local_path"
    assert q.gold_answer == "Town Y"


def test_parse_comparison_category():
    q = parse_record(comparison_record(), CFG)
    assert q is not None
    assert q.qtype == "comparison"
    assert q.category == "summary_vs_local"


def test_distractor_mention_flips_category():
    rec = bridge_record(context=[
        ["Film X", ["Film X was directed by Person P."]],
        ["Person P", ["Person P was born in Town Y."]],
        ["Other Place", ["Other Place honored Person P in 1990."]],
    ])
    q = parse_record(rec, CFG)
    assert q is not None
    assert q.category == "distractor_path"


def test_distractor_match_is_whole_word():
    # "Person Pe" must not count as a mention of "Person P"
    rec = bridge_record(context=[
        ["Film X", ["Film X was directed by Person P."]],
        ["Person P", ["Person P was born in Town Y."]],
        ["Other Place", ["Other Place knew Person Pe well."]],
    ])
    q = parse_record(rec, CFG)
    assert q is not None
    assert q.category == "local_path"


def test_off_chain_supporting_fact_without_overlap_is_rejected():
    rec = bridge_record(
        supporting_facts=[["Film X", 0], ["Other Place", 0]],
        context=[
            ["Film X", ["Film X was directed by Person P."]],
            ["Other Place", ["Other Place is a coastal village."]],
            ["Quiet Town", ["Quiet Town has no cinema."]],
        ])
    assert parse_record(rec, CFG) is None


@pytest.mark.parametrize("over", [
    {"answer": ""},
    {"answer": "one two three four five six seven eight nine ten eleven"},
    {"evidences": [["Film X", "director", "Person P"]]},
    {"supporting_facts": [["Film X", 0]]},
    {"context": []},
    {"supporting_facts": [["Missing Title", 0], ["Film X", 0]]},
])
def test_eligibility_filters(over):
    assert parse_record(bridge_record(**over), CFG) is None


def test_select_is_seeded_and_sorted():
    dev = [bridge_record(qid=f"b{i}") for i in range(6)]
    dev += [comparison_record(qid=f"c{i}") for i in range(4)]
    cfg = SelectionConfig(n_local=3, n_distractor=0, n_comparison=2, seed=5)
    first = select_questions(dev, cfg)
    assert [q.id for q in first] == sorted(q.id for q in first)
    assert len(first) == 5
    assert select_questions(dev, cfg) == first
    other = select_questions(dev, SelectionConfig(
        n_local=3, n_distractor=0, n_comparison=2, seed=6))
    assert {q.id for q in other} <= {f"b{i}" for i in range(6)} | {
        f"c{i}" for i in range(4)}


def test_select_reports_short_bucket():
    dev = [bridge_record(qid="b0")]
    cfg = SelectionConfig(n_local=2, n_distractor=0, n_comparison=0)
    with pytest.raises(InsufficientPool, match="local_path"):
        select_questions(dev, cfg)


def test_question_round_trip(tmp_path):
    qs = [parse_record(bridge_record(), CFG),
          parse_record(comparison_record(), CFG)]
    assert all(q is not None for q in qs)
    row = question_to_row(qs[0])
    assert question_from_row(row) == qs[0]
    path = tmp_path / "questions.jsonl"
    save_questions(qs, path)
    assert load_questions(path) == qs


def test_load_dev_set_accepts_json_array(tmp_path):
    path = tmp_path / "dev.json"
    path.write_text(json.dumps([bridge_record()]))
    recs = load_dev_set(path)
    assert len(recs) == 1 and recs[0]["_id"] == "q1"
