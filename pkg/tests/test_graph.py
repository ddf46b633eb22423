"""Visibility-mediated graph reads and persistence."""
from __future__ import annotations

import pytest

from kgablate.errors import TextBlocked, UnknownEntity, UnknownTextUnit
from kgablate.graph import (EMPTY_VIEW, MASKED, Community, Entity,
                            GraphView, Relationship, TextUnit,
                            community_visible, entity_details, make_graph,
                            neighbors, stats, textunit_content)
from kgablate.graph_io import load_graph, save_graph

from conftest import build_mini_graph


def test_stats_counts(mini_graph):
    assert stats(mini_graph) == (6, 5, 4, 2)


def test_view_sets_must_be_disjoint():
    with pytest.raises(ValueError):
        GraphView(removed_entities=frozenset({"e1"}),
                  text_blocked_entities=frozenset({"e1"}))
    with pytest.raises(ValueError):
        GraphView(text_blocked_entities=frozenset({"e1"}),
                  metadata_blocked_entities=frozenset({"e1"}))


def test_neighbors_sorted_and_complete(mini_graph):
    got = neighbors(mini_graph, EMPTY_VIEW, "e5")
    pairs = [(other, rel.label) for rel, other in got]
    assert pairs == sorted(pairs)
    assert {other for _, other in got} == {"e2", "e4", "e6"}


def test_neighbors_removed_endpoint_filtered(mini_graph):
    view = GraphView(removed_entities=frozenset({"e4"}))
    got = neighbors(mini_graph, view, "e5")
    assert {other for _, other in got} == {"e2", "e6"}


def test_unknown_and_removed_indistinguishable(mini_graph):
    view = GraphView(removed_entities=frozenset({"e1"}))
    with pytest.raises(UnknownEntity):
        neighbors(mini_graph, view, "e1")
    with pytest.raises(UnknownEntity):
        neighbors(mini_graph, view, "no-such-entity")
    with pytest.raises(UnknownEntity):
        entity_details(mini_graph, view, "e1")


def test_entity_details_masking_levels(mini_graph):
    plain = entity_details(mini_graph, EMPTY_VIEW, "e1")
    assert not plain.masked
    assert plain.name == "Paris"
    assert set(plain.textunit_ids) == {"t1", "t2"}

    text_blocked = GraphView(text_blocked_entities=frozenset({"e1"}))
    partial = entity_details(mini_graph, text_blocked, "e1")
    assert not partial.masked
    assert partial.name == "Paris"
    assert partial.textunit_ids == ()

    masked = GraphView(metadata_blocked_entities=frozenset({"e1"}))
    hidden = entity_details(mini_graph, masked, "e1")
    assert hidden.masked
    assert hidden.name == ""
    assert hidden.description == ""


def test_textunit_readability_rule(mini_graph):
    # readable while at least one linked entity is unblocked
    one_side = GraphView(text_blocked_entities=frozenset({"e1"}))
    assert "Paris" in textunit_content(mini_graph, one_side, "t1")
    both = GraphView(text_blocked_entities=frozenset({"e1", "e2"}))
    with pytest.raises(TextBlocked):
        textunit_content(mini_graph, both, "t1")
    mixed = GraphView(removed_entities=frozenset({"e1"}),
                      metadata_blocked_entities=frozenset({"e2"}))
    with pytest.raises(TextBlocked):
        textunit_content(mini_graph, mixed, "t1")
    with pytest.raises(UnknownTextUnit):
        textunit_content(mini_graph, EMPTY_VIEW, "t99")


def test_community_visibility(mini_graph):
    assert community_visible(mini_graph, EMPTY_VIEW, "c0")
    masked = GraphView(metadata_blocked_entities=frozenset({"e2"}))
    assert not community_visible(mini_graph, masked, "c0")
    assert community_visible(mini_graph, masked, "c1")
    removed = GraphView(removed_entities=frozenset({"e2"}))
    assert community_visible(mini_graph, removed, "c0")
    assert not community_visible(mini_graph, EMPTY_VIEW, "c99")


def test_make_graph_rejects_dangling_relationship():
    entities = {"e1": Entity(id="e1", name="A", entity_type="entity",
                             description="A: x.", gold=True)}
    rels = [Relationship(src="e1", dst="missing", label="r",
                        description="", gold=True)]
    with pytest.raises(ValueError):
        make_graph(entities, rels, {}, {})


def test_make_graph_rejects_one_way_textunit_link():
    entities = {
        "e1": Entity(id="e1", name="A", entity_type="entity",
                     description="A: x.", gold=True,
                     textunit_ids=frozenset({"t1"})),
    }
    tus = {"t1": TextUnit(id="t1", text="x", paragraph_id="p",
                          title="A", entity_ids=frozenset())}
    with pytest.raises(ValueError):
        make_graph(entities, [], tus, {})


def test_make_graph_rejects_overlapping_communities():
    entities = {
        "e1": Entity(id="e1", name="A", entity_type="entity",
                     description="A: x.", gold=True, community_id="c0"),
    }
    communities = {
        "c0": Community(id="c0", member_entity_ids=frozenset({"e1"})),
        "c1": Community(id="c1", member_entity_ids=frozenset({"e1"})),
    }
    with pytest.raises(ValueError):
        make_graph(entities, [], {}, communities)


def test_save_load_save_byte_identical(tmp_path):
    graph = build_mini_graph()
    first = tmp_path / "a"
    second = tmp_path / "b"
    save_graph(graph, first, meta={"seed": 0})
    loaded = load_graph(first)
    save_graph(loaded, second, meta={"seed": 0})
    for name in ("entities.jsonl", "relationships.jsonl",
                 "textunits.jsonl", "communities.jsonl", "meta.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_loaded_graph_equal_reads(tmp_path, mini_graph):
    save_graph(mini_graph, tmp_path, meta=None)
    loaded = load_graph(tmp_path)
    assert stats(loaded) == stats(mini_graph)
    assert loaded.relationship_ids() == mini_graph.relationship_ids()
    for eid in mini_graph.entities:
        a = neighbors(mini_graph, EMPTY_VIEW, eid)
        b = neighbors(loaded, EMPTY_VIEW, eid)
        assert [(r.rel_id, o) for r, o in a] == [(r.rel_id, o) for r, o in b]
