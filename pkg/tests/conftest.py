"""Shared fixtures: a small hand-built graph and an in-memory KB."""
from __future__ import annotations

from pathlib import Path

import pytest

from kgablate.dataset import Question
from kgablate.embedding import HashedBowEmbedder
from kgablate.graph import (Community, Entity, KnowledgeGraph, Relationship,
                            TextUnit, make_graph)
from kgablate.kb import Kb
from kgablate.vector_index import VectorIndex

FIXTURES = Path(__file__).parent / "fixtures"

EMBED_DIM = 256


def _entity(eid: str, name: str, tus: frozenset[str],
            community: str) -> Entity:
    return Entity(id=eid, name=name, entity_type="entity",
                  description=f"{name}: test entity.", gold=True,
                  textunit_ids=tus, community_id=community)


def build_mini_graph() -> KnowledgeGraph:
    """Six entities, five relationships, four text units, two
    communities; two disconnected geography clusters."""
    entities = {
        "e1": _entity("e1", "Paris", frozenset({"t1", "t2"}), "c0"),
        "e2": _entity("e2", "France", frozenset({"t1"}), "c0"),
        "e3": _entity("e3", "Louvre", frozenset({"t2"}), "c0"),
        "e4": _entity("e4", "Berlin", frozenset({"t3"}), "c1"),
        "e5": _entity("e5", "Germany", frozenset({"t3", "t4"}), "c1"),
        "e6": _entity("e6", "Rhine", frozenset({"t4"}), "c1"),
    }
    relationships = [
        Relationship(src="e1", dst="e2", label="capital_of",
                     description="", gold=True),
        Relationship(src="e3", dst="e1", label="located_in",
                     description="", gold=True),
        Relationship(src="e4", dst="e5", label="capital_of",
                     description="", gold=True),
        Relationship(src="e6", dst="e5", label="flows_through",
                     description="", gold=True),
        Relationship(src="e2", dst="e5", label="borders",
                     description="", gold=True),
    ]
    textunits = {
        "t1": TextUnit(id="t1", text="Paris is the capital of France.",
                       paragraph_id="p1", title="Paris",
                       entity_ids=frozenset({"e1", "e2"})),
        "t2": TextUnit(id="t2", text="The Louvre stands in Paris.",
                       paragraph_id="p2", title="Louvre",
                       entity_ids=frozenset({"e3", "e1"})),
        "t3": TextUnit(id="t3", text="Berlin is the capital of Germany.",
                       paragraph_id="p3", title="Berlin",
                       entity_ids=frozenset({"e4", "e5"})),
        "t4": TextUnit(id="t4", text="The Rhine flows through Germany.",
                       paragraph_id="p4", title="Rhine",
                       entity_ids=frozenset({"e6", "e5"})),
    }
    communities = {
        "c0": Community(id="c0", member_entity_ids=frozenset({"e1", "e2", "e3"}),
                        summary="Community of 3 entities: France, Louvre, Paris."),
        "c1": Community(id="c1", member_entity_ids=frozenset({"e4", "e5", "e6"}),
                        summary="Community of 3 entities: Berlin, Germany, Rhine."),
    }
    return make_graph(entities, relationships, textunits, communities)


def build_kb_for(graph: KnowledgeGraph,
                 questions: tuple[Question, ...] = ()) -> Kb:
    embedder = HashedBowEmbedder(dim=EMBED_DIM, seed=0)
    ent_index = VectorIndex(dim=EMBED_DIM, kind="entity")
    for eid in sorted(graph.entities):
        ent = graph.entities[eid]
        ent_index.add(eid, embedder.embed(f"{ent.name}. {ent.description}"))
    tu_index = VectorIndex(dim=EMBED_DIM, kind="textunit")
    for tid in sorted(graph.textunits):
        tu_index.add(tid, embedder.embed(graph.textunits[tid].text))
    com_index = VectorIndex(dim=EMBED_DIM, kind="community")
    for cid in sorted(graph.communities):
        com_index.add(cid, embedder.embed(graph.communities[cid].summary))
    return Kb(graph=graph, questions=list(questions),
              entity_index=ent_index, textunit_index=tu_index,
              community_index=com_index, embedder=embedder,
              meta={"embedder": {"kind": "hashed_bow", "dim": EMBED_DIM,
                                "seed": 0}})


def make_question(qid: str = "q1",
                  text: str = "What is the capital of France?",
                  answer: str = "Paris",
                  aliases: tuple[str, ...] = ()) -> Question:
    return Question(
        id=qid, text=text, qtype="bridge", category="local_path",
        gold_answer=answer,
        evidence_triples=(("France", "capital", answer),
                          (answer, "country", "France")),
        supporting_facts=(("France", 0), (answer, 0)),
        paragraphs=(("France", ("France is a country.",)),
                    (answer, (f"{answer} is a city.",))),
        aliases=aliases)


@pytest.fixture
def mini_graph() -> KnowledgeGraph:
    return build_mini_graph()


@pytest.fixture
def mini_kb(mini_graph) -> Kb:
    return build_kb_for(mini_graph, (make_question(),))


# --- full scripted pipeline over the bundled fixture world -----------------

SYSTEM_SCRIPTS = {
    "agentic": "agent_tools.yaml",
    "visited_only": "agent_tools.yaml",
    "evidence_first": "evidence_first.yaml",
    "graphrag": "graphrag.yaml",
    "rag": "rag.yaml",
    "llm_only": "llm_only.yaml",
}

ABLATED_SYSTEMS = ("agentic", "visited_only", "evidence_first", "graphrag")

REPORT_FILES = ("report.md", "baseline.csv", "interventions.csv",
                "details.csv")


def cli_invoke(args: list[str]):
    from click.testing import CliRunner

    from kgablate.cli import main as cli_main
    return CliRunner().invoke(cli_main, args)


def run_full_pipeline(root: Path) -> dict:
    """Drive every CLI stage against the fixture dev set with the
    scripted backend. Returns the stage directories plus each stage's
    captured stdout keyed by (command, system)."""
    kb, traces, results, report = (root / name for name in
                                   ("kb", "traces", "results", "report"))
    scripts = FIXTURES / "scripts"
    stages: list[tuple[tuple[str, ...], list[str]]] = [(
        ("build-kb", ""),
        ["build-kb", "--dev-set", str(FIXTURES / "dev_set.json"),
         "--out", str(kb), "--config", str(FIXTURES / "e2e_config.toml")])]
    for system, script in SYSTEM_SCRIPTS.items():
        stages.append((
            ("run-baselines", system),
            ["run-baselines", "--kb", str(kb), "--system", system,
             "--traces", str(traces), "--results", str(results),
             "--backend", "scripted", "--script", str(scripts / script),
             "--jobs", "1", "--seed", "0"]))
    for system in ABLATED_SYSTEMS:
        stages.append((
            ("run-ablations", system),
            ["run-ablations", "--kb", str(kb), "--system", system,
             "--condition", "all", "--traces", str(traces),
             "--out", str(results), "--seed", "0", "--replicates", "3",
             "--backend", "scripted",
             "--script", str(scripts / SYSTEM_SCRIPTS[system]),
             "--jobs", "1"]))
    stages.append((
        ("report", ""),
        ["report", "--results", str(results), "--baseline-traces",
         str(traces), "--out", str(report), "--format", "both",
         "--seed", "0"]))
    outputs: dict[tuple[str, str], str] = {}
    for key, argv in stages:
        outcome = cli_invoke(argv)
        assert outcome.exit_code == 0, (
            f"stage {argv[0]} exited {outcome.exit_code}:\n{outcome.output}")
        outputs[key] = outcome.output
    return {"root": root, "kb": kb, "traces": traces, "results": results,
            "report": report, "outputs": outputs}


@pytest.fixture(scope="session")
def pipeline_run(tmp_path_factory) -> dict:
    return run_full_pipeline(tmp_path_factory.mktemp("pipeline"))
