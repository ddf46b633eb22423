"""Stage functions behind the CLI subcommands. Each stage reads its
inputs from disk and writes its outputs to disk, so stages can be
re-run independently and interventions reuse frozen baseline traces.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Optional

from .ablation import Condition, run_intervention
from .agent import (AgentPolicy, SYSTEM_POLICIES, replay_trace,
                    load_trace_bundle, run_question, save_trace,
                    trace_path)
from .baselines import BaselineConfig, run_graphrag, run_llm_only, run_rag
from .builder import (build_corpus, chunk, dataset_sha256,
                      detect_communities, enrich_from_distractors,
                      finalize, init_graph_from_evidence,
                      summarize_communities)
from .dataset import (SelectionConfig, load_dev_set, save_questions,
                      select_questions)
from .embedding import HashedBowEmbedder
from .errors import ConfigError
from .evaluation import (BASELINE_CONDITION, Footprint, MetricCell,
                         RunResult, apply_llm_filter, baseline_cell,
                         compute_metrics, footprint_from_trace,
                         footprint_stats, load_results, make_result,
                         results_path, save_results)
from .extraction import LlmExtractor, RuleBasedExtractor
from .gateway import ChatBackend, load_script
from .graph import EMPTY_VIEW, stats
from .graph_io import save_graph
from .kb import Kb, QUESTIONS_FILE, load_kb, load_prompt
from .reporting import (GRAPH_SYSTEMS, SYSTEM_ORDER, detail_rows,
                        emit_reports, render_baseline_cells,
                        render_intervention_cells)
from .vector_index import VectorIndex, save_index

log = logging.getLogger(__name__)

EMBED_DIM = 256

ALL_SYSTEMS = SYSTEM_ORDER


def make_backend(kind: str, script: Optional[str], base_url: Optional[str],
                 model: Optional[str]) -> ChatBackend:
    if kind == "scripted":
        if script is None:
            raise ConfigError("backend.script: required for the scripted "
                              "backend")
        return load_script(script)
    if kind == "remote":
        from .gateway import RemoteBackend
        if base_url is None or model is None:
            raise ConfigError("backend.base_url and backend.model: "
                              "required for the remote backend")
        return RemoteBackend(base_url=base_url, model=model)
    raise ConfigError(f"backend.type: unknown backend {kind!r}")


# --- build-kb --------------------------------------------------------------


def build_kb_stage(dev_set: str | Path, out_dir: str | Path, seed: int,
                   max_tokens: int, extractor: str = "rules",
                   backend: Optional[ChatBackend] = None,
                   selection: Optional[SelectionConfig] = None,
                   summarizer: str = "template") -> dict[str, Any]:
    """Select questions, build the graph, embed, and persist a KB."""
    raw_bytes = Path(dev_set).read_bytes()
    records = load_dev_set(dev_set)
    if selection is None:
        selection = SelectionConfig(seed=seed)
    questions = select_questions(records, selection)
    corpus = build_corpus(questions)
    textunits = chunk(corpus, max_tokens)
    draft = init_graph_from_evidence(questions, textunits)

    if extractor == "rules":
        ext = RuleBasedExtractor()
    elif extractor == "llm":
        if backend is None:
            raise ConfigError("extractor llm needs a backend")
        ext = LlmExtractor(backend)
    else:
        raise ConfigError(f"extractor: unknown kind {extractor!r}")
    added = enrich_from_distractors(draft, questions, ext)

    communities = detect_communities(draft, seed=seed)
    if summarizer == "template":
        summarize_communities(draft)
    elif summarizer == "llm":
        if backend is None:
            raise ConfigError("summarizer llm needs a backend")
        summarize_communities(draft, backend=backend,
                              prompt_template=load_prompt("summarize"))
    else:
        raise ConfigError(f"summarizer: unknown kind {summarizer!r}")

    graph = finalize(draft)
    counts = stats(graph)
    embedder = HashedBowEmbedder(dim=EMBED_DIM, seed=seed)
    meta = {
        "seed": seed,
        "max_tokens": max_tokens,
        "extractor": extractor,
        "dataset_sha256": dataset_sha256(raw_bytes),
        "embedder": {"kind": "hashed_bow", "dim": EMBED_DIM, "seed": seed},
        "counts": counts._asdict(),
        "selection": {
            "n_local": selection.n_local,
            "n_distractor": selection.n_distractor,
            "n_comparison": selection.n_comparison,
            "seed": selection.seed,
        },
    }
    out = Path(out_dir)
    save_graph(graph, out, meta=meta)
    save_questions(questions, out / QUESTIONS_FILE)

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
    for index in (ent_index, tu_index, com_index):
        save_index(index, out)

    return {
        "questions": len(questions),
        "paragraphs": len(corpus),
        "counts": counts._asdict(),
        "distractor_entities_added": added,
        "community_count": len(communities),
        "out": str(out),
    }


# --- run-baselines ---------------------------------------------------------


def _write_meta(base: str | Path, system: str, condition: str,
                payload: dict[str, Any]) -> None:
    path = results_path(base, system, condition).with_suffix(".meta.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, ensure_ascii=False, sort_keys=True,
                               indent=2) + "\n", encoding="utf-8")


def run_baselines_stage(kb: Kb, system: str, backend: ChatBackend,
                        traces_dir: str | Path, results_dir: str | Path,
                        cfg: Optional[BaselineConfig] = None,
                        jobs: int = 1,
                        seed: Optional[int] = None) -> list[RunResult]:
    """Run one system over every KB question and persist results plus
    (for graph systems) traces and transcripts."""
    if system not in ALL_SYSTEMS:
        raise ConfigError(f"system: unknown system {system!r}")
    if cfg is None:
        cfg = BaselineConfig()

    def run_one(question) -> RunResult:
        if system == "llm_only":
            record = run_llm_only(question, backend)
            return make_result(system, BASELINE_CONDITION, question,
                               record.answer, record.citations, Footprint())
        if system == "rag":
            record, retrieved = run_rag(question, kb, backend, cfg)
            fp = Footprint(retrieved_tus=len(retrieved),
                           cited_tus=len(record.citations.textunits))
            return make_result(system, BASELINE_CONDITION, question,
                               record.answer, record.citations, fp)
        if system == "graphrag":
            record, trace, transcript = run_graphrag(
                question, kb, backend, cfg)
        else:
            policy = AgentPolicy(kind=SYSTEM_POLICIES[system])
            record, trace, transcript = run_question(
                question, kb, EMPTY_VIEW, policy, backend)
        save_trace(trace, traces_dir, system, BASELINE_CONDITION,
                   transcript=transcript, view=EMPTY_VIEW,
                   policy_kind=record.policy_kind)
        return make_result(system, BASELINE_CONDITION, question,
                           record.answer, record.citations,
                           footprint_from_trace(trace))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_one, kb.questions))
    else:
        results = [run_one(q) for q in kb.questions]
    save_results(results, results_dir, system, BASELINE_CONDITION)
    _write_meta(results_dir, system, BASELINE_CONDITION,
                {"system": system, "condition": BASELINE_CONDITION,
                 "seed": seed, "questions": len(results)})
    return results


# --- run-ablations ---------------------------------------------------------


def run_ablations_stage(kb: Kb, system: str, conditions: list[str],
                        backend: ChatBackend, traces_dir: str | Path,
                        results_dir: str | Path, seed: int,
                        replicates: int,
                        cfg: Optional[BaselineConfig] = None,
                        jobs: int = 1) -> dict[str, list[tuple[str, str]]]:
    """Run the given conditions for one system; returns skips per
    condition."""
    all_skips: dict[str, list[tuple[str, str]]] = {}
    for name in conditions:
        condition = Condition(name=name, seed=seed, replicates=replicates)
        results, skips = run_intervention(
            system, condition, kb.questions, kb, backend, traces_dir,
            cfg=cfg, jobs=jobs)
        save_results(results, results_dir, system, name)
        _write_meta(results_dir, system, name,
                    {"system": system, "condition": name, "seed": seed,
                     "replicates": replicates,
                     "skipped": sorted(q for q, _ in skips)})
        all_skips[name] = skips
    return all_skips


# --- report ----------------------------------------------------------------


def _systems_present(results_dir: str | Path) -> list[str]:
    base = Path(results_dir)
    found = []
    for system in SYSTEM_ORDER:
        if (base / system / f"{BASELINE_CONDITION}.jsonl").exists():
            found.append(system)
    return found


def _conditions_present(results_dir: str | Path,
                        system: str) -> list[str]:
    from .ablation import CONDITIONS
    base = Path(results_dir) / system
    return [c for c in CONDITIONS if (base / f"{c}.jsonl").exists()]


def _trace_footprints(traces_dir: Optional[str | Path], system: str,
                      question_ids: list[str]) -> Optional[list[Footprint]]:
    if traces_dir is None:
        return None
    out = []
    for qid in question_ids:
        path = trace_path(traces_dir, system, BASELINE_CONDITION, qid)
        if not path.exists():
            return None
        trace, _, _ = load_trace_bundle(path)
        out.append(footprint_from_trace(trace))
    return out


def report_stage(results_dir: str | Path, out_dir: str | Path,
                 baseline_traces: Optional[str | Path] = None,
                 fmt: str = "both",
                 provenance: Optional[dict[str, str]] = None) -> list[Path]:
    """Assemble metric cells from persisted results and emit reports."""
    systems = _systems_present(results_dir)
    if not systems:
        raise ConfigError(f"results: no baseline results under "
                          f"{results_dir}")
    baselines = {s: load_results(results_dir, s, BASELINE_CONDITION)
                 for s in systems}
    question_ids = sorted({r.question_id for rows in baselines.values()
                           for r in rows})

    # baseline table: full-benchmark accuracy + footprint means
    base_accuracy: dict[str, MetricCell] = {}
    base_footprints = {}
    for system in systems:
        rows = baselines[system]
        base_accuracy[system] = baseline_cell(system, rows, question_ids)
        fps = _trace_footprints(baseline_traces, system, question_ids)
        if fps is None:
            fps = [r.footprint for r in rows]
        if any(v is not None for fp in fps for v in fp):
            base_footprints[system] = footprint_stats(fps)

    # intervention table: filtered metrics for the graph systems
    cells: dict[tuple[str, str], MetricCell] = {}
    filtered: list[str] = []
    if "llm_only" in baselines:
        filtered = apply_llm_filter(question_ids, baselines["llm_only"])
        for system in systems:
            if system not in GRAPH_SYSTEMS:
                continue
            cells[(system, BASELINE_CONDITION)] = baseline_cell(
                system, baselines[system], filtered)
            for condition in _conditions_present(results_dir, system):
                rows = load_results(results_dir, system, condition)
                cells[(system, condition)] = compute_metrics(
                    baselines[system], rows, filtered)
    else:
        log.warning("no direct-answer baseline; intervention table "
                    "will be empty")

    all_rows: list[RunResult] = []
    baseline_answers: dict[tuple[str, str], str] = {}
    for system in systems:
        for res in baselines[system]:
            baseline_answers[(system, res.question_id)] = res.answer
        all_rows.extend(baselines[system])
        for condition in _conditions_present(results_dir, system):
            all_rows.extend(load_results(results_dir, system, condition))

    prov = dict(provenance or {})
    prov.setdefault("questions", str(len(question_ids)))
    if filtered:
        prov.setdefault("filtered_questions", str(len(filtered)))
    return emit_reports(
        out_dir,
        render_baseline_cells(base_accuracy, base_footprints),
        render_intervention_cells(cells),
        detail_rows(all_rows, baseline_answers),
        fmt=fmt, provenance=prov)


# --- replay ----------------------------------------------------------------


def replay_stage(trace_file: str | Path, kb: Kb) -> list[tuple[int, str, bool]]:
    """Re-dispatch a saved trace's tool calls and compare digests."""
    from .agent import POLICY_KINDS
    trace, view, policy_kind = load_trace_bundle(trace_file)
    if policy_kind is not None and policy_kind not in POLICY_KINDS:
        raise ConfigError(
            f"trace: {policy_kind!r} runs have no tool calls to replay")
    policy = AgentPolicy(kind=policy_kind or "unconstrained")
    return replay_trace(trace, kb, view, policy)
