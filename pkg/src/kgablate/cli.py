"""Command-line entry points. One subcommand per pipeline stage with
on-disk handoff between stages; every flag can also come from a TOML
or JSON config file, with flags winning.
"""
from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Any, Optional

import click

from .ablation import CONDITIONS
from .baselines import BaselineConfig
from .config import load_config, pick
from .dataset import SelectionConfig
from .errors import ConfigError, KgablateError
from .kb import load_kb
from .pipeline import (ALL_SYSTEMS, build_kb_stage, make_backend,
                       replay_stage, report_stage, run_ablations_stage,
                       run_baselines_stage)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ITEM_FAILURES = 1
EXIT_CONFIG = 2


def _fail_config(message: str) -> "click.exceptions.Exit":
    click.echo(f"error: {message}", err=True)
    return click.exceptions.Exit(EXIT_CONFIG)


def _backend_from(cfg: dict[str, Any], backend: Optional[str],
                  script: Optional[str]):
    kind = pick(backend, cfg, "backend.type", "scripted")
    script = pick(script, cfg, "backend.script")
    base_url = pick(None, cfg, "backend.base_url")
    model = pick(None, cfg, "backend.model")
    return make_backend(kind, script, base_url, model)


def _baseline_config(cfg: dict[str, Any]) -> BaselineConfig:
    return BaselineConfig(
        rag_k=pick(None, cfg, "baseline.rag_k", 5),
        graphrag_entity_k=pick(None, cfg, "baseline.graphrag_entity_k", 5),
        graphrag_community_k=pick(
            None, cfg, "baseline.graphrag_community_k", 2),
        graphrag_tu_cap=pick(None, cfg, "baseline.graphrag_tu_cap", 14))


def _jobs(flag: Optional[int], cfg: dict[str, Any]) -> int:
    jobs = pick(flag, cfg, "jobs", os.cpu_count() or 1)
    if jobs < 1:
        raise ConfigError("jobs: must be >= 1")
    return jobs


@click.group()
@click.option("--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool) -> None:
    """Knowledge-graph QA experiment harness."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")


@main.command("build-kb")
@click.option("--dev-set", type=click.Path(), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--max-tokens", type=int, default=None)
@click.option("--extractor", type=click.Choice(["rules", "llm"]),
              default=None)
@click.option("--summarizer", type=click.Choice(["template", "llm"]),
              default=None)
@click.option("--backend", type=click.Choice(["scripted", "remote"]),
              default=None)
@click.option("--script", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
def build_kb(dev_set: Optional[str], out_dir: Optional[str],
             seed: Optional[int], max_tokens: Optional[int],
             extractor: Optional[str], summarizer: Optional[str],
             backend: Optional[str], script: Optional[str],
             config_path: Optional[str]) -> None:
    """Select questions and build the knowledge base directory."""
    try:
        cfg = load_config(config_path)
        dev_set = pick(dev_set, cfg, "dataset")
        out_dir = pick(out_dir, cfg, "kb_dir")
        if dev_set is None or out_dir is None:
            raise ConfigError("dataset and kb_dir (or --dev-set/--out) "
                              "are required")
        if not Path(dev_set).exists():
            raise ConfigError(f"dataset: file not found: {dev_set}")
        seed = pick(seed, cfg, "seed", 0)
        max_tokens = pick(max_tokens, cfg, "max_tokens", 300)
        extractor = pick(extractor, cfg, "extractor", "rules")
        summarizer = pick(summarizer, cfg, "summarizer", "template")
        selection = SelectionConfig(
            n_local=pick(None, cfg, "selection.n_local", 12),
            n_distractor=pick(None, cfg, "selection.n_distractor", 12),
            n_comparison=pick(None, cfg, "selection.n_comparison", 6),
            seed=pick(None, cfg, "selection.seed", seed))
        chat = None
        if extractor == "llm" or summarizer == "llm":
            chat = _backend_from(cfg, backend, script)
        summary = build_kb_stage(
            dev_set, out_dir, seed=seed, max_tokens=max_tokens,
            extractor=extractor, backend=chat, selection=selection,
            summarizer=summarizer)
    except (ConfigError, ValueError) as exc:
        raise _fail_config(str(exc))
    except KgablateError as exc:
        click.echo(f"error: {exc}", err=True)
        raise click.exceptions.Exit(EXIT_ITEM_FAILURES)
    click.echo(f"kb written to {summary['out']}: "
               f"{summary['questions']} questions, "
               f"{summary['counts']['entities']} entities, "
               f"{summary['counts']['relationships']} relationships, "
               f"{summary['counts']['textunits']} text units, "
               f"{summary['counts']['communities']} communities")


@main.command("run-baselines")
@click.option("--kb", "kb_dir", type=click.Path(), default=None)
@click.option("--system", "systems", multiple=True,
              type=click.Choice(ALL_SYSTEMS + ("all",)))
@click.option("--traces", "traces_dir", type=click.Path(), default=None)
@click.option("--results", "results_dir", type=click.Path(), default=None)
@click.option("--backend", type=click.Choice(["scripted", "remote"]),
              default=None)
@click.option("--script", type=click.Path(), default=None)
@click.option("--jobs", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
def run_baselines(kb_dir: Optional[str], systems: tuple[str, ...],
                  traces_dir: Optional[str], results_dir: Optional[str],
                  backend: Optional[str], script: Optional[str],
                  jobs: Optional[int], seed: Optional[int],
                  config_path: Optional[str]) -> None:
    """Run baseline systems over the KB questions."""
    try:
        cfg = load_config(config_path)
        kb_dir = pick(kb_dir, cfg, "kb_dir")
        traces_dir = pick(traces_dir, cfg, "traces_dir")
        results_dir = pick(results_dir, cfg, "results_dir")
        if kb_dir is None or traces_dir is None or results_dir is None:
            raise ConfigError("kb_dir, traces_dir, and results_dir are "
                              "required")
        chosen = list(systems) or list(pick(None, cfg, "systems", []))
        if not chosen:
            raise ConfigError("system: pass --system at least once")
        if "all" in chosen:
            chosen = list(ALL_SYSTEMS)
        chat = _backend_from(cfg, backend, script)
        bcfg = _baseline_config(cfg)
        n_jobs = _jobs(jobs, cfg)
        seed = pick(seed, cfg, "seed", 0)
        kb = load_kb(kb_dir)
    except (ConfigError, ValueError) as exc:
        raise _fail_config(str(exc))
    failures = []
    for system in chosen:
        try:
            results = run_baselines_stage(
                kb, system, chat, traces_dir, results_dir, cfg=bcfg,
                jobs=n_jobs, seed=seed)
            correct = sum(1 for r in results if r.correct)
            click.echo(f"{system}: {correct}/{len(results)} correct")
        except ConfigError as exc:
            raise _fail_config(str(exc))
        except KgablateError as exc:
            failures.append((system, str(exc)))
            click.echo(f"{system}: failed: {exc}", err=True)
    if failures:
        raise click.exceptions.Exit(EXIT_ITEM_FAILURES)


@main.command("run-ablations")
@click.option("--kb", "kb_dir", type=click.Path(), default=None)
@click.option("--system", type=click.Choice(("agentic", "evidence_first",
                                             "visited_only", "graphrag")),
              required=True)
@click.option("--condition", "conditions", multiple=True,
              type=click.Choice(CONDITIONS + ("all",)))
@click.option("--traces", "traces_dir", type=click.Path(), default=None)
@click.option("--out", "results_dir", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--replicates", type=int, default=None)
@click.option("--backend", type=click.Choice(["scripted", "remote"]),
              default=None)
@click.option("--script", type=click.Path(), default=None)
@click.option("--jobs", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
def run_ablations(kb_dir: Optional[str], system: str,
                  conditions: tuple[str, ...], traces_dir: Optional[str],
                  results_dir: Optional[str], seed: Optional[int],
                  replicates: Optional[int], backend: Optional[str],
                  script: Optional[str], jobs: Optional[int],
                  config_path: Optional[str]) -> None:
    """Re-run one system under intervention views built from its
    baseline traces."""
    try:
        cfg = load_config(config_path)
        kb_dir = pick(kb_dir, cfg, "kb_dir")
        traces_dir = pick(traces_dir, cfg, "traces_dir")
        results_dir = pick(results_dir, cfg, "results_dir")
        if kb_dir is None or traces_dir is None or results_dir is None:
            raise ConfigError("kb_dir, traces_dir, and results_dir (or "
                              "--kb/--traces/--out) are required")
        chosen = list(conditions) or list(
            pick(None, cfg, "ablation.conditions", []))
        if not chosen:
            raise ConfigError("condition: pass --condition at least once")
        if "all" in chosen:
            chosen = list(CONDITIONS)
        seed = pick(seed, cfg, "seed", 0)
        replicates = pick(replicates, cfg, "ablation.replicates", 3)
        if replicates < 1:
            raise ConfigError("ablation.replicates: must be >= 1")
        chat = _backend_from(cfg, backend, script)
        bcfg = _baseline_config(cfg)
        n_jobs = _jobs(jobs, cfg)
        kb = load_kb(kb_dir)
    except (ConfigError, ValueError) as exc:
        raise _fail_config(str(exc))
    try:
        skips = run_ablations_stage(
            kb, system, chosen, chat, traces_dir, results_dir,
            seed=seed, replicates=replicates, cfg=bcfg, jobs=n_jobs)
    except KgablateError as exc:
        click.echo(f"error: {exc}", err=True)
        raise click.exceptions.Exit(EXIT_ITEM_FAILURES)
    exit_code = EXIT_OK
    for name in chosen:
        skipped = skips.get(name, [])
        line = f"{system}/{name}: done"
        if skipped:
            line += f" ({len(skipped)} skipped: "
            line += ", ".join(f"{q} [{r}]" for q, r in skipped) + ")"
            exit_code = EXIT_ITEM_FAILURES
        click.echo(line)
    if exit_code != EXIT_OK:
        raise click.exceptions.Exit(exit_code)


@main.command("report")
@click.option("--results", "results_dir", type=click.Path(), default=None)
@click.option("--baseline-traces", type=click.Path(), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--format", "fmt", type=click.Choice(["md", "csv", "both"]),
              default=None)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
def report(results_dir: Optional[str], baseline_traces: Optional[str],
           out_dir: Optional[str], fmt: Optional[str],
           seed: Optional[int], config_path: Optional[str]) -> None:
    """Compute metrics from persisted results and emit report files."""
    try:
        cfg = load_config(config_path)
        results_dir = pick(results_dir, cfg, "results_dir")
        out_dir = pick(out_dir, cfg, "report_dir")
        baseline_traces = pick(baseline_traces, cfg, "traces_dir")
        fmt = pick(fmt, cfg, "format", "both")
        seed = pick(seed, cfg, "seed")
        if results_dir is None or out_dir is None:
            raise ConfigError("results_dir and report_dir (or "
                              "--results/--out) are required")
        provenance = {}
        if seed is not None:
            provenance["seed"] = str(seed)
        written = report_stage(results_dir, out_dir,
                               baseline_traces=baseline_traces, fmt=fmt,
                               provenance=provenance)
    except ConfigError as exc:
        raise _fail_config(str(exc))
    except KgablateError as exc:
        click.echo(f"error: {exc}", err=True)
        raise click.exceptions.Exit(EXIT_ITEM_FAILURES)
    for path in written:
        click.echo(f"wrote {path}")


@main.command("replay")
@click.option("--trace", "trace_file", type=click.Path(), required=True)
@click.option("--kb", "kb_dir", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
def replay(trace_file: str, kb_dir: Optional[str],
           config_path: Optional[str]) -> None:
    """Re-dispatch a saved trace's tool calls and verify digests."""
    try:
        cfg = load_config(config_path)
        kb_dir = pick(kb_dir, cfg, "kb_dir")
        if kb_dir is None:
            raise ConfigError("kb_dir (or --kb) is required")
        if not Path(trace_file).exists():
            raise ConfigError(f"trace: file not found: {trace_file}")
        kb = load_kb(kb_dir)
        rows = replay_stage(trace_file, kb)
    except (ConfigError, ValueError) as exc:
        raise _fail_config(str(exc))
    mismatches = [row for row in rows if not row[2]]
    for step, tool, ok in rows:
        click.echo(f"step {step}: {tool}: {'ok' if ok else 'MISMATCH'}")
    if mismatches:
        raise click.exceptions.Exit(EXIT_ITEM_FAILURES)
    click.echo("replay clean")


if __name__ == "__main__":
    main()
