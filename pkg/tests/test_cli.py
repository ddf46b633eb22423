"""CLI behavior over the bundled fixture world: stage echoes, exit
codes, config-file precedence, and trace replay."""
from __future__ import annotations

import json
import shutil

from conftest import FIXTURES, REPORT_FILES, cli_invoke

# --- stage summaries -------------------------------------------------------


def test_build_kb_echoes_fixture_counts(pipeline_run):
    out = pipeline_run["outputs"][("build-kb", "")]
    assert ("6 questions, 21 entities, 15 relationships, 12 text units, "
            "6 communities") in out


def test_baseline_echoes_per_system_accuracy(pipeline_run):
    outputs = pipeline_run["outputs"]
    expected = {
        "agentic": "agentic: 6/6 correct",
        "visited_only": "visited_only: 6/6 correct",
        "evidence_first": "evidence_first: 6/6 correct",
        "graphrag": "graphrag: 3/6 correct",
        "rag": "rag: 4/6 correct",
        "llm_only": "llm_only: 1/6 correct",
    }
    for system, line in expected.items():
        assert line in outputs[("run-baselines", system)]


def test_ablation_echoes_every_condition(pipeline_run):
    out = pipeline_run["outputs"][("run-ablations", "agentic")]
    for cond in ("full_isolation", "text_only_isolation", "cited_removal",
                 "random_removal", "entity_removal", "entity_text_mask"):
        assert f"agentic/{cond}: done" in out
    assert "skipped" not in out


def test_report_writes_all_files(pipeline_run):
    out = pipeline_run["outputs"][("report", "")]
    for name in REPORT_FILES:
        assert name in out
        path = pipeline_run["report"] / name
        assert path.is_file() and path.stat().st_size > 0
    head = (pipeline_run["report"] / "report.md").read_text()
    assert head.startswith("# Evidence ablation report")


def test_results_are_replayable_jsonl(pipeline_run):
    path = pipeline_run["results"] / "agentic" / "baseline.jsonl"
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(rows) == 6
    assert all(row["condition"] == "baseline" for row in rows)


# --- configuration errors exit 2 -------------------------------------------


def test_unknown_subcommand_exits_2():
    outcome = cli_invoke(["frobnicate"])
    assert outcome.exit_code == 2
    assert "No such command" in outcome.stderr


def test_missing_required_paths_exit_2():
    outcome = cli_invoke(["run-baselines", "--system", "rag"])
    assert outcome.exit_code == 2
    assert "error:" in outcome.stderr


def test_unknown_system_choice_exits_2():
    outcome = cli_invoke(["run-baselines", "--system", "oracle"])
    assert outcome.exit_code == 2


def test_nonpositive_jobs_exit_2(pipeline_run):
    outcome = cli_invoke([
        "run-baselines", "--kb", str(pipeline_run["kb"]),
        "--system", "rag", "--traces", str(pipeline_run["traces"]),
        "--results", str(pipeline_run["results"]),
        "--backend", "scripted",
        "--script", str(FIXTURES / "scripts" / "rag.yaml"),
        "--jobs", "0"])
    assert outcome.exit_code == 2
    assert "jobs" in outcome.stderr


def test_missing_dataset_file_exits_2(tmp_path):
    outcome = cli_invoke(["build-kb", "--dev-set", str(tmp_path / "no.json"),
                          "--out", str(tmp_path / "kb")])
    assert outcome.exit_code == 2
    assert "not found" in outcome.stderr


def test_scripted_backend_requires_script(pipeline_run, tmp_path):
    outcome = cli_invoke([
        "run-baselines", "--kb", str(pipeline_run["kb"]),
        "--system", "rag", "--traces", str(tmp_path / "t"),
        "--results", str(tmp_path / "r"), "--backend", "scripted"])
    assert outcome.exit_code == 2
    assert "script" in outcome.stderr


# --- config file precedence ------------------------------------------------


def test_config_file_supplies_all_flags(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        f'dataset = "{FIXTURES / "dev_set.json"}"\n'
        f'kb_dir = "{tmp_path / "kb"}"\n'
        "seed = 0\nmax_tokens = 300\n"
        "[selection]\nn_local = 2\nn_distractor = 2\nn_comparison = 2\n")
    outcome = cli_invoke(["build-kb", "--config", str(cfg)])
    assert outcome.exit_code == 0
    assert "6 questions, 21 entities" in outcome.output
    assert (tmp_path / "kb" / "entities.jsonl").exists()


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        f'dataset = "{FIXTURES / "dev_set.json"}"\n'
        f'kb_dir = "{tmp_path / "ignored"}"\n'
        "[selection]\nn_local = 2\nn_distractor = 2\nn_comparison = 2\n")
    outcome = cli_invoke(["build-kb", "--config", str(cfg),
                          "--out", str(tmp_path / "flagged")])
    assert outcome.exit_code == 0
    assert (tmp_path / "flagged" / "entities.jsonl").exists()
    assert not (tmp_path / "ignored").exists()


def test_malformed_config_exits_2(tmp_path):
    cfg = tmp_path / "broken.toml"
    cfg.write_text("dataset = [unclosed\n")
    outcome = cli_invoke(["build-kb", "--config", str(cfg)])
    assert outcome.exit_code == 2


# --- replay ----------------------------------------------------------------


def test_replay_clean_trace(pipeline_run):
    trace = pipeline_run["traces"] / "agentic" / "baseline" / "q01.json"
    outcome = cli_invoke(["replay", "--trace", str(trace),
                          "--kb", str(pipeline_run["kb"])])
    assert outcome.exit_code == 0
    assert outcome.output.rstrip().endswith("replay clean")
    assert "MISMATCH" not in outcome.output


def test_replay_flags_tampered_digest(pipeline_run, tmp_path):
    src = pipeline_run["traces"] / "agentic" / "baseline" / "q01.json"
    doctored = tmp_path / "q01.json"
    row = json.loads(src.read_text())
    row["tool_calls"][0]["result_digest"] = "0" * 12
    doctored.write_text(json.dumps(row))
    outcome = cli_invoke(["replay", "--trace", str(doctored),
                          "--kb", str(pipeline_run["kb"])])
    assert outcome.exit_code == 1
    assert "step 1: search_entities: MISMATCH" in outcome.output
    assert "replay clean" not in outcome.output


def test_replay_missing_trace_exits_2(pipeline_run, tmp_path):
    outcome = cli_invoke(["replay", "--trace", str(tmp_path / "gone.json"),
                          "--kb", str(pipeline_run["kb"])])
    assert outcome.exit_code == 2


def test_replay_rejects_traces_without_tool_loop(pipeline_run):
    trace = pipeline_run["traces"] / "graphrag" / "baseline" / "q01.json"
    outcome = cli_invoke(["replay", "--trace", str(trace),
                          "--kb", str(pipeline_run["kb"])])
    assert outcome.exit_code == 2


# --- per-item failures exit 1 ----------------------------------------------


def test_ablation_skips_exit_1(pipeline_run, tmp_path):
    # baseline trace without citations: cited-dependent conditions skip
    traces = tmp_path / "traces"
    src = pipeline_run["traces"] / "agentic" / "baseline"
    dst = traces / "agentic" / "baseline"
    shutil.copytree(src, dst)
    doctored = dst / "q01.json"
    row = json.loads(doctored.read_text())
    row["cited_entities"] = []
    doctored.write_text(json.dumps(row))
    outcome = cli_invoke([
        "run-ablations", "--kb", str(pipeline_run["kb"]),
        "--system", "agentic", "--condition", "cited_removal",
        "--traces", str(traces), "--out", str(tmp_path / "results"),
        "--seed", "0", "--replicates", "3", "--backend", "scripted",
        "--script", str(FIXTURES / "scripts" / "agent_tools.yaml"),
        "--jobs", "1"])
    assert outcome.exit_code == 1
    assert "1 skipped" in outcome.output
    assert "q01 [empty_cited_set]" in outcome.output
