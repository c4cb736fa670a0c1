import csv
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from topicmill.cli import cli

from conftest import blob_mock_entries, make_blob_docs, write_corpus, write_mock_script


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def env(tmp_path, blob_corpus_file, blob_mock_script):
    return {
        "corpus": str(blob_corpus_file),
        "mock": str(blob_mock_script),
        "out": str(tmp_path / "run"),
        "tmp": tmp_path,
    }


def invoke(runner, env, *args):
    return runner.invoke(
        cli, ["--mock", env["mock"], *args], catch_exceptions=False
    )


def test_model_dry_run(runner, env):
    result = invoke(runner, env, "model", env["corpus"], "--dry-run")
    assert result.exit_code == 0
    plan = json.loads(result.output)
    assert plan == {"planned_clusters": 4, "llm_call_budget": 10}


def test_model_writes_run_dir(runner, env):
    result = invoke(runner, env, "--out", env["out"], "model", env["corpus"])
    assert result.exit_code == 0, result.stderr
    out = Path(env["out"])
    assert (out / "topics.json").exists()
    assert (out / "assignments.jsonl").exists()
    assert (out / "run.json").exists()
    topics = json.loads((out / "topics.json").read_text())
    assert len(topics) == 4


def test_model_requires_out_dir(runner, env):
    result = runner.invoke(cli, ["--mock", env["mock"], "model", env["corpus"]])
    assert result.exit_code == 1
    err_line = json.loads(result.stderr.strip().splitlines()[-1])
    assert err_line["error"] == "ConfigError"


def test_metrics_perfect_recovery(runner, env):
    invoke(runner, env, "--out", env["out"], "model", env["corpus"])
    result = invoke(runner, env, "metrics", env["out"], env["corpus"])
    assert result.exit_code == 0, result.stderr
    payload = json.loads((Path(env["out"]) / "metrics.json").read_text())
    assert payload["p1"] == 1.0
    assert payload["ari"] == 1.0
    assert payload["nmi"] == 1.0
    assert payload["n_topics"] == 4
    assert payload["n_docs"] == 40
    assert payload["dropped_other"] == 0


def test_metrics_drop_other_flag(runner, env, tmp_path):
    # force one cluster to fail generation so its docs land on OTHER
    entries = [e for e in blob_mock_entries() if "refund" not in e["match"]]
    script = write_mock_script(entries, tmp_path / "mock2.json")
    out = tmp_path / "run2"
    result = runner.invoke(
        cli,
        ["--mock", str(script), "--out", str(out), "model", env["corpus"]],
        catch_exceptions=False,
    )
    assert result.exit_code == 0
    result = runner.invoke(
        cli,
        ["--mock", str(script), "metrics", str(out), env["corpus"], "--drop-other"],
        catch_exceptions=False,
    )
    assert result.exit_code == 0
    payload = json.loads((out / "metrics.json").read_text())
    assert payload["dropped_other"] == 10
    assert payload["n_docs"] == 30
    assert payload["p1"] == 1.0


def test_evaluate_report(runner, env):
    invoke(runner, env, "--out", env["out"], "model", env["corpus"])
    result = invoke(runner, env, "evaluate", env["out"], env["corpus"])
    assert result.exit_code == 0, result.stderr
    payload = json.loads((Path(env["out"]) / "eval_report.json").read_text())
    assert payload["label_accuracy"]["macro"] == 1.0
    assert payload["topic_accuracy"]["mean"] == 4.0
    assert payload["topic_completeness"]["mean"] == 4.0


def test_evaluate_missing_run_dir(runner, env):
    result = runner.invoke(cli, ["--mock", env["mock"], "evaluate", "/nope", env["corpus"]])
    assert result.exit_code != 0
    assert "/nope" in result.output + result.stderr


def test_evaluate_predictions_file(runner, env, tmp_path):
    invoke(runner, env, "--out", env["out"], "model", env["corpus"])
    docs = make_blob_docs()
    preds = tmp_path / "preds.jsonl"
    from conftest import FAMILY_TOPICS

    with preds.open("w") as fh:
        for d in docs:
            fh.write(
                json.dumps(
                    {
                        "doc_id": d.id,
                        "topic_name": FAMILY_TOPICS[d.id.split("-")[0]],
                        "confidence": 0.9,
                    }
                )
                + "\n"
            )
    result = invoke(runner, env, "evaluate", env["out"], env["corpus"], "--predictions", str(preds))
    assert result.exit_code == 0, result.stderr
    payload = json.loads((Path(env["out"]) / "eval_report.json").read_text())
    assert payload["label_accuracy"]["macro"] == 1.0
    assert payload["n_judged"] == 40


def test_evaluate_predictions_unknown_topic(runner, env, tmp_path):
    invoke(runner, env, "--out", env["out"], "model", env["corpus"])
    preds = tmp_path / "preds.jsonl"
    preds.write_text(json.dumps({"doc_id": "refund-0", "topic_name": "Nonexistent"}) + "\n")
    result = runner.invoke(
        cli,
        ["--mock", env["mock"], "evaluate", env["out"], env["corpus"], "--predictions", str(preds)],
    )
    assert result.exit_code == 1
    err_line = json.loads(result.stderr.strip().splitlines()[-1])
    assert "Nonexistent" in err_line["message"]


def test_hierarchy_command(runner, env, tmp_path):
    entries = blob_mock_entries() + [
        {"match": "group topics into broad parent topics", "response": "Banking topics: 0, 1"}
    ]
    script = write_mock_script(entries, tmp_path / "mock3.json")
    out = tmp_path / "run3"
    runner.invoke(
        cli, ["--mock", str(script), "--out", str(out), "model", env["corpus"]],
        catch_exceptions=False,
    )
    result = runner.invoke(
        cli, ["--mock", str(script), "hierarchy", str(out)], catch_exceptions=False
    )
    assert result.exit_code == 0, result.stderr
    payload = json.loads((out / "hierarchy.json").read_text())
    assert payload["parents"]
    topics = json.loads((out / "topics.json").read_text())
    parented = [t for t in topics if t.get("parent_id")]
    assert parented


def test_export_distill_command(runner, env):
    invoke(runner, env, "--out", env["out"], "model", env["corpus"])
    result = invoke(runner, env, "export-distill", env["out"], env["corpus"])
    assert result.exit_code == 0, result.stderr
    data = Path(env["out"]) / "distill" / "distill.jsonl"
    labels = Path(env["out"]) / "distill" / "labels.json"
    rows = [json.loads(l) for l in data.read_text().splitlines()]
    assert len(rows) == 40
    assert set(json.loads(labels.read_text())) == {
        "Refund requests",
        "Card issues",
        "Loan questions",
        "Password resets",
    }


def test_summarize_command(runner, tmp_path, blob_mock_script):
    docs = [
        {"id": "short", "text": "tiny doc"},
        {"id": "long", "text": " ".join(f"w{i}" for i in range(150))},
    ]
    corpus = tmp_path / "c.jsonl"
    corpus.write_text("\n".join(json.dumps(d) for d in docs) + "\n")
    entries = [{"match": "Summary Guidelines", "response": "condensed"}]
    script = write_mock_script(entries, tmp_path / "mock4.json")
    out = tmp_path / "sumout"
    result = CliRunner().invoke(
        cli,
        ["--mock", str(script), "--out", str(out), "summarize", str(corpus)],
        catch_exceptions=False,
    )
    assert result.exit_code == 0, result.stderr
    rows = [json.loads(l) for l in (out / "summarized.jsonl").read_text().splitlines()]
    assert rows[0]["summary"] == "tiny doc"
    assert rows[1]["summary"] == "condensed"


def test_report_command(runner, env):
    invoke(runner, env, "--out", env["out"], "model", env["corpus"])
    invoke(runner, env, "metrics", env["out"], env["corpus"])
    invoke(runner, env, "evaluate", env["out"], env["corpus"])
    result = invoke(runner, env, "report", env["out"])
    assert result.exit_code == 0, result.stderr
    report_dir = Path(env["out"]) / "report"
    assert (report_dir / "topics.csv").exists()
    assert (report_dir / "topic_sizes.png").exists()
    assert (report_dir / "metrics.png").exists()
    assert (report_dir / "judge_scores.png").exists()
    with (report_dir / "topics.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert sum(int(r["n_docs"]) for r in rows) == 40


def test_config_file_and_unknown_keys(runner, tmp_path, env):
    good = tmp_path / "good.ini"
    good.write_text("[clustering]\ntarget_cluster_size = 5\n")
    result = runner.invoke(
        cli,
        ["--config", str(good), "--mock", env["mock"], "model", env["corpus"], "--dry-run"],
        catch_exceptions=False,
    )
    assert json.loads(result.output)["planned_clusters"] == 8  # 40 / 5

    bad = tmp_path / "bad.ini"
    bad.write_text("[clustering]\nbogus = 1\nworse = 2\n[nosuch]\nx = y\n")
    result = runner.invoke(cli, ["--config", str(bad), "model", env["corpus"], "--dry-run"])
    assert result.exit_code == 1
    err = result.stderr
    assert "clustering.bogus" in err and "clustering.worse" in err and "nosuch" in err


def test_seed_flag_overrides(runner, env, tmp_path):
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    invoke(runner, env, "--out", str(out1), "--seed", "5", "model", env["corpus"])
    invoke(runner, env, "--out", str(out2), "--seed", "5", "model", env["corpus"])
    assert (out1 / "assignments.jsonl").read_bytes() == (out2 / "assignments.jsonl").read_bytes()
    cfg = json.loads((out1 / "run.json").read_text())["config"]
    assert cfg["clustering"]["seed"] == 5
    assert cfg["run"]["seed"] == 5
    assert cfg["label_accuracy"]["seed"] == 5
