import csv
import json

from topicmill.engine import run_topic_modeling
from topicmill.model import OTHER
from topicmill.report import render_report

from conftest import blob_mock_entries, make_blob_docs, make_run_config, write_mock_script


def test_render_report_minimal(tmp_path):
    docs = make_blob_docs()
    out = tmp_path / "run"
    cfg = make_run_config(tmp_path, blob_mock_entries(), out_dir=out)
    run_topic_modeling(docs, cfg)

    written = render_report(out)
    names = {p.name for p in written}
    assert names == {"topics.csv", "topic_sizes.png"}
    for p in written:
        assert p.exists() and p.stat().st_size > 0


def test_render_report_includes_optional_figures(tmp_path):
    docs = make_blob_docs()
    out = tmp_path / "run"
    cfg = make_run_config(tmp_path, blob_mock_entries(), out_dir=out)
    run_topic_modeling(docs, cfg)
    (out / "metrics.json").write_text(json.dumps({"p1": 1.0, "ari": 0.5, "nmi": 0.8}))
    (out / "eval_report.json").write_text(
        json.dumps(
            {
                "topic_accuracy": {"mean": 3.5, "histogram": {"1": 0, "2": 1, "3": 2, "4": 5}},
                "topic_completeness": {"mean": 3.0, "histogram": {"1": 1, "2": 1, "3": 3, "4": 3}},
            }
        )
    )
    written = render_report(out, tmp_path / "custom")
    names = {p.name for p in written}
    assert {"topics.csv", "topic_sizes.png", "metrics.png", "judge_scores.png"} == names
    assert all(p.parent == tmp_path / "custom" for p in written)


def test_csv_includes_other_row(tmp_path):
    entries = [e for e in blob_mock_entries() if "refund" not in e["match"]]
    script_dir = tmp_path / "m"
    out = tmp_path / "run"
    cfg = make_run_config(script_dir, entries, out_dir=out, llm__retries=0)
    run_topic_modeling(make_blob_docs(), cfg)
    render_report(out)
    with (out / "report" / "topics.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    other = [r for r in rows if r["topic_id"] == OTHER]
    assert len(other) == 1
    assert other[0]["n_docs"] == "10"
