"""Render a run's results to files: a topic-level CSV plus matplotlib figures.

Figures are written next to the CSV: topic size distribution always; a
clustering-metric bar chart and judge-score histograms when metrics.json /
eval_report.json are present in the run directory.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .model import OTHER, TopicModelRun, load_run

MAX_BARS = 30


def write_topics_csv(run: TopicModelRun, path: Path) -> Path:
    counts = Counter(a.topic_id for a in run.assignments)
    total = max(1, len(run.assignments))
    names = {t.id: t.name for t in run.topics}
    parents = {t.id: t.parent_id or "" for t in run.topics}
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["topic_id", "name", "parent_id", "n_docs", "share"])
        for t in run.topics:
            n = counts.get(t.id, 0)
            writer.writerow([t.id, t.name, parents[t.id], n, f"{n / total:.4f}"])
        n_other = counts.get(OTHER, 0)
        if n_other:
            writer.writerow([OTHER, OTHER, "", n_other, f"{n_other / total:.4f}"])
    return path


def _plot_topic_sizes(run: TopicModelRun, path: Path) -> Path:
    counts = Counter(a.topic_id for a in run.assignments)
    names = {t.id: t.name for t in run.topics}
    names[OTHER] = OTHER
    ranked = counts.most_common(MAX_BARS)
    labels = [names.get(tid, tid) for tid, _ in ranked][::-1]
    values = [n for _, n in ranked][::-1]
    fig, ax = plt.subplots(figsize=(8, max(2.5, 0.3 * len(ranked) + 1)))
    ax.barh(range(len(values)), values, color="#4878a8")
    ax.set_yticks(range(len(values)))
    ax.set_yticklabels([l if len(l) <= 48 else l[:45] + "..." for l in labels], fontsize=8)
    ax.set_xlabel("documents")
    ax.set_title(f"Topic sizes (top {len(ranked)} of {len(run.topics)})")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _plot_metrics(metrics: dict, path: Path) -> Path:
    keys = [k for k in ("p1", "ari", "nmi") if k in metrics]
    fig, ax = plt.subplots(figsize=(4.5, 3))
    ax.bar(keys, [metrics[k] for k in keys], color=["#4878a8", "#a85448", "#6aa848"])
    ax.set_ylim(-1.0 if any(metrics[k] < 0 for k in keys) else 0.0, 1.05)
    ax.axhline(0.0, color="black", linewidth=0.6)
    for i, k in enumerate(keys):
        ax.text(i, metrics[k], f"{metrics[k]:.3f}", ha="center", va="bottom", fontsize=9)
    ax.set_title("Clustering agreement vs gold labels")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _plot_judge_scores(report: dict, path: Path) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(8, 3), sharey=True)
    for ax, key, title in (
        (axes[0], "topic_accuracy", "Topic accuracy"),
        (axes[1], "topic_completeness", "Topic completeness"),
    ):
        hist = report.get(key, {}).get("histogram", {})
        levels = ["1", "2", "3", "4"]
        ax.bar(levels, [hist.get(l, 0) for l in levels], color="#4878a8")
        mean = report.get(key, {}).get("mean")
        ax.set_title(f"{title}" + (f" (mean {mean:.2f})" if mean is not None else ""))
        ax.set_xlabel("judge score")
    axes[0].set_ylabel("documents")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_report(run_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Write topics.csv and figures for a saved run; returns the written paths."""
    run_dir = Path(run_dir)
    out = Path(out_dir) if out_dir else run_dir / "report"
    out.mkdir(parents=True, exist_ok=True)
    run = load_run(run_dir)

    written = [
        write_topics_csv(run, out / "topics.csv"),
        _plot_topic_sizes(run, out / "topic_sizes.png"),
    ]
    metrics_path = run_dir / "metrics.json"
    if metrics_path.exists():
        written.append(_plot_metrics(json.loads(metrics_path.read_text()), out / "metrics.png"))
    eval_path = run_dir / "eval_report.json"
    if eval_path.exists():
        written.append(
            _plot_judge_scores(json.loads(eval_path.read_text()), out / "judge_scores.png")
        )
    return written
