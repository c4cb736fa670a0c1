"""Command-line entry point wiring corpora, config, and run directories.

Every command exits 0 on success; on failure the last stderr line is a
machine-readable JSON error object (human-readable detail precedes it). All
randomness is seeded from config, so reruns with the mock provider reproduce
artifacts byte for byte.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import sys
import traceback
from pathlib import Path

import click

from . import autoeval, engine, hierarchy as hierarchy_mod, metrics as metrics_mod, report as report_mod
from .config import ConfigError, RunConfig
from .model import (
    OTHER,
    STAGE_GENERATED,
    STAGE_OTHER,
    Clustering,
    TopicAssignment,
    load_corpus,
    load_run,
    save_corpus,
    save_run,
)
from .summarize import CorpusSummarizationError, summarize_corpus


def _fail(exc: BaseException, partial_note: str | None = None) -> None:
    detail = "".join(traceback.format_exception_only(type(exc), exc)).strip()
    click.echo(detail, err=True)
    if partial_note:
        click.echo(partial_note, err=True)
    click.echo(
        json.dumps({"error": type(exc).__name__, "message": str(exc)}, ensure_ascii=False),
        err=True,
    )
    sys.exit(1)


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (click.ClickException, click.Abort, SystemExit):
            raise
        except Exception as exc:  # noqa: BLE001 - single funnel to the JSON error line
            _fail(exc)

    return wrapper


class Ctx:
    def __init__(self, config: RunConfig, out: str | None):
        self.config = config
        self.out = out

    def out_dir(self, default: str | Path) -> Path:
        return Path(self.out) if self.out else Path(default)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="INI config file.")
@click.option("--seed", type=int, default=None, help="Override every seed in the config.")
@click.option("--mock", "mock_script", type=click.Path(), default=None,
              help="Use the scripted mock LLM provider with this script file.")
@click.option("--cache-dir", type=click.Path(), default=None, help="LLM response cache directory.")
@click.option("--out", type=click.Path(), default=None, help="Output directory (overrides config).")
@click.pass_context
def cli(ctx, config_path, seed, mock_script, cache_dir, out):
    """Granular topic modeling: cluster documents, let an LLM name and assign
    topics, refine duplicates, and evaluate the result."""
    try:
        cfg = RunConfig.from_file(config_path)
    except ConfigError as exc:
        _fail(exc)
        return
    if seed is not None:
        cfg.set("run", "seed", seed)
        cfg.set("clustering", "seed", seed)
        cfg.set("label_accuracy", "seed", seed)
    if mock_script is not None:
        cfg.set("llm", "provider", "mock")
        cfg.set("llm", "mock_script", str(mock_script))
    if cache_dir is not None:
        cfg.set("llm", "cache_dir", str(cache_dir))
    if out is not None:
        cfg.set("run", "output_dir", str(out))
    ctx.obj = Ctx(cfg, out)


@cli.command()
@click.argument("corpus", type=click.Path(exists=True))
@click.pass_obj
@guarded
def summarize(ctx: Ctx, corpus):
    """Summarize long documents; writes a summarized corpus JSONL."""
    docs = load_corpus(corpus)
    cfg = ctx.config
    out_dir = ctx.out_dir(cfg.get("run", "output_dir") or ".")
    out_path = out_dir / "summarized.jsonl"
    client = cfg.build_client()
    templates = cfg.build_templates()
    try:
        result = summarize_corpus(docs, cfg.summarization(), client, templates, **cfg.llm_opts())
    except CorpusSummarizationError as exc:
        save_corpus(exc.documents, out_path)
        _fail(exc, partial_note=f"partial results written to {out_path}")
        return
    save_corpus(result, out_path)
    click.echo(str(out_path))


@cli.command()
@click.argument("corpus", type=click.Path(exists=True))
@click.option("--dry-run", is_flag=True, help="Print cluster count and call budget; no LLM calls.")
@click.pass_obj
@guarded
def model(ctx: Ctx, corpus, dry_run):
    """Run the full topic modeling pipeline; writes a run directory."""
    docs = load_corpus(corpus)
    cfg = ctx.config
    if dry_run:
        click.echo(json.dumps(engine.plan_run(len(docs), cfg)))
        return
    if not cfg.get("run", "output_dir"):
        raise ConfigError("no output directory: pass --out or set run.output_dir")
    engine.run_topic_modeling(docs, cfg)
    click.echo(cfg.get("run", "output_dir"))


@cli.command()
@click.argument("run_dir", type=click.Path(exists=True))
@click.pass_obj
@guarded
def hierarchy(ctx: Ctx, run_dir):
    """Group a run's granular topics under parent topics."""
    cfg = ctx.config
    run = load_run(run_dir)
    result = hierarchy_mod.detect_hierarchy(run, cfg)
    updated = hierarchy_mod.apply_hierarchy(run, result)
    save_run(updated, run_dir)
    payload = {
        "parents": [{"id": p.id, "name": p.name} for p in result.parents],
        "child_map": result.child_map,
    }
    out_path = Path(run_dir) / "hierarchy.json"
    out_path.write_text(
        json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8"
    )
    click.echo(str(out_path))


def _predicted_clustering(run, drop_other: bool) -> tuple[Clustering, int]:
    """Map a run's assignments onto cluster indices (topics in run order)."""
    index = {t.id: i for i, t in enumerate(run.topics)}
    assignment: dict[str, int] = {}
    dropped = 0
    other_index = len(index)
    has_other = False
    for a in run.assignments:
        if a.topic_id == OTHER:
            if drop_other:
                dropped += 1
                continue
            assignment[a.doc_id] = other_index
            has_other = True
        else:
            assignment[a.doc_id] = index[a.topic_id]
    k = max(1, len(index) + (1 if has_other else 0))
    return Clustering(assignment=assignment, k=k), dropped


@cli.command()
@click.argument("run_dir", type=click.Path(exists=True))
@click.argument("gold_corpus", type=click.Path(exists=True))
@click.option("--drop-other", is_flag=True, help="Exclude OTHER-assigned docs from both sides.")
@click.pass_obj
@guarded
def metrics(ctx: Ctx, run_dir, gold_corpus, drop_other):
    """Score a run against gold labels: P1, ARI, NMI."""
    run = load_run(run_dir)
    docs = load_corpus(gold_corpus)
    predicted, dropped = _predicted_clustering(run, drop_other)
    kept = set(predicted.assignment)
    gold_docs = [d for d in docs if d.id in kept]
    gold = metrics_mod.labels_to_clustering(gold_docs)
    payload = {
        "p1": metrics_mod.p1(predicted, gold),
        "ari": metrics_mod.ari(predicted, gold),
        "nmi": metrics_mod.nmi(predicted, gold),
        "n_topics": len(run.topics),
        "n_docs": len(gold_docs),
        "dropped_other": dropped,
    }
    out_path = ctx.out_dir(run_dir) / "metrics.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(
        json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8"
    )
    click.echo(str(out_path))


def _assignments_from_predictions(run, path: Path) -> tuple[TopicAssignment, ...]:
    """Read a predictions JSONL ({doc_id, topic_name|topic_id, ...}) as assignments."""
    by_name = {}
    for t in run.topics:
        by_name.setdefault(t.name, t.id)
        by_name.setdefault(t.name.lower(), t.id)
    topic_ids = {t.id for t in run.topics}
    assignments = []
    unknown = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            doc_id = rec.get("doc_id") or rec.get("id")
            if not doc_id:
                raise ValueError(f"{path}:{lineno}: prediction row is missing doc_id")
            raw = rec.get("topic_id") or rec.get("topic_name")
            if raw is None:
                raise ValueError(f"{path}:{lineno}: prediction row is missing topic_name")
            if raw == OTHER:
                assignments.append(TopicAssignment(doc_id=doc_id, topic_id=OTHER, stage=STAGE_OTHER))
                continue
            topic_id = raw if raw in topic_ids else by_name.get(raw) or by_name.get(str(raw).lower())
            if topic_id is None:
                unknown.append(str(raw))
                continue
            assignments.append(
                TopicAssignment(doc_id=doc_id, topic_id=topic_id, stage=STAGE_GENERATED)
            )
    if unknown:
        raise ValueError(f"predictions reference topics unknown to the run: {sorted(set(unknown))}")
    return tuple(assignments)


@cli.command()
@click.argument("run_dir", type=click.Path(exists=True))
@click.argument("corpus", type=click.Path(exists=True))
@click.option("--label-accuracy-only", is_flag=True)
@click.option("--judges-only", is_flag=True)
@click.option("--sample-cap", type=int, default=None, help="Max (doc, topic) pairs to judge.")
@click.option("--predictions", type=click.Path(exists=True), default=None,
              help="Evaluate these predictions (JSONL) instead of the run's assignments.")
@click.pass_obj
@guarded
def evaluate(ctx: Ctx, run_dir, corpus, label_accuracy_only, judges_only, sample_cap, predictions):
    """LLM-based evaluation: label accuracy plus topic accuracy/completeness."""
    cfg = ctx.config
    run = load_run(run_dir)
    docs = load_corpus(corpus)
    if predictions:
        run = dataclasses.replace(
            run, assignments=_assignments_from_predictions(run, Path(predictions))
        )
    report = autoeval.evaluate_run(
        run,
        docs,
        cfg,
        label_accuracy_only=label_accuracy_only,
        judges_only=judges_only,
        sample_cap=sample_cap,
    )
    out_path = ctx.out_dir(run_dir) / "eval_report.json"
    report.save(out_path)
    click.echo(str(out_path))


@cli.command("export-distill")
@click.argument("run_dir", type=click.Path(exists=True))
@click.argument("corpus", type=click.Path(exists=True))
@click.option("--include-other", is_flag=True, help="Keep OTHER rows as an 'Other' class.")
@click.pass_obj
@guarded
def export_distill(ctx: Ctx, run_dir, corpus, include_other):
    """Export {doc_id, text, label} training rows plus labels.json."""
    run = load_run(run_dir)
    docs = load_corpus(corpus)
    include = include_other or ctx.config.get("engine", "include_other_in_export")
    out_dir = ctx.out_dir(Path(run_dir) / "distill")
    data_path, labels_path = engine.distill_export(run, docs, out_dir, include_other=include)
    click.echo(str(data_path))
    click.echo(str(labels_path))


@cli.command()
@click.argument("run_dir", type=click.Path(exists=True))
@click.pass_obj
@guarded
def report(ctx: Ctx, run_dir):
    """Render topics.csv and figures for a saved run."""
    out = Path(ctx.out) if ctx.out else None
    written = report_mod.render_report(run_dir, out)
    for path in written:
        click.echo(str(path))


def main() -> None:
    cli(obj=None)


if __name__ == "__main__":
    main()
