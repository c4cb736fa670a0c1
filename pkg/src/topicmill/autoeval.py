"""Label-free evaluation of a topic model run.

Three metrics, none requiring gold labels:

* label accuracy — for each topic, sample assigned documents, show a judge
  the original topic alongside its nearest-neighbor topics (by embedding
  similarity), and count how often the judge keeps the original. Reported as
  the macro (unweighted) average over topics.
* topic accuracy — judge rating 1-4 of how accurately the topic describes
  the text.
* topic completeness — judge rating 1-4 of how completely the topic covers
  the text.

Judge verdicts either land in {1,2,3,4} (or a candidate name, for label
accuracy) or are counted as missing; nothing is imputed. All sampling and
shuffling is seeded, so evaluation with a deterministic provider is
reproducible byte for byte.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .config import RunConfig
from .embedding import EmbeddingProvider, embed_batch, top_k_similar
from .llm import LlmClient, LlmError, LlmRequest
from .model import OTHER, BusinessDefinition, Document, TopicModelRun
from .prompts import (
    ACCURACY_SCALE,
    COMPLETENESS_SCALE,
    TemplateRegistry,
    VerdictParseError,
    parse_judge_level,
    render,
)


@dataclass(frozen=True)
class LabelAccuracyConfig:
    n_samples_per_topic: int = 10
    top_k: int = 3
    seed: int = 0
    topic_embedding: str = "name"  # or "centroid"
    shuffle_candidates: bool = True  # disabling is test-only

    def __post_init__(self) -> None:
        if self.n_samples_per_topic < 1:
            raise ValueError("n_samples_per_topic must be >= 1")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.topic_embedding not in ("name", "centroid"):
            raise ValueError("topic_embedding must be 'name' or 'centroid'")


@dataclass
class LabelAccuracyResult:
    macro: Optional[float]
    per_topic: dict[str, dict[str, Any]]  # topic id -> {name, accuracy, n_judged, n_sampled}
    skipped_topics: list[str]
    missing_verdicts: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "macro": self.macro,
            "per_topic": self.per_topic,
            "skipped_topics": self.skipped_topics,
            "missing_verdicts": self.missing_verdicts,
        }


@dataclass
class EvalReport:
    label_accuracy: Optional[LabelAccuracyResult]
    topic_accuracy_mean: Optional[float]
    topic_accuracy_histogram: dict[int, int]
    topic_completeness_mean: Optional[float]
    topic_completeness_histogram: dict[int, int]
    per_topic_judges: dict[str, dict[str, Any]]
    n_judged: int
    missing_verdicts: int
    config: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "label_accuracy": self.label_accuracy.to_dict() if self.label_accuracy else None,
            "topic_accuracy": {
                "mean": self.topic_accuracy_mean,
                "histogram": {str(k): v for k, v in sorted(self.topic_accuracy_histogram.items())},
            },
            "topic_completeness": {
                "mean": self.topic_completeness_mean,
                "histogram": {
                    str(k): v for k, v in sorted(self.topic_completeness_histogram.items())
                },
            },
            "per_topic_judges": self.per_topic_judges,
            "n_judged": self.n_judged,
            "missing_verdicts": self.missing_verdicts,
            "config": self.config,
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(self.to_dict(), indent=2, ensure_ascii=False, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return path


def _business_block(business: BusinessDefinition) -> str:
    lines = []
    if business.topic_definition:
        lines.append(f"- topic definition: {business.topic_definition}")
    if business.domain_description:
        lines.append(f"- domain description: {business.domain_description}")
    return "\n".join(lines)


def _judge_request(prompt: str, opts: Mapping[str, Any]) -> LlmRequest:
    return LlmRequest(
        model=str(opts.get("model", "gpt-4o")),
        user=prompt,
        temperature=float(opts.get("temperature", 0.0)),
        max_tokens=int(opts.get("max_tokens", 1024)),
    )


def _judge_scaled(
    template_name: str,
    scale: Sequence[str],
    doc_text: str,
    topic_name: str,
    business: BusinessDefinition,
    client: LlmClient,
    templates: TemplateRegistry,
    llm_opts: Mapping[str, Any],
) -> int:
    if not doc_text or not topic_name:
        raise ValueError("judge inputs must be nonempty")
    prompt = render(
        templates.get(template_name),
        {"business_definitions": _business_block(business), "text": doc_text, "topic": topic_name},
    )
    req = _judge_request(prompt, llm_opts)
    resp = client.complete(req, site="judge")
    try:
        return parse_judge_level(resp.text, scale)
    except VerdictParseError:
        resp = client.complete(req, site="judge", bypass_cache=True)
        return parse_judge_level(resp.text, scale)


def judge_topic_accuracy(
    doc_text: str,
    topic_name: str,
    business: BusinessDefinition,
    client: LlmClient,
    templates: TemplateRegistry,
    llm_opts: Mapping[str, Any],
) -> int:
    """Rate how accurately the topic reflects the text, 1 (incorrect) to 4."""
    return _judge_scaled(
        "topic_accuracy_judge", ACCURACY_SCALE, doc_text, topic_name, business, client, templates, llm_opts
    )


def judge_topic_completeness(
    doc_text: str,
    topic_name: str,
    business: BusinessDefinition,
    client: LlmClient,
    templates: TemplateRegistry,
    llm_opts: Mapping[str, Any],
) -> int:
    """Rate how completely the topic covers the text, 1 (not covered) to 4."""
    return _judge_scaled(
        "topic_completeness_judge", COMPLETENESS_SCALE, doc_text, topic_name, business, client, templates, llm_opts
    )


def _topic_vectors(
    run: TopicModelRun,
    docs_by_id: Mapping[str, Document],
    cfg: LabelAccuracyConfig,
    embedder: EmbeddingProvider,
) -> dict[str, np.ndarray]:
    names = [t.name for t in run.topics]
    if cfg.topic_embedding == "name":
        vecs = embed_batch(embedder, names)
        return {t.id: v for t, v in zip(run.topics, vecs)}
    # centroid mode: mean of assigned documents' vectors, renormalized
    name_vecs = embed_batch(embedder, names)
    out = {t.id: v for t, v in zip(run.topics, name_vecs)}  # fallback for empty topics
    members: dict[str, list[str]] = {t.id: [] for t in run.topics}
    for a in run.assignments:
        if a.topic_id != OTHER and a.doc_id in docs_by_id:
            members[a.topic_id].append(a.doc_id)
    for topic_id, doc_ids in members.items():
        if not doc_ids:
            continue
        vecs = embed_batch(embedder, [docs_by_id[d].effective_text for d in doc_ids])
        centroid = np.mean(vecs, axis=0)
        norm = float(np.linalg.norm(centroid))
        if norm > 0:
            out[topic_id] = centroid / norm
    return out


def _match_candidate(text: str, candidates: Sequence[str]) -> Optional[str]:
    name = text.strip().strip("`'\"").strip()
    for cand in candidates:
        if name == cand.strip():
            return cand
    lowered = name.lower()
    for cand in candidates:
        if lowered == cand.strip().lower():
            return cand
    return None


def label_accuracy(
    run: TopicModelRun,
    corpus: Sequence[Document],
    cfg: LabelAccuracyConfig,
    client: LlmClient,
    embedder: EmbeddingProvider,
    templates: TemplateRegistry,
    llm_opts: Mapping[str, Any],
) -> LabelAccuracyResult:
    """Per-topic judge-retention accuracies plus their macro average.

    For each topic, sampled documents are shown the original topic plus its
    top-k closest other topics (shuffled); the per-topic accuracy is the
    fraction of judged documents where the judge returns the original topic.
    Topics with no assigned documents are skipped and listed.
    """
    if len(run.topics) < 2:
        raise ValueError("label accuracy requires at least 2 topics")
    docs_by_id = {d.id: d for d in corpus}
    topic_vecs = _topic_vectors(run, docs_by_id, cfg, embedder)

    members: dict[str, list[str]] = {t.id: [] for t in run.topics}
    for a in run.assignments:
        if a.topic_id != OTHER:
            members[a.topic_id].append(a.doc_id)

    names_by_id = {t.id: t.name for t in run.topics}
    jobs: list[tuple[str, str, list[str]]] = []  # (topic_id, doc_id, candidates)
    skipped: list[str] = []
    for topic in run.topics:
        pool = [d for d in members[topic.id] if d in docs_by_id]
        if not pool:
            skipped.append(topic.id)
            continue
        rng = random.Random(f"{cfg.seed}:{topic.id}")
        sample = pool if len(pool) <= cfg.n_samples_per_topic else rng.sample(pool, cfg.n_samples_per_topic)
        others = [(t.id, topic_vecs[t.id]) for t in run.topics if t.id != topic.id]
        neighbor_ids = top_k_similar(topic_vecs[topic.id], others, cfg.top_k)
        candidates = [topic.name] + [names_by_id[i] for i in neighbor_ids]
        for doc_id in sample:
            cand = list(candidates)
            if cfg.shuffle_candidates:
                random.Random(f"{cfg.seed}:{topic.id}:{doc_id}").shuffle(cand)
            jobs.append((topic.id, doc_id, cand))

    def ask(job: tuple[str, str, list[str]]) -> Optional[str]:
        _, doc_id, cand = job
        prompt = render(
            templates.get("label_accuracy_judge"),
            {
                "document": docs_by_id[doc_id].effective_text,
                "candidate_topics": "\n".join(cand),
            },
        )
        req = _judge_request(prompt, llm_opts)
        try:
            resp = client.complete(req, site="judge")
            verdict = _match_candidate(resp.text, cand)
            if verdict is None:
                resp = client.complete(req, site="judge", bypass_cache=True)
                verdict = _match_candidate(resp.text, cand)
            return verdict
        except LlmError:
            return None

    with ThreadPoolExecutor(max_workers=min(client.max_concurrency, max(1, len(jobs)))) as pool_:
        verdicts = list(pool_.map(ask, jobs))

    stats: dict[str, dict[str, Any]] = {}
    missing = 0
    for (topic_id, _, _), verdict in zip(jobs, verdicts):
        s = stats.setdefault(
            topic_id,
            {"name": names_by_id[topic_id], "correct": 0, "n_judged": 0, "n_sampled": 0},
        )
        s["n_sampled"] += 1
        if verdict is None:
            missing += 1
            continue
        s["n_judged"] += 1
        if verdict == names_by_id[topic_id]:
            s["correct"] += 1

    per_topic: dict[str, dict[str, Any]] = {}
    accs: list[float] = []
    for topic in run.topics:
        if topic.id not in stats:
            continue
        s = stats[topic.id]
        acc = s["correct"] / s["n_judged"] if s["n_judged"] else None
        per_topic[topic.id] = {
            "name": s["name"],
            "accuracy": acc,
            "n_judged": s["n_judged"],
            "n_sampled": s["n_sampled"],
        }
        if acc is not None:
            accs.append(acc)
    macro = sum(accs) / len(accs) if accs else None
    return LabelAccuracyResult(
        macro=macro, per_topic=per_topic, skipped_topics=skipped, missing_verdicts=missing
    )


def evaluate_run(
    run: TopicModelRun,
    corpus: Sequence[Document],
    cfg: RunConfig,
    client: LlmClient | None = None,
    embedder: EmbeddingProvider | None = None,
    templates: TemplateRegistry | None = None,
    label_accuracy_only: bool = False,
    judges_only: bool = False,
    sample_cap: Optional[int] = None,
) -> EvalReport:
    """Full evaluation: label accuracy plus judge means over (doc, topic) pairs.

    OTHER-assigned documents are never judged. Pairs beyond the sample cap are
    dropped by a seeded sample. A pair counts toward n_judged only when both
    judges produced a verdict; every failed verdict lands in missing_verdicts.
    """
    client = client if client is not None else cfg.build_client()
    embedder = embedder if embedder is not None else cfg.build_embedder()
    templates = templates if templates is not None else cfg.build_templates()
    opts = cfg.llm_opts()
    business = cfg.business()
    seed = cfg.get("label_accuracy", "seed")
    cap = sample_cap if sample_cap is not None else cfg.get("evaluate", "sample_cap")

    docs_by_id = {d.id: d for d in corpus}
    unknown = [a.doc_id for a in run.assignments if a.doc_id not in docs_by_id]
    if unknown:
        raise ValueError(f"corpus is missing documents referenced by the run: {sorted(unknown)[:10]}")

    la: Optional[LabelAccuracyResult] = None
    if not judges_only and len(run.topics) >= 2:
        la_cfg = LabelAccuracyConfig(
            n_samples_per_topic=cfg.get("label_accuracy", "n_samples_per_topic"),
            top_k=cfg.get("label_accuracy", "top_k"),
            seed=seed,
            topic_embedding=cfg.get("label_accuracy", "topic_embedding"),
        )
        la = label_accuracy(run, corpus, la_cfg, client, embedder, templates, opts)

    acc_hist: dict[int, int] = {1: 0, 2: 0, 3: 0, 4: 0}
    comp_hist: dict[int, int] = {1: 0, 2: 0, 3: 0, 4: 0}
    per_topic: dict[str, dict[str, Any]] = {}
    n_judged = 0
    missing = la.missing_verdicts if la else 0

    names_by_id = {t.id: t.name for t in run.topics}
    pairs = [(a.doc_id, a.topic_id) for a in run.assignments if a.topic_id != OTHER]
    if len(pairs) > cap:
        chosen = set(random.Random(f"{seed}:judge_sample").sample(range(len(pairs)), cap))
        pairs = [p for i, p in enumerate(pairs) if i in chosen]

    if not label_accuracy_only and pairs:

        def ask(pair: tuple[str, str]) -> tuple[Optional[int], Optional[int]]:
            doc_id, topic_id = pair
            text = docs_by_id[doc_id].effective_text
            name = names_by_id[topic_id]
            try:
                acc = judge_topic_accuracy(text, name, business, client, templates, opts)
            except (VerdictParseError, LlmError):
                acc = None
            try:
                comp = judge_topic_completeness(text, name, business, client, templates, opts)
            except (VerdictParseError, LlmError):
                comp = None
            return acc, comp

        with ThreadPoolExecutor(max_workers=min(client.max_concurrency, len(pairs))) as pool_:
            results = list(pool_.map(ask, pairs))

        acc_sum = comp_sum = 0
        for (doc_id, topic_id), (acc, comp) in zip(pairs, results):
            missing += (acc is None) + (comp is None)
            if acc is None or comp is None:
                continue
            n_judged += 1
            acc_hist[acc] += 1
            comp_hist[comp] += 1
            acc_sum += acc
            comp_sum += comp
            t = per_topic.setdefault(
                topic_id,
                {"name": names_by_id[topic_id], "n": 0, "accuracy_sum": 0, "completeness_sum": 0},
            )
            t["n"] += 1
            t["accuracy_sum"] += acc
            t["completeness_sum"] += comp

        for t in per_topic.values():
            t["accuracy_mean"] = t.pop("accuracy_sum") / t["n"]
            t["completeness_mean"] = t.pop("completeness_sum") / t["n"]

    report = EvalReport(
        label_accuracy=la,
        topic_accuracy_mean=(
            sum(k * v for k, v in acc_hist.items()) / n_judged if n_judged else None
        ),
        topic_accuracy_histogram=acc_hist,
        topic_completeness_mean=(
            sum(k * v for k, v in comp_hist.items()) / n_judged if n_judged else None
        ),
        topic_completeness_histogram=comp_hist,
        per_topic_judges=per_topic,
        n_judged=n_judged,
        missing_verdicts=missing,
        config=cfg.data,
    )
    return report
