"""The cluster-then-generate pipeline.

Documents are embedded and K-means partitioned into small clusters; for each
cluster one LLM call names the granular topics present and one more assigns
each document to a topic (or "Other"). A refinement pass then merges topics
that are paraphrases of one another and remaps their documents. The whole run
costs 2 calls per cluster plus one per merge round, independent of how many
topics come out, and the call ledger makes that budget assertable.

Clusters are processed concurrently; results are assembled in cluster-index
order, so runs are deterministic for a deterministic provider.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .config import RunConfig
from .embedding import EmbeddingProvider, embed_batch
from .kmeans import choose_k, kmeans_fit
from .llm import LlmClient, LlmError, LlmRequest
from .model import (
    OTHER,
    STAGE_GENERATED,
    STAGE_OTHER,
    STAGE_REMAPPED,
    BusinessDefinition,
    Document,
    Topic,
    TopicAssignment,
    TopicModelRun,
    save_run,
    validate_run,
)
from .prompts import (
    EmptyTopicListError,
    ResponseParseError,
    TemplateRegistry,
    parse_merge_directives,
    parse_topic_list,
    render,
)
from .summarize import CorpusSummarizationError, summarize_corpus

log = logging.getLogger(__name__)

# per-document cap inside generation/assignment prompts, to keep cluster
# prompts within context budgets
DOC_PROMPT_CHARS = 1500

_DOC_LINE_RE = re.compile(r"^\s*Doc\s+(\d+)\s*[:.)-]\s*(.*)$", re.IGNORECASE)


@dataclass(frozen=True)
class RefinementConfig:
    min_topic_size: int = 3
    max_merge_rounds: int = 2

    def __post_init__(self) -> None:
        if self.min_topic_size < 1:
            raise ValueError("min_topic_size must be >= 1")
        if self.max_merge_rounds < 1:
            raise ValueError("max_merge_rounds must be >= 1")


@dataclass(frozen=True)
class ClusterGenerationResult:
    cluster_index: int
    topics: tuple[str, ...]
    doc_topic_map: Mapping[str, str]  # doc id -> topic name or OTHER


class PipelineError(Exception):
    pass


def _squash(text: str, limit: int = DOC_PROMPT_CHARS) -> str:
    flat = " ".join(text.split())
    return flat[:limit]


def _tag_docs(docs: Sequence[Document]) -> str:
    return "\n".join(f"Doc {i}: {_squash(d.effective_text)}" for i, d in enumerate(docs))


def _clean_topic_line(line: str) -> str:
    return line.strip().strip("`'\"").strip().rstrip(".").strip()


def _match_topic(raw: str, candidates: Sequence[str]) -> str:
    """Map a response line onto a candidate topic name, else OTHER."""
    name = _clean_topic_line(raw)
    if not name or name.lower() in ("other", "none"):
        return OTHER
    for cand in candidates:
        if name == cand:
            return cand
    lowered = name.lower()
    for cand in candidates:
        if lowered == cand.lower():
            return cand
    return OTHER


def _parse_assignment_response(
    text: str, docs: Sequence[Document], candidates: Sequence[str]
) -> dict[str, str]:
    """Interpret an assignment response as doc -> topic name (or OTHER).

    Accepts explicit ``Doc <i>: <topic>`` lines, a single bare topic applying
    to every listed document, or positional one-topic-per-line output. Any
    unmatched or missing document falls back to OTHER.
    """
    lines = [l for l in text.splitlines() if l.strip()]
    mapping = {d.id: OTHER for d in docs}
    doc_lines = [(m, l) for l in lines if (m := _DOC_LINE_RE.match(l))]
    if doc_lines:
        for m, _ in doc_lines:
            idx = int(m.group(1))
            if 0 <= idx < len(docs):
                mapping[docs[idx].id] = _match_topic(m.group(2), candidates)
    elif len(lines) == 1:
        topic = _match_topic(lines[0], candidates)
        for d in docs:
            mapping[d.id] = topic
    else:
        for d, line in zip(docs, lines):
            mapping[d.id] = _match_topic(line, candidates)
    return mapping


class TopicEngine:
    """Holds the LLM client, templates, and prompt bindings for one run."""

    def __init__(
        self,
        client: LlmClient,
        templates: TemplateRegistry,
        business: BusinessDefinition,
        llm_opts: Mapping[str, object],
        generation_examples: str = "",
        merge_examples: str = "",
        no_topic_option: str = "If the document contains no identifiable topic, output: None.",
    ):
        self.client = client
        self.templates = templates
        self.business = business
        self.llm_opts = dict(llm_opts)
        self.generation_examples = generation_examples
        self.merge_examples = merge_examples
        self.no_topic_option = no_topic_option

    def _request(self, prompt: str) -> LlmRequest:
        return LlmRequest(
            model=str(self.llm_opts.get("model", "gpt-4o")),
            user=prompt,
            temperature=float(self.llm_opts.get("temperature", 0.0)),
            max_tokens=int(self.llm_opts.get("max_tokens", 1024)),
        )

    # ---- per-cluster calls ---------------------------------------------

    def generate_cluster_topics(self, docs: Sequence[Document]) -> list[str]:
        """One generation call over the index-tagged cluster documents."""
        prompt = render(
            self.templates.get("topic_generation"),
            {
                "topic_description": self.business.topic_description,
                "topic_generation_examples": self.generation_examples,
                "topic_definition": self.business.topic_definition,
                "no_topic_option": self.no_topic_option,
                "document": _tag_docs(docs),
            },
        )
        resp = self.client.complete(self._request(prompt), site="generation")
        try:
            return parse_topic_list(resp.text)
        except EmptyTopicListError:
            return []  # the "None" sentinel: cluster has no identifiable topic

    def assign_cluster_docs(
        self, docs: Sequence[Document], candidates: Sequence[str]
    ) -> dict[str, str]:
        """One assignment call mapping each cluster document onto a candidate."""
        if not candidates:
            return {d.id: OTHER for d in docs}
        prompt = render(
            self.templates.get("topic_assignment"),
            {"document": _tag_docs(docs), "main_topics": "\n".join(candidates)},
        )
        resp = self.client.complete(self._request(prompt), site="assignment")
        return _parse_assignment_response(resp.text, docs, candidates)

    def generate_and_assign_cluster(
        self, docs: Sequence[Document], cluster_index: int
    ) -> ClusterGenerationResult:
        """The default two-call path: generate topics, then assign documents."""
        if not docs:
            raise ValueError("cluster must contain at least one document")
        topics = self.generate_cluster_topics(docs)
        if topics:
            doc_map = self.assign_cluster_docs(docs, topics)
        else:
            doc_map = {d.id: OTHER for d in docs}
        return ClusterGenerationResult(
            cluster_index=cluster_index, topics=tuple(topics), doc_topic_map=doc_map
        )

    def combined_cluster_call(
        self, docs: Sequence[Document], cluster_index: int
    ) -> ClusterGenerationResult:
        """One-call variant: the generation prompt must answer with per-document
        ``Doc <i>: <topic>`` lines (or a single topic covering every document)."""
        prompt = render(
            self.templates.get("topic_generation"),
            {
                "topic_description": self.business.topic_description,
                "topic_generation_examples": self.generation_examples,
                "topic_definition": self.business.topic_definition,
                "no_topic_option": self.no_topic_option,
                "document": _tag_docs(docs),
            },
        )
        resp = self.client.complete(self._request(prompt), site="generation")
        lines = [l for l in resp.text.splitlines() if l.strip()]
        doc_lines = [(m, l) for l in lines if (m := _DOC_LINE_RE.match(l))]
        topics: list[str] = []
        doc_map = {d.id: OTHER for d in docs}
        if doc_lines:
            seen: set[str] = set()
            for m, _ in doc_lines:
                idx = int(m.group(1))
                if not 0 <= idx < len(docs):
                    continue
                first = m.group(2).split(",")[0]
                name = _clean_topic_line(first)
                if not name or name.lower() in ("other", "none"):
                    continue
                if name.lower() not in seen:
                    seen.add(name.lower())
                    topics.append(name)
                doc_map[docs[idx].id] = next(t for t in topics if t.lower() == name.lower())
        else:
            try:
                topics = parse_topic_list(resp.text)
            except EmptyTopicListError:
                topics = []
            if len(topics) == 1:
                doc_map = {d.id: topics[0] for d in docs}
        return ClusterGenerationResult(
            cluster_index=cluster_index, topics=tuple(topics), doc_topic_map=doc_map
        )

    # ---- refinement ------------------------------------------------------

    def refine_topics(
        self,
        topics: Sequence[Topic],
        assignments: Sequence[TopicAssignment],
        cfg: RefinementConfig,
    ) -> tuple[list[Topic], list[TopicAssignment]]:
        """Merge paraphrase/near-duplicate topics and remap their documents.

        Small topics (fewer than min_topic_size assigned docs) are listed
        first in the merge prompt as the primary merge candidates, but the
        prompt sees the full topic list. Refinement is best-effort: a parse
        failure (after one cache-bypassing retry) abandons the round and
        returns the prior state. Assignment count is preserved exactly.
        """
        topics = list(topics)
        assignments = list(assignments)
        known = {t.id for t in topics}
        for a in assignments:
            if a.topic_id != OTHER and a.topic_id not in known:
                raise ValueError(f"assignment references unknown topic {a.topic_id!r}")

        counter = _next_topic_counter(topics)
        for _ in range(cfg.max_merge_rounds):
            if len(topics) < 2:
                break
            sizes: dict[str, int] = {t.id: 0 for t in topics}
            for a in assignments:
                if a.topic_id in sizes:
                    sizes[a.topic_id] += 1
            order = sorted(
                range(len(topics)),
                key=lambda i: (0 if sizes[topics[i].id] < cfg.min_topic_size else 1, i),
            )
            listed = [topics[i] for i in order]
            prompt = render(
                self.templates.get("topic_merge"),
                {
                    "topic_merge_examples": self.merge_examples,
                    "topic_definition": self.business.topic_definition,
                    "topic": "\n".join(f"{i}. {t.name}" for i, t in enumerate(listed)),
                },
            )
            directives = None
            try:
                resp = self.client.complete(self._request(prompt), site="refinement")
                directives = parse_merge_directives(resp.text, len(listed))
            except ResponseParseError:
                try:
                    resp = self.client.complete(
                        self._request(prompt), site="refinement", bypass_cache=True
                    )
                    directives = parse_merge_directives(resp.text, len(listed))
                except (ResponseParseError, LlmError) as exc:
                    log.warning("refinement round abandoned: %s", exc)
                    return topics, assignments
            except LlmError as exc:
                log.warning("refinement round abandoned: %s", exc)
                return topics, assignments

            if directives is None:
                break  # NoChange

            absorbed_to_new: dict[str, str] = {}
            new_topics: list[Topic] = []
            absorbed_ids: set[str] = set()
            for directive in directives:
                sources = [listed[i] for i in directive.indices]
                merged = Topic(
                    id=f"t{counter}",
                    name=directive.merged_name,
                    merged_from=tuple(t.id for t in sources),
                )
                counter += 1
                new_topics.append(merged)
                for src in sources:
                    absorbed_ids.add(src.id)
                    absorbed_to_new[src.id] = merged.id

            topics = [t for t in topics if t.id not in absorbed_ids] + new_topics
            assignments = [
                replace(a, topic_id=absorbed_to_new[a.topic_id], stage=STAGE_REMAPPED)
                if a.topic_id in absorbed_to_new
                else a
                for a in assignments
            ]
        return topics, assignments


def _next_topic_counter(topics: Sequence[Topic]) -> int:
    best = -1
    for t in topics:
        m = re.fullmatch(r"t(\d+)", t.id)
        if m:
            best = max(best, int(m.group(1)))
    return best + 1


# config keys that are pure infrastructure paths; they never change results,
# so the run id ignores them
_PATH_KEYS = (("run", "output_dir"), ("llm", "cache_dir"), ("llm", "mock_script"), ("prompts", "dir"))


def _run_id(config: Mapping, corpus: Sequence[Document]) -> str:
    redacted = {sect: dict(keys) for sect, keys in config.items()}
    for sect, key in _PATH_KEYS:
        redacted.get(sect, {}).pop(key, None)
    h = hashlib.sha256()
    h.update(json.dumps(redacted, sort_keys=True, ensure_ascii=False, default=str).encode("utf-8"))
    for doc in corpus:
        h.update(doc.id.encode("utf-8"))
        h.update(hashlib.sha256(doc.effective_text.encode("utf-8")).digest())
    return h.hexdigest()[:12]


def plan_run(n_docs: int, cfg: RunConfig) -> dict[str, int]:
    """Cluster count and worst-case core-call budget, without any LLM call."""
    k = choose_k(n_docs, cfg.kmeans())
    calls_per_cluster = 1 if cfg.get("engine", "combined_call") else 2
    return {
        "planned_clusters": k,
        "llm_call_budget": calls_per_cluster * k + cfg.get("engine", "max_merge_rounds"),
    }


def run_topic_modeling(
    corpus: Sequence[Document],
    cfg: RunConfig,
    client: LlmClient | None = None,
    embedder: EmbeddingProvider | None = None,
    templates: TemplateRegistry | None = None,
) -> TopicModelRun:
    """Run the full pipeline: (summarize) -> embed -> K-means -> per-cluster
    generate+assign -> refine. Returns the assembled run; persists it when
    run.output_dir is configured.

    Individual cluster failures degrade gracefully (their documents go to
    OTHER and the failure is recorded in provenance); the run only fails
    outright when every cluster fails.
    """
    if not corpus:
        raise ValueError("corpus must be nonempty")
    seen: set[str] = set()
    for doc in corpus:
        if doc.id in seen:
            raise ValueError(f"duplicate document id {doc.id!r} in corpus")
        seen.add(doc.id)

    started = time.monotonic()
    client = client if client is not None else cfg.build_client()
    embedder = embedder if embedder is not None else cfg.build_embedder()
    templates = templates if templates is not None else cfg.build_templates()
    calls_before = client.ledger.total()
    failures: list[dict[str, str]] = []

    docs = list(corpus)
    if cfg.get("summarize", "enabled"):
        try:
            docs = summarize_corpus(docs, cfg.summarization(), client, templates, **cfg.llm_opts())
        except CorpusSummarizationError as exc:
            docs = exc.documents
            for doc_id, reason in sorted(exc.failures.items()):
                failures.append({"stage": "summarization", "doc_id": doc_id, "error": reason})

    vectors = embed_batch(embedder, [d.effective_text for d in docs])
    kres = kmeans_fit(list(zip([d.id for d in docs], vectors)), cfg.kmeans())
    k = kres.clustering.k

    by_cluster: list[list[Document]] = [[] for _ in range(k)]
    for doc in docs:
        by_cluster[kres.clustering.assignment[doc.id]].append(doc)

    engine = TopicEngine(
        client,
        templates,
        cfg.business(),
        cfg.llm_opts(),
        generation_examples=cfg.get("prompts", "generation_examples"),
        merge_examples=cfg.get("prompts", "merge_examples"),
        no_topic_option=cfg.get("prompts", "no_topic_option"),
    )
    combined = cfg.get("engine", "combined_call")
    global_assignment = cfg.get("engine", "global_assignment")
    if combined and global_assignment:
        raise ValueError("engine.combined_call and engine.global_assignment are mutually exclusive")

    def guarded(fn, idx: int, *args):
        try:
            return fn(*args)
        except LlmError as exc:
            failures.append({"stage": fn.__name__, "cluster": str(idx), "error": str(exc)})
            return None

    def empty_result(i: int) -> ClusterGenerationResult:
        return ClusterGenerationResult(cluster_index=i, topics=(), doc_topic_map={})

    results: list[ClusterGenerationResult | None] = []
    workers = min(client.max_concurrency, k)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        if global_assignment:
            gen_futs = [
                pool.submit(guarded, engine.generate_cluster_topics, i, by_cluster[i])
                if by_cluster[i]
                else None
                for i in range(k)
            ]
            per_cluster_topics = [f.result() if f is not None else [] for f in gen_futs]
            global_names: list[str] = []
            seen_names: set[str] = set()
            for names in per_cluster_topics:
                for name in names or ():
                    if name.lower() not in seen_names:
                        seen_names.add(name.lower())
                        global_names.append(name)
            asg_futs = [
                pool.submit(guarded, engine.assign_cluster_docs, i, by_cluster[i], global_names)
                if by_cluster[i]
                else None
                for i in range(k)
            ]
            for i in range(k):
                if asg_futs[i] is None:
                    results.append(empty_result(i))
                    continue
                names = per_cluster_topics[i]
                doc_map = asg_futs[i].result()
                if names is None and doc_map is None:
                    results.append(None)
                else:
                    results.append(
                        ClusterGenerationResult(
                            cluster_index=i,
                            topics=tuple(names or ()),
                            doc_topic_map=doc_map or {d.id: OTHER for d in by_cluster[i]},
                        )
                    )
        else:
            step = engine.combined_cluster_call if combined else engine.generate_and_assign_cluster
            futs = [
                pool.submit(guarded, step, i, by_cluster[i], i) if by_cluster[i] else None
                for i in range(k)
            ]
            results = [f.result() if f is not None else empty_result(i) for i, f in enumerate(futs)]

    if all(results[i] is None for i in range(k) if by_cluster[i]):
        raise PipelineError(f"every cluster failed: {failures}")

    # assemble topics in cluster order; ids are t<counter> in creation order
    topics: list[Topic] = []
    name_by_cluster: list[dict[str, Topic]] = []
    global_by_name: dict[str, Topic] = {}
    counter = 0
    for i, result in enumerate(results):
        local: dict[str, Topic] = {}
        if result is not None:
            for name in result.topics:
                topic = Topic(id=f"t{counter}", name=name, source_cluster=i)
                counter += 1
                if name not in local:
                    local[name] = topic
                if name.lower() not in global_by_name:
                    global_by_name[name.lower()] = topic
                topics.append(topic)
        name_by_cluster.append(local)

    assignments: list[TopicAssignment] = []
    for doc in docs:
        ci = kres.clustering.assignment[doc.id]
        result = results[ci]
        name = result.doc_topic_map.get(doc.id, OTHER) if result is not None else OTHER
        topic = None
        if name != OTHER:
            topic = name_by_cluster[ci].get(name) or global_by_name.get(name.lower())
        if topic is None:
            assignments.append(TopicAssignment(doc_id=doc.id, topic_id=OTHER, stage=STAGE_OTHER))
        else:
            assignments.append(
                TopicAssignment(doc_id=doc.id, topic_id=topic.id, stage=STAGE_GENERATED)
            )

    if topics:
        refinement = RefinementConfig(
            min_topic_size=cfg.get("engine", "min_topic_size"),
            max_merge_rounds=cfg.get("engine", "max_merge_rounds"),
        )
        topics, assignments = engine.refine_topics(topics, assignments, refinement)

    run = TopicModelRun(
        run_id=_run_id(cfg.data, docs),
        config=cfg.data,
        topics=tuple(topics),
        assignments=tuple(assignments),
        clustering=kres.clustering,
        llm_call_count=client.ledger.total() - calls_before,
        provenance={
            "created_at": datetime.now(timezone.utc).isoformat(),
            "duration_s": round(time.monotonic() - started, 3),
            "embedder": embedder.name,
            "kmeans": {"iterations": kres.iterations_run, "sse": kres.sse},
            "ledger": client.ledger.snapshot(),
            "failures": failures,
        },
    )
    validate_run(run)

    out_dir = cfg.get("run", "output_dir")
    if out_dir:
        save_run(run, out_dir)
    return run


def distill_export(
    run: TopicModelRun,
    docs: Sequence[Document],
    out_dir: str | Path,
    include_other: bool = False,
) -> tuple[Path, Path]:
    """Write training data for a distilled classifier.

    distill.jsonl holds {doc_id, text, label} rows (summary text when
    present); labels.json enumerates the classes. OTHER rows are excluded
    unless include_other is set, in which case "Other" becomes a class.
    """
    if not run.topics:
        raise PipelineError("nothing to distill: run has no topics")
    by_id = {d.id: d for d in docs}
    missing = [a.doc_id for a in run.assignments if a.doc_id not in by_id]
    if missing:
        raise PipelineError(f"corpus is missing documents referenced by the run: {sorted(missing)}")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_path = out / "distill.jsonl"
    labels_path = out / "labels.json"

    topic_names = {t.id: t.name for t in run.topics}
    with data_path.open("w", encoding="utf-8") as fh:
        for a in run.assignments:
            if a.topic_id == OTHER and not include_other:
                continue
            label = OTHER if a.topic_id == OTHER else topic_names[a.topic_id]
            doc = by_id[a.doc_id]
            fh.write(
                json.dumps(
                    {"doc_id": a.doc_id, "text": doc.effective_text, "label": label},
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )

    classes: list[str] = []
    for t in run.topics:
        if t.name not in classes:
            classes.append(t.name)
    if include_other and any(a.topic_id == OTHER for a in run.assignments):
        classes.append(OTHER)
    labels_path.write_text(
        json.dumps(classes, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    return data_path, labels_path
