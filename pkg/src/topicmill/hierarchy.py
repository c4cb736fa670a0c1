"""Parent-topic detection: cluster-then-generate re-run over topic names.

Granular topic names are embedded and K-means grouped; each group goes to the
LLM once to be gathered under broad parent topics. Document assignments never
change here; only parent structure is added.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace

from .config import RunConfig
from .embedding import EmbeddingProvider, embed_batch
from .kmeans import KMeansConfig, kmeans_fit
from .llm import LlmClient, LlmError, LlmRequest
from .model import Topic, TopicModelRun
from .prompts import ResponseParseError, TemplateRegistry, parse_merge_directives, render

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HierarchyResult:
    parents: tuple[Topic, ...]
    child_map: dict[str, str]  # child topic id -> parent topic id


def detect_hierarchy(
    run: TopicModelRun,
    cfg: RunConfig,
    client: LlmClient | None = None,
    embedder: EmbeddingProvider | None = None,
    templates: TemplateRegistry | None = None,
) -> HierarchyResult:
    """Group the run's granular topics under new parent topics.

    One LLM call per topic-name cluster; a cluster whose response cannot be
    parsed degrades to "no parents for that cluster" with a warning. Topics
    left unparented stay top-level.
    """
    client = client if client is not None else cfg.build_client()
    embedder = embedder if embedder is not None else cfg.build_embedder()
    templates = templates if templates is not None else cfg.build_templates()

    referenced = {t.parent_id for t in run.topics if t.parent_id is not None}
    children = [t for t in run.topics if t.parent_id is None and t.id not in referenced]
    if len(children) < 2:
        raise ValueError("hierarchy detection requires at least 2 topics")

    vectors = embed_batch(embedder, [t.name for t in children])
    kcfg = KMeansConfig(
        target_cluster_size=cfg.get("hierarchy", "target_cluster_size"),
        seed=cfg.get("clustering", "seed"),
    )
    kres = kmeans_fit(list(zip([t.id for t in children], vectors)), kcfg)

    groups: list[list[Topic]] = [[] for _ in range(kres.clustering.k)]
    for t in children:
        groups[kres.clustering.assignment[t.id]].append(t)

    opts = cfg.llm_opts()
    counter = _next_counter(run)
    parents: list[Topic] = []
    child_map: dict[str, str] = {}
    for gi, group in enumerate(groups):
        if len(group) < 1:
            continue
        prompt = render(
            templates.get("hierarchy"),
            {
                "parent_topic_examples": cfg.get("prompts", "parent_examples"),
                "topics": "\n".join(f"{i}. {t.name}" for i, t in enumerate(group)),
            },
        )
        req = LlmRequest(
            model=opts["model"],
            user=prompt,
            temperature=opts["temperature"],
            max_tokens=opts["max_tokens"],
        )
        try:
            resp = client.complete(req, site="hierarchy")
            directives = parse_merge_directives(resp.text, len(group))
        except (ResponseParseError, LlmError) as exc:
            log.warning("no parents for topic cluster %d: %s", gi, exc)
            continue
        if directives is None:
            continue
        for directive in directives:
            parent = Topic(id=f"t{counter}", name=directive.merged_name)
            counter += 1
            parents.append(parent)
            for idx in directive.indices:
                child_map[group[idx].id] = parent.id

    return HierarchyResult(parents=tuple(parents), child_map=child_map)


def apply_hierarchy(run: TopicModelRun, result: HierarchyResult) -> TopicModelRun:
    """New run with parents appended and child parent_id set; assignments untouched."""
    parent_ids = {p.id for p in result.parents}
    for child_id, parent_id in result.child_map.items():
        if parent_id not in parent_ids:
            raise ValueError(f"child {child_id} maps to unknown parent {parent_id}")
        if run.topic_by_id(child_id) is None:
            raise ValueError(f"child {child_id} does not exist in the run")
    updated = [
        replace(t, parent_id=result.child_map[t.id]) if t.id in result.child_map else t
        for t in run.topics
    ]
    return run.with_topics(tuple(updated) + result.parents)


def _next_counter(run: TopicModelRun) -> int:
    best = -1
    for t in run.topics:
        m = re.fullmatch(r"t(\d+)", t.id)
        if m:
            best = max(best, int(m.group(1)))
    return best + 1
