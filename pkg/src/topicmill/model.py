"""Shared data model: corpora, clusterings, topics, assignments, run artifacts.

All types are immutable value objects; pipeline stages produce new values
instead of mutating. Run artifacts are persisted as plain JSON/JSONL so other
tools (and the distill trainer) can consume them without importing this
package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

# Sentinel topic id for documents that fit no generated topic. Stored verbatim
# in artifacts so downstream tooling can tell it apart from real topics.
OTHER = "Other"

STAGE_GENERATED = "generated"
STAGE_REMAPPED = "remapped"
STAGE_OTHER = "other"
STAGES = (STAGE_GENERATED, STAGE_REMAPPED, STAGE_OTHER)


class CorpusError(ValueError):
    """Raised for malformed corpus files (bad JSON, missing fields, dup ids)."""


class RunValidationError(ValueError):
    """Raised when a run's assignments reference unknown topics or documents."""

    def __init__(self, message: str, doc_ids: list[str] | None = None):
        super().__init__(message)
        self.doc_ids = doc_ids or []


@dataclass(frozen=True)
class Document:
    """One corpus record. `summary`, when set, is what the pipeline reads."""

    id: str
    text: str
    summary: Optional[str] = None
    gold_label: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("document id must be nonempty")
        if not self.text:
            raise ValueError(f"document {self.id!r} has empty text")

    @property
    def effective_text(self) -> str:
        return self.summary if self.summary else self.text


@dataclass(frozen=True)
class Clustering:
    """A partition of document ids into `k` clusters (0-based indices)."""

    assignment: Mapping[str, int]
    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        bad = {d: c for d, c in self.assignment.items() if not 0 <= c < self.k}
        if bad:
            raise ValueError(f"cluster indices out of [0, {self.k}): {bad}")

    @property
    def n(self) -> int:
        return len(self.assignment)

    def members(self, cluster: int) -> list[str]:
        return [d for d, c in self.assignment.items() if c == cluster]


@dataclass(frozen=True)
class Topic:
    """A generated, human-readable granular topic.

    `parent_id` links to a parent topic (two levels max); `merged_from` lists
    topic ids absorbed into this one during refinement.
    """

    id: str
    name: str
    source_cluster: Optional[int] = None
    parent_id: Optional[str] = None
    merged_from: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError(f"topic {self.id!r} has empty name")


@dataclass(frozen=True)
class TopicAssignment:
    """Links one document to one topic id (or OTHER)."""

    doc_id: str
    topic_id: str
    stage: str = STAGE_GENERATED

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")


@dataclass(frozen=True)
class BusinessDefinition:
    """Optional guidance steering summaries, topics, and judges.

    All fields may be empty; empty guidance renders as empty prompt slots.
    """

    domain_description: str = ""
    topic_description: str = ""
    topic_definition: str = ""

    def as_dict(self) -> dict[str, str]:
        return {
            "domain_description": self.domain_description,
            "topic_description": self.topic_description,
            "topic_definition": self.topic_definition,
        }


@dataclass(frozen=True)
class TopicModelRun:
    """Full pipeline output: topics, per-document assignments, provenance.

    `llm_call_count` counts completion requests (cache hits included), so it is
    stable across cache states. Volatile data (timestamps, per-site ledger,
    failures) lives in `provenance` and is excluded from artifact comparisons.
    """

    run_id: str
    config: Mapping[str, Any]
    topics: tuple[Topic, ...]
    assignments: tuple[TopicAssignment, ...]
    clustering: Clustering
    llm_call_count: int = 0
    provenance: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.llm_call_count < 0:
            raise ValueError("llm_call_count must be >= 0")

    def topic_by_id(self, topic_id: str) -> Optional[Topic]:
        for t in self.topics:
            if t.id == topic_id:
                return t
        return None

    def with_topics(self, topics: Iterable[Topic]) -> "TopicModelRun":
        return replace(self, topics=tuple(topics))


def load_corpus(path: str | Path) -> list[Document]:
    """Read a JSONL corpus: one object per line with `id` and `text`.

    Optional fields: `label` (ground truth), `summary`. Blank lines are
    skipped. Duplicate ids and malformed lines raise CorpusError with the
    offending line number.
    """
    path = Path(path)
    docs: list[Document] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise CorpusError(f"{path}:{lineno}: expected a JSON object")
            for fld in ("id", "text"):
                if fld not in rec or not isinstance(rec[fld], str) or not rec[fld]:
                    raise CorpusError(f"{path}:{lineno}: missing or empty {fld!r} field")
            if rec["id"] in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate document id {rec['id']!r}")
            seen.add(rec["id"])
            docs.append(
                Document(
                    id=rec["id"],
                    text=rec["text"],
                    summary=rec.get("summary") or None,
                    gold_label=rec.get("label"),
                )
            )
    return docs


def save_corpus(docs: Iterable[Document], path: str | Path) -> None:
    """Write documents back out as corpus JSONL (used by the summarize command)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for doc in docs:
            rec: dict[str, Any] = {"id": doc.id, "text": doc.text}
            if doc.summary is not None:
                rec["summary"] = doc.summary
            if doc.gold_label is not None:
                rec["label"] = doc.gold_label
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def _topic_to_json(topic: Topic) -> dict[str, Any]:
    rec: dict[str, Any] = {"id": topic.id, "name": topic.name}
    if topic.source_cluster is not None:
        rec["source_cluster"] = topic.source_cluster
    if topic.parent_id is not None:
        rec["parent_id"] = topic.parent_id
    if topic.merged_from:
        rec["merged_from"] = list(topic.merged_from)
    return rec


def _topic_from_json(rec: Mapping[str, Any]) -> Topic:
    return Topic(
        id=rec["id"],
        name=rec["name"],
        source_cluster=rec.get("source_cluster"),
        parent_id=rec.get("parent_id"),
        merged_from=tuple(rec.get("merged_from", ())),
    )


def save_run(run: TopicModelRun, out_dir: str | Path) -> Path:
    """Persist a run as topics.json + assignments.jsonl + run.json.

    Round-trips losslessly through load_run.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    topics_payload = [_topic_to_json(t) for t in run.topics]
    (out / "topics.json").write_text(
        json.dumps(topics_payload, indent=2, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8",
    )

    with (out / "assignments.jsonl").open("w", encoding="utf-8") as fh:
        for a in run.assignments:
            fh.write(
                json.dumps(
                    {"doc_id": a.doc_id, "topic_id": a.topic_id, "stage": a.stage},
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )

    run_payload = {
        "run_id": run.run_id,
        "config": run.config,
        "clustering": {"k": run.clustering.k, "assignment": dict(run.clustering.assignment)},
        "llm_call_count": run.llm_call_count,
        "provenance": dict(run.provenance),
    }
    (out / "run.json").write_text(
        json.dumps(run_payload, indent=2, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return out


def load_run(run_dir: str | Path) -> TopicModelRun:
    run_dir = Path(run_dir)
    try:
        topics_raw = json.loads((run_dir / "topics.json").read_text(encoding="utf-8"))
        run_raw = json.loads((run_dir / "run.json").read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise FileNotFoundError(f"not a run directory: {run_dir} ({exc})") from exc

    assignments = []
    with (run_dir / "assignments.jsonl").open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            assignments.append(
                TopicAssignment(doc_id=rec["doc_id"], topic_id=rec["topic_id"], stage=rec["stage"])
            )

    clustering = Clustering(
        assignment=dict(run_raw["clustering"]["assignment"]), k=run_raw["clustering"]["k"]
    )
    return TopicModelRun(
        run_id=run_raw["run_id"],
        config=run_raw["config"],
        topics=tuple(_topic_from_json(t) for t in topics_raw),
        assignments=tuple(assignments),
        clustering=clustering,
        llm_call_count=run_raw["llm_call_count"],
        provenance=run_raw.get("provenance", {}),
    )


def validate_run(run: TopicModelRun) -> None:
    """Check referential integrity: every assignment resolves to a topic or OTHER,
    and each document is assigned exactly once. Raises RunValidationError listing
    offending doc ids."""
    topic_ids = {t.id for t in run.topics}
    dangling = [a.doc_id for a in run.assignments if a.topic_id != OTHER and a.topic_id not in topic_ids]
    seen: set[str] = set()
    dupes = []
    for a in run.assignments:
        if a.doc_id in seen:
            dupes.append(a.doc_id)
        seen.add(a.doc_id)
    problems = []
    if dangling:
        problems.append(f"assignments reference unknown topics for docs: {sorted(dangling)}")
    if dupes:
        problems.append(f"documents assigned more than once: {sorted(set(dupes))}")
    if problems:
        raise RunValidationError("; ".join(problems), doc_ids=sorted(set(dangling) | set(dupes)))
