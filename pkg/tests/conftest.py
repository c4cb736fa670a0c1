"""Shared fixtures: a planted-topic corpus and mock LLM scripts.

The blob corpus has four keyword families of ten documents each. Family
keywords appear lowercase in document text while topic names are capitalized,
so case-sensitive mock patterns can key on the document text without being
confused by topic names elsewhere in a prompt.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from topicmill.config import RunConfig
from topicmill.llm import CallLedger, LlmClient, MockProvider
from topicmill.model import Document
from topicmill.prompts import TemplateRegistry

FAMILY_WORDS = {
    "refund": ["refund", "overdraft", "fee", "reimburse", "chargeback"],
    "card": ["card", "swipe", "contactless", "declined", "wallet"],
    "loan": ["loan", "mortgage", "borrow", "installment", "amortize"],
    "password": ["password", "login", "locked", "credential", "otp"],
}

FAMILY_TOPICS = {
    "refund": "Refund requests",
    "card": "Card issues",
    "loan": "Loan questions",
    "password": "Password resets",
}

DOCS_PER_FAMILY = 10


def make_blob_docs(seed: int = 7) -> list[Document]:
    rng = random.Random(seed)
    docs = []
    for family, words in FAMILY_WORDS.items():
        for i in range(DOCS_PER_FAMILY):
            # every doc carries its family keyword so keyword-anchored mock
            # entries always match, even for single-document prompts
            body = " ".join([family] + rng.choices(words, k=11))
            docs.append(
                Document(
                    id=f"{family}-{i}",
                    text=f"{body} {i}",
                    gold_label=FAMILY_TOPICS[family],
                )
            )
    return docs


def blob_mock_entries() -> list[dict]:
    entries = []
    for kw, topic in FAMILY_TOPICS.items():
        entries.append(
            {"match": f"(?s)generate topics within the documents.*{kw}", "response": topic}
        )
    for topic in FAMILY_TOPICS.values():
        entries.append(
            {"match": rf"(?s)very probably fall.*\[Main topics\].*{topic}", "response": topic}
        )
    entries.append({"match": "merge topics that are paraphrases", "response": "None"})
    for kw, topic in FAMILY_TOPICS.items():
        entries.append(
            {"match": rf"(?s)best-fitting topic name verbatim.*\[Document\].*{kw}", "response": topic}
        )
    entries.append({"match": "evaluate the accuracy of the topic", "response": "Completely Correct"})
    entries.append({"match": "evaluate the completeness of the topic", "response": "Complete"})
    return entries


def write_corpus(docs: list[Document], path: Path) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for d in docs:
            rec = {"id": d.id, "text": d.text}
            if d.gold_label is not None:
                rec["label"] = d.gold_label
            if d.summary is not None:
                rec["summary"] = d.summary
            fh.write(json.dumps(rec) + "\n")
    return path


def write_mock_script(entries: list[dict], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(entries, indent=1), encoding="utf-8")
    return path


def make_client(entries: list[dict], cache_dir: Path | None = None, **kwargs) -> LlmClient:
    kwargs.setdefault("backoff_s", 0.001)
    return LlmClient(MockProvider(entries), cache_dir=cache_dir, ledger=CallLedger(), **kwargs)


def make_run_config(
    tmp_path: Path,
    entries: list[dict],
    out_dir: Path | None = None,
    cache_dir: Path | None = None,
    **keys,
) -> RunConfig:
    """RunConfig wired to a mock script written under tmp_path.

    Extra settings are passed as {"section.key": value} keyword-style pairs in
    `keys` (dots encoded as double underscores, e.g. engine__max_merge_rounds).
    """
    script = write_mock_script(entries, tmp_path / "mock-script.json")
    cfg = RunConfig.defaults()
    cfg.set("llm", "provider", "mock")
    cfg.set("llm", "mock_script", str(script))
    if out_dir is not None:
        cfg.set("run", "output_dir", str(out_dir))
    if cache_dir is not None:
        cfg.set("llm", "cache_dir", str(cache_dir))
    for dotted, value in keys.items():
        section, key = dotted.split("__", 1)
        cfg.set(section, key, value)
    return cfg


@pytest.fixture(scope="session")
def registry() -> TemplateRegistry:
    return TemplateRegistry()


@pytest.fixture
def blob_docs() -> list[Document]:
    return make_blob_docs()


@pytest.fixture
def blob_corpus_file(tmp_path, blob_docs) -> Path:
    return write_corpus(blob_docs, tmp_path / "corpus.jsonl")


@pytest.fixture
def blob_mock_script(tmp_path) -> Path:
    return write_mock_script(blob_mock_entries(), tmp_path / "mock.json")
