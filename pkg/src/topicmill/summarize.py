"""Targeted summarization of long documents before topic modeling.

Short documents pass through untouched (no LLM call); long ones are truncated
middle-out to a hard character cap and summarized with the business-aligned
summary prompt. The original text is always retained; downstream stages read
the summary when present.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .llm import LlmClient, LlmRequest
from .model import BusinessDefinition, Document
from .prompts import TemplateRegistry, render

TRUNCATION_MARKER = "…[truncated]…"

DEFAULT_FORMAT_INSTRUCTIONS = "Respond with the summary text only, no preamble."


@dataclass(frozen=True)
class SummarizationConfig:
    min_words_to_summarize: int = 100
    truncate_chars: int = 48_000
    business: BusinessDefinition = field(default_factory=BusinessDefinition)
    format_instructions: str = DEFAULT_FORMAT_INSTRUCTIONS

    def __post_init__(self) -> None:
        if self.min_words_to_summarize < 1:
            raise ValueError("min_words_to_summarize must be >= 1")
        if self.truncate_chars < 1000:
            raise ValueError("truncate_chars must be >= 1000")


class SummarizationError(Exception):
    def __init__(self, doc_id: str, reason: str):
        super().__init__(f"summarization failed for document {doc_id!r}: {reason}")
        self.doc_id = doc_id


class CorpusSummarizationError(Exception):
    """Aggregate failure carrying the partial results.

    `documents` holds every input document in order: summarized where the
    call succeeded, untouched where it failed.
    """

    def __init__(self, documents: list[Document], failures: dict[str, str]):
        ids = ", ".join(sorted(failures))
        super().__init__(f"summarization failed for {len(failures)} document(s): {ids}")
        self.documents = documents
        self.failures = failures


def truncate_middle(text: str, limit: int) -> str:
    """Keep the head and tail of overlong text, dropping the middle.

    Openings and closings carry the contact reason and the resolution; the
    middle of long transcripts is the safest part to lose.
    """
    if len(text) <= limit:
        return text
    budget = limit - len(TRUNCATION_MARKER)
    head = budget // 2 + budget % 2
    tail = budget // 2
    return text[:head] + TRUNCATION_MARKER + text[len(text) - tail :]


def _word_count(text: str) -> int:
    return len(text.split())


def summarize_document(
    doc: Document,
    cfg: SummarizationConfig,
    client: LlmClient,
    templates: TemplateRegistry,
    model: str = "gpt-4o",
    temperature: float = 0.0,
    max_tokens: int = 1024,
) -> Document:
    """Return the document with its summary populated.

    Documents below the word threshold pass through with summary = text and
    no LLM call.
    """
    if _word_count(doc.text) < cfg.min_words_to_summarize:
        return replace(doc, summary=doc.text)

    prompt = render(
        templates.get("summarization"),
        {
            "domain_description": cfg.business.domain_description,
            "topic_description": cfg.business.topic_description,
            "topic_definition": cfg.business.topic_definition,
            "text": truncate_middle(doc.text, cfg.truncate_chars),
            "format_instructions": cfg.format_instructions,
        },
    )
    try:
        resp = client.complete(
            LlmRequest(model=model, user=prompt, temperature=temperature, max_tokens=max_tokens),
            site="summarization",
        )
    except Exception as exc:
        raise SummarizationError(doc.id, str(exc)) from exc
    summary = resp.text.strip()
    if not summary:
        raise SummarizationError(doc.id, "provider returned an empty summary")
    return replace(doc, summary=summary)


def summarize_corpus(
    docs: list[Document],
    cfg: SummarizationConfig,
    client: LlmClient,
    templates: TemplateRegistry,
    model: str = "gpt-4o",
    temperature: float = 0.0,
    max_tokens: int = 1024,
) -> list[Document]:
    """Summarize a corpus, order preserved.

    Partial failures do not discard successes: a CorpusSummarizationError is
    raised carrying every document (failed ones untouched) plus the failure
    reasons keyed by doc id.
    """
    if not docs:
        return []

    def work(doc: Document) -> Document:
        return summarize_document(
            doc, cfg, client, templates, model=model, temperature=temperature, max_tokens=max_tokens
        )

    results: list[Document] = []
    failures: dict[str, str] = {}
    with ThreadPoolExecutor(max_workers=min(client.max_concurrency, len(docs))) as pool:
        futures = [pool.submit(work, doc) for doc in docs]
        for doc, fut in zip(docs, futures):
            try:
                results.append(fut.result())
            except SummarizationError as exc:
                failures[doc.id] = str(exc)
                results.append(doc)

    if failures:
        raise CorpusSummarizationError(results, failures)
    return results
