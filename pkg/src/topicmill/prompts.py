"""Prompt template registry, placeholder rendering, and response parsers.

Canonical template texts ship as read-only data assets next to this module
and are covered by golden checksum tests: any edit to a template breaks a
checksum, forcing deliberate review. A per-run override directory can swap in
business-customized templates with the same placeholder contract.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence

TEMPLATE_NAMES = (
    "summarization",
    "topic_generation",
    "topic_merge",
    "topic_assignment",
    "hierarchy",
    "auto_label",
    "topic_accuracy_judge",
    "topic_completeness_judge",
    "label_accuracy_judge",
)

# Templates we defined ourselves (no published source text to be faithful to).
INVENTED_TEMPLATES = frozenset({"label_accuracy_judge"})

ACCURACY_SCALE = ("Incorrect", "Partially Correct", "Mostly Correct", "Completely Correct")
COMPLETENESS_SCALE = ("Not covered", "Minorly covered", "Mostly covered", "Complete")

_PLACEHOLDER_RE = re.compile(r"\{([a-z_][a-z0-9_]*)\}")


class TemplateError(ValueError):
    pass


class MissingPlaceholderError(TemplateError):
    def __init__(self, names: Sequence[str]):
        super().__init__(f"unbound placeholders: {', '.join(sorted(names))}")
        self.names = tuple(sorted(names))


class ResponseParseError(ValueError):
    pass


class EmptyTopicListError(ResponseParseError):
    pass


class VerdictParseError(ResponseParseError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str
    required_placeholders: frozenset[str]

    @classmethod
    def from_text(cls, name: str, body: str) -> "PromptTemplate":
        found = frozenset(_PLACEHOLDER_RE.findall(body))
        return cls(name=name, body=body, required_placeholders=found)


class TemplateRegistry:
    """Loads the nine canonical templates, optionally overridden per run."""

    def __init__(self, override_dir: str | Path | None = None):
        self._templates: dict[str, PromptTemplate] = {}
        override = Path(override_dir) if override_dir else None
        for name in TEMPLATE_NAMES:
            body = None
            if override is not None:
                candidate = override / f"{name}.txt"
                if candidate.exists():
                    body = candidate.read_text(encoding="utf-8")
            if body is None:
                body = (
                    resources.files("topicmill.templates")
                    .joinpath(f"{name}.txt")
                    .read_text(encoding="utf-8")
                )
            self._templates[name] = PromptTemplate.from_text(name, body)

    def get(self, name: str) -> PromptTemplate:
        if name not in self._templates:
            raise TemplateError(f"unknown template {name!r}")
        return self._templates[name]


def render(tpl: PromptTemplate, bindings: Mapping[str, str]) -> str:
    """Substitute placeholders verbatim; template text is otherwise unchanged.

    Binding values may contain anything, including brace characters; they are
    never re-scanned for placeholders.
    """
    missing = tpl.required_placeholders - set(bindings)
    if missing:
        raise MissingPlaceholderError(sorted(missing))

    out: list[str] = []
    pos = 0
    for m in _PLACEHOLDER_RE.finditer(tpl.body):
        out.append(tpl.body[pos : m.start()])
        out.append(str(bindings[m.group(1)]))
        pos = m.end()
    out.append(tpl.body[pos:])
    return "".join(out)


def _is_none_sentinel(text: str) -> bool:
    return text.strip().strip("`'\"").strip().lower() == "none"


def parse_topic_list(response: str) -> list[str]:
    """Split a generated-topics response on commas and newlines.

    Trims whitespace, drops empties and the "None" sentinel, and deduplicates
    case-insensitively keeping the first occurrence. Raises EmptyTopicListError
    when nothing parseable remains.
    """
    parts: list[str] = []
    for line in response.splitlines():
        parts.extend(line.split(","))
    seen: set[str] = set()
    topics: list[str] = []
    for part in parts:
        name = part.strip()
        if not name or _is_none_sentinel(name):
            continue
        key = name.lower()
        if key in seen:
            continue
        seen.add(key)
        topics.append(name)
    if not topics:
        raise EmptyTopicListError(f"no topics found in response: {response!r}")
    return topics


@dataclass(frozen=True)
class MergeDirective:
    merged_name: str
    indices: tuple[int, ...]


_PAREN_LINE_RE = re.compile(r"^(?P<name>.+?)\s*\(\s*(?P<idx>\d+(?:\s*,\s*\d+)*)\s*\)\s*[.:]?\s*$")


def parse_merge_directives(response: str, n_topics: int) -> Optional[list[MergeDirective]]:
    """Parse merge/parenting directives, one per line.

    Accepted line forms: ``<name>: i, j, ...`` and ``<name> (i, j, ...)``.
    Returns None when the response is the "None" sentinel (no change).
    Indices must fall in [0, n_topics) and may appear in at most one
    directive.
    """
    if n_topics < 1:
        raise ValueError("n_topics must be >= 1")
    if _is_none_sentinel(response):
        return None

    directives: list[MergeDirective] = []
    used: set[int] = set()
    for raw_line in response.splitlines():
        line = raw_line.strip()
        if not line:
            continue
        line = re.sub(r"^[-*]\s+", "", line)  # tolerate bulleted output
        m = _PAREN_LINE_RE.match(line)
        if m:
            name = m.group("name").strip()
            idx_part = m.group("idx")
        elif ":" in line:
            name, _, idx_part = line.rpartition(":")
            name = name.strip()
        else:
            raise ResponseParseError(f"malformed merge line: {raw_line!r}")
        if not name:
            raise ResponseParseError(f"merge line has empty topic name: {raw_line!r}")
        indices: list[int] = []
        for token in idx_part.split(","):
            token = token.strip()
            if not re.fullmatch(r"\d+", token):
                raise ResponseParseError(f"malformed merge line: {raw_line!r}")
            idx = int(token)
            if not 0 <= idx < n_topics:
                raise ResponseParseError(
                    f"index {idx} out of range [0, {n_topics}) in line: {raw_line!r}"
                )
            if idx in used:
                raise ResponseParseError(f"index {idx} appears in more than one directive")
            used.add(idx)
            indices.append(idx)
        directives.append(MergeDirective(merged_name=name, indices=tuple(indices)))
    if not directives:
        raise ResponseParseError(f"no directives found in response: {response!r}")
    return directives


def parse_judge_level(response: str, scale: Sequence[str]) -> int:
    """Map a judge response to a 1-based rank on a 4-level scale.

    Case-insensitive search for level names, preferring the longest match so
    e.g. a two-word level is not shadowed by a one-word one; falls back to a
    bare digit 1-4 when no level name appears.
    """
    if len(scale) != 4:
        raise ValueError("scale must have exactly 4 level names")
    lowered = response.lower()
    best: tuple[int, int] | None = None  # (length, rank)
    for rank, level in enumerate(scale, start=1):
        if level.lower() in lowered:
            cand = (len(level), rank)
            if best is None or cand[0] > best[0]:
                best = cand
    if best is not None:
        return best[1]
    digit = re.search(r"\b([1-4])\b", response)
    if digit:
        return int(digit.group(1))
    raise VerdictParseError(f"no scale level or digit found in response: {response!r}")
