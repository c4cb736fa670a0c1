"""Run configuration: an INI file with typed, schema-checked keys.

Every knob in the pipeline lives here so the resolved snapshot can be
serialized verbatim into run.json and reports; reruns from that snapshot are
exact. Unknown sections or keys are rejected, all offenders reported at once.
Secrets (API tokens) never appear in config files; only the *names* of the
environment variables holding them do.
"""

from __future__ import annotations

import configparser
from pathlib import Path
from typing import Any, Mapping, Optional

from .embedding import EmbeddingProvider, HashingEmbedder, HttpEmbedder
from .kmeans import KMeansConfig
from .llm import CallLedger, HttpChatProvider, LlmClient, MockProvider
from .model import BusinessDefinition
from .prompts import TemplateRegistry
from .summarize import DEFAULT_FORMAT_INSTRUCTIONS, SummarizationConfig

DEFAULT_NO_TOPIC_OPTION = "If the document contains no identifiable topic, output: None."


class ConfigError(ValueError):
    pass


# (type, default, allowed-values) per key; "optint" admits an unset value
_SCHEMA: dict[str, dict[str, tuple[str, Any, Optional[tuple[str, ...]]]]] = {
    "run": {
        "output_dir": ("str", "", None),
        "seed": ("int", 0, None),
    },
    "embedding": {
        "provider": ("str", "hash", ("hash", "http")),
        "dim": ("int", 256, None),
        "url": ("str", "", None),
        "model": ("str", "", None),
        "auth_env": ("str", "EMBEDDING_API_TOKEN", None),
    },
    "clustering": {
        "k": ("optint", None, None),
        "target_cluster_size": ("int", 10, None),
        "max_iter": ("int", 100, None),
        "tol": ("float", 1e-4, None),
        "seed": ("int", 0, None),
    },
    "llm": {
        "provider": ("str", "http", ("http", "mock")),
        "model": ("str", "gpt-4o", None),
        "temperature": ("float", 0.0, None),
        "max_tokens": ("int", 1024, None),
        "retries": ("int", 3, None),
        "max_concurrency": ("int", 4, None),
        "cache_dir": ("str", "", None),
        "mock_script": ("str", "", None),
        "url": ("str", "", None),
        "auth_env": ("str", "LLM_API_TOKEN", None),
    },
    "prompts": {
        "dir": ("str", "", None),
        "generation_examples": ("str", "", None),
        "merge_examples": ("str", "", None),
        "parent_examples": ("str", "", None),
        "no_topic_option": ("str", DEFAULT_NO_TOPIC_OPTION, None),
        "format_instructions": ("str", DEFAULT_FORMAT_INSTRUCTIONS, None),
    },
    "summarize": {
        "enabled": ("bool", False, None),
        "min_words": ("int", 100, None),
        "truncate_chars": ("int", 48_000, None),
    },
    "engine": {
        "min_topic_size": ("int", 3, None),
        "max_merge_rounds": ("int", 2, None),
        "combined_call": ("bool", False, None),
        "global_assignment": ("bool", False, None),
        "include_other_in_export": ("bool", False, None),
    },
    "hierarchy": {
        "target_cluster_size": ("int", 8, None),
    },
    "label_accuracy": {
        "n_samples_per_topic": ("int", 10, None),
        "top_k": ("int", 3, None),
        "seed": ("int", 0, None),
        "topic_embedding": ("str", "name", ("name", "centroid")),
    },
    "evaluate": {
        "sample_cap": ("int", 1000, None),
    },
    "business": {
        "domain_description": ("str", "", None),
        "topic_description": ("str", "", None),
        "topic_definition": ("str", "", None),
    },
}

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(kind: str, raw: str, where: str) -> Any:
    try:
        if kind == "int":
            return int(raw)
        if kind == "optint":
            return None if raw.strip().lower() in ("", "none") else int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            lowered = raw.strip().lower()
            if lowered in _BOOL_TRUE:
                return True
            if lowered in _BOOL_FALSE:
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from None


class RunConfig:
    """Fully resolved configuration: defaults overlaid with file + override values."""

    def __init__(self, data: dict[str, dict[str, Any]]):
        self.data = data

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls({sect: {k: spec[1] for k, spec in keys.items()} for sect, keys in _SCHEMA.items()})

    @classmethod
    def from_file(cls, path: str | Path | None, overrides: Mapping[tuple[str, str], Any] | None = None) -> "RunConfig":
        cfg = cls.defaults()
        problems: list[str] = []
        if path is not None:
            parser = configparser.ConfigParser(interpolation=None)
            read = parser.read(str(path), encoding="utf-8")
            if not read:
                raise ConfigError(f"config file not found: {path}")
            for section in parser.sections():
                if section not in _SCHEMA:
                    problems.append(f"unknown section [{section}]")
                    continue
                for key, raw in parser.items(section):
                    if key not in _SCHEMA[section]:
                        problems.append(f"unknown key {section}.{key}")
                        continue
                    kind, _, choices = _SCHEMA[section][key]
                    try:
                        value = _coerce(kind, raw, f"{section}.{key}")
                    except ConfigError as exc:
                        problems.append(str(exc))
                        continue
                    if choices is not None and value not in choices:
                        problems.append(f"{section}.{key}: must be one of {choices}, got {value!r}")
                        continue
                    cfg.data[section][key] = value
        if problems:
            raise ConfigError("invalid config: " + "; ".join(problems))
        if overrides:
            for (section, key), value in overrides.items():
                if section not in _SCHEMA or key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown config override {section}.{key}")
                cfg.data[section][key] = value
        return cfg

    def get(self, section: str, key: str) -> Any:
        try:
            return self.data[section][key]
        except KeyError:
            raise ConfigError(f"unknown config key {section}.{key}") from None

    def set(self, section: str, key: str, value: Any) -> None:
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        self.data[section][key] = value

    # ---- typed views --------------------------------------------------

    def business(self) -> BusinessDefinition:
        b = self.data["business"]
        return BusinessDefinition(
            domain_description=b["domain_description"],
            topic_description=b["topic_description"],
            topic_definition=b["topic_definition"],
        )

    def kmeans(self) -> KMeansConfig:
        c = self.data["clustering"]
        return KMeansConfig(
            k=c["k"],
            target_cluster_size=c["target_cluster_size"],
            max_iter=c["max_iter"],
            tol=c["tol"],
            seed=c["seed"],
        )

    def summarization(self) -> SummarizationConfig:
        s = self.data["summarize"]
        return SummarizationConfig(
            min_words_to_summarize=s["min_words"],
            truncate_chars=s["truncate_chars"],
            business=self.business(),
            format_instructions=self.data["prompts"]["format_instructions"],
        )

    def llm_opts(self) -> dict[str, Any]:
        llm = self.data["llm"]
        return {
            "model": llm["model"],
            "temperature": llm["temperature"],
            "max_tokens": llm["max_tokens"],
        }

    # ---- component factories ------------------------------------------

    def build_embedder(self) -> EmbeddingProvider:
        e = self.data["embedding"]
        if e["provider"] == "hash":
            return HashingEmbedder(dim=e["dim"])
        return HttpEmbedder(url=e["url"], model=e["model"], dim=e["dim"], auth_env=e["auth_env"])

    def build_client(self, ledger: CallLedger | None = None) -> LlmClient:
        llm = self.data["llm"]
        if llm["provider"] == "mock":
            if not llm["mock_script"]:
                raise ConfigError("llm.provider=mock requires llm.mock_script")
            provider = MockProvider.from_script(llm["mock_script"])
        else:
            provider = HttpChatProvider(url=llm["url"], auth_env=llm["auth_env"])
        return LlmClient(
            provider,
            cache_dir=llm["cache_dir"] or None,
            retries=llm["retries"],
            max_concurrency=llm["max_concurrency"],
            ledger=ledger,
        )

    def build_templates(self) -> TemplateRegistry:
        return TemplateRegistry(override_dir=self.data["prompts"]["dir"] or None)
