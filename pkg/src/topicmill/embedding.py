"""Dense text embeddings behind a provider abstraction, plus similarity queries.

Two providers ship built in:

* HashingEmbedder — deterministic offline embedder that hashes character
  n-grams into a fixed-dim vector. No model downloads, so clustering behavior
  in tests is reproducible anywhere.
* HttpEmbedder — remote embedding endpoint speaking the common
  ``{"model": ..., "input": [...]}`` protocol.

All vectors are L2-normalized at ingestion; with unit vectors, K-means on
Euclidean distance orders identically to cosine similarity.
"""

from __future__ import annotations

import hashlib
import os
from typing import Sequence

import numpy as np
import requests


class EmbeddingError(ValueError):
    pass


def _l2_normalize(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=-1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return mat / norms


class EmbeddingProvider:
    """Deterministic text -> vector mapping. Subclasses set `name` and `dim`."""

    name: str = "base"
    dim: int = 0

    def _embed(self, texts: Sequence[str]) -> np.ndarray:
        raise NotImplementedError


class HashingEmbedder(EmbeddingProvider):
    """Hash character n-grams of lowercased text into a fixed-dim vector.

    Each n-gram contributes +/-1 at a hashed index (sign from a second hash
    bit); the result is L2-normalized. Identical text always yields an
    identical vector.
    """

    def __init__(self, dim: int = 256, ngram: int = 3):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.name = f"hash-ngram{ngram}-{dim}"
        self.dim = dim
        self.ngram = ngram

    def _embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        s = f" {text.lower()} "
        n = self.ngram
        if len(s) < n:
            s = s.ljust(n)
        for i in range(len(s) - n + 1):
            digest = hashlib.blake2b(s[i : i + n].encode("utf-8"), digest_size=8).digest()
            idx = int.from_bytes(digest[:4], "little") % self.dim
            sign = 1.0 if digest[4] & 1 else -1.0
            vec[idx] += sign
        return vec

    def _embed(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self._embed_one(t) for t in texts])


class HttpEmbedder(EmbeddingProvider):
    """Remote embedding endpoint: POST {"model", "input"} -> {"data": [...]}.

    Auth is a bearer token read from the environment variable named by
    `auth_env`; responses are re-ordered by their "index" field.
    """

    def __init__(self, url: str, model: str, dim: int, auth_env: str = "EMBEDDING_API_TOKEN",
                 timeout_s: float = 60.0, session: requests.Session | None = None):
        if not url:
            raise ValueError("embedding url must be configured for the http provider")
        self.name = f"http:{model}"
        self.dim = dim
        self.url = url
        self.model = model
        self.auth_env = auth_env
        self.timeout_s = timeout_s
        self._session = session or requests.Session()

    def _embed(self, texts: Sequence[str]) -> np.ndarray:
        headers = {}
        token = os.environ.get(self.auth_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        resp = self._session.post(
            self.url,
            json={"model": self.model, "input": list(texts)},
            headers=headers,
            timeout=self.timeout_s,
        )
        if resp.status_code != 200:
            raise EmbeddingError(f"embedding endpoint returned {resp.status_code}: {resp.text[:200]}")
        data = resp.json()["data"]
        rows = sorted(data, key=lambda r: r["index"])
        mat = np.asarray([r["embedding"] for r in rows], dtype=np.float64)
        if mat.shape != (len(texts), self.dim):
            raise EmbeddingError(
                f"embedding endpoint returned shape {mat.shape}, expected {(len(texts), self.dim)}"
            )
        return mat


def embed_batch(provider: EmbeddingProvider, texts: Sequence[str]) -> list[np.ndarray]:
    """Embed texts in order; output vectors are L2-normalized, one per input.

    Raises EmbeddingError on an empty input list or any empty text (named by
    index).
    """
    if len(texts) == 0:
        raise EmbeddingError("embed_batch requires a nonempty list of texts")
    for i, t in enumerate(texts):
        if not t:
            raise EmbeddingError(f"empty text at index {i}")
    mat = provider._embed(texts)
    if not np.all(np.isfinite(mat)):
        raise EmbeddingError("provider returned non-finite embedding values")
    mat = _l2_normalize(np.asarray(mat, dtype=np.float64))
    return [mat[i] for i in range(mat.shape[0])]


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors, in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise EmbeddingError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise EmbeddingError("cosine similarity is undefined for zero vectors")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def top_k_similar(
    query: np.ndarray, candidates: Sequence[tuple[str, np.ndarray]], k: int
) -> list[str]:
    """Ids of the min(k, n) candidates closest to `query` by cosine similarity.

    Ties break by candidate input order (stable sort).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not candidates:
        raise ValueError("candidates must be nonempty")
    sims = [cosine_similarity(query, vec) for _, vec in candidates]
    order = sorted(range(len(candidates)), key=lambda i: (-sims[i], i))
    return [candidates[i][0] for i in order[: min(k, len(candidates))]]
