"""Text embedding providers.

The engine treats the provider as an abstraction: a remote API for
production and a deterministic hashed bag-of-words provider so every test
and replay run works offline and reproducibly.
"""

from __future__ import annotations

import hashlib
import math
import os
import re
from typing import Protocol

import httpx
import numpy as np

from .errors import (
    ConfigurationError,
    InvalidEmbeddingError,
    InvalidInputError,
    TransientProviderError,
)

_WORD_RE = re.compile(r"\w+", re.UNICODE)

EMBEDDING_API_KEY_ENV = "COUNTERSPEECH_EMBEDDING_KEY"


class EmbeddingProvider(Protocol):
    dim: int
    tag: str

    def embed(self, text: str) -> np.ndarray: ...


def embed(text: str, provider: EmbeddingProvider) -> np.ndarray:
    """Embed nonempty text; identical text always yields an identical vector
    for a given provider."""
    if not text.strip():
        raise InvalidInputError("cannot embed empty text")
    vec = provider.embed(text)
    if vec.shape != (provider.dim,) or not np.all(np.isfinite(vec)):
        raise InvalidEmbeddingError(
            f"provider {provider.tag} returned a malformed vector"
        )
    return vec


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """u.v / (|u||v|); raises on zero-norm or mismatched inputs."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise InvalidEmbeddingError(f"dim mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise InvalidEmbeddingError("cosine similarity undefined for zero-norm vector")
    return float(np.dot(u, v)) / (nu * nv)


class LocalHashEmbedder:
    """256-dim hashed bag-of-words with a sign trick, L2-normalized.

    Tokens are lowercased word characters; each token lands in a bucket from
    a stable md5 digest, so the mapping never depends on interpreter state.
    """

    def __init__(self, dim: int = 256) -> None:
        if dim < 2:
            raise InvalidInputError("embedding dim must be >= 2")
        self.dim = dim
        self.tag = f"local-hash-{dim}"

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=float)
        for token in _WORD_RE.findall(text.lower()):
            digest = hashlib.md5(token.encode("utf-8")).digest()
            bucket = int.from_bytes(digest[:4], "big") % self.dim
            sign = 1.0 if digest[4] & 1 else -1.0
            vec[bucket] += sign
        norm = math.sqrt(float(np.dot(vec, vec)))
        if norm == 0.0:
            # Text with no word characters: deterministic unit fallback.
            vec[0] = 1.0
            return vec
        return vec / norm


class RemoteEmbedder:
    """Thin client for a hosted embedding endpoint; key comes from the env."""

    def __init__(
        self,
        base_url: str,
        model: str = "text-embedding-ada-002",
        dim: int = 1536,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        key = os.environ.get(EMBEDDING_API_KEY_ENV)
        if not key:
            raise ConfigurationError(
                f"set {EMBEDDING_API_KEY_ENV} to use the remote embedding provider"
            )
        self.dim = dim
        self.tag = f"remote-{model}"
        self._model = model
        self._client = httpx.Client(
            base_url=base_url,
            headers={"Authorization": f"Bearer {key}"},
            transport=transport,
        )

    def embed(self, text: str) -> np.ndarray:
        try:
            resp = self._client.post(
                "/v1/embeddings", json={"model": self._model, "input": text}
            )
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise TransientProviderError(f"embedding request failed: {exc}") from exc
        values = resp.json()["data"][0]["embedding"]
        return np.asarray(values, dtype=float)


def provider_from_tag(tag: str) -> EmbeddingProvider:
    """Rebuild the offline provider recorded in a model file."""
    if tag.startswith("local-hash-"):
        return LocalHashEmbedder(dim=int(tag.rsplit("-", 1)[1]))
    raise ConfigurationError(
        f"provider {tag!r} cannot be reconstructed offline; configure it explicitly"
    )
