"""Text embedding providers behind one small contract.

A provider maps a batch of texts to unit-norm vectors of a fixed dimension,
deterministically. The hashed bag-of-words fallback keeps every pipeline
stage runnable offline; the HTTP client talks to the sidecar scoring service.
"""

from __future__ import annotations

import hashlib
import time
from typing import Protocol, runtime_checkable

import numpy as np
import requests

from .errors import TransportError

NORM_EPS = 1e-12


def unit_normalize(vector: np.ndarray) -> np.ndarray:
    """L2-normalize; zero vectors pass through, near-unit vectors are
    returned unchanged so re-normalization is exactly idempotent."""
    norm = float(np.linalg.norm(vector))
    if norm < NORM_EPS or abs(norm - 1.0) < NORM_EPS:
        return vector
    return vector / norm


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < NORM_EPS or nb < NORM_EPS:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


@runtime_checkable
class EmbeddingProvider(Protocol):
    provider_id: str
    dim: int

    def embed(self, texts: list[str]) -> np.ndarray: ...


class HashedEmbedder:
    """Seeded feature-hashed bag-of-words embedding, L2-normalized.

    Each token lands in two signed slots (weight 1/sqrt(2) each), which
    smooths single-collision spikes in cross-text cosines. Identical text
    always maps to the identical vector, across processes (token hashing is
    keyed BLAKE2, not Python's randomized hash). Texts with no word tokens
    map to the zero vector.
    """

    HASHES_PER_TOKEN = 2

    def __init__(self, dim: int = 256, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self.provider_id = f"hashed-bow-d{dim}-s{seed}"
        self._key = str(seed).encode("utf-8")
        self._weight = 1.0 / np.sqrt(self.HASHES_PER_TOKEN)

    def _token_slots(self, token: str) -> list[tuple[int, float]]:
        digest = hashlib.blake2b(token.encode("utf-8"), key=self._key, digest_size=8).digest()
        slots = []
        for h in range(self.HASHES_PER_TOKEN):
            chunk = digest[4 * h : 4 * h + 4]
            index = int.from_bytes(chunk[:3], "little") % self.dim
            sign = 1.0 if chunk[3] & 1 else -1.0
            slots.append((index, sign * self._weight))
        return slots

    def embed(self, texts: list[str]) -> np.ndarray:
        from .textseg import metric_tokens

        out = np.zeros((len(texts), self.dim), dtype=float)
        for row, text in enumerate(texts):
            for token in metric_tokens(text):
                for index, value in self._token_slots(token):
                    out[row, index] += value
            out[row] = unit_normalize(out[row])
        return out


def fallback_embed(texts: list[str], dim: int = 256, seed: int = 0) -> np.ndarray:
    """Convenience wrapper over :class:`HashedEmbedder`."""
    return HashedEmbedder(dim=dim, seed=seed).embed(texts)


class HttpEmbeddingClient:
    """Client for the sidecar's ``POST /embed`` endpoint."""

    def __init__(
        self,
        base_url: str,
        timeout_s: float = 30.0,
        max_retries: int = 2,
        backoff_s: float = 0.5,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.provider_id = f"http:{self.base_url}"
        self.dim = -1  # learned from the first response
        self._session = requests.Session()

    def embed(self, texts: list[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, max(self.dim, 0)), dtype=float)
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                response = self._session.post(
                    f"{self.base_url}/embed", json={"texts": list(texts)}, timeout=self.timeout_s
                )
                response.raise_for_status()
                payload = response.json()
                vectors = np.asarray(payload["vectors"], dtype=float)
                if vectors.shape[0] != len(texts):
                    raise TransportError(
                        f"embed endpoint returned {vectors.shape[0]} vectors for {len(texts)} texts"
                    )
                self.dim = int(payload.get("dim", vectors.shape[1]))
                return vectors
            except TransportError:
                raise
            except Exception as exc:  # connection/timeout/HTTP errors
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(self.backoff_s * (attempt + 1))
        raise TransportError(f"embed endpoint failed after {self.max_retries + 1} attempts: {last_error}")
