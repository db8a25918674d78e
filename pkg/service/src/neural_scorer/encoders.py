"""Encoder backends.

A backend provides sentence-level unit-norm embeddings (for /embed) and
token-level embeddings (for the greedy-matching F1 in /bertscore). Model ids
of the form ``hash:<dim>`` select the deterministic offline backend; anything
else is treated as a transformer checkpoint name and loaded lazily.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

_WORD_RE = re.compile(r"[A-Za-z0-9']+")

NORM_EPS = 1e-12


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    safe = np.where(norms < NORM_EPS, 1.0, norms)
    return matrix / safe


class HashEncoder:
    """Deterministic random-unit-vector-per-token encoder.

    Each token maps to a fixed pseudo-random Gaussian direction (seeded from
    a keyed BLAKE2 digest), so identical tokens align exactly and distinct
    tokens are near-orthogonal. Sentences mean-pool their token vectors and
    re-normalize; texts with no word tokens map to the zero vector.
    """

    def __init__(self, dim: int = 384):
        self.dim = dim
        self.model_id = f"hash:{dim}"
        self._token_cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        found = self._token_cache.get(token)
        if found is None:
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            vec = rng.standard_normal(self.dim)
            found = vec / np.linalg.norm(vec)
            self._token_cache[token] = found
        return found

    def token_embeddings(self, text: str) -> np.ndarray:
        tokens = [t.lower() for t in _WORD_RE.findall(text)]
        if not tokens:
            return np.zeros((0, self.dim))
        return np.stack([self._token_vector(t) for t in tokens])

    def encode(self, texts: list[str]) -> np.ndarray:
        rows = np.zeros((len(texts), self.dim))
        for i, text in enumerate(texts):
            token_vecs = self.token_embeddings(text)
            if len(token_vecs):
                rows[i] = token_vecs.mean(axis=0)
        return _normalize_rows(rows)


class TransformerEncoder:
    """Thin wrapper over a transformers checkpoint: mean-pooled last hidden
    state for sentences, per-token hidden states (special tokens dropped)
    for BERT-style matching. Loaded lazily on first request."""

    def __init__(self, model_name: str, max_length: int = 256):
        self.model_id = model_name
        self.max_length = max_length
        self._model = None
        self._tokenizer = None
        self.dim = -1

    def _ensure_loaded(self):
        if self._model is not None:
            return
        import torch  # noqa: F401 (transformers needs it at runtime)
        from transformers import AutoModel, AutoTokenizer

        self._tokenizer = AutoTokenizer.from_pretrained(self.model_id)
        self._model = AutoModel.from_pretrained(self.model_id)
        self._model.eval()
        self.dim = int(self._model.config.hidden_size)

    def _forward(self, texts: list[str]):
        import torch

        batch = self._tokenizer(
            texts, padding=True, truncation=True, max_length=self.max_length,
            return_tensors="pt",
        )
        with torch.no_grad():
            output = self._model(**batch)
        return batch, output.last_hidden_state

    def encode(self, texts: list[str]) -> np.ndarray:
        self._ensure_loaded()
        if not texts:
            return np.zeros((0, self.dim))
        batch, hidden = self._forward(texts)
        mask = batch["attention_mask"].unsqueeze(-1)
        pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1)
        return _normalize_rows(pooled.numpy())

    def token_embeddings(self, text: str) -> np.ndarray:
        self._ensure_loaded()
        batch, hidden = self._forward([text])
        mask = batch["attention_mask"][0].bool()
        vectors = hidden[0][mask].numpy()
        special = getattr(self._tokenizer, "all_special_ids", [])
        ids = batch["input_ids"][0][mask].tolist()
        keep = [k for k, token_id in enumerate(ids) if token_id not in special]
        if not keep:
            return np.zeros((0, self.dim))
        return _normalize_rows(vectors[keep])


def make_encoder(model_id: str):
    if model_id.startswith("hash:"):
        return HashEncoder(dim=int(model_id.split(":", 1)[1]))
    return TransformerEncoder(model_id)
