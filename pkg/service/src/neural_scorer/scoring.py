"""Greedy-matching F1 over token embeddings (BERTScore-style)."""

from __future__ import annotations

import numpy as np


def pair_f1(cand_tokens: np.ndarray, ref_tokens: np.ndarray) -> float:
    """Precision = mean over candidate tokens of best cosine against the
    reference; recall symmetric; F1 harmonic. Empty sides score 0 (or 1 when
    both are empty)."""
    if len(cand_tokens) == 0 and len(ref_tokens) == 0:
        return 1.0
    if len(cand_tokens) == 0 or len(ref_tokens) == 0:
        return 0.0
    similarity = cand_tokens @ ref_tokens.T
    precision = float(similarity.max(axis=1).mean())
    recall = float(similarity.max(axis=0).mean())
    if precision + recall <= 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def rescale(f1: float, baseline: float) -> float:
    """Baseline rescaling with clamping to [0, 1]."""
    if baseline <= 0.0 or baseline >= 1.0:
        return min(1.0, max(0.0, f1))
    return min(1.0, max(0.0, (f1 - baseline) / (1.0 - baseline)))


def score_batch(encoder, candidates: list[str], references: list[str],
                baseline: float = 0.0, apply_rescale: bool = False) -> list[float]:
    out = []
    for cand, ref in zip(candidates, references):
        raw = pair_f1(encoder.token_embeddings(cand), encoder.token_embeddings(ref))
        out.append(rescale(raw, baseline) if apply_rescale else min(1.0, max(0.0, raw)))
    return out
