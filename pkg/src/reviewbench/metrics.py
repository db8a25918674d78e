"""Generation-quality metrics: ROUGE-L, BLEU, METEOR, rating errors,
title-text consistency, and the BERTScore service client.

All overlap metrics share the toolkit tokenizer (lowercased word tokens).
METEOR uses exact-then-stem unigram alignment without synonym matching.
Title-text consistency is a repo-defined metric: embedding cosine between
title and body, clipped at zero.
"""

from __future__ import annotations

import logging
import math
import time
from collections import Counter
from dataclasses import dataclass

import numpy as np
import requests

from .embedding import EmbeddingProvider, cosine
from .errors import TransportError
from .prompting import GeneratedReview
from .stemmer import stem
from .textseg import metric_tokens

log = logging.getLogger(__name__)

METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5
BLEU_MAX_N = 4


@dataclass(frozen=True)
class TextScore:
    rouge_l: float
    bleu: float
    meteor: float
    bertscore_f1: float | None = None

    def to_dict(self) -> dict:
        return {
            "rouge_l": self.rouge_l,
            "bleu": self.bleu,
            "meteor": self.meteor,
            "bertscore_f1": self.bertscore_f1,
        }


@dataclass(frozen=True)
class RatingScore:
    accuracy: float
    mae: float | None
    rmse: float | None
    parse_failures: int
    scored: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "mae": self.mae,
            "rmse": self.rmse,
            "parse_failures": self.parse_failures,
            "scored": self.scored,
        }


def _lcs_length(a: list[str], b: list[str]) -> int:
    """Two-row dynamic program over word tokens."""
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for token_a in a:
        current = [0] * (len(b) + 1)
        for j, token_b in enumerate(b, start=1):
            if token_a == token_b:
                current[j] = previous[j - 1] + 1
            else:
                current[j] = max(previous[j], current[j - 1])
        previous = current
    return previous[len(b)]


def rouge_l(candidate: str, reference: str) -> float:
    """LCS F-measure over word tokens; empty either side scores 0."""
    cand = metric_tokens(candidate)
    ref = metric_tokens(reference)
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _bleu_from_stats(
    clipped: list[int], totals: list[int], cand_len: int, ref_len: int
) -> float:
    """Shared BLEU combination: geometric mean over orders with candidate
    n-grams, add-half smoothing on zero counts for n >= 2, brevity penalty."""
    log_sum = 0.0
    orders = 0
    for n in range(1, BLEU_MAX_N + 1):
        total = totals[n - 1]
        if total == 0:
            continue  # candidate shorter than n tokens: order excluded
        hits = clipped[n - 1]
        if hits == 0:
            if n == 1:
                return 0.0
            precision = 0.5 / total
        else:
            precision = hits / total
        log_sum += math.log(precision)
        orders += 1
    if orders == 0:
        return 0.0
    score = math.exp(log_sum / orders)
    if cand_len < ref_len:
        score *= math.exp(1.0 - ref_len / cand_len)
    return score


def bleu(candidate: str, reference: str) -> float:
    """Sentence-level BLEU-4 with smoothing applied only to zero counts for
    n >= 2; a zero unigram precision scores 0."""
    cand = metric_tokens(candidate)
    ref = metric_tokens(reference)
    if not cand or not ref:
        return 0.0
    clipped: list[int] = []
    totals: list[int] = []
    for n in range(1, BLEU_MAX_N + 1):
        cand_counts = _ngram_counts(cand, n)
        ref_counts = _ngram_counts(ref, n)
        totals.append(sum(cand_counts.values()))
        clipped.append(sum(min(c, ref_counts[g]) for g, c in cand_counts.items()))
    return _bleu_from_stats(clipped, totals, len(cand), len(ref))


def corpus_bleu(candidates: list[str], references: list[str]) -> float:
    """Corpus-level BLEU: n-gram statistics pooled before combination."""
    if len(candidates) != len(references):
        raise ValueError("candidate/reference length mismatch")
    clipped = [0] * BLEU_MAX_N
    totals = [0] * BLEU_MAX_N
    cand_len = 0
    ref_len = 0
    for candidate, reference in zip(candidates, references):
        cand = metric_tokens(candidate)
        ref = metric_tokens(reference)
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, BLEU_MAX_N + 1):
            cand_counts = _ngram_counts(cand, n)
            ref_counts = _ngram_counts(ref, n)
            totals[n - 1] += sum(cand_counts.values())
            clipped[n - 1] += sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
    if cand_len == 0 or ref_len == 0:
        return 0.0
    return _bleu_from_stats(clipped, totals, cand_len, ref_len)


def _align(cand: list[str], ref: list[str]) -> list[tuple[int, int]]:
    """Unigram alignment: exact matches first, then Porter-stem matches,
    each stage matching candidate tokens in order to the earliest free
    reference position."""
    matches: list[tuple[int, int]] = []
    ref_free = [True] * len(ref)
    cand_free = [True] * len(cand)

    for key_fn in (lambda t: t, stem):
        ref_keys = [key_fn(t) for t in ref]
        for i, token in enumerate(cand):
            if not cand_free[i]:
                continue
            key = key_fn(token)
            for j, ref_key in enumerate(ref_keys):
                if ref_free[j] and ref_key == key:
                    matches.append((i, j))
                    ref_free[j] = False
                    cand_free[i] = False
                    break
    return sorted(matches)


def _chunk_count(matches: list[tuple[int, int]]) -> int:
    chunks = 0
    prev: tuple[int, int] | None = None
    for ci, ri in matches:
        if prev is None or ci != prev[0] + 1 or ri != prev[1] + 1:
            chunks += 1
        prev = (ci, ri)
    return chunks


def meteor(candidate: str, reference: str) -> float:
    """Harmonic-mean unigram score (alpha=0.9) with a fragmentation penalty
    gamma*(chunks/matches)^beta, gamma=0.5, beta=3."""
    cand = metric_tokens(candidate)
    ref = metric_tokens(reference)
    if not cand or not ref:
        return 0.0
    matches = _align(cand, ref)
    m = len(matches)
    if m == 0:
        return 0.0
    precision = m / len(cand)
    recall = m / len(ref)
    f_mean = precision * recall / (METEOR_ALPHA * precision + (1 - METEOR_ALPHA) * recall)
    penalty = METEOR_GAMMA * (_chunk_count(matches) / m) ** METEOR_BETA
    return f_mean * (1.0 - penalty)


def round_rating(value: float) -> int:
    """Nearest integer, halves rounding up (ratings are 1..5)."""
    return int(math.floor(value + 0.5))


def rating_metrics(predictions: list[GeneratedReview], golds: list[float]) -> RatingScore:
    """Exact-match accuracy (parse failures count as incorrect), MAE and RMSE
    over successfully parsed ratings."""
    if len(predictions) != len(golds):
        raise ValueError(f"{len(predictions)} predictions vs {len(golds)} golds")
    if not predictions:
        return RatingScore(0.0, None, None, 0, 0)
    correct = 0
    errors: list[float] = []
    failures = 0
    for pred, gold in zip(predictions, golds):
        if pred.rating is None:
            failures += 1
            continue
        if round_rating(pred.rating) == round_rating(gold):
            correct += 1
        errors.append(abs(pred.rating - gold))
    accuracy = correct / len(golds)
    if not errors:
        return RatingScore(accuracy, None, None, failures, 0)
    mae = float(np.mean(errors))
    rmse = float(np.sqrt(np.mean(np.square(errors))))
    return RatingScore(accuracy, mae, rmse, failures, len(errors))


def title_text_consistency(title: str, body: str, provider: EmbeddingProvider) -> float:
    """Embedding cosine between generated title and body, clipped to [0, 1].
    Repo-defined metric; flagged as such in reports."""
    if not title.strip() or not body.strip():
        return 0.0
    title_vec, body_vec = provider.embed([title, body])
    return max(0.0, min(1.0, cosine(title_vec, body_vec)))


class BertScoreClient:
    """Client for the sidecar's ``POST /bertscore`` endpoint."""

    def __init__(self, base_url: str, timeout_s: float = 60.0, max_retries: int = 2,
                 backoff_s: float = 0.5):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._session = requests.Session()

    def score(self, candidates: list[str], references: list[str]) -> list[float]:
        if len(candidates) != len(references):
            raise ValueError("candidate/reference length mismatch")
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                response = self._session.post(
                    f"{self.base_url}/bertscore",
                    json={"candidates": list(candidates), "references": list(references)},
                    timeout=self.timeout_s,
                )
                response.raise_for_status()
                f1 = [float(v) for v in response.json()["f1"]]
                if len(f1) != len(candidates):
                    raise TransportError("bertscore endpoint returned wrong-length f1 list")
                return f1
            except TransportError:
                raise
            except Exception as exc:
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(self.backoff_s * (attempt + 1))
        raise TransportError(f"bertscore endpoint failed: {last_error}")


def bertscore_f1(
    candidates: list[str], references: list[str], client: BertScoreClient | None
) -> list[float] | None:
    """Per-pair F1 from the service, or None (absent, never zero-filled)
    when the service is unavailable."""
    if client is None:
        return None
    try:
        return client.score(candidates, references)
    except (TransportError, ValueError) as exc:
        log.warning("bertscore unavailable: %s", exc)
        return None
