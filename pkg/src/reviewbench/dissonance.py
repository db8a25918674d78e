"""Macro-level dissonance scores and the paired significance test.

Three deviation summaries complement the overlap metrics: user dissonance
(drift from the user's historical style, sentiment, rating, and length
behavior, as a convex combination of [0,1]-normalized components), product
dissonance (embedding distance from the neighbor-consensus centroid plus
Jensen-Shannon divergence between content-word distributions), and sentiment
dissonance (pairwise disagreement among generated sentiment, predicted
rating, and gold behavior on a shared [-1,1] scale).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .embedding import EmbeddingProvider, unit_normalize
from .errors import ConfigError
from .prompting import GeneratedReview
from .sentiment import SentimentScorer, default_scorer
from .style import StyleNormalizer, StyleVector, extract_style_features, style_similarity
from .textseg import content_words

WORST_RATING_TERM = 2.0  # max |a - b| when both live on [-1, 1]


@dataclass(frozen=True)
class DissonanceConfig:
    w_style: float = 0.25
    w_sentiment: float = 0.25
    w_rating: float = 0.25
    w_length: float = 0.25
    aspect_top_n: int = 50
    normalized_product: bool = False

    def __post_init__(self):
        weights = (self.w_style, self.w_sentiment, self.w_rating, self.w_length)
        if any(w < 0 for w in weights):
            raise ConfigError("dissonance weights must be nonnegative")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ConfigError("dissonance weights must sum to 1")
        if self.aspect_top_n < 1:
            raise ConfigError("aspect_top_n must be >= 1")

    def to_dict(self) -> dict:
        return {
            "w_style": self.w_style,
            "w_sentiment": self.w_sentiment,
            "w_rating": self.w_rating,
            "w_length": self.w_length,
            "aspect_top_n": self.aspect_top_n,
            "normalized_product": self.normalized_product,
        }


def rating_to_sentiment(rating: float) -> float:
    """Map a 1..5 star rating onto the compound scale's [-1, 1]."""
    return (rating - 3.0) / 2.0


@dataclass(frozen=True)
class UserProfile:
    """Historical behavior summary: aggregated style vector (whose word_count
    and sent_compound slots double as mean length and mean sentiment) plus the
    mean historical rating."""

    theta_s: StyleVector
    mean_rating: float


def build_user_profile(history_bodies: list[str], history_ratings: list[float],
                       scorer: SentimentScorer | None = None) -> UserProfile:
    if not history_bodies or len(history_bodies) != len(history_ratings):
        raise ValueError("profile requires equal-length, nonempty history bodies and ratings")
    from .style import aggregate_style

    return UserProfile(
        theta_s=aggregate_style(history_bodies, scorer),
        mean_rating=float(np.mean(history_ratings)),
    )


@dataclass(frozen=True)
class UserDissonanceBreakdown:
    """The four [0,1]-normalized deltas and their weighted total."""

    d_style: float
    d_sentiment: float
    d_rating: float
    d_length: float
    total: float


def user_dissonance_components(
    gen: GeneratedReview,
    profile: UserProfile,
    cfg: DissonanceConfig,
    normalizer: StyleNormalizer,
    scorer: SentimentScorer | None = None,
) -> UserDissonanceBreakdown:
    """Weighted deviation from the user's historical profile, with the
    per-component breakdown. A failed parse is scored on the empty body with
    the rating term pinned to worst case."""
    theta = profile.theta_s
    feats = extract_style_features(gen.body, scorer)

    d_style = (1.0 - style_similarity(feats, theta, normalizer)) / 2.0
    d_sentiment = abs(feats.sent_compound - theta.sent_compound) / 2.0
    if gen.rating is None:
        d_rating = 1.0
    else:
        d_rating = min(1.0, abs(gen.rating - profile.mean_rating) / 4.0)
    d_length = min(1.0, abs(feats.word_count - theta.word_count) / max(theta.word_count, 1.0))

    total = (
        cfg.w_style * d_style
        + cfg.w_sentiment * d_sentiment
        + cfg.w_rating * d_rating
        + cfg.w_length * d_length
    )
    return UserDissonanceBreakdown(d_style, d_sentiment, d_rating, d_length, total)


def user_dissonance(
    gen: GeneratedReview,
    profile: UserProfile,
    cfg: DissonanceConfig,
    normalizer: StyleNormalizer,
    scorer: SentimentScorer | None = None,
) -> float:
    return user_dissonance_components(gen, profile, cfg, normalizer, scorer).total


@dataclass(frozen=True)
class ProductConsensus:
    centroid: np.ndarray
    aspect_distribution: dict[str, float]


def aspect_distribution(texts: list[str], top_n: int) -> dict[str, float]:
    """Normalized frequency over the top-N content words; ties break
    lexicographically for determinism."""
    counts = Counter()
    for text in texts:
        counts.update(content_words(text))
    if not counts:
        return {}
    top = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
    total = sum(c for _, c in top)
    return {word: c / total for word, c in top}


def product_consensus(
    neighbor_bodies: list[str], provider: EmbeddingProvider, cfg: DissonanceConfig
) -> ProductConsensus:
    """Unit-norm centroid of neighbor body embeddings plus their aspect
    distribution. Neighbors must be the strict-cutoff item corpus."""
    if not neighbor_bodies:
        raise ValueError("product consensus requires at least one neighbor review")
    vectors = provider.embed(neighbor_bodies)
    centroid = unit_normalize(vectors.mean(axis=0))
    return ProductConsensus(
        centroid=centroid,
        aspect_distribution=aspect_distribution(neighbor_bodies, cfg.aspect_top_n),
    )


def js_divergence(p: dict[str, float], q: dict[str, float]) -> float:
    """Jensen-Shannon divergence, base 2, over the union support; in [0, 1].
    An empty distribution against a nonempty one diverges maximally (1.0)."""
    if not p and not q:
        return 0.0
    if not p or not q:
        return 1.0
    support = set(p) | set(q)
    total = 0.0
    for word in support:
        pv = p.get(word, 0.0)
        qv = q.get(word, 0.0)
        m = (pv + qv) / 2.0
        if pv > 0:
            total += 0.5 * pv * math.log2(pv / m)
        if qv > 0:
            total += 0.5 * qv * math.log2(qv / m)
    return min(1.0, max(0.0, total))


def product_dissonance(
    gen: GeneratedReview,
    consensus: ProductConsensus,
    provider: EmbeddingProvider,
    cfg: DissonanceConfig,
) -> float:
    """L2 distance between the generation embedding and the consensus
    centroid, plus aspect Jensen-Shannon divergence. The raw two-term sum is
    unbounded above; ``cfg.normalized_product`` rescales it onto [0, 1]."""
    pred_vec = unit_normalize(provider.embed([gen.body])[0])
    l2 = float(np.linalg.norm(pred_vec - consensus.centroid))
    gen_aspects = aspect_distribution([gen.body], cfg.aspect_top_n)
    js = js_divergence(gen_aspects, consensus.aspect_distribution)
    if cfg.normalized_product:
        return (l2 / 2.0 + js) / 2.0
    return l2 + js


def sentiment_dissonance_terms(
    sent_pred: float,
    sent_gold: float,
    rating_pred: float | None,
    rating_gold: float,
) -> float:
    """Sum of the three absolute disagreements on the [-1, 1] scale. A
    missing predicted rating pins both rating terms to the worst case."""
    gold_mapped = rating_to_sentiment(rating_gold)
    first = abs(sent_pred - sent_gold)
    if rating_pred is None:
        return first + WORST_RATING_TERM + WORST_RATING_TERM
    pred_mapped = rating_to_sentiment(rating_pred)
    return first + abs(sent_pred - pred_mapped) + abs(pred_mapped - gold_mapped)


def sentiment_dissonance(
    gen: GeneratedReview,
    gold_body: str,
    gold_rating: float,
    cfg: DissonanceConfig,
    scorer: SentimentScorer | None = None,
) -> float:
    del cfg  # the rating map is fixed; kept in the signature for symmetry
    scorer = scorer or default_scorer()
    sent_pred = scorer.score(gen.body).compound
    sent_gold = scorer.score(gold_body).compound
    return sentiment_dissonance_terms(sent_pred, sent_gold, gen.rating, gold_rating)


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank test
# ---------------------------------------------------------------------------

EXACT_LIMIT = 25


class WilcoxonResult(NamedTuple):
    statistic: float  # signed rank sum W+ - W-
    p_value: float
    n: int  # pairs remaining after zero-difference removal
    degenerate: bool


def _average_ranks(values: list[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        average = (i + j + 2) / 2.0  # ranks are 1-based
        for k in range(i, j + 1):
            ranks[order[k]] = average
        i = j + 1
    return ranks


def _exact_cdf_count(doubled_ranks: list[int], threshold: int) -> int:
    """Number of sign assignments with doubled W+ <= threshold, by dynamic
    program over the achievable sum distribution."""
    total = sum(doubled_ranks)
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in doubled_ranks:
        for s in range(total, r - 1, -1):
            counts[s] += counts[s - r]
    return sum(counts[: threshold + 1])


def _normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def wilcoxon_signed_rank(a: list[float], b: list[float]) -> WilcoxonResult:
    """Two-sided paired test. Zero differences are dropped; ties share
    average ranks. Exact tie-aware enumeration for n <= 25, normal
    approximation with continuity (and tie) correction above.

    All-zero differences return p = 1.0 with the degenerate flag; fewer than
    5 nonzero differences otherwise raise ValueError.
    """
    if len(a) != len(b):
        raise ValueError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    diffs = [x - y for x, y in zip(a, b) if x != y]
    n = len(diffs)
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, True)
    if n < 5:
        raise ValueError(f"need >= 5 nonzero differences, got {n}")

    ranks = _average_ranks([abs(d) for d in diffs])
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)
    w_minus = sum(r for r, d in zip(ranks, diffs) if d < 0)
    statistic = w_plus - w_minus
    w_min = min(w_plus, w_minus)

    if n <= EXACT_LIMIT:
        doubled = [round(2 * r) for r in ranks]
        favorable = _exact_cdf_count(doubled, round(2 * w_min))
        p = min(1.0, 2.0 * favorable / (2 ** n))
    else:
        mean = n * (n + 1) / 4.0
        tie_counts = Counter(ranks).values()
        variance = n * (n + 1) * (2 * n + 1) / 24.0 - sum(t**3 - t for t in tie_counts) / 48.0
        sd = math.sqrt(variance)
        z = (w_min - mean + 0.5) / sd  # continuity correction toward the mean
        p = min(1.0, 2.0 * _normal_cdf(z))

    return WilcoxonResult(statistic, p, n, False)
