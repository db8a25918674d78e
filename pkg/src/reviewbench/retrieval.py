"""Evidence retrieval: bounded, temporally valid context bundles per instance.

Item-side retrieval is product-anchored: when the strict-cutoff neighborhood
exceeds the budget, candidates are ranked by an equal-weight combination of
semantic similarity to the rendered item metadata and style similarity to the
user's aggregated style vector. The semantic query is built from item
metadata only, never from the target review. User-side retrieval ranks the
user's own prior reviews by style similarity alone.

Two baseline modes exist for matched comparisons: ``lamp_style`` (user
history only, most recent first) and ``pgraphrag_style`` (item ranking whose
semantic query is the gold review body: deliberate leakage, always flagged).
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingProvider, cosine, unit_normalize
from .errors import ConfigError, TemporalViolation, ValidationError
from .graph import (
    BenchmarkInstance,
    ReviewGraph,
    item_neighbor_ids_before,
    user_history_ids_before,
)
from .ingest import ItemMetadata
from .sentiment import SentimentScorer
from .style import StyleNormalizer, StyleVector, aggregate_style, extract_style_features, style_similarity

log = logging.getLogger(__name__)

SETTINGS = ("product", "user", "neighbor", "both")
MODES = ("peregrine", "lamp_style", "pgraphrag_style")

QUERY_SOURCE_METADATA = "item_metadata"
QUERY_SOURCE_GOLD = "gold_body"


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 4
    k_u: int = 2
    semantic_weight: float = 0.5
    style_weight: float = 0.5
    mode: str = "peregrine"
    attach_captions: bool = True

    def __post_init__(self):
        if self.k < 1 or self.k_u < 1:
            raise ConfigError("retrieval budgets must be >= 1")
        if self.semantic_weight < 0 or self.style_weight < 0:
            raise ConfigError("similarity weights must be nonnegative")
        if abs(self.semantic_weight + self.style_weight - 1.0) > 1e-9:
            raise ConfigError("similarity weights must sum to 1")
        if self.mode not in MODES:
            raise ConfigError(f"unknown retrieval mode {self.mode!r}")


@dataclass(frozen=True)
class EvidenceEntry:
    """One retrieved review plus provenance. ``score`` is None when the
    neighborhood fit inside the budget and no ranking was applied."""

    edge_id: int
    timestamp: int
    rating: float
    title: str
    body: str
    score: float | None = None
    caption_texts: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "edge_id": self.edge_id,
            "timestamp": self.timestamp,
            "rating": self.rating,
            "title": self.title,
            "body": self.body,
            "score": self.score,
            "caption_texts": list(self.caption_texts),
        }


@dataclass(frozen=True)
class ProductBlock:
    item_id: str
    text: str
    caption_texts: tuple[str, ...] = ()


@dataclass(frozen=True)
class EvidenceBundle:
    user_id: str
    item_id: str
    cutoff: int
    setting: str
    mode: str
    product_block: ProductBlock | None = None
    user_block: tuple[EvidenceEntry, ...] | None = None
    neighbor_block: tuple[EvidenceEntry, ...] | None = None
    query_source: str | None = None
    query_text: str | None = None
    leakage_flagged: bool = False

    def entries(self) -> list[EvidenceEntry]:
        out: list[EvidenceEntry] = []
        for block in (self.user_block, self.neighbor_block):
            if block:
                out.extend(block)
        return out


class StyleCache:
    """Per-run memo of edge-id -> style vector and edge-id -> body embedding,
    shared across settings so repeated retrieval stays cheap."""

    def __init__(
        self,
        g: ReviewGraph,
        provider: EmbeddingProvider,
        scorer: SentimentScorer | None = None,
    ):
        self._g = g
        self._provider = provider
        self._scorer = scorer
        self._styles: dict[int, StyleVector] = {}
        self._vectors: dict[int, np.ndarray] = {}

    def style(self, edge_id: int) -> StyleVector:
        found = self._styles.get(edge_id)
        if found is None:
            found = extract_style_features(self._g.edges[edge_id].body, self._scorer)
            self._styles[edge_id] = found
        return found

    def vectors(self, edge_ids: list[int]) -> np.ndarray:
        missing = [e for e in edge_ids if e not in self._vectors]
        if missing:
            embedded = self._provider.embed([self._g.edges[e].body for e in missing])
            for e, vec in zip(missing, embedded):
                self._vectors[e] = vec
        return np.stack([self._vectors[e] for e in edge_ids])


def render_item_metadata(meta: ItemMetadata | None) -> str:
    """Deterministic product text: title, description, feature bullets,
    newline-joined, empty sections skipped. This is the only legal source of
    the item-side semantic query in peregrine mode."""
    if meta is None:
        return ""
    parts = [meta.title, meta.description, *meta.feature_bullets]
    return "\n".join(p for p in parts if p and p.strip())


def _entry(g: ReviewGraph, edge_id: int, score: float | None) -> EvidenceEntry:
    r = g.edges[edge_id]
    return EvidenceEntry(
        edge_id=edge_id,
        timestamp=r.timestamp,
        rating=r.rating,
        title=r.title,
        body=r.body,
        score=score,
    )


def _rank_item_candidates(
    g: ReviewGraph,
    candidate_ids: list[int],
    query_text: str,
    theta_s: StyleVector,
    cfg: RetrievalConfig,
    provider: EmbeddingProvider,
    normalizer: StyleNormalizer,
    cache: StyleCache | None,
) -> list[EvidenceEntry]:
    cache = cache or StyleCache(g, provider)
    query_vec = unit_normalize(provider.embed([query_text])[0])
    cand_vecs = cache.vectors(candidate_ids)
    scored: list[tuple[float, int, int]] = []
    entries: dict[int, float] = {}
    for edge_id, vec in zip(candidate_ids, cand_vecs):
        semantic = cosine(vec, query_vec)
        style = style_similarity(cache.style(edge_id), theta_s, normalizer)
        score = cfg.semantic_weight * semantic + cfg.style_weight * style
        entries[edge_id] = score
        scored.append((score, g.edges[edge_id].timestamp, edge_id))
    # Descending score, then most recent, then edge id.
    scored.sort(key=lambda t: (-t[0], -t[1], t[2]))
    return [_entry(g, edge_id, entries[edge_id]) for _, _, edge_id in scored[: cfg.k]]


def retrieve_item_evidence(
    g: ReviewGraph,
    instance: BenchmarkInstance,
    theta_s: StyleVector,
    cfg: RetrievalConfig,
    provider: EmbeddingProvider,
    normalizer: StyleNormalizer,
    cache: StyleCache | None = None,
    query_override: str | None = None,
) -> tuple[tuple[EvidenceEntry, ...], str]:
    """Temporally valid, gold-author-excluded item evidence.

    At or under budget the neighborhood passes through unranked (ascending
    timestamp, score None); over budget the equal-weight semantic+style score
    ranks it. Returns (entries, query_text) so callers can audit the query.
    """
    candidate_ids = item_neighbor_ids_before(
        g, instance.item_id, instance.cutoff, exclude_user=instance.user_id
    )
    query_text = (
        query_override
        if query_override is not None
        else render_item_metadata(g.metadata.get(instance.item_id))
    )
    if len(candidate_ids) <= cfg.k:
        return tuple(_entry(g, e, None) for e in candidate_ids), query_text
    ranked = _rank_item_candidates(
        g, candidate_ids, query_text, theta_s, cfg, provider, normalizer, cache
    )
    return tuple(ranked), query_text


def retrieve_user_evidence(
    g: ReviewGraph,
    instance: BenchmarkInstance,
    theta_s: StyleVector,
    cfg: RetrievalConfig,
    normalizer: StyleNormalizer,
    cache: StyleCache | None = None,
    scorer: SentimentScorer | None = None,
) -> tuple[EvidenceEntry, ...]:
    """Top-k_u of the user's strict-cutoff history by style similarity."""
    history_ids = user_history_ids_before(g, instance.user_id, instance.cutoff)
    scored: list[tuple[float, int, int]] = []
    for edge_id in history_ids:
        vec = cache.style(edge_id) if cache else extract_style_features(g.edges[edge_id].body, scorer)
        sim = style_similarity(vec, theta_s, normalizer)
        scored.append((sim, g.edges[edge_id].timestamp, edge_id))
    scored.sort(key=lambda t: (-t[0], -t[1], t[2]))
    return tuple(_entry(g, edge_id, sim) for sim, _, edge_id in scored[: cfg.k_u])


def attach_captions(bundle: EvidenceBundle, g: ReviewGraph) -> EvidenceBundle:
    """Append caption texts after ranking: catalog captions onto the product
    block, review captions onto neighbor entries. Scores are untouched."""
    product = bundle.product_block
    if product is not None:
        meta = g.metadata.get(product.item_id)
        if meta is not None and meta.caption_texts:
            product = dataclasses.replace(product, caption_texts=meta.caption_texts)
    neighbors = bundle.neighbor_block
    if neighbors is not None:
        neighbors = tuple(
            dataclasses.replace(e, caption_texts=g.edges[e.edge_id].caption_texts)
            for e in neighbors
        )
    return dataclasses.replace(bundle, product_block=product, neighbor_block=neighbors)


def assert_temporal(bundle: EvidenceBundle) -> None:
    """Raise TemporalViolation if any evidence entry reaches the cutoff."""
    for entry in bundle.entries():
        if entry.timestamp >= bundle.cutoff:
            raise TemporalViolation(
                f"evidence edge {entry.edge_id} at t={entry.timestamp} "
                f">= cutoff {bundle.cutoff} for ({bundle.user_id}, {bundle.item_id})"
            )


def user_style_profile(
    g: ReviewGraph,
    instance: BenchmarkInstance,
    cache: StyleCache | None = None,
    scorer: SentimentScorer | None = None,
) -> StyleVector:
    """The user's aggregated style vector over strict-cutoff history."""
    history_ids = user_history_ids_before(g, instance.user_id, instance.cutoff)
    if not history_ids:
        raise ValidationError(
            f"user {instance.user_id!r} has no history before {instance.cutoff}"
        )
    if cache is not None:
        stacked = np.stack([cache.style(e).as_array() for e in history_ids])
        return StyleVector.from_array(stacked.mean(axis=0))
    return aggregate_style([g.edges[e].body for e in history_ids], scorer)


def build_evidence(
    g: ReviewGraph,
    instance: BenchmarkInstance,
    setting: str,
    cfg: RetrievalConfig,
    provider: EmbeddingProvider,
    normalizer: StyleNormalizer,
    cache: StyleCache | None = None,
    scorer: SentimentScorer | None = None,
) -> EvidenceBundle:
    """Assemble the bundle for one of the four evidence settings. Peregrine
    mode only; baselines go through :func:`baseline_retrieve`."""
    if setting not in SETTINGS:
        raise ConfigError(f"unknown evidence setting {setting!r}")
    if cfg.mode != "peregrine":
        raise ConfigError(f"build_evidence requires peregrine mode, got {cfg.mode!r}")

    product_block = None
    user_block = None
    neighbor_block = None
    query_source = None
    query_text = None

    if setting in ("product", "both"):
        product_block = ProductBlock(
            item_id=instance.item_id,
            text=render_item_metadata(g.metadata.get(instance.item_id)),
        )

    theta_s = None
    if setting in ("user", "neighbor", "both"):
        theta_s = user_style_profile(g, instance, cache, scorer)

    if setting in ("user", "both"):
        user_block = retrieve_user_evidence(g, instance, theta_s, cfg, normalizer, cache, scorer)

    if setting in ("neighbor", "both"):
        neighbor_block, query_text = retrieve_item_evidence(
            g, instance, theta_s, cfg, provider, normalizer, cache
        )
        query_source = QUERY_SOURCE_METADATA

    bundle = EvidenceBundle(
        user_id=instance.user_id,
        item_id=instance.item_id,
        cutoff=instance.cutoff,
        setting=setting,
        mode=cfg.mode,
        product_block=product_block,
        user_block=user_block,
        neighbor_block=neighbor_block,
        query_source=query_source,
        query_text=query_text,
        leakage_flagged=False,
    )
    if cfg.attach_captions:
        bundle = attach_captions(bundle, g)
    assert_temporal(bundle)
    return bundle


def baseline_retrieve(
    g: ReviewGraph,
    instance: BenchmarkInstance,
    cfg: RetrievalConfig,
    provider: EmbeddingProvider,
    normalizer: StyleNormalizer,
    cache: StyleCache | None = None,
    scorer: SentimentScorer | None = None,
) -> EvidenceBundle:
    """Matched-comparison baselines.

    ``lamp_style``: the user's most recent k_u strict-cutoff reviews, no
    item-side evidence. ``pgraphrag_style``: full both-setting bundle whose
    item ranking queries with the gold review body; flagged as leakage.
    """
    if cfg.mode == "peregrine":
        raise ConfigError("peregrine mode must go through build_evidence, not baseline_retrieve")

    if cfg.mode == "lamp_style":
        history_ids = user_history_ids_before(g, instance.user_id, instance.cutoff)
        recent = sorted(
            history_ids, key=lambda e: (-g.edges[e].timestamp, e)
        )[: cfg.k_u]
        bundle = EvidenceBundle(
            user_id=instance.user_id,
            item_id=instance.item_id,
            cutoff=instance.cutoff,
            setting="user",
            mode=cfg.mode,
            user_block=tuple(_entry(g, e, None) for e in recent),
            leakage_flagged=False,
        )
    else:  # pgraphrag_style
        if not instance.gold.body.strip():
            raise ValidationError("pgraphrag_style requires a nonempty gold body as the query")
        theta_s = user_style_profile(g, instance, cache, scorer)
        user_block = retrieve_user_evidence(g, instance, theta_s, cfg, normalizer, cache, scorer)
        neighbor_block, query_text = retrieve_item_evidence(
            g, instance, theta_s, cfg, provider, normalizer, cache,
            query_override=instance.gold.body,
        )
        bundle = EvidenceBundle(
            user_id=instance.user_id,
            item_id=instance.item_id,
            cutoff=instance.cutoff,
            setting="both",
            mode=cfg.mode,
            product_block=ProductBlock(
                item_id=instance.item_id,
                text=render_item_metadata(g.metadata.get(instance.item_id)),
            ),
            user_block=user_block,
            neighbor_block=neighbor_block,
            query_source=QUERY_SOURCE_GOLD,
            query_text=query_text,
            leakage_flagged=True,
        )

    if cfg.attach_captions:
        bundle = attach_captions(bundle, g)
    assert_temporal(bundle)
    return bundle
