import random

import numpy as np
import pytest

from reviewbench.embedding import HashedEmbedder
from reviewbench.graph import build_graph, split_users
from reviewbench.ingest import FilterPolicy, ItemMetadata, RawReviewRecord, filter_corpus
from reviewbench.sentiment import default_scorer
from reviewbench.style import StyleNormalizer
from reviewbench.synthetic import generate_corpus

BASE_TS = 1_500_000_000_000  # safely above the 2016 floor


def review(user, item, ts, rating=4.0, body="solid product works well", title="ok",
           image_refs=(), caption_texts=()):
    return RawReviewRecord(
        user_id=user, item_id=item, rating=rating, title=title, body=body,
        image_refs=tuple(image_refs), caption_texts=tuple(caption_texts),
        timestamp=BASE_TS + ts,
    )


def random_corpus(rng: random.Random, n_users=8, n_items=5, n_edges=40, unique_ts=True):
    """Small random corpus with distinct timestamps by default."""
    timestamps = rng.sample(range(1, 10 * n_edges), n_edges) if unique_ts else [
        rng.randrange(1, 50) for _ in range(n_edges)
    ]
    return [
        review(
            f"u{rng.randrange(n_users)}", f"i{rng.randrange(n_items)}",
            ts=timestamps[k], rating=float(rng.randint(1, 5)),
            body=f"body {k} " + " ".join(rng.choices(["good", "bad", "fine", "box"], k=3)),
        )
        for k in range(n_edges)
    ]


@pytest.fixture(scope="session")
def scorer():
    return default_scorer()


@pytest.fixture(scope="session")
def provider():
    return HashedEmbedder(dim=256, seed=0)


@pytest.fixture(scope="session")
def identity_norm():
    return StyleNormalizer.identity()


@pytest.fixture(scope="session")
def small_world():
    """Filtered synthetic corpus, graph, splits, and a fitted normalizer."""
    reviews, metadata = generate_corpus(n_users=120, n_items=40, seed=7)
    filtered, _ = filter_corpus(reviews, FilterPolicy())
    graph = build_graph(filtered, metadata)
    splits = split_users(graph)
    train_bodies = [r.body for r in graph.edges if splits.get(r.user_id) == "train"]
    normalizer = StyleNormalizer.fit_from_texts(train_bodies)
    return graph, splits, normalizer


@pytest.fixture()
def rng():
    return random.Random(12345)


@pytest.fixture(autouse=True)
def _numpy_seed():
    np.random.seed(0)
