"""Seeded synthetic review corpora for smoke tests and offline runs.

Each synthetic user carries persona parameters (positivity, verbosity,
first-person rate, punctuation habits) so style aggregation and retrieval
have real signal to work with. Timestamps spread over 2016-2023 by default;
a fraction can be pushed before the corpus floor to exercise filtering.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from .ingest import DEFAULT_MIN_TIMESTAMP_MS, ItemMetadata, RawReviewRecord

_POSITIVE = ["love", "great", "excellent", "amazing", "perfect", "wonderful", "nice", "solid", "reliable", "smooth"]
_NEGATIVE = ["bad", "terrible", "awful", "broken", "useless", "disappointing", "flimsy", "poor", "waste", "defective"]
_NEUTRAL = [
    "bought", "arrived", "package", "color", "size", "price", "shipping", "week",
    "device", "material", "surface", "handle", "box", "ordered", "store", "brand",
    "model", "design", "feature", "setup", "manual", "battery", "cover", "strap",
]
_NOUNS = ["lamp", "blender", "keyboard", "backpack", "kettle", "speaker", "monitor",
          "notebook", "charger", "bottle", "tripod", "headset", "razor", "mixer"]
_ADJS = ["compact", "portable", "wireless", "ceramic", "steel", "foldable", "ergonomic", "waterproof"]

TS_START = DEFAULT_MIN_TIMESTAMP_MS
TS_END = TS_START + 8 * 365 * 24 * 3600 * 1000  # ~2016..2023


def _sentence(rng: random.Random, persona: dict) -> str:
    length = max(3, int(rng.gauss(persona["verbosity"], 2)))
    tokens = []
    for _ in range(length):
        roll = rng.random()
        if roll < persona["first_person"]:
            tokens.append(rng.choice(["I", "my", "we"]))
        elif roll < persona["first_person"] + persona["positivity"]:
            tokens.append(rng.choice(_POSITIVE))
        elif roll < persona["first_person"] + persona["positivity"] + persona["negativity"]:
            tokens.append(rng.choice(_NEGATIVE))
        else:
            tokens.append(rng.choice(_NEUTRAL))
    terminal = "!" if rng.random() < persona["exclaim"] else "."
    return " ".join(tokens) + terminal


def _body(rng: random.Random, persona: dict) -> str:
    n_sentences = max(1, int(rng.gauss(persona["sentences"], 1)))
    return " ".join(_sentence(rng, persona) for _ in range(n_sentences))


def _persona(rng: random.Random) -> dict:
    positivity = rng.uniform(0.05, 0.30)
    return {
        "positivity": positivity,
        "negativity": rng.uniform(0.02, 0.25),
        "first_person": rng.uniform(0.05, 0.25),
        "verbosity": rng.uniform(5, 14),
        "sentences": rng.uniform(1.5, 4.0),
        "exclaim": rng.uniform(0.0, 0.4),
        "base_rating": 2.0 + 6.0 * positivity,
    }


def generate_corpus(
    n_users: int = 200,
    n_items: int = 60,
    reviews_per_user: tuple[int, int] = (6, 12),
    seed: int = 0,
    image_fraction: float = 0.15,
    before_floor_fraction: float = 0.0,
) -> tuple[list[RawReviewRecord], list[ItemMetadata]]:
    rng = random.Random(seed)
    items = [f"item{idx:05d}" for idx in range(n_items)]

    metadata = []
    for item_id in items:
        noun = rng.choice(_NOUNS)
        adj = rng.choice(_ADJS)
        has_images = rng.random() < 0.5
        refs = tuple(f"{item_id}-img{k}" for k in range(rng.randint(1, 2))) if has_images else ()
        metadata.append(
            ItemMetadata(
                item_id=item_id,
                title=f"{adj.capitalize()} {noun}",
                description=f"A {adj} {noun} for everyday use. "
                            f"{rng.choice(_ADJS).capitalize()} build with {rng.choice(_NEUTRAL)} included.",
                feature_bullets=tuple(f"{rng.choice(_ADJS)} {rng.choice(_NEUTRAL)}" for _ in range(2)),
                category="synthetic",
                image_refs=refs,
                caption_texts=tuple(f"photo of a {adj} {noun}" for _ in refs),
            )
        )

    reviews = []
    for u in range(n_users):
        user_id = f"user{u:05d}"
        persona = _persona(rng)
        count = rng.randint(*reviews_per_user)
        for _ in range(count):
            item_id = rng.choice(items)
            if before_floor_fraction and rng.random() < before_floor_fraction:
                ts = rng.randrange(TS_START - 5 * 365 * 24 * 3600 * 1000, TS_START)
            else:
                ts = rng.randrange(TS_START, TS_END)
            rating = min(5.0, max(1.0, round(rng.gauss(persona["base_rating"], 0.9))))
            has_image = rng.random() < image_fraction
            refs = (f"{user_id}-{item_id}-{ts}-img",) if has_image else ()
            reviews.append(
                RawReviewRecord(
                    user_id=user_id,
                    item_id=item_id,
                    rating=float(rating),
                    title=_sentence(rng, persona).rstrip(".!"),
                    body=_body(rng, persona),
                    image_refs=refs,
                    caption_texts=tuple(f"customer photo of {item_id}" for _ in refs),
                    timestamp=ts,
                )
            )
    return reviews, metadata


def write_corpus_files(
    directory: str | Path,
    reviews: list[RawReviewRecord],
    metadata: list[ItemMetadata],
) -> dict[str, Path]:
    """Write public-dump-format files (reviews, metadata, caption sidecar)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    reviews_path = directory / "reviews.jsonl"
    metadata_path = directory / "metadata.jsonl"
    captions_path = directory / "captions.json"

    captions: dict[str, str] = {}
    with open(reviews_path, "w", encoding="utf-8") as handle:
        for r in reviews:
            for ref, caption in zip(r.image_refs, r.caption_texts):
                captions[ref] = caption
            handle.write(json.dumps({
                "user_id": r.user_id,
                "parent_asin": r.item_id,
                "rating": r.rating,
                "title": r.title,
                "text": r.body,
                "images": [{"large_image_url": ref} for ref in r.image_refs],
                "timestamp": r.timestamp,
            }) + "\n")

    with open(metadata_path, "w", encoding="utf-8") as handle:
        for m in metadata:
            for ref, caption in zip(m.image_refs, m.caption_texts):
                captions[ref] = caption
            handle.write(json.dumps({
                "parent_asin": m.item_id,
                "title": m.title,
                "description": [m.description],
                "features": list(m.feature_bullets),
                "main_category": m.category,
                "images": [{"large": ref} for ref in m.image_refs],
            }) + "\n")

    captions_path.write_text(json.dumps(captions, indent=0), encoding="utf-8")
    return {"reviews": reviews_path, "metadata": metadata_path, "captions": captions_path}
