"""Corpus ingestion: parse raw review/metadata dumps and apply corpus filters.

Input files are newline-delimited JSON with the public review-dump field
names (``rating``, ``title``, ``text``, ``images``, ``parent_asin``/``asin``,
``user_id``, ``timestamp``); item metadata is a separate JSONL file keyed by
item id. An optional sidecar JSON object maps image refs to precomputed
caption text.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

from .errors import ParseError, ValidationError

log = logging.getLogger(__name__)

DEFAULT_MIN_TIMESTAMP_MS = int(datetime(2016, 1, 1, tzinfo=timezone.utc).timestamp() * 1000)


@dataclass(frozen=True)
class RawReviewRecord:
    """One user->item review edge."""

    user_id: str
    item_id: str
    rating: float
    title: str
    body: str
    image_refs: tuple[str, ...] = ()
    caption_texts: tuple[str, ...] = ()
    timestamp: int = 0

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "item_id": self.item_id,
            "rating": self.rating,
            "title": self.title,
            "body": self.body,
            "image_refs": list(self.image_refs),
            "caption_texts": list(self.caption_texts),
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RawReviewRecord":
        return cls(
            user_id=d["user_id"],
            item_id=d["item_id"],
            rating=float(d["rating"]),
            title=d.get("title", ""),
            body=d.get("body", ""),
            image_refs=tuple(d.get("image_refs", ())),
            caption_texts=tuple(d.get("caption_texts", ())),
            timestamp=int(d["timestamp"]),
        )


@dataclass(frozen=True)
class ItemMetadata:
    """Catalog-side item record."""

    item_id: str
    title: str = ""
    description: str = ""
    feature_bullets: tuple[str, ...] = ()
    category: str = ""
    image_refs: tuple[str, ...] = ()
    caption_texts: tuple[str, ...] = ()

    def has_text(self) -> bool:
        return bool(self.title.strip() or self.description.strip())

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "title": self.title,
            "description": self.description,
            "feature_bullets": list(self.feature_bullets),
            "category": self.category,
            "image_refs": list(self.image_refs),
            "caption_texts": list(self.caption_texts),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ItemMetadata":
        return cls(
            item_id=d["item_id"],
            title=d.get("title", ""),
            description=d.get("description", ""),
            feature_bullets=tuple(d.get("feature_bullets", ())),
            category=d.get("category", ""),
            image_refs=tuple(d.get("image_refs", ())),
            caption_texts=tuple(d.get("caption_texts", ())),
        )


@dataclass(frozen=True)
class FilterPolicy:
    min_timestamp: int = DEFAULT_MIN_TIMESTAMP_MS
    min_user_reviews: int = 4
    min_item_reviews: int = 3
    dedup: bool = True

    def __post_init__(self):
        if self.min_user_reviews < 1 or self.min_item_reviews < 1:
            raise ValidationError("minimum review counts must be >= 1")


@dataclass
class FilterStats:
    input_count: int = 0
    below_time_floor: int = 0
    duplicates: int = 0
    degree_pruned: int = 0
    prune_rounds: int = 0
    kept: int = 0
    users: int = 0
    items: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _image_ref(entry) -> str:
    """Normalize one image entry (plain ref string or a url dict) to a ref string."""
    if isinstance(entry, str):
        return entry
    if isinstance(entry, dict):
        for key in ("large_image_url", "medium_image_url", "small_image_url", "large", "hi_res", "thumb", "url"):
            value = entry.get(key)
            if value:
                return str(value)
    return ""


def _image_refs(value) -> tuple[str, ...]:
    if not isinstance(value, list):
        return ()
    return tuple(ref for ref in (_image_ref(e) for e in value) if ref)


def _captions_for(refs: tuple[str, ...], own: list, captions: dict[str, str] | None) -> tuple[str, ...]:
    texts = [str(t) for t in own if str(t).strip()]
    if captions:
        texts.extend(captions[r] for r in refs if r in captions and captions[r].strip())
    return tuple(texts)


def parse_review_line(
    line: str, line_no: int = 0, captions: dict[str, str] | None = None
) -> RawReviewRecord:
    """Parse one JSONL review record; raises ParseError / ValidationError."""
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line_no) from exc
    if not isinstance(record, dict):
        raise ParseError("record is not an object", line_no)

    user_id = str(record.get("user_id") or "").strip()
    # Accept both the public dump field names and this toolkit's own output.
    item_id = str(record.get("parent_asin") or record.get("asin") or record.get("item_id") or "").strip()
    if not user_id:
        raise ParseError("missing user_id", line_no)
    if not item_id:
        raise ParseError("missing parent_asin/asin", line_no)

    try:
        rating = float(record["rating"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"missing or non-numeric rating: {record.get('rating')!r}", line_no) from exc
    if not 1.0 <= rating <= 5.0:
        raise ValidationError(f"line {line_no}: rating {rating} outside [1, 5]")

    try:
        timestamp = int(record["timestamp"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"missing or non-numeric timestamp: {record.get('timestamp')!r}", line_no) from exc
    if timestamp <= 0:
        raise ValidationError(f"line {line_no}: timestamp must be > 0")

    refs = _image_refs(record.get("images", record.get("image_refs", [])))
    body = record.get("text") if record.get("text") is not None else record.get("body")
    return RawReviewRecord(
        user_id=user_id,
        item_id=item_id,
        rating=rating,
        title=str(record.get("title") or ""),
        body=str(body or ""),
        image_refs=refs,
        caption_texts=_captions_for(refs, record.get("caption_texts") or [], captions),
        timestamp=timestamp,
    )


def parse_metadata_line(
    line: str, line_no: int = 0, captions: dict[str, str] | None = None
) -> ItemMetadata:
    """Parse one JSONL item-metadata record."""
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line_no) from exc
    if not isinstance(record, dict):
        raise ParseError("record is not an object", line_no)

    item_id = str(record.get("parent_asin") or record.get("asin") or record.get("item_id") or "").strip()
    if not item_id:
        raise ParseError("missing item id", line_no)

    description = record.get("description") or ""
    if isinstance(description, list):
        description = "\n".join(str(part) for part in description)

    refs = _image_refs(record.get("images", []))
    return ItemMetadata(
        item_id=item_id,
        title=str(record.get("title") or ""),
        description=str(description),
        feature_bullets=tuple(str(f) for f in record.get("features") or record.get("feature_bullets") or []),
        category=str(record.get("main_category") or record.get("category") or ""),
        image_refs=refs,
        caption_texts=_captions_for(refs, record.get("caption_texts") or [], captions),
    )


def load_captions(path: str | Path) -> dict[str, str]:
    """Sidecar file: a single JSON object mapping image ref -> caption text."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, dict):
        raise ParseError(f"{path}: caption sidecar must be a JSON object")
    return {str(k): str(v) for k, v in payload.items()}


def iter_reviews(
    path: str | Path,
    captions: dict[str, str] | None = None,
    on_error: str = "raise",
) -> Iterator[RawReviewRecord]:
    """Stream parsed reviews from a JSONL file.

    ``on_error='skip'`` logs and drops bad lines instead of raising.
    """
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                yield parse_review_line(line, line_no, captions)
            except (ParseError, ValidationError) as exc:
                if on_error == "raise":
                    raise
                log.warning("skipping review %s", exc)


def iter_metadata(
    path: str | Path,
    captions: dict[str, str] | None = None,
    on_error: str = "raise",
) -> Iterator[ItemMetadata]:
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                yield parse_metadata_line(line, line_no, captions)
            except ParseError as exc:
                if on_error == "raise":
                    raise
                log.warning("skipping metadata %s", exc)


def _dedup_key(r: RawReviewRecord) -> tuple:
    body_hash = hashlib.sha1(r.body.encode("utf-8")).hexdigest()
    return (r.user_id, r.item_id, r.timestamp, body_hash)


def filter_corpus(
    reviews: Iterable[RawReviewRecord], policy: FilterPolicy = FilterPolicy()
) -> tuple[list[RawReviewRecord], FilterStats]:
    """Apply the corpus filters: timestamp floor, exact dedup, and iterative
    degree pruning until every surviving user/item meets its minimum count.

    Pruning runs to a fixed point because dropping one node's reviews can
    push its counterparties back under threshold.
    """
    stats = FilterStats()
    kept: list[RawReviewRecord] = []
    seen: set[tuple] = set()
    for r in reviews:
        stats.input_count += 1
        if r.timestamp < policy.min_timestamp:
            stats.below_time_floor += 1
            continue
        if policy.dedup:
            key = _dedup_key(r)
            if key in seen:
                stats.duplicates += 1
                continue
            seen.add(key)
        kept.append(r)

    while True:
        user_counts = Counter(r.user_id for r in kept)
        item_counts = Counter(r.item_id for r in kept)
        bad_users = {u for u, c in user_counts.items() if c < policy.min_user_reviews}
        bad_items = {i for i, c in item_counts.items() if c < policy.min_item_reviews}
        if not bad_users and not bad_items:
            break
        stats.prune_rounds += 1
        before = len(kept)
        kept = [r for r in kept if r.user_id not in bad_users and r.item_id not in bad_items]
        stats.degree_pruned += before - len(kept)

    stats.kept = len(kept)
    stats.users = len({r.user_id for r in kept})
    stats.items = len({r.item_id for r in kept})
    return kept, stats


def write_reviews(path: str | Path, reviews: Iterable[RawReviewRecord]) -> int:
    """Write reviews back out as internal-format JSONL; returns the count."""
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for r in reviews:
            handle.write(json.dumps(r.to_dict()) + "\n")
            count += 1
    return count
