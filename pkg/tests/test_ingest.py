import json
import random

import pytest

from reviewbench.errors import ParseError, ValidationError
from reviewbench.ingest import (
    DEFAULT_MIN_TIMESTAMP_MS,
    FilterPolicy,
    filter_corpus,
    load_captions,
    parse_metadata_line,
    parse_review_line,
)

from conftest import review


def make_line(**overrides):
    record = {
        "user_id": "u1",
        "parent_asin": "i1",
        "rating": 5.0,
        "title": "Great",
        "text": "Loved it",
        "images": [],
        "timestamp": 1609459200000,
    }
    record.update(overrides)
    return json.dumps(record)


class TestParseReviewLine:
    def test_field_mapping(self):
        r = parse_review_line(make_line())
        assert r.rating == 5.0
        assert r.timestamp == 1609459200000
        assert r.user_id == "u1"
        assert r.item_id == "i1"
        assert r.body == "Loved it"

    def test_missing_user_id_is_parse_error(self):
        with pytest.raises(ParseError) as err:
            parse_review_line(make_line(user_id=""), line_no=7)
        assert err.value.line_no == 7

    def test_rating_out_of_range_is_validation_error(self):
        with pytest.raises(ValidationError):
            parse_review_line(make_line(rating="6"))

    def test_rating_coerced_from_string(self):
        assert parse_review_line(make_line(rating="4.0")).rating == 4.0

    def test_invalid_json_carries_offset(self):
        with pytest.raises(ParseError) as err:
            parse_review_line("{nope", line_no=3)
        assert err.value.line_no == 3

    def test_nonpositive_timestamp_rejected(self):
        with pytest.raises(ValidationError):
            parse_review_line(make_line(timestamp=0))

    def test_asin_fallback_and_image_urls(self):
        line = make_line(parent_asin=None, asin="i9",
                         images=[{"large_image_url": "http://x/a.jpg"}])
        r = parse_review_line(line)
        assert r.item_id == "i9"
        assert r.image_refs == ("http://x/a.jpg",)

    def test_caption_sidecar_attached(self):
        captions = {"http://x/a.jpg": "a red lamp"}
        line = make_line(images=[{"large_image_url": "http://x/a.jpg"}])
        r = parse_review_line(line, captions=captions)
        assert r.caption_texts == ("a red lamp",)

    def test_internal_format_roundtrip(self):
        original = review("u1", "i1", ts=10, body="hello there")
        r = parse_review_line(json.dumps(original.to_dict()))
        assert r == original


def test_parse_metadata_line_joins_description_list():
    line = json.dumps({"parent_asin": "i1", "title": "Lamp",
                       "description": ["part one", "part two"], "features": ["bright"]})
    m = parse_metadata_line(line)
    assert m.item_id == "i1"
    assert "part one" in m.description and "part two" in m.description
    assert m.feature_bullets == ("bright",)


def test_load_captions_requires_object(tmp_path):
    path = tmp_path / "captions.json"
    path.write_text("[1, 2]")
    with pytest.raises(ParseError):
        load_captions(path)


class TestFilterCorpus:
    def test_dedup_keeps_one_of_three_copies(self):
        r = review("u1", "i1", ts=10)
        permissive = FilterPolicy(min_user_reviews=1, min_item_reviews=1)
        kept, stats = filter_corpus([r, r, r], permissive)
        assert len(kept) == 1
        assert stats.duplicates == 2

    def test_dedup_disabled(self):
        r = review("u1", "i1", ts=10)
        policy = FilterPolicy(min_user_reviews=1, min_item_reviews=1, dedup=False)
        kept, _ = filter_corpus([r, r], policy)
        assert len(kept) == 2

    def test_user_below_threshold_removed(self):
        reviews = [review("u1", f"i{k}", ts=k) for k in range(3)]
        policy = FilterPolicy(min_user_reviews=4, min_item_reviews=1)
        kept, stats = filter_corpus(reviews, policy)
        assert kept == []
        assert stats.degree_pruned == 3

    def test_timestamp_floor(self):
        old = review("u1", "i1", ts=-10**12)  # far before the 2016 floor
        assert old.timestamp < DEFAULT_MIN_TIMESTAMP_MS
        new = review("u1", "i1", ts=5)
        policy = FilterPolicy(min_user_reviews=1, min_item_reviews=1)
        kept, stats = filter_corpus([old, new], policy)
        assert kept == [new]
        assert stats.below_time_floor == 1

    def test_cascading_prune_fixed_point_hand_simulated(self):
        # Hand simulation with min_user=2, min_item=2 over a 6-node toy:
        # users A,B,C over items X,Y cascade to empty (B and C fall first,
        # then X and Y, then A); users D,E over items P,Q are stable.
        policy = FilterPolicy(min_user_reviews=2, min_item_reviews=2)
        doomed = [
            review("A", "X", ts=1, body="a x"),
            review("A", "Y", ts=2, body="a y"),
            review("B", "X", ts=3, body="b x"),
            review("C", "Y", ts=4, body="c y"),
        ]
        stable = [
            review("D", "P", ts=5, body="d p"),
            review("D", "Q", ts=6, body="d q"),
            review("E", "P", ts=7, body="e p"),
            review("E", "Q", ts=8, body="e q"),
        ]
        kept, stats = filter_corpus(doomed + stable, policy)
        assert sorted((r.user_id, r.item_id) for r in kept) == [
            ("D", "P"), ("D", "Q"), ("E", "P"), ("E", "Q"),
        ]
        assert stats.prune_rounds >= 2  # the cascade needs more than one pass

    def test_idempotent_on_random_corpora(self):
        rng = random.Random(99)
        policy = FilterPolicy(min_user_reviews=2, min_item_reviews=2)
        for _ in range(50):
            corpus = [
                review(f"u{rng.randrange(6)}", f"i{rng.randrange(4)}",
                       ts=rng.randrange(1, 10_000), body=f"b{rng.randrange(50)}")
                for _ in range(rng.randrange(0, 40))
            ]
            once, _ = filter_corpus(corpus, policy)
            twice, stats = filter_corpus(once, policy)
            assert twice == once
            assert stats.duplicates == 0 and stats.degree_pruned == 0

    def test_degree_property_random_corpora_1000_trials(self):
        rng = random.Random(4)
        policy = FilterPolicy(min_user_reviews=3, min_item_reviews=2)
        for _ in range(1000):
            corpus = [
                review(f"u{rng.randrange(5)}", f"i{rng.randrange(4)}",
                       ts=rng.randrange(1, 5_000), body=f"b{rng.randrange(30)}")
                for _ in range(rng.randrange(0, 30))
            ]
            kept, _ = filter_corpus(corpus, policy)
            users = {}
            items = {}
            for r in kept:
                users[r.user_id] = users.get(r.user_id, 0) + 1
                items[r.item_id] = items.get(r.item_id, 0) + 1
            assert all(c >= policy.min_user_reviews for c in users.values())
            assert all(c >= policy.min_item_reviews for c in items.values())
            assert all(r.timestamp >= policy.min_timestamp for r in kept)

    def test_policy_validates_minimums(self):
        with pytest.raises(ValidationError):
            FilterPolicy(min_user_reviews=0)
