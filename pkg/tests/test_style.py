import math
import random

import numpy as np
import pytest

from reviewbench.errors import ConfigError
from reviewbench.sentiment import SentimentScorer
from reviewbench.style import (
    FEATURE_NAMES,
    StyleNormalizer,
    StyleVector,
    ZERO_STYLE,
    aggregate_style,
    extract_style_features,
    style_similarity,
)


class TestExtractStyleFeatures:
    def test_hand_counted_example(self):
        v = extract_style_features("I love it. I do.")
        assert v.word_count == 5
        assert v.sentence_count == 2
        assert v.avg_sentence_len == 2.5
        assert v.first_person_density == pytest.approx(0.4)
        assert v.cap_ratio == pytest.approx(0.2)  # 2 uppercase of 10 letters
        assert v.punct_density == pytest.approx(2 / 16)
        assert v.char_count == 16

    def test_empty_text_is_zero_vector(self):
        assert extract_style_features("") == ZERO_STYLE

    def test_eleven_components(self):
        assert len(FEATURE_NAMES) == 11
        assert extract_style_features("hello").as_array().shape == (11,)

    def test_doubling_text_doubles_counts_preserves_ratios(self):
        rng = random.Random(8)
        words = ["I", "love", "this", "box", "bad", "Nice", "it's", "FINE"]
        for _ in range(25):
            base = " ".join(rng.choices(words, k=rng.randrange(3, 12))) + ". "
            one = extract_style_features(base)
            two = extract_style_features(base + base)
            assert two.char_count == 2 * one.char_count
            assert two.word_count == 2 * one.word_count
            assert two.sentence_count == 2 * one.sentence_count
            for ratio in ("avg_sentence_len", "punct_density", "cap_ratio",
                          "first_person_density", "sent_pos", "sent_neg", "sent_neu"):
                assert getattr(two, ratio) == pytest.approx(getattr(one, ratio), abs=1e-9)

    def test_ratio_ranges(self):
        v = extract_style_features("OK!!! so GOOD, really really good stuff. I am thrilled!!!")
        for name in ("punct_density", "cap_ratio", "first_person_density",
                     "sent_pos", "sent_neg", "sent_neu"):
            assert 0.0 <= getattr(v, name) <= 1.0
        assert -1.0 <= v.sent_compound <= 1.0


class TestAggregateStyle:
    def test_single_review_identity(self):
        body = "I love this. Highly recommend!"
        assert aggregate_style([body]) == extract_style_features(body)

    def test_word_count_mean(self):
        ten = " ".join(["word"] * 10)
        twenty = " ".join(["word"] * 20)
        assert aggregate_style([ten, twenty]).word_count == 15.0

    def test_empty_history_rejected(self):
        with pytest.raises(ValueError):
            aggregate_style([])

    def test_permutation_invariant(self):
        bodies = ["I love it.", "bad product!", "It is fine, I guess.", "BROKEN junk."]
        forward = aggregate_style(bodies)
        backward = aggregate_style(list(reversed(bodies)))
        assert np.allclose(forward.as_array(), backward.as_array(), atol=1e-12)

    def test_mean_matches_bruteforce_summation(self):
        rng = random.Random(2)
        pool = ["good stuff", "I hated it.", "meh, okay box", "SUPER nice!!", "plain text here"]
        for _ in range(30):
            bodies = rng.choices(pool, k=rng.randrange(1, 8))
            got = aggregate_style(bodies).as_array()
            total = np.zeros(len(FEATURE_NAMES))
            for b in bodies:
                total += extract_style_features(b).as_array()
            assert np.allclose(got, total / len(bodies), atol=1e-9)


class TestStyleNormalizer:
    def test_std_floor_applied(self):
        vectors = [extract_style_features("same text")] * 5
        norm = StyleNormalizer.fit(vectors)
        assert (norm.std >= 1e-9).all()

    def test_roundtrip(self, tmp_path):
        norm = StyleNormalizer.fit_from_texts(["I love it.", "bad bad bad", "okay stuff here"])
        norm.save(tmp_path / "norm.json")
        loaded = StyleNormalizer.load(tmp_path / "norm.json")
        assert np.array_equal(loaded.mean, norm.mean)
        assert np.array_equal(loaded.std, norm.std)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "norm.json"
        path.write_text('{"magic": "nope", "version": 1, "mean": [], "std": []}')
        with pytest.raises(ConfigError):
            StyleNormalizer.load(path)

    def test_fit_requires_vectors(self):
        with pytest.raises(ConfigError):
            StyleNormalizer.fit([])


class TestStyleSimilarity:
    def test_identical_vectors_similarity_one(self, identity_norm):
        v = extract_style_features("I love this thing. Works great!")
        assert style_similarity(v, v, identity_norm) == 1.0

    def test_antipodal_vectors(self, identity_norm):
        values = np.array([1.0, -2.0, 0.5, 3.0, -1.0, 0.25, -0.5, 1.5, -3.0, 2.0, 0.75])
        a = StyleVector.from_array(values)
        b = StyleVector.from_array(-values)
        assert style_similarity(a, b, identity_norm) == pytest.approx(-1.0, abs=1e-9)

    def test_zero_vector_convention(self, identity_norm):
        v = extract_style_features("plain words here")
        assert style_similarity(ZERO_STYLE, v, identity_norm) == 0.0

    def test_symmetry_1000_random_pairs(self, identity_norm):
        rng = np.random.default_rng(77)
        for _ in range(1000):
            a = StyleVector.from_array(rng.normal(size=11))
            b = StyleVector.from_array(rng.normal(size=11))
            assert style_similarity(a, b, identity_norm) == style_similarity(b, a, identity_norm)

    def test_range_with_fitted_normalizer(self):
        texts = ["I love it", "bad!", "ok fine", "GREAT product, really.", "meh"]
        norm = StyleNormalizer.fit_from_texts(texts)
        for a in texts:
            for b in texts:
                sim = style_similarity(extract_style_features(a), extract_style_features(b), norm)
                assert -1.0 <= sim <= 1.0


class TestSentimentScorer:
    def test_zero_lexicon_hits(self, scorer):
        scores = scorer.score("the chair sat on the floor")
        assert scores.compound == 0.0
        assert scores.neu == 1.0

    def test_single_token_closed_form(self):
        scorer = SentimentScorer({"good": 1.9})
        expected = 1.9 / math.sqrt(1.9**2 + 15)
        assert scorer.score("good").compound == pytest.approx(expected, abs=1e-12)
        assert scorer.score("good").pos == 1.0

    def test_negation_strictly_reduces(self):
        scorer = SentimentScorer({"good": 1.9})
        assert scorer.score("not good").compound < scorer.score("good").compound

    def test_booster_strictly_increases(self):
        scorer = SentimentScorer({"good": 1.9})
        assert scorer.score("very good").compound > scorer.score("good").compound

    def test_dampener_strictly_decreases(self):
        scorer = SentimentScorer({"good": 1.9})
        assert scorer.score("slightly good").compound < scorer.score("good").compound

    def test_mass_sums_to_one_for_nonempty(self, scorer):
        rng = random.Random(6)
        words = ["good", "bad", "love", "terrible", "box", "the", "not", "very", "lamp"]
        for _ in range(200):
            text = " ".join(rng.choices(words, k=rng.randrange(1, 15)))
            s = scorer.score(text)
            assert s.pos + s.neg + s.neu == pytest.approx(1.0, abs=1e-6)
            assert -1.0 <= s.compound <= 1.0

    def test_empty_text_all_zero(self, scorer):
        s = scorer.score("")
        assert (s.pos, s.neg, s.neu, s.compound) == (0.0, 0.0, 0.0, 0.0)

    def test_missing_lexicon_file_is_init_error(self, tmp_path):
        with pytest.raises(ConfigError):
            SentimentScorer.from_file(tmp_path / "missing.tsv")

    def test_lexicon_file_parsing(self, tmp_path):
        path = tmp_path / "lex.tsv"
        path.write_text("# comment\ngood\t1.9\nbad\t-2.5\n")
        scorer = SentimentScorer.from_file(path)
        assert scorer.lexicon == {"good": 1.9, "bad": -2.5}
