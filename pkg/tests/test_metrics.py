import math
import random
import string

import numpy as np
import pytest

from reviewbench.embedding import HashedEmbedder
from reviewbench.metrics import (
    BertScoreClient,
    bertscore_f1,
    bleu,
    corpus_bleu,
    meteor,
    rating_metrics,
    rouge_l,
    round_rating,
    title_text_consistency,
)
from reviewbench.prompting import GeneratedReview


def lcs_oracle(a, b):
    """Independent full-matrix LCS dynamic program."""
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[len(a)][len(b)]


def rouge_oracle(cand_tokens, ref_tokens):
    if not cand_tokens or not ref_tokens:
        return 0.0
    lcs = lcs_oracle(cand_tokens, ref_tokens)
    if lcs == 0:
        return 0.0
    p = lcs / len(cand_tokens)
    r = lcs / len(ref_tokens)
    return 2 * p * r / (p + r)


def gen(rating=None, title="", body="", status=None):
    present = sum([rating is not None, bool(title), bool(body)])
    status = status or ("ok" if present == 3 else "partial" if present else "failed")
    return GeneratedReview(rating=rating, title=title, body=body, parse_status=status, raw="")


class TestRougeL:
    def test_identity(self):
        assert rouge_l("a b c d", "a b c d") == 1.0

    def test_hand_example(self):
        # LCS("a b c d", "a c d e") = [a, c, d] -> P = R = 0.75.
        assert rouge_l("a b c d", "a c d e") == pytest.approx(0.75)

    def test_empty_candidate(self):
        assert rouge_l("", "a b") == 0.0
        assert rouge_l("a b", "") == 0.0

    def test_matches_dp_oracle_10000_random_sequences(self):
        rng = random.Random(3)
        vocab = list(string.ascii_lowercase[:6])
        for _ in range(10_000):
            cand = rng.choices(vocab, k=rng.randrange(0, 12))
            ref = rng.choices(vocab, k=rng.randrange(0, 12))
            assert rouge_l(" ".join(cand), " ".join(ref)) == rouge_oracle(cand, ref)

    def test_case_insensitive_tokens(self):
        assert rouge_l("Good Lamp", "good lamp") == 1.0


class TestBleu:
    def test_identical_six_tokens(self):
        text = "a b c d e f"
        assert bleu(text, text) == 1.0

    def test_token_disjoint_below_smoothed_floor(self):
        assert bleu("a b c", "x y z") < 0.05

    def test_brevity_penalty_closed_form(self):
        # All n-gram precisions are 1; BP = exp(1 - 6/4).
        assert bleu("a b c d", "a b c d e f") == pytest.approx(math.exp(1 - 6 / 4), abs=1e-12)

    def test_smoothing_hand_case(self):
        # cand "a x" vs ref "a y": p1 = 1/2, bigram count zero -> smoothed
        # 0.5/1; only orders 1 and 2 have n-grams -> sqrt(0.25) = 0.5.
        assert bleu("a x", "a y") == pytest.approx(0.5, abs=1e-12)

    def test_no_penalty_when_candidate_longer(self):
        assert bleu("a b c d e f", "a b c d") == pytest.approx(
            math.exp((math.log(4 / 6) + math.log(3 / 5) + math.log(2 / 4) + math.log(1 / 3)) / 4),
            abs=1e-12,
        )

    def test_empty_inputs(self):
        assert bleu("", "a") == 0.0
        assert bleu("a", "") == 0.0

    def test_corpus_bleu_pools_statistics(self):
        cands = ["a b c d", "x y"]
        refs = ["a b c d", "x y"]
        assert corpus_bleu(cands, refs) == 1.0
        with pytest.raises(ValueError):
            corpus_bleu(["a"], [])


class TestMeteor:
    def test_zero_overlap(self):
        assert meteor("a b c", "x y z") == 0.0

    def test_identical_ten_tokens_closed_form(self):
        text = " ".join(f"w{k}" for k in range(10))
        assert meteor(text, text) == pytest.approx(1 - 0.5 * 0.1**3, abs=1e-6)  # 0.9995

    def test_reordering_scores_strictly_less(self):
        ref = "alpha beta gamma delta"
        assert meteor("delta gamma beta alpha", ref) < meteor(ref, ref)

    def test_stem_stage_matches(self):
        # "running" vs "runs" only match through the stemmer.
        assert meteor("running fast", "runs fast") > meteor("walking slow", "runs fast")

    def test_range_bounds(self):
        rng = random.Random(9)
        vocab = ["good", "bad", "box", "runs", "running", "lamp", "i"]
        for _ in range(500):
            a = " ".join(rng.choices(vocab, k=rng.randrange(0, 9)))
            b = " ".join(rng.choices(vocab, k=rng.randrange(0, 9)))
            assert 0.0 <= meteor(a, b) <= 1.0


class TestRatingMetrics:
    def test_hand_case(self):
        preds = [gen(rating=5.0, title="t", body="b"), gen(rating=3.0, title="t", body="b")]
        score = rating_metrics(preds, [4.0, 3.0])
        assert score.accuracy == 0.5
        assert score.mae == pytest.approx(0.5)
        assert score.rmse == pytest.approx(math.sqrt(0.5), abs=1e-9)  # ~0.7071
        assert score.parse_failures == 0

    def test_all_failed_parses(self):
        preds = [gen(), gen()]
        score = rating_metrics(preds, [4.0, 5.0])
        assert score.accuracy == 0.0
        assert score.mae is None and score.rmse is None
        assert score.parse_failures == 2

    def test_failures_count_as_incorrect_but_excluded_from_errors(self):
        preds = [gen(rating=4.0, title="t", body="b"), gen()]
        score = rating_metrics(preds, [4.0, 5.0])
        assert score.accuracy == 0.5
        assert score.mae == 0.0
        assert score.scored == 1

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rating_metrics([gen(rating=3.0)], [1.0, 2.0])

    def test_nearest_integer_rounding(self):
        assert round_rating(4.5) == 5
        assert round_rating(4.49) == 4
        assert rating_metrics([gen(rating=3.6, title="t", body="b")], [4.0]).accuracy == 1.0

    def test_rmse_geq_mae_1000_random_sets(self):
        rng = random.Random(31)
        for _ in range(1000):
            n = rng.randrange(1, 12)
            preds = [gen(rating=rng.uniform(1, 5), title="t", body="b") for _ in range(n)]
            golds = [float(rng.randint(1, 5)) for _ in range(n)]
            score = rating_metrics(preds, golds)
            assert score.rmse >= score.mae - 1e-12


class TestTitleTextConsistency:
    def test_identity(self, provider):
        assert title_text_consistency("great lamp", "great lamp", provider) == pytest.approx(1.0, abs=1e-9)

    def test_empty_title(self, provider):
        assert title_text_consistency("", "body here", provider) == 0.0
        assert title_text_consistency("title", "   ", provider) == 0.0

    def test_symmetric(self, provider):
        a = title_text_consistency("bright lamp", "warm bright light", provider)
        b = title_text_consistency("warm bright light", "bright lamp", provider)
        assert a == pytest.approx(b, abs=1e-12)

    def test_clipped_at_zero(self):
        class AntipodalProvider:
            provider_id = "anti"
            dim = 2

            def embed(self, texts):
                return np.array([[1.0, 0.0], [-1.0, 0.0]][: len(texts)])

        assert title_text_consistency("a", "b", AntipodalProvider()) == 0.0


class TestMetricRangesFuzz:
    def test_all_metrics_in_declared_ranges_10000_trials(self):
        rng = random.Random(8)
        alphabet = string.ascii_letters + string.digits + " .!?,'"
        for _ in range(10_000):
            a = "".join(rng.choices(alphabet, k=rng.randrange(0, 30)))
            b = "".join(rng.choices(alphabet, k=rng.randrange(0, 30)))
            assert 0.0 <= rouge_l(a, b) <= 1.0
            assert 0.0 <= bleu(a, b) <= 1.0
            assert 0.0 <= meteor(a, b) <= 1.0


class TestBertScoreClient:
    def test_absent_when_service_down(self):
        client = BertScoreClient("http://127.0.0.1:9", timeout_s=0.2, max_retries=0)
        assert bertscore_f1(["a"], ["b"], client) is None

    def test_absent_without_client(self):
        assert bertscore_f1(["a"], ["b"], None) is None

    def test_length_mismatch_rejected(self):
        client = BertScoreClient("http://127.0.0.1:9", timeout_s=0.2, max_retries=0)
        with pytest.raises(ValueError):
            client.score(["a", "b"], ["c"])
