"""Stylometric feature extraction and the aggregated user style profile.

Each review body maps to an 11-dimensional vector: four length features
(characters, words, sentences, average sentence length), four sentiment
features (positive/negative/neutral mass and compound), and three
writing-style features (punctuation density, capitalization ratio,
first-person pronoun density). A user's style profile is the per-dimension
mean over their history. Cosine similarity between profiles runs over
z-normalized vectors because the raw dimensions mix counts and ratios.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .sentiment import SentimentScorer, default_scorer
from .textseg import PUNCTUATION, sentences, words

FEATURE_NAMES = (
    "char_count",
    "word_count",
    "sentence_count",
    "avg_sentence_len",
    "sent_pos",
    "sent_neg",
    "sent_neu",
    "sent_compound",
    "punct_density",
    "cap_ratio",
    "first_person_density",
)

FIRST_PERSON = frozenset(
    ["i", "me", "my", "mine", "myself", "we", "us", "our", "ours", "ourselves"]
)

STD_FLOOR = 1e-9


@dataclass(frozen=True)
class StyleVector:
    char_count: float
    word_count: float
    sentence_count: float
    avg_sentence_len: float
    sent_pos: float
    sent_neg: float
    sent_neu: float
    sent_compound: float
    punct_density: float
    cap_ratio: float
    first_person_density: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values: np.ndarray) -> "StyleVector":
        if len(values) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} components, got {len(values)}")
        return cls(**{name: float(v) for name, v in zip(FEATURE_NAMES, values)})


ZERO_STYLE = StyleVector(*([0.0] * len(FEATURE_NAMES)))


def extract_style_features(text: str, scorer: SentimentScorer | None = None) -> StyleVector:
    """The 11-feature style vector of one text. Empty text maps to all zeros
    (including the sentiment slots, overriding any neutral-mass convention)."""
    if not text:
        return ZERO_STYLE
    scorer = scorer or default_scorer()
    toks = words(text)
    sents = sentences(text)
    n_words = len(toks)
    n_sents = len(sents)
    n_chars = len(text)

    letters = [c for c in text if c.isalpha()]
    uppercase = sum(1 for c in letters if c.isupper())
    punct = sum(1 for c in text if c in PUNCTUATION)
    first_person = sum(1 for t in toks if t.lower() in FIRST_PERSON)

    sent = scorer.score(text)
    return StyleVector(
        char_count=float(n_chars),
        word_count=float(n_words),
        sentence_count=float(n_sents),
        avg_sentence_len=n_words / n_sents if n_sents else 0.0,
        sent_pos=sent.pos,
        sent_neg=sent.neg,
        sent_neu=sent.neu,
        sent_compound=sent.compound,
        punct_density=punct / n_chars if n_chars else 0.0,
        cap_ratio=uppercase / len(letters) if letters else 0.0,
        first_person_density=first_person / n_words if n_words else 0.0,
    )


def aggregate_style(bodies: list[str], scorer: SentimentScorer | None = None) -> StyleVector:
    """Per-dimension arithmetic mean over a user's review bodies."""
    if not bodies:
        raise ValueError("cannot aggregate style over an empty history")
    stacked = np.stack([extract_style_features(b, scorer).as_array() for b in bodies])
    return StyleVector.from_array(stacked.mean(axis=0))


class StyleNormalizer:
    """Per-dimension z-normalization fitted on a reference split's bodies."""

    MAGIC = "RBNORM"
    VERSION = 1

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        if mean.shape != (len(FEATURE_NAMES),) or std.shape != (len(FEATURE_NAMES),):
            raise ConfigError("normalizer shape mismatch")
        self.mean = mean.astype(float)
        self.std = np.maximum(std.astype(float), STD_FLOOR)

    @classmethod
    def fit(cls, vectors: list[StyleVector]) -> "StyleNormalizer":
        if not vectors:
            raise ConfigError("cannot fit a normalizer on zero vectors")
        stacked = np.stack([v.as_array() for v in vectors])
        return cls(stacked.mean(axis=0), stacked.std(axis=0))

    @classmethod
    def fit_from_texts(cls, texts: list[str], scorer: SentimentScorer | None = None) -> "StyleNormalizer":
        return cls.fit([extract_style_features(t, scorer) for t in texts])

    @classmethod
    def identity(cls) -> "StyleNormalizer":
        n = len(FEATURE_NAMES)
        return cls(np.zeros(n), np.ones(n))

    def transform(self, vector: StyleVector) -> np.ndarray:
        return (vector.as_array() - self.mean) / self.std

    def save(self, path: str | Path) -> None:
        payload = {
            "magic": self.MAGIC,
            "version": self.VERSION,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }
        Path(path).write_text(json.dumps(payload), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "StyleNormalizer":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("magic") != cls.MAGIC:
            raise ConfigError(f"{path}: not a style normalizer file")
        if payload.get("version") != cls.VERSION:
            raise ConfigError(f"{path}: unsupported normalizer version {payload.get('version')}")
        return cls(np.array(payload["mean"]), np.array(payload["std"]))


def style_similarity(a: StyleVector, b: StyleVector, norm: StyleNormalizer) -> float:
    """Cosine of the z-normalized vectors, in [-1, 1].

    Identical inputs return exactly 1.0; a vector that z-normalizes to
    (near) zero returns 0.0 by convention.
    """
    za = norm.transform(a)
    zb = norm.transform(b)
    na = float(np.linalg.norm(za))
    nb = float(np.linalg.norm(zb))
    if na < STD_FLOOR or nb < STD_FLOOR:
        return 0.0
    if np.array_equal(za, zb):
        return 1.0
    cos = float(np.dot(za, zb) / (na * nb))
    return max(-1.0, min(1.0, cos))
