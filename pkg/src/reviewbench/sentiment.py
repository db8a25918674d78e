"""Valence-lexicon sentiment scoring.

A deterministic rule-based scorer: token valences from a tab-separated
lexicon, boosters/dampeners and negation applied over a 3-token lookback
window, and the summed valence squashed onto [-1, 1] via S / sqrt(S^2 + 15).
Capitalization/punctuation emphasis heuristics are intentionally omitted; the
scores feed style features and dissonance terms, where a documented,
reproducible rule set matters more than full parity with any one analyzer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .textseg import words

COMPOUND_ALPHA = 15.0
BOOST_INCR = 0.293
BOOST_DECR = -0.293
NEGATION_SCALAR = -0.74
# Damping of booster influence by distance from the scored token.
_DISTANCE_DAMPING = {1: 1.0, 2: 0.95, 3: 0.9}

NEGATIONS = frozenset(
    """no not never none nothing nobody neither nor cannot without hardly
    barely scarcely aint ain't can't won't don't doesn't didn't isn't aren't
    wasn't weren't couldn't shouldn't wouldn't hasn't haven't hadn't""".split()
)

BOOSTERS = {
    "absolutely": BOOST_INCR,
    "amazingly": BOOST_INCR,
    "completely": BOOST_INCR,
    "considerably": BOOST_INCR,
    "decidedly": BOOST_INCR,
    "deeply": BOOST_INCR,
    "especially": BOOST_INCR,
    "exceptionally": BOOST_INCR,
    "extremely": BOOST_INCR,
    "highly": BOOST_INCR,
    "hugely": BOOST_INCR,
    "incredibly": BOOST_INCR,
    "majorly": BOOST_INCR,
    "particularly": BOOST_INCR,
    "really": BOOST_INCR,
    "remarkably": BOOST_INCR,
    "seriously": BOOST_INCR,
    "so": BOOST_INCR,
    "thoroughly": BOOST_INCR,
    "totally": BOOST_INCR,
    "truly": BOOST_INCR,
    "unbelievably": BOOST_INCR,
    "utterly": BOOST_INCR,
    "very": BOOST_INCR,
    "almost": BOOST_DECR,
    "fairly": BOOST_DECR,
    "kinda": BOOST_DECR,
    "marginally": BOOST_DECR,
    "moderately": BOOST_DECR,
    "occasionally": BOOST_DECR,
    "partly": BOOST_DECR,
    "rather": BOOST_DECR,
    "slightly": BOOST_DECR,
    "somewhat": BOOST_DECR,
    "sorta": BOOST_DECR,
}


@dataclass(frozen=True)
class SentimentScores:
    """Proportional pos/neg/neu mass plus the squashed compound score."""

    pos: float
    neg: float
    neu: float
    compound: float


def normalize_valence_sum(total: float, alpha: float = COMPOUND_ALPHA) -> float:
    """Squash a summed valence onto [-1, 1]."""
    score = total / math.sqrt(total * total + alpha)
    return max(-1.0, min(1.0, score))


def _is_negation(token: str) -> bool:
    return token in NEGATIONS or token.endswith("n't")


class SentimentScorer:
    """Scores text against a loaded valence lexicon. Read-only after init."""

    def __init__(self, lexicon: dict[str, float]):
        if not lexicon:
            raise ConfigError("sentiment lexicon is empty")
        self.lexicon = dict(lexicon)

    @classmethod
    def from_file(cls, path: str | Path) -> "SentimentScorer":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"sentiment lexicon not found: {path}")
        lexicon: dict[str, float] = {}
        for raw in path.read_text(encoding="utf-8").splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            token, _, valence = line.partition("\t")
            lexicon[token.strip().lower()] = float(valence)
        return cls(lexicon)

    def token_valences(self, text: str) -> list[float]:
        """Modifier-adjusted valence per token (0.0 for non-lexicon tokens)."""
        tokens = [w.lower() for w in words(text)]
        valences: list[float] = []
        for i, token in enumerate(tokens):
            base = self.lexicon.get(token)
            if base is None:
                valences.append(0.0)
                continue
            val = base
            negated = False
            for dist in (1, 2, 3):
                j = i - dist
                if j < 0:
                    break
                prev = tokens[j]
                if prev in self.lexicon:
                    continue
                boost = BOOSTERS.get(prev, 0.0)
                if boost:
                    if val < 0:
                        boost = -boost
                    val += boost * _DISTANCE_DAMPING[dist]
                if _is_negation(prev):
                    negated = True
            if negated:
                val *= NEGATION_SCALAR
            valences.append(val)
        return valences

    def score(self, text: str) -> SentimentScores:
        valences = self.token_valences(text)
        if not valences:
            return SentimentScores(0.0, 0.0, 0.0, 0.0)
        pos_sum = sum(v + 1.0 for v in valences if v > 0)
        neg_sum = sum(abs(v - 1.0) for v in valences if v < 0)
        neu_count = float(sum(1 for v in valences if v == 0))
        total = pos_sum + neg_sum + neu_count
        compound = normalize_valence_sum(sum(valences))
        return SentimentScores(pos_sum / total, neg_sum / total, neu_count / total, compound)


_default_scorer: SentimentScorer | None = None


def default_scorer() -> SentimentScorer:
    """Scorer over the bundled lexicon; loaded once per process."""
    global _default_scorer
    if _default_scorer is None:
        with resources.as_file(resources.files("reviewbench.data") / "valence_lexicon.tsv") as p:
            _default_scorer = SentimentScorer.from_file(p)
    return _default_scorer
