"""Shared text segmentation: one tokenizer version for the whole toolkit.

Words are maximal runs of alphanumerics/apostrophes. Sentences are split on
runs of ``.!?`` followed by whitespace or end of text. Both style features and
text metrics go through these functions so scores stay comparable.
"""

from __future__ import annotations

import re
import string

WORD_RE = re.compile(r"[A-Za-z0-9']+")
_SENTENCE_BREAK_RE = re.compile(r"[.!?]+(?:\s+|$)")

PUNCTUATION = frozenset(string.punctuation)

# Compact English function-word list used when building content-word
# (aspect) distributions. Not used by the style features.
STOPWORDS = frozenset(
    """a about above after again against all am an and any are aren't as at be
    because been before being below between both but by can cannot could
    couldn't did didn't do does doesn't doing don't down during each few for
    from further had hadn't has hasn't have haven't having he he'd he'll he's
    her here here's hers herself him himself his how how's i i'd i'll i'm
    i've if in into is isn't it it's its itself let's me more most mustn't my
    myself no nor not of off on once only or other ought our ours ourselves
    out over own same shan't she she'd she'll she's should shouldn't so some
    such than that that's the their theirs them themselves then there there's
    these they they'd they'll they're they've this those through to too under
    until up very was wasn't we we'd we'll we're we've were weren't what
    what's when when's where where's which while who who's whom why why's with
    won't would wouldn't you you'd you'll you're you've your yours yourself
    yourselves""".split()
)


def words(text: str) -> list[str]:
    """Word tokens in order, original case preserved."""
    return WORD_RE.findall(text)


def sentences(text: str) -> list[str]:
    """Non-empty sentence segments; text without terminal punctuation is one sentence."""
    return [seg for seg in _SENTENCE_BREAK_RE.split(text) if seg.strip()]


def metric_tokens(text: str) -> list[str]:
    """Lowercased word tokens, the shared unit for overlap metrics."""
    return [w.lower() for w in WORD_RE.findall(text)]


def content_words(text: str) -> list[str]:
    """Lowercased word tokens with stopwords removed (aspect vocabulary)."""
    return [w for w in metric_tokens(text) if w not in STOPWORDS]
