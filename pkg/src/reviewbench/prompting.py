"""Prompt rendering, generation endpoints, and structured output parsing.

The template is fixed across evidence settings: section headers appear only
for blocks present in the bundle, reviews are one-line formatted, and the
trailing instruction asks for ``Rating: / Title: / Review:`` lines. Parsing
is total: any text maps to a GeneratedReview with a parse status.
"""

from __future__ import annotations

import dataclasses
import os
import re
import threading
import time
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import requests

from .errors import PromptError, TransportError
from .retrieval import EvidenceBundle, EvidenceEntry

PREAMBLE = "Given the following product information and review evidence:"
PRODUCT_HEADER = "=== PRODUCT INFORMATION ==="
USER_HEADER = "=== USER HISTORY ==="
NEIGHBOR_HEADER = "=== ITEM NEIGHBOR REVIEWS ==="
INSTRUCTION = (
    "Generate a complete review for this product from this user.\n"
    "Include a rating from 1 to 5, a title, and review text.\n"
    "Return only:\n"
    "Rating: ...\n"
    "Title: ...\n"
    "Review: ..."
)


@dataclass(frozen=True)
class PromptRender:
    text: str
    setting: str
    token_estimate: int
    user_id: str
    item_id: str
    cutoff: int

    @property
    def prompt_id(self) -> str:
        return f"{self.user_id}:{self.item_id}:{self.cutoff}"


@dataclass(frozen=True)
class GeneratedReview:
    rating: float | None
    title: str
    body: str
    parse_status: str  # ok | partial | failed
    raw: str
    clamped: bool = False
    mode: str = ""
    latency_ms: float = 0.0

    def to_dict(self) -> dict:
        return {
            "rating": self.rating,
            "title": self.title,
            "body": self.body,
            "parse_status": self.parse_status,
            "raw": self.raw,
            "clamped": self.clamped,
            "mode": self.mode,
            "latency_ms": self.latency_ms,
        }


def _flatten(text: str) -> str:
    """Collapse whitespace runs so a review fits the one-line entry format."""
    return " ".join(text.split())


def _format_rating(rating: float) -> str:
    return str(int(rating)) if float(rating).is_integer() else f"{rating:.1f}"


def _review_line(index: int, entry: EvidenceEntry) -> str:
    return (
        f"Review {index}: Rating: {_format_rating(entry.rating)}/5, "
        f"Title: {_flatten(entry.title)}, Text: {_flatten(entry.body)}"
    )


def render_prompt(bundle: EvidenceBundle) -> PromptRender:
    """Render the fixed template; absent evidence blocks are simply removed."""
    sections: list[str] = []

    if bundle.product_block is not None:
        lines = [PRODUCT_HEADER]
        if bundle.product_block.text.strip():
            lines.append(bundle.product_block.text)
        lines.extend(f"Image caption: {c}" for c in bundle.product_block.caption_texts)
        if len(lines) > 1:
            sections.append("\n".join(lines))

    if bundle.user_block:
        lines = [USER_HEADER]
        for i, entry in enumerate(bundle.user_block, start=1):
            lines.append(_review_line(i, entry))
        sections.append("\n".join(lines))

    if bundle.neighbor_block:
        lines = [NEIGHBOR_HEADER]
        for i, entry in enumerate(bundle.neighbor_block, start=1):
            lines.append(_review_line(i, entry))
            lines.extend(f"Image caption: {c}" for c in entry.caption_texts)
        sections.append("\n".join(lines))

    if not sections:
        raise PromptError(
            f"no evidence blocks to render for ({bundle.user_id}, {bundle.item_id})"
        )

    text = "\n\n".join([PREAMBLE, *sections, INSTRUCTION])
    return PromptRender(
        text=text,
        setting=bundle.setting,
        token_estimate=len(text.split()),
        user_id=bundle.user_id,
        item_id=bundle.item_id,
        cutoff=bundle.cutoff,
    )


# ---------------------------------------------------------------------------
# Generation endpoints
# ---------------------------------------------------------------------------

@runtime_checkable
class GenerationClient(Protocol):
    def complete(self, prompt_text: str, seed: int | None = None) -> str: ...


@dataclass(frozen=True)
class GenerationOutput:
    raw: str
    latency_ms: float


def generate(prompt: PromptRender, endpoint: GenerationClient, seed: int | None = None) -> GenerationOutput:
    """One completion; latency recorded, no retries on parse failure."""
    start = time.monotonic()
    raw = endpoint.complete(prompt.text, seed=seed)
    return GenerationOutput(raw=raw, latency_ms=(time.monotonic() - start) * 1000.0)


class HttpGenerationClient:
    """Chat-completion style endpoint. Auth token comes from an environment
    variable named in the config; it is never written to disk."""

    def __init__(
        self,
        base_url: str,
        model: str,
        max_tokens: int = 512,
        temperature: float = 0.7,
        timeout_s: float = 60.0,
        max_retries: int = 2,
        backoff_s: float = 1.0,
        auth_env: str | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.max_tokens = max_tokens
        self.temperature = temperature
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.auth_env = auth_env
        self._session = requests.Session()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.auth_env:
            token = os.environ.get(self.auth_env, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, prompt_text: str, seed: int | None = None) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt_text}],
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        }
        if seed is not None:
            body["seed"] = seed
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                response = self._session.post(
                    self.base_url, json=body, headers=self._headers(), timeout=self.timeout_s
                )
                if response.status_code == 429:
                    if attempt < self.max_retries:
                        time.sleep(self.backoff_s * (attempt + 1))
                        continue
                    raise TransportError("generation endpoint rate-limited beyond retry cap")
                response.raise_for_status()
                return str(response.json()["text"])
            except TransportError:
                raise
            except Exception as exc:
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(self.backoff_s * (attempt + 1))
        raise TransportError(f"generation endpoint failed: {last_error}")


_STUB_REVIEW_LINE = re.compile(
    r"^Review 1: Rating: (?P<rating>[^/]+)/5, Title: (?P<title>.*?), Text: (?P<body>.*)$",
    re.MULTILINE,
)

STUB_MODES = ("echo_top_neighbor", "fixed_text", "scripted")

DEFAULT_FIXED_TEXT = "Rating: 3\nTitle: Stub review\nReview: Fixed stub output."


class StubGenerationClient:
    """Deterministic built-in endpoint for offline runs and tests.

    ``echo_top_neighbor`` replays the first neighbor review found in the
    prompt (falling back to the first user-history review, then fixed text)
    as a well-formed completion. ``scripted`` returns pre-seeded responses in
    call order.
    """

    def __init__(self, mode: str = "echo_top_neighbor", fixed_text: str = DEFAULT_FIXED_TEXT,
                 script: list[str] | None = None):
        if mode not in STUB_MODES:
            raise ValueError(f"unknown stub mode {mode!r}")
        self.mode = mode
        self.fixed_text = fixed_text
        self.script = list(script or [])
        self.calls = 0
        self._lock = threading.Lock()

    def _echo(self, prompt_text: str) -> str:
        for header in (NEIGHBOR_HEADER, USER_HEADER):
            section_start = prompt_text.find(header)
            if section_start == -1:
                continue
            match = _STUB_REVIEW_LINE.search(prompt_text, section_start)
            if match:
                return (
                    f"Rating: {match.group('rating')}\n"
                    f"Title: {match.group('title')}\n"
                    f"Review: {match.group('body')}"
                )
        return self.fixed_text

    def complete(self, prompt_text: str, seed: int | None = None) -> str:
        del seed
        with self._lock:
            index = self.calls
            self.calls += 1
        if self.mode == "fixed_text":
            return self.fixed_text
        if self.mode == "scripted":
            if index >= len(self.script):
                raise TransportError(f"scripted stub exhausted after {len(self.script)} responses")
            return self.script[index]
        return self._echo(prompt_text)


# ---------------------------------------------------------------------------
# Output parsing
# ---------------------------------------------------------------------------

_RATING_LINE = re.compile(r"^\s*rating\s*:\s*(?P<value>.+?)\s*$", re.IGNORECASE | re.MULTILINE)
_TITLE_LINE = re.compile(r"^\s*title\s*:\s*(?P<value>.+?)\s*$", re.IGNORECASE | re.MULTILINE)
_REVIEW_MARK = re.compile(r"^\s*review\s*:\s*", re.IGNORECASE | re.MULTILINE)
_FIRST_NUMBER = re.compile(r"-?\d+(?:\.\d+)?")


def parse_generation(raw: str) -> GeneratedReview:
    """Case-insensitive, line-anchored extraction of the three fields.

    The body is everything after the first ``Review:`` marker. A missing
    field yields status ``partial``; nothing extractable yields ``failed``.
    Never raises.
    """
    raw = raw or ""
    rating: float | None = None
    clamped = False
    rating_match = _RATING_LINE.search(raw)
    if rating_match:
        number = _FIRST_NUMBER.search(rating_match.group("value"))
        if number:
            value = float(number.group(0))
            if value < 1.0 or value > 5.0:
                clamped = True
            rating = min(5.0, max(1.0, value))

    title = ""
    title_match = _TITLE_LINE.search(raw)
    if title_match:
        title = title_match.group("value").strip()

    body = ""
    review_match = _REVIEW_MARK.search(raw)
    if review_match:
        body = raw[review_match.end():].strip()

    present = sum([rating is not None, bool(title), bool(body)])
    if present == 3:
        status = "ok"
    elif present >= 1:
        status = "partial"
    else:
        status = "failed"
    return GeneratedReview(
        rating=rating, title=title, body=body, parse_status=status, raw=raw, clamped=clamped
    )


def with_run_info(review: GeneratedReview, mode: str, latency_ms: float) -> GeneratedReview:
    return dataclasses.replace(review, mode=mode, latency_ms=latency_ms)
