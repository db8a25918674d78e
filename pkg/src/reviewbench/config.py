"""Run configuration: one structured YAML file drives the whole pipeline.

Secrets never live in the file; endpoint auth tokens are named environment
variables. Unknown keys are rejected so typos fail fast.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .dissonance import DissonanceConfig
from .errors import ConfigError
from .ingest import FilterPolicy
from .retrieval import SETTINGS, RetrievalConfig


@dataclass(frozen=True)
class GenerationEndpoint:
    kind: str = "stub"  # stub | http
    stub_mode: str = "echo_top_neighbor"
    fixed_text: str | None = None
    base_url: str | None = None
    model: str = "stub"
    max_tokens: int = 512
    temperature: float = 0.7
    seed: int | None = None
    timeout_s: float = 60.0
    max_retries: int = 2
    auth_env: str | None = None

    def __post_init__(self):
        if self.kind not in ("stub", "http"):
            raise ConfigError(f"generation.kind must be stub or http, got {self.kind!r}")
        if self.kind == "http" and not self.base_url:
            raise ConfigError("generation.kind=http requires base_url")


@dataclass(frozen=True)
class EmbeddingEndpoint:
    kind: str = "fallback"  # fallback | http
    dim: int = 256
    seed: int = 0
    base_url: str | None = None
    timeout_s: float = 30.0
    max_retries: int = 2

    def __post_init__(self):
        if self.kind not in ("fallback", "http"):
            raise ConfigError(f"embedding.kind must be fallback or http, got {self.kind!r}")
        if self.kind == "http" and not self.base_url:
            raise ConfigError("embedding.kind=http requires base_url")


@dataclass(frozen=True)
class BertScoreEndpoint:
    enabled: bool = False
    base_url: str | None = None
    timeout_s: float = 60.0
    max_retries: int = 2

    def __post_init__(self):
        if self.enabled and not self.base_url:
            raise ConfigError("bertscore.enabled requires base_url")


@dataclass(frozen=True)
class SampleConfig:
    per_split_cap: int = 500
    seed: int = 0
    splits: tuple[str, ...] = ("test",)
    require_metadata: bool = False


@dataclass(frozen=True)
class MetricToggles:
    corpus_bleu: bool = False
    title_consistency: bool = True


@dataclass(frozen=True)
class RunConfig:
    corpus_path: str | None = None
    metadata_path: str | None = None
    captions_path: str | None = None
    graph_dir: str | None = None
    cache_dir: str | None = None
    output_dir: str = "runs/out"
    run_label: str = "run"

    filter_policy: FilterPolicy = field(default_factory=FilterPolicy)
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    split_seed: int = 0
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)
    setting: str = "both"
    generation: GenerationEndpoint = field(default_factory=GenerationEndpoint)
    embedding: EmbeddingEndpoint = field(default_factory=EmbeddingEndpoint)
    bertscore: BertScoreEndpoint = field(default_factory=BertScoreEndpoint)
    dissonance: DissonanceConfig = field(default_factory=DissonanceConfig)
    metrics: MetricToggles = field(default_factory=MetricToggles)
    parallelism: int = 1
    error_budget: int = 5
    figures: bool = True

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ConfigError(f"setting must be one of {SETTINGS}, got {self.setting!r}")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.error_budget < 0:
            raise ConfigError("error_budget must be >= 0")

    def snapshot(self) -> dict:
        """JSON-serializable snapshot embedded in run manifests."""
        return _as_plain(self)


def _as_plain(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _as_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_as_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _as_plain(v) for k, v in obj.items()}
    return obj


def _build(cls, payload: dict, path_hint: str):
    if payload is None:
        payload = {}
    if not isinstance(payload, dict):
        raise ConfigError(f"{path_hint}: expected a mapping, got {type(payload).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(payload) - names
    if unknown:
        raise ConfigError(f"{path_hint}: unknown keys {sorted(unknown)}")
    return cls(**payload)


_TUPLE_KEYS = {"split_ratios", "splits", "reviews_per_user"}


def _tuplify(payload: dict) -> dict:
    return {k: tuple(v) if k in _TUPLE_KEYS and isinstance(v, list) else v for k, v in payload.items()}


def load_config(path: str | Path) -> RunConfig:
    """Load and validate a YAML run config."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    payload = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: config root must be a mapping")
    return config_from_dict(payload)


def config_from_dict(payload: dict) -> RunConfig:
    payload = dict(payload)
    nested = {
        "filter_policy": FilterPolicy,
        "retrieval": RetrievalConfig,
        "sample": SampleConfig,
        "generation": GenerationEndpoint,
        "embedding": EmbeddingEndpoint,
        "bertscore": BertScoreEndpoint,
        "dissonance": DissonanceConfig,
        "metrics": MetricToggles,
    }
    kwargs: dict = {}
    for key, cls in nested.items():
        if key in payload:
            kwargs[key] = _build(cls, _tuplify(payload.pop(key) or {}), key)
    scalars = _tuplify(payload)
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(scalars) - names
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)}")
    kwargs.update(scalars)
    return RunConfig(**kwargs)
