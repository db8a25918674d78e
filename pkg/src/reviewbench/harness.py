"""End-to-end experiment orchestration.

One run = sample (or load) instances, build evidence bundles, render prompts,
generate through the configured endpoint (with prompt-hash caching), parse,
score micro metrics and dissonance, and write an atomic manifest plus report
files. A validity suite (temporal integrity, minimum-k, non-empty-query,
parse accounting, leakage audit) executes on every run and is embedded in
the manifest.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .dissonance import (
    build_user_profile,
    product_consensus,
    product_dissonance,
    sentiment_dissonance,
    user_dissonance,
    wilcoxon_signed_rank,
)
from .embedding import EmbeddingProvider, HashedEmbedder, HttpEmbeddingClient
from .errors import ConfigError, TransportError
from .graph import (
    BenchmarkInstance,
    ReviewGraph,
    build_graph,
    item_neighbor_ids_before,
    load_graph,
    load_splits,
    sample_instances,
    save_graph,
    save_splits,
    split_users,
    user_history_ids_before,
)
from .ingest import filter_corpus, iter_metadata, iter_reviews, load_captions
from .metrics import (
    BertScoreClient,
    bertscore_f1,
    bleu,
    corpus_bleu,
    meteor,
    rating_metrics,
    rouge_l,
    title_text_consistency,
)
from .prompting import (
    GeneratedReview,
    HttpGenerationClient,
    StubGenerationClient,
    generate,
    parse_generation,
    render_prompt,
    with_run_info,
)
from .retrieval import StyleCache, baseline_retrieve, build_evidence
from .style import StyleNormalizer
from .sentiment import default_scorer

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

INSTANCE_METRICS = (
    "text_rouge_l", "text_bleu", "text_meteor", "text_bertscore_f1",
    "title_rouge_l", "title_bleu", "title_meteor", "title_bertscore_f1",
    "title_consistency", "d_user", "d_prod", "d_sent",
)
# Lower is better for these; everything else is higher-better.
LOWER_IS_BETTER = {"d_user", "d_prod", "d_sent", "mae", "rmse"}


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def gold_hash(instance_record: dict) -> str:
    key = "|".join([
        instance_record["user_id"], instance_record["item_id"],
        str(instance_record["cutoff"]), instance_record.get("gold_body", ""),
    ])
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


class PromptCache:
    """File cache keyed on (prompt text, model name, generation params)."""

    def __init__(self, directory: str | Path | None):
        self.directory = Path(directory) if directory else None
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(prompt_text: str, model: str, params: dict) -> str:
        payload = json.dumps(
            {"prompt": prompt_text, "model": model, "params": params}, sort_keys=True
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def get(self, key: str) -> dict | None:
        if not self.directory:
            return None
        path = self.directory / f"{key}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, key: str, raw: str, latency_ms: float) -> None:
        if not self.directory:
            return
        path = self.directory / f"{key}.json"
        path.write_text(json.dumps({"raw": raw, "latency_ms": latency_ms}), encoding="utf-8")


@dataclass
class RunManifest:
    header: dict
    instances: list[dict] = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    validity: dict = field(default_factory=dict)
    footer: dict = field(default_factory=dict)

    def records(self) -> list[dict]:
        return [
            {"record": "header", **self.header},
            *({"record": "instance", **inst} for inst in self.instances),
            {"record": "aggregate", **self.aggregate},
            {"record": "validity", **self.validity},
            {"record": "footer", **self.footer},
        ]


def write_manifest(path: str | Path, manifest: RunManifest) -> None:
    """Atomic write: temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            for record in manifest.records():
                handle.write(json.dumps(record) + "\n")
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def load_manifest(path: str | Path) -> RunManifest:
    header: dict = {}
    instances: list[dict] = []
    aggregate: dict = {}
    validity: dict = {}
    footer: dict = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            kind = record.pop("record", None)
            if kind == "header":
                header = record
            elif kind == "instance":
                instances.append(record)
            elif kind == "aggregate":
                aggregate = record
            elif kind == "validity":
                validity = record
            elif kind == "footer":
                footer = record
    if not header:
        raise ConfigError(f"{path}: no header record; not a run manifest")
    return RunManifest(header, instances, aggregate, validity, footer)


# ---------------------------------------------------------------------------
# Pipeline assembly
# ---------------------------------------------------------------------------

def make_provider(cfg: RunConfig) -> EmbeddingProvider:
    if cfg.embedding.kind == "http":
        return HttpEmbeddingClient(
            cfg.embedding.base_url, cfg.embedding.timeout_s, cfg.embedding.max_retries
        )
    return HashedEmbedder(dim=cfg.embedding.dim, seed=cfg.embedding.seed)


def make_generation_client(cfg: RunConfig):
    gen = cfg.generation
    if gen.kind == "http":
        return HttpGenerationClient(
            base_url=gen.base_url,
            model=gen.model,
            max_tokens=gen.max_tokens,
            temperature=gen.temperature,
            timeout_s=gen.timeout_s,
            max_retries=gen.max_retries,
            auth_env=gen.auth_env,
        )
    kwargs = {"mode": gen.stub_mode}
    if gen.fixed_text is not None:
        kwargs["fixed_text"] = gen.fixed_text
    return StubGenerationClient(**kwargs)


def make_bertscore_client(cfg: RunConfig) -> BertScoreClient | None:
    if not cfg.bertscore.enabled:
        return None
    return BertScoreClient(cfg.bertscore.base_url, cfg.bertscore.timeout_s, cfg.bertscore.max_retries)


def build_graph_artifact(cfg: RunConfig, graph_dir: str | Path) -> tuple[ReviewGraph, dict, StyleNormalizer]:
    """Ingest + filter + build + split + fit normalizer, persisted to a dir."""
    if not cfg.corpus_path:
        raise ConfigError("corpus_path is required to build a graph")
    for label, path in (("corpus_path", cfg.corpus_path),
                        ("metadata_path", cfg.metadata_path),
                        ("captions_path", cfg.captions_path)):
        if path and not Path(path).exists():
            raise ConfigError(f"{label} does not exist: {path}")
    captions = load_captions(cfg.captions_path) if cfg.captions_path else None
    reviews = list(iter_reviews(cfg.corpus_path, captions=captions, on_error="skip"))
    filtered, stats = filter_corpus(reviews, cfg.filter_policy)
    log.info("filter: %s", stats.to_dict())
    metadata = (
        list(iter_metadata(cfg.metadata_path, captions=captions, on_error="skip"))
        if cfg.metadata_path else []
    )
    graph = build_graph(filtered, metadata)
    splits = split_users(graph, cfg.split_ratios, cfg.split_seed)
    train_bodies = [r.body for r in graph.edges if splits.get(r.user_id) == "train"]
    normalizer = (
        StyleNormalizer.fit_from_texts(train_bodies) if train_bodies else StyleNormalizer.identity()
    )
    graph_dir = Path(graph_dir)
    save_graph(graph, graph_dir)
    save_splits(graph_dir / "splits.json", splits, cfg.split_ratios, cfg.split_seed)
    normalizer.save(graph_dir / "normalizer.json")
    return graph, splits, normalizer


def ensure_graph(cfg: RunConfig) -> tuple[ReviewGraph, dict, StyleNormalizer]:
    """Load the persisted graph artifact, or build it from the corpus."""
    if cfg.graph_dir and (Path(cfg.graph_dir) / "edges.jsonl").exists():
        directory = Path(cfg.graph_dir)
        graph = load_graph(directory)
        splits = load_splits(directory / "splits.json")
        normalizer = StyleNormalizer.load(directory / "normalizer.json")
        return graph, splits, normalizer
    if not cfg.graph_dir:
        raise ConfigError("graph_dir must be set (or pre-built) before running")
    return build_graph_artifact(cfg, cfg.graph_dir)


# ---------------------------------------------------------------------------
# The runner
# ---------------------------------------------------------------------------

def _generation_params(cfg: RunConfig) -> dict:
    gen = cfg.generation
    return {"max_tokens": gen.max_tokens, "temperature": gen.temperature, "seed": gen.seed}


def _generate_all(
    cfg: RunConfig, prompts: list, cache: PromptCache, client
) -> tuple[list[tuple[str, float]], bool, str]:
    """Generation pass with caching and a transport-error budget. Returns
    (outputs aligned to prompts, aborted flag, abort reason)."""
    params = _generation_params(cfg)
    outputs: list[tuple[str, float] | None] = [None] * len(prompts)
    pending: list[tuple[int, object]] = []
    for idx, prompt in enumerate(prompts):
        key = PromptCache.key(prompt.text, cfg.generation.model, params)
        hit = cache.get(key)
        if hit is not None:
            outputs[idx] = (hit["raw"], float(hit["latency_ms"]))
        else:
            pending.append((idx, prompt))

    failures = 0
    aborted = False
    reason = ""

    def _one(item):
        idx, prompt = item
        output = generate(prompt, client, seed=cfg.generation.seed)
        return idx, prompt, output

    position = 0
    with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
        while position < len(pending):
            batch = pending[position : position + cfg.parallelism]
            position += len(batch)
            futures = [pool.submit(_one, item) for item in batch]
            for future in futures:
                try:
                    idx, prompt, output = future.result()
                except TransportError as exc:
                    failures += 1
                    log.error("generation failed: %s", exc)
                    if failures > cfg.error_budget:
                        aborted = True
                        reason = f"error budget exceeded ({failures} transport failures): {exc}"
                    continue
                outputs[idx] = (output.raw, output.latency_ms)
                key = PromptCache.key(prompt.text, cfg.generation.model, params)
                cache.put(key, output.raw, output.latency_ms)
            if aborted:
                break
    return outputs, aborted, reason


def run_experiment(
    cfg: RunConfig,
    graph: ReviewGraph | None = None,
    splits: dict | None = None,
    normalizer: StyleNormalizer | None = None,
    instances: list[BenchmarkInstance] | None = None,
    write_files: bool = True,
) -> RunManifest:
    """Execute one experimental run and (optionally) write its artifacts."""
    from .report import write_run_outputs

    started_at = _now_iso()
    if graph is None or splits is None or normalizer is None:
        graph, splits, normalizer = ensure_graph(cfg)
    if instances is None:
        wanted = set(cfg.sample.splits)
        instances = [
            inst for inst in sample_instances(
                graph, splits, cfg.filter_policy, cfg.sample.per_split_cap,
                cfg.sample.seed, cfg.sample.require_metadata,
            )
            if inst.split in wanted
        ]
    if not instances:
        raise ConfigError("no instances to run; sample produced an empty set")

    provider = make_provider(cfg)
    client = make_generation_client(cfg)
    bert_client = make_bertscore_client(cfg)
    scorer = default_scorer()
    cache = PromptCache(cfg.cache_dir)
    style_cache = StyleCache(graph, provider, scorer)

    # Pass 1: evidence + prompts (temporal assertions fire inside retrieval).
    bundles = []
    prompts = []
    for inst in instances:
        if cfg.retrieval.mode == "peregrine":
            bundle = build_evidence(
                graph, inst, cfg.setting, cfg.retrieval, provider, normalizer, style_cache, scorer
            )
        else:
            bundle = baseline_retrieve(
                graph, inst, cfg.retrieval, provider, normalizer, style_cache, scorer
            )
        bundles.append(bundle)
        prompts.append(render_prompt(bundle))

    # Pass 2: generation with caching and bounded parallelism.
    outputs, aborted, abort_reason = _generate_all(cfg, prompts, cache, client)

    # Pass 3: parse + score.
    records: list[dict] = []
    parsed_reviews: list[GeneratedReview] = []
    gold_ratings: list[float] = []
    temporal_violations = 0
    temporal_entries = 0
    params = _generation_params(cfg)

    for inst, bundle, prompt, output in zip(instances, bundles, prompts, outputs):
        if output is None:
            continue  # generation failed inside the error budget, or run aborted
        raw, latency_ms = output
        review = with_run_info(parse_generation(raw), cfg.retrieval.mode, latency_ms)
        parsed_reviews.append(review)
        gold_ratings.append(inst.gold.rating)

        history_ids = user_history_ids_before(graph, inst.user_id, inst.cutoff)
        neighbor_ids = item_neighbor_ids_before(
            graph, inst.item_id, inst.cutoff, exclude_user=inst.user_id
        )
        for entry in bundle.entries():
            temporal_entries += 1
            if entry.timestamp >= inst.cutoff:
                temporal_violations += 1

        profile = build_user_profile(
            [graph.edges[e].body for e in history_ids],
            [graph.edges[e].rating for e in history_ids],
            scorer,
        )
        d_user = user_dissonance(review, profile, cfg.dissonance, normalizer, scorer)
        consensus = product_consensus(
            [graph.edges[e].body for e in neighbor_ids], provider, cfg.dissonance
        )
        d_prod = product_dissonance(review, consensus, provider, cfg.dissonance)
        d_sent = sentiment_dissonance(review, inst.gold.body, inst.gold.rating, cfg.dissonance, scorer)

        scores = {
            "text_rouge_l": rouge_l(review.body, inst.gold.body),
            "text_bleu": bleu(review.body, inst.gold.body),
            "text_meteor": meteor(review.body, inst.gold.body),
            "text_bertscore_f1": None,
            "title_rouge_l": rouge_l(review.title, inst.gold.title),
            "title_bleu": bleu(review.title, inst.gold.title),
            "title_meteor": meteor(review.title, inst.gold.title),
            "title_bertscore_f1": None,
            "title_consistency": (
                title_text_consistency(review.title, review.body, provider)
                if cfg.metrics.title_consistency else None
            ),
            "d_user": d_user,
            "d_prod": d_prod,
            "d_sent": d_sent,
        }

        record = {
            "edge_id": inst.edge_id,
            "user_id": inst.user_id,
            "item_id": inst.item_id,
            "cutoff": inst.cutoff,
            "split": inst.split,
            "gold_body": inst.gold.body,
            "gold_title": inst.gold.title,
            "gold_rating": inst.gold.rating,
            "setting": bundle.setting,
            "mode": bundle.mode,
            "history_size": len(history_ids),
            "neighborhood_size": len(neighbor_ids),
            "query_source": bundle.query_source,
            "query_nonempty": bool(bundle.query_text and bundle.query_text.strip())
            if bundle.query_source is not None else None,
            "leakage_flagged": bundle.leakage_flagged,
            "prompt_hash": PromptCache.key(prompt.text, cfg.generation.model, params),
            "prompt_tokens": prompt.token_estimate,
            "evidence": {
                "user": [[e.edge_id, e.score, e.timestamp] for e in (bundle.user_block or ())],
                "neighbor": [[e.edge_id, e.score, e.timestamp] for e in (bundle.neighbor_block or ())],
            },
            "generation": {
                "raw": review.raw,
                "parse_status": review.parse_status,
                "rating": review.rating,
                "title": review.title,
                "body": review.body,
                "clamped": review.clamped,
                "latency_ms": review.latency_ms,
            },
            "scores": scores,
        }
        record["gold_hash"] = gold_hash(record)
        records.append(record)

    # Optional batched BERTScore via the sidecar service.
    if bert_client is not None and records:
        body_f1 = bertscore_f1(
            [r["generation"]["body"] for r in records],
            [r["gold_body"] for r in records], bert_client,
        )
        title_f1 = bertscore_f1(
            [r["generation"]["title"] for r in records],
            [r["gold_title"] for r in records], bert_client,
        )
        if body_f1 is not None:
            for record, value in zip(records, body_f1):
                record["scores"]["text_bertscore_f1"] = value
        if title_f1 is not None:
            for record, value in zip(records, title_f1):
                record["scores"]["title_bertscore_f1"] = value

    aggregate = _aggregate(records, parsed_reviews, gold_ratings, cfg)
    validity = _validity_checks(records, instances, cfg, temporal_entries, temporal_violations)

    manifest = RunManifest(
        header={
            "schema_version": SCHEMA_VERSION,
            "code_version": __version__,
            "run_label": cfg.run_label,
            "mode": cfg.retrieval.mode,
            "setting": cfg.setting,
            "generation_model": cfg.generation.model,
            "embedding_provider": provider.provider_id,
            "config": cfg.snapshot(),
            "created_at": started_at,
        },
        instances=records,
        aggregate=aggregate,
        validity=validity,
        footer={
            "instances": len(records),
            "sampled": len(instances),
            "aborted": aborted,
            "abort_reason": abort_reason,
            "finished_at": _now_iso(),
        },
    )

    if write_files:
        write_run_outputs(Path(cfg.output_dir), manifest, figures=cfg.figures)
    return manifest


def _aggregate(records: list[dict], reviews: list[GeneratedReview],
               gold_ratings: list[float], cfg: RunConfig) -> dict:
    metrics: dict[str, float | None] = {}
    for key in INSTANCE_METRICS:
        values = [r["scores"][key] for r in records if r["scores"].get(key) is not None]
        metrics[key] = float(np.mean(values)) if values else None
    if cfg.metrics.corpus_bleu and records:
        metrics["text_bleu_corpus"] = corpus_bleu(
            [r["generation"]["body"] for r in records], [r["gold_body"] for r in records]
        )
    rating = rating_metrics(reviews, gold_ratings).to_dict() if reviews else {}
    parse_counts = {"ok": 0, "partial": 0, "failed": 0}
    for r in records:
        parse_counts[r["generation"]["parse_status"]] += 1
    return {"metrics": metrics, "rating": rating, "parse": parse_counts}


def _validity_checks(records: list[dict], instances: list[BenchmarkInstance],
                     cfg: RunConfig, temporal_entries: int, temporal_violations: int) -> dict:
    checks: dict[str, dict] = {}
    checks["temporal_integrity"] = {
        "passed": temporal_violations == 0,
        "entries": temporal_entries,
        "violations": temporal_violations,
    }
    min_k_bad = [
        r["edge_id"] for r in records
        if r["history_size"] < cfg.filter_policy.min_user_reviews
        or r["neighborhood_size"] < cfg.filter_policy.min_item_reviews
    ]
    checks["min_k"] = {"passed": not min_k_bad, "violations": len(min_k_bad),
                       "min_user": cfg.filter_policy.min_user_reviews,
                       "min_item": cfg.filter_policy.min_item_reviews}
    ranked = [r for r in records if r["query_source"] is not None]
    empty_queries = [r["edge_id"] for r in ranked if not r["query_nonempty"]]
    checks["non_empty_query"] = {"passed": not empty_queries, "checked": len(ranked),
                                 "violations": len(empty_queries)}
    empty_prompts = [r["edge_id"] for r in records if r["prompt_tokens"] <= 0]
    checks["non_empty_prompt"] = {"passed": not empty_prompts, "violations": len(empty_prompts)}
    parse_total = sum(1 for r in records)
    parse_sum = sum(
        1 for r in records if r["generation"]["parse_status"] in ("ok", "partial", "failed")
    )
    checks["parse_accounting"] = {"passed": parse_sum == parse_total, "records": parse_total}
    if cfg.retrieval.mode == "peregrine":
        leaks = [r["edge_id"] for r in records
                 if r["query_source"] not in (None, "item_metadata") or r["leakage_flagged"]]
        checks["leakage_audit"] = {"passed": not leaks, "mode": cfg.retrieval.mode,
                                   "violations": len(leaks)}
    else:
        flagged_ok = all(r["leakage_flagged"] for r in records) if cfg.retrieval.mode == "pgraphrag_style" else True
        checks["leakage_audit"] = {"passed": flagged_ok, "mode": cfg.retrieval.mode,
                                   "flagged": all(r["leakage_flagged"] for r in records) if records else False}
    passed = all(c["passed"] for c in checks.values())
    return {"passed": passed, "checks": checks}


def validate_manifest(manifest: RunManifest) -> dict:
    """Recompute the validity suite from persisted records (fault-injection
    safe: trusts nothing but the records themselves)."""
    checks: dict[str, dict] = {}
    entries = 0
    violations = 0
    for r in manifest.instances:
        cutoff = r["cutoff"]
        for block in ("user", "neighbor"):
            for _edge, _score, ts in r.get("evidence", {}).get(block, []):
                entries += 1
                if ts >= cutoff:
                    violations += 1
    checks["temporal_integrity"] = {"passed": violations == 0, "entries": entries,
                                    "violations": violations}

    policy = (manifest.header.get("config") or {}).get("filter_policy") or {}
    min_user = int(policy.get("min_user_reviews", 4))
    min_item = int(policy.get("min_item_reviews", 3))
    min_k_bad = [r["edge_id"] for r in manifest.instances
                 if r["history_size"] < min_user or r["neighborhood_size"] < min_item]
    checks["min_k"] = {"passed": not min_k_bad, "violations": len(min_k_bad),
                       "min_user": min_user, "min_item": min_item}

    ranked = [r for r in manifest.instances if r.get("query_source") is not None]
    empty_queries = [r["edge_id"] for r in ranked if not r.get("query_nonempty")]
    checks["non_empty_query"] = {"passed": not empty_queries, "checked": len(ranked),
                                 "violations": len(empty_queries)}

    statuses = {"ok", "partial", "failed"}
    bad_status = [r["edge_id"] for r in manifest.instances
                  if r["generation"]["parse_status"] not in statuses]
    declared = manifest.footer.get("instances")
    checks["parse_accounting"] = {
        "passed": not bad_status and (declared is None or declared == len(manifest.instances)),
        "records": len(manifest.instances),
    }

    mode = manifest.header.get("mode", "peregrine")
    if mode == "peregrine":
        leaks = [r["edge_id"] for r in manifest.instances
                 if r.get("query_source") not in (None, "item_metadata") or r.get("leakage_flagged")]
        checks["leakage_audit"] = {"passed": not leaks, "mode": mode, "violations": len(leaks)}
    elif mode == "pgraphrag_style":
        flagged = all(r.get("leakage_flagged") for r in manifest.instances)
        checks["leakage_audit"] = {"passed": flagged, "mode": mode, "flagged": flagged}
    else:
        checks["leakage_audit"] = {"passed": True, "mode": mode}

    return {"passed": all(c["passed"] for c in checks.values()), "checks": checks}


def rescore_manifest(
    manifest: RunManifest,
    cfg: RunConfig,
    graph: ReviewGraph,
    normalizer: StyleNormalizer,
) -> RunManifest:
    """Re-parse stored raw outputs and recompute every score under the
    current config (e.g. to attach BERTScore once the service is up). No
    generation endpoint is touched."""
    provider = make_provider(cfg)
    bert_client = make_bertscore_client(cfg)
    scorer = default_scorer()

    records = [json.loads(json.dumps(r)) for r in manifest.instances]
    reviews: list[GeneratedReview] = []
    golds: list[float] = []
    temporal_entries = 0
    temporal_violations = 0

    for record in records:
        raw = record["generation"]["raw"]
        review = with_run_info(
            parse_generation(raw), record["mode"], record["generation"].get("latency_ms", 0.0)
        )
        reviews.append(review)
        golds.append(float(record["gold_rating"]))

        for block in ("user", "neighbor"):
            for _edge, _score, ts in record.get("evidence", {}).get(block, []):
                temporal_entries += 1
                if ts >= record["cutoff"]:
                    temporal_violations += 1

        history_ids = user_history_ids_before(graph, record["user_id"], record["cutoff"])
        neighbor_ids = item_neighbor_ids_before(
            graph, record["item_id"], record["cutoff"], exclude_user=record["user_id"]
        )
        record["history_size"] = len(history_ids)
        record["neighborhood_size"] = len(neighbor_ids)

        profile = build_user_profile(
            [graph.edges[e].body for e in history_ids],
            [graph.edges[e].rating for e in history_ids],
            scorer,
        )
        consensus = product_consensus(
            [graph.edges[e].body for e in neighbor_ids], provider, cfg.dissonance
        )
        record["generation"] = {
            "raw": review.raw,
            "parse_status": review.parse_status,
            "rating": review.rating,
            "title": review.title,
            "body": review.body,
            "clamped": review.clamped,
            "latency_ms": review.latency_ms,
        }
        record["scores"] = {
            "text_rouge_l": rouge_l(review.body, record["gold_body"]),
            "text_bleu": bleu(review.body, record["gold_body"]),
            "text_meteor": meteor(review.body, record["gold_body"]),
            "text_bertscore_f1": None,
            "title_rouge_l": rouge_l(review.title, record["gold_title"]),
            "title_bleu": bleu(review.title, record["gold_title"]),
            "title_meteor": meteor(review.title, record["gold_title"]),
            "title_bertscore_f1": None,
            "title_consistency": (
                title_text_consistency(review.title, review.body, provider)
                if cfg.metrics.title_consistency else None
            ),
            "d_user": user_dissonance(review, profile, cfg.dissonance, normalizer, scorer),
            "d_prod": product_dissonance(review, consensus, provider, cfg.dissonance),
            "d_sent": sentiment_dissonance(
                review, record["gold_body"], float(record["gold_rating"]), cfg.dissonance, scorer
            ),
        }

    if bert_client is not None and records:
        body_f1 = bertscore_f1(
            [r["generation"]["body"] for r in records],
            [r["gold_body"] for r in records], bert_client,
        )
        title_f1 = bertscore_f1(
            [r["generation"]["title"] for r in records],
            [r["gold_title"] for r in records], bert_client,
        )
        if body_f1 is not None:
            for record, value in zip(records, body_f1):
                record["scores"]["text_bertscore_f1"] = value
        if title_f1 is not None:
            for record, value in zip(records, title_f1):
                record["scores"]["title_bertscore_f1"] = value

    aggregate = _aggregate(records, reviews, golds, cfg)
    validity = {"passed": True, "checks": {}}
    rescored = RunManifest(
        header={**manifest.header, "rescored_at": _now_iso(),
                "embedding_provider": provider.provider_id},
        instances=records,
        aggregate=aggregate,
        validity=validity,
        footer={**manifest.footer, "instances": len(records), "finished_at": _now_iso()},
    )
    rescored.validity = validate_manifest(rescored)
    return rescored


# ---------------------------------------------------------------------------
# Matched comparison across runs
# ---------------------------------------------------------------------------

TABLE_COLUMNS = (
    ("Text R-L", "text_rouge_l"),
    ("Text B-F1", "text_bertscore_f1"),
    ("Text M", "text_meteor"),
    ("Title R-L", "title_rouge_l"),
    ("Title B-F1", "title_bertscore_f1"),
    ("Title M", "title_meteor"),
    ("MAE", "mae"),
    ("RMSE", "rmse"),
)


@dataclass
class ComparisonReport:
    labels: list[str]
    means: dict[str, dict[str, float | None]]  # label -> metric -> mean
    best: dict[str, str | None]  # metric -> best label
    wilcoxon: list[dict]  # pairwise tests
    instance_count: int

    def table_rows(self) -> list[list[str]]:
        rows = [["Method", *(name for name, _ in TABLE_COLUMNS)]]
        for label in self.labels:
            row = [label]
            for name, key in TABLE_COLUMNS:
                value = self.means[label].get(key)
                cell = "" if value is None else f"{value:.4f}"
                if value is not None and self.best.get(key) == label:
                    cell += "*"
                row.append(cell)
            rows.append(row)
        return rows


def _instance_metric_vectors(manifest: RunManifest) -> dict[str, dict[str, float]]:
    """gold_hash -> metric -> value (rating error included per instance)."""
    vectors: dict[str, dict[str, float]] = {}
    for r in manifest.instances:
        row: dict[str, float] = {}
        for key in INSTANCE_METRICS:
            value = r["scores"].get(key)
            if value is not None:
                row[key] = float(value)
        rating = r["generation"].get("rating")
        if rating is not None:
            row["abs_rating_error"] = abs(float(rating) - float(r["gold_rating"]))
        vectors[r["gold_hash"]] = row
    return vectors


def compare_runs(manifests: list[RunManifest], labels: list[str] | None = None) -> ComparisonReport:
    """Side-by-side means, pairwise Wilcoxon tests per metric, and
    best-per-column marking. Manifests must share the same instance set."""
    if len(manifests) < 1:
        raise ConfigError("compare_runs needs at least one manifest")
    labels = labels or [
        m.header.get("run_label") or f"run{i}" for i, m in enumerate(manifests)
    ]
    if len(labels) != len(manifests):
        raise ConfigError("labels/manifests length mismatch")
    if len(set(labels)) != len(labels):
        labels = [f"{label}#{i}" for i, label in enumerate(labels)]

    hash_sets = [frozenset(r["gold_hash"] for r in m.instances) for m in manifests]
    base = hash_sets[0]
    for label, hashes in zip(labels[1:], hash_sets[1:]):
        if hashes != base:
            divergent = sorted(base.symmetric_difference(hashes))
            raise ConfigError(
                f"manifest {label!r} covers a different instance set; "
                f"{len(divergent)} divergent gold hashes, e.g. {divergent[:5]}"
            )

    means: dict[str, dict[str, float | None]] = {}
    vectors = {}
    for label, manifest in zip(labels, manifests):
        vectors[label] = _instance_metric_vectors(manifest)
        agg = manifest.aggregate.get("metrics", {})
        rating = manifest.aggregate.get("rating", {})
        means[label] = {**{k: agg.get(k) for k in INSTANCE_METRICS},
                        "accuracy": rating.get("accuracy"),
                        "mae": rating.get("mae"), "rmse": rating.get("rmse")}

    best: dict[str, str | None] = {}
    metric_keys = [key for _, key in TABLE_COLUMNS] + ["accuracy", "d_user", "d_prod", "d_sent"]
    for key in dict.fromkeys(metric_keys):
        candidates = [(label, means[label].get(key)) for label in labels
                      if means[label].get(key) is not None]
        if not candidates:
            best[key] = None
        elif key in LOWER_IS_BETTER:
            best[key] = min(candidates, key=lambda t: t[1])[0]
        else:
            best[key] = max(candidates, key=lambda t: t[1])[0]

    tests: list[dict] = []
    ordered_hashes = sorted(base)
    compare_keys = list(INSTANCE_METRICS) + ["abs_rating_error"]
    for i in range(len(labels)):
        for j in range(i + 1, len(labels)):
            for key in compare_keys:
                a = []
                b = []
                for h in ordered_hashes:
                    va = vectors[labels[i]][h].get(key)
                    vb = vectors[labels[j]][h].get(key)
                    if va is not None and vb is not None:
                        a.append(va)
                        b.append(vb)
                if not a:
                    continue
                entry = {"a": labels[i], "b": labels[j], "metric": key, "n_pairs": len(a)}
                try:
                    result = wilcoxon_signed_rank(a, b)
                    entry.update({"statistic": result.statistic, "p_value": result.p_value,
                                  "n_nonzero": result.n, "degenerate": result.degenerate})
                except ValueError as exc:
                    entry.update({"statistic": None, "p_value": None, "error": str(exc)})
                tests.append(entry)

    return ComparisonReport(labels, means, best, tests, instance_count=len(base))
