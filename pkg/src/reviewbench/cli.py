"""Command-line entry point.

Subcommands: ingest, build-graph, stats, sample, run, evaluate, compare,
validate, plus synth (seeded synthetic corpora so the pipeline runs without
the real dump). One YAML config file drives run/evaluate; secrets stay in
environment variables.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

from .config import RunConfig, load_config
from .errors import ReviewBenchError
from .graph import (
    dataset_stats,
    load_graph,
    load_splits,
    read_instances,
    sample_instances,
    write_instances,
)
from .harness import (
    build_graph_artifact,
    compare_runs,
    ensure_graph,
    load_manifest,
    rescore_manifest,
    run_experiment,
    validate_manifest,
)
from .ingest import FilterPolicy, filter_corpus, iter_metadata, iter_reviews, load_captions, write_reviews
from .synthetic import generate_corpus, write_corpus_files

log = logging.getLogger(__name__)


def _policy_from_args(args) -> FilterPolicy:
    return FilterPolicy(
        min_timestamp=args.min_timestamp,
        min_user_reviews=args.min_user_reviews,
        min_item_reviews=args.min_item_reviews,
        dedup=not args.no_dedup,
    )


def _add_policy_flags(parser: argparse.ArgumentParser) -> None:
    defaults = FilterPolicy()
    parser.add_argument("--min-timestamp", type=int, default=defaults.min_timestamp,
                        help="corpus floor, ms since epoch (default: 2016-01-01 UTC)")
    parser.add_argument("--min-user-reviews", type=int, default=defaults.min_user_reviews)
    parser.add_argument("--min-item-reviews", type=int, default=defaults.min_item_reviews)
    parser.add_argument("--no-dedup", action="store_true", help="keep exact duplicates")


def cmd_synth(args) -> int:
    reviews, metadata = generate_corpus(
        n_users=args.users, n_items=args.items, seed=args.seed,
        image_fraction=args.image_fraction,
        before_floor_fraction=args.before_floor_fraction,
    )
    paths = write_corpus_files(args.out, reviews, metadata)
    print(f"[synth] wrote {len(reviews)} reviews / {len(metadata)} items")
    for name, path in paths.items():
        print(f"  {name}: {path}")
    return 0


def cmd_ingest(args) -> int:
    captions = load_captions(args.captions) if args.captions else None
    policy = _policy_from_args(args)
    reviews = iter_reviews(args.reviews, captions=captions, on_error=args.on_error)
    filtered, stats = filter_corpus(reviews, policy)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_reviews(outdir / "filtered_reviews.jsonl", filtered)
    if args.metadata:
        metadata = list(iter_metadata(args.metadata, captions=captions, on_error=args.on_error))
        with open(outdir / "metadata.jsonl", "w", encoding="utf-8") as handle:
            for m in metadata:
                handle.write(json.dumps(m.to_dict()) + "\n")
        print(f"[ingest] {len(metadata)} metadata records")
    (outdir / "ingest_stats.json").write_text(json.dumps(stats.to_dict(), indent=2), encoding="utf-8")
    print(f"[ingest] kept {stats.kept}/{stats.input_count} reviews "
          f"({stats.users} users, {stats.items} items; "
          f"floor={stats.below_time_floor} dup={stats.duplicates} pruned={stats.degree_pruned} "
          f"in {stats.prune_rounds} rounds)")
    return 0


def cmd_build_graph(args) -> int:
    cfg = RunConfig(
        corpus_path=args.reviews,
        metadata_path=args.metadata,
        captions_path=args.captions,
        graph_dir=args.graph,
        filter_policy=_policy_from_args(args),
        split_ratios=tuple(args.ratios),
        split_seed=args.split_seed,
    )
    start = time.monotonic()
    graph, splits, _ = build_graph_artifact(cfg, args.graph)
    elapsed = time.monotonic() - start
    counts = {s: sum(1 for v in splits.values() if v == s) for s in ("train", "dev", "test")}
    print(f"[build-graph] {graph.edge_count()} edges, {len(graph.users)} users, "
          f"{len(graph.items)} items in {elapsed:.1f}s -> {args.graph}")
    print(f"[build-graph] user splits: {counts}; items missing metadata: {len(graph.missing_metadata)}")
    return 0


def cmd_stats(args) -> int:
    graph = load_graph(args.graph)
    instances = read_instances(args.instances)
    stats = dataset_stats(instances, graph)
    print(f"[stats] instances:            {stats.instance_count}")
    print(f"[stats] mean user history:    {stats.mean_user_history:.2f}")
    print(f"[stats] mean item neighbors:  {stats.mean_item_neighborhood:.2f}")
    print(f"[stats] image fraction:       {stats.image_fraction:.1%}")
    if args.out:
        Path(args.out).write_text(json.dumps(stats.to_dict(), indent=2), encoding="utf-8")
        print(f"[stats] written to {args.out}")
    return 0


def cmd_sample(args) -> int:
    graph = load_graph(args.graph)
    splits = load_splits(Path(args.graph) / "splits.json")
    policy = _policy_from_args(args)
    instances = sample_instances(
        graph, splits, policy, per_split_cap=args.cap, seed=args.seed,
        require_metadata=args.require_metadata,
    )
    wanted = set(args.splits.split(","))
    instances = [inst for inst in instances if inst.split in wanted]
    write_instances(args.out, instances)
    by_split = {s: sum(1 for i in instances if i.split == s) for s in wanted}
    print(f"[sample] wrote {len(instances)} instances to {args.out} ({by_split})")
    return 0


def _config_with_overrides(args) -> RunConfig:
    cfg = load_config(args.config)
    updates = {}
    if getattr(args, "output", None):
        updates["output_dir"] = args.output
    if getattr(args, "setting", None):
        updates["setting"] = args.setting
    if getattr(args, "mode", None):
        updates["retrieval"] = dataclasses.replace(cfg.retrieval, mode=args.mode)
    if getattr(args, "label", None):
        updates["run_label"] = args.label
    return dataclasses.replace(cfg, **updates) if updates else cfg


def cmd_run(args) -> int:
    cfg = _config_with_overrides(args)
    instances = read_instances(args.instances) if args.instances else None
    start = time.monotonic()
    manifest = run_experiment(cfg, instances=instances)
    elapsed = time.monotonic() - start
    outdir = Path(cfg.output_dir)
    print(f"[run] {manifest.footer['instances']} instances in {elapsed:.1f}s -> {outdir / 'manifest.jsonl'}")
    for name, check in manifest.validity["checks"].items():
        print(f"[run] validity {name}: {'PASS' if check['passed'] else 'FAIL'}")
    if manifest.footer.get("aborted"):
        print(f"[run] ABORTED: {manifest.footer.get('abort_reason')}", file=sys.stderr)
        return 1
    return 0 if manifest.validity["passed"] else 1


def cmd_evaluate(args) -> int:
    cfg = _config_with_overrides(args)
    manifest = load_manifest(args.manifest)
    graph, _, normalizer = ensure_graph(cfg)
    rescored = rescore_manifest(manifest, cfg, graph, normalizer)
    from .report import write_run_outputs

    outdir = Path(args.output or cfg.output_dir)
    paths = write_run_outputs(outdir, rescored, figures=cfg.figures)
    print(f"[evaluate] rescored {len(rescored.instances)} instances -> {paths['manifest']}")
    return 0


def cmd_compare(args) -> int:
    manifests = [load_manifest(p) for p in args.manifests]
    labels = args.labels.split(",") if args.labels else None
    report = compare_runs(manifests, labels)
    from .report import write_comparison_outputs

    paths = write_comparison_outputs(args.out, report, figures=not args.no_figures)
    print(f"[compare] {len(manifests)} runs over {report.instance_count} shared instances")
    for row in report.table_rows():
        print("  " + "  ".join(f"{cell:<12}" for cell in row))
    print(f"[compare] outputs in {paths['comparison'].parent} (* marks best per column)")
    return 0


def cmd_validate(args) -> int:
    manifest = load_manifest(args.manifest)
    result = validate_manifest(manifest)
    for name, check in result["checks"].items():
        detail = {k: v for k, v in check.items() if k != "passed"}
        print(f"[validate] {'PASS' if check['passed'] else 'FAIL'} {name} {detail}")
    print(f"[validate] overall: {'PASS' if result['passed'] else 'FAIL'}")
    return 0 if result["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reviewbench",
        description="Temporal review-graph benchmark: build, sample, run, evaluate, compare.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--items", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-fraction", type=float, default=0.15)
    p.add_argument("--before-floor-fraction", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="parse + filter a raw corpus")
    p.add_argument("--reviews", required=True)
    p.add_argument("--metadata")
    p.add_argument("--captions")
    p.add_argument("--out", required=True)
    p.add_argument("--on-error", choices=("raise", "skip"), default="skip")
    _add_policy_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-graph", help="build + persist the temporal graph artifact")
    p.add_argument("--reviews", required=True)
    p.add_argument("--metadata")
    p.add_argument("--captions")
    p.add_argument("--graph", required=True, help="output graph directory")
    p.add_argument("--ratios", type=float, nargs=3, default=[0.8, 0.1, 0.1],
                   metavar=("TRAIN", "DEV", "TEST"))
    p.add_argument("--split-seed", type=int, default=0)
    _add_policy_flags(p)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("stats", help="dataset statistics over sampled instances")
    p.add_argument("--graph", required=True)
    p.add_argument("--instances", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sample", help="sample benchmark instances from a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cap", type=int, default=500, help="per-split cap")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--splits", default="test", help="comma-separated splits to keep")
    p.add_argument("--require-metadata", action="store_true")
    _add_policy_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("run", help="execute an experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--instances", help="pre-sampled instances file (else sampled per config)")
    p.add_argument("--output", help="override output_dir")
    p.add_argument("--setting", choices=("product", "user", "neighbor", "both"))
    p.add_argument("--mode", choices=("peregrine", "lamp_style", "pgraphrag_style"))
    p.add_argument("--label", help="override run_label")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="re-score an existing manifest under the current config")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--output", help="override output_dir")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="matched comparison across run manifests")
    p.add_argument("--manifests", nargs="+", required=True)
    p.add_argument("--labels", help="comma-separated labels (default: run_label)")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", help="recompute validity checks from a manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ReviewBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
