"""Temporally indexed bipartite review graph.

Users and items each map to edge-id lists sorted ascending by
(timestamp, edge id); strict-cutoff neighborhood and history queries locate
the admissible prefix by binary search on a parallel timestamp array. The
graph is immutable after build and safe for concurrent readers.
"""

from __future__ import annotations

import bisect
import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .ingest import FilterPolicy, ItemMetadata, RawReviewRecord

log = logging.getLogger(__name__)

GRAPH_MAGIC = "RBGRAPH"
GRAPH_VERSION = 1
SPLITS = ("train", "dev", "test")


@dataclass(frozen=True)
class BenchmarkInstance:
    """One evaluation target: a gold review and its strict temporal cutoff."""

    user_id: str
    item_id: str
    edge_id: int
    gold: RawReviewRecord
    cutoff: int
    split: str

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "item_id": self.item_id,
            "edge_id": self.edge_id,
            "gold": self.gold.to_dict(),
            "cutoff": self.cutoff,
            "split": self.split,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkInstance":
        return cls(
            user_id=d["user_id"],
            item_id=d["item_id"],
            edge_id=int(d["edge_id"]),
            gold=RawReviewRecord.from_dict(d["gold"]),
            cutoff=int(d["cutoff"]),
            split=d["split"],
        )


@dataclass(frozen=True)
class DatasetStats:
    instance_count: int
    mean_user_history: float
    mean_item_neighborhood: float
    image_fraction: float

    def to_dict(self) -> dict:
        return {
            "instance_count": self.instance_count,
            "mean_user_history": self.mean_user_history,
            "mean_item_neighborhood": self.mean_item_neighborhood,
            "image_fraction": self.image_fraction,
        }


class ReviewGraph:
    """Bipartite store with per-node timestamp-sorted edge indexes.

    Treat instances as read-only after :func:`build_graph`; node lists are
    tuples and edges are frozen records.
    """

    def __init__(
        self,
        edges: tuple[RawReviewRecord, ...],
        users: dict[str, tuple[int, ...]],
        items: dict[str, tuple[int, ...]],
        metadata: dict[str, ItemMetadata],
        missing_metadata: frozenset[str],
    ):
        self.edges = edges
        self.users = users
        self.items = items
        self.metadata = metadata
        self.missing_metadata = missing_metadata
        # Parallel timestamp arrays so cutoff queries can bisect.
        self._user_ts = {u: [edges[e].timestamp for e in ids] for u, ids in users.items()}
        self._item_ts = {i: [edges[e].timestamp for e in ids] for i, ids in items.items()}

    def edge_count(self) -> int:
        return len(self.edges)


def build_graph(
    reviews: list[RawReviewRecord], metadata: list[ItemMetadata] | None = None
) -> ReviewGraph:
    """Index a filtered corpus. Reviews referencing an item with no metadata
    are recorded in ``missing_metadata`` rather than rejected."""
    edges = tuple(reviews)
    by_user: dict[str, list[int]] = {}
    by_item: dict[str, list[int]] = {}
    for edge_id, r in enumerate(edges):
        by_user.setdefault(r.user_id, []).append(edge_id)
        by_item.setdefault(r.item_id, []).append(edge_id)

    def sorted_ids(ids: list[int]) -> tuple[int, ...]:
        return tuple(sorted(ids, key=lambda e: (edges[e].timestamp, e)))

    users = {u: sorted_ids(ids) for u, ids in by_user.items()}
    items = {i: sorted_ids(ids) for i, ids in by_item.items()}
    meta_map = {m.item_id: m for m in metadata or []}
    missing = frozenset(i for i in items if i not in meta_map)
    if missing:
        log.info("%d items have no metadata record", len(missing))
    return ReviewGraph(edges, users, items, meta_map, missing)


def _ids_before(
    ids: tuple[int, ...] | None, ts_list: list[int] | None, cutoff: int
) -> list[int]:
    if not ids:
        return []
    # Strict inequality: the admissible prefix ends before the first ts >= cutoff.
    prefix_len = bisect.bisect_left(ts_list, cutoff)
    return list(ids[:prefix_len])


def item_neighbor_ids_before(
    g: ReviewGraph, item_id: str, cutoff: int, exclude_user: str | None = None
) -> list[int]:
    """Edge ids of the temporally valid item neighborhood, ascending by
    timestamp; reviews authored by ``exclude_user`` are dropped."""
    if item_id not in g.items:
        log.warning("query for unknown item %r", item_id)
        return []
    ids = _ids_before(g.items.get(item_id), g._item_ts.get(item_id), cutoff)
    if exclude_user is not None:
        ids = [e for e in ids if g.edges[e].user_id != exclude_user]
    return ids


def user_history_ids_before(g: ReviewGraph, user_id: str, cutoff: int) -> list[int]:
    """Edge ids of the temporally valid user history, ascending by timestamp."""
    if user_id not in g.users:
        log.warning("query for unknown user %r", user_id)
        return []
    return _ids_before(g.users.get(user_id), g._user_ts.get(user_id), cutoff)


def item_neighbors_before(
    g: ReviewGraph, item_id: str, cutoff: int, exclude_user: str | None = None
) -> list[RawReviewRecord]:
    return [g.edges[e] for e in item_neighbor_ids_before(g, item_id, cutoff, exclude_user)]


def user_history_before(g: ReviewGraph, user_id: str, cutoff: int) -> list[RawReviewRecord]:
    return [g.edges[e] for e in user_history_ids_before(g, user_id, cutoff)]


def split_users(
    g: ReviewGraph,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int | None = None,
) -> dict[str, str]:
    """Partition users into train/dev/test by most recent review timestamp:
    earliest block trains, latest block tests. Ties break on user id.

    ``seed`` is accepted for interface symmetry but unused: the split is
    fully deterministic.
    """
    del seed
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must be three nonnegative values summing to 1, got {ratios}")
    ordered = sorted(g.users, key=lambda u: (g._user_ts[u][-1], u))
    n = len(ordered)
    cut_train = int(n * ratios[0] + 0.5)
    cut_dev = int(n * (ratios[0] + ratios[1]) + 0.5)
    assignment: dict[str, str] = {}
    for idx, user in enumerate(ordered):
        if idx < cut_train:
            assignment[user] = "train"
        elif idx < cut_dev:
            assignment[user] = "dev"
        else:
            assignment[user] = "test"
    return assignment


def sample_instances(
    g: ReviewGraph,
    split_map: dict[str, str],
    policy: FilterPolicy = FilterPolicy(),
    per_split_cap: int = 500,
    seed: int = 0,
    require_metadata: bool = False,
) -> list[BenchmarkInstance]:
    """Sample benchmark instances: each candidate gold edge is retained only
    if its strict-cutoff history and neighborhood meet the policy minima, then
    capped per split by seeded uniform sampling."""
    candidates: dict[str, list[BenchmarkInstance]] = {s: [] for s in SPLITS}
    considered = 0
    for edge_id, gold in enumerate(g.edges):
        split = split_map.get(gold.user_id)
        if split is None:
            continue
        considered += 1
        cutoff = gold.timestamp
        if require_metadata:
            meta = g.metadata.get(gold.item_id)
            if meta is None or not meta.has_text():
                continue
        history = user_history_ids_before(g, gold.user_id, cutoff)
        if len(history) < policy.min_user_reviews:
            continue
        neighborhood = item_neighbor_ids_before(g, gold.item_id, cutoff, exclude_user=gold.user_id)
        if len(neighborhood) < policy.min_item_reviews:
            continue
        candidates[split].append(
            BenchmarkInstance(gold.user_id, gold.item_id, edge_id, gold, cutoff, split)
        )

    rng = random.Random(seed)
    picked: list[BenchmarkInstance] = []
    for split in SPLITS:
        pool = candidates[split]
        chosen = rng.sample(pool, per_split_cap) if len(pool) > per_split_cap else pool
        picked.extend(sorted(chosen, key=lambda inst: inst.edge_id))

    log.info(
        "sampled %d instances (considered %d candidates; eligible train/dev/test = %s)",
        len(picked), considered, {s: len(candidates[s]) for s in SPLITS},
    )
    if not picked:
        log.warning(
            "no eligible candidates: considered=%d, thresholds |H_u|>=%d |H_i|>=%d",
            considered, policy.min_user_reviews, policy.min_item_reviews,
        )
    return picked


def dataset_stats(instances: list[BenchmarkInstance], g: ReviewGraph) -> DatasetStats:
    """Means of strict-cutoff history/neighborhood sizes plus the share of
    instances whose gold review carries images."""
    if not instances:
        raise ValueError("dataset_stats requires at least one instance")
    hist_total = 0
    neigh_total = 0
    with_images = 0
    for inst in instances:
        hist_total += len(user_history_ids_before(g, inst.user_id, inst.cutoff))
        neigh_total += len(
            item_neighbor_ids_before(g, inst.item_id, inst.cutoff, exclude_user=inst.user_id)
        )
        if inst.gold.image_refs:
            with_images += 1
    n = len(instances)
    return DatasetStats(n, hist_total / n, neigh_total / n, with_images / n)


# ---------------------------------------------------------------------------
# Persistence: a directory holding the edge table and two index files, each
# carrying a magic header so stale or foreign files fail fast.
# ---------------------------------------------------------------------------

def _header(**extra) -> str:
    return json.dumps({"magic": GRAPH_MAGIC, "version": GRAPH_VERSION, **extra})


def _check_header(line: str, path: Path) -> dict:
    header = json.loads(line)
    if header.get("magic") != GRAPH_MAGIC:
        raise ConfigError(f"{path}: not a review-graph file")
    if header.get("version") != GRAPH_VERSION:
        raise ConfigError(f"{path}: unsupported graph version {header.get('version')}")
    return header


def save_graph(g: ReviewGraph, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    with open(directory / "edges.jsonl", "w", encoding="utf-8") as handle:
        handle.write(_header(edge_count=len(g.edges)) + "\n")
        for r in g.edges:
            handle.write(json.dumps(r.to_dict()) + "\n")

    with open(directory / "user_index.json", "w", encoding="utf-8") as handle:
        json.dump(
            {"magic": GRAPH_MAGIC, "version": GRAPH_VERSION,
             "index": {u: list(ids) for u, ids in g.users.items()}},
            handle,
        )
    with open(directory / "item_index.json", "w", encoding="utf-8") as handle:
        json.dump(
            {"magic": GRAPH_MAGIC, "version": GRAPH_VERSION,
             "index": {i: list(ids) for i, ids in g.items.items()},
             "missing_metadata": sorted(g.missing_metadata)},
            handle,
        )

    with open(directory / "metadata.jsonl", "w", encoding="utf-8") as handle:
        handle.write(_header(item_count=len(g.metadata)) + "\n")
        for meta in g.metadata.values():
            handle.write(json.dumps(meta.to_dict()) + "\n")


def load_graph(directory: str | Path) -> ReviewGraph:
    directory = Path(directory)

    edges: list[RawReviewRecord] = []
    with open(directory / "edges.jsonl", "r", encoding="utf-8") as handle:
        header = _check_header(next(handle), directory / "edges.jsonl")
        for line in handle:
            if line.strip():
                edges.append(RawReviewRecord.from_dict(json.loads(line)))
    if header.get("edge_count") != len(edges):
        raise ConfigError(f"{directory}: edge table truncated")

    user_payload = json.loads((directory / "user_index.json").read_text(encoding="utf-8"))
    item_payload = json.loads((directory / "item_index.json").read_text(encoding="utf-8"))
    for payload, name in ((user_payload, "user_index.json"), (item_payload, "item_index.json")):
        if payload.get("magic") != GRAPH_MAGIC or payload.get("version") != GRAPH_VERSION:
            raise ConfigError(f"{directory / name}: bad magic/version")

    metadata: list[ItemMetadata] = []
    with open(directory / "metadata.jsonl", "r", encoding="utf-8") as handle:
        _check_header(next(handle), directory / "metadata.jsonl")
        for line in handle:
            if line.strip():
                metadata.append(ItemMetadata.from_dict(json.loads(line)))

    return ReviewGraph(
        edges=tuple(edges),
        users={u: tuple(ids) for u, ids in user_payload["index"].items()},
        items={i: tuple(ids) for i, ids in item_payload["index"].items()},
        metadata={m.item_id: m for m in metadata},
        missing_metadata=frozenset(item_payload.get("missing_metadata", [])),
    )


def save_splits(path: str | Path, split_map: dict[str, str], ratios, seed) -> None:
    payload = {"magic": GRAPH_MAGIC, "version": GRAPH_VERSION,
               "ratios": list(ratios), "seed": seed, "splits": split_map}
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_splits(path: str | Path) -> dict[str, str]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("magic") != GRAPH_MAGIC:
        raise ConfigError(f"{path}: not a splits file")
    return dict(payload["splits"])


def write_instances(path: str | Path, instances: list[BenchmarkInstance]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for inst in instances:
            handle.write(json.dumps(inst.to_dict()) + "\n")


def read_instances(path: str | Path) -> list[BenchmarkInstance]:
    out = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                out.append(BenchmarkInstance.from_dict(json.loads(line)))
    return out
