import random

import pytest

from reviewbench.errors import ConfigError
from reviewbench.graph import (
    BenchmarkInstance,
    build_graph,
    dataset_stats,
    item_neighbor_ids_before,
    item_neighbors_before,
    load_graph,
    sample_instances,
    save_graph,
    split_users,
    user_history_before,
    user_history_ids_before,
)
from reviewbench.ingest import FilterPolicy, ItemMetadata

from conftest import BASE_TS, random_corpus, review


def linear_scan_item(graph, item_id, cutoff, exclude_user=None):
    """Independent oracle: direct scan over the full edge store."""
    found = [
        (r.timestamp, e)
        for e, r in enumerate(graph.edges)
        if r.item_id == item_id and r.timestamp < cutoff
        and (exclude_user is None or r.user_id != exclude_user)
    ]
    return [e for _, e in sorted(found)]


def linear_scan_user(graph, user_id, cutoff):
    found = [
        (r.timestamp, e)
        for e, r in enumerate(graph.edges)
        if r.user_id == user_id and r.timestamp < cutoff
    ]
    return [e for _, e in sorted(found)]


class TestBuildGraph:
    def test_two_users_one_item(self):
        reviews = [
            review("u1", "i1", ts=30),
            review("u2", "i1", ts=10),
            review("u1", "i1", ts=20),
        ]
        g = build_graph(reviews)
        assert len(g.items["i1"]) == 3
        timestamps = [g.edges[e].timestamp for e in g.items["i1"]]
        assert timestamps == sorted(timestamps)

    def test_empty_input(self):
        g = build_graph([])
        assert g.edge_count() == 0
        assert g.users == {} and g.items == {}

    def test_missing_metadata_recorded_not_fatal(self):
        g = build_graph([review("u1", "i1", ts=1)], [ItemMetadata(item_id="other")])
        assert "i1" in g.missing_metadata

    def test_shuffle_invariance_100_trials(self):
        rng = random.Random(5)
        base = random_corpus(rng, n_edges=30)
        reference = build_graph(sorted(base, key=lambda r: r.timestamp))

        def node_contents(g):
            return (
                {u: tuple(g.edges[e] for e in ids) for u, ids in g.users.items()},
                {i: tuple(g.edges[e] for e in ids) for i, ids in g.items.items()},
            )

        expected = node_contents(reference)
        for _ in range(100):
            shuffled = base[:]
            rng.shuffle(shuffled)
            assert node_contents(build_graph(shuffled)) == expected


class TestCutoffQueries:
    def test_strict_cutoff(self):
        g = build_graph([review("u1", "i1", ts=10), review("u2", "i1", ts=20),
                         review("u3", "i1", ts=30)])
        got = item_neighbors_before(g, "i1", BASE_TS + 25)
        assert [r.timestamp - BASE_TS for r in got] == [10, 20]

    def test_cutoff_at_earliest_timestamp_is_empty(self):
        g = build_graph([review("u1", "i1", ts=10)])
        assert item_neighbors_before(g, "i1", BASE_TS + 10) == []

    def test_exclude_user(self):
        g = build_graph([review("u1", "i1", ts=10), review("u2", "i1", ts=15)])
        got = item_neighbors_before(g, "i1", BASE_TS + 100, exclude_user="u1")
        assert [r.user_id for r in got] == ["u2"]

    def test_unknown_item_returns_empty(self, caplog):
        g = build_graph([review("u1", "i1", ts=10)])
        with caplog.at_level("WARNING"):
            assert item_neighbors_before(g, "nope", BASE_TS + 50) == []
        assert any("unknown item" in m for m in caplog.messages)

    def test_user_history(self):
        g = build_graph([review("u1", "i1", ts=5), review("u1", "i2", ts=15)])
        got = user_history_before(g, "u1", BASE_TS + 15)
        assert [r.timestamp - BASE_TS for r in got] == [5]
        assert user_history_before(g, "u1", BASE_TS + 4) == []

    def test_binary_search_equals_linear_scan_oracle(self):
        rng = random.Random(17)
        for _ in range(200):
            corpus = random_corpus(rng, n_users=6, n_items=4, n_edges=rng.randrange(1, 50))
            g = build_graph(corpus)
            for _ in range(10):
                probe = rng.choice(corpus)
                cutoff = probe.timestamp + rng.randrange(-20, 20)
                exclude = rng.choice([None, probe.user_id])
                assert item_neighbor_ids_before(g, probe.item_id, cutoff, exclude) == \
                    linear_scan_item(g, probe.item_id, cutoff, exclude)
                assert user_history_ids_before(g, probe.user_id, cutoff) == \
                    linear_scan_user(g, probe.user_id, cutoff)

    def test_graph_immutable_under_queries(self):
        g = build_graph(random_corpus(random.Random(3), n_edges=25))
        before = ({u: ids for u, ids in g.users.items()}, {i: ids for i, ids in g.items.items()})
        for item in list(g.items):
            item_neighbor_ids_before(g, item, BASE_TS + 100, exclude_user="u0")
        for user in list(g.users):
            user_history_ids_before(g, user, BASE_TS + 100)
        after = ({u: ids for u, ids in g.users.items()}, {i: ids for i, ids in g.items.items()})
        assert before == after


class TestSplitUsers:
    def test_ratio_partition_with_newest_user_in_test(self):
        reviews = []
        for k in range(10):
            reviews.append(review(f"u{k}", "i1", ts=100 * k))  # u9 is the newest
        g = build_graph(reviews)
        split = split_users(g, (0.8, 0.1, 0.1))
        counts = {s: sum(1 for v in split.values() if v == s) for s in ("train", "dev", "test")}
        assert counts == {"train": 8, "dev": 1, "test": 1}
        assert split["u9"] == "test"

    def test_tied_timestamps_break_lexicographically(self):
        g = build_graph([review(f"u{k}", "i1", ts=5) for k in range(4)])
        split = split_users(g, (0.5, 0.25, 0.25))
        assert split == {"u0": "train", "u1": "train", "u2": "dev", "u3": "test"}

    def test_disjoint_and_exhaustive_100_random_graphs(self):
        rng = random.Random(11)
        for _ in range(100):
            g = build_graph(random_corpus(rng, n_users=rng.randrange(1, 15), n_edges=30))
            split = split_users(g)
            assert set(split) == set(g.users)
            assert set(split.values()) <= {"train", "dev", "test"}

    def test_degenerate_ratios_rejected(self):
        g = build_graph([review("u1", "i1", ts=1)])
        with pytest.raises(ConfigError):
            split_users(g, (0.5, 0.5, 0.5))
        with pytest.raises(ConfigError):
            split_users(g, (1.2, -0.1, -0.1))


class TestSampleInstances:
    def _eligible_world(self):
        # u1 writes 4 reviews before the gold edge; i9 has 3 prior reviews by others.
        reviews = [review("u1", f"h{k}", ts=k) for k in range(4)]
        reviews += [review(f"n{k}", "i9", ts=10 + k) for k in range(3)]
        reviews.append(review("u1", "i9", ts=100))  # the gold candidate
        # Give the neighbor users enough degree so the corpus is realistic.
        return build_graph(reviews)

    def test_paper_thresholds_make_instance_eligible(self):
        g = self._eligible_world()
        split = {u: "test" for u in g.users}
        policy = FilterPolicy(min_user_reviews=4, min_item_reviews=3)
        got = sample_instances(g, split, policy, per_split_cap=10, seed=0)
        assert [(i.user_id, i.item_id) for i in got] == [("u1", "i9")]
        inst = got[0]
        assert inst.cutoff == inst.gold.timestamp

    def test_first_review_is_ineligible(self):
        g = build_graph([review("u1", "i1", ts=1), review("u2", "i1", ts=2)])
        split = {u: "test" for u in g.users}
        policy = FilterPolicy(min_user_reviews=1, min_item_reviews=1)
        got = sample_instances(g, split, policy, per_split_cap=10, seed=0)
        # u1's first-ever review has empty history: never sampled.
        assert all(not (i.user_id == "u1" and i.cutoff == BASE_TS + 1) for i in got)

    def test_eligibility_matches_bruteforce_recount(self):
        rng = random.Random(23)
        policy = FilterPolicy(min_user_reviews=2, min_item_reviews=2)
        for _ in range(50):
            g = build_graph(random_corpus(rng, n_users=5, n_items=3, n_edges=40))
            split = {u: "test" for u in g.users}
            got = sample_instances(g, split, policy, per_split_cap=10_000, seed=0)
            expected = []
            for e, gold in enumerate(g.edges):
                hist = sum(
                    1 for r in g.edges
                    if r.user_id == gold.user_id and r.timestamp < gold.timestamp
                )
                neigh = sum(
                    1 for r in g.edges
                    if r.item_id == gold.item_id and r.timestamp < gold.timestamp
                    and r.user_id != gold.user_id
                )
                if hist >= 2 and neigh >= 2:
                    expected.append(e)
            assert sorted(i.edge_id for i in got) == expected

    def test_cap_and_seed_determinism(self):
        rng = random.Random(31)
        g = build_graph(random_corpus(rng, n_users=6, n_items=3, n_edges=60))
        split = {u: "test" for u in g.users}
        policy = FilterPolicy(min_user_reviews=1, min_item_reviews=1)
        first = sample_instances(g, split, policy, per_split_cap=5, seed=42)
        second = sample_instances(g, split, policy, per_split_cap=5, seed=42)
        assert [i.edge_id for i in first] == [i.edge_id for i in second]
        assert len(first) == 5

    def test_require_metadata_filter(self):
        g = self._eligible_world()
        split = {u: "test" for u in g.users}
        policy = FilterPolicy(min_user_reviews=4, min_item_reviews=3)
        got = sample_instances(g, split, policy, per_split_cap=10, seed=0, require_metadata=True)
        assert got == []  # no metadata at all in this world

    def test_empty_result_logs_diagnostics(self, caplog):
        g = build_graph([review("u1", "i1", ts=1)])
        with caplog.at_level("WARNING"):
            got = sample_instances(g, {"u1": "test"}, FilterPolicy(), per_split_cap=5, seed=0)
        assert got == []
        assert any("no eligible candidates" in m for m in caplog.messages)


class TestDatasetStats:
    def test_mean_arithmetic(self):
        # Two instances with history sizes 4 and 6.
        reviews = [review("u1", f"a{k}", ts=k) for k in range(4)]
        reviews += [review("u2", f"b{k}", ts=k) for k in range(6)]
        reviews += [review(f"n{k}", "i1", ts=20 + k) for k in range(3)]
        gold1 = review("u1", "i1", ts=50)
        gold2 = review("u2", "i1", ts=60)
        g = build_graph(reviews + [gold1, gold2])
        instances = [
            BenchmarkInstance("u1", "i1", g.edges.index(gold1), gold1, gold1.timestamp, "test"),
            BenchmarkInstance("u2", "i1", g.edges.index(gold2), gold2, gold2.timestamp, "test"),
        ]
        stats = dataset_stats(instances, g)
        assert stats.mean_user_history == 5.0
        assert stats.image_fraction == 0.0
        # gold2's neighborhood additionally contains gold1 (other-user edge).
        assert stats.mean_item_neighborhood == (3 + 4) / 2

    def test_empty_instances_rejected(self):
        g = build_graph([review("u1", "i1", ts=1)])
        with pytest.raises(ValueError):
            dataset_stats([], g)


class TestPersistence:
    def test_roundtrip(self, tmp_path, small_world):
        graph, _, _ = small_world
        save_graph(graph, tmp_path / "g")
        loaded = load_graph(tmp_path / "g")
        assert loaded.edges == graph.edges
        assert loaded.users == graph.users
        assert loaded.items == graph.items
        assert loaded.missing_metadata == graph.missing_metadata
        assert set(loaded.metadata) == set(graph.metadata)

    def test_bad_magic_rejected(self, tmp_path):
        g = build_graph([review("u1", "i1", ts=1)])
        save_graph(g, tmp_path / "g")
        edges = tmp_path / "g" / "edges.jsonl"
        lines = edges.read_text().splitlines()
        lines[0] = '{"magic": "WRONG", "version": 1, "edge_count": 1}'
        edges.write_text("\n".join(lines) + "\n")
        with pytest.raises(ConfigError):
            load_graph(tmp_path / "g")
