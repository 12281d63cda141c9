import numpy as np
import pytest

from comicreid import mining
from comicreid.ingest import IdentityClass, IdentityGraph
from comicreid.mining import MinerConfig, MinibatchItem

import oracles


def unit(x, y):
    v = np.array([x, y], dtype=np.float64)
    return v / np.linalg.norm(v)


def on_circle(cos_with_e1):
    return np.array([cos_with_e1, np.sqrt(1.0 - cos_with_e1**2)])


class TestMultiSimilarityMiner:
    def test_easy_pairs_not_mined(self):
        emb = np.vstack([np.array([1.0, 0.0]), on_circle(0.9), on_circle(0.3)])
        labels = [0, 0, 1]
        pos, neg = mining.multi_similarity_miner(emb, labels, epsilon=0.1)
        assert (0, 2) not in neg  # 0.3 <= 0.9 - 0.1
        assert (0, 1) not in pos  # 0.9 >= 0.3 + 0.1
        assert pos == [] and neg == []

    def test_hard_negative_mined(self):
        emb = np.vstack([np.array([1.0, 0.0]), on_circle(0.9), on_circle(0.85)])
        labels = [0, 0, 1]
        _, neg = mining.multi_similarity_miner(emb, labels, epsilon=0.1)
        assert (0, 2) in neg  # 0.85 > 0.9 - 0.1

    def test_huge_epsilon_mines_everything(self):
        rng = np.random.default_rng(40)
        emb = rng.normal(size=(6, 4))
        labels = [0, 0, 1, 1, 2, 2]
        pos, neg = mining.multi_similarity_miner(emb, labels, epsilon=100.0)
        want_pos = [(a, j) for a in range(6) for j in range(6)
                    if a != j and labels[a] == labels[j]]
        want_neg = [(a, j) for a in range(6) for j in range(6)
                    if labels[a] != labels[j]]
        assert sorted(pos) == sorted(want_pos)
        assert sorted(neg) == sorted(want_neg)

    def test_single_class_yields_nothing(self):
        rng = np.random.default_rng(41)
        emb = rng.normal(size=(4, 3))
        pos, neg = mining.multi_similarity_miner(emb, [0, 0, 0, 0])
        assert pos == [] and neg == []


class TestMaximalCliques:
    def test_path_graph(self):
        adj = {"A": {"B"}, "B": {"A", "C"}, "C": {"B"}}
        got = mining.maximal_cliques(["A", "B", "C"], adj)
        assert got == [("A", "B"), ("B", "C")]

    def test_isolated_node_is_singleton_clique(self):
        got = mining.maximal_cliques(["A"], {})
        assert got == [("A",)]

    def test_matches_brute_force_on_random_graphs(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            n = int(rng.integers(1, 9))
            nodes = list(range(n))
            edges = [(i, j) for i in range(n) for j in range(i + 1, n)
                     if rng.random() < 0.4]
            adj = {v: set() for v in nodes}
            for i, j in edges:
                adj[i].add(j)
                adj[j].add(i)
            got = set(map(frozenset, mining.maximal_cliques(nodes, adj)))
            want = oracles.maximal_cliques_ref(nodes, edges)
            assert got == want


def graph_fixture(series=("s1", "s1", "s1"), instance_counts=(2, 1, 1),
                  edges=((0, 1), (1, 2))):
    classes = [
        IdentityClass(i, [f"c{i}u{k}" for k in range(instance_counts[i])],
                      {series[i]}, {f"q{i}"})
        for i in range(len(instance_counts))
    ]
    graph = IdentityGraph(classes=classes, dissimilar_edges=set(edges))
    minibatch = [
        MinibatchItem(u, c.class_id, sorted(c.series_ids)[0])
        for c in classes for u in c.instance_uuids
    ]
    return graph, minibatch


class TestMetaMine:
    def test_path_graph_groups(self):
        graph, minibatch = graph_fixture()
        groups = mining.meta_mine(graph, minibatch)
        assert [g.clique for g in groups] == [(0, 1), (1, 2)]

    def test_edgeless_graph_gives_singletons(self):
        graph, minibatch = graph_fixture(edges=())
        groups = mining.meta_mine(graph, minibatch)
        assert [g.clique for g in groups] == [(0,), (1,), (2,)]

    def test_empty_graph_rejected(self):
        graph = IdentityGraph(classes=[], dissimilar_edges=set())
        with pytest.raises(Exception):
            mining.meta_mine(graph, [])

    def test_mix_series_appends_foreign_instances_negative_only(self):
        graph, minibatch = graph_fixture(series=("s1", "s1", "s2"),
                                         edges=((0, 1),))
        groups = mining.meta_mine(graph, minibatch, mix_series=True)
        clique01 = next(g for g in groups if g.clique == (0, 1))
        uuids = [it.uuid for it in clique01.items]
        assert "c2u0" in uuids  # series s2 is absent from the clique
        assert 2 in clique01.negative_only

    def test_same_series_instances_never_mixed_in(self):
        graph, minibatch = graph_fixture(series=("s1", "s1", "s1"),
                                         edges=((0, 1),))
        groups = mining.meta_mine(graph, minibatch, mix_series=True)
        clique01 = next(g for g in groups if g.clique == (0, 1))
        assert all(it.class_id in (0, 1) for it in clique01.items)


class TestMinePairs:
    def embed(self, rng, minibatch, d=4):
        return rng.normal(size=(len(minibatch), d))

    def test_disconnected_classes_never_negatives(self):
        # edges A-B, B-C only: A and C must not meet as negatives
        graph, minibatch = graph_fixture()
        rng = np.random.default_rng(50)
        emb = self.embed(rng, minibatch)
        cfg = MinerConfig(base="none", meta_mining=True, mix_series=True)
        _, neg = mining.mine_pairs(graph, minibatch, emb, cfg)
        classes = {i: it.class_id for i, it in enumerate(minibatch)}
        for i, j in neg:
            assert {classes[i], classes[j]} != {0, 2}

    def test_single_identity_no_negatives_without_mix(self):
        graph, minibatch = graph_fixture(instance_counts=(3,), edges=(),
                                         series=("s1",))
        rng = np.random.default_rng(51)
        emb = self.embed(rng, minibatch)
        cfg = MinerConfig(base="none", meta_mining=True, mix_series=False)
        pos, neg = mining.mine_pairs(graph, minibatch, emb, cfg)
        assert neg == []
        assert len(pos) == 6  # ordered pairs among 3 same-class instances

    def test_mix_series_pairs_appear(self):
        graph, minibatch = graph_fixture(series=("s1", "s1", "s2"),
                                         edges=((0, 1),))
        rng = np.random.default_rng(52)
        emb = self.embed(rng, minibatch)
        cfg = MinerConfig(base="none", meta_mining=True, mix_series=True)
        pos, neg = mining.mine_pairs(graph, minibatch, emb, cfg)
        classes = {i: it.class_id for i, it in enumerate(minibatch)}
        assert any({classes[i], classes[j]} == {0, 2} for i, j in neg)
        # negative-only classes never contribute positive pairs
        assert all(classes[i] != 2 and classes[j] != 2 for i, j in pos)

    def test_safety_guarantee_on_random_graphs(self):
        rng = np.random.default_rng(53)
        for _ in range(150):
            n = int(rng.integers(1, 9))
            classes = [
                IdentityClass(i, [f"c{i}u{k}" for k in range(int(rng.integers(1, 3)))],
                              {f"s{int(rng.integers(0, 3))}"}, set())
                for i in range(n)
            ]
            edges = {(i, j) for i in range(n) for j in range(i + 1, n)
                     if rng.random() < 0.4}
            graph = IdentityGraph(classes=classes, dissimilar_edges=edges)
            minibatch = [MinibatchItem(u, c.class_id, sorted(c.series_ids)[0])
                         for c in classes for u in c.instance_uuids]
            emb = rng.normal(size=(len(minibatch), 4))
            for base in ("none", "multi_similarity"):
                for mix in (False, True):
                    cfg = MinerConfig(base=base, meta_mining=True, mix_series=mix)
                    _, neg = mining.mine_pairs(graph, minibatch, emb, cfg)
                    for i, j in neg:
                        a, b = minibatch[i], minibatch[j]
                        has_edge = graph.are_dissimilar(a.class_id, b.class_id)
                        cross = not (set(classes[a.class_id].series_ids)
                                     & set(classes[b.class_id].series_ids))
                        assert has_edge or cross

    def test_neighborhood_mode_still_safe(self):
        graph, minibatch = graph_fixture()
        rng = np.random.default_rng(54)
        emb = self.embed(rng, minibatch)
        cfg = MinerConfig(base="none", meta_mining=True, mix_series=False,
                          neighborhood=True)
        _, neg = mining.mine_pairs(graph, minibatch, emb, cfg)
        classes = {i: it.class_id for i, it in enumerate(minibatch)}
        for i, j in neg:
            assert graph.are_dissimilar(classes[i], classes[j])

    def test_deterministic(self):
        graph, minibatch = graph_fixture()
        rng = np.random.default_rng(55)
        emb = self.embed(rng, minibatch)
        cfg = MinerConfig()
        assert (mining.mine_pairs(graph, minibatch, emb, cfg)
                == mining.mine_pairs(graph, minibatch, emb, cfg))
