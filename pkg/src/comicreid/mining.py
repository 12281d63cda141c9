"""Pair mining under sequence-local labels.

Sequence-local identity annotations are only discriminative within a
sequence, so two identities from unrelated sequences may secretly be the
same character. Negatives are therefore only emitted when provably safe:
either the two identities were annotated side by side (a dissimilarity
edge) or they come from non-overlapping series (mix-series). Groups are
built from maximal cliques of the dissimilarity graph, whose members are
pairwise dissimilar by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ingest import IdentityGraph
from .model import DataError
from .nn import normalize_rows_forward


@dataclass(frozen=True)
class MinerConfig:
    base: str = "multi_similarity"  # "none" | "multi_similarity"
    epsilon: float = 0.1
    meta_mining: bool = True
    mix_series: bool = True
    neighborhood: bool = False  # neighborhoods instead of maximal cliques

    def __post_init__(self):
        if self.base not in ("none", "multi_similarity"):
            raise DataError(f"unknown base miner {self.base!r}")
        if self.base == "multi_similarity" and self.epsilon <= 0:
            raise DataError("miner epsilon must be positive")


@dataclass(frozen=True)
class MinibatchItem:
    """One character instance sampled into a training step."""

    uuid: str
    class_id: int | None  # merged identity class; None when unannotated
    series_id: str


@dataclass
class MiningGroup:
    """Instances feeding one base-miner invocation with safe labels."""

    clique: tuple[int, ...]  # identity classes, pairwise dissimilar
    items: list[MinibatchItem]
    labels: list[int]  # class per item (synthetic negatives get fresh ids)
    negative_only: set[int] = field(default_factory=set)


def multi_similarity_miner(emb: np.ndarray, labels, epsilon: float = 0.1):
    """Keep pairs that violate the margin against the hardest counterpart.

    Per anchor a: a negative k survives if S(a,k) > min_{p in P_a} S(a,p)
    - epsilon; a positive p survives if S(a,p) < max_{n in N_a} S(a,n)
    + epsilon. Anchors missing one side skip that side's rule.
    Returns ordered (anchor, other) index pairs.
    """
    emb = np.asarray(emb, dtype=np.float64)
    labels = np.asarray(labels)
    zhat, _ = normalize_rows_forward(emb)
    sims = zhat @ zhat.T
    pos_pairs: list[tuple[int, int]] = []
    neg_pairs: list[tuple[int, int]] = []
    n = len(emb)
    for a in range(n):
        same = [j for j in range(n) if j != a and labels[j] == labels[a]]
        diff = [j for j in range(n) if labels[j] != labels[a]]
        if same and diff:
            hardest_pos = min(sims[a, j] for j in same)
            hardest_neg = max(sims[a, j] for j in diff)
            for j in diff:
                if sims[a, j] > hardest_pos - epsilon:
                    neg_pairs.append((a, j))
            for j in same:
                if sims[a, j] < hardest_neg + epsilon:
                    pos_pairs.append((a, j))
    return pos_pairs, neg_pairs


def maximal_cliques(nodes, adjacency: dict) -> list[tuple]:
    """Bron-Kerbosch with pivoting; isolated nodes yield singleton cliques."""
    nodes = sorted(nodes)
    neighbors = {v: set(adjacency.get(v, ())) & set(nodes) for v in nodes}
    cliques: list[tuple] = []

    def expand(r: set, p: set, x: set):
        if not p and not x:
            cliques.append(tuple(sorted(r)))
            return
        pivot = max(sorted(p | x), key=lambda u: len(neighbors[u] & p))
        for v in sorted(p - neighbors[pivot]):
            expand(r | {v}, p & neighbors[v], x & neighbors[v])
            p = p - {v}
            x = x | {v}

    expand(set(), set(nodes), set())
    return sorted(cliques)


def neighborhood_groups(nodes, adjacency: dict) -> list[tuple]:
    """Closed neighborhoods (node + direct contacts); offered for comparison.

    Unlike cliques these are not pairwise-dissimilar, so downstream safety
    filtering carries the guarantee instead of the group structure.
    """
    nodes = sorted(nodes)
    groups = {tuple(sorted({v} | set(adjacency.get(v, ())) & set(nodes)))
              for v in nodes}
    return sorted(groups)


def _class_series(graph: IdentityGraph, item: MinibatchItem) -> set[str]:
    if item.class_id is not None and item.class_id in graph.class_by_id:
        return set(graph.class_by_id[item.class_id].series_ids)
    return {item.series_id}


def meta_mine(graph: IdentityGraph, minibatch: list[MinibatchItem],
              mix_series: bool = False,
              neighborhood: bool = False) -> list[MiningGroup]:
    """Group minibatch instances by dissimilarity cliques.

    Each clique's identities get their class ids as labels; with
    mix_series, instances whose identity's series set is disjoint from the
    clique's are appended as negative-only classes.
    """
    if not graph.classes:
        raise DataError("meta-mining needs a non-empty identity graph")
    present = sorted({it.class_id for it in minibatch if it.class_id is not None})
    adjacency: dict[int, set[int]] = {c: set() for c in present}
    for a, b in graph.dissimilar_edges:
        if a in adjacency and b in adjacency:
            adjacency[a].add(b)
            adjacency[b].add(a)
    if neighborhood:
        cliques = neighborhood_groups(present, adjacency)
    else:
        cliques = maximal_cliques(present, adjacency)

    groups: list[MiningGroup] = []
    for clique in cliques:
        clique_set = set(clique)
        clique_series: set[str] = set()
        for c in clique:
            if c in graph.class_by_id:
                clique_series |= set(graph.class_by_id[c].series_ids)
        items = sorted((it for it in minibatch if it.class_id in clique_set),
                       key=lambda it: it.uuid)
        labels = [it.class_id for it in items]
        negative_only: set[int] = set()
        if mix_series:
            synth = max((c for c in present), default=-1) + 1
            extras = []
            for it in minibatch:
                if it.class_id in clique_set:
                    continue
                if _class_series(graph, it) & clique_series:
                    continue
                extras.append(it)
            for it in sorted(extras, key=lambda x: x.uuid):
                cid = it.class_id
                if cid is None:
                    cid = synth
                    synth += 1
                items.append(it)
                labels.append(cid)
                negative_only.add(cid)
        groups.append(MiningGroup(clique=clique, items=items, labels=labels,
                                  negative_only=negative_only))
    return groups


def _pair_is_safe(graph: IdentityGraph, a: MinibatchItem, b: MinibatchItem) -> bool:
    if (a.class_id is not None and b.class_id is not None
            and graph.are_dissimilar(a.class_id, b.class_id)):
        return True
    return not (_class_series(graph, a) & _class_series(graph, b))


def mine_pairs(graph: IdentityGraph, minibatch: list[MinibatchItem],
               embeddings: np.ndarray, cfg: MinerConfig):
    """Meta-mine, run the base miner per group, merge with safety filters.

    embeddings rows align with minibatch order. Returns (pos, neg) lists of
    global (anchor, other) index pairs. Every returned negative pair either
    has a dissimilarity edge or is a cross-series (mix-series) pair.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if len(embeddings) != len(minibatch):
        raise DataError("embeddings must align with minibatch items")
    index_of = {it.uuid: i for i, it in enumerate(minibatch)}
    if len(index_of) != len(minibatch):
        raise DataError("minibatch contains duplicate instances")

    if cfg.meta_mining:
        groups = meta_mine(graph, minibatch, mix_series=cfg.mix_series,
                           neighborhood=cfg.neighborhood)
    else:
        items = sorted((it for it in minibatch if it.class_id is not None),
                       key=lambda it: it.uuid)
        groups = [MiningGroup(clique=tuple(sorted({it.class_id for it in items})),
                              items=items,
                              labels=[it.class_id for it in items])]

    pos_out: set[tuple[int, int]] = set()
    neg_out: set[tuple[int, int]] = set()
    for group in groups:
        if len(group.items) < 2:
            continue
        local_emb = embeddings[[index_of[it.uuid] for it in group.items]]
        labels = np.asarray(group.labels)
        if cfg.base == "multi_similarity":
            pos, neg = multi_similarity_miner(local_emb, labels, cfg.epsilon)
        else:
            pos, neg = [], []
            for i in range(len(labels)):
                for j in range(len(labels)):
                    if i == j:
                        continue
                    (pos if labels[i] == labels[j] else neg).append((i, j))
        for i, j in pos:
            a, b = group.items[i], group.items[j]
            if labels[i] in group.negative_only:
                continue  # mix-series classes participate as negatives only
            pos_out.add((index_of[a.uuid], index_of[b.uuid]))
        for i, j in neg:
            a, b = group.items[i], group.items[j]
            if not _pair_is_safe(graph, a, b):
                continue
            neg_out.add((index_of[a.uuid], index_of[b.uuid]))
    return sorted(pos_out), sorted(neg_out)
