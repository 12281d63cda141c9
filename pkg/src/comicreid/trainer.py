"""Fine-tuning of the identity projector on annotated panel sequences.

The backbone is frozen: training consumes precomputed per-part feature
vectors. Each step samples a handful of series, meta-mines safe pairs from
the linked identity graph, evaluates the configured metric loss on the
projected identity embeddings, and updates the projector with decoupled
weight-decay gradient descent under an exponential learning-rate schedule.
Validation MAP@R (leave-one-out within sequences) drives early stopping;
the best-scoring parameters are restored at the end.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .evalkit import local_eval
from .ingest import link_sequences
from .losses import (
    contrastive_loss,
    multi_similarity_loss,
    triplet_margin_loss,
    tuplet_plus_intrapair_loss,
)
from .mining import MinerConfig, MinibatchItem, meta_mine, mine_pairs
from .model import DataError, PanelSequence, check_finite
from .nn import Sgdw, clip_gradients, exponential_lr
from .projector import IdentityProjector, ProjectorConfig, apply_random_masking

LOSS_KINDS = ("contrastive", "triplet_margin", "multi_similarity",
              "tuplet_plus_intrapair")


@dataclass(frozen=True)
class LossConfig:
    kind: str = "triplet_margin"
    contrastive_margin: float = 0.5
    triplet_margin: float = 0.2
    ms_alpha: float = 2.0
    ms_beta: float = 50.0
    ms_base: float = 0.5
    tuplet_weight: float = 1.0
    intra_weight: float = 0.5

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise DataError(f"unknown loss kind {self.kind!r}")
        if self.contrastive_margin < 0 or self.triplet_margin < 0:
            raise DataError("margins must be non-negative")
        if self.ms_alpha <= 0 or self.ms_beta <= 0:
            raise DataError("multi-similarity alpha/beta must be positive")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.00075
    gamma: float = 0.95
    weight_decay: float = 0.05
    grad_clip: float = 0.5
    max_epochs: int = 20
    patience: int = 3
    batch_series: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0 or self.max_epochs < 0:
            raise DataError("lr and max_epochs must be non-negative")
        if self.batch_series < 1:
            raise DataError("batch_series must be >= 1")
        if self.patience < 1:
            raise DataError("patience must be >= 1")


@dataclass
class TrainHistory:
    rows: list[tuple[int, float, float]] = field(default_factory=list)

    HEADER = "epoch,loss,val_map_at_r"

    def append(self, epoch: int, loss: float, val_map_at_r: float):
        self.rows.append((epoch, loss, val_map_at_r))

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.HEADER.split(","))
            for epoch, loss, val in self.rows:
                writer.writerow([epoch, repr(loss), repr(val)])


@dataclass
class FinetuneResult:
    projector: IdentityProjector
    history: TrainHistory
    best_epoch: int
    best_val_map_at_r: float


def _feature_matrix(uuids, features, input_dim):
    faces = np.zeros((len(uuids), input_dim))
    bodies = np.zeros((len(uuids), input_dim))
    fp = np.zeros(len(uuids), dtype=bool)
    bp = np.zeros(len(uuids), dtype=bool)
    for row, uuid in enumerate(uuids):
        parts = features.get(uuid)
        if not parts:
            raise DataError(f"no features for instance {uuid}")
        if parts.get("face") is not None:
            faces[row] = parts["face"]
            fp[row] = True
        if parts.get("body") is not None:
            bodies[row] = parts["body"]
            bp[row] = True
        if not fp[row] and not bp[row]:
            raise DataError(f"instance {uuid} has no usable part")
    return faces, bodies, fp, bp


def embed_instances(uuids, features, projector: IdentityProjector) -> dict[str, np.ndarray]:
    """Identity embeddings for the given instances (no masking)."""
    uuids = list(uuids)
    if not uuids:
        return {}
    faces, bodies, fp, bp = _feature_matrix(uuids, features, projector.cfg.input_dim)
    out = projector.forward(faces, bodies, fp, bp)
    return {u: out[i].copy() for i, u in enumerate(uuids)}


def _step_loss(emb, pos, neg, graph, loss_cfg: LossConfig,
               miner_cfg: MinerConfig, minibatch):
    """Evaluate the configured loss on mined pairs; returns (loss, grad|None)."""
    if loss_cfg.kind == "contrastive":
        pairs = list(pos) + list(neg)
        if not pairs:
            return 0.0, None
        y = [0.0] * len(pos) + [1.0] * len(neg)
        return contrastive_loss(emb, pairs, y, margin=loss_cfg.contrastive_margin,
                                with_grad=True)
    if loss_cfg.kind == "triplet_margin":
        pos_of = {}
        neg_of = {}
        for a, p in pos:
            pos_of.setdefault(a, []).append(p)
        for a, n in neg:
            neg_of.setdefault(a, []).append(n)
        triplets = [(a, p, n)
                    for a in sorted(set(pos_of) & set(neg_of))
                    for p in pos_of[a] for n in neg_of[a]]
        if not triplets:
            return 0.0, None
        return triplet_margin_loss(emb, triplets, margin=loss_cfg.triplet_margin,
                                   with_grad=True)
    if loss_cfg.kind == "multi_similarity":
        if not pos and not neg:
            return 0.0, None
        dummy = np.zeros(len(emb), dtype=int)
        return multi_similarity_loss(emb, dummy, alpha=loss_cfg.ms_alpha,
                                     beta=loss_cfg.ms_beta, base=loss_cfg.ms_base,
                                     pos_pairs=pos, neg_pairs=neg, with_grad=True)
    # tuplet_plus_intrapair consumes labels, not pairs: evaluate it per
    # meta-mined clique (extras dropped so every cross-class pair in a group
    # is annotation-backed) and average the group losses
    groups = meta_mine(graph, minibatch, mix_series=False) if miner_cfg.meta_mining \
        else None
    if groups is None:
        items_sorted = [it for it in minibatch if it.class_id is not None]
        groups_members = [[minibatch.index(it) for it in items_sorted]]
        groups_labels = [[it.class_id for it in items_sorted]]
    else:
        index_of = {it.uuid: i for i, it in enumerate(minibatch)}
        groups_members = []
        groups_labels = []
        for g in groups:
            keep = [(index_of[it.uuid], lab) for it, lab in zip(g.items, g.labels)
                    if lab not in g.negative_only]
            if len(keep) >= 2 and len({lab for _, lab in keep}) >= 2:
                groups_members.append([k for k, _ in keep])
                groups_labels.append([lab for _, lab in keep])
    total = 0.0
    grad = np.zeros_like(emb)
    used = 0
    for members, labels in zip(groups_members, groups_labels):
        sub = emb[members]
        has_pos = len(labels) != len(set(labels))
        if not has_pos:
            continue
        loss_g, grad_g = tuplet_plus_intrapair_loss(
            sub, labels, w_tuplet=loss_cfg.tuplet_weight,
            w_intra=loss_cfg.intra_weight, with_grad=True)
        total += loss_g
        grad[members] += grad_g
        used += 1
    if used == 0:
        return 0.0, None
    return total / used, grad / used


def finetune(train_sequences: list[PanelSequence],
             val_sequences: list[PanelSequence],
             features: dict[str, dict[str, np.ndarray]],
             projector_cfg: ProjectorConfig,
             loss_cfg: LossConfig,
             miner_cfg: MinerConfig,
             train_cfg: TrainConfig) -> FinetuneResult:
    """Train the identity projector on annotated sequences.

    `features` maps instance uuid -> part -> frozen backbone feature vector.
    Returns the best-validation projector plus the per-epoch history.
    """
    graph = link_sequences(train_sequences)
    if not any(len(cls.instance_uuids) >= 2 for cls in graph.classes):
        raise DataError("training split has no annotated positive pairs")

    init_rng = np.random.default_rng(train_cfg.seed)
    projector = IdentityProjector(projector_cfg, init_rng)
    rng = np.random.default_rng(train_cfg.seed + 1)
    optimizer = Sgdw(lr=train_cfg.lr, weight_decay=train_cfg.weight_decay)

    class_of: dict[str, int] = {}
    for cls in graph.classes:
        for u in cls.instance_uuids:
            class_of[u] = cls.class_id

    # per-series instance roster from the training sequences
    by_series: dict[str, dict[str, MinibatchItem]] = {}
    for seq in train_sequences:
        roster = by_series.setdefault(seq.series_id, {})
        for inst in seq.instances:
            u = inst.instance_uuid
            if u in features and u not in roster:
                roster[u] = MinibatchItem(uuid=u, class_id=class_of.get(u),
                                          series_id=seq.series_id)
    series_list = sorted(by_series)
    if not series_list:
        raise DataError("no training instance has features")

    val_uuids = sorted({
        inst.instance_uuid
        for seq in val_sequences for inst in seq.instances
        if inst.instance_uuid in features
    })

    def validate() -> float:
        emb = embed_instances(val_uuids, features, projector)
        return local_eval(val_sequences, emb).map_at_r

    history = TrainHistory()
    best = None  # (map_at_r, epoch, snapshot)
    bad_epochs = 0
    for epoch in range(train_cfg.max_epochs):
        lr = exponential_lr(train_cfg.lr, epoch, train_cfg.gamma)
        order = rng.permutation(len(series_list))
        losses = []
        for start in range(0, len(order), train_cfg.batch_series):
            chunk = [series_list[i] for i in order[start:start + train_cfg.batch_series]]
            minibatch = [item
                         for series in sorted(chunk)
                         for _, item in sorted(by_series[series].items())]
            if len(minibatch) < 2:
                continue
            uuids = [it.uuid for it in minibatch]
            faces, bodies, fp, bp = _feature_matrix(uuids, features,
                                                    projector_cfg.input_dim)
            fp, bp = apply_random_masking(fp, bp, projector_cfg.random_mask_rate, rng)
            emb = projector.forward(faces, bodies, fp, bp)
            if loss_cfg.kind == "tuplet_plus_intrapair":
                pos, neg = [], []  # this loss consumes labels, not mined pairs
            else:
                pos, neg = mine_pairs(graph, minibatch, emb, miner_cfg)
            loss, grad = _step_loss(emb, pos, neg, graph,
                                    loss_cfg, miner_cfg, minibatch)
            losses.append(loss)
            if grad is None:
                continue
            check_finite("loss gradient", grad)
            projector.zero_grad()
            projector.backward(grad)
            params = list(projector.parameters())
            clip_gradients(params, train_cfg.grad_clip)
            optimizer.step(params, lr=lr)
        epoch_loss = float(np.mean(losses)) if losses else 0.0
        val_map = validate()
        history.append(epoch, epoch_loss, val_map)
        if best is None or val_map > best[0]:
            snapshot = [(name, value.copy()) for name, value, _ in projector.parameters()]
            best = (val_map, epoch, snapshot)
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= train_cfg.patience:
                break

    if best is not None:
        restored = dict(best[2])
        for name, value, _ in projector.parameters():
            value[...] = restored[name]
        best_epoch, best_val = best[1], best[0]
    else:  # max_epochs == 0
        best_epoch, best_val = -1, float("nan")
    return FinetuneResult(projector=projector, history=history,
                          best_epoch=best_epoch, best_val_map_at_r=best_val)
