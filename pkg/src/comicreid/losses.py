"""Metric-learning losses over identity embeddings, with analytic gradients.

Pairwise distance terms use raw L2 distance; similarity-based terms
(multi-similarity, tuplet margin, intra-pair variance) use cosine computed
on internally normalized copies, with gradients pulled back through the
normalization. Every function returns plain loss by default and
(loss, grad_wrt_embeddings) with with_grad=True so gradients can be checked
against finite differences.
"""

from __future__ import annotations

import numpy as np

from .model import DataError
from .nn import normalize_rows_backward, normalize_rows_forward


def _as_index_pairs(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=np.int64)
    if arr.size == 0:
        return arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected (m, 2) index pairs, got shape {arr.shape}")
    return arr


def all_pairs_from_labels(labels) -> tuple[np.ndarray, np.ndarray]:
    """Every ordered (anchor, other) pair split into positive/negative sets."""
    labels = np.asarray(labels)
    n = len(labels)
    pos, neg = [], []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            (pos if labels[i] == labels[j] else neg).append((i, j))
    return _as_index_pairs(pos), _as_index_pairs(neg)


def contrastive_loss(emb: np.ndarray, pairs, y, margin: float = 0.5,
                     with_grad: bool = False):
    """Mean of (1-y)/2 * d^2 + y/2 * max(0, margin - d)^2 over listed pairs.

    y is 0 for similar pairs and 1 for dissimilar ones; d is L2 distance.
    """
    emb = np.asarray(emb, dtype=np.float64)
    pairs = _as_index_pairs(pairs)
    y = np.asarray(y, dtype=np.float64)
    if len(pairs) == 0:
        raise DataError("contrastive loss needs at least one pair")
    if len(y) != len(pairs):
        raise ValueError("labels and pairs length mismatch")
    a, b = emb[pairs[:, 0]], emb[pairs[:, 1]]
    diff = a - b
    d = np.linalg.norm(diff, axis=1)
    hinge = np.maximum(0.0, margin - d)
    losses = (1.0 - y) * 0.5 * d**2 + y * 0.5 * hinge**2
    loss = float(np.mean(losses))
    if not with_grad:
        return loss
    grad = np.zeros_like(emb)
    m = len(pairs)
    # similar part: d(d^2/2)/da = diff; hinge part: -y*hinge*diff/d when active
    g_pair = (1.0 - y)[:, None] * diff
    active = (hinge > 0.0) & (d > 0.0) & (y > 0.0)
    if np.any(active):
        g_pair[active] += (-(y * hinge)[active] / d[active])[:, None] * diff[active]
    g_pair /= m
    np.add.at(grad, pairs[:, 0], g_pair)
    np.add.at(grad, pairs[:, 1], -g_pair)
    return loss, grad


def triplet_margin_loss(emb: np.ndarray, triplets, margin: float = 0.2,
                        with_grad: bool = False):
    """Mean of max(0, d(a,p) - d(a,n) + margin) over listed triplets."""
    emb = np.asarray(emb, dtype=np.float64)
    triplets = np.asarray(triplets, dtype=np.int64)
    if triplets.size == 0:
        raise DataError("triplet loss needs at least one triplet")
    triplets = triplets.reshape(-1, 3)
    a, p, n = emb[triplets[:, 0]], emb[triplets[:, 1]], emb[triplets[:, 2]]
    dap_vec, dan_vec = a - p, a - n
    dap = np.linalg.norm(dap_vec, axis=1)
    dan = np.linalg.norm(dan_vec, axis=1)
    per = np.maximum(0.0, dap - dan + margin)
    loss = float(np.mean(per))
    if not with_grad:
        return loss
    grad = np.zeros_like(emb)
    m = len(triplets)
    active = per > 0.0
    safe_ap = np.where(dap > 0.0, dap, 1.0)
    safe_an = np.where(dan > 0.0, dan, 1.0)
    gp = np.where((active & (dap > 0))[:, None], dap_vec / safe_ap[:, None], 0.0) / m
    gn = np.where((active & (dan > 0))[:, None], dan_vec / safe_an[:, None], 0.0) / m
    np.add.at(grad, triplets[:, 0], gp - gn)
    np.add.at(grad, triplets[:, 1], -gp)
    np.add.at(grad, triplets[:, 2], gn)
    return loss, grad


def multi_similarity_loss(emb: np.ndarray, labels, alpha: float = 2.0,
                          beta: float = 50.0, base: float = 0.5,
                          pos_pairs=None, neg_pairs=None,
                          with_grad: bool = False):
    """Log-sum-exp weighting of cosine similarities around the base threshold.

    Per anchor i with positive set P_i and negative set N_i:
        (1/alpha) log(1 + sum_{k in P_i} exp(-alpha (S_ik - base)))
      + (1/beta)  log(1 + sum_{k in N_i} exp( beta (S_ik - base)))
    averaged over all m anchors; anchors with neither set contribute 0.
    """
    emb = np.asarray(emb, dtype=np.float64)
    labels = np.asarray(labels)
    m = len(emb)
    if m < 2:
        raise DataError("multi-similarity loss needs at least two embeddings")
    if pos_pairs is None or neg_pairs is None:
        ap, an = all_pairs_from_labels(labels)
        pos_pairs = ap if pos_pairs is None else _as_index_pairs(pos_pairs)
        neg_pairs = an if neg_pairs is None else _as_index_pairs(neg_pairs)
    else:
        pos_pairs = _as_index_pairs(pos_pairs)
        neg_pairs = _as_index_pairs(neg_pairs)
    if len(np.unique(labels)) < 2 and len(neg_pairs) == 0 and len(pos_pairs) == 0:
        raise DataError("multi-similarity loss needs two classes or mined pairs")

    zhat, norms = normalize_rows_forward(emb)
    sims = zhat @ zhat.T
    g_sims = np.zeros_like(sims)
    total = 0.0
    for i in range(m):
        ps = pos_pairs[pos_pairs[:, 0] == i, 1]
        ns = neg_pairs[neg_pairs[:, 0] == i, 1]
        if len(ps) > 0:
            ex = np.exp(-alpha * (sims[i, ps] - base))
            denom = 1.0 + ex.sum()
            total += np.log(denom) / alpha
            g_sims[i, ps] += -ex / denom / m
        if len(ns) > 0:
            ex = np.exp(beta * (sims[i, ns] - base))
            denom = 1.0 + ex.sum()
            total += np.log(denom) / beta
            g_sims[i, ns] += ex / denom / m
    loss = float(total / m)
    if not with_grad:
        return loss
    dhat = (g_sims + g_sims.T) @ zhat
    return loss, normalize_rows_backward(dhat, zhat, norms)


_COS_CLAMP = 1.0 - 1e-7


def tuplet_margin_term(emb: np.ndarray, labels, margin_deg: float = 5.73,
                       scale: float = 64.0, pos_pairs=None, neg_pairs=None,
                       with_grad: bool = False):
    """Angular-slack tuplet loss over ordered positive pairs.

    For positive pair (a, p) with the anchor's negatives n:
        log(1 + sum_n exp(scale * (S_an - cos(theta_ap - margin))))
    with theta_ap = arccos(S_ap); mean over positive pairs.
    """
    emb = np.asarray(emb, dtype=np.float64)
    labels = np.asarray(labels)
    if pos_pairs is None or neg_pairs is None:
        ap, an = all_pairs_from_labels(labels)
        pos_pairs = ap if pos_pairs is None else _as_index_pairs(pos_pairs)
        neg_pairs = an if neg_pairs is None else _as_index_pairs(neg_pairs)
    else:
        pos_pairs = _as_index_pairs(pos_pairs)
        neg_pairs = _as_index_pairs(neg_pairs)
    if len(pos_pairs) == 0:
        raise DataError("tuplet margin needs at least one positive pair")
    margin = np.deg2rad(margin_deg)
    zhat, norms = normalize_rows_forward(emb)
    sims = zhat @ zhat.T
    g_sims = np.zeros_like(sims)
    neg_of: dict[int, np.ndarray] = {}
    for i in np.unique(neg_pairs[:, 0]) if len(neg_pairs) else []:
        neg_of[int(i)] = neg_pairs[neg_pairs[:, 0] == i, 1]
    total = 0.0
    m = len(pos_pairs)
    for a, p in pos_pairs:
        s_ap = np.clip(sims[a, p], -_COS_CLAMP, _COS_CLAMP)
        theta = np.arccos(s_ap)
        shifted = np.cos(theta - margin)
        ns = neg_of.get(int(a))
        if ns is None or len(ns) == 0:
            continue  # log(1 + 0) = 0
        inner = scale * (sims[a, ns] - shifted)
        # stable log(1 + sum(exp(inner)))
        hi = max(0.0, float(inner.max()))
        lse = hi + np.log(np.exp(-hi) + np.exp(inner - hi).sum())
        total += lse
        if with_grad:
            w = np.exp(inner - lse)  # = exp(inner)/ (1 + sum exp)
            g_sims[a, ns] += scale * w / m
            # d shifted / d s_ap = sin(theta - margin) / sqrt(1 - s_ap^2)
            dshift = np.sin(theta - margin) / np.sqrt(1.0 - s_ap * s_ap)
            g_sims[a, p] += -scale * w.sum() * dshift / m
    loss = float(total / m)
    if not with_grad:
        return loss
    dhat = (g_sims + g_sims.T) @ zhat
    return loss, normalize_rows_backward(dhat, zhat, norms)


def intra_pair_variance_term(emb: np.ndarray, labels, pos_eps: float = 0.01,
                             neg_eps: float = 0.01, pos_pairs=None,
                             neg_pairs=None, with_grad: bool = False):
    """Squared hinge of each pair's similarity against the scaled batch mean.

    positives: mean_p over pairs of relu((1-pos_eps)*mean(S_pos) - S_ap)^2
    negatives: mean_n over pairs of relu(S_an - (1+neg_eps)*mean(S_neg))^2
    summed; the means are part of the gradient.
    """
    emb = np.asarray(emb, dtype=np.float64)
    labels = np.asarray(labels)
    if pos_pairs is None or neg_pairs is None:
        ap, an = all_pairs_from_labels(labels)
        pos_pairs = ap if pos_pairs is None else _as_index_pairs(pos_pairs)
        neg_pairs = an if neg_pairs is None else _as_index_pairs(neg_pairs)
    else:
        pos_pairs = _as_index_pairs(pos_pairs)
        neg_pairs = _as_index_pairs(neg_pairs)
    zhat, norms = normalize_rows_forward(emb)
    sims = zhat @ zhat.T
    g_sims = np.zeros_like(sims)
    loss = 0.0

    def side(pairs, sign, eps):
        # sign +1: hinge on (1-eps)*mean - s (positives pulled up)
        # sign -1: hinge on s - (1+eps)*mean (negatives pushed down)
        nonlocal loss
        if len(pairs) == 0:
            return
        s = sims[pairs[:, 0], pairs[:, 1]]
        mu = s.mean()
        k = len(s)
        if sign > 0:
            u = (1.0 - eps) * mu - s
        else:
            u = s - (1.0 + eps) * mu
        r = np.maximum(0.0, u)
        loss += float(np.mean(r * r))
        if not with_grad:
            return
        # d mean(r^2)/ds_q = (2/k) sum_p r_p [u_p>0] * du_p/ds_q
        base_coef = 2.0 * r / k
        if sign > 0:
            # du_p/ds_q = (1-eps)/k - delta_pq
            shared = base_coef.sum() * (1.0 - eps) / k
            per = -base_coef + shared
        else:
            shared = -base_coef.sum() * (1.0 + eps) / k
            per = base_coef + shared
        np.add.at(g_sims, (pairs[:, 0], pairs[:, 1]), per)

    side(pos_pairs, +1, pos_eps)
    side(neg_pairs, -1, neg_eps)
    if not with_grad:
        return loss
    dhat = (g_sims + g_sims.T) @ zhat
    return loss, normalize_rows_backward(dhat, zhat, norms)


def tuplet_plus_intrapair_loss(emb: np.ndarray, labels, w_tuplet: float = 1.0,
                               w_intra: float = 0.5, pos_pairs=None,
                               neg_pairs=None, with_grad: bool = False):
    """Weighted combination: w_tuplet * tuplet margin + w_intra * intra-pair."""
    if with_grad:
        lt, gt = tuplet_margin_term(emb, labels, pos_pairs=pos_pairs,
                                    neg_pairs=neg_pairs, with_grad=True)
        li, gi = intra_pair_variance_term(emb, labels, pos_pairs=pos_pairs,
                                          neg_pairs=neg_pairs, with_grad=True)
        return w_tuplet * lt + w_intra * li, w_tuplet * gt + w_intra * gi
    lt = tuplet_margin_term(emb, labels, pos_pairs=pos_pairs, neg_pairs=neg_pairs)
    li = intra_pair_variance_term(emb, labels, pos_pairs=pos_pairs,
                                  neg_pairs=neg_pairs)
    return w_tuplet * lt + w_intra * li
