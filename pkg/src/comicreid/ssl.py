"""Identity-aware contrastive pretraining at desk scale.

Three NT-Xent terms share one encoder + projection head: a face term over
two strongly augmented face views, a body term over two strongly augmented
body views, and a cross-modal identity term pairing each instance's weakly
augmented face with its weakly augmented body. Total loss is their sum; the
unaligned variant drops the cross term.

Toy mode drives the networks with synthetic latent feature vectors instead
of pixels; view augmentation is additive seeded noise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .model import DataError, check_finite
from .nn import (
    AdamW,
    Mlp,
    clip_gradients,
    cosine_annealed_lr,
    load_checkpoint,
    normalize_rows_backward,
    normalize_rows_forward,
    restore_parameters,
    save_checkpoint,
)

PROJECTION_DIM = 128


@dataclass
class SslConfig:
    input_dim: int
    encoder_hidden: tuple[int, ...] = (64,)
    encoder_out: int = 64
    head_hidden: tuple[int, ...] = (64, 64)  # 3 linear layers total
    tau: float = 0.07
    lr: float = 5e-4
    weight_decay: float = 0.01
    grad_clip: float = 0.5
    lr_floor_divisor: float = 50.0
    steps: int = 300
    batch_size: int = 32
    view_noise_strong: float = 0.1
    view_noise_weak: float = 0.02
    aligned: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.tau <= 0:
            raise DataError("temperature must be positive")
        if self.batch_size < 2:
            raise DataError("need at least 2 instances per batch")


@dataclass
class SslLossReport:
    L_f: float
    L_b: float
    L_id: float
    top1: float
    top5: float
    mean_position: float
    aligned: bool = True

    @property
    def L_total(self) -> float:
        return self.L_f + self.L_b + self.L_id


@dataclass
class SslExample:
    """One character instance's base features for toy-mode pretraining."""

    face: np.ndarray | None
    body: np.ndarray | None

    def __post_init__(self):
        if self.face is None and self.body is None:
            raise DataError("example has neither face nor body features")


def _pairing_as_dict(pairing) -> dict[int, int]:
    if isinstance(pairing, dict):
        return {int(k): int(v) for k, v in pairing.items()}
    arr = np.asarray(pairing, dtype=np.int64)
    return {int(i): int(j) for i, j in enumerate(arr) if j >= 0}


def nt_xent(z: np.ndarray, pairing, tau: float = 0.07, with_grad: bool = False):
    """Normalized-temperature cross entropy over ordered positive pairs.

    z holds stacked projections; pairing maps anchor index -> its single
    positive index. Similarity is cosine on internally normalized copies,
    so the loss is invariant to positive per-vector rescaling. For each
    anchor i with positive j:

        -log( exp(s_ij / tau) / sum_{k != i} exp(s_ik / tau) )

    averaged over anchors.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or len(z) < 2:
        raise DataError("nt_xent needs at least two stacked projections")
    check_finite("projections", z)
    pos = _pairing_as_dict(pairing)
    if not pos:
        raise DataError("nt_xent needs at least one positive pair")
    for i, j in pos.items():
        if not (0 <= i < len(z)) or not (0 <= j < len(z)) or i == j:
            raise DataError(f"invalid positive pair ({i}, {j})")

    zhat, norms = normalize_rows_forward(z)
    logits = (zhat @ zhat.T) / tau
    np.fill_diagonal(logits, -np.inf)

    anchors = sorted(pos)
    rows = logits[anchors]
    hi = rows.max(axis=1, keepdims=True)
    lse = hi[:, 0] + np.log(np.exp(rows - hi).sum(axis=1))
    pos_logit = logits[anchors, [pos[i] for i in anchors]]
    per_anchor = lse - pos_logit
    loss = float(np.mean(per_anchor))
    if not with_grad:
        return loss

    g_sims = np.zeros_like(logits)
    m = len(anchors)
    softmax = np.exp(rows - lse[:, None])  # rows sum to 1, -inf diag -> 0
    for row, i in enumerate(anchors):
        g = softmax[row]
        g_sims[i] += g
        g_sims[i, pos[i]] -= 1.0
    g_sims /= m * tau
    dhat = (g_sims + g_sims.T) @ zhat
    return loss, normalize_rows_backward(dhat, zhat, norms)


def two_view_pairing(n: int) -> dict[int, int]:
    """Stack layout [view1 x n, view2 x n]: each view's positive is the other."""
    pairing = {i: i + n for i in range(n)}
    pairing.update({i + n: i for i in range(n)})
    return pairing


def identity_aware_loss(face_strong: np.ndarray | None,
                        body_strong: np.ndarray | None,
                        face_weak: np.ndarray | None,
                        body_weak: np.ndarray | None,
                        tau: float = 0.07,
                        aligned: bool = True,
                        with_grad: bool = False):
    """Compose L_f + L_b + L_id from projection stacks.

    face_strong/body_strong: (2N, d) two-view stacks; face_weak/body_weak:
    (M, d) aligned rows for instances with both parts. Unaligned mode skips
    the cross term (L_id = 0). Returns an SslLossReport; with_grad adds a
    dict of gradients per stack.
    """
    grads: dict[str, np.ndarray] = {}

    def strong_term(stack):
        if stack is None or len(stack) == 0:
            return 0.0, None
        if len(stack) % 2 != 0:
            raise DataError("strong stacks hold two views per instance")
        pairing = two_view_pairing(len(stack) // 2)
        if with_grad:
            return nt_xent(stack, pairing, tau, with_grad=True)
        return nt_xent(stack, pairing, tau), None

    l_f, g_f = strong_term(face_strong)
    l_b, g_b = strong_term(body_strong)

    l_id = 0.0
    top1 = top5 = 0.0
    mean_pos = float("nan")
    if aligned:
        if face_weak is None or body_weak is None or len(face_weak) == 0:
            raise DataError(
                "identity-aware mode needs weak cross-modal pairs; "
                "none present in batch"
            )
        if len(face_weak) != len(body_weak):
            raise DataError("weak face/body stacks must align row-for-row")
        cross = np.vstack([face_weak, body_weak])
        pairing = two_view_pairing(len(face_weak))
        if with_grad:
            l_id, g_cross = nt_xent(cross, pairing, tau, with_grad=True)
            grads["face_weak"] = g_cross[: len(face_weak)]
            grads["body_weak"] = g_cross[len(face_weak):]
        else:
            l_id = nt_xent(cross, pairing, tau)
        stats = in_batch_eval(cross, pairing)
        top1, top5, mean_pos = stats["top1"], stats["top5"], stats["mean_position"]
    if g_f is not None:
        grads["face_strong"] = g_f
    if g_b is not None:
        grads["body_strong"] = g_b
    report = SslLossReport(L_f=l_f, L_b=l_b, L_id=l_id, top1=top1, top5=top5,
                           mean_position=mean_pos, aligned=aligned)
    if with_grad:
        return report, grads
    return report


def in_batch_eval(projections: np.ndarray, pairing) -> dict:
    """Rank every anchor's positive among all other items by cosine.

    Returns top1/top5 fractions and the mean 1-based rank of the positive.
    Anchors without a positive are skipped and counted.
    """
    z = np.asarray(projections, dtype=np.float64)
    if len(z) < 2:
        raise DataError("in-batch eval needs at least two items")
    pos = _pairing_as_dict(pairing)
    zhat, _ = normalize_rows_forward(z)
    sims = zhat @ zhat.T
    ranks = []
    skipped = 0
    for i in range(len(z)):
        if i not in pos:
            skipped += 1
            continue
        j = pos[i]
        order = [k for k in range(len(z)) if k != i]
        # descending similarity; ties broken by candidate index
        order.sort(key=lambda k: (-sims[i, k], k))
        ranks.append(order.index(j) + 1)
    if not ranks:
        raise DataError("no anchor has a positive")
    ranks = np.asarray(ranks, dtype=np.float64)
    return {
        "top1": float(np.mean(ranks <= 1)),
        "top5": float(np.mean(ranks <= 5)),
        "mean_position": float(np.mean(ranks)),
        "anchors": len(ranks),
        "skipped": skipped,
    }


class SslModel:
    """Shared encoder + 3-layer projection head over feature vectors."""

    def __init__(self, cfg: SslConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        enc_dims = [cfg.input_dim, *cfg.encoder_hidden, cfg.encoder_out]
        head_dims = [cfg.encoder_out, *cfg.head_hidden, PROJECTION_DIM]
        if len(head_dims) != 4:
            raise DataError("projection head is fixed at 3 linear layers")
        self.encoder = Mlp(rng, enc_dims, "encoder")
        self.head = Mlp(rng, head_dims, "head")

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.head.forward(self.encoder.forward(x))

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return self.encoder.backward(self.head.backward(dout))

    def embed(self, x: np.ndarray) -> np.ndarray:
        """Backbone features for downstream fine-tuning (no projection head)."""
        return self.encoder.forward(np.asarray(x, dtype=np.float64))

    def project(self, x: np.ndarray) -> np.ndarray:
        """Projection-head outputs, unit-normalized."""
        out = self.forward(np.asarray(x, dtype=np.float64))
        hat, _ = normalize_rows_forward(out)
        return hat

    def parameters(self):
        yield from self.encoder.parameters()
        yield from self.head.parameters()

    def zero_grad(self):
        self.encoder.zero_grad()
        self.head.zero_grad()

    def save(self, path, extra_meta: dict | None = None):
        meta = {
            "kind": "ssl",
            "input_dim": self.cfg.input_dim,
            "encoder_hidden": list(self.cfg.encoder_hidden),
            "encoder_out": self.cfg.encoder_out,
            "head_hidden": list(self.cfg.head_hidden),
            "aligned": self.cfg.aligned,
        }
        meta.update(extra_meta or {})
        save_checkpoint(path, [(n, v) for n, v, _ in self.parameters()], meta)

    @classmethod
    def load(cls, path) -> "SslModel":
        arrays, meta = load_checkpoint(path)
        if meta.get("kind") != "ssl":
            raise DataError(f"checkpoint {path} is not a pretraining checkpoint")
        cfg = SslConfig(
            input_dim=int(meta["input_dim"]),
            encoder_hidden=tuple(meta["encoder_hidden"]),
            encoder_out=int(meta["encoder_out"]),
            head_hidden=tuple(meta["head_hidden"]),
            aligned=bool(meta.get("aligned", True)),
        )
        model = cls(cfg)
        restore_parameters(model.parameters(), arrays)
        return model


@dataclass
class SslHistory:
    rows: list[dict] = field(default_factory=list)

    def append(self, step: int, report: SslLossReport, lr: float):
        self.rows.append({
            "step": step,
            "L_f": report.L_f,
            "L_b": report.L_b,
            "L_id": report.L_id,
            "L_total": report.L_total,
            "top1": report.top1,
            "lr": float(lr),
        })

    def write_csv(self, path):
        fields = ["step", "L_f", "L_b", "L_id", "L_total", "top1", "lr"]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k]
                                 for k in fields})


def train_ssl(examples: list[SslExample], cfg: SslConfig) -> tuple[SslModel, SslHistory]:
    """Seeded pretraining loop: sample batch, add view noise, step AdamW.

    Gradients are clipped at cfg.grad_clip global norm; the learning rate
    follows cosine annealing down to lr / lr_floor_divisor. NaN loss aborts.
    """
    if len(examples) < 2:
        raise DataError("need at least 2 examples to pretrain")
    model = SslModel(cfg)
    opt = AdamW(lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed + 1)
    history = SslHistory()

    both = [i for i, ex in enumerate(examples) if ex.face is not None and ex.body is not None]
    if cfg.aligned and not both:
        raise DataError("identity-aware pretraining needs instances with both parts")

    for step in range(cfg.steps):
        idx = rng.choice(len(examples), size=min(cfg.batch_size, len(examples)),
                         replace=False)
        fs, bs, fw, bw = [], [], [], []
        for i in idx:
            ex = examples[i]
            if ex.face is not None:
                fs.append(ex.face + cfg.view_noise_strong * rng.normal(size=ex.face.shape))
                fs.append(ex.face + cfg.view_noise_strong * rng.normal(size=ex.face.shape))
            if ex.body is not None:
                bs.append(ex.body + cfg.view_noise_strong * rng.normal(size=ex.body.shape))
                bs.append(ex.body + cfg.view_noise_strong * rng.normal(size=ex.body.shape))
            if ex.face is not None and ex.body is not None:
                fw.append(ex.face + cfg.view_noise_weak * rng.normal(size=ex.face.shape))
                bw.append(ex.body + cfg.view_noise_weak * rng.normal(size=ex.body.shape))

        # one forward pass over every view, segmented [fs | bs | fw | bw]
        def stack_two_view(views):
            # interleaved append order is v1,v2 per instance; regroup to
            # [v1 block, v2 block] for two_view_pairing
            v1 = views[0::2]
            v2 = views[1::2]
            return np.asarray(v1 + v2, dtype=np.float64)

        seg_fs = stack_two_view(fs) if fs else np.zeros((0, cfg.input_dim))
        seg_bs = stack_two_view(bs) if bs else np.zeros((0, cfg.input_dim))
        seg_fw = np.asarray(fw, dtype=np.float64) if fw else np.zeros((0, cfg.input_dim))
        seg_bw = np.asarray(bw, dtype=np.float64) if bw else np.zeros((0, cfg.input_dim))
        x = np.vstack([seg_fs, seg_bs, seg_fw, seg_bw])
        z = model.forward(x)

        cut1 = len(seg_fs)
        cut2 = cut1 + len(seg_bs)
        cut3 = cut2 + len(seg_fw)
        report, grads = identity_aware_loss(
            z[:cut1] if cut1 else None,
            z[cut1:cut2] if cut2 > cut1 else None,
            z[cut2:cut3] if cut3 > cut2 else None,
            z[cut3:] if len(z) > cut3 else None,
            tau=cfg.tau,
            aligned=cfg.aligned,
            with_grad=True,
        )
        if not np.isfinite(report.L_total):
            raise FloatingPointError(
                f"pretraining diverged at step {step}: "
                f"L_f={report.L_f} L_b={report.L_b} L_id={report.L_id}"
            )

        dz = np.zeros_like(z)
        if "face_strong" in grads:
            dz[:cut1] = grads["face_strong"]
        if "body_strong" in grads:
            dz[cut1:cut2] = grads["body_strong"]
        if "face_weak" in grads:
            dz[cut2:cut3] = grads["face_weak"]
        if "body_weak" in grads:
            dz[cut3:] = grads["body_weak"]

        model.zero_grad()
        model.backward(dz)
        params = list(model.parameters())
        clip_gradients(params, cfg.grad_clip)
        lr = cosine_annealed_lr(cfg.lr, step, cfg.steps, cfg.lr_floor_divisor)
        opt.step(params, lr=lr)
        history.append(step, report, lr)
    return model, history
