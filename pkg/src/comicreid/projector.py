"""Face/body feature fusion into a unit-norm identity embedding.

A trainable linear layer maps the fused feature to the identity space.
Missing sides are replaced by a padding vector (zeros by default, trainable
optionally), so single-part instances flow through the same code path as
complete ones. Four fusion strategies are supported:

- sum:          f + b
- concat:       [f ; b] with a doubled-input linear layer
- weighted_sum: per-dimension convex blend, weights softmaxed pairwise
- coeff_sum:    one scalar convex blend, coefficients softmaxed

Forward/backward are hand-written numpy; gradients cover parameters and
inputs and are finite-difference checked in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DataError, EmbeddingVector
from .nn import (
    Linear,
    load_checkpoint,
    normalize_rows_backward,
    normalize_rows_forward,
    restore_parameters,
    save_checkpoint,
)

FUSIONS = ("sum", "concat", "weighted_sum", "coeff_sum")
PADDINGS = ("zero", "trainable")


@dataclass(frozen=True)
class ProjectorConfig:
    input_dim: int
    output_dim: int = 256
    l2_normalize: bool = True
    fusion: str = "sum"
    padding: str = "zero"
    random_mask_rate: float = 0.0  # total; split equally between sides

    def __post_init__(self):
        if self.input_dim <= 0 or self.output_dim <= 0:
            raise DataError("projector dimensions must be positive")
        if self.fusion not in FUSIONS:
            raise DataError(f"unknown fusion {self.fusion!r}")
        if self.padding not in PADDINGS:
            raise DataError(f"unknown padding {self.padding!r}")
        if not (0.0 <= self.random_mask_rate < 1.0):
            raise DataError("random_mask_rate must be in [0, 1)")


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class IdentityProjector:
    def __init__(self, cfg: ProjectorConfig, rng: np.random.Generator):
        self.cfg = cfg
        fused_dim = cfg.input_dim * (2 if cfg.fusion == "concat" else 1)
        self.linear = Linear(rng, fused_dim, cfg.output_dim, name="identity_projector")
        d = cfg.input_dim
        # padding starts at zero so an untrained projector treats a missing
        # side exactly like an explicit zero vector
        self.face_pad = np.zeros(d)
        self.body_pad = np.zeros(d)
        self.g_face_pad = np.zeros(d)
        self.g_body_pad = np.zeros(d)
        # fusion weights: zeros give an even 0.5 / 0.5 blend initially
        self.w_face = np.zeros(d)
        self.w_body = np.zeros(d)
        self.g_w_face = np.zeros(d)
        self.g_w_body = np.zeros(d)
        self.c_face = np.zeros(1)
        self.c_body = np.zeros(1)
        self.g_c_face = np.zeros(1)
        self.g_c_body = np.zeros(1)
        self._cache = None

    # ------------------------------------------------------------ params

    def parameters(self):
        yield from self.linear.parameters()
        if self.cfg.padding == "trainable":
            yield ("face_pad", self.face_pad, self.g_face_pad)
            yield ("body_pad", self.body_pad, self.g_body_pad)
        if self.cfg.fusion == "weighted_sum":
            yield ("w_face", self.w_face, self.g_w_face)
            yield ("w_body", self.w_body, self.g_w_body)
        if self.cfg.fusion == "coeff_sum":
            yield ("c_face", self.c_face, self.g_c_face)
            yield ("c_body", self.c_body, self.g_c_body)

    def zero_grad(self):
        self.linear.zero_grad()
        for g in (self.g_face_pad, self.g_body_pad, self.g_w_face,
                  self.g_w_body, self.g_c_face, self.g_c_body):
            g.fill(0.0)

    # ----------------------------------------------------------- forward

    def forward(self, face: np.ndarray, body: np.ndarray,
                face_present: np.ndarray, body_present: np.ndarray) -> np.ndarray:
        """Batch fusion + projection. Missing rows use the padding vector."""
        face = np.asarray(face, dtype=np.float64)
        body = np.asarray(body, dtype=np.float64)
        face_present = np.asarray(face_present, dtype=bool)
        body_present = np.asarray(body_present, dtype=bool)
        n, d = face.shape
        if body.shape != (n, d) or d != self.cfg.input_dim:
            raise DataError("feature dimensions do not match projector input")
        if np.any(~face_present & ~body_present):
            raise DataError("an instance is missing both face and body features")

        f_eff = np.where(face_present[:, None], face, self.face_pad[None, :])
        b_eff = np.where(body_present[:, None], body, self.body_pad[None, :])

        if self.cfg.fusion == "sum":
            fused = f_eff + b_eff
            blend = None
        elif self.cfg.fusion == "concat":
            fused = np.concatenate([f_eff, b_eff], axis=1)
            blend = None
        elif self.cfg.fusion == "weighted_sum":
            blend = _sigmoid(self.w_face - self.w_body)  # pairwise softmax
            fused = blend[None, :] * f_eff + (1.0 - blend)[None, :] * b_eff
        else:  # coeff_sum
            blend = _sigmoid(self.c_face - self.c_body)  # scalar in a 1-array
            fused = blend[0] * f_eff + (1.0 - blend[0]) * b_eff

        y = self.linear.forward(fused)
        if self.cfg.l2_normalize:
            zhat, norms = normalize_rows_forward(y)
        else:
            zhat, norms = y, None
        self._cache = (f_eff, b_eff, face_present, body_present, blend, zhat, norms)
        return zhat

    def backward(self, d_out: np.ndarray):
        """Accumulate parameter gradients; return (d_face, d_body).

        Gradients for rows whose side was missing are routed to the padding
        vector (when trainable) and zeroed in the input gradient.
        """
        if self._cache is None:
            raise DataError("backward called before forward")
        f_eff, b_eff, face_present, body_present, blend, zhat, norms = self._cache
        if self.cfg.l2_normalize:
            dy = normalize_rows_backward(np.asarray(d_out, dtype=np.float64), zhat, norms)
        else:
            dy = np.asarray(d_out, dtype=np.float64)
        d_fused = self.linear.backward(dy)

        d = self.cfg.input_dim
        if self.cfg.fusion == "sum":
            df, db = d_fused, d_fused.copy()
        elif self.cfg.fusion == "concat":
            df, db = d_fused[:, :d], d_fused[:, d:]
        elif self.cfg.fusion == "weighted_sum":
            df = blend[None, :] * d_fused
            db = (1.0 - blend)[None, :] * d_fused
            d_blend = np.sum(d_fused * (f_eff - b_eff), axis=0)
            local = d_blend * blend * (1.0 - blend)
            self.g_w_face += local
            self.g_w_body -= local
        else:  # coeff_sum
            df = blend[0] * d_fused
            db = (1.0 - blend[0]) * d_fused
            d_blend = float(np.sum(d_fused * (f_eff - b_eff)))
            local = d_blend * blend[0] * (1.0 - blend[0])
            self.g_c_face += local
            self.g_c_body -= local

        missing_f = ~face_present
        missing_b = ~body_present
        if self.cfg.padding == "trainable":
            if missing_f.any():
                self.g_face_pad += df[missing_f].sum(axis=0)
            if missing_b.any():
                self.g_body_pad += db[missing_b].sum(axis=0)
        d_face = np.where(face_present[:, None], df, 0.0)
        d_body = np.where(body_present[:, None], db, 0.0)
        return d_face, d_body

    # ------------------------------------------------------- persistence

    def save(self, path):
        named = [(name, value) for name, value, _ in self.parameters()]
        meta = {
            "kind": "projector",
            "input_dim": self.cfg.input_dim,
            "output_dim": self.cfg.output_dim,
            "l2_normalize": self.cfg.l2_normalize,
            "fusion": self.cfg.fusion,
            "padding": self.cfg.padding,
            "random_mask_rate": self.cfg.random_mask_rate,
        }
        save_checkpoint(path, named, meta)

    @classmethod
    def load(cls, path) -> "IdentityProjector":
        arrays, meta = load_checkpoint(path)
        if meta.get("kind") != "projector":
            raise DataError(f"checkpoint is not a projector: {meta.get('kind')!r}")
        cfg = ProjectorConfig(
            input_dim=int(meta["input_dim"]),
            output_dim=int(meta["output_dim"]),
            l2_normalize=bool(meta["l2_normalize"]),
            fusion=meta["fusion"],
            padding=meta["padding"],
            random_mask_rate=float(meta["random_mask_rate"]),
        )
        proj = cls(cfg, np.random.default_rng(0))
        restore_parameters(proj.parameters(), arrays)
        return proj


def fuse_and_project(e_face: np.ndarray | None, e_body: np.ndarray | None,
                     projector: IdentityProjector,
                     instance_uuid: str = "") -> EmbeddingVector:
    """Fuse one instance's features into a unit-norm identity embedding."""
    if e_face is None and e_body is None:
        raise DataError("both face and body features are missing")
    d = projector.cfg.input_dim
    face = np.zeros((1, d)) if e_face is None else np.asarray(e_face, dtype=np.float64).reshape(1, d)
    body = np.zeros((1, d)) if e_body is None else np.asarray(e_body, dtype=np.float64).reshape(1, d)
    out = projector.forward(
        face, body,
        np.array([e_face is not None]), np.array([e_body is not None]))
    return EmbeddingVector(
        instance_uuid=instance_uuid or "unassigned",
        role="identity",
        values=out[0],
    )


def apply_random_masking(face_present: np.ndarray, body_present: np.ndarray,
                         rate: float, rng: np.random.Generator):
    """Randomly hide one side of complete instances during training.

    The total rate is split equally: a complete row loses its face with
    probability rate/2, its body with rate/2, never both. Incomplete rows
    are left untouched so no row ends up empty.
    """
    face_present = np.asarray(face_present, dtype=bool).copy()
    body_present = np.asarray(body_present, dtype=bool).copy()
    if rate <= 0.0:
        return face_present, body_present
    both = face_present & body_present
    u = rng.random(face_present.shape[0])
    mask_face = both & (u < rate / 2.0)
    mask_body = both & (u >= rate / 2.0) & (u < rate)
    face_present[mask_face] = False
    body_present[mask_body] = False
    return face_present, body_present
