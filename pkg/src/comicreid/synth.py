"""Synthetic comic-universe generator for benchmarks and end-to-end tests.

Characters are latent unit vectors. Each drawn instance carries that latent
in a modality-specific coordinate block — faces in one block, bodies in
another — plus loud per-part nuisance dimensions, a per-series style offset,
and per-instance jitter. Panels are grouped into overlapping four-panel
windows so the same instance uuid appears in neighbouring sequences, which
exercises cross-sequence identity linking. Series rosters are disjoint, so
cross-series retrieval has true distractors. Face/body dropout produces
single-part instances (never zero-part) to exercise padding and masking.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    BBox,
    CharacterInstance,
    DataError,
    Detection,
    EmbeddingVector,
    IdentityAnnotation,
    PanelSequence,
    l2_normalize,
    new_instance_uuid,
    read_embeddings,
    read_instances,
    read_sequences,
    write_embeddings,
    write_instances,
    write_sequences,
)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the generator; defaults give a cleanly separable dataset."""

    identities: int = 20
    series: int = 4
    panels_per_series: int = 16
    window_stride: int = 1
    max_chars_per_panel: int = 3
    signal_dim: int = 24
    noise_dim: int = 8
    # expected perturbation NORMS relative to the unit identity vector
    instance_spread: float = 0.3
    style_scale: float = 0.1
    # per-dimension magnitude of the distractor block (kept loud on purpose)
    nuisance_scale: float = 1.5
    face_dropout: float = 0.1
    body_dropout: float = 0.1
    seed: int = 7

    def __post_init__(self):
        if self.identities < 2:
            raise DataError("need at least 2 identities")
        if not (1 <= self.series <= self.identities):
            raise DataError("series count must be in [1, identities]")
        if self.panels_per_series < 4:
            raise DataError("each series needs at least 4 panels")
        if self.window_stride < 1:
            raise DataError("window stride must be positive")
        if self.max_chars_per_panel < 1:
            raise DataError("panels need room for at least one character")
        if self.signal_dim < 1 or self.noise_dim < 0:
            raise DataError("bad feature dimensions")
        for name in ("instance_spread", "nuisance_scale", "style_scale"):
            if getattr(self, name) < 0:
                raise DataError(f"{name} must be non-negative")
        if min(self.face_dropout, self.body_dropout) < 0 or (
                self.face_dropout + self.body_dropout) >= 1.0:
            raise DataError("dropout rates must be >= 0 and sum below 1")

    @property
    def feature_dim(self) -> int:
        # face block | body block | shared nuisance block
        return 2 * self.signal_dim + self.noise_dim

    def to_json_dict(self) -> dict:
        return {
            "identities": self.identities,
            "series": self.series,
            "panels_per_series": self.panels_per_series,
            "window_stride": self.window_stride,
            "max_chars_per_panel": self.max_chars_per_panel,
            "signal_dim": self.signal_dim,
            "noise_dim": self.noise_dim,
            "instance_spread": repr(self.instance_spread),
            "nuisance_scale": repr(self.nuisance_scale),
            "style_scale": repr(self.style_scale),
            "face_dropout": repr(self.face_dropout),
            "body_dropout": repr(self.body_dropout),
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, rec: dict) -> "SynthConfig":
        kwargs = dict(rec)
        for name in ("instance_spread", "nuisance_scale", "style_scale",
                     "face_dropout", "body_dropout"):
            if name in kwargs:
                kwargs[name] = float(kwargs[name])
        return cls(**kwargs)


@dataclass
class SynthDataset:
    """Generated corpus plus ground truth kept for benchmarking."""

    config: SynthConfig
    sequences: list[PanelSequence]
    features: dict[str, dict[str, np.ndarray]]  # uuid -> part -> vector
    true_identity: dict[str, int]  # uuid -> latent index
    identity_latents: np.ndarray  # (identities, signal_dim) unit rows
    identity_series: list[int] = field(default_factory=list)  # latent -> series

    @property
    def instances(self) -> list[CharacterInstance]:
        seen: dict[str, CharacterInstance] = {}
        for seq in self.sequences:
            for inst in seq.instances:
                seen.setdefault(inst.instance_uuid, inst)
        return [seen[u] for u in sorted(seen)]


def _panel_location(panel_index: int) -> tuple[str, str]:
    return (str(panel_index // 4 + 1), str(panel_index % 4 + 1))


def _instance_boxes(slot: int, series_id: str, page_id: str, panel_id: str,
                    has_face: bool, has_body: bool,
                    ) -> tuple[Detection | None, Detection | None]:
    """Plausible nested face/body boxes laid out left to right by slot."""
    x = 20 + 180 * slot
    face = body = None
    if has_body:
        body = Detection("body", BBox(x, 40, x + 120, 300, 1.0), slot,
                         series_id, page_id, panel_id, char_index=slot)
    if has_face:
        face = Detection("face", BBox(x + 30, 50, x + 90, 110, 1.0), slot,
                         series_id, page_id, panel_id, char_index=slot)
    return face, body


def generate(cfg: SynthConfig) -> SynthDataset:
    """Deterministically build the corpus for one seed."""
    rng = np.random.default_rng(cfg.seed)
    latents = rng.normal(size=(cfg.identities, cfg.signal_dim))
    latents = latents / np.linalg.norm(latents, axis=1, keepdims=True)
    identity_series = [k % cfg.series for k in range(cfg.identities)]

    sequences: list[PanelSequence] = []
    features: dict[str, dict[str, np.ndarray]] = {}
    true_identity: dict[str, int] = {}

    for s in range(cfg.series):
        series_id = f"series{s:02d}"
        root_d = np.sqrt(cfg.signal_dim)
        style = cfg.style_scale * rng.normal(size=cfg.signal_dim) / root_d
        roster = [k for k in range(cfg.identities) if identity_series[k] == s]

        # Cast scheduling: every roster character reappears within 3 panels
        # of its last appearance, so stride-1 windows chain all of one
        # character's sequence-local classes into a single linked class.
        last_seen: dict[int, int] = {}
        not_yet_cast = list(roster)
        low = min(2, len(roster))
        high = min(cfg.max_chars_per_panel, len(roster))

        # panel_index -> list of (identity, CharacterInstance)
        panel_cast: list[list[tuple[int, CharacterInstance]]] = []
        for p in range(cfg.panels_per_series):
            page_id, panel_id = _panel_location(p)
            forced = [k for k in roster if last_seen.get(k) == p - 3]
            count = max(int(rng.integers(low, high + 1)), len(forced))
            members = set(forced)
            while len(members) < count and not_yet_cast:
                members.add(not_yet_cast.pop(0))
            spare = [k for k in roster if k not in members]
            if len(members) < count:
                extra = rng.choice(len(spare), size=count - len(members),
                                   replace=False)
                members.update(spare[int(e)] for e in extra)
            cast: list[tuple[int, CharacterInstance]] = []
            for slot, identity in enumerate(sorted(members)):
                last_seen[identity] = p
                uuid = new_instance_uuid(rng)
                gate = rng.random()
                has_face = gate >= cfg.face_dropout
                has_body = not (cfg.face_dropout
                                <= gate < cfg.face_dropout + cfg.body_dropout)
                face, body = _instance_boxes(slot, series_id, page_id,
                                             panel_id, has_face, has_body)
                inst = CharacterInstance(uuid, slot, series_id, page_id,
                                         panel_id, face=face, body=body)
                cast.append((identity, inst))

                u = l2_normalize(latents[identity] + style
                                 + cfg.instance_spread / root_d
                                 * rng.normal(size=cfg.signal_dim))
                parts: dict[str, np.ndarray] = {}
                if has_face:
                    vec = np.zeros(cfg.feature_dim)
                    vec[:cfg.signal_dim] = u
                    vec[2 * cfg.signal_dim:] = (
                        cfg.nuisance_scale * rng.normal(size=cfg.noise_dim))
                    parts["face"] = vec
                if has_body:
                    vec = np.zeros(cfg.feature_dim)
                    vec[cfg.signal_dim:2 * cfg.signal_dim] = u
                    vec[2 * cfg.signal_dim:] = (
                        cfg.nuisance_scale * rng.normal(size=cfg.noise_dim))
                    parts["body"] = vec
                features[uuid] = parts
                true_identity[uuid] = identity
            panel_cast.append(cast)

        for start in range(0, cfg.panels_per_series - 3, cfg.window_stride):
            window = range(start, start + 4)
            panels = tuple(_panel_location(p) for p in window)
            instances = [inst for p in window for _, inst in panel_cast[p]]
            groups: dict[int, set[str]] = {}
            for p in window:
                for identity, inst in panel_cast[p]:
                    groups.setdefault(identity, set()).add(inst.instance_uuid)
            annotations = [
                IdentityAnnotation(f"id{identity:03d}", frozenset(members))
                for identity, members in sorted(groups.items())
            ]
            sequences.append(PanelSequence(
                sequence_id=f"{series_id}-w{start:03d}",
                series_id=series_id,
                panels=panels,
                instances=instances,
                annotations=annotations,
            ))

    return SynthDataset(cfg, sequences, features, true_identity, latents,
                        identity_series)


# --------------------------------------------------------------------------
# adapters


def features_to_embeddings(features: dict[str, dict[str, np.ndarray]],
                           ) -> list[EmbeddingVector]:
    out = []
    for uuid in sorted(features):
        for part in sorted(features[uuid]):
            out.append(EmbeddingVector(uuid, "backbone",
                                       features[uuid][part], part=part))
    return out


def embeddings_to_features(embeddings: list[EmbeddingVector],
                           ) -> dict[str, dict[str, np.ndarray]]:
    table: dict[str, dict[str, np.ndarray]] = {}
    for emb in embeddings:
        if emb.part not in ("face", "body"):
            raise DataError(
                f"backbone embedding for {emb.instance_uuid} lacks a part")
        slot = table.setdefault(emb.instance_uuid, {})
        if emb.part in slot:
            raise DataError(
                f"duplicate {emb.part} features for {emb.instance_uuid}")
        slot[emb.part] = emb.values
    return table


def ssl_examples(dataset: SynthDataset):
    """Per-instance base features for toy-mode pretraining, uuid-sorted."""
    from .ssl import SslExample

    return [
        SslExample(face=parts.get("face"), body=parts.get("body"))
        for _, parts in sorted(dataset.features.items())
    ]


def cross_modal_top1(projector_fn, dataset: SynthDataset) -> float:
    """Identity-level face-query -> body-reference top-1 accuracy.

    ``projector_fn`` maps a (n, feature_dim) batch to embeddings. For each
    instance holding both parts, the query is its face embedding and the hit
    condition is that the closest body embedding (cosine, excluding its own
    body? no — own body is the canonical positive) belongs to the same
    character. Ties broken by uuid order for determinism.
    """
    uuids = sorted(u for u, parts in dataset.features.items()
                   if "face" in parts and "body" in parts)
    if len(uuids) < 2:
        raise DataError("need at least 2 two-part instances for the probe")
    faces = np.stack([dataset.features[u]["face"] for u in uuids])
    bodies = np.stack([dataset.features[u]["body"] for u in uuids])
    qf = np.asarray(projector_fn(faces), dtype=np.float64)
    qb = np.asarray(projector_fn(bodies), dtype=np.float64)
    qf = qf / np.maximum(np.linalg.norm(qf, axis=1, keepdims=True), 1e-12)
    qb = qb / np.maximum(np.linalg.norm(qb, axis=1, keepdims=True), 1e-12)
    sims = qf @ qb.T
    hits = 0
    for row, uuid in enumerate(uuids):
        best = int(np.argmax(sims[row]))  # first index wins ties (uuid order)
        if dataset.true_identity[uuids[best]] == dataset.true_identity[uuid]:
            hits += 1
    return hits / len(uuids)


# --------------------------------------------------------------------------
# directory layout

INSTANCES_FILE = "instances.jsonl"
SEQUENCES_FILE = "sequences.jsonl"
FEATURES_FILE = "features.jsonl"
TRUTH_FILE = "identity_truth.json"


def write_dataset(dataset: SynthDataset, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_instances(dataset.instances, directory / INSTANCES_FILE)
    write_sequences(dataset.sequences, directory / SEQUENCES_FILE)
    write_embeddings(features_to_embeddings(dataset.features),
                     directory / FEATURES_FILE)
    truth = {
        "format_version": FORMAT_VERSION,
        "config": dataset.config.to_json_dict(),
        "identity_series": dataset.identity_series,
        "identity_latents": [[repr(float(x)) for x in row]
                             for row in dataset.identity_latents],
        "true_identity": {u: dataset.true_identity[u]
                          for u in sorted(dataset.true_identity)},
    }
    with open(directory / TRUTH_FILE, "w", encoding="utf-8") as fh:
        json.dump(truth, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_dataset(directory) -> SynthDataset:
    directory = Path(directory)
    for name in (INSTANCES_FILE, SEQUENCES_FILE, FEATURES_FILE, TRUTH_FILE):
        if not (directory / name).exists():
            raise DataError(f"dataset file missing: {directory / name}")
    instances = read_instances(directory / INSTANCES_FILE)
    sequences = read_sequences(directory / SEQUENCES_FILE, instances)
    features = embeddings_to_features(
        read_embeddings(directory / FEATURES_FILE))
    with open(directory / TRUTH_FILE, encoding="utf-8") as fh:
        truth = json.load(fh)
    if truth.get("format_version") != FORMAT_VERSION:
        raise DataError(
            f"unsupported dataset format {truth.get('format_version')!r}")
    latents = np.array([[float(x) for x in row]
                        for row in truth["identity_latents"]])
    return SynthDataset(
        config=SynthConfig.from_json_dict(truth["config"]),
        sequences=sequences,
        features=features,
        true_identity=dict(truth["true_identity"]),
        identity_latents=latents,
        identity_series=list(truth["identity_series"]),
    )


