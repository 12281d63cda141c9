"""Domain types and file-format codecs shared by every pipeline stage.

On-disk formats are deliberately plain text so fixtures stay diff-able:

* detections: comma-separated with header
  ``char_index,type,index,x_0,y_0,x_1,y_1,score,series_id,page_id``
  (the ``page_id`` column is a composite ``<page>_<panel>`` token)
* instances / sequences / embeddings: one JSON record per line
"""

from __future__ import annotations

import json
import uuid as _uuid
from dataclasses import dataclass, field

import numpy as np

DETECTION_HEADER = "char_index,type,index,x_0,y_0,x_1,y_1,score,series_id,page_id"

EMBEDDING_ROLES = ("backbone", "projection", "identity")
UNIT_NORM_TOL = 1e-6


class DataError(ValueError):
    """Malformed or inconsistent on-disk data."""


def new_instance_uuid(rng: np.random.Generator | None = None) -> str:
    """Random 128-bit identifier in canonical hex form, optionally seeded."""
    if rng is None:
        return str(_uuid.uuid4())
    return str(_uuid.UUID(bytes=rng.bytes(16), version=4))


@dataclass(frozen=True)
class BBox:
    """Axis-aligned pixel box, top-left origin, y growing downward."""

    x0: int
    y0: int
    x1: int
    y1: int
    score: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise DataError(f"degenerate bbox ({self.x0},{self.y0},{self.x1},{self.y1})")
        if not (0.0 <= self.score <= 1.0):
            raise DataError(f"detection score {self.score} outside [0, 1]")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def intersection_area(self, other: "BBox") -> int:
        w = min(self.x1, other.x1) - max(self.x0, other.x0)
        h = min(self.y1, other.y1) - max(self.y0, other.y0)
        if w <= 0 or h <= 0:
            return 0
        return w * h


@dataclass(frozen=True)
class Detection:
    kind: str  # "face" | "body"
    bbox: BBox
    index: int  # per-panel ordinal within its kind
    series_id: str
    page_id: str
    panel_id: str
    char_index: int | None = None  # pairing ordinal when already assigned

    def __post_init__(self):
        if self.kind not in ("face", "body"):
            raise DataError(f"unknown detection kind {self.kind!r}")

    @property
    def panel_key(self) -> tuple[str, str, str]:
        return (self.series_id, self.page_id, self.panel_id)


@dataclass(frozen=True)
class CharacterInstance:
    """One occurrence of a drawn character in one panel: face, body, or both."""

    instance_uuid: str
    char_index: int
    series_id: str
    page_id: str
    panel_id: str
    face: Detection | None = None
    body: Detection | None = None

    def __post_init__(self):
        if self.face is None and self.body is None:
            raise DataError(f"instance {self.instance_uuid} has neither face nor body")

    @property
    def panel_key(self) -> tuple[str, str, str]:
        return (self.series_id, self.page_id, self.panel_id)

    @property
    def has_face(self) -> bool:
        return self.face is not None

    @property
    def has_body(self) -> bool:
        return self.body is not None


@dataclass(frozen=True)
class IdentityAnnotation:
    identity_id: str  # sequence-local label
    member_uuids: frozenset[str]

    def __post_init__(self):
        if not self.member_uuids:
            raise DataError(f"identity {self.identity_id} has no members")


@dataclass
class PanelSequence:
    """Four consecutive panels with their instances and optional annotations."""

    sequence_id: str
    series_id: str
    panels: tuple[tuple[str, str], ...]  # ordered (page_id, panel_id), exactly 4
    instances: list[CharacterInstance] = field(default_factory=list)
    annotations: list[IdentityAnnotation] | None = None
    # panel_key -> list of [x0, y0, x1, y1]; display-only pass-through
    speech_bubbles: dict[str, list[list[int]]] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.panels) != 4:
            raise DataError(f"sequence {self.sequence_id} has {len(self.panels)} panels, want 4")
        self.validate()

    def validate(self):
        uuids = {inst.instance_uuid for inst in self.instances}
        if self.annotations is not None:
            seen: set[str] = set()
            for ann in self.annotations:
                missing = ann.member_uuids - uuids
                if missing:
                    raise DataError(
                        f"sequence {self.sequence_id}: annotation {ann.identity_id} "
                        f"references unknown instances {sorted(missing)}"
                    )
                overlap = ann.member_uuids & seen
                if overlap:
                    raise DataError(
                        f"sequence {self.sequence_id}: instances {sorted(overlap)} "
                        f"appear in more than one identity"
                    )
                seen |= ann.member_uuids

    @property
    def instance_by_uuid(self) -> dict[str, CharacterInstance]:
        return {inst.instance_uuid: inst for inst in self.instances}


@dataclass(frozen=True)
class EmbeddingVector:
    instance_uuid: str
    role: str  # "backbone" | "projection" | "identity"
    values: np.ndarray
    part: str | None = None  # "face" | "body" for per-part backbone features

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if self.role not in EMBEDDING_ROLES:
            raise DataError(f"unknown embedding role {self.role!r}")
        if vals.ndim != 1 or vals.size == 0:
            raise DataError("embedding values must be a non-empty vector")
        if not np.all(np.isfinite(vals)):
            raise DataError(f"non-finite embedding for {self.instance_uuid}")
        if self.role == "identity":
            norm = float(np.linalg.norm(vals))
            if abs(norm - 1.0) > UNIT_NORM_TOL:
                raise DataError(
                    f"identity embedding for {self.instance_uuid} has norm {norm:.8f}"
                )

    @property
    def dim(self) -> int:
        return int(self.values.size)


# ---------------------------------------------------------------------------
# detection CSV codec


def _parse_int(text: str, what: str, lineno: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise DataError(f"line {lineno}: non-numeric {what} {text!r}") from None


def _parse_float(text: str, what: str, lineno: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise DataError(f"line {lineno}: non-numeric {what} {text!r}") from None


def read_detections(path) -> list[Detection]:
    """Parse a detection CSV in the standard column order.

    Raises DataError with a line number for any malformed row.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except FileNotFoundError:
        raise DataError(f"detection file not found: {path}") from None
    if not lines or lines[0].strip() != DETECTION_HEADER:
        raise DataError(f"{path}: header mismatch, expected {DETECTION_HEADER!r}")
    out: list[Detection] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        cols = [c.strip() for c in raw.split(",")]
        if len(cols) != 10:
            raise DataError(f"line {lineno}: expected 10 columns, got {len(cols)}")
        char_index = _parse_int(cols[0], "char_index", lineno)
        kind = cols[1]
        index = _parse_int(cols[2], "index", lineno)
        x0 = _parse_int(cols[3], "x_0", lineno)
        y0 = _parse_int(cols[4], "y_0", lineno)
        x1 = _parse_int(cols[5], "x_1", lineno)
        y1 = _parse_int(cols[6], "y_1", lineno)
        score = _parse_float(cols[7], "score", lineno)
        series_id = cols[8]
        page_panel = cols[9]
        page_id, sep, panel_id = page_panel.partition("_")
        if not sep:
            raise DataError(f"line {lineno}: page_id {page_panel!r} is not <page>_<panel>")
        try:
            bbox = BBox(x0, y0, x1, y1, score)
            det = Detection(
                kind=kind,
                bbox=bbox,
                index=index,
                series_id=series_id,
                page_id=page_id,
                panel_id=panel_id,
                char_index=char_index,
            )
        except DataError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        out.append(det)
    return out


def write_detections(detections: list[Detection], path) -> None:
    rows = [DETECTION_HEADER]
    for det in detections:
        b = det.bbox
        rows.append(
            f"{det.char_index if det.char_index is not None else -1},{det.kind},"
            f"{det.index},{b.x0},{b.y0},{b.x1},{b.y1},{_fmt_float(b.score)},"
            f"{det.series_id},{det.page_id}_{det.panel_id}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")


# ---------------------------------------------------------------------------
# JSON-lines codecs


def _fmt_float(x: float) -> str:
    # repr(float) round-trips exactly and is stable across runs
    return repr(float(x))


def _det_to_json(det: Detection | None) -> dict | None:
    if det is None:
        return None
    b = det.bbox
    rec = {
        "kind": det.kind,
        "index": det.index,
        "x0": b.x0,
        "y0": b.y0,
        "x1": b.x1,
        "y1": b.y1,
        "score": b.score,
    }
    if det.char_index is not None:
        rec["char_index"] = det.char_index
    return rec


def _det_from_json(rec: dict | None, locator: tuple[str, str, str]) -> Detection | None:
    if rec is None:
        return None
    series_id, page_id, panel_id = locator
    return Detection(
        kind=rec["kind"],
        bbox=BBox(rec["x0"], rec["y0"], rec["x1"], rec["y1"], rec["score"]),
        index=rec["index"],
        series_id=series_id,
        page_id=page_id,
        panel_id=panel_id,
        char_index=rec.get("char_index"),
    )


def instance_to_record(inst: CharacterInstance) -> dict:
    return {
        "instance_uuid": inst.instance_uuid,
        "char_index": inst.char_index,
        "series_id": inst.series_id,
        "page_id": inst.page_id,
        "panel_id": inst.panel_id,
        "face": _det_to_json(inst.face),
        "body": _det_to_json(inst.body),
    }


def instance_from_record(rec: dict) -> CharacterInstance:
    locator = (rec["series_id"], rec["page_id"], rec["panel_id"])
    return CharacterInstance(
        instance_uuid=rec["instance_uuid"],
        char_index=rec["char_index"],
        series_id=rec["series_id"],
        page_id=rec["page_id"],
        panel_id=rec["panel_id"],
        face=_det_from_json(rec.get("face"), locator),
        body=_det_from_json(rec.get("body"), locator),
    )


def _dump_jsonl(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _load_jsonl(path) -> list[dict]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except FileNotFoundError:
        raise DataError(f"record file not found: {path}") from None
    out = []
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            out.append(json.loads(raw))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path} line {lineno}: invalid record ({exc.msg})") from None
    return out


def write_instances(instances: list[CharacterInstance], path) -> None:
    _dump_jsonl((instance_to_record(i) for i in instances), path)


def read_instances(path) -> list[CharacterInstance]:
    out: list[CharacterInstance] = []
    seen: set[str] = set()
    for rec in _load_jsonl(path):
        inst = instance_from_record(rec)
        if inst.instance_uuid in seen:
            raise DataError(f"duplicate instance uuid {inst.instance_uuid}")
        seen.add(inst.instance_uuid)
        out.append(inst)
    return out


def sequence_to_record(seq: PanelSequence) -> dict:
    rec = {
        "sequence_id": seq.sequence_id,
        "series_id": seq.series_id,
        "panels": [[p, q] for p, q in seq.panels],
        "instances": [inst.instance_uuid for inst in seq.instances],
    }
    if seq.annotations is not None:
        rec["annotations"] = [
            {"identity_id": a.identity_id, "member_uuids": sorted(a.member_uuids)}
            for a in seq.annotations
        ]
    if seq.speech_bubbles:
        rec["speech_bubbles"] = seq.speech_bubbles
    return rec


def sequence_from_record(rec: dict, instances_by_uuid: dict[str, CharacterInstance]) -> PanelSequence:
    members = []
    for u in rec["instances"]:
        if u not in instances_by_uuid:
            raise DataError(f"sequence {rec['sequence_id']}: unknown instance {u}")
        members.append(instances_by_uuid[u])
    annotations = None
    if "annotations" in rec:
        annotations = [
            IdentityAnnotation(a["identity_id"], frozenset(a["member_uuids"]))
            for a in rec["annotations"]
        ]
    return PanelSequence(
        sequence_id=rec["sequence_id"],
        series_id=rec["series_id"],
        panels=tuple((p, q) for p, q in rec["panels"]),
        instances=members,
        annotations=annotations,
        speech_bubbles=rec.get("speech_bubbles", {}),
    )


def write_sequences(sequences: list[PanelSequence], path) -> None:
    _dump_jsonl((sequence_to_record(s) for s in sequences), path)


def read_sequences(path, instances: list[CharacterInstance]) -> list[PanelSequence]:
    by_uuid = {i.instance_uuid: i for i in instances}
    return [sequence_from_record(rec, by_uuid) for rec in _load_jsonl(path)]


def write_embeddings(embeddings: list[EmbeddingVector], path) -> None:
    def records():
        for emb in embeddings:
            rec = {
                "instance_uuid": emb.instance_uuid,
                "role": emb.role,
                "values": [float(v) for v in emb.values],
            }
            if emb.part is not None:
                rec["part"] = emb.part
            yield rec

    _dump_jsonl(records(), path)


def read_embeddings(path) -> list[EmbeddingVector]:
    out = []
    for rec in _load_jsonl(path):
        out.append(
            EmbeddingVector(
                instance_uuid=rec["instance_uuid"],
                role=rec["role"],
                values=np.asarray(rec["values"], dtype=np.float64),
                part=rec.get("part"),
            )
        )
    return out


def embeddings_by_uuid(embeddings: list[EmbeddingVector]) -> dict[str, dict[str, EmbeddingVector]]:
    """Index embeddings as uuid -> part (or role when part is absent) -> vector."""
    table: dict[str, dict[str, EmbeddingVector]] = {}
    for emb in embeddings:
        key = emb.part if emb.part is not None else emb.role
        slot = table.setdefault(emb.instance_uuid, {})
        if key in slot:
            raise DataError(f"duplicate embedding for {emb.instance_uuid}/{key}")
        slot[key] = emb
    return table


def l2_normalize(v: np.ndarray, eps: float = 0.0) -> np.ndarray:
    """Safe row-wise unit normalization; raises on (near-)zero rows when eps=0."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 1:
        n = float(np.linalg.norm(arr))
        if n <= eps:
            if eps == 0.0 and n == 0.0:
                raise ValueError("cannot normalize zero vector")
            n = max(n, eps) if eps > 0 else n
        return arr / n
    norms = np.linalg.norm(arr, axis=1, keepdims=True)
    if eps == 0.0 and np.any(norms == 0.0):
        raise ValueError("cannot normalize zero vector")
    return arr / np.maximum(norms, eps if eps > 0 else np.finfo(np.float64).tiny)


def check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{name} contains non-finite values")


def is_unit(values: np.ndarray, tol: float = UNIT_NORM_TOL) -> bool:
    return bool(abs(float(np.linalg.norm(values)) - 1.0) <= tol)


def validate_instances(instances: list[CharacterInstance]) -> None:
    seen: set[str] = set()
    for inst in instances:
        if inst.instance_uuid in seen:
            raise DataError(f"duplicate instance uuid {inst.instance_uuid}")
        seen.add(inst.instance_uuid)


def bbox_area(x0: int, y0: int, x1: int, y1: int) -> int:
    return (x1 - x0) * (y1 - y0)


def cosine_similarity_matrix(a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Pairwise cosine similarity; inputs need not be pre-normalized."""
    an = l2_normalize(np.atleast_2d(np.asarray(a, dtype=np.float64)))
    bn = an if b is None else l2_normalize(np.atleast_2d(np.asarray(b, dtype=np.float64)))
    return an @ bn.T


def euclidean_distance_matrix(a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = a if b is None else np.atleast_2d(np.asarray(b, dtype=np.float64))
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.maximum(np.sum(diff * diff, axis=2), 0.0))


def stable_hash_floats(arr: np.ndarray) -> str:
    """Hex digest of float payload; used for model-hash cache keys."""
    import hashlib

    h = hashlib.sha256()
    h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return h.hexdigest()
