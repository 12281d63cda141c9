"""Detection post-processing: filtering, face/body pairing, crop geometry,
series-aware dataset splitting, and cross-sequence identity linking.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .model import (
    BBox,
    CharacterInstance,
    DataError,
    Detection,
    PanelSequence,
    new_instance_uuid,
)


@dataclass(frozen=True)
class PairingConfig:
    min_bbox_area: int = 64
    min_score: float = 0.95
    min_overlap_ratio: float = 0.95
    face_scale: float = 1.2

    def __post_init__(self):
        if self.min_bbox_area <= 0:
            raise DataError("min_bbox_area must be positive")
        for name in ("min_score", "min_overlap_ratio"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise DataError(f"{name} must lie in [0, 1], got {v}")
        if self.face_scale <= 0:
            raise DataError("face_scale must be positive")


@dataclass(frozen=True)
class SplitConfig:
    sequence_threshold: int = 800
    val_fraction: float = 0.15
    test_fraction: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.val_fraction and 0.0 <= self.test_fraction):
            raise DataError("split fractions must be nonnegative")
        if self.val_fraction + self.test_fraction >= 1.0:
            raise DataError("val_fraction + test_fraction must be < 1")
        if self.sequence_threshold < 0:
            raise DataError("sequence_threshold must be nonnegative")


def filter_detections(dets: list[Detection], cfg: PairingConfig) -> list[Detection]:
    """Keep detections with area >= min_bbox_area and score >= min_score.

    Both boundaries are inclusive: a box of exactly the minimum area or
    exactly the minimum score survives.
    """
    return [
        d for d in dets
        if d.bbox.area >= cfg.min_bbox_area and d.bbox.score >= cfg.min_score
    ]


def _overlap_ratio(face: Detection, body: Detection) -> float:
    return face.bbox.intersection_area(body.bbox) / face.bbox.area


def pair_face_body(
    faces: list[Detection],
    bodies: list[Detection],
    cfg: PairingConfig,
    rng: np.random.Generator | None = None,
) -> list[CharacterInstance]:
    """Match faces to bodies within one panel and build character instances.

    A face qualifies with a body when the intersection covers strictly more
    than min_overlap_ratio of the face area. Qualifying (face, body)
    candidates are taken greedily by ascending top-y gap |F.y0 - B.y0|
    (ties: face index, then body index), so each detection joins at most one
    instance. Leftover detections become single-part instances.

    Instance numbering: faces take 0..F-1 in face-index order; unpaired
    bodies continue F, F+1, ... in body-index order.
    """
    for d in faces:
        if d.kind != "face":
            raise DataError(f"expected face detection, got {d.kind}")
    for d in bodies:
        if d.kind != "body":
            raise DataError(f"expected body detection, got {d.kind}")
    panels = {d.panel_key for d in faces} | {d.panel_key for d in bodies}
    if len(panels) > 1:
        raise DataError(f"pairing expects one panel, got {sorted(panels)}")

    faces = sorted(faces, key=lambda d: d.index)
    bodies = sorted(bodies, key=lambda d: d.index)

    candidates = []
    for fi, face in enumerate(faces):
        for bi, body in enumerate(bodies):
            if _overlap_ratio(face, body) > cfg.min_overlap_ratio:
                gap = abs(face.bbox.y0 - body.bbox.y0)
                candidates.append((gap, fi, bi))
    candidates.sort()

    face_match: dict[int, int] = {}
    body_taken: set[int] = set()
    for _, fi, bi in candidates:
        if fi in face_match or bi in body_taken:
            continue
        face_match[fi] = bi
        body_taken.add(bi)

    instances: list[CharacterInstance] = []
    for fi, face in enumerate(faces):
        body = bodies[face_match[fi]] if fi in face_match else None
        instances.append(_make_instance(fi, face, body, rng))
    next_char = len(faces)
    for bi, body in enumerate(bodies):
        if bi in body_taken:
            continue
        instances.append(_make_instance(next_char, None, body, rng))
        next_char += 1
    return instances


def _make_instance(char_index, face, body, rng) -> CharacterInstance:
    anchor = face if face is not None else body
    return CharacterInstance(
        instance_uuid=new_instance_uuid(rng),
        char_index=char_index,
        series_id=anchor.series_id,
        page_id=anchor.page_id,
        panel_id=anchor.panel_id,
        face=face,
        body=body,
    )


def ingest_detections(
    dets: list[Detection],
    cfg: PairingConfig,
    rng: np.random.Generator | None = None,
    apply_filter: bool = True,
) -> list[CharacterInstance]:
    """Full panel-wise pipeline: filter, then pair each panel's detections.

    Panels are processed in sorted key order so instance numbering and uuid
    draws are reproducible for a given rng.
    """
    if apply_filter:
        dets = filter_detections(dets, cfg)
    by_panel: dict[tuple, list[Detection]] = defaultdict(list)
    for d in dets:
        by_panel[d.panel_key].append(d)
    out: list[CharacterInstance] = []
    for key in sorted(by_panel, key=_panel_sort_key):
        group = by_panel[key]
        faces = [d for d in group if d.kind == "face"]
        bodies = [d for d in group if d.kind == "body"]
        out.extend(pair_face_body(faces, bodies, cfg, rng))
    return out


def _numeric_or_text(token: str):
    # numeric ids sort numerically, anything else lexicographically after
    try:
        return (0, int(token), "")
    except ValueError:
        return (1, 0, token)


def _panel_sort_key(key: tuple[str, str, str]):
    series, page, panel = key
    return (_numeric_or_text(series), _numeric_or_text(page), _numeric_or_text(panel))


def face_square_crop_box(face_bbox: BBox, scale: float, image_w: int, image_h: int) -> BBox:
    """Square crop around a face: side = round(scale * longest side), centered.

    A box poking outside the image is translated back inside; it shrinks to
    the image extent only when the image itself is smaller than the side.
    """
    if scale <= 0:
        raise DataError(f"crop scale must be positive, got {scale}")
    if image_w <= 0 or image_h <= 0:
        raise DataError("image dimensions must be positive")
    side = int(np.floor(scale * max(face_bbox.width, face_bbox.height) + 0.5))
    if side < 1:
        raise DataError("crop side collapsed to zero")

    def place(center: float, extent: int) -> tuple[int, int]:
        if side >= extent:
            return 0, extent
        lo = int(np.floor(center - side / 2.0 + 0.5))
        lo = min(max(lo, 0), extent - side)
        return lo, lo + side

    cx = (face_bbox.x0 + face_bbox.x1) / 2.0
    cy = (face_bbox.y0 + face_bbox.y1) / 2.0
    x0, x1 = place(cx, image_w)
    y0, y1 = place(cy, image_h)
    return BBox(x0, y0, x1, y1, face_bbox.score)


def build_sequences(
    instances: list[CharacterInstance],
    stride: int = 4,
    window: int = 4,
) -> list[PanelSequence]:
    """Group panels of each (series, page) into consecutive windows.

    Windows slide by `stride` panels; pages with fewer than `window` panels
    contribute nothing. Overlapping windows (stride < window) make linking
    possible because shared panels carry shared instance uuids.
    """
    if window != 4:
        raise DataError("sequences are fixed at 4 panels")
    if stride < 1:
        raise DataError("stride must be >= 1")
    by_page: dict[tuple[str, str], dict[str, list[CharacterInstance]]] = defaultdict(
        lambda: defaultdict(list)
    )
    for inst in instances:
        by_page[(inst.series_id, inst.page_id)][inst.panel_id].append(inst)
    sequences: list[PanelSequence] = []
    for (series_id, page_id) in sorted(by_page, key=lambda k: (_numeric_or_text(k[0]), _numeric_or_text(k[1]))):
        panels = sorted(by_page[(series_id, page_id)], key=_numeric_or_text)
        for start in range(0, len(panels) - window + 1, stride):
            chosen = panels[start:start + window]
            members = [
                inst
                for pid in chosen
                for inst in by_page[(series_id, page_id)][pid]
            ]
            sequences.append(
                PanelSequence(
                    sequence_id=f"{series_id}:{page_id}:{chosen[0]}",
                    series_id=series_id,
                    panels=tuple((page_id, pid) for pid in chosen),
                    instances=members,
                )
            )
    return sequences


def split_sequences(
    sequences: list[PanelSequence], cfg: SplitConfig
) -> dict[str, list[PanelSequence]]:
    """Series-aware split: smallest series pool feeds val/test, rest trains.

    Series are sorted by ascending sequence count (ties by id) and included
    smallest-first until the cumulative count reaches sequence_threshold;
    that pool is sampled series-by-series (seeded shuffle) into val then
    test until each reaches its fraction of the pool; leftover pool series
    and all excluded series train. A series therefore lands in exactly one
    split, and val/test series sets are disjoint.
    """
    if cfg.sequence_threshold > len(sequences):
        raise DataError(
            f"sequence_threshold {cfg.sequence_threshold} exceeds "
            f"total sequences {len(sequences)}"
        )
    by_series: dict[str, list[PanelSequence]] = defaultdict(list)
    for seq in sequences:
        by_series[seq.series_id].append(seq)
    order = sorted(by_series, key=lambda s: (len(by_series[s]), _numeric_or_text(s)))

    pool: list[str] = []
    cumulative = 0
    for series in order:
        if cumulative >= cfg.sequence_threshold:
            break
        pool.append(series)
        cumulative += len(by_series[series])

    rng = np.random.default_rng(cfg.seed)
    shuffled = list(pool)
    rng.shuffle(shuffled)
    pool_count = sum(len(by_series[s]) for s in pool)
    val_target = cfg.val_fraction * pool_count
    test_target = cfg.test_fraction * pool_count

    splits: dict[str, list[PanelSequence]] = {"train": [], "val": [], "test": []}
    val_n = test_n = 0
    for series in shuffled:
        n = len(by_series[series])
        if val_n < val_target:
            splits["val"].extend(by_series[series])
            val_n += n
        elif test_n < test_target:
            splits["test"].extend(by_series[series])
            test_n += n
        else:
            splits["train"].extend(by_series[series])
    excluded = [s for s in order if s not in set(pool)]
    for series in excluded:
        splits["train"].extend(by_series[series])
    for part in splits.values():
        part.sort(key=lambda q: q.sequence_id)
    return splits


# ---------------------------------------------------------------------------
# identity linking


class UnionFind:
    """Disjoint sets over hashable keys with path compression."""

    def __init__(self):
        self.parent: dict = {}
        self.rank: dict = {}

    def find(self, x):
        if x not in self.parent:
            self.parent[x] = x
            self.rank[x] = 0
            return x
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return ra


@dataclass
class IdentityClass:
    """A merged (post-linking) positive class of character instances."""

    class_id: int
    instance_uuids: list[str]
    series_ids: set[str] = field(default_factory=set)
    sequence_ids: set[str] = field(default_factory=set)


@dataclass
class IdentityGraph:
    """Merged identity classes plus the annotated-dissimilar edge set."""

    classes: list[IdentityClass]
    dissimilar_edges: set[tuple[int, int]]  # canonical (lo, hi) class-id pairs

    def __post_init__(self):
        for a, b in self.dissimilar_edges:
            if a == b:
                raise DataError(f"self-dissimilarity on class {a}")
            if a > b:
                raise DataError("edges must be stored as (lo, hi)")

    @property
    def class_by_id(self) -> dict[int, IdentityClass]:
        return {c.class_id: c for c in self.classes}

    def are_dissimilar(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.dissimilar_edges

    def similar_pair_count(self) -> int:
        return sum(len(c.instance_uuids) * (len(c.instance_uuids) - 1) // 2
                   for c in self.classes)

    def dissimilar_pair_count(self) -> int:
        by_id = self.class_by_id
        return sum(
            len(by_id[a].instance_uuids) * len(by_id[b].instance_uuids)
            for a, b in self.dissimilar_edges
        )


def link_sequences(sequences: list[PanelSequence]) -> IdentityGraph:
    """Merge sequence-local identities that share an instance uuid.

    Identities from different sequences become one positive class whenever
    they overlap in at least one instance (transitive closure). Two
    identities annotated side by side in one sequence are dissimilar;
    merged classes inherit those edges. A dissimilar pair collapsing into
    one class is contradictory data.
    """
    annotated = [s for s in sequences if s.annotations]
    uf = UnionFind()
    local_keys: list[tuple[str, str]] = []
    members: dict[tuple[str, str], frozenset[str]] = {}
    for seq in annotated:
        for ann in seq.annotations:
            key = (seq.sequence_id, ann.identity_id)
            local_keys.append(key)
            members[key] = ann.member_uuids
            uf.find(key)

    by_uuid: dict[str, tuple[str, str]] = {}
    for key in local_keys:
        for u in sorted(members[key]):
            if u in by_uuid:
                uf.union(by_uuid[u], key)
            else:
                by_uuid[u] = key

    root_keys: dict[tuple[str, str], list[tuple[str, str]]] = defaultdict(list)
    for key in local_keys:
        root_keys[uf.find(key)].append(key)
    roots = sorted(root_keys)
    class_of_key: dict[tuple[str, str], int] = {}
    classes: list[IdentityClass] = []
    for class_id, root in enumerate(roots):
        uuids: set[str] = set()
        series: set[str] = set()
        seq_ids: set[str] = set()
        for key in root_keys[root]:
            class_of_key[key] = class_id
            uuids |= members[key]
            seq_ids.add(key[0])
        classes.append(IdentityClass(class_id, sorted(uuids), series, seq_ids))
    for seq in annotated:
        for ann in seq.annotations:
            cid = class_of_key[(seq.sequence_id, ann.identity_id)]
            classes[cid].series_ids.add(seq.series_id)

    edges: set[tuple[int, int]] = set()
    for seq in annotated:
        ids = [class_of_key[(seq.sequence_id, a.identity_id)] for a in seq.annotations]
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                a, b = ids[i], ids[j]
                if a == b:
                    raise DataError(
                        f"sequence {seq.sequence_id}: identities "
                        f"{seq.annotations[i].identity_id} and "
                        f"{seq.annotations[j].identity_id} are annotated "
                        f"dissimilar but linked into one class"
                    )
                edges.add((min(a, b), max(a, b)))
    return IdentityGraph(classes=classes, dissimilar_edges=edges)
