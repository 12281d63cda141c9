"""
From raw detections to an identity graph
========================================

Ingest starts from per-panel face and body boxes, pairs them into
character instances, groups panels into overlapping sequences, and
finally links the per-sequence identity annotations into corpus-wide
classes with must-not-match edges between co-occurring characters.
"""

from comicreid.ingest import (
    PairingConfig,
    build_sequences,
    ingest_detections,
    link_sequences,
    pair_face_body,
)
from comicreid.model import (
    BBox,
    CharacterInstance,
    Detection,
    IdentityAnnotation,
    PanelSequence,
)

# One panel with four characters: two full face+body pairs, one face
# whose body was missed, and one body whose face is out of frame.
panel = [
    Detection("face", BBox(520, 189, 691, 395, 0.98), 0, "1551", "1", "2"),
    Detection("body", BBox(491, 92, 717, 541, 0.93), 1, "1551", "1", "2"),
    Detection("face", BBox(110, 66, 156, 117, 0.96), 1, "1551", "1", "2"),
    Detection("body", BBox(47, 30, 222, 560, 0.99), 0, "1551", "1", "2"),
    Detection("face", BBox(246, 124, 272, 153, 0.72), 2, "1551", "1", "2"),
    Detection("face", BBox(517, 420, 538, 445, 0.65), 3, "1551", "1", "2"),
    Detection("body", BBox(498, 413, 585, 541, 0.87), 3, "1551", "1", "2"),
    Detection("body", BBox(185, 433, 253, 562, 0.90), 2, "1551", "1", "2"),
]
faces = [d for d in panel if d.kind == "face"]
bodies = [d for d in panel if d.kind == "body"]

# Pairing matches each face to the body that best contains it.
instances = pair_face_body(faces, bodies, PairingConfig())
print("paired instances:")
for inst in sorted(instances, key=lambda i: i.char_index):
    face = f"face#{inst.face.index}" if inst.face else "no face"
    body = f"body#{inst.body.index}" if inst.body else "no body"
    print(f"  char {inst.char_index}: {face} + {body}")

# With quality filtering on, low-score boxes are dropped before pairing.
filtered = ingest_detections(panel, PairingConfig(), apply_filter=True)
print("after filtering:", len(filtered), "instances survive")

# Sequences are sliding windows of consecutive panels within a series;
# annotators then group instances inside each sequence.
def seq(seq_id, groups, series):
    instances, seen = [], set()
    for uuids in groups.values():
        for u in uuids:
            if u not in seen:
                seen.add(u)
                instances.append(CharacterInstance(
                    u, 0, series, "1", "1",
                    face=Detection("face", BBox(0, 0, 10, 10, 0.99), 0,
                                   series, "1", "1")))
    anns = [IdentityAnnotation(k, frozenset(v)) for k, v in groups.items()]
    return PanelSequence(seq_id, series,
                         (("1", "1"), ("1", "2"), ("1", "3"), ("1", "4")),
                         instances, annotations=anns)

# Three sequences. "hero" appears in the first two; the second sequence
# bridges it with "lead", so linking must merge them into one class.
s1 = seq("w1", {"hero": ["u1", "u2"], "rival": ["u3"]}, "s1")
s2 = seq("w2", {"bridge": ["u2", "u4"]}, "s1")
s3 = seq("w3", {"lead": ["u4", "u5"], "extra": ["u6"]}, "s2")

graph = link_sequences([s1, s2, s3])
print("\nlinked classes:")
for cls in graph.classes:
    print(f"  class {cls.class_id}: {sorted(cls.instance_uuids)}"
          f" across series {sorted(cls.series_ids)}")

# Characters annotated as distinct within the same sequence become
# must-not-match edges, the raw material for safe negative mining.
print("similar training pairs:", graph.similar_pair_count())
print("dissimilar training pairs:", graph.dissimilar_pair_count())

merged = next(c for c in graph.classes if "u1" in c.instance_uuids)
assert merged.instance_uuids and "u5" in merged.instance_uuids
print("bridge merged hero+lead into one class of",
      len(merged.instance_uuids), "instances")

# build_sequences does the windowing itself: consecutive panels of one
# series are grouped into fixed-size windows for annotation.
strip = [
    CharacterInstance(f"v{i}", 0, "s9", "1", str(panel_no),
                      face=Detection("face", BBox(0, 0, 10, 10, 0.99), 0,
                                     "s9", "1", str(panel_no)))
    for i, panel_no in enumerate([1, 2, 3, 4, 5, 6, 7, 8])
]
windows = build_sequences(strip, window=4, stride=4)
print("\nwindows over an 8-panel strip:", len(windows))
for w in windows:
    print(" ", w.sequence_id, "panels", [p for _, p in w.panels])
