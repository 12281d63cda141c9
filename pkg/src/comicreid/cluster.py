"""Identity assignment within a panel sequence by agglomerative clustering.

Average-linkage, Euclidean metric. Clusters merge bottom-up while the
minimum average inter-cluster distance stays strictly below the threshold;
inter-cluster distances are maintained incrementally with the
Lance-Williams update for UPGMA. Labels are numbered by order of first
member appearance, so output is deterministic and order-stable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .model import DataError, PanelSequence
from .projector import IdentityProjector

LINKAGES = ("average",)
METRICS = ("euclidean",)


@dataclass(frozen=True)
class ClusterConfig:
    distance_threshold: float
    linkage: str = "average"
    metric: str = "euclidean"

    def __post_init__(self):
        if not (self.distance_threshold > 0):
            raise DataError("distance_threshold must be positive")
        if self.linkage not in LINKAGES:
            raise DataError(f"unsupported linkage {self.linkage!r}")
        if self.metric not in METRICS:
            raise DataError(f"unsupported metric {self.metric!r}")


def agglomerate(embeddings: np.ndarray, config: ClusterConfig) -> np.ndarray:
    """Cluster row vectors; returns one integer label per row."""
    points = np.asarray(embeddings, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise DataError("need a non-empty 2-d array of embeddings")
    n = len(points)
    dist = cdist(points, points)
    members: list[list[int]] = [[i] for i in range(n)]
    sizes = [1] * n
    # the first member of each cluster is its smallest original index; the
    # cluster list stays sorted by it, giving the deterministic tie-break
    firsts = list(range(n))

    while len(members) > 1:
        m = len(members)
        iu = np.triu_indices(m, k=1)
        flat = dist[iu]
        dmin = flat.min()
        if dmin >= config.distance_threshold:
            break
        ties = np.nonzero(flat == dmin)[0]
        # smallest (first_i, first_j); iu rows are already ordered by (i, j)
        # and firsts is ascending, so the first tie wins
        k = int(ties[0])
        i, j = int(iu[0][k]), int(iu[1][k])

        si, sj = sizes[i], sizes[j]
        merged_row = (si * dist[i, :] + sj * dist[j, :]) / (si + sj)
        dist[i, :] = merged_row
        dist[:, i] = merged_row
        dist[i, i] = 0.0
        keep = [c for c in range(m) if c != j]
        dist = dist[np.ix_(keep, keep)]
        members[i] = members[i] + members[j]
        sizes[i] = si + sj
        del members[j], sizes[j], firsts[j]

    labels = np.empty(n, dtype=int)
    for new_id, cluster in enumerate(members):
        labels[cluster] = new_id
    return labels


def assign_identities(sequence: PanelSequence,
                      features: dict[str, dict[str, np.ndarray]],
                      projector: IdentityProjector,
                      config: ClusterConfig,
                      backbone=None) -> dict[str, int]:
    """Cluster one sequence's instances into identity labels.

    `features` maps instance uuid -> part name -> feature vector (face
    and/or body). When a backbone model is given, each part vector is first
    passed through its encoder; otherwise vectors are used as-is.
    """
    instances = sequence.instances
    if not instances:
        raise DataError(f"sequence {sequence.sequence_id} has no instances")
    d = projector.cfg.input_dim
    faces = np.zeros((len(instances), d))
    bodies = np.zeros((len(instances), d))
    face_present = np.zeros(len(instances), dtype=bool)
    body_present = np.zeros(len(instances), dtype=bool)
    for row, inst in enumerate(instances):
        parts = features.get(inst.instance_uuid)
        if not parts:
            raise DataError(f"no features for instance {inst.instance_uuid}")
        for part, mat, present in (("face", faces, face_present),
                                   ("body", bodies, body_present)):
            vec = parts.get(part)
            if vec is None:
                continue
            vec = np.asarray(vec, dtype=np.float64)
            if backbone is not None:
                vec = backbone.embed(vec.reshape(1, -1))[0]
            mat[row] = vec
            present[row] = True
        if not face_present[row] and not body_present[row]:
            raise DataError(f"instance {inst.instance_uuid} has no usable part")
    identity = projector.forward(faces, bodies, face_present, body_present)
    labels = agglomerate(identity, config)
    return {inst.instance_uuid: int(labels[row])
            for row, inst in enumerate(instances)}


ASSIGNMENT_HEADER = "sequence_id,instance_uuid,cluster_label"


def write_assignments(path, rows: list[tuple[str, str, int]]) -> None:
    """Persist (sequence_id, instance_uuid, label) rows as CSV."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ASSIGNMENT_HEADER.split(","))
        for sequence_id, instance_uuid, label in rows:
            writer.writerow([sequence_id, instance_uuid, int(label)])


def read_assignments(path) -> list[tuple[str, str, int]]:
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ASSIGNMENT_HEADER.split(","):
            raise DataError(f"unexpected assignment header: {header}")
        return [(seq, uuid, int(label)) for seq, uuid, label in reader]
