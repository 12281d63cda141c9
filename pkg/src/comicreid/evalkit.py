"""Retrieval metrics and the in-sequence / cross-series evaluation protocols.

Rankings are by descending cosine similarity of identity embeddings, ties
broken by reference id so results are order-independent. Queries with no
relevant reference are excluded from aggregation.
"""

from __future__ import annotations

import csv
import warnings
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .ingest import link_sequences
from .model import DataError, PanelSequence


@dataclass(frozen=True)
class RetrievalInstance:
    query_id: str
    ranked_refs: tuple[str, ...]  # by descending similarity
    relevance: tuple[bool, ...]

    def __post_init__(self):
        if len(self.ranked_refs) != len(self.relevance):
            raise DataError("ranking and relevance flags must align")
        if len(set(self.ranked_refs)) != len(self.ranked_refs):
            raise DataError("ranking repeats a reference")

    @property
    def R(self) -> int:
        return int(sum(self.relevance))


@dataclass
class EvalReport:
    map: float
    map_at_r: float
    mrr: float
    p_at_1: float
    r_precision: float
    scope: str  # "local" | "global"
    n_queries: int
    n_references: int

    def __post_init__(self):
        for name in ("map", "map_at_r", "mrr", "p_at_1", "r_precision"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise DataError(f"{name} = {v} outside [0, 1]")

    FIELDS = ("scope", "n_queries", "n_references", "map", "map_at_r", "mrr",
              "p_at_1", "r_precision")

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.FIELDS)
            writer.writerow([
                self.scope, self.n_queries, self.n_references,
                repr(self.map), repr(self.map_at_r), repr(self.mrr),
                repr(self.p_at_1), repr(self.r_precision),
            ])

    def pretty(self) -> str:
        rows = [
            ("scope", self.scope),
            ("queries", str(self.n_queries)),
            ("references", str(self.n_references)),
            ("MAP", f"{self.map:.4f}"),
            ("MAP@R", f"{self.map_at_r:.4f}"),
            ("MRR", f"{self.mrr:.4f}"),
            ("P@1", f"{self.p_at_1:.4f}"),
            ("R-P", f"{self.r_precision:.4f}"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.rjust(width)}  {v}" for k, v in rows)


def metrics(instance: RetrievalInstance, map_at_r_variant: str = "standard") -> dict:
    """AP, AP@R, RR, P@1 and R-precision for one ranked query.

    AP averages precision at each relevant rank over R. AP@R restricts to
    the first R ranks; the standard variant uses precision-at-i gated by
    correctness, the "indicator" variant counts plain hits.
    """
    flags = instance.relevance
    R = instance.R
    if R == 0:
        raise DataError(f"query {instance.query_id} has no relevant reference")
    hits = 0
    ap_total = 0.0
    apr_total = 0.0
    rr = 0.0
    for rank, rel in enumerate(flags, start=1):
        if not rel:
            continue
        hits += 1
        precision = hits / rank
        ap_total += precision
        if rank <= R:
            apr_total += precision if map_at_r_variant == "standard" else 1.0
        if rr == 0.0:
            rr = 1.0 / rank
    return {
        "ap": ap_total / R,
        "ap_at_r": apr_total / R,
        "rr": rr,
        "p_at_1": 1.0 if flags and flags[0] else 0.0,
        "r_precision": sum(flags[:R]) / R,
    }


def aggregate(instances: list[RetrievalInstance], scope: str,
              n_references: int | None = None,
              map_at_r_variant: str = "standard") -> EvalReport:
    """Unweighted mean of per-query metrics; R = 0 queries are dropped."""
    eligible = [inst for inst in instances if inst.R > 0]
    if not eligible:
        raise DataError("no query has a relevant reference")
    acc = defaultdict(float)
    for inst in eligible:
        for key, value in metrics(inst, map_at_r_variant).items():
            acc[key] += value
    n = len(eligible)
    refs = n_references if n_references is not None else max(
        len(inst.ranked_refs) for inst in eligible)
    return EvalReport(
        map=acc["ap"] / n,
        map_at_r=acc["ap_at_r"] / n,
        mrr=acc["rr"] / n,
        p_at_1=acc["p_at_1"] / n,
        r_precision=acc["r_precision"] / n,
        scope=scope,
        n_queries=n,
        n_references=refs,
    )


def rank_references(query_vec: np.ndarray, ref_ids: list[str],
                    ref_matrix: np.ndarray) -> list[str]:
    """Order reference ids by descending cosine similarity, ties by id."""
    q = np.asarray(query_vec, dtype=np.float64)
    q = q / np.linalg.norm(q)
    refs = np.asarray(ref_matrix, dtype=np.float64)
    refs = refs / np.linalg.norm(refs, axis=1, keepdims=True)
    sims = refs @ q
    order = sorted(range(len(ref_ids)), key=lambda k: (-sims[k], ref_ids[k]))
    return [ref_ids[k] for k in order]


def _identity_of(seq: PanelSequence) -> dict[str, str]:
    table: dict[str, str] = {}
    if seq.annotations:
        for ann in seq.annotations:
            for u in ann.member_uuids:
                table[u] = ann.identity_id
    return table


def local_eval(sequences: list[PanelSequence],
               embeddings: dict[str, np.ndarray],
               map_at_r_variant: str = "standard") -> EvalReport:
    """Leave-one-out retrieval within each sequence.

    Every annotated instance with at least one same-identity sibling
    queries the sequence's other annotated instances. Instances without an
    embedding or an identity are excluded.
    """
    instances: list[RetrievalInstance] = []
    for seq in sorted(sequences, key=lambda s: s.sequence_id):
        identity_of = _identity_of(seq)
        members = sorted(
            u for u in identity_of
            if u in embeddings
        )
        if len(members) < 2:
            continue
        for query in members:
            refs = [u for u in members if u != query]
            positives = [u for u in refs if identity_of[u] == identity_of[query]]
            if not positives:
                continue  # no candidate can be relevant: skip this query
            ranked = rank_references(
                embeddings[query], refs,
                np.vstack([embeddings[u] for u in refs]))
            relevance = tuple(identity_of[u] == identity_of[query] for u in ranked)
            instances.append(RetrievalInstance(query, tuple(ranked), relevance))
    if not instances:
        raise DataError("no eligible local query (need >=2 co-annotated instances)")
    return aggregate(instances, "local", map_at_r_variant=map_at_r_variant)


@dataclass
class GlobalCuration:
    # query uuid -> class key; reference uuid -> class key
    queries: dict[str, tuple[str, int]]
    references: dict[str, tuple[str, int]]


def curate_global(test_sequences: list[PanelSequence]) -> GlobalCuration:
    """Per-series query/reference selection over linked identities.

    Identities are linked within each series; every class with >= 2
    instances contributes its first instance (sorted by uuid) as the query
    and the rest as references; single-instance classes join the reference
    pool as distractors.
    """
    if not any(s.annotations for s in test_sequences):
        raise DataError("global curation needs annotated test sequences")
    by_series: dict[str, list[PanelSequence]] = defaultdict(list)
    for seq in test_sequences:
        by_series[seq.series_id].append(seq)
    queries: dict[str, tuple[str, int]] = {}
    references: dict[str, tuple[str, int]] = {}
    for series in sorted(by_series):
        graph = link_sequences(by_series[series])
        for cls in graph.classes:
            key = (series, cls.class_id)
            uuids = sorted(cls.instance_uuids)
            if len(uuids) >= 2:
                queries[uuids[0]] = key
                for u in uuids[1:]:
                    references[u] = key
            else:
                references[uuids[0]] = key
    return GlobalCuration(queries=queries, references=references)


def global_eval(test_sequences: list[PanelSequence],
                embeddings: dict[str, np.ndarray],
                map_at_r_variant: str = "standard") -> EvalReport:
    """Cross-series retrieval: each query ranks the pooled reference set."""
    curation = curate_global(test_sequences)
    ref_ids = sorted(u for u in curation.references if u in embeddings)
    if not ref_ids:
        raise DataError("no reference has an embedding")
    ref_matrix = np.vstack([embeddings[u] for u in ref_ids])
    instances = []
    for query, key in sorted(curation.queries.items()):
        if query not in embeddings:
            continue
        ranked = rank_references(embeddings[query], ref_ids, ref_matrix)
        relevance = tuple(curation.references[u] == key for u in ranked)
        instances.append(RetrievalInstance(query, tuple(ranked), relevance))
    if not instances:
        raise DataError("no global query has an embedding")
    return aggregate(instances, "global", n_references=len(ref_ids),
                     map_at_r_variant=map_at_r_variant)


def write_curation_manifest(curation: GlobalCuration, path) -> None:
    """Persist the query/reference roles, one JSON object per line."""
    import json

    rows = []
    for uuid, (series, class_id) in curation.queries.items():
        rows.append({"instance_uuid": uuid, "role": "query",
                     "series_id": series, "class_id": class_id})
    for uuid, (series, class_id) in curation.references.items():
        rows.append({"instance_uuid": uuid, "role": "reference",
                     "series_id": series, "class_id": class_id})
    rows.sort(key=lambda r: (r["role"], r["instance_uuid"]))
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_curation_manifest(path) -> GlobalCuration:
    import json

    queries: dict[str, tuple[str, int]] = {}
    references: dict[str, tuple[str, int]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            target = queries if row["role"] == "query" else references
            target[row["instance_uuid"]] = (row["series_id"], row["class_id"])
    return GlobalCuration(queries=queries, references=references)


@dataclass
class CalibrationResult:
    threshold: float
    method: str
    separation: float  # Youden J at the threshold (TPR - FPR)
    degenerate: bool


def calibrate_threshold(similar: np.ndarray, dissimilar: np.ndarray,
                        method: str = "youden") -> CalibrationResult:
    """Pick a distance cut between same-identity and different-identity pairs.

    "midpoint" splits the two sample means; "youden" sweeps candidate cuts
    (midpoints of adjacent sorted distances) maximizing TPR - FPR, where a
    similar pair below the cut is a true positive. Near-zero separation is
    flagged as degenerate.
    """
    similar = np.asarray(similar, dtype=np.float64)
    dissimilar = np.asarray(dissimilar, dtype=np.float64)
    if similar.size == 0 or dissimilar.size == 0:
        raise DataError("calibration needs both similar and dissimilar samples")

    def youden(t: float) -> float:
        tpr = float(np.mean(similar < t))
        fpr = float(np.mean(dissimilar < t))
        return tpr - fpr

    if method == "midpoint":
        threshold = float((similar.mean() + dissimilar.mean()) / 2.0)
    elif method == "youden":
        values = np.unique(np.concatenate([similar, dissimilar]))
        candidates = (values[:-1] + values[1:]) / 2.0 if len(values) > 1 else values
        best = None
        for t in candidates:
            j = youden(float(t))
            if best is None or j > best[1] + 1e-12:
                best = (float(t), j)
        threshold = best[0]
    else:
        raise DataError(f"unknown calibration method {method!r}")
    separation = youden(threshold)
    degenerate = separation < 1e-9
    if degenerate:
        warnings.warn(
            "similar and dissimilar distances are not separable; "
            "threshold has no discriminative power",
            stacklevel=2,
        )
    return CalibrationResult(threshold=threshold, method=method,
                             separation=separation, degenerate=degenerate)
