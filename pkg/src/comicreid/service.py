"""HTTP backend for the sequence identity annotator.

Serves panel sequences with their detections, persists identity groups
committed by annotators, and offers model-assisted cluster suggestions when
a projector checkpoint is configured.

Writes go through an append-only event log with periodic snapshots; each
sequence carries a revision counter checked optimistically on every commit,
so two conflicting writers cannot both succeed.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel

from .cluster import ClusterConfig, assign_identities
from .model import (
    DataError,
    IdentityAnnotation,
    PanelSequence,
    instance_to_record,
    read_instances,
    read_sequences,
    sequence_to_record,
    stable_hash_floats,
)
from .projector import IdentityProjector
from .synth import FEATURES_FILE, INSTANCES_FILE, SEQUENCES_FILE, embeddings_to_features

EVENTS_FILE = "events.jsonl"
SNAPSHOT_FILE = "snapshot.json"
SNAPSHOT_EVERY = 16
STORE_VERSION = 1

MODES = ("single_character", "multiple_character")


class RevisionConflict(Exception):
    """Raised when a commit's expected revision is stale."""

    def __init__(self, current: int):
        super().__init__(f"expected revision is stale; current is {current}")
        self.current = current


class CommitRejected(Exception):
    """Raised when a commit's content is invalid (unknown uuid, overlap…)."""


@dataclass
class SequenceState:
    revision: int = 0
    mode: str | None = None
    # identity id -> sorted member uuids; insertion order = commit order
    groups: dict[str, tuple[str, ...]] = field(default_factory=dict)


class AnnotationStore:
    """Identity groups per sequence, persisted as an append-only event log.

    Every accepted commit appends one event and bumps the sequence's
    revision; a snapshot of the folded state is written every
    ``SNAPSHOT_EVERY`` events so recovery replays only the tail.
    """

    def __init__(self, store_dir=None):
        self._lock = threading.Lock()
        self._state: dict[str, SequenceState] = {}
        self._dir = Path(store_dir) if store_dir is not None else None
        self._events_since_snapshot = 0
        if self._dir is not None:
            self._dir.mkdir(parents=True, exist_ok=True)
            self._recover()

    # ------------------------------------------------------------ reads

    def revision(self, sequence_id: str) -> int:
        with self._lock:
            return self._state.get(sequence_id, SequenceState()).revision

    def groups(self, sequence_id: str) -> dict[str, tuple[str, ...]]:
        with self._lock:
            state = self._state.get(sequence_id)
            return dict(state.groups) if state else {}

    def mode(self, sequence_id: str) -> str | None:
        with self._lock:
            state = self._state.get(sequence_id)
            return state.mode if state else None

    def annotated_sequence_ids(self) -> list[str]:
        with self._lock:
            return sorted(s for s, st in self._state.items() if st.groups)

    # ------------------------------------------------------------ writes

    def commit(self, sequence_id: str, member_uuids: list[str], mode: str,
               expected_revision: int, reassign: bool,
               valid_uuids: frozenset[str], annotator: str) -> tuple[int, str]:
        """Persist one identity group; returns (new revision, identity id)."""
        members = sorted(set(member_uuids))
        if not members:
            raise CommitRejected("identity group must not be empty")
        if mode not in MODES:
            raise CommitRejected(f"unknown mode {mode!r}")
        unknown = [u for u in members if u not in valid_uuids]
        if unknown:
            raise CommitRejected(
                f"uuids not in this sequence: {unknown}")
        with self._lock:
            state = self._state.setdefault(sequence_id, SequenceState())
            if expected_revision != state.revision:
                raise RevisionConflict(state.revision)
            taken = {u for uuids in state.groups.values() for u in uuids}
            overlap = sorted(set(members) & taken)
            if overlap and not reassign:
                raise CommitRejected(
                    f"uuids already committed to another identity: {overlap}"
                    " (pass reassign to move them)")
            event = {
                "event": "commit",
                "sequence_id": sequence_id,
                "revision": state.revision + 1,
                "member_uuids": members,
                "mode": mode,
                "reassign": bool(reassign),
                "annotator": annotator,
            }
            identity_id = self._apply(event)
            self._append_event(event)
            return state.revision, identity_id

    def _apply(self, event: dict) -> str:
        """Fold one commit event into the in-memory state (lock held)."""
        state = self._state.setdefault(event["sequence_id"], SequenceState())
        members = tuple(event["member_uuids"])
        if event["reassign"]:
            moved = set(members)
            for gid in list(state.groups):
                remainder = tuple(u for u in state.groups[gid]
                                  if u not in moved)
                if remainder:
                    state.groups[gid] = remainder
                else:
                    del state.groups[gid]
        identity_id = f"g{event['revision']:03d}"
        state.groups[identity_id] = members
        state.revision = event["revision"]
        state.mode = event["mode"]
        return identity_id

    # ------------------------------------------------------------ log

    def _append_event(self, event: dict) -> None:
        if self._dir is None:
            return
        with open(self._dir / EVENTS_FILE, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
        self._events_since_snapshot += 1
        if self._events_since_snapshot >= SNAPSHOT_EVERY:
            self._write_snapshot()

    def _write_snapshot(self) -> None:
        snapshot = {
            "format_version": STORE_VERSION,
            "sequences": {
                seq: {
                    "revision": st.revision,
                    "mode": st.mode,
                    "groups": {gid: list(u) for gid, u in st.groups.items()},
                }
                for seq, st in sorted(self._state.items())
            },
        }
        tmp = self._dir / (SNAPSHOT_FILE + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(snapshot, fh, sort_keys=True)
            fh.write("\n")
        tmp.replace(self._dir / SNAPSHOT_FILE)
        self._events_since_snapshot = 0

    def _recover(self) -> None:
        snap_path = self._dir / SNAPSHOT_FILE
        if snap_path.exists():
            with open(snap_path, encoding="utf-8") as fh:
                snapshot = json.load(fh)
            if snapshot.get("format_version") != STORE_VERSION:
                raise DataError(
                    f"snapshot {snap_path} has unsupported format_version "
                    f"{snapshot.get('format_version')!r}")
            for seq, st in snapshot["sequences"].items():
                self._state[seq] = SequenceState(
                    revision=st["revision"],
                    mode=st["mode"],
                    groups={gid: tuple(u) for gid, u in st["groups"].items()},
                )
        events_path = self._dir / EVENTS_FILE
        if events_path.exists():
            with open(events_path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    event = json.loads(line)
                    state = self._state.get(event["sequence_id"])
                    if state and event["revision"] <= state.revision:
                        continue  # already folded into the snapshot
                    self._apply(event)


# ---------------------------------------------------------------------------
# payload builders


def _sequence_summary(seq: PanelSequence, store: AnnotationStore) -> dict:
    groups = store.groups(seq.sequence_id)
    return {
        "sequence_id": seq.sequence_id,
        "series_id": seq.series_id,
        "n_panels": len(seq.panels),
        "n_instances": len(seq.instances),
        "n_identities": len(groups),
        "revision": store.revision(seq.sequence_id),
    }


def _annotations_payload(seq: PanelSequence, store: AnnotationStore) -> list[dict]:
    groups = store.groups(seq.sequence_id)
    if groups:
        return [{"identity_id": gid, "member_uuids": list(uuids)}
                for gid, uuids in sorted(groups.items())]
    if seq.annotations:
        return [{"identity_id": a.identity_id,
                 "member_uuids": sorted(a.member_uuids)}
                for a in sorted(seq.annotations, key=lambda a: a.identity_id)]
    return []


def _sequence_detail(seq: PanelSequence, store: AnnotationStore,
                     suggestions: dict[str, int] | None) -> dict:
    by_panel: dict[tuple[str, str], list] = {p: [] for p in seq.panels}
    for inst in seq.instances:
        by_panel.setdefault((inst.page_id, inst.panel_id), []).append(inst)
    panels = []
    for page_id, panel_id in seq.panels:
        bubbles = seq.speech_bubbles.get(f"{page_id}_{panel_id}", [])
        panels.append({
            "page_id": page_id,
            "panel_id": panel_id,
            "instances": [instance_to_record(i)
                          for i in by_panel[(page_id, panel_id)]],
            "speech_bubbles": bubbles,
        })
    payload = {
        "sequence_id": seq.sequence_id,
        "series_id": seq.series_id,
        "revision": store.revision(seq.sequence_id),
        "mode": store.mode(seq.sequence_id),
        "panels": panels,
        "annotations": _annotations_payload(seq, store),
    }
    if suggestions is not None:
        payload["suggestions"] = {u: int(label)
                                  for u, label in sorted(suggestions.items())}
    return payload


# ---------------------------------------------------------------------------
# app factory


class IdentityGroupBody(BaseModel):
    """POST /sequences/{id}/identities request body."""

    member_uuids: list[str]
    expected_revision: int
    mode: str = "multiple_character"
    reassign: bool = False


def create_app(data_dir, projector_path=None, store_path=None,
               static_dir=None, distance_threshold: float = 0.82):
    from fastapi import FastAPI, Header, HTTPException, Query
    from fastapi.responses import PlainTextResponse

    data_dir = Path(data_dir)
    instances = read_instances(data_dir / INSTANCES_FILE)
    sequences = read_sequences(data_dir / SEQUENCES_FILE, instances)
    sequences.sort(key=lambda s: s.sequence_id)
    seq_by_id = {s.sequence_id: s for s in sequences}

    projector = None
    features: dict[str, dict[str, np.ndarray]] = {}
    model_hash = None
    if projector_path is not None:
        projector = IdentityProjector.load(projector_path)
        from .model import read_embeddings

        features_path = data_dir / FEATURES_FILE
        if not features_path.exists():
            raise DataError(
                f"suggestions need features: {features_path} not found")
        features = embeddings_to_features(read_embeddings(features_path))
        flat = np.concatenate(
            [np.ravel(p) for _, p, _ in projector.parameters()])
        model_hash = stable_hash_floats(flat)

    store = AnnotationStore(store_path)
    cluster_cfg = ClusterConfig(distance_threshold=distance_threshold)
    suggestion_cache: dict[tuple[str, str], dict[str, int]] = {}

    app = FastAPI(title="sequence identity annotator")

    def _get_sequence(sequence_id: str) -> PanelSequence:
        seq = seq_by_id.get(sequence_id)
        if seq is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown sequence {sequence_id}")
        return seq

    def _suggestions(seq: PanelSequence) -> dict[str, int] | None:
        if projector is None:
            return None
        key = (seq.sequence_id, model_hash)
        if key not in suggestion_cache:
            suggestion_cache[key] = assign_identities(
                seq, features, projector, cluster_cfg)
        return suggestion_cache[key]

    @app.get("/sequences")
    def list_sequences(cursor: int = Query(default=0, ge=0),
                       limit: int = Query(default=20, ge=1, le=100)):
        page = sequences[cursor:cursor + limit]
        next_cursor = cursor + limit if cursor + limit < len(sequences) \
            else None
        return {
            "sequences": [_sequence_summary(s, store) for s in page],
            "next_cursor": next_cursor,
            "total": len(sequences),
        }

    @app.get("/sequences/{sequence_id}")
    def get_sequence(sequence_id: str):
        seq = _get_sequence(sequence_id)
        return _sequence_detail(seq, store, _suggestions(seq))

    @app.post("/sequences/{sequence_id}/identities")
    def commit_identity(sequence_id: str, body: IdentityGroupBody,
                        x_annotator: str = Header(default="anonymous")):
        seq = _get_sequence(sequence_id)
        valid = frozenset(i.instance_uuid for i in seq.instances)
        try:
            revision, identity_id = store.commit(
                sequence_id, body.member_uuids, body.mode,
                body.expected_revision, body.reassign, valid, x_annotator)
        except RevisionConflict as exc:
            raise HTTPException(
                status_code=409,
                detail={"error": str(exc), "revision": exc.current},
            ) from None
        except CommitRejected as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return {"sequence_id": sequence_id, "revision": revision,
                "identity_id": identity_id}

    @app.get("/export")
    def export_annotations():
        lines = []
        for sequence_id in store.annotated_sequence_ids():
            seq = seq_by_id.get(sequence_id)
            if seq is None:
                continue  # store may hold sequences from another corpus
            groups = store.groups(sequence_id)
            annotated = PanelSequence(
                sequence_id=seq.sequence_id,
                series_id=seq.series_id,
                panels=seq.panels,
                instances=seq.instances,
                annotations=[
                    IdentityAnnotation(gid, frozenset(uuids))
                    for gid, uuids in sorted(groups.items())
                ],
                speech_bubbles=seq.speech_bubbles,
            )
            lines.append(json.dumps(sequence_to_record(annotated),
                                    sort_keys=True))
        body = "".join(line + "\n" for line in lines)
        return PlainTextResponse(body, media_type="application/x-ndjson")

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True),
                  name="static")

    return app
