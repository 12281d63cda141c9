"""
The annotation review service
=============================

The HTTP service exposes sequences for review: an annotator browses
panels, groups instances into identities, and commits each group with
an optimistic revision check so concurrent editors can never overwrite
each other. Committed sequences export as training-ready JSONL.
"""

import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from comicreid.service import create_app
from comicreid.synth import SynthConfig, generate, write_dataset

tmp = Path(tempfile.mkdtemp(prefix="annotator-"))
dataset = generate(SynthConfig(identities=6, series=2, panels_per_series=8,
                               signal_dim=8, noise_dim=4, seed=11))
write_dataset(dataset, tmp / "data")

app = create_app(tmp / "data", store_path=tmp / "store")
client = TestClient(app)

# Browse the sequence list (paged).
page = client.get("/sequences", params={"limit": 3}).json()
print("total sequences:", page["total"])
print("first page:", [s["sequence_id"] for s in page["sequences"]])
print("next cursor:", page["next_cursor"])

# Open one sequence: panels with their detections, plus any existing
# annotations.
seq_id = page["sequences"][0]["sequence_id"]
detail = client.get(f"/sequences/{seq_id}").json()
uuids = [inst["instance_uuid"]
         for panel in detail["panels"] for inst in panel["instances"]]
print(f"\n{seq_id}: {len(detail['panels'])} panels,",
      f"{len(uuids)} instances,",
      f"{len(detail['annotations'])} annotation groups")

# Commit an identity group. The expected_revision starts at 0 for an
# untouched sequence; the server assigns the group id.
resp = client.post(
    f"/sequences/{seq_id}/identities",
    json={"member_uuids": uuids[:2], "expected_revision": 0},
    headers={"X-Annotator": "demo"})
print("\ncommit #1:", resp.status_code, resp.json())

# A second writer who still believes the revision is 0 gets a 409 and
# the current revision to rebase on.
stale = client.post(
    f"/sequences/{seq_id}/identities",
    json={"member_uuids": uuids[2:3], "expected_revision": 0})
print("stale commit:", stale.status_code, stale.json()["detail"])

# Rebased on the fresh revision, it lands.
current = stale.json()["detail"]["revision"]
resp = client.post(
    f"/sequences/{seq_id}/identities",
    json={"member_uuids": uuids[2:3], "expected_revision": current})
print("rebased commit:", resp.status_code, resp.json())

# Export: only committed sequences appear, as training-ready JSONL.
export = client.get("/export")
lines = [json.loads(l) for l in export.text.splitlines()]
print("\nexport:", len(lines), "sequence record(s)")
print("groups in export:",
      [sorted(g["identity_id"] for g in rec["annotations"])
       for rec in lines])

# The store is an append-only event log: reopening the app replays it
# and serves the same state.
reopened = TestClient(create_app(tmp / "data", store_path=tmp / "store"))
again = reopened.get(f"/sequences/{seq_id}").json()
print("after reopen, annotation groups:",
      sorted(a["identity_id"] for a in again["annotations"]))

import shutil

shutil.rmtree(tmp)
