/**
 * Scripted annotation session used by the integration test: drives the
 * same client, state machine, and view builder the browser UI uses,
 * against a live service, and reports what happened.
 *
 * Steps: open a sequence, build one identity draft (via the
 * accept-suggestion affordance when the service offers suggestions),
 * commit it, prove that a stale-revision writer gets a conflict, then
 * commit a second group after refreshing.
 */

import { AnnotatorClient } from "./api.js";
import { SelectionState } from "./state.js";
import { buildView } from "./view.js";

export interface SessionReport {
  sequenceId: string;
  revisions: number[];
  identityIds: string[];
  committedGroups: string[][];
  staleOutcome: string;
  staleCurrentRevision: number;
  usedSuggestion: boolean;
  legendColors: string[];
  exportLines: number;
}

function fail(message: string): never {
  throw new Error(`scripted session failed: ${message}`);
}

export async function runScriptedSession(baseUrl: string,
                                         annotator = "scripted"):
    Promise<SessionReport> {
  const client = new AnnotatorClient(baseUrl, annotator);

  const page = await client.listSequences(0, 50);
  const summary = page.sequences.find((s) => s.n_instances >= 4
    && s.revision === 0);
  if (!summary) fail("no untouched sequence with at least 4 instances");

  const detail = await client.getSequence(summary.sequence_id);
  const state = SelectionState.fromDetail(detail);

  // A second annotator opens the same sequence at the same revision.
  const rivalState = SelectionState.fromDetail(detail);

  const uuids = detail.panels
    .flatMap((p) => p.instances.map((i) => i.instance_uuid))
    .filter((u) => !state.committedUuids().has(u))
    .sort();
  if (uuids.length < 4) fail("not enough uncommitted instances");

  // Group 1: accept a model suggestion when available, else click two
  // boxes by hand.
  let usedSuggestion = false;
  if (detail.suggestions) {
    const counts = new Map<number, number>();
    for (const u of uuids) {
      const label = detail.suggestions[u];
      if (label !== undefined) {
        counts.set(label, (counts.get(label) ?? 0) + 1);
      }
    }
    // largest cluster that still leaves two boxes for the second group
    const best = [...counts.entries()]
      .filter(([, n]) => n >= 2 && n <= uuids.length - 2)
      .sort((a, b) => b[1] - a[1] || a[0] - b[0])[0];
    if (best) {
      usedSuggestion =
        state.acceptSuggestion(best[0], detail.suggestions) >= 2;
      if (!usedSuggestion) state.clearDraft();
    }
  }
  if (!usedSuggestion) {
    for (const u of uuids.slice(0, 2)) {
      const r = state.toggle(u);
      if (!r.ok) fail(`toggle refused: ${r.reason}`);
    }
  }

  const pending1 = state.commitOptimistically();
  const result1 = await client.commitIdentity(state.sequenceId,
                                              pending1.request);
  if (result1.kind !== "ok") fail(`first commit not accepted: ${result1.kind}`);
  state.confirmCommit(pending1, result1.identityId, result1.revision);

  // The rival, still at revision 0, tries to commit: must conflict.
  const rivalTargets = uuids.filter(
    (u) => !pending1.memberUuids.includes(u)).slice(0, 2);
  for (const u of rivalTargets) rivalState.toggle(u);
  const rivalPending = rivalState.commitOptimistically();
  const staleResult = await client.commitIdentity(rivalState.sequenceId,
                                                  rivalPending.request);
  if (staleResult.kind !== "conflict") {
    fail(`stale commit got ${staleResult.kind}, wanted conflict`);
  }
  rivalState.rollbackCommit(rivalPending);
  if (rivalState.draft.size !== rivalTargets.length) {
    fail("conflict rollback must preserve the draft");
  }

  // Conflict recovery: refresh from the service, draft survives, and
  // the rebased commit lands as revision 2.
  const refreshed = await client.getSequence(state.sequenceId);
  rivalState.applyDetail(refreshed);
  if (rivalState.revision !== result1.revision) {
    fail("refresh did not adopt the server revision");
  }
  if (rivalState.draft.size !== rivalTargets.length) {
    fail("refresh dropped un-conflicted draft members");
  }
  const pending2 = rivalState.commitOptimistically();
  const result2 = await client.commitIdentity(rivalState.sequenceId,
                                              pending2.request);
  if (result2.kind !== "ok") fail(`rebased commit not accepted: ${result2.kind}`);
  rivalState.confirmCommit(pending2, result2.identityId, result2.revision);

  // Render check: the final payload shows two committed identities in
  // two distinct colors.
  const final = await client.getSequence(state.sequenceId);
  const finalState = SelectionState.fromDetail(final);
  const view = buildView(final, finalState);
  if (view.legend.length < 2) fail("legend must list both identities");
  const colors = view.legend.map((e) => e.color);
  if (new Set(colors).size !== colors.length) {
    fail("committed identities must have distinct colors");
  }

  const exportText = await client.fetchExport();
  const exportLines = exportText.split("\n").filter((l) => l.trim()).length;

  return {
    sequenceId: state.sequenceId,
    revisions: [result1.revision, result2.revision],
    identityIds: [result1.identityId, result2.identityId],
    committedGroups: [pending1.memberUuids, pending2.memberUuids],
    staleOutcome: staleResult.kind,
    staleCurrentRevision: staleResult.currentRevision,
    usedSuggestion,
    legendColors: colors,
    exportLines,
  };
}
