/**
 * Selection state machine for one sequence under annotation.
 *
 * Owns the identity draft (the set of boxes the annotator has clicked),
 * the committed groups mirrored from the service, and the revision
 * counter used for optimistic concurrency. Pure data + transitions; all
 * network and DOM concerns live elsewhere.
 */

import type { AnnotationMode, CommitRequest, SequenceDetail } from "./types.js";

export type ToggleResult =
  | { ok: true; added: boolean }
  | { ok: false; reason: "committed" | "panel-cap" | "unknown-uuid" };

export interface PendingCommit {
  provisionalId: string;
  memberUuids: string[];
  request: CommitRequest;
}

let provisionalCounter = 0;

export class SelectionState {
  readonly sequenceId: string;
  mode: AnnotationMode = "multiple_character";
  /** Move clicked-on committed members into the next group instead of rejecting. */
  reassign = false;
  revision = 0;
  draft = new Set<string>();
  /** identity id -> member uuids committed to the annotation store. */
  committed = new Map<string, string[]>();
  /**
   * Prior annotations shipped with the dataset, shown for context on a
   * sequence nobody has committed to yet (revision 0). Unlike committed
   * groups they do not lock their members: the service accepts any
   * first commit, so the UI must too.
   */
  reference = new Map<string, string[]>();
  private panelOf = new Map<string, string>();

  constructor(sequenceId: string) {
    this.sequenceId = sequenceId;
  }

  /** Build state from a sequence payload, preserving nothing. */
  static fromDetail(detail: SequenceDetail): SelectionState {
    const state = new SelectionState(detail.sequence_id);
    state.applyDetail(detail);
    if (detail.mode === "single_character") state.mode = detail.mode;
    return state;
  }

  /**
   * Adopt the server's view of the sequence. The draft survives a
   * refresh, minus any uuids that were committed in the meantime, so a
   * conflict never costs the annotator their selection.
   */
  applyDetail(detail: SequenceDetail): void {
    this.revision = detail.revision;
    const groups: [string, string[]][] =
      detail.annotations.map((g) => [g.identity_id, [...g.member_uuids]]);
    if (detail.revision > 0) {
      this.committed = new Map(groups);
      this.reference = new Map();
    } else {
      this.committed = new Map();
      this.reference = new Map(groups);
    }
    this.panelOf = new Map();
    for (const panel of detail.panels) {
      const key = `${panel.page_id}|${panel.panel_id}`;
      for (const inst of panel.instances) {
        this.panelOf.set(inst.instance_uuid, key);
      }
    }
    const taken = this.committedUuids();
    this.draft = new Set([...this.draft].filter(
      (u) => this.panelOf.has(u) && !taken.has(u)));
  }

  committedUuids(): Set<string> {
    const out = new Set<string>();
    for (const members of this.committed.values()) {
      for (const u of members) out.add(u);
    }
    return out;
  }

  committedGroupOf(uuid: string): string | null {
    for (const [id, members] of this.committed) {
      if (members.includes(uuid)) return id;
    }
    return null;
  }

  /** Groups to display: store commits when any exist, else the
   * dataset's prior annotations. */
  displayGroups(): Map<string, string[]> {
    return this.committed.size > 0 ? this.committed : this.reference;
  }

  displayGroupOf(uuid: string): string | null {
    for (const [id, members] of this.displayGroups()) {
      if (members.includes(uuid)) return id;
    }
    return null;
  }

  setMode(mode: AnnotationMode): void {
    if (mode !== this.mode) {
      this.mode = mode;
      this.draft.clear();
    }
  }

  /**
   * Click on a box. Clicking a drafted uuid always deselects it.
   * Selecting is refused for committed members (unless reassign is on)
   * and, in single-character mode, for a second box in the same panel.
   */
  toggle(uuid: string): ToggleResult {
    if (this.draft.has(uuid)) {
      this.draft.delete(uuid);
      return { ok: true, added: false };
    }
    if (!this.panelOf.has(uuid)) {
      return { ok: false, reason: "unknown-uuid" };
    }
    if (!this.reassign && this.committedGroupOf(uuid) !== null) {
      return { ok: false, reason: "committed" };
    }
    if (this.mode === "single_character" && this.panelTaken(uuid)) {
      return { ok: false, reason: "panel-cap" };
    }
    this.draft.add(uuid);
    return { ok: true, added: true };
  }

  private panelTaken(uuid: string): boolean {
    const panel = this.panelOf.get(uuid);
    for (const drafted of this.draft) {
      if (this.panelOf.get(drafted) === panel) return true;
    }
    return false;
  }

  /**
   * One click on a suggestion cluster replaces the draft with that
   * cluster's not-yet-committed members (capped to one per panel in
   * single-character mode).
   */
  acceptSuggestion(label: number,
                   suggestions: Record<string, number>): number {
    this.draft.clear();
    const taken = this.reassign ? new Set<string>() : this.committedUuids();
    const uuids = Object.keys(suggestions).sort()
      .filter((u) => suggestions[u] === label
        && this.panelOf.has(u) && !taken.has(u));
    for (const uuid of uuids) {
      if (this.mode === "single_character" && this.panelTaken(uuid)) continue;
      this.draft.add(uuid);
    }
    return this.draft.size;
  }

  clearDraft(): void {
    this.draft.clear();
  }

  /**
   * Optimistically move the draft into a provisional committed group and
   * produce the request to send. The caller settles it with
   * resolveCommit once the service answers.
   */
  commitOptimistically(): PendingCommit {
    if (this.draft.size === 0) {
      throw new Error("cannot commit an empty identity draft");
    }
    const memberUuids = [...this.draft].sort();
    const request: CommitRequest = {
      member_uuids: memberUuids,
      expected_revision: this.revision,
      mode: this.mode,
      reassign: this.reassign,
    };
    const provisionalId = `pending-${++provisionalCounter}`;
    if (this.reassign) this.removeMembers(memberUuids);
    this.committed.set(provisionalId, memberUuids);
    this.draft.clear();
    return { provisionalId, memberUuids, request };
  }

  /** Service accepted: adopt the real identity id and revision. */
  confirmCommit(pending: PendingCommit, identityId: string,
                revision: number): void {
    this.committed.delete(pending.provisionalId);
    this.committed.set(identityId, pending.memberUuids);
    this.revision = revision;
  }

  /** Service refused (409/422): roll back and restore the draft. */
  rollbackCommit(pending: PendingCommit): void {
    this.committed.delete(pending.provisionalId);
    this.draft = new Set(pending.memberUuids);
  }

  private removeMembers(uuids: string[]): void {
    const moving = new Set(uuids);
    for (const [id, members] of [...this.committed]) {
      const kept = members.filter((u) => !moving.has(u));
      if (kept.length === 0) this.committed.delete(id);
      else if (kept.length !== members.length) this.committed.set(id, kept);
    }
  }
}
