/**
 * Browser bootstrap: wires the client, selection state, view builder,
 * and canvas renderer into the page. All policy lives in the imported
 * modules; this file is DOM plumbing only.
 */

import { AnnotatorClient } from "./api.js";
import { SelectionState } from "./state.js";
import { buildView } from "./view.js";
import type { SequenceView } from "./view.js";
import { PANEL_SIZE, drawPanel, hitTest } from "./overlay.js";
import type { Transform } from "./overlay.js";
import type { AnnotationMode, SequenceDetail } from "./types.js";

const client = new AnnotatorClient(
  "", new URLSearchParams(location.search).get("annotator") ?? "anonymous");

const el = {
  list: document.getElementById("sequence-list") as HTMLUListElement,
  banner: document.getElementById("banner") as HTMLDivElement,
  notice: document.getElementById("notice") as HTMLDivElement,
  title: document.getElementById("sequence-title") as HTMLHeadingElement,
  panels: document.getElementById("panels") as HTMLDivElement,
  legend: document.getElementById("legend") as HTMLUListElement,
  suggestions: document.getElementById("suggestions") as HTMLUListElement,
  draft: document.getElementById("draft") as HTMLDivElement,
  commit: document.getElementById("commit") as HTMLButtonElement,
  clear: document.getElementById("clear-draft") as HTMLButtonElement,
  reassign: document.getElementById("reassign") as HTMLInputElement,
  exportLink: document.getElementById("export-link") as HTMLAnchorElement,
  modeInputs: Array.from(
    document.querySelectorAll<HTMLInputElement>("input[name=mode]")),
};

let detail: SequenceDetail | null = null;
let state: SelectionState | null = null;
let offending = new Set<string>();

function showBanner(message: string, retry: () => void): void {
  el.banner.textContent = "";
  el.banner.append(message + " ");
  const button = document.createElement("button");
  button.textContent = "retry";
  button.onclick = () => {
    el.banner.hidden = true;
    retry();
  };
  el.banner.append(button);
  el.banner.hidden = false;
}

function showNotice(message: string, kind: "info" | "warn"): void {
  el.notice.textContent = message;
  el.notice.className = kind;
  el.notice.hidden = false;
}

async function loadList(): Promise<void> {
  try {
    const page = await client.listSequences(0, 200);
    el.list.textContent = "";
    for (const s of page.sequences) {
      const item = document.createElement("li");
      const link = document.createElement("a");
      link.href = `#${s.sequence_id}`;
      link.textContent =
        `${s.sequence_id} — ${s.n_instances} boxes, rev ${s.revision}`;
      item.append(link);
      el.list.append(item);
    }
  } catch (err) {
    showBanner(`could not load sequences: ${String(err)}`, loadList);
  }
}

async function openSequence(sequenceId: string,
                            keepDraft = false): Promise<void> {
  try {
    const fresh = await client.getSequence(sequenceId);
    detail = fresh;
    if (keepDraft && state && state.sequenceId === sequenceId) {
      state.applyDetail(fresh);
    } else {
      state = SelectionState.fromDetail(fresh);
      offending = new Set();
    }
    render();
  } catch (err) {
    showBanner(`could not load ${sequenceId}: ${String(err)}`,
               () => void openSequence(sequenceId, keepDraft));
  }
}

function render(): void {
  if (!detail || !state) return;
  const view = buildView(detail, state, offending);
  el.title.textContent =
    `${view.sequenceId} (series ${detail.series_id}, rev ${view.revision})`;
  renderPanels(view);
  renderLegend(view);
  renderSuggestionLegend(view);
  renderDraft();
  el.exportLink.href = client.exportUrl();
  for (const input of el.modeInputs) {
    input.checked = input.value === state.mode;
  }
  el.reassign.checked = state.reassign;
}

function renderPanels(view: SequenceView): void {
  el.panels.textContent = "";
  if (view.empty) {
    const message = document.createElement("p");
    message.className = "empty-state";
    message.textContent = "This sequence has no character boxes to annotate.";
    el.panels.append(message);
    return;
  }
  view.panels.forEach((panel, index) => {
    const canvas = document.createElement("canvas");
    canvas.width = PANEL_SIZE;
    canvas.height = PANEL_SIZE;
    canvas.className = "panel";
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    const transform: Transform = drawPanel(ctx, panel);
    canvas.onclick = (event) => {
      const bounds = canvas.getBoundingClientRect();
      const hit = hitTest(panel,
        (event.clientX - bounds.left) * (canvas.width / bounds.width),
        (event.clientY - bounds.top) * (canvas.height / bounds.height),
        transform);
      if (hit?.uuid) onBoxClicked(hit.uuid);
    };
    const cell = document.createElement("figure");
    const caption = document.createElement("figcaption");
    caption.textContent = `panel ${index + 1}`;
    cell.append(canvas, caption);
    el.panels.append(cell);
  });
}

function renderLegend(view: SequenceView): void {
  el.legend.textContent = "";
  for (const entry of view.legend) {
    const item = document.createElement("li");
    const swatch = document.createElement("span");
    swatch.className = "swatch";
    swatch.style.background = entry.color;
    item.append(swatch,
      ` ${entry.identityId} (${entry.count} boxes)`);
    el.legend.append(item);
  }
  if (view.legend.length === 0) {
    const item = document.createElement("li");
    item.textContent = "no committed identities yet";
    el.legend.append(item);
  }
}

function renderSuggestionLegend(view: SequenceView): void {
  el.suggestions.textContent = "";
  for (const entry of view.suggestionLegend) {
    const item = document.createElement("li");
    const swatch = document.createElement("span");
    swatch.className = "swatch dashed";
    swatch.style.borderColor = entry.color;
    const accept = document.createElement("button");
    accept.textContent = "make draft";
    accept.onclick = () => {
      if (!state || !detail?.suggestions) return;
      const taken = state.acceptSuggestion(entry.label, detail.suggestions);
      showNotice(taken > 0
        ? `suggestion cluster ${entry.label} loaded as draft (${taken} boxes)`
        : `cluster ${entry.label} has no free boxes left`, "info");
      render();
    };
    item.append(swatch, ` cluster ${entry.label} (${entry.count}) `, accept);
    el.suggestions.append(item);
  }
  const heading = document.getElementById("suggestions-heading");
  if (heading) heading.hidden = view.suggestionLegend.length === 0;
}

function renderDraft(): void {
  if (!state) return;
  const n = state.draft.size;
  el.draft.textContent = n === 0
    ? "draft: empty — click boxes to select"
    : `draft: ${n} box${n === 1 ? "" : "es"} selected`;
  el.commit.disabled = n === 0;
}

function onBoxClicked(uuid: string): void {
  if (!state) return;
  const result = state.toggle(uuid);
  if (!result.ok) {
    const why = {
      "committed": "already committed — tick 'reassign' to move it",
      "panel-cap": "single-character mode allows one box per panel",
      "unknown-uuid": "box is not part of this sequence",
    }[result.reason];
    showNotice(why, "warn");
  } else {
    el.notice.hidden = true;
  }
  render();
}

async function onCommit(): Promise<void> {
  if (!state || !detail) return;
  offending = new Set();
  const pending = state.commitOptimistically();
  render(); // optimistic: group shows immediately
  const result = await client.commitIdentity(state.sequenceId,
                                             pending.request)
    .catch((err) => {
      showBanner(`commit failed: ${String(err)}`, () => void onCommit());
      return null;
    });
  if (result === null) {
    state.rollbackCommit(pending);
    render();
    return;
  }
  if (result.kind === "ok") {
    state.confirmCommit(pending, result.identityId, result.revision);
    showNotice(
      `committed ${result.identityId} at revision ${result.revision}`,
      "info");
    await openSequence(state.sequenceId, true);
    return;
  }
  state.rollbackCommit(pending);
  if (result.kind === "conflict") {
    showNotice(
      `another annotator updated this sequence (now revision `
      + `${result.currentRevision}); reloaded — your draft is intact`,
      "warn");
    await openSequence(state.sequenceId, true);
    return;
  }
  offending = new Set(pending.memberUuids);
  showNotice(`commit rejected: ${result.message}`, "warn");
  render();
}

el.commit.onclick = () => void onCommit();
el.clear.onclick = () => {
  state?.clearDraft();
  el.notice.hidden = true;
  render();
};
el.reassign.onchange = () => {
  if (state) state.reassign = el.reassign.checked;
};
for (const input of el.modeInputs) {
  input.onchange = () => {
    if (state && input.checked) {
      state.setMode(input.value as AnnotationMode);
      render();
    }
  };
}
window.onhashchange = () => {
  const id = location.hash.slice(1);
  if (id) void openSequence(id);
};

void loadList().then(() => {
  const id = location.hash.slice(1);
  if (id) void openSequence(id);
});
