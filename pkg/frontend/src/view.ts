/**
 * Pure view-model builder: folds the sequence payload and the selection
 * state into per-panel overlay boxes plus legends. The canvas renderer
 * and the DOM layer consume this without re-deriving any policy.
 */

import {
  BUBBLE_COLOR,
  DRAFT_COLOR,
  identityColors,
  suggestionColors,
} from "./colors.js";
import type { SelectionState } from "./state.js";
import type { SequenceDetail } from "./types.js";

export interface Rect {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export interface OverlayBox {
  uuid: string | null;
  kind: "face" | "body" | "bubble";
  rect: Rect;
  stroke: string;
  dashed: boolean;
  lineWidth: number;
  selected: boolean;
  committedId: string | null;
  suggestionLabel: number | null;
  offending: boolean;
}

export interface PanelView {
  pageId: string;
  panelId: string;
  boxes: OverlayBox[];
}

export interface LegendEntry {
  identityId: string;
  color: string;
  count: number;
}

export interface SuggestionLegendEntry {
  label: number;
  color: string;
  count: number;
}

export interface SequenceView {
  sequenceId: string;
  revision: number;
  empty: boolean;
  panels: PanelView[];
  legend: LegendEntry[];
  suggestionLegend: SuggestionLegendEntry[];
}

const NEUTRAL_STROKE = "#666666";
const OFFENDING_STROKE = "#d50000";

export function buildView(detail: SequenceDetail, state: SelectionState,
                          offending: Set<string> = new Set()): SequenceView {
  const groups = state.displayGroups();
  const idColors = identityColors([...groups.keys()]);
  const suggestions = detail.suggestions ?? {};
  const labelColors = suggestionColors(Object.values(suggestions));

  const panels: PanelView[] = detail.panels.map((panel) => {
    const boxes: OverlayBox[] = [];
    for (const inst of panel.instances) {
      const uuid = inst.instance_uuid;
      const committedId = state.displayGroupOf(uuid);
      const selected = state.draft.has(uuid);
      const label = committedId === null && uuid in suggestions
        ? (suggestions[uuid] as number) : null;

      let stroke = NEUTRAL_STROKE;
      let dashed = false;
      let lineWidth = 1.5;
      if (label !== null) {
        stroke = labelColors.get(label) as string;
        dashed = true;
      }
      if (committedId !== null) {
        stroke = idColors.get(committedId) as string;
        lineWidth = 2.5;
      }
      if (selected) {
        stroke = DRAFT_COLOR;
        dashed = false;
        lineWidth = 3.5;
      }
      if (offending.has(uuid)) {
        stroke = OFFENDING_STROKE;
        dashed = false;
        lineWidth = 4;
      }

      for (const [kind, box] of [["face", inst.face],
                                 ["body", inst.body]] as const) {
        if (box === null) continue;
        boxes.push({
          uuid,
          kind,
          rect: { x0: box.x0, y0: box.y0, x1: box.x1, y1: box.y1 },
          stroke,
          dashed,
          lineWidth,
          selected,
          committedId,
          suggestionLabel: label,
          offending: offending.has(uuid),
        });
      }
    }
    for (const [x0, y0, x1, y1] of panel.speech_bubbles) {
      boxes.push({
        uuid: null,
        kind: "bubble",
        rect: { x0, y0, x1, y1 },
        stroke: BUBBLE_COLOR,
        dashed: false,
        lineWidth: 1,
        selected: false,
        committedId: null,
        suggestionLabel: null,
        offending: false,
      });
    }
    return { pageId: panel.page_id, panelId: panel.panel_id, boxes };
  });

  const legend: LegendEntry[] = [...groups.entries()]
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
    .map(([identityId, members]) => ({
      identityId,
      color: idColors.get(identityId) as string,
      count: members.length,
    }));

  const counts = new Map<number, number>();
  for (const label of Object.values(suggestions)) {
    counts.set(label, (counts.get(label) ?? 0) + 1);
  }
  const suggestionLegend: SuggestionLegendEntry[] = [...counts.entries()]
    .sort(([a], [b]) => a - b)
    .map(([label, count]) => ({
      label,
      color: labelColors.get(label) as string,
      count,
    }));

  const empty = detail.panels.every((p) => p.instances.length === 0);
  return {
    sequenceId: detail.sequence_id,
    revision: state.revision,
    empty,
    panels,
    legend,
    suggestionLegend,
  };
}
