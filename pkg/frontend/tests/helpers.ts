/** Shared payload builders for the unit tests. */

import type {
  BoxRecord,
  InstanceRecord,
  PanelPayload,
  SequenceDetail,
} from "../src/types.js";

export function box(kind: "face" | "body", x0 = 10, y0 = 10,
                    x1 = 50, y1 = 50): BoxRecord {
  return { kind, index: 0, x0, y0, x1, y1, score: 0.99, char_index: 0 };
}

export function instance(uuid: string, pageId: string, panelId: string,
                         opts: { face?: BoxRecord | null;
                                 body?: BoxRecord | null } = {}):
    InstanceRecord {
  return {
    instance_uuid: uuid,
    char_index: 0,
    series_id: "s1",
    page_id: pageId,
    panel_id: panelId,
    face: opts.face === undefined ? box("face") : opts.face,
    body: opts.body === undefined ? null : opts.body,
  };
}

export function panel(pageId: string, panelId: string,
                      instances: InstanceRecord[],
                      bubbles: [number, number, number, number][] = []):
    PanelPayload {
  return {
    page_id: pageId,
    panel_id: panelId,
    instances,
    speech_bubbles: bubbles,
  };
}

/** Four panels, one instance per panel (u1..u4), no annotations. */
export function detailFixture(overrides: Partial<SequenceDetail> = {}):
    SequenceDetail {
  return {
    sequence_id: "seq-1",
    series_id: "s1",
    revision: 0,
    mode: null,
    panels: [
      panel("1", "1", [instance("u1", "1", "1")]),
      panel("1", "2", [instance("u2", "1", "2")]),
      panel("1", "3", [instance("u3", "1", "3")]),
      panel("1", "4", [instance("u4", "1", "4")]),
    ],
    annotations: [],
    ...overrides,
  };
}

export function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
