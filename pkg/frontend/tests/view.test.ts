import { describe, expect, it } from "vitest";

import { BUBBLE_COLOR, DRAFT_COLOR } from "../src/colors.js";
import { SelectionState } from "../src/state.js";
import { buildView } from "../src/view.js";
import { box, detailFixture, instance, panel } from "./helpers.js";

describe("buildView", () => {
  it("renders two committed identities in two distinct colors", () => {
    const detail = detailFixture({
      revision: 2,
      annotations: [
        { identity_id: "g001", member_uuids: ["u1", "u2"] },
        { identity_id: "g002", member_uuids: ["u3"] },
      ],
    });
    const view = buildView(detail, SelectionState.fromDetail(detail));
    expect(view.legend.map((e) => e.identityId)).toEqual(["g001", "g002"]);
    const colors = view.legend.map((e) => e.color);
    expect(new Set(colors).size).toBe(2);
    const byUuid = new Map(view.panels.flatMap(
      (p) => p.boxes.filter((b) => b.uuid !== null)
        .map((b) => [b.uuid, b] as const)));
    expect(byUuid.get("u1")?.stroke).toBe(colors[0]);
    expect(byUuid.get("u3")?.stroke).toBe(colors[1]);
    expect(byUuid.get("u1")?.dashed).toBe(false);
    expect(byUuid.get("u4")?.committedId).toBeNull();
  });

  it("renders suggestion labels {0,0,1} as two dashed colors", () => {
    const detail = detailFixture({ suggestions: { u1: 0, u2: 0, u3: 1 } });
    const view = buildView(detail, SelectionState.fromDetail(detail));
    const dashed = view.panels.flatMap(
      (p) => p.boxes.filter((b) => b.dashed));
    expect(dashed).toHaveLength(3);
    expect(new Set(dashed.map((b) => b.stroke)).size).toBe(2);
    expect(view.suggestionLegend).toHaveLength(2);
    expect(view.suggestionLegend.map((e) => e.count)).toEqual([2, 1]);
  });

  it("committed color wins over a suggestion on the same box", () => {
    const detail = detailFixture({
      revision: 1,
      annotations: [{ identity_id: "g001", member_uuids: ["u1"] }],
      suggestions: { u1: 0, u2: 0 },
    });
    const view = buildView(detail, SelectionState.fromDetail(detail));
    const u1 = view.panels.flatMap((p) => p.boxes)
      .find((b) => b.uuid === "u1");
    expect(u1?.dashed).toBe(false);
    expect(u1?.suggestionLabel).toBeNull();
  });

  it("flags an empty sequence", () => {
    const detail = detailFixture({
      panels: [panel("1", "1", []), panel("1", "2", [])],
    });
    const view = buildView(detail, SelectionState.fromDetail(detail));
    expect(view.empty).toBe(true);
    expect(view.legend).toEqual([]);
  });

  it("highlights drafted boxes", () => {
    const detail = detailFixture();
    const state = SelectionState.fromDetail(detail);
    state.toggle("u2");
    const view = buildView(detail, state);
    const u2 = view.panels.flatMap((p) => p.boxes)
      .find((b) => b.uuid === "u2");
    expect(u2?.selected).toBe(true);
    expect(u2?.stroke).toBe(DRAFT_COLOR);
    const u1 = view.panels.flatMap((p) => p.boxes)
      .find((b) => b.uuid === "u1");
    expect(u1?.selected).toBe(false);
  });

  it("marks offending boxes after a rejected commit", () => {
    const detail = detailFixture();
    const view = buildView(detail, SelectionState.fromDetail(detail),
                           new Set(["u3"]));
    const u3 = view.panels.flatMap((p) => p.boxes)
      .find((b) => b.uuid === "u3");
    expect(u3?.offending).toBe(true);
  });

  it("emits face and body boxes with the same uuid", () => {
    const detail = detailFixture({
      panels: [panel("1", "1", [
        instance("u1", "1", "1",
                 { face: box("face"), body: box("body", 0, 0, 90, 90) }),
      ])],
    });
    const view = buildView(detail, SelectionState.fromDetail(detail));
    const boxes = view.panels[0]!.boxes;
    expect(boxes.map((b) => b.kind).sort()).toEqual(["body", "face"]);
    expect(new Set(boxes.map((b) => b.uuid)).size).toBe(1);
  });

  it("passes speech bubbles through as non-clickable overlays", () => {
    const detail = detailFixture({
      panels: [panel("1", "1", [instance("u1", "1", "1")],
                     [[5, 5, 40, 20]])],
    });
    const view = buildView(detail, SelectionState.fromDetail(detail));
    const bubble = view.panels[0]!.boxes.find((b) => b.kind === "bubble");
    expect(bubble).toMatchObject({
      uuid: null,
      stroke: BUBBLE_COLOR,
      rect: { x0: 5, y0: 5, x1: 40, y1: 20 },
    });
  });

  it("shows prior dataset annotations as colored context at revision 0", () => {
    const detail = detailFixture({
      revision: 0,
      annotations: [
        { identity_id: "id000", member_uuids: ["u1"] },
        { identity_id: "id001", member_uuids: ["u2", "u3"] },
      ],
    });
    const view = buildView(detail, SelectionState.fromDetail(detail));
    expect(view.legend.map((e) => e.identityId)).toEqual(["id000", "id001"]);
    expect(new Set(view.legend.map((e) => e.color)).size).toBe(2);
  });

  it("reflects optimistic commits before the server answers", () => {
    const detail = detailFixture();
    const state = SelectionState.fromDetail(detail);
    state.toggle("u1");
    state.toggle("u2");
    state.commitOptimistically();
    const view = buildView(detail, state);
    expect(view.legend).toHaveLength(1);
    expect(view.legend[0]?.count).toBe(2);
  });
});
