/**
 * Canvas geometry and drawing. The drawing functions take a minimal 2D
 * context interface so they can run against a recording fake in tests.
 */

import type { OverlayBox, PanelView, Rect } from "./view.js";

/** The slice of CanvasRenderingContext2D the renderer needs. */
export interface Context2D {
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  beginPath(): void;
  rect(x: number, y: number, w: number, h: number): void;
  stroke(): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
  setLineDash(segments: number[]): void;
  clearRect(x: number, y: number, w: number, h: number): void;
}

export interface Transform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

export const PANEL_SIZE = 360;
const MARGIN = 16;

/**
 * Uniform scale + offset that fits all boxes of a panel into a
 * size x size canvas with a margin, preserving aspect ratio.
 */
export function fitTransform(boxes: readonly { rect: Rect }[],
                             size: number = PANEL_SIZE): Transform {
  if (boxes.length === 0) {
    return { scale: 1, offsetX: MARGIN, offsetY: MARGIN };
  }
  let minX = Infinity, minY = Infinity, maxX = -Infinity, maxY = -Infinity;
  for (const { rect } of boxes) {
    minX = Math.min(minX, rect.x0);
    minY = Math.min(minY, rect.y0);
    maxX = Math.max(maxX, rect.x1);
    maxY = Math.max(maxY, rect.y1);
  }
  const extentX = Math.max(maxX - minX, 1);
  const extentY = Math.max(maxY - minY, 1);
  const usable = size - 2 * MARGIN;
  const scale = Math.min(usable / extentX, usable / extentY);
  return {
    scale,
    offsetX: MARGIN + (usable - extentX * scale) / 2 - minX * scale,
    offsetY: MARGIN + (usable - extentY * scale) / 2 - minY * scale,
  };
}

export function toCanvas(rect: Rect, t: Transform): Rect {
  return {
    x0: rect.x0 * t.scale + t.offsetX,
    y0: rect.y0 * t.scale + t.offsetY,
    x1: rect.x1 * t.scale + t.offsetX,
    y1: rect.y1 * t.scale + t.offsetY,
  };
}

export function fromCanvas(x: number, y: number,
                           t: Transform): { x: number; y: number } {
  return { x: (x - t.offsetX) / t.scale, y: (y - t.offsetY) / t.scale };
}

export function drawBox(ctx: Context2D, rect: Rect,
                        style: { stroke: string; dashed: boolean;
                                 lineWidth: number }): void {
  ctx.setLineDash(style.dashed ? [6, 4] : []);
  ctx.strokeStyle = style.stroke;
  ctx.lineWidth = style.lineWidth;
  ctx.beginPath();
  ctx.rect(rect.x0, rect.y0, rect.x1 - rect.x0, rect.y1 - rect.y0);
  ctx.stroke();
}

export function drawPanel(ctx: Context2D, panel: PanelView,
                          size: number = PANEL_SIZE): Transform {
  const t = fitTransform(panel.boxes, size);
  ctx.clearRect(0, 0, size, size);
  ctx.fillStyle = "#fcfcf8";
  ctx.fillRect(0, 0, size, size);
  // bubbles go underneath, then bodies, then faces on top
  const order: OverlayBox["kind"][] = ["bubble", "body", "face"];
  for (const kind of order) {
    for (const box of panel.boxes) {
      if (box.kind !== kind) continue;
      drawBox(ctx, toCanvas(box.rect, t), box);
    }
  }
  ctx.setLineDash([]);
  ctx.fillStyle = "#999999";
  ctx.font = "11px system-ui, sans-serif";
  ctx.fillText(`p.${panel.pageId} / ${panel.panelId}`, 6, size - 6);
  return t;
}

/**
 * Map a canvas click to the clickable box under it: smallest area wins,
 * so a face inside its body is selectable. Bubbles are not clickable.
 */
export function hitTest(panel: PanelView, canvasX: number, canvasY: number,
                        t: Transform): OverlayBox | null {
  const { x, y } = fromCanvas(canvasX, canvasY, t);
  let best: OverlayBox | null = null;
  let bestArea = Infinity;
  for (const box of panel.boxes) {
    if (box.uuid === null) continue;
    const { x0, y0, x1, y1 } = box.rect;
    if (x < x0 || x > x1 || y < y0 || y > y1) continue;
    const area = (x1 - x0) * (y1 - y0);
    if (area < bestArea) {
      best = box;
      bestArea = area;
    }
  }
  return best;
}
