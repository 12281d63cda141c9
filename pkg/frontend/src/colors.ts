/** Stable color assignment for committed identities and suggestion clusters. */

export const IDENTITY_PALETTE: readonly string[] = [
  "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4",
  "#f032e6", "#bfef45", "#fabed4", "#469990", "#9a6324", "#800000",
];

export const SUGGESTION_PALETTE: readonly string[] = [
  "#ffb300", "#00a3a3", "#7b68ee", "#ff6eb4", "#6b8e23", "#b8860b",
  "#5f9ea0", "#cd5c5c", "#9acd32", "#c71585", "#708090", "#20b2aa",
];

export const BUBBLE_COLOR = "#9e9e9e";
export const DRAFT_COLOR = "#111111";

function assign<K>(keys: readonly K[], palette: readonly string[],
                   order: (a: K, b: K) => number): Map<K, string> {
  const out = new Map<K, string>();
  const sorted = [...new Set(keys)].sort(order);
  sorted.forEach((key, i) => {
    out.set(key, palette[i % palette.length] as string);
  });
  return out;
}

/**
 * Color per committed identity id. Assignment is by sorted id, so it is
 * independent of render order, and server-assigned ids grow
 * lexicographically, so existing identities keep their color when a new
 * one is committed (within one palette cycle).
 */
export function identityColors(ids: readonly string[]): Map<string, string> {
  return assign(ids, IDENTITY_PALETTE, (a, b) => (a < b ? -1 : a > b ? 1 : 0));
}

/** Color per suggestion cluster label, stable under relabeling order. */
export function suggestionColors(labels: readonly number[]): Map<number, string> {
  return assign(labels, SUGGESTION_PALETTE, (a, b) => a - b);
}
