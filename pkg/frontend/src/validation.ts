/** Client-side mirrors of the server's correctness and completeness checks.
 * Advisory only: every server BLOCK is still rendered if the client missed it.
 */

import type { DatasetMeta, ElementMeta } from "./types.js";

export function parseCellValue(raw: string): number | null {
  const trimmed = raw.trim();
  if (trimmed === "") return null;
  const n = Number(trimmed);
  return Number.isFinite(n) ? n : NaN;
}

/** Returns an error message for a filled cell, or null when the value conforms. */
export function checkCorrect(raw: string, element: ElementMeta): string | null {
  const value = parseCellValue(raw);
  if (value === null) return null; // emptiness is completeness, not correctness
  if (Number.isNaN(value)) return "not a number";
  if (element.value_type === "NON_NEGATIVE_INTEGER") {
    if (!Number.isInteger(value)) return "must be a whole number";
    if (value < 0) return "must not be negative";
  }
  if (element.range) {
    const [lo, hi] = element.range;
    if (value < lo || value > hi) return `outside range [${lo}, ${hi}]`;
  }
  return null;
}

export function completenessRatio(
  dataset: DatasetMeta,
  entered: ReadonlyMap<string, number>,
): number {
  if (dataset.element_ids.length === 0) return 1;
  let n = 0;
  for (const eid of dataset.element_ids) if (entered.has(eid)) n += 1;
  return n / dataset.element_ids.length;
}
