/** Dashboard pivot model: dimension pickers mirroring the analytics query,
 * a grid whose cells are exactly the endpoint's values, and a line trend.
 */

import type { AnalyticsParams } from "./api.js";
import type { AnalyticsTablePayload } from "./types.js";

export type Dim = "ORG_UNIT" | "PERIOD" | "ELEMENT" | "INDICATOR";

export interface PivotSelection {
  rows: Dim;
  columns: Dim;
  rowMembers: string[];
  columnMembers: string[];
  filters: Partial<Record<"org_unit" | "period" | "element" | "indicator", string>>;
  minStatus?: string;
}

/** Client-side guard matching the server's InvalidQuery conditions. */
export function selectionError(sel: PivotSelection): string | null {
  if (sel.rows === sel.columns) return "rows and columns must differ";
  const dims = new Set([sel.rows, sel.columns]);
  if (dims.has("ELEMENT") && dims.has("INDICATOR")) {
    return "pick either elements or indicators, not both";
  }
  if (!dims.has("ORG_UNIT") && !sel.filters.org_unit) return "missing org unit filter";
  if (!dims.has("PERIOD") && !sel.filters.period) return "missing period filter";
  if (!dims.has("ELEMENT") && !dims.has("INDICATOR")
      && !sel.filters.element && !sel.filters.indicator) {
    return "missing element or indicator filter";
  }
  if (sel.rowMembers.length === 0 || sel.columnMembers.length === 0) {
    return "both axes need at least one member";
  }
  return null;
}

export function toQueryParams(sel: PivotSelection): AnalyticsParams {
  const err = selectionError(sel);
  if (err) throw new Error(err);
  return {
    rows: sel.rows,
    columns: sel.columns,
    row_members: sel.rowMembers.join(","),
    column_members: sel.columnMembers.join(","),
    ...(sel.filters.org_unit ? { org_unit: sel.filters.org_unit } : {}),
    ...(sel.filters.period ? { period: sel.filters.period } : {}),
    ...(sel.filters.element ? { element: sel.filters.element } : {}),
    ...(sel.filters.indicator ? { indicator: sel.filters.indicator } : {}),
    ...(sel.minStatus ? { min_status: sel.minStatus } : {}),
  };
}

export class DashboardModel {
  constructor(readonly payload: AnalyticsTablePayload) {}

  /** Banner stating the visibility floor, shown when the server forced it. */
  bannerText(): string | null {
    if (!this.payload.floor_forced) return null;
    return `Public view: showing ${this.payload.min_status} data only`;
  }

  cellText(value: number | null): string {
    return value === null ? "" : String(value);
  }

  /** Series for the line trend: one grid row across the column axis. */
  trend(rowKey: string): { x: string; y: number | null }[] {
    const i = this.payload.row_keys.indexOf(rowKey);
    if (i < 0) throw new Error(`no row ${rowKey}`);
    const row = this.payload.cells[i]!;
    return this.payload.column_keys.map((x, j) => ({ x, y: row[j] ?? null }));
  }
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Grid renderer; cells carry data attributes so tests (and the browser
 * shell) can read the value the user sees. */
export function renderGrid(model: DashboardModel): string {
  const p = model.payload;
  const head = p.column_keys
    .map((k) => `<th scope="col">${escapeHtml(k)}</th>`)
    .join("");
  const body = p.row_keys
    .map((rowKey, i) => {
      const cells = p.column_keys
        .map((colKey, j) => {
          const value = p.cells[i]?.[j] ?? null;
          return (
            `<td data-row="${escapeHtml(rowKey)}" data-col="${escapeHtml(colKey)}"` +
            ` data-value="${value === null ? "" : value}">` +
            `${escapeHtml(model.cellText(value))}</td>`
          );
        })
        .join("");
      return `<tr><th scope="row">${escapeHtml(rowKey)}</th>${cells}</tr>`;
    })
    .join("");
  const banner = model.bannerText();
  return (
    (banner ? `<p class="floor-banner">${escapeHtml(banner)}</p>` : "") +
    `<table class="pivot"><thead><tr><th>${escapeHtml(p.rows.toLowerCase())}</th>` +
    `${head}</tr></thead><tbody>${body}</tbody></table>`
  );
}

/** Extracts the rendered cell values back out of the grid HTML. */
export function readRenderedCells(html: string): Map<string, string> {
  const out = new Map<string, string>();
  const re = /<td data-row="([^"]*)" data-col="([^"]*)" data-value="([^"]*)">/g;
  let m: RegExpExecArray | null;
  while ((m = re.exec(html)) !== null) {
    out.set(`${m[1]}|${m[2]}`, m[3]!);
  }
  return out;
}

export function renderTrend(points: { x: string; y: number | null }[]): string {
  const present = points.filter((p) => p.y !== null) as { x: string; y: number }[];
  if (present.length === 0) return `<svg class="trend" viewBox="0 0 300 100"></svg>`;
  const ys = present.map((p) => p.y);
  const max = Math.max(...ys, 1);
  const step = 300 / Math.max(points.length - 1, 1);
  const coords = points
    .map((p, i) => (p.y === null ? null : `${i * step},${100 - (p.y / max) * 90}`))
    .filter((c): c is string => c !== null)
    .join(" ");
  return (
    `<svg class="trend" viewBox="0 0 300 100">` +
    `<polyline fill="none" stroke="currentColor" points="${coords}"></polyline></svg>`
  );
}
