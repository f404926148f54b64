/** Data-entry form state: per-cell live validation, completeness meter,
 * and the submit-enablement rule (no client-side blockers, form complete).
 */

import type { DatasetMeta, ElementMeta, Finding } from "./types.js";
import { checkCorrect, completenessRatio, parseCellValue } from "./validation.js";

export interface FormCell {
  elementId: string;
  label: string;
  raw: string;
  error: string | null; // live client-side validation
  serverError: string | null; // rendered verbatim from a 422 response
  flag: string | null; // non-blocking server finding (lateness, deviation)
  justification: string;
}

export class FormViewModel {
  readonly cells: Map<string, FormCell> = new Map();
  formError: string | null = null;

  constructor(
    readonly dataset: DatasetMeta,
    elements: ReadonlyMap<string, ElementMeta>,
    readonly orgUnitId: string,
    readonly period: string,
  ) {
    for (const eid of dataset.element_ids) {
      const meta = elements.get(eid);
      this.cells.set(eid, {
        elementId: eid,
        label: meta ? meta.name : eid,
        raw: "",
        error: null,
        serverError: null,
        flag: null,
        justification: "",
      });
    }
    this.elements = elements;
  }

  private readonly elements: ReadonlyMap<string, ElementMeta>;

  setValue(elementId: string, raw: string): void {
    const cell = this.cells.get(elementId);
    if (!cell) throw new Error(`element ${elementId} is not on this form`);
    cell.raw = raw;
    cell.serverError = null;
    const meta = this.elements.get(elementId);
    cell.error = meta ? checkCorrect(raw, meta) : null;
  }

  setJustification(elementId: string, text: string): void {
    const cell = this.cells.get(elementId);
    if (cell) cell.justification = text;
  }

  entered(): Map<string, number> {
    const out = new Map<string, number>();
    for (const cell of this.cells.values()) {
      const v = parseCellValue(cell.raw);
      if (v !== null && !Number.isNaN(v) && cell.error === null) out.set(cell.elementId, v);
    }
    return out;
  }

  /** The meter shown under the form; equals entered / total elements. */
  completeness(): number {
    return completenessRatio(this.dataset, this.entered());
  }

  blockers(): string[] {
    const out: string[] = [];
    for (const cell of this.cells.values()) {
      if (cell.error) out.push(`${cell.elementId}: ${cell.error}`);
      if (cell.serverError) out.push(`${cell.elementId}: ${cell.serverError}`);
    }
    if (this.completeness() < 1) out.push("form incomplete");
    return out;
  }

  /** Submit is enabled iff there are zero client-side blocking findings. */
  submitEnabled(): boolean {
    return this.blockers().length === 0;
  }

  payload(): {
    dataset: string;
    org_unit: string;
    period: string;
    values: Record<string, number | { value: number; justification?: string }>;
  } {
    const values: Record<string, number | { value: number; justification?: string }> = {};
    for (const [eid, v] of this.entered()) {
      const cell = this.cells.get(eid)!;
      values[eid] = cell.justification
        ? { value: v, justification: cell.justification }
        : v;
    }
    return {
      dataset: this.dataset.id,
      org_unit: this.orgUnitId,
      period: this.period,
      values,
    };
  }

  /** Renders server findings beside their cells, blocking or not. */
  applyServerFindings(findings: Finding[]): void {
    for (const finding of findings) {
      const cell = this.cells.get(finding.subject[0]);
      if (!cell) {
        this.formError = finding.message;
        continue;
      }
      if (finding.severity === "BLOCK") cell.serverError = finding.message;
      else cell.flag = finding.message;
    }
  }
}
