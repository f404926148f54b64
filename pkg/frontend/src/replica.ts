/** Pull-fed local view: the latest change event per form subject. Drives the
 * review queue and gives the offline queue its base revisions.
 */

import type { ChangeEvent } from "./types.js";

export type SubjectKey = string; // `${dataset}|${orgUnit}|${period}`

export function subjectKey(dataset: string, orgUnit: string, period: string): SubjectKey {
  return `${dataset}|${orgUnit}|${period}`;
}

export class Replica {
  readonly forms = new Map<SubjectKey, ChangeEvent>();
  cursor = 0;

  applyPull(changes: ChangeEvent[], cursor: number): void {
    for (const event of changes) {
      const key = subjectKey(event.dataset_id, event.org_unit_id, event.period);
      const existing = this.forms.get(key);
      if (!existing || event.revision >= existing.revision) this.forms.set(key, event);
    }
    this.cursor = Math.max(this.cursor, cursor);
  }

  revisionOf(key: SubjectKey): number {
    return this.forms.get(key)?.revision ?? 0;
  }
}
