/** Review queue: pending forms with their deviation flags and justification
 * prompts. Action buttons follow the server's transition legality exactly;
 * VALIDATE stays disabled until every flagged value has justification text.
 */

import type { Replica } from "./replica.js";
import type { ChangeEvent, ReviewAction, Role, Status } from "./types.js";

/** Mirror of the server's legality table (phase policies share it). */
export function legalTransitions(status: Status, role: Role): ReviewAction[] {
  const actions: ReviewAction[] = [];
  if (status === "SUBMITTED") {
    if (role === "SUBOFFICE_MANAGER" || role === "ADMIN") actions.push("VERIFY");
    if (role === "SUBOFFICE_MANAGER" || role === "DEPARTMENT_MANAGER" || role === "ADMIN") {
      actions.push("REJECT");
    }
  } else if (status === "VERIFIED") {
    if (role === "DEPARTMENT_MANAGER" || role === "ADMIN") {
      actions.push("VALIDATE", "REJECT");
    }
  } else if (status === "VALIDATED") {
    if (role === "DEPARTMENT_MANAGER" || role === "ADMIN") actions.push("PUBLISH");
  }
  return actions;
}

export interface DeviationFlag {
  elementId: string;
  value: number;
  justification: string; // text box content, editable
  preJustified: boolean; // justification already attached server-side
}

export interface ActionControl {
  action: ReviewAction;
  enabled: boolean;
  hint: string | null;
}

export class ReviewQueueItem {
  readonly deviations: DeviationFlag[];
  reason = "";

  constructor(
    readonly event: ChangeEvent,
    readonly viewerRole: Role,
  ) {
    this.deviations = Object.entries(event.values)
      .filter(([, v]) => v.deviation_flagged)
      .map(([elementId, v]) => ({
        elementId,
        value: v.value,
        justification: v.justification ?? "",
        preJustified: Boolean(v.justification),
      }))
      .sort((a, b) => a.elementId.localeCompare(b.elementId));
  }

  get subject(): { dataset: string; org_unit: string; period: string } {
    return {
      dataset: this.event.dataset_id,
      org_unit: this.event.org_unit_id,
      period: this.event.period,
    };
  }

  get status(): Status {
    return this.event.status;
  }

  setJustification(elementId: string, text: string): void {
    const flag = this.deviations.find((d) => d.elementId === elementId);
    if (flag) flag.justification = text;
  }

  unjustified(): DeviationFlag[] {
    return this.deviations.filter((d) => d.justification.trim() === "");
  }

  /** Buttons shown exactly per legality; VALIDATE additionally gated on
   * justification coverage, REJECT on a non-empty reason. */
  actions(): ActionControl[] {
    return legalTransitions(this.status, this.viewerRole).map((action) => {
      if (action === "VALIDATE" && this.unjustified().length > 0) {
        return {
          action,
          enabled: false,
          hint: `${this.unjustified().length} deviated value(s) still need justification`,
        };
      }
      if (action === "REJECT" && this.reason.trim() === "") {
        return { action, enabled: false, hint: "a rejection reason is required" };
      }
      return { action, enabled: true, hint: null };
    });
  }

  isEnabled(action: ReviewAction): boolean {
    return this.actions().some((a) => a.action === action && a.enabled);
  }

  reviewBody(action: ReviewAction): {
    dataset: string;
    org_unit: string;
    period: string;
    action: ReviewAction;
    reason?: string;
    justifications?: Record<string, string>;
  } {
    const justifications: Record<string, string> = {};
    for (const d of this.deviations) {
      if (!d.preJustified && d.justification.trim() !== "") {
        justifications[d.elementId] = d.justification.trim();
      }
    }
    return {
      ...this.subject,
      action,
      ...(this.reason.trim() ? { reason: this.reason.trim() } : {}),
      ...(Object.keys(justifications).length ? { justifications } : {}),
    };
  }
}

/** Forms awaiting review in the viewer's scope, newest first. */
export function buildReviewQueue(
  replica: Replica,
  viewerRole: Role,
  statuses: Status[] = ["SUBMITTED", "VERIFIED"],
): ReviewQueueItem[] {
  const items: ReviewQueueItem[] = [];
  for (const event of replica.forms.values()) {
    if (statuses.includes(event.status)) {
      items.push(new ReviewQueueItem(event, viewerRole));
    }
  }
  items.sort((a, b) => b.event.server_seq - a.event.server_seq);
  return items;
}
