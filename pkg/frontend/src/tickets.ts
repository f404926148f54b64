/** Conflict-ticket resolution: stale offline writes wait here for a human
 * decision — keep the server value or apply the client's payload as a fresh
 * versioned write.
 */

import type { Role } from "./types.js";

export interface TicketPayload {
  id: string;
  dataset_id: string;
  org_unit_id: string;
  period: string;
  client_id: string;
  client_seq: number;
  client_payload: Record<string, unknown>;
  client_base_version: number;
  server_revision: number;
  server_values: Record<string, { value: number; version: number; status: string }>;
  resolution: "PENDING" | "CLIENT_WINS" | "SERVER_WINS";
  created_at: string | null;
  resolved_by: string | null;
  resolved_at: string | null;
}

export class TicketItem {
  constructor(
    readonly ticket: TicketPayload,
    readonly viewerRole: Role,
  ) {}

  get pending(): boolean {
    return this.ticket.resolution === "PENDING";
  }

  /** Resolution is a manager decision, and only while the ticket is open. */
  canResolve(): boolean {
    return this.pending && this.viewerRole !== "ENUMERATOR_PIC";
  }

  resolveBody(resolution: "CLIENT_WINS" | "SERVER_WINS"): {
    ticket_id: string;
    resolution: string;
  } {
    return { ticket_id: this.ticket.id, resolution };
  }

  /** Side-by-side values for the decision UI. */
  comparison(): { elementId: string; server: number | null; client: number | null }[] {
    const payloadValues =
      (this.ticket.client_payload["values"] as
        | Record<string, number | { value: number }>
        | undefined) ?? {};
    const ids = new Set([
      ...Object.keys(this.ticket.server_values),
      ...Object.keys(payloadValues),
    ]);
    return [...ids].sort().map((elementId) => {
      const client = payloadValues[elementId];
      return {
        elementId,
        server: this.ticket.server_values[elementId]?.value ?? null,
        client:
          client === undefined
            ? null
            : typeof client === "number"
              ? client
              : client.value,
      };
    });
  }
}

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderTicket(item: TicketItem): string {
  const t = item.ticket;
  const rows = item
    .comparison()
    .map(
      (row) =>
        `<tr data-element="${esc(row.elementId)}"><td>${esc(row.elementId)}</td>` +
        `<td>${row.server ?? ""}</td><td>${row.client ?? ""}</td></tr>`,
    )
    .join("");
  const disabled = item.canResolve() ? "" : " disabled";
  return (
    `<article class="ticket" data-id="${esc(t.id)}" data-resolution="${t.resolution}">` +
    `<header>${esc(t.id)}: ${esc(t.dataset_id)} / ${esc(t.org_unit_id)} / ` +
    `${esc(t.period)} (client ${esc(t.client_id)})</header>` +
    `<table><thead><tr><th>element</th><th>server</th><th>client</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>` +
    `<footer><button name="SERVER_WINS"${disabled}>Keep server</button>` +
    `<button name="CLIENT_WINS"${disabled}>Apply client</button></footer></article>`
  );
}
