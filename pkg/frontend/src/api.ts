/** Thin typed client over the warehouse HTTP API. */

import type {
  AnalyticsTablePayload,
  ApiErrorBody,
  ChangeEvent,
  MetadataDoc,
  Role,
  ScorecardRow,
  SubmissionResult,
  SyncAck,
  TransitionPayload,
} from "./types.js";
import type { TicketPayload } from "./tickets.js";

export class ApiError extends Error {
  constructor(
    readonly code: string,
    readonly status: number,
    readonly details: ApiErrorBody["details"],
    message: string,
  ) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<never> {
  let body: ApiErrorBody;
  try {
    body = (await resp.json()) as ApiErrorBody;
  } catch {
    throw new ApiError("UNKNOWN", resp.status, {}, `HTTP ${resp.status}`);
  }
  throw new ApiError(body.code, body.http_status, body.details ?? {}, body.message);
}

export interface AnalyticsParams {
  rows: string;
  columns: string;
  row_members: string;
  column_members: string;
  org_unit?: string;
  period?: string;
  element?: string;
  indicator?: string;
  min_status?: string;
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    readonly token: string | null = null,
    readonly userId: string | null = null,
    readonly role: Role | null = null,
  ) {}

  static anonymous(baseUrl: string): ApiClient {
    return new ApiClient(baseUrl);
  }

  static async login(baseUrl: string, user: string, password: string): Promise<ApiClient> {
    const resp = await fetch(`${baseUrl}/auth`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ user, password }),
    });
    if (!resp.ok) await parseError(resp);
    const body = (await resp.json()) as { token: string; user_id: string; role: Role };
    return new ApiClient(baseUrl, body.token, body.user_id, body.role);
  }

  private headers(extra: Record<string, string> = {}): Record<string, string> {
    const out: Record<string, string> = { ...extra };
    if (this.token) out["authorization"] = `Bearer ${this.token}`;
    return out;
  }

  private async getJson<T>(path: string, params?: Record<string, string>): Promise<T> {
    const query = params ? `?${new URLSearchParams(params)}` : "";
    const resp = await fetch(`${this.baseUrl}${path}${query}`, { headers: this.headers() });
    if (!resp.ok) await parseError(resp);
    return (await resp.json()) as T;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const resp = await fetch(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: this.headers({ "content-type": "application/json" }),
      body: JSON.stringify(body),
    });
    if (!resp.ok) await parseError(resp);
    return (await resp.json()) as T;
  }

  metadata(): Promise<MetadataDoc> {
    return this.getJson("/metadata");
  }

  submitDataValueSet(body: {
    dataset: string;
    org_unit: string;
    period: string;
    values: Record<string, number | { value: number; justification?: string }>;
    submitted_at?: string;
  }): Promise<SubmissionResult> {
    return this.postJson("/datavaluesets", body);
  }

  review(body: {
    dataset: string;
    org_unit: string;
    period: string;
    action: string;
    reason?: string;
    justifications?: Record<string, string>;
  }): Promise<{ transition: TransitionPayload }> {
    return this.postJson("/reviews", body);
  }

  analytics(params: AnalyticsParams): Promise<AnalyticsTablePayload> {
    return this.getJson("/analytics", { ...params });
  }

  async analyticsCsv(params: AnalyticsParams): Promise<string> {
    const query = new URLSearchParams({ ...params, format: "csv" });
    const resp = await fetch(`${this.baseUrl}/analytics?${query}`, {
      headers: this.headers(),
    });
    if (!resp.ok) await parseError(resp);
    return await resp.text();
  }

  async syncPush(wireText: string): Promise<SyncAck[]> {
    const resp = await fetch(`${this.baseUrl}/sync/push`, {
      method: "POST",
      headers: this.headers({ "content-type": "application/octet-stream" }),
      body: wireText,
    });
    if (!resp.ok) await parseError(resp);
    const body = (await resp.json()) as { acks: SyncAck[] };
    return body.acks;
  }

  async syncPull(cursor: number): Promise<{ changes: ChangeEvent[]; cursor: number }> {
    return this.getJson("/sync/pull", { cursor: String(cursor) });
  }

  syncTickets(): Promise<{ tickets: TicketPayload[] }> {
    return this.getJson("/sync/tickets");
  }

  syncResolve(body: { ticket_id: string; resolution: string }): Promise<{
    transition: TransitionPayload;
  }> {
    return this.postJson("/sync/resolve", body);
  }

  scorecard(params: { dataset: string; org: string; period: string }): Promise<{
    dataset: string;
    period: string;
    rows: ScorecardRow[];
  }> {
    return this.getJson("/quality/scorecard", { ...params });
  }

  async exportValues(params: Record<string, string>): Promise<string> {
    const resp = await fetch(
      `${this.baseUrl}/export/values?${new URLSearchParams(params)}`,
      { headers: this.headers() },
    );
    if (!resp.ok) await parseError(resp);
    return await resp.text();
  }
}
