/** Offline entry queue: submissions survive connectivity loss and replay
 * idempotently through /sync/push on reconnect. Uses the sync wire format
 * unmodified, so the browser queue and the CLI simulator share a protocol.
 */

import type { ApiClient } from "./api.js";
import type { Replica } from "./replica.js";
import { subjectKey } from "./replica.js";
import type { SubmitPayload, WireRecord } from "./types.js";
import { encodeRecords } from "./wire.js";

/** localStorage-compatible slice; tests supply an in-memory map. */
export interface QueueStorage {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export class MemoryStorage implements QueueStorage {
  private readonly map = new Map<string, string>();
  getItem(key: string): string | null {
    return this.map.get(key) ?? null;
  }
  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }
}

interface QueueState {
  nextSeq: number;
  records: WireRecord[];
}

export interface FlushResult {
  flushed: boolean; // false when the network failed and the queue is intact
  applied: number;
  duplicate: number;
  conflict: number;
}

export class OfflineQueue {
  private readonly storageKey: string;

  constructor(
    readonly clientId: string,
    readonly userId: string,
    private readonly storage: QueueStorage = new MemoryStorage(),
  ) {
    this.storageKey = `spmdw-queue-${clientId}`;
  }

  private load(): QueueState {
    const raw = this.storage.getItem(this.storageKey);
    if (!raw) return { nextSeq: 1, records: [] };
    return JSON.parse(raw) as QueueState;
  }

  private save(state: QueueState): void {
    this.storage.setItem(this.storageKey, JSON.stringify(state));
  }

  depth(): number {
    return this.load().records.length;
  }

  enqueueSubmit(
    form: {
      dataset: string;
      org_unit: string;
      period: string;
      values: SubmitPayload["values"];
    },
    replica: Replica,
    submittedAt: string,
  ): WireRecord {
    const state = this.load();
    const key = subjectKey(form.dataset, form.org_unit, form.period);
    let base = replica.revisionOf(key);
    for (const queued of state.records) {
      const p = queued.payload;
      if (subjectKey(p.dataset_id, p.org_unit_id, p.period) === key) base += 1;
    }
    const record: WireRecord = {
      client_id: this.clientId,
      client_seq: state.nextSeq,
      payload: {
        kind: "submit",
        dataset_id: form.dataset,
        org_unit_id: form.org_unit,
        period: form.period,
        values: form.values,
        actor: this.userId,
        submitted_at: submittedAt,
      },
      base_version: base,
    };
    state.records.push(record);
    state.nextSeq += 1;
    this.save(state);
    return record;
  }

  /** Push the whole queue; on network failure the queue is left untouched
   * so a later flush retries the identical batch (server dedupes).
   */
  async flush(api: ApiClient): Promise<FlushResult> {
    const state = this.load();
    if (state.records.length === 0) {
      return { flushed: true, applied: 0, duplicate: 0, conflict: 0 };
    }
    let acks;
    try {
      acks = await api.syncPush(encodeRecords(state.records));
    } catch (err) {
      if (err instanceof TypeError) {
        return { flushed: false, applied: 0, duplicate: 0, conflict: 0 };
      }
      throw err; // API errors are real; surface them
    }
    const result: FlushResult = { flushed: true, applied: 0, duplicate: 0, conflict: 0 };
    for (const ack of acks) {
      if (ack.result === "APPLIED") result.applied += 1;
      else if (ack.result === "DUPLICATE") result.duplicate += 1;
      else result.conflict += 1;
    }
    this.save({ nextSeq: state.nextSeq, records: [] });
    return result;
  }
}
