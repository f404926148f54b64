/** Conflict tickets end to end: a stale offline write becomes a PENDING
 * ticket, the manager compares both values and resolves it.
 */

import { beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { MemoryStorage, OfflineQueue } from "../src/offlineQueue.js";
import { Replica } from "../src/replica.js";
import { TicketItem, renderTicket } from "../src/tickets.js";
import { login } from "./helpers.js";

const DS = "ds-school";
const UNIT = "ou-jakbar-d2-s4";
const PIC = "u-pic-jakbar-d2-s4";
const PERIOD = "2021-05";

let pic: ApiClient;
let sudin: ApiClient;
let ticketId: string;

beforeAll(async () => {
  pic = await login(PIC);
  sudin = await login("u-sudin-jakbar");

  // two devices of the same enumerator, partitioned, editing one subject
  const replica = new Replica();
  const device1 = new OfflineQueue("tablet-1", PIC, new MemoryStorage());
  const device2 = new OfflineQueue("tablet-2", PIC, new MemoryStorage());
  const form = (served: number) => ({
    dataset: DS,
    org_unit: UNIT,
    period: PERIOD,
    values: { "el-school-served": served, "el-school-target": 200 },
  });
  device1.enqueueSubmit(form(150), replica, "2021-06-02T09:00:00+00:00");
  device2.enqueueSubmit(form(120), replica, "2021-06-02T10:00:00+00:00");

  const first = await device1.flush(pic);
  expect(first).toMatchObject({ applied: 1, conflict: 0 });
  const second = await device2.flush(pic);
  expect(second).toMatchObject({ applied: 0, conflict: 1 });

  const { tickets } = await sudin.syncTickets();
  expect(tickets.length).toBe(1);
  ticketId = tickets[0]!.id;
});

describe("conflict ticket resolution", () => {
  it("shows both values and lets a manager apply the client payload", async () => {
    const { tickets } = await sudin.syncTickets();
    const item = new TicketItem(tickets[0]!, "SUBOFFICE_MANAGER");
    expect(item.pending).toBe(true);
    expect(item.canResolve()).toBe(true);
    const rows = item.comparison();
    expect(rows.find((r) => r.elementId === "el-school-served")).toEqual({
      elementId: "el-school-served",
      server: 150,
      client: 120,
    });
    const html = renderTicket(item);
    expect(html).toContain('data-resolution="PENDING"');
    expect(html).toContain('<button name="CLIENT_WINS">');

    const { transition } = await sudin.syncResolve(item.resolveBody("CLIENT_WINS"));
    expect(transition.action).toBe("CONFLICT_APPLY");

    // the client value is now the live fact, at a fresh version
    const csv = await sudin.exportValues({ org: UNIT, from: PERIOD, to: PERIOD });
    const servedRow = csv.split("\n").find((l) => l.startsWith("el-school-served"));
    expect(servedRow).toBeDefined();
    const cols = servedRow!.split(",");
    expect(cols[3]).toBe("120");
    expect(cols[5]).toBe("2");
  });

  it("a resolved ticket cannot be resolved twice and PICs cannot resolve", async () => {
    await expect(
      sudin.syncResolve({ ticket_id: ticketId, resolution: "SERVER_WINS" }),
    ).rejects.toMatchObject({ code: "ALREADY_RESOLVED" });
    const { tickets } = await sudin.syncTickets();
    expect(tickets[0]!.resolution).toBe("CLIENT_WINS");
    const item = new TicketItem(tickets[0]!, "ENUMERATOR_PIC");
    expect(item.canResolve()).toBe(false);
    expect(renderTicket(item)).toContain("disabled");
  });
});
