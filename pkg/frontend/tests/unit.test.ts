import { describe, expect, it } from "vitest";

import {
  DashboardModel,
  readRenderedCells,
  renderGrid,
  renderTrend,
  selectionError,
} from "../src/dashboard.js";
import { FormViewModel } from "../src/formViewModel.js";
import { MemoryStorage, OfflineQueue } from "../src/offlineQueue.js";
import { Replica } from "../src/replica.js";
import { ReviewQueueItem, legalTransitions } from "../src/reviewQueue.js";
import { renderForm, renderReviewItem } from "../src/render.js";
import { checkCorrect } from "../src/validation.js";
import { decodeRecords, encodeRecords } from "../src/wire.js";
import type {
  AnalyticsTablePayload,
  ChangeEvent,
  DatasetMeta,
  ElementMeta,
  WireRecord,
} from "../src/types.js";

const pctElement: ElementMeta = {
  id: "el-pct",
  name: "Share",
  value_type: "PERCENT",
  range: [0, 100],
  owner_program_id: "prog",
  aggregation: "AVERAGE",
};

const countElement: ElementMeta = {
  id: "el-count",
  name: "Count",
  value_type: "NON_NEGATIVE_INTEGER",
  range: [0, 1000],
  owner_program_id: "prog",
  aggregation: "SUM",
};

const dataset: DatasetMeta = {
  id: "ds-x",
  name: "Form X",
  period_type: "MONTH",
  element_ids: ["el-count", "el-pct"],
  entry_level: 4,
  deadline_days: 5,
  program_id: "prog",
};

function freshForm(): FormViewModel {
  return new FormViewModel(
    dataset,
    new Map([
      ["el-count", countElement],
      ["el-pct", pctElement],
    ]),
    "ou-x",
    "2021-01",
  );
}

describe("client-side validation", () => {
  it("flags type and range violations like the server", () => {
    expect(checkCorrect("7.5", countElement)).toMatch(/whole number/);
    expect(checkCorrect("-2", countElement)).toMatch(/negative/);
    expect(checkCorrect("150", pctElement)).toMatch(/range/);
    expect(checkCorrect("42", countElement)).toBeNull();
    expect(checkCorrect("", countElement)).toBeNull();
    expect(checkCorrect("abc", countElement)).toMatch(/not a number/);
  });
});

describe("form view model", () => {
  it("meter tracks completeness and gates submit", () => {
    const vm = freshForm();
    expect(vm.completeness()).toBe(0);
    expect(vm.submitEnabled()).toBe(false);
    vm.setValue("el-count", "10");
    expect(vm.completeness()).toBe(0.5);
    vm.setValue("el-pct", "55");
    expect(vm.completeness()).toBe(1);
    expect(vm.submitEnabled()).toBe(true);
  });

  it("a 150 percent entry disables submit with an inline error", () => {
    const vm = freshForm();
    vm.setValue("el-count", "10");
    vm.setValue("el-pct", "150");
    expect(vm.cells.get("el-pct")!.error).toMatch(/range/);
    expect(vm.submitEnabled()).toBe(false);
    const html = renderForm(vm);
    expect(html).toContain("aria-invalid");
    expect(html).toContain("<button type=\"submit\" disabled>");
  });

  it("renders server findings beside their cells", () => {
    const vm = freshForm();
    vm.setValue("el-count", "10");
    vm.setValue("el-pct", "50");
    vm.applyServerFindings([
      {
        dimension: "CORRECT",
        severity: "BLOCK",
        subject: ["el-count", "ou-x", "2021-01"],
        message: "server says no",
        requires_justification: false,
      },
    ]);
    expect(vm.cells.get("el-count")!.serverError).toBe("server says no");
    expect(vm.submitEnabled()).toBe(false);
  });

  it("queue badge appears with offline depth", () => {
    const vm = freshForm();
    const html = renderForm(vm, 2);
    expect(html).toContain("2 queued offline");
  });
});

describe("wire format", () => {
  it("round-trips records", () => {
    const record: WireRecord = {
      client_id: "web-1",
      client_seq: 1,
      payload: {
        kind: "submit",
        dataset_id: "ds-x",
        org_unit_id: "ou-x",
        period: "2021-01",
        values: { "el-count": 10, "el-pct": { value: 50, justification: "n" } },
        actor: "u-x",
        submitted_at: "2021-02-01T00:00:00+00:00",
      },
      base_version: 0,
    };
    const decoded = decodeRecords(encodeRecords([record, record]));
    expect(decoded).toEqual([record, record]);
  });

  it("rejects broken framing", () => {
    expect(() => decodeRecords("abc\n{}")).toThrow();
    expect(() => decodeRecords("99\n{}\n")).toThrow();
  });
});

describe("offline queue", () => {
  it("persists across instances and tracks base versions per subject", () => {
    const storage = new MemoryStorage();
    const replica = new Replica();
    const q1 = new OfflineQueue("web-1", "u-x", storage);
    const form = {
      dataset: "ds-x",
      org_unit: "ou-x",
      period: "2021-01",
      values: { "el-count": 1, "el-pct": 2 },
    };
    const r1 = q1.enqueueSubmit(form, replica, "2021-02-01T00:00:00+00:00");
    const r2 = q1.enqueueSubmit(form, replica, "2021-02-01T01:00:00+00:00");
    expect([r1.client_seq, r2.client_seq]).toEqual([1, 2]);
    expect([r1.base_version, r2.base_version]).toEqual([0, 1]);
    const q2 = new OfflineQueue("web-1", "u-x", storage);
    expect(q2.depth()).toBe(2);
  });
});

describe("review queue model", () => {
  const event: ChangeEvent = {
    server_seq: 9,
    kind: "verify",
    dataset_id: "ds-x",
    org_unit_id: "ou-x",
    period: "2021-04",
    revision: 2,
    status: "VERIFIED",
    values: {
      "el-a": { value: 500, version: 1, status: "VERIFIED",
                justification: null, deviation_flagged: true },
      "el-b": { value: 480, version: 1, status: "VERIFIED",
                justification: null, deviation_flagged: true },
      "el-c": { value: 99, version: 1, status: "VERIFIED",
                justification: null, deviation_flagged: false },
    },
  };

  it("legality mirrors the server table", () => {
    expect(legalTransitions("SUBMITTED", "SUBOFFICE_MANAGER").sort())
      .toEqual(["REJECT", "VERIFY"]);
    expect(legalTransitions("VERIFIED", "SUBOFFICE_MANAGER")).toEqual([]);
    expect(legalTransitions("VERIFIED", "DEPARTMENT_MANAGER").sort())
      .toEqual(["REJECT", "VALIDATE"]);
    expect(legalTransitions("PUBLISHED", "ADMIN")).toEqual([]);
    expect(legalTransitions("DRAFT", "DEPARTMENT_MANAGER")).toEqual([]);
  });

  it("VALIDATE stays disabled until every deviation is justified", () => {
    const item = new ReviewQueueItem(event, "DEPARTMENT_MANAGER");
    expect(item.deviations.length).toBe(2);
    expect(item.isEnabled("VALIDATE")).toBe(false);
    let html = renderReviewItem(item);
    expect(html).toMatch(/<button name="VALIDATE" disabled/);

    item.setJustification("el-a", "campaign");
    expect(item.isEnabled("VALIDATE")).toBe(false);
    item.setJustification("el-b", "backlog cleared");
    expect(item.isEnabled("VALIDATE")).toBe(true);
    html = renderReviewItem(item);
    expect(html).toContain('<button name="VALIDATE">');
    expect(html).not.toMatch(/<button name="VALIDATE" disabled/);
    expect(item.reviewBody("VALIDATE").justifications).toEqual({
      "el-a": "campaign",
      "el-b": "backlog cleared",
    });
  });

  it("REJECT needs a reason", () => {
    const item = new ReviewQueueItem(event, "DEPARTMENT_MANAGER");
    expect(item.isEnabled("REJECT")).toBe(false);
    item.reason = "numbers inconsistent";
    expect(item.isEnabled("REJECT")).toBe(true);
    expect(item.reviewBody("REJECT").reason).toBe("numbers inconsistent");
  });
});

describe("dashboard model", () => {
  const payload: AnalyticsTablePayload = {
    rows: "ORG_UNIT",
    columns: "PERIOD",
    row_keys: ["ou-a", "ou-b"],
    column_keys: ["2021-01", "2021-02"],
    cells: [
      [80.5, null],
      [66, 70],
    ],
    min_status: "PUBLISHED",
    floor_forced: true,
  };

  it("renders exactly the payload values", () => {
    const model = new DashboardModel(payload);
    const cells = readRenderedCells(renderGrid(model));
    expect(cells.get("ou-a|2021-01")).toBe("80.5");
    expect(cells.get("ou-a|2021-02")).toBe("");
    expect(cells.get("ou-b|2021-02")).toBe("70");
  });

  it("shows the forced-floor banner for anonymous viewers", () => {
    const html = renderGrid(new DashboardModel(payload));
    expect(html).toContain("showing PUBLISHED data only");
    const unforced = new DashboardModel({ ...payload, floor_forced: false });
    expect(renderGrid(unforced)).not.toContain("floor-banner");
  });

  it("trend follows one grid row", () => {
    const model = new DashboardModel(payload);
    expect(model.trend("ou-b")).toEqual([
      { x: "2021-01", y: 66 },
      { x: "2021-02", y: 70 },
    ]);
    expect(renderTrend(model.trend("ou-b"))).toContain("polyline");
  });

  it("blocks invalid pivots client-side", () => {
    expect(selectionError({
      rows: "PERIOD", columns: "PERIOD",
      rowMembers: ["2021-01"], columnMembers: ["2021-02"],
      filters: { org_unit: "ou-a", indicator: "i" },
    })).toMatch(/differ/);
    expect(selectionError({
      rows: "ORG_UNIT", columns: "PERIOD",
      rowMembers: ["ou-a"], columnMembers: ["2021-01"],
      filters: {},
    })).toMatch(/element or indicator/);
  });
});
