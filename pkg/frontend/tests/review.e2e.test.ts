/** Review queue gate: VALIDATE stays disabled until every deviated value
 * has justification text — over a live fixture with 3 flagged values.
 */

import { beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { Replica, subjectKey } from "../src/replica.js";
import { buildReviewQueue } from "../src/reviewQueue.js";
import { renderReviewItem } from "../src/render.js";
import { login } from "./helpers.js";

const DS = "ds-maternal";
const UNIT = "ou-jakpus-d1-s1";
const PIC = "u-pic-jakpus-d1-s1";
const SPIKE_PERIOD = "2021-04";

const STABLE: Record<string, Record<string, number>> = {
  "2021-01": { served: 100, dserved: 80, hb: 11.0 },
  "2021-02": { served: 101, dserved: 81, hb: 11.2 },
  "2021-03": { served: 99, dserved: 79, hb: 10.8 },
};

function monthValues(m: { served: number; dserved: number; hb: number }) {
  return {
    "el-anc-served": m.served,
    "el-anc-target": 120,
    "el-delivery-served": m.dserved,
    "el-delivery-target": 100,
    "el-maternal-hb-avg": m.hb,
    "el-anc-first-visit-pct": 50,
  };
}

let pic: ApiClient;
let sudin: ApiClient;
let dinkes: ApiClient;

beforeAll(async () => {
  pic = await login(PIC);
  sudin = await login("u-sudin-jakpus");
  dinkes = await login("u-dinkes");

  for (const [period, m] of Object.entries(STABLE)) {
    await pic.submitDataValueSet({
      dataset: DS, org_unit: UNIT, period,
      values: monthValues(m as never),
      submitted_at: `${period}-28T09:00:00+00:00`,
    });
  }
  // the spike month: three values deviate from their own history
  const result = await pic.submitDataValueSet({
    dataset: DS, org_unit: UNIT, period: SPIKE_PERIOD,
    values: {
      "el-anc-served": 500,
      "el-anc-target": 120,
      "el-delivery-served": 480,
      "el-delivery-target": 100,
      "el-maternal-hb-avg": 24.0,
      "el-anc-first-visit-pct": 50,
    },
    submitted_at: "2021-05-02T09:00:00+00:00",
  });
  const flagged = result.findings.filter((f) => f.requires_justification);
  expect(flagged.length).toBe(3);

  await sudin.review({
    dataset: DS, org_unit: UNIT, period: SPIKE_PERIOD, action: "VERIFY",
  });
});

describe("review queue validate gate", () => {
  it("disables VALIDATE until all three deviations carry justification", async () => {
    const replica = new Replica();
    const { changes, cursor } = await dinkes.syncPull(0);
    replica.applyPull(changes, cursor);

    const queue = buildReviewQueue(replica, "DEPARTMENT_MANAGER", ["VERIFIED"]);
    const item = queue.find(
      (i) => subjectKey(i.subject.dataset, i.subject.org_unit, i.subject.period)
        === subjectKey(DS, UNIT, SPIKE_PERIOD),
    );
    expect(item, "spiked form must be in the review queue").toBeDefined();
    expect(item!.status).toBe("VERIFIED");
    expect(item!.deviations.map((d) => d.elementId)).toEqual([
      "el-anc-served",
      "el-delivery-served",
      "el-maternal-hb-avg",
    ]);

    // control disabled, server agrees
    expect(item!.isEnabled("VALIDATE")).toBe(false);
    expect(renderReviewItem(item!)).toMatch(/<button name="VALIDATE" disabled/);
    await expect(
      dinkes.review({ dataset: DS, org_unit: UNIT, period: SPIKE_PERIOD,
                      action: "VALIDATE" }),
    ).rejects.toMatchObject({ code: "UNJUSTIFIED_DEVIATION" });
    expect(
      (await expectError(() => dinkes.review({
        dataset: DS, org_unit: UNIT, period: SPIKE_PERIOD, action: "VALIDATE",
      }))).status,
    ).toBe(422);

    // justify two of three: still disabled
    item!.setJustification("el-anc-served", "integrated outreach week");
    item!.setJustification("el-delivery-served", "referral backlog cleared");
    expect(item!.isEnabled("VALIDATE")).toBe(false);
    const hint = item!.actions().find((a) => a.action === "VALIDATE")!.hint;
    expect(hint).toMatch(/1 deviated value/);

    // the third unlocks the control and the server accepts
    item!.setJustification("el-maternal-hb-avg", "new analyzer calibration");
    expect(item!.isEnabled("VALIDATE")).toBe(true);
    expect(renderReviewItem(item!)).not.toMatch(/<button name="VALIDATE" disabled/);

    const { transition } = await dinkes.review(item!.reviewBody("VALIDATE"));
    expect(transition.to_status).toBe("VALIDATED");

    // the stored values now carry the justification text
    const csv = await dinkes.exportValues({ org: UNIT });
    expect(csv).toContain("integrated outreach week");
    expect(csv).toContain("new analyzer calibration");
  });

  it("queue items expose exactly the legal actions per role", async () => {
    const replica = new Replica();
    const { changes, cursor } = await sudin.syncPull(0);
    replica.applyPull(changes, cursor);
    const submitted = buildReviewQueue(replica, "SUBOFFICE_MANAGER", ["SUBMITTED"]);
    for (const item of submitted) {
      const names = item.actions().map((a) => a.action).sort();
      expect(names).toEqual(["REJECT", "VERIFY"]);
    }
    const validated = buildReviewQueue(replica, "SUBOFFICE_MANAGER", ["VALIDATED"]);
    for (const item of validated) {
      expect(item.actions()).toEqual([]);
    }
  });
});

async function expectError(fn: () => Promise<unknown>): Promise<ApiError> {
  try {
    await fn();
  } catch (err) {
    if (err instanceof ApiError) return err;
    throw err;
  }
  throw new Error("expected an ApiError");
}
