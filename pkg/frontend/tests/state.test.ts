import { describe, expect, it } from "vitest";

import type { ProjectState } from "../src/api.js";
import {
  approveGate,
  draftGate,
  evaluateGate,
  extractGate,
  splitProtocolPages,
} from "../src/state.js";

function state(overrides: Partial<ProjectState> = {}): ProjectState {
  return {
    project_id: "p1",
    trial_ref: "NCT-TEST",
    protocol_ingested: true,
    tables: { soa: null, risk: null },
    drafts: [],
    report: false,
    ...overrides,
  };
}

describe("draftGate", () => {
  it("blocks every section until a protocol exists", () => {
    const gate = draftGate(state({ protocol_ingested: false }), "purpose");
    expect(gate.enabled).toBe(false);
    expect(gate.reason).toMatch(/protocol/i);
  });

  it("purpose needs no tables", () => {
    expect(draftGate(state(), "purpose").enabled).toBe(true);
  });

  it("procedures and duration wait for an approved SOA table", () => {
    for (const section of ["procedures", "duration"] as const) {
      const before = draftGate(state(), section);
      expect(before.enabled).toBe(false);
      expect(before.reason).toMatch(/SOA table/);

      const extracted = draftGate(
        state({ tables: { soa: { status: "Extracted", version: 1 }, risk: null } }),
        section,
      );
      expect(extracted.enabled).toBe(false);

      const approved = draftGate(
        state({ tables: { soa: { status: "Approved", version: 2 }, risk: null } }),
        section,
      );
      expect(approved.enabled).toBe(true);
    }
  });

  it("risks waits for the approved risk table", () => {
    const blocked = draftGate(
      state({ tables: { soa: { status: "Approved", version: 2 }, risk: null } }),
      "risks",
    );
    expect(blocked.enabled).toBe(false);
    expect(blocked.reason).toMatch(/risk table/);
  });

  it("an edit after approval re-blocks drafting", () => {
    const gate = draftGate(
      state({ tables: { soa: { status: "Edited", version: 3 }, risk: null } }),
      "procedures",
    );
    expect(gate.enabled).toBe(false);
  });
});

describe("other gates", () => {
  it("extract needs a protocol", () => {
    expect(extractGate(state({ protocol_ingested: false })).enabled).toBe(false);
    expect(extractGate(state()).enabled).toBe(true);
  });

  it("approve needs an extracted, not-yet-approved table", () => {
    expect(approveGate(state(), "soa").enabled).toBe(false);
    expect(
      approveGate(
        state({ tables: { soa: { status: "Extracted", version: 1 }, risk: null } }),
        "soa",
      ).enabled,
    ).toBe(true);
    expect(
      approveGate(
        state({ tables: { soa: { status: "Approved", version: 2 }, risk: null } }),
        "soa",
      ).enabled,
    ).toBe(false);
  });

  it("evaluate needs at least one draft", () => {
    expect(evaluateGate(state()).enabled).toBe(false);
    expect(evaluateGate(state({ drafts: ["PurposeOfResearch"] })).enabled).toBe(true);
  });
});

describe("splitProtocolPages", () => {
  it("assigns text between sentinels to the right page", () => {
    const pages = splitProtocolPages(
      "<!-- page: 1 -->\nfirst\n<!-- page: 2 -->\nsecond\nmore\n",
    );
    expect(pages.get(1)).toContain("first");
    expect(pages.get(2)).toContain("second");
    expect(pages.get(2)).toContain("more");
    expect(pages.has(3)).toBe(false);
  });

  it("treats leading text as page one", () => {
    const pages = splitProtocolPages("preamble\n<!-- page: 2 -->\nrest\n");
    expect(pages.get(1)).toContain("preamble");
  });
});

describe("awaitResult job polling", () => {
  it("returns immediate results untouched", async () => {
    const { awaitResult } = await import("../src/api.js");
    const table = { schema: "soa.v1", version: 1 };
    const got = await awaitResult({ getJob: async () => ({ job_id: "x", status: "done" as const }) }, table);
    expect(got).toBe(table);
  });

  it("polls a job reference to completion", async () => {
    const { awaitResult } = await import("../src/api.js");
    const statuses = [
      { job_id: "j1", status: "running" as const },
      { job_id: "j1", status: "running" as const },
      { job_id: "j1", status: "done" as const, result: { schema: "soa.v1", version: 1 } },
    ];
    let calls = 0;
    const seen: string[] = [];
    const got = await awaitResult(
      { getJob: async () => statuses[Math.min(calls++, 2)]! },
      { job_id: "j1" },
      { intervalMs: 1, onProgress: (s) => seen.push(s.status) },
    );
    expect(got).toEqual({ schema: "soa.v1", version: 1 });
    expect(calls).toBe(3);
    expect(seen).toEqual(["running", "running", "done"]);
  });

  it("surfaces job failure as an ApiError", async () => {
    const { awaitResult, ApiError } = await import("../src/api.js");
    await expect(
      awaitResult(
        {
          getJob: async () => ({
            job_id: "j2",
            status: "failed" as const,
            error: { code: "extraction_empty", message: "no pages", details: {} },
          }),
        },
        { job_id: "j2" },
        { intervalMs: 1 },
      ),
    ).rejects.toBeInstanceOf(ApiError);
  });
});
