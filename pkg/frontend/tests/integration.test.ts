/**
 * Drives the real mock-backed service over HTTP, rendering the UI at each
 * stage: the approval gate must be visible in the DOM, and every citation
 * popover must echo the server-resolved source text exactly.
 */

import { readFileSync } from "node:fs";
import { join, resolve } from "node:path";

import { beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import type { ProjectState, ResolvedDraft, SectionSlug } from "../src/api.js";
import { renderBoard } from "../src/board.js";
import { popoverContent, renderDraftViewer } from "../src/drafts.js";

const REPO_ROOT = resolve(__dirname, "..", "..");
const BASE = "http://127.0.0.1:8442";

const api = new ApiClient(BASE);
const SECTIONS: SectionSlug[] = ["purpose", "procedures", "duration", "risks"];

const noopHandlers = {
  extract: () => {},
  approve: () => {},
  openTable: () => {},
  draft: () => {},
  openDraft: () => {},
  evaluate: () => {},
};

function renderedBoard(state: ProjectState): HTMLElement {
  const host = document.createElement("div");
  document.body.append(host);
  renderBoard(host, state, noopHandlers);
  return host;
}

function fixture(name: string): string {
  return readFileSync(join(REPO_ROOT, "fixtures", name), "utf-8");
}

describe("review flow against the live service", () => {
  let projectId: string;

  beforeAll(async () => {
    // The scripted backend binds chunk ids to this project id.
    const created = await api.createProject("NCT-CF-0042", "golden-project");
    projectId = created.project_id;
    await api.putProtocol(projectId, fixture("proto_small.md"));
    await api.putTemplate(projectId, fixture("template_site.md"));
  });

  it("gate fidelity: draft actions stay disabled until approval, then unlock", async () => {
    await api.extract(projectId, "soa");
    await api.extract(projectId, "risk");

    let board = renderedBoard(await api.getProject(projectId));
    for (const section of ["procedures", "duration", "risks"] as const) {
      const row = board.querySelector(`[data-action="draft-${section}"]`)!;
      const btn = row.querySelector("button")! as HTMLButtonElement;
      expect(btn.disabled).toBe(true);
      expect(row.textContent).toMatch(/Requires approved (SOA|risk) table/);
    }
    // The server enforces the same gate the board displays.
    await expect(api.draftSection(projectId, "procedures")).rejects.toMatchObject({
      status: 409,
      code: "not_approved",
    });

    await api.approve(projectId, "soa");
    await api.approve(projectId, "risk");

    board = renderedBoard(await api.getProject(projectId));
    for (const section of SECTIONS) {
      const btn = board
        .querySelector(`[data-action="draft-${section}"]`)!
        .querySelector("button")! as HTMLButtonElement;
      expect(btn.disabled).toBe(false);
    }
  });

  it("citation popover fidelity: excerpts equal the server-resolved text exactly", async () => {
    for (const section of SECTIONS) {
      await api.draftSection(projectId, section);
    }
    for (const section of SECTIONS) {
      const resolved: ResolvedDraft = await api.getResolvedDraft(projectId, section);
      expect(resolved.resolved_citations.length).toBeGreaterThan(0);

      const host = document.createElement("div");
      document.body.append(host);
      renderDraftViewer(host, resolved, { threshold: 0.6, resolved: true }, () => {});

      // One chip per inline occurrence; dedupe to compare with citations.
      const chips = host.querySelectorAll("button.citation-chip");
      const uniqueMarkers = new Set(
        Array.from(chips, (chip) => chip.getAttribute("data-marker")),
      );
      expect(chips.length).toBeGreaterThanOrEqual(resolved.resolved_citations.length);
      expect(uniqueMarkers).toEqual(
        new Set(resolved.resolved_citations.map((c) => c.marker)),
      );

      for (const citation of resolved.resolved_citations) {
        const chip = host.querySelector(
          `button.citation-chip[data-marker="${citation.marker.replace(/"/g, '\\"')}"]`,
        )! as HTMLButtonElement;
        chip.click();
        const excerpt = host.querySelector(".popover-excerpt")!;
        expect(excerpt.textContent).toBe(citation.text ?? "");
        expect(popoverContent(citation).excerpt).toBe(citation.text ?? "");
      }
    }
  });

  it("draft bodies round-trip through the raw endpoint unchanged", async () => {
    const raw = await api.getDraft(projectId, "procedures");
    const resolved = await api.getResolvedDraft(projectId, "procedures");
    expect(raw.body).toBe(resolved.draft.body);
    expect(raw.citations).toEqual(resolved.draft.citations);
  });

  it("protocol page trace-back serves the ingested markdown", async () => {
    const markdown = await api.getProtocol(projectId);
    expect(markdown).toContain("<!-- page: 7 -->");
    expect(markdown).toContain("Blood draw: bruising (common), fainting (rare).");
  });
});
