/**
 * Client-side project view and the gating rules the board renders.
 *
 * The server is the arbiter: these helpers mirror its preconditions so the
 * UI can disable actions with an explanation, but every mutation still goes
 * through the API and surfaces 409s when the mirror is stale.
 */

import type { ProjectState, SectionSlug, TableKind, TableStatus } from "./api.js";

export const SECTION_LABELS: Record<SectionSlug, string> = {
  purpose: "Purpose of Research",
  procedures: "Procedures",
  duration: "Duration of Study Involvement",
  risks: "Risks and Discomforts",
};

export const SECTION_VALUES: Record<SectionSlug, string> = {
  purpose: "PurposeOfResearch",
  procedures: "Procedures",
  duration: "DurationOfStudyInvolvement",
  risks: "RisksAndDiscomforts",
};

/** Which reviewed tables each section needs before drafting may run. */
export const SECTION_REQUIRES: Record<SectionSlug, TableKind[]> = {
  purpose: [],
  procedures: ["soa"],
  duration: ["soa"],
  risks: ["risk"],
};

export interface Gate {
  enabled: boolean;
  reason: string | null;
}

export function tableStatus(state: ProjectState, kind: TableKind): TableStatus | null {
  return state.tables[kind]?.status ?? null;
}

export function extractGate(state: ProjectState): Gate {
  if (!state.protocol_ingested) {
    return { enabled: false, reason: "Ingest a protocol first." };
  }
  return { enabled: true, reason: null };
}

export function approveGate(state: ProjectState, kind: TableKind): Gate {
  const status = tableStatus(state, kind);
  if (status === null) {
    return { enabled: false, reason: `Extract the ${kind.toUpperCase()} table first.` };
  }
  if (status === "Approved") {
    return { enabled: false, reason: "Already approved." };
  }
  return { enabled: true, reason: null };
}

export function draftGate(state: ProjectState, section: SectionSlug): Gate {
  if (!state.protocol_ingested) {
    return { enabled: false, reason: "Ingest a protocol first." };
  }
  const missing = SECTION_REQUIRES[section].filter(
    (kind) => tableStatus(state, kind) !== "Approved",
  );
  if (missing.length > 0) {
    const names = missing.map((k) => (k === "soa" ? "SOA table" : "risk table"));
    return {
      enabled: false,
      reason: `Requires approved ${names.join(" and ")} before drafting.`,
    };
  }
  return { enabled: true, reason: null };
}

export function evaluateGate(state: ProjectState): Gate {
  if (state.drafts.length === 0) {
    return { enabled: false, reason: "Draft at least one section first." };
  }
  return { enabled: true, reason: null };
}

/** Split a sentinel-annotated protocol into per-page text for trace-back. */
export function splitProtocolPages(markdown: string): Map<number, string> {
  const pages = new Map<number, string>();
  let current = 1;
  let buffer: string[] = [];
  const flush = () => {
    if (buffer.length > 0) {
      pages.set(current, (pages.get(current) ?? "") + buffer.join("\n"));
      buffer = [];
    }
  };
  for (const line of markdown.split("\n")) {
    const match = line.trim().match(/^<!--\s*page:\s*(\d+)\s*-->$/);
    if (match) {
      flush();
      current = Number(match[1]);
    } else {
      buffer.push(line);
    }
  }
  flush();
  return pages;
}
