/**
 * Pipeline dashboard: the visible state machine Extract -> Review/Edit ->
 * Approve -> Draft -> Evaluate. Actions whose preconditions are unmet
 * render disabled with the reason; nothing here bypasses the server's own
 * gates.
 */

import type { ProjectState, SectionSlug, TableKind } from "./api.js";
import { button, clear, el } from "./dom.js";
import {
  SECTION_LABELS,
  SECTION_VALUES,
  approveGate,
  draftGate,
  evaluateGate,
  extractGate,
} from "./state.js";

export interface BoardHandlers {
  extract: (kind: TableKind) => void;
  approve: (kind: TableKind) => void;
  openTable: (kind: TableKind) => void;
  draft: (section: SectionSlug) => void;
  openDraft: (section: SectionSlug) => void;
  evaluate: () => void;
}

const SECTIONS: SectionSlug[] = ["purpose", "procedures", "duration", "risks"];

function gateNote(reason: string | null): HTMLElement {
  return el("span", { class: "gate-note" }, reason ?? "");
}

export function renderBoard(
  container: HTMLElement,
  state: ProjectState,
  handlers: BoardHandlers,
): void {
  clear(container);
  container.append(
    el(
      "div",
      { class: "board-header" },
      el("h2", {}, `Project ${state.project_id}`),
      el("span", { class: "chip" }, state.trial_ref),
      el(
        "span",
        { class: "chip" },
        state.protocol_ingested ? "protocol ingested" : "no protocol",
      ),
    ),
  );

  const stages = el("div", { class: "stages" });

  const extractStage = el("div", { class: "stage" }, el("h3", {}, "1. Extract"));
  for (const kind of ["soa", "risk"] as TableKind[]) {
    const gate = extractGate(state);
    extractStage.append(
      el(
        "div",
        { class: "stage-row", "data-action": `extract-${kind}` },
        button(`Extract ${kind.toUpperCase()}`, {
          enabled: gate.enabled,
          reason: gate.reason,
          onClick: () => handlers.extract(kind),
        }),
        gateNote(gate.reason),
      ),
    );
  }
  stages.append(extractStage);

  const reviewStage = el("div", { class: "stage" }, el("h3", {}, "2. Review & Approve"));
  for (const kind of ["soa", "risk"] as TableKind[]) {
    const info = state.tables[kind];
    const gate = approveGate(state, kind);
    const row = el(
      "div",
      { class: "stage-row", "data-action": `approve-${kind}` },
      el(
        "span",
        { class: `chip status-${(info?.status ?? "missing").toLowerCase()}` },
        info ? `${kind.toUpperCase()} ${info.status} v${info.version}` : `${kind.toUpperCase()} not extracted`,
      ),
    );
    if (info) {
      row.append(
        button("Open", { enabled: true, onClick: () => handlers.openTable(kind) }),
      );
    }
    row.append(
      button(`Approve ${kind.toUpperCase()}`, {
        enabled: gate.enabled,
        reason: gate.reason,
        onClick: () => handlers.approve(kind),
      }),
      gateNote(gate.reason),
    );
    reviewStage.append(row);
  }
  stages.append(reviewStage);

  const draftStage = el("div", { class: "stage" }, el("h3", {}, "3. Draft"));
  for (const section of SECTIONS) {
    const gate = draftGate(state, section);
    const row = el(
      "div",
      { class: "stage-row", "data-action": `draft-${section}` },
      button(`Draft ${SECTION_LABELS[section]}`, {
        enabled: gate.enabled,
        reason: gate.reason,
        onClick: () => handlers.draft(section),
      }),
      gateNote(gate.reason),
    );
    if (state.drafts.includes(SECTION_VALUES[section])) {
      row.append(button("View", { enabled: true, onClick: () => handlers.openDraft(section) }));
    }
    draftStage.append(row);
  }
  stages.append(draftStage);

  const evalStage = el("div", { class: "stage" }, el("h3", {}, "4. Evaluate"));
  const gate = evaluateGate(state);
  evalStage.append(
    el(
      "div",
      { class: "stage-row", "data-action": "evaluate" },
      button("Evaluate against reference", {
        enabled: gate.enabled,
        reason: gate.reason,
        onClick: () => handlers.evaluate(),
      }),
      gateNote(gate.reason),
      el("span", { class: "chip" }, state.report ? "report ready" : "no report"),
    ),
  );
  stages.append(evalStage);

  container.append(stages);
}
