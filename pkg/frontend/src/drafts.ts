/**
 * Draft viewer: section body with inline citation chips.
 *
 * Clicking a chip opens a popover whose excerpt is exactly the text the
 * server resolved for that citation: the client adds nothing and trims
 * nothing. Chunk citations carry their retrieval score; chips scoring
 * above the user-set threshold render highlighted as key references.
 */

import type { ResolvedCitation, ResolvedDraft } from "./api.js";
import { clear, el } from "./dom.js";

const MARKER_RE = /\[\[(c|t):([^\[\]\s]+)\]\]/g;

export interface PopoverContent {
  marker: string;
  headingPath: string;
  pages: string;
  excerpt: string;
}

export function popoverContent(citation: ResolvedCitation): PopoverContent {
  let headingPath: string;
  if (citation.kind === "chunk") {
    headingPath = citation.header2
      ? `${citation.header1 ?? ""} > ${citation.header2}`
      : (citation.header1 ?? "");
  } else {
    headingPath = citation.target.startsWith("soa")
      ? "Schedule of Assessments (reviewed)"
      : "Procedure risks (reviewed)";
  }
  return {
    marker: citation.marker,
    headingPath,
    pages: citation.pages.join(", "),
    excerpt: citation.text ?? "",
  };
}

export function isKeyCitation(citation: ResolvedCitation, threshold: number): boolean {
  return citation.score !== undefined && citation.score > threshold;
}

export interface DraftViewerOptions {
  threshold: number;
  /** Chips are disabled when the draft was fetched without resolve=1. */
  resolved: boolean;
}

function renderPopover(content: PopoverContent): HTMLElement {
  return el(
    "div",
    { class: "citation-popover", role: "dialog" },
    el("div", { class: "popover-marker" }, content.marker),
    el("div", { class: "popover-path" }, content.headingPath),
    el("div", { class: "popover-pages" }, `pages ${content.pages}`),
    el("blockquote", { class: "popover-excerpt" }, content.excerpt),
  );
}

export function renderDraftBody(
  container: HTMLElement,
  draft: ResolvedDraft,
  options: DraftViewerOptions,
): void {
  clear(container);
  const byMarker = new Map(draft.resolved_citations.map((c) => [c.marker, c]));
  const body = draft.draft.body;
  const wrap = el("div", { class: "draft-body" });
  let cursor = 0;
  for (const match of body.matchAll(MARKER_RE)) {
    const start = match.index ?? 0;
    if (start > cursor) wrap.append(document.createTextNode(body.slice(cursor, start)));
    const marker = match[0];
    const citation = byMarker.get(marker);
    const chip = el("button", {
      class: "citation-chip",
      "data-marker": marker,
    });
    const label = citation?.kind === "table" ? "table" : "source";
    chip.append(label);
    if (!options.resolved || citation === undefined) {
      chip.setAttribute("disabled", "");
      chip.classList.add("disabled");
      chip.title = "Fetch the draft with resolve=1 to inspect sources.";
    } else {
      if (citation.score !== undefined) {
        chip.title = `score ${citation.score.toFixed(3)}`;
      }
      if (isKeyCitation(citation, options.threshold)) {
        chip.classList.add("key-citation");
      }
      chip.addEventListener("click", () => {
        container.querySelectorAll(".citation-popover").forEach((p) => p.remove());
        chip.insertAdjacentElement("afterend", renderPopover(popoverContent(citation)));
      });
    }
    wrap.append(chip);
    cursor = start + marker.length;
  }
  if (cursor < body.length) wrap.append(document.createTextNode(body.slice(cursor)));
  container.append(wrap);
}

export function renderDraftViewer(
  container: HTMLElement,
  draft: ResolvedDraft,
  options: DraftViewerOptions,
  onThreshold: (value: number) => void,
): void {
  clear(container);
  const controls = el("div", { class: "draft-controls" });
  const slider = el("input", {
    type: "range",
    min: "0",
    max: "1",
    step: "0.05",
    value: String(options.threshold),
    class: "key-threshold",
  }) as HTMLInputElement;
  slider.addEventListener("input", () => onThreshold(Number(slider.value)));
  controls.append(el("label", {}, "Key reference threshold: "), slider);
  container.append(controls);
  const bodyHost = el("div", {});
  container.append(bodyHost);
  renderDraftBody(bodyHost, draft, options);
}
