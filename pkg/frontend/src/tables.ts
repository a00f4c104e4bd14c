/**
 * Editable grids for the two reviewed tables.
 *
 * Every cell edit sends a PATCH carrying the version it was based on; a 409
 * from the server surfaces as a conflict banner with a reload prompt, never
 * a silent overwrite. Source pages render as links that open the protocol
 * viewer at that page.
 */

import { ApiError } from "./api.js";
import type { RiskTable, SoaTable, TableEdit, TableKind } from "./api.js";
import { button, clear, el } from "./dom.js";

export interface TableEditorHandlers {
  submitEdit: (edit: TableEdit) => Promise<void>;
  approve: () => Promise<void>;
  openPage: (page: number) => void;
  reload: () => Promise<void>;
}

function statusChip(status: string): HTMLElement {
  return el("span", { class: `chip status-${status.toLowerCase()}` }, status);
}

function versionBadge(version: number): HTMLElement {
  return el("span", { class: "chip version-badge" }, `v${version}`);
}

function pageLinks(pages: number[], openPage: (page: number) => void): HTMLElement {
  const wrap = el("span", { class: "page-links" }, "pages: ");
  pages.forEach((page, i) => {
    const link = el("a", { href: "#", class: "page-link" }, String(page));
    link.addEventListener("click", (evt) => {
      evt.preventDefault();
      openPage(page);
    });
    wrap.append(link);
    if (i < pages.length - 1) wrap.append(", ");
  });
  return wrap;
}

function conflictBanner(container: HTMLElement, handlers: TableEditorHandlers): void {
  const banner = el(
    "div",
    { class: "conflict-banner", role: "alert" },
    "This table changed on the server (version conflict). ",
  );
  const reload = el("button", { class: "reload" }, "Reload latest");
  reload.addEventListener("click", () => void handlers.reload());
  banner.append(reload);
  container.prepend(banner);
}

async function runEdit(
  container: HTMLElement,
  handlers: TableEditorHandlers,
  edit: TableEdit,
): Promise<void> {
  try {
    await handlers.submitEdit(edit);
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      conflictBanner(container, handlers);
      return;
    }
    throw err;
  }
}

export function renderSoaEditor(
  container: HTMLElement,
  table: SoaTable,
  handlers: TableEditorHandlers,
): void {
  clear(container);
  const header = el(
    "div",
    { class: "table-header" },
    el("h3", {}, "Schedule of Assessments"),
    statusChip(table.status),
    versionBadge(table.version),
    pageLinks(table.source_pages, handlers.openPage),
  );
  if (table.status !== "Approved") {
    header.append(
      button("Approve", { enabled: true, onClick: () => void handlers.approve() }),
    );
  }
  container.append(header);

  const marked = new Map<string, { note: string | null }>();
  for (const cell of table.cells) {
    marked.set(`${cell.procedure_index}:${cell.timepoint_index}`, { note: cell.note });
  }

  const head = el("tr", {}, el("th", {}, "Procedure"));
  for (const tp of table.timepoints) {
    head.append(el("th", { title: tp.day_or_window ?? "" }, tp.label));
  }
  const body = el("tbody", {});
  table.procedures.forEach((proc, pi) => {
    const row = el("tr", {}, el("td", { class: "proc-name" }, proc.name));
    table.timepoints.forEach((_tp, ti) => {
      const cell = marked.get(`${pi}:${ti}`);
      const box = el("input", {
        type: "checkbox",
        class: "soa-cell",
        "data-cell": `${pi}:${ti}`,
        title: cell?.note ?? "",
      }) as HTMLInputElement;
      box.checked = cell !== undefined;
      box.addEventListener("change", () => {
        void runEdit(container, handlers, {
          op: "UpdateCell",
          payload: {
            procedure_index: pi,
            timepoint_index: ti,
            present: box.checked,
            note: cell?.note ?? null,
          },
          base_version: table.version,
        });
      });
      row.append(el("td", { class: "soa-cell-td" }, box));
    });
    body.append(row);
  });
  container.append(el("table", { class: "grid" }, el("thead", {}, head), body));
}

const LIKELIHOODS = ["Likely", "LessLikely", "Rare", "Unknown"] as const;

export function renderRiskEditor(
  container: HTMLElement,
  table: RiskTable,
  handlers: TableEditorHandlers,
): void {
  clear(container);
  const header = el(
    "div",
    { class: "table-header" },
    el("h3", {}, "Procedure Risks"),
    statusChip(table.status),
    versionBadge(table.version),
  );
  if (table.status !== "Approved") {
    header.append(
      button("Approve", { enabled: true, onClick: () => void handlers.approve() }),
    );
  }
  container.append(header);

  const head = el(
    "tr",
    {},
    el("th", {}, "Procedure"),
    el("th", {}, "Risk"),
    el("th", {}, "Likelihood"),
    el("th", {}, "Note"),
    el("th", {}, "Source"),
  );
  const body = el("tbody", {});
  table.entries.forEach((entry, index) => {
    const likelihood = el("select", { class: "likelihood", "data-entry": String(index) });
    for (const value of LIKELIHOODS) {
      const option = el("option", { value }, value) as HTMLOptionElement;
      option.selected = value === entry.likelihood;
      likelihood.append(option);
    }
    likelihood.addEventListener("change", () => {
      void runEdit(container, handlers, {
        op: "UpdateCell",
        payload: {
          index,
          field: "likelihood",
          value: (likelihood as HTMLSelectElement).value,
        },
        base_version: table.version,
      });
    });
    body.append(
      el(
        "tr",
        {},
        el("td", {}, entry.procedure),
        el("td", {}, entry.risk),
        el("td", {}, likelihood),
        el("td", {}, entry.note ?? ""),
        el("td", {}, pageLinks(entry.source_pages, handlers.openPage)),
      ),
    );
  });
  container.append(el("table", { class: "grid" }, el("thead", {}, head), body));
}
