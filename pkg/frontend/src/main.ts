/** App bootstrap: one project at a time, server state refetched after every action. */

import { ApiClient, ApiError, awaitResult } from "./api.js";
import type {
  ProjectState,
  ResolvedDraft,
  RiskTable,
  SectionSlug,
  SoaTable,
  TableKind,
} from "./api.js";
import { renderBoard } from "./board.js";
import { renderDraftViewer } from "./drafts.js";
import { clear, el } from "./dom.js";
import { splitProtocolPages } from "./state.js";
import { renderRiskEditor, renderSoaEditor } from "./tables.js";

const api = new ApiClient("");

interface AppState {
  projectId: string | null;
  project: ProjectState | null;
  threshold: number;
}

const app: AppState = { projectId: null, project: null, threshold: 0.6 };

function host(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function flash(message: string, kind: "info" | "error" = "info"): void {
  const bar = host("flash");
  bar.textContent = message;
  bar.className = `flash ${kind}`;
}

async function refresh(): Promise<void> {
  if (!app.projectId) return;
  app.project = await api.getProject(app.projectId);
  renderBoard(host("board"), app.project, {
    extract: (kind) => void doExtract(kind),
    approve: (kind) => void doApprove(kind),
    openTable: (kind) => void openTable(kind),
    draft: (section) => void doDraft(section),
    openDraft: (section) => void openDraft(section),
    evaluate: () => void doEvaluate(),
  });
}

function reportError(err: unknown): void {
  if (err instanceof ApiError) {
    flash(`${err.code}: ${err.message}`, "error");
  } else {
    flash(String(err), "error");
  }
}

async function doExtract(kind: TableKind): Promise<void> {
  try {
    await awaitResult(api, await api.extract(app.projectId!, kind), {
      onProgress: () => flash(`Extracting ${kind.toUpperCase()} table...`),
    });
    flash(`${kind.toUpperCase()} table extracted; review before approval.`);
    await refresh();
    await openTable(kind);
  } catch (err) {
    reportError(err);
  }
}

async function doApprove(kind: TableKind): Promise<void> {
  try {
    await api.approve(app.projectId!, kind);
    flash(`${kind.toUpperCase()} table approved.`);
    await refresh();
    await openTable(kind);
  } catch (err) {
    reportError(err);
  }
}

async function openTable(kind: TableKind): Promise<void> {
  try {
    const table = await api.getTable(app.projectId!, kind);
    const panel = host("panel");
    const handlers = {
      submitEdit: async (edit: Parameters<typeof api.patchTable>[2]) => {
        await api.patchTable(app.projectId!, kind, edit);
        await refresh();
        await openTable(kind);
      },
      approve: () => doApprove(kind),
      openPage: (page: number) => void openProtocolPage(page),
      reload: () => openTable(kind),
    };
    if (kind === "soa") {
      renderSoaEditor(panel, table as SoaTable, handlers);
    } else {
      renderRiskEditor(panel, table as RiskTable, handlers);
    }
  } catch (err) {
    reportError(err);
  }
}

async function doDraft(section: SectionSlug): Promise<void> {
  try {
    await awaitResult(api, await api.draftSection(app.projectId!, section), {
      onProgress: () => flash(`Drafting ${section}...`),
    });
    flash(`Drafted ${section}.`);
    await refresh();
    await openDraft(section);
  } catch (err) {
    reportError(err);
  }
}

async function openDraft(section: SectionSlug): Promise<void> {
  try {
    const resolved: ResolvedDraft = await api.getResolvedDraft(app.projectId!, section);
    renderDraftViewer(
      host("panel"),
      resolved,
      { threshold: app.threshold, resolved: true },
      (value) => {
        app.threshold = value;
        void openDraft(section);
      },
    );
  } catch (err) {
    reportError(err);
  }
}

async function openProtocolPage(page: number): Promise<void> {
  try {
    const markdown = await api.getProtocol(app.projectId!);
    const pages = splitProtocolPages(markdown);
    const panel = host("panel");
    clear(panel);
    panel.append(
      el("h3", {}, `Protocol, page ${page}`),
      el("pre", { class: "protocol-page" }, pages.get(page) ?? "(page not found)"),
    );
  } catch (err) {
    reportError(err);
  }
}

async function doEvaluate(): Promise<void> {
  const reference = window.prompt("Paste the reference ICF markdown:");
  if (!reference) return;
  try {
    const report = await awaitResult(api, await api.evaluate(app.projectId!, reference), {
      onProgress: () => flash("Evaluating..."),
    });
    const panel = host("panel");
    clear(panel);
    panel.append(el("h3", {}, "Evaluation report"), el("pre", {}, JSON.stringify(report, null, 2)));
    await refresh();
  } catch (err) {
    reportError(err);
  }
}

async function openProject(projectId: string): Promise<void> {
  app.projectId = projectId;
  try {
    await refresh();
    flash(`Opened project ${projectId}.`);
  } catch (err) {
    reportError(err);
  }
}

export function bootstrap(): void {
  const form = host("open-form") as HTMLFormElement;
  form.addEventListener("submit", (evt) => {
    evt.preventDefault();
    const input = host("project-id") as HTMLInputElement;
    if (input.value) void openProject(input.value.trim());
  });
}

if (typeof window !== "undefined" && document.readyState !== "loading") {
  bootstrap();
} else if (typeof window !== "undefined") {
  document.addEventListener("DOMContentLoaded", bootstrap);
}
