/** Typed client for the review service. Every mutation goes through here. */

export interface IngestSummary {
  pages: number;
  sections: number;
  chunks: number;
}

export interface Timepoint {
  label: string;
  visit_number: number | null;
  day_or_window: string | null;
  is_visit: boolean;
}

export interface SoaCell {
  procedure_index: number;
  timepoint_index: number;
  note: string | null;
}

export interface SoaTable {
  schema: "soa.v1";
  timepoints: Timepoint[];
  procedures: { name: string }[];
  cells: SoaCell[];
  source_pages: number[];
  version: number;
  status: TableStatus;
}

export interface RiskEntry {
  procedure: string;
  risk: string;
  likelihood: "Likely" | "LessLikely" | "Rare" | "Unknown";
  note: string | null;
  source_pages: number[];
}

export interface RiskTable {
  schema: "risk.v1";
  entries: RiskEntry[];
  version: number;
  status: TableStatus;
}

export type TableStatus = "Extracted" | "Edited" | "Approved";
export type TableKind = "soa" | "risk";

export type SectionSlug = "purpose" | "procedures" | "duration" | "risks";

export interface Citation {
  marker: string;
  kind: "chunk" | "table";
  target: string;
  pages: number[];
}

export interface Draft {
  schema: "draft.v1";
  section: string;
  body: string;
  citations: Citation[];
  model_info: string;
  created_at: string;
}

export interface ResolvedCitation extends Citation {
  text?: string;
  header1?: string;
  header2?: string | null;
  score?: number;
}

export interface ResolvedDraft {
  draft: Draft;
  resolved_citations: ResolvedCitation[];
}

export interface TableEdit {
  op: "AddRow" | "DeleteRow" | "UpdateCell" | "UpdateMeta";
  payload: Record<string, unknown>;
  base_version: number;
  author?: string;
}

export interface ProjectState {
  project_id: string;
  trial_ref: string;
  protocol_ingested: boolean;
  tables: Record<TableKind, { status: TableStatus; version: number } | null>;
  drafts: string[];
  report: boolean;
}

export interface AuditEvent {
  ts: string;
  event: string;
  [key: string]: unknown;
}

export interface JobStatus {
  job_id: string;
  status: "running" | "done" | "failed";
  result?: unknown;
  error?: ApiErrorBody;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  details: Record<string, unknown>;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public details: Record<string, unknown> = {},
  ) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<never> {
  let body: ApiErrorBody | null = null;
  try {
    body = (await resp.json()) as ApiErrorBody;
  } catch {
    // non-JSON error body; fall through with generic info
  }
  throw new ApiError(
    resp.status,
    body?.code ?? "http_error",
    body?.message ?? `HTTP ${resp.status}`,
    body?.details ?? {},
  );
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  private async request<T>(method: string, path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.baseUrl + path, { method, ...init });
    if (!resp.ok) await parseError(resp);
    const type = resp.headers.get("content-type") ?? "";
    if (type.includes("application/json")) return (await resp.json()) as T;
    return (await resp.text()) as unknown as T;
  }

  private json<T>(method: string, path: string, body: unknown): Promise<T> {
    return this.request<T>(method, path, {
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  createProject(trialRef: string, projectId?: string): Promise<{ project_id: string }> {
    return this.json("POST", "/projects", { trial_ref: trialRef, project_id: projectId });
  }

  getProject(id: string): Promise<ProjectState> {
    return this.request("GET", `/projects/${id}`);
  }

  getAudit(id: string): Promise<{ events: AuditEvent[] }> {
    return this.request("GET", `/projects/${id}/audit`);
  }

  putProtocol(id: string, markdown: string): Promise<IngestSummary> {
    return this.request("PUT", `/projects/${id}/protocol`, {
      headers: { "Content-Type": "text/markdown" },
      body: markdown,
    });
  }

  getProtocol(id: string): Promise<string> {
    return this.request("GET", `/projects/${id}/protocol`);
  }

  putTemplate(id: string, markdown: string): Promise<{ sections: string[] }> {
    return this.request("PUT", `/projects/${id}/template`, {
      headers: { "Content-Type": "text/markdown" },
      body: markdown,
    });
  }

  extract(id: string, kind: TableKind): Promise<SoaTable | RiskTable> {
    return this.json("POST", `/projects/${id}/extract/${kind}`, {});
  }

  getTable(id: string, kind: TableKind): Promise<SoaTable | RiskTable> {
    return this.request("GET", `/projects/${id}/tables/${kind}`);
  }

  patchTable(id: string, kind: TableKind, edit: TableEdit): Promise<SoaTable | RiskTable> {
    return this.json("PATCH", `/projects/${id}/tables/${kind}`, edit);
  }

  approve(id: string, kind: TableKind): Promise<SoaTable | RiskTable> {
    return this.json("POST", `/projects/${id}/tables/${kind}/approve`, {});
  }

  draftSection(id: string, section: SectionSlug): Promise<Draft> {
    return this.json("POST", `/projects/${id}/draft/${section}`, {});
  }

  getDraft(id: string, section: SectionSlug): Promise<Draft> {
    return this.request("GET", `/projects/${id}/draft/${section}`);
  }

  getResolvedDraft(id: string, section: SectionSlug): Promise<ResolvedDraft> {
    return this.request("GET", `/projects/${id}/draft/${section}?resolve=1`);
  }

  evaluate(id: string, referenceIcf: string): Promise<Record<string, unknown>> {
    return this.json("POST", `/projects/${id}/evaluate`, { reference_icf: referenceIcf });
  }

  getJob(jobId: string): Promise<JobStatus> {
    return this.request("GET", `/jobs/${jobId}`);
  }
}

/** Remote backends answer slow POSTs with 202 + a job reference. */
export function isJobRef(value: unknown): value is { job_id: string } {
  return (
    typeof value === "object" &&
    value !== null &&
    "job_id" in value &&
    !("schema" in value)
  );
}

export interface AwaitJobOptions {
  intervalMs?: number;
  maxAttempts?: number;
  onProgress?: (status: JobStatus) => void;
}

/**
 * Resolve a POST response that may be either the final result (mock backend,
 * synchronous) or a job reference (remote backend): polls GET /jobs/{id}
 * until the job finishes.
 */
export async function awaitResult<T>(
  api: Pick<ApiClient, "getJob">,
  resultOrJob: T | { job_id: string },
  options: AwaitJobOptions = {},
): Promise<T> {
  if (!isJobRef(resultOrJob)) return resultOrJob;
  const intervalMs = options.intervalMs ?? 500;
  const maxAttempts = options.maxAttempts ?? 600;
  for (let attempt = 0; attempt < maxAttempts; attempt++) {
    const status = await api.getJob(resultOrJob.job_id);
    options.onProgress?.(status);
    if (status.status === "done") return status.result as T;
    if (status.status === "failed") {
      const err = status.error;
      throw new ApiError(502, err?.code ?? "job_failed", err?.message ?? "job failed", err?.details ?? {});
    }
    await new Promise((r) => setTimeout(r, intervalMs));
  }
  throw new ApiError(504, "job_timeout", `job ${resultOrJob.job_id} did not finish`);
}
