"""HTTP service exposing the project lifecycle to the review UI.

Endpoints mirror the pipeline stages: ingest, extract, review/edit,
approve, draft, evaluate. Errors use a stable JSON envelope
``{code, message, details}``. With a remote model backend the slow
operations run as tracked jobs (202 + job id); with the mock they are
synchronous so tests and demos stay deterministic.
"""

from __future__ import annotations

import logging
import re
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from fastapi import FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import policy
from .errors import (
    BackendTimeout,
    BackendUnavailable,
    CitationViolation,
    ConsentForgeError,
    DuplicateSection,
    EmptyContext,
    ExtractionEmpty,
    InvalidEdit,
    MalformedInput,
    NotApproved,
    NotFound,
    PreconditionFailed,
    SchemaViolation,
    ScriptExhausted,
    VersionConflict,
)
from .llm import LlmBackend, ResponseCache
from .project import Project, TABLE_KINDS, section_from_name
from .util import read_json

logger = logging.getLogger(__name__)

STATUS_BY_ERROR: dict[type, int] = {
    MalformedInput: 400,
    NotFound: 404,
    ExtractionEmpty: 422,
    InvalidEdit: 422,
    SchemaViolation: 422,
    CitationViolation: 422,
    EmptyContext: 422,
    VersionConflict: 409,
    NotApproved: 409,
    PreconditionFailed: 409,
    DuplicateSection: 409,
    BackendUnavailable: 502,
    BackendTimeout: 504,
    ScriptExhausted: 502,
}


class CreateProjectBody(BaseModel):
    trial_ref: str
    project_id: str | None = None


class EditBody(BaseModel):
    op: str
    payload: dict = {}
    base_version: int
    author: str = "reviewer"


class EvaluateBody(BaseModel):
    reference_icf: str


@dataclass
class Job:
    job_id: str
    status: str = "running"  # running | done | failed
    result: Any = None
    error: dict | None = None


@dataclass
class JobRunner:
    sync: bool
    jobs: dict[str, Job] = field(default_factory=dict)

    def submit(self, fn: Callable[[], Any]) -> tuple[Job, bool]:
        """Run inline when sync; otherwise track in a background thread."""
        job = Job(job_id=uuid.uuid4().hex[:12])
        self.jobs[job.job_id] = job
        if self.sync:
            job.result = fn()
            job.status = "done"
            return job, True

        def runner() -> None:
            try:
                job.result = fn()
                job.status = "done"
            except ConsentForgeError as exc:
                job.status = "failed"
                job.error = {"code": exc.code, "message": str(exc), "details": exc.details}
            except Exception as exc:  # pragma: no cover - defensive
                job.status = "failed"
                job.error = {"code": "internal_error", "message": str(exc), "details": {}}

        threading.Thread(target=runner, daemon=True).start()
        return job, False


def create_app(
    data_dir: Path,
    llm: LlmBackend,
    embedder,
    cache: ResponseCache | None = None,
    rules: policy.RuleSet | None = None,
    sync_jobs: bool | None = None,
    ui_dir: Path | None = None,
) -> FastAPI:
    data_dir = Path(data_dir)
    projects_dir = data_dir / "projects"
    projects_dir.mkdir(parents=True, exist_ok=True)
    rules = rules or policy.default_rules()
    if sync_jobs is None:
        sync_jobs = llm.backend_id == "mock"
    runner = JobRunner(sync=sync_jobs)

    app = FastAPI(title="consentforge", version="0.1.0")

    @app.exception_handler(ConsentForgeError)
    async def handle_domain_error(request: Request, exc: ConsentForgeError) -> JSONResponse:
        status = STATUS_BY_ERROR.get(type(exc), 500)
        return JSONResponse(
            status_code=status,
            content={"code": exc.code, "message": str(exc), "details": exc.details},
        )

    def open_project(project_id: str) -> Project:
        return Project(projects_dir / project_id)

    def job_response(job: Job, finished: bool, result_to_dict: Callable[[Any], Any]):
        if finished:
            return result_to_dict(job.result)
        return JSONResponse(status_code=202, content={"job_id": job.job_id})

    # ------------------------------------------------------------------

    @app.post("/projects")
    def create_project(body: CreateProjectBody) -> dict:
        project_id = body.project_id or uuid.uuid4().hex[:12]
        if not re.fullmatch(r"[A-Za-z0-9][A-Za-z0-9._-]*", project_id):
            raise MalformedInput(f"invalid project_id {project_id!r}")
        Project.create(projects_dir / project_id, trial_ref=body.trial_ref, project_id=project_id)
        return {"project_id": project_id}

    @app.get("/projects/{project_id}")
    def get_project(project_id: str) -> dict:
        return open_project(project_id).state()

    @app.get("/projects/{project_id}/audit")
    def get_audit(project_id: str) -> dict:
        return {"events": open_project(project_id).audit_events()}

    @app.put("/projects/{project_id}/protocol")
    async def put_protocol(project_id: str, request: Request) -> dict:
        markdown = (await request.body()).decode("utf-8")
        project = open_project(project_id)
        return project.ingest_protocol(markdown, embedder)

    @app.get("/projects/{project_id}/protocol")
    def get_protocol(project_id: str) -> Response:
        path = open_project(project_id).root / "protocol.md"
        if not path.exists():
            raise NotFound("no protocol has been ingested")
        return Response(content=path.read_text(encoding="utf-8"), media_type="text/markdown")

    @app.put("/projects/{project_id}/template")
    async def put_template(project_id: str, request: Request) -> dict:
        markdown = (await request.body()).decode("utf-8")
        project = open_project(project_id)
        parsed = project.set_template(markdown, llm, cache)
        return {
            "sections": [g.section.value for g in parsed.guidelines],
            "missing_sections": [s.value for s in parsed.missing_sections],
        }

    @app.post("/projects/{project_id}/extract/{kind}")
    def extract(project_id: str, kind: str):
        if kind not in TABLE_KINDS:
            raise NotFound(f"unknown table kind {kind!r}")
        project = open_project(project_id)
        job, finished = runner.submit(lambda: project.extract_table(kind, llm, cache))
        return job_response(job, finished, lambda table: table.to_dict())

    @app.get("/projects/{project_id}/tables/{kind}")
    def get_table(
        project_id: str, kind: str, version: int | None = Query(default=None)
    ) -> dict:
        project = open_project(project_id)
        if version is not None:
            return project.table_at_version(kind, version).to_dict()
        table = project.table(kind)
        if table is None:
            raise NotFound(f"no {kind} table extracted")
        return table.to_dict()

    @app.patch("/projects/{project_id}/tables/{kind}")
    def patch_table(project_id: str, kind: str, body: EditBody) -> dict:
        project = open_project(project_id)
        table = project.apply_table_edit(
            kind,
            {"op": body.op, "payload": body.payload, "base_version": body.base_version},
            author=body.author,
        )
        return table.to_dict()

    @app.post("/projects/{project_id}/tables/{kind}/approve")
    def approve_table(project_id: str, kind: str) -> dict:
        return open_project(project_id).approve_table(kind).to_dict()

    @app.post("/projects/{project_id}/draft/{section}")
    def post_draft(project_id: str, section: str):
        target = section_from_name(section)
        project = open_project(project_id)
        job, finished = runner.submit(
            lambda: project.draft_section(target, llm, embedder, cache)
        )
        return job_response(job, finished, lambda draft: draft.to_dict())

    @app.get("/projects/{project_id}/draft/{section}")
    def get_draft(
        project_id: str, section: str, resolve: int = Query(default=0)
    ) -> dict:
        target = section_from_name(section)
        project = open_project(project_id)
        if resolve:
            return project.resolve_draft(target)
        draft = project.draft(target)
        if draft is None:
            raise NotFound(f"no draft for section {target.value}")
        return draft.to_dict()

    @app.get("/projects/{project_id}/icf")
    def get_icf(project_id: str) -> Response:
        rendered = open_project(project_id).render_icf()
        return Response(content=rendered, media_type="text/markdown")

    @app.post("/projects/{project_id}/evaluate")
    def evaluate(project_id: str, body: EvaluateBody):
        project = open_project(project_id)
        job, finished = runner.submit(
            lambda: project.evaluate(body.reference_icf, rules, llm, cache)
        )
        return job_response(job, finished, lambda report: report.to_dict())

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str) -> dict:
        job = runner.jobs.get(job_id)
        if job is None:
            raise NotFound(f"unknown job {job_id!r}")
        payload: dict = {"job_id": job.job_id, "status": job.status}
        if job.status == "done":
            result = job.result
            payload["result"] = result.to_dict() if hasattr(result, "to_dict") else result
        if job.error:
            payload["error"] = job.error
        return payload

    if ui_dir is not None and Path(ui_dir).exists():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def load_server_config(path: Path | None) -> dict:
    """Optional JSON config: listen address, data dir, backend selection."""
    defaults = {
        "host": "127.0.0.1",
        "port": 8400,
        "data_dir": "./consentforge-data",
        "backend": "mock",
        "script": None,
        "ui_dir": None,
    }
    if path is None:
        return defaults
    defaults.update(read_json(Path(path)))
    return defaults
