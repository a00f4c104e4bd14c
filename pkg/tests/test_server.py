import json
import time

import pytest
from fastapi.testclient import TestClient

from consentforge.llm import MockLlmBackend
from consentforge.server import create_app
from consentforge.vecindex import HashingEmbedder

from conftest import FIXTURES

PROTOCOL = (FIXTURES / "proto_small.md").read_text(encoding="utf-8")
TEMPLATE = (FIXTURES / "template_site.md").read_text(encoding="utf-8")
REFERENCE = (FIXTURES / "reference_icf.md").read_text(encoding="utf-8")
GOLDEN_REPORT = json.loads((FIXTURES.parent / "tests" / "golden" / "report.json").read_text())


def make_client(tmp_path, sync_jobs=None):
    llm = MockLlmBackend.from_script_file(FIXTURES / "mock_script.json")
    app = create_app(tmp_path / "data", llm, HashingEmbedder(), sync_jobs=sync_jobs)
    return TestClient(app)


@pytest.fixture()
def client(tmp_path):
    return make_client(tmp_path)


def create_golden_project(client) -> str:
    resp = client.post("/projects", json={"trial_ref": "NCT-CF-0042",
                                          "project_id": "golden-project"})
    assert resp.status_code == 200
    project_id = resp.json()["project_id"]
    assert client.put(f"/projects/{project_id}/protocol", content=PROTOCOL).status_code == 200
    return project_id


class TestIngest:
    def test_upload_summary(self, client):
        pid = create_golden_project(client)
        resp = client.put(f"/projects/{pid}/protocol", content=PROTOCOL)
        assert resp.json() == {"pages": 12, "sections": 8, "chunks": 8}

    def test_reupload_identical_summary(self, client):
        pid = create_golden_project(client)
        first = client.put(f"/projects/{pid}/protocol", content=PROTOCOL).json()
        second = client.put(f"/projects/{pid}/protocol", content=PROTOCOL).json()
        assert first == second

    def test_empty_body_400(self, client):
        pid = create_golden_project(client)
        resp = client.put(f"/projects/{pid}/protocol", content="")
        assert resp.status_code == 400
        assert resp.json()["code"] == "malformed_input"

    def test_unknown_project_404(self, client):
        resp = client.get("/projects/missing")
        assert resp.status_code == 404


class TestExtractAndReview:
    def test_extract_soa(self, client):
        pid = create_golden_project(client)
        resp = client.post(f"/projects/{pid}/extract/soa")
        assert resp.status_code == 200
        table = resp.json()
        assert table["status"] == "Extracted"
        assert len(table["procedures"]) == 4

    def test_extract_without_candidates_422(self, client):
        resp = client.post("/projects", json={"trial_ref": "t"})
        pid = resp.json()["project_id"]
        client.put(f"/projects/{pid}/protocol", content="# Plain\nNothing here.\n")
        resp = client.post(f"/projects/{pid}/extract/soa")
        assert resp.status_code == 422
        assert resp.json()["code"] == "extraction_empty"

    def test_edit_version_flow(self, client):
        pid = create_golden_project(client)
        client.post(f"/projects/{pid}/extract/soa")
        edit = {
            "op": "UpdateCell",
            "payload": {"procedure_index": 0, "timepoint_index": 0, "note": "fasting"},
            "base_version": 1,
        }
        resp = client.patch(f"/projects/{pid}/tables/soa", json=edit)
        assert resp.status_code == 200
        assert resp.json()["version"] == 2

        stale = client.patch(f"/projects/{pid}/tables/soa", json=edit)
        assert stale.status_code == 409
        assert stale.json()["code"] == "version_conflict"

    def test_invalid_edit_422(self, client):
        pid = create_golden_project(client)
        client.post(f"/projects/{pid}/extract/soa")
        bad = {
            "op": "UpdateCell",
            "payload": {"procedure_index": 99, "timepoint_index": 0},
            "base_version": 1,
        }
        resp = client.patch(f"/projects/{pid}/tables/soa", json=bad)
        assert resp.status_code == 422

    def test_approve_idempotent_and_edit_reopens(self, client):
        pid = create_golden_project(client)
        client.post(f"/projects/{pid}/extract/soa")
        first = client.post(f"/projects/{pid}/tables/soa/approve")
        assert first.status_code == 200
        assert first.json()["status"] == "Approved"
        second = client.post(f"/projects/{pid}/tables/soa/approve")
        assert second.status_code == 200
        assert second.json() == first.json()

        edit = {
            "op": "UpdateCell",
            "payload": {"procedure_index": 0, "timepoint_index": 0, "note": "n"},
            "base_version": first.json()["version"],
        }
        edited = client.patch(f"/projects/{pid}/tables/soa", json=edit)
        assert edited.json()["status"] == "Edited"


class TestDraft:
    def test_draft_blocked_before_approval(self, client):
        pid = create_golden_project(client)
        client.post(f"/projects/{pid}/extract/soa")
        resp = client.post(f"/projects/{pid}/draft/procedures")
        assert resp.status_code == 409
        assert resp.json()["code"] == "not_approved"

    def test_draft_after_approval(self, client):
        pid = create_golden_project(client)
        client.post(f"/projects/{pid}/extract/soa")
        client.post(f"/projects/{pid}/tables/soa/approve")
        resp = client.post(f"/projects/{pid}/draft/procedures")
        assert resp.status_code == 200
        draft = resp.json()
        assert draft["schema"] == "draft.v1"
        assert len(draft["citations"]) == 5

    def test_unknown_section_404(self, client):
        pid = create_golden_project(client)
        assert client.post(f"/projects/{pid}/draft/appendix").status_code == 404

    def test_get_draft_resolve_modes(self, client):
        pid = create_golden_project(client)
        client.post(f"/projects/{pid}/extract/soa")
        client.post(f"/projects/{pid}/tables/soa/approve")
        client.post(f"/projects/{pid}/draft/procedures")

        raw = client.get(f"/projects/{pid}/draft/procedures")
        assert raw.status_code == 200
        assert "resolved_citations" not in raw.json()

        resolved = client.get(f"/projects/{pid}/draft/procedures", params={"resolve": 1})
        body = resolved.json()
        assert len(body["resolved_citations"]) == len(body["draft"]["citations"])
        chunk_cites = [c for c in body["resolved_citations"] if c["kind"] == "chunk"]
        assert chunk_cites and all(c["text"] for c in chunk_cites)

    def test_get_missing_draft_404(self, client):
        pid = create_golden_project(client)
        assert client.get(f"/projects/{pid}/draft/purpose").status_code == 404


class TestEvaluateEndpoint:
    def run_full_pipeline(self, client) -> str:
        pid = create_golden_project(client)
        client.put(f"/projects/{pid}/template", content=TEMPLATE)
        for kind in ("soa", "risk"):
            assert client.post(f"/projects/{pid}/extract/{kind}").status_code == 200
            assert client.post(f"/projects/{pid}/tables/{kind}/approve").status_code == 200
        for section in ("purpose", "procedures", "duration", "risks"):
            assert client.post(f"/projects/{pid}/draft/{section}").status_code == 200
        return pid

    def test_missing_drafts_409(self, client):
        pid = create_golden_project(client)
        resp = client.post(f"/projects/{pid}/evaluate", json={"reference_icf": REFERENCE})
        assert resp.status_code == 409

    def test_golden_report_reproduced(self, client):
        pid = self.run_full_pipeline(client)
        resp = client.post(f"/projects/{pid}/evaluate", json={"reference_icf": REFERENCE})
        assert resp.status_code == 200
        assert resp.json() == GOLDEN_REPORT

    def test_audit_has_no_draft_before_approval(self, client):
        pid = self.run_full_pipeline(client)
        events = client.get(f"/projects/{pid}/audit").json()["events"]
        approved_kinds = set()
        section_needs = {
            "Procedures": {"soa"},
            "DurationOfStudyInvolvement": {"soa"},
            "RisksAndDiscomforts": {"risk"},
            "PurposeOfResearch": set(),
        }
        for event in events:
            if event["event"] == "table.approved":
                approved_kinds.add(event["kind"])
            if event["event"] == "draft.created":
                assert section_needs[event["section"]] <= approved_kinds


class TestJobs:
    def test_async_extract_returns_202_and_completes(self, tmp_path):
        client = make_client(tmp_path, sync_jobs=False)
        pid = create_golden_project(client)
        resp = client.post(f"/projects/{pid}/extract/soa")
        assert resp.status_code == 202
        job_id = resp.json()["job_id"]
        for _ in range(100):
            status = client.get(f"/jobs/{job_id}").json()
            if status["status"] != "running":
                break
            time.sleep(0.02)
        assert status["status"] == "done"
        assert status["result"]["schema"] == "soa.v1"

    def test_unknown_job_404(self, client):
        assert client.get("/jobs/nope").status_code == 404

    def test_openapi_served(self, client):
        spec = client.get("/openapi.json").json()
        assert "/projects/{project_id}/draft/{section}" in spec["paths"]


class TestTableVersions:
    def test_historical_version_via_query(self, client):
        pid = create_golden_project(client)
        client.post(f"/projects/{pid}/extract/soa")
        client.post(f"/projects/{pid}/tables/soa/approve")
        v1 = client.get(f"/projects/{pid}/tables/soa", params={"version": 1}).json()
        assert v1["version"] == 1 and v1["status"] == "Extracted"
        current = client.get(f"/projects/{pid}/tables/soa").json()
        assert current["version"] == 2 and current["status"] == "Approved"
        missing = client.get(f"/projects/{pid}/tables/soa", params={"version": 9})
        assert missing.status_code == 404
