import json

import pytest
from click.testing import CliRunner

from consentforge.cli import main
from consentforge.util import write_json

from conftest import FIXTURES

PROTOCOL = str(FIXTURES / "proto_small.md")
TEMPLATE = str(FIXTURES / "template_site.md")
REFERENCE = str(FIXTURES / "reference_icf.md")
SCRIPT = str(FIXTURES / "mock_script.json")


@pytest.fixture()
def runner():
    return CliRunner()


def ingest(runner, project_dir, extra=()):
    return runner.invoke(
        main,
        ["ingest", PROTOCOL, "--project", str(project_dir), "--script", SCRIPT,
         "--trial-ref", "NCT-CF-0042", *extra],
    )


class TestIngest:
    def test_summary_printed(self, runner, tmp_path):
        result = ingest(runner, tmp_path / "golden-project")
        assert result.exit_code == 0, result.output
        assert "12 pages, 8 sections, 8 chunks" in result.output

    def test_repeat_identical(self, runner, tmp_path):
        first = ingest(runner, tmp_path / "golden-project")
        second = ingest(runner, tmp_path / "golden-project")
        assert first.output == second.output

    def test_bad_sentinels_exit_2(self, runner, tmp_path):
        bad = tmp_path / "bad.md"
        bad.write_text("# A\n<!-- page: 2 -->\nx\n<!-- page: 1 -->\ny\n")
        result = runner.invoke(
            main, ["ingest", str(bad), "--project", str(tmp_path / "p"), "--script", SCRIPT]
        )
        assert result.exit_code == 2
        assert "malformed_input" in result.output


class TestPipelineExitCodes:
    def test_draft_before_approval_exit_4(self, runner, tmp_path):
        project = tmp_path / "golden-project"
        ingest(runner, project)
        runner.invoke(main, ["extract", "soa", "--project", str(project), "--script", SCRIPT])
        result = runner.invoke(
            main, ["draft", "procedures", "--project", str(project), "--script", SCRIPT]
        )
        assert result.exit_code == 4
        assert "not_approved" in result.output

    def test_script_exhaustion_exit_3(self, runner, tmp_path):
        project = tmp_path / "golden-project"
        ingest(runner, project)
        empty_script = tmp_path / "empty.json"
        empty_script.write_text('{"entries": []}')
        result = runner.invoke(
            main, ["extract", "soa", "--project", str(project), "--script", str(empty_script)]
        )
        assert result.exit_code == 3
        assert "script_exhausted" in result.output

    def test_mock_without_script_exit_2(self, runner, tmp_path):
        result = runner.invoke(
            main, ["extract", "soa", "--project", str(tmp_path / "p")]
        )
        assert result.exit_code == 2


class TestEditCommand:
    def test_apply_edits_file(self, runner, tmp_path):
        project = tmp_path / "golden-project"
        ingest(runner, project)
        runner.invoke(main, ["extract", "soa", "--project", str(project), "--script", SCRIPT])
        edits = [
            {"target": "soa", "op": "UpdateCell",
             "payload": {"procedure_index": 0, "timepoint_index": 0, "note": "fasting"},
             "base_version": 1},
        ]
        edits_file = tmp_path / "edits.json"
        write_json(edits_file, edits)
        result = runner.invoke(
            main, ["edit", "--project", str(project), "--apply", str(edits_file)]
        )
        assert result.exit_code == 0, result.output
        assert "soa -> v2 (Edited)" in result.output

    def test_stale_edit_exit_4(self, runner, tmp_path):
        project = tmp_path / "golden-project"
        ingest(runner, project)
        runner.invoke(main, ["extract", "soa", "--project", str(project), "--script", SCRIPT])
        edits_file = tmp_path / "edits.json"
        write_json(edits_file, [
            {"target": "soa", "op": "UpdateCell",
             "payload": {"procedure_index": 0, "timepoint_index": 0, "note": "x"},
             "base_version": 9},
        ])
        result = runner.invoke(
            main, ["edit", "--project", str(project), "--apply", str(edits_file)]
        )
        assert result.exit_code == 4


class TestFullFlow:
    def run_all(self, runner, project):
        steps = [
            ["ingest", PROTOCOL, "--project", str(project), "--template", TEMPLATE,
             "--script", SCRIPT, "--trial-ref", "NCT-CF-0042"],
            ["extract", "soa", "--project", str(project), "--script", SCRIPT],
            ["extract", "risk", "--project", str(project), "--script", SCRIPT],
            ["approve", "soa", "--project", str(project)],
            ["approve", "risk", "--project", str(project)],
            ["draft", "all", "--project", str(project), "--script", SCRIPT],
            ["eval", "--project", str(project), "--reference", REFERENCE,
             "--script", SCRIPT],
        ]
        for step in steps:
            result = runner.invoke(main, step)
            assert result.exit_code == 0, f"{step}: {result.output}"

    def test_full_flow_writes_artifacts(self, runner, tmp_path):
        project = tmp_path / "golden-project"
        self.run_all(runner, project)
        assert (project / "drafts" / "icf.md").exists()
        report = json.loads((project / "reports" / "report.json").read_text())
        assert report["schema"] == "report.v1"
        assert report["aggregates"]["factual_accuracy"] == 0.9


def test_version_prints_schemas(runner=None):
    runner = CliRunner()
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == 0
    assert "draft: draft.v1" in result.output
    assert "report: report.v1" in result.output
