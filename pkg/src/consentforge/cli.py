"""Command-line front door for batch and offline runs of the pipeline.

Exit codes: 0 success, 2 input error, 3 backend error, 4 precondition
(approval gate / stale version). With the mock backend, timestamps pin to
SOURCE_DATE_EPOCH (default 0) so repeated runs produce byte-identical
artifacts.
"""

from __future__ import annotations

import logging
import os
import sys
from pathlib import Path

import click

from . import policy
from .corpus import ChunkConfig
from .errors import (
    BackendTimeout,
    BackendUnavailable,
    CitationViolation,
    ConsentForgeError,
    MalformedInput,
    NotApproved,
    PreconditionFailed,
    SchemaViolation,
    ScriptExhausted,
    VersionConflict,
)
from .project import (
    Project,
    build_cache,
    build_embedder,
    build_llm_backend,
    section_from_name,
)
from .util import SCHEMA_VERSIONS, read_json

EXIT_INPUT = 2
EXIT_BACKEND = 3
EXIT_PRECONDITION = 4

_PRECONDITION_ERRORS = (NotApproved, VersionConflict, PreconditionFailed)
_BACKEND_ERRORS = (
    BackendUnavailable,
    BackendTimeout,
    ScriptExhausted,
    SchemaViolation,
    CitationViolation,
)

logger = logging.getLogger(__name__)


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn):
    try:
        return fn()
    except _PRECONDITION_ERRORS as exc:
        _fail(f"{exc.code}: {exc}", EXIT_PRECONDITION)
    except _BACKEND_ERRORS as exc:
        _fail(f"{exc.code}: {exc}", EXIT_BACKEND)
    except ConsentForgeError as exc:
        _fail(f"{exc.code}: {exc}", EXIT_INPUT)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        _fail(str(exc), EXIT_INPUT)


def _pin_clock_for_mock(backend_name: str) -> None:
    if backend_name == "mock":
        os.environ.setdefault("SOURCE_DATE_EPOCH", "0")


def _backends(backend: str, script: str | None, dim: int | None = None):
    _pin_clock_for_mock(backend)
    llm = build_llm_backend(backend, Path(script) if script else None)
    embedder = build_embedder(backend, dim)
    cache = build_cache(backend)
    return llm, embedder, cache


backend_option = click.option(
    "--backend",
    type=click.Choice(["mock", "remote"]),
    default="mock",
    show_default=True,
    help="Model backend; mock needs --script.",
)
script_option = click.option(
    "--script", type=click.Path(exists=True, dir_okay=False), default=None,
    help="Scripted responses for the mock backend.",
)
project_option = click.option(
    "--project", "project_dir", required=True, type=click.Path(file_okay=False),
    help="Project directory.",
)


def _print_version(ctx, param, value):
    if not value or ctx.resilient_parsing:
        return
    click.echo("consentcli 0.1.0")
    for name, version in sorted(SCHEMA_VERSIONS.items()):
        click.echo(f"  {name}: {version}")
    ctx.exit()


@click.group()
@click.option(
    "--version", is_flag=True, callback=_print_version, expose_value=False,
    is_eager=True, help="Print program and schema versions.",
)
def main() -> None:
    """Draft and evaluate informed consent form sections from trial protocols."""
    logging.basicConfig(level=os.environ.get("CONSENTFORGE_LOG", "WARNING"))


@main.command()
@click.argument("protocol", type=click.Path(exists=True, dir_okay=False))
@project_option
@click.option("--template", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Site consent template to parse into guidelines.")
@click.option("--trial-ref", default=None, help="Registry id; defaults to the protocol filename.")
@click.option("--max-chars", default=1200, show_default=True)
@click.option("--overlap", default=120, show_default=True)
@backend_option
@script_option
def ingest(protocol, project_dir, template, trial_ref, max_chars, overlap, backend, script):
    """Parse, chunk, embed, and index a protocol."""

    def run():
        llm, embedder, cache = _backends(backend, script)
        ref = trial_ref or Path(protocol).stem
        project = Project.create(Path(project_dir), trial_ref=ref)
        markdown = Path(protocol).read_text(encoding="utf-8")
        cfg = ChunkConfig(max_chars=max_chars, overlap_chars=overlap)
        summary = project.ingest_protocol(markdown, embedder, cfg)
        if template:
            parsed = project.set_template(Path(template).read_text(encoding="utf-8"), llm, cache)
            summary["guidelines"] = len(parsed.guidelines)
        click.echo(
            f"ingested {summary['pages']} pages, {summary['sections']} sections, "
            f"{summary['chunks']} chunks"
        )
        return summary

    _guarded(run)


@main.command()
@click.argument("kind", type=click.Choice(["soa", "risk"]))
@project_option
@backend_option
@script_option
def extract(kind, project_dir, backend, script):
    """Extract the SOA or procedure-risk table for review."""

    def run():
        llm, _embedder, cache = _backends(backend, script)
        project = Project(Path(project_dir))
        table = project.extract_table(kind, llm, cache)
        click.echo(f"extracted {kind} table v{table.version} ({table.status.value})")

    _guarded(run)


@main.command()
@click.argument("kind", type=click.Choice(["soa", "risk"]))
@project_option
@click.option("--author", default="reviewer", show_default=True)
def approve(kind, project_dir, author):
    """Mark a reviewed table as approved."""

    def run():
        os.environ.setdefault("SOURCE_DATE_EPOCH", "0")
        project = Project(Path(project_dir))
        table = project.approve_table(kind, author=author)
        click.echo(f"{kind} table v{table.version}: {table.status.value}")

    _guarded(run)


@main.command()
@project_option
@click.option("--apply", "edits_file", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSON list of edits, each with target/op/payload/base_version.")
@click.option("--author", default="reviewer", show_default=True)
def edit(project_dir, edits_file, author):
    """Apply reviewer edits from a file (the review loop without the UI)."""

    def run():
        os.environ.setdefault("SOURCE_DATE_EPOCH", "0")
        project = Project(Path(project_dir))
        edits = read_json(Path(edits_file))
        if not isinstance(edits, list):
            raise MalformedInput("edits file must contain a JSON list")
        for item in edits:
            table = project.apply_table_edit(item["target"], item, author=author)
            click.echo(f"{item['target']} -> v{table.version} ({table.status.value})")

    _guarded(run)


@main.command()
@click.argument("section")
@project_option
@backend_option
@script_option
def draft(section, project_dir, backend, script):
    """Draft one section (purpose|procedures|duration|risks) or 'all'."""

    def run():
        llm, embedder, cache = _backends(backend, script)
        project = Project(Path(project_dir))
        if section == "all":
            targets = [policy.TargetSection.PURPOSE, policy.TargetSection.PROCEDURES,
                       policy.TargetSection.DURATION, policy.TargetSection.RISKS]
        else:
            targets = [section_from_name(section)]
        for target in targets:
            result = project.draft_section(target, llm, embedder, cache)
            click.echo(f"drafted {target.value} with {len(result.citations)} citations")
        if section == "all":
            project.render_icf()
            click.echo("rendered drafts/icf.md")

    _guarded(run)


@main.command("eval")
@project_option
@click.option("--reference", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Reference ICF in Markdown.")
@click.option("--rules", "rules_file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="rules.v1 file; defaults to the bundled FDA-derived set.")
@backend_option
@script_option
def eval_cmd(project_dir, reference, rules_file, backend, script):
    """Judge compliance and key-fact accuracy against a reference ICF."""

    try:
        rules = policy.load_rules(rules_file) if rules_file else policy.default_rules()
    except ConsentForgeError as exc:
        _fail(f"{exc.code}: {exc}", EXIT_INPUT)

    def run():
        llm, _embedder, cache = _backends(backend, script)
        project = Project(Path(project_dir))
        report = project.evaluate(
            Path(reference).read_text(encoding="utf-8"), rules, llm, cache
        )
        weighted = report.compliance_rate_weighted
        accuracy = report.factual_accuracy
        click.echo(
            "report written: compliance="
            + (f"{weighted:.3f}" if weighted is not None else "n/a")
            + " accuracy="
            + (f"{accuracy:.3f}" if accuracy is not None else "n/a")
        )

    _guarded(run)


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True, file_okay=False),
              help="Directory of trial subdirectories.")
@click.option("--a", "cfg_a", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--b", "cfg_b", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False),
              help="Output directory; defaults to <corpus>/bench-out.")
@click.option("--jobs", default=1, show_default=True, help="Parallel trials.")
def bench(corpus, cfg_a, cfg_b, out_dir, jobs):
    """Paired evaluation of two configurations over a trial corpus."""

    def run():
        from .bench import run_bench

        out = Path(out_dir) if out_dir else Path(corpus) / "bench-out"
        summary = run_bench(Path(corpus), Path(cfg_a), Path(cfg_b), out, jobs=jobs)
        click.echo(f"bench complete over {summary['trials']} trials; output in {out}")

    _guarded(run)


@main.command()
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--host", default=None)
@click.option("--port", default=None, type=int)
@click.option("--data-dir", default=None, type=click.Path(file_okay=False))
@backend_option
@script_option
@click.option("--ui-dir", default=None, type=click.Path(file_okay=False))
def serve(config_file, host, port, data_dir, backend, script, ui_dir):
    """Run the HTTP service (and static review UI when built)."""

    def run():
        import uvicorn

        from .server import create_app, load_server_config

        cfg = load_server_config(Path(config_file) if config_file else None)
        if host:
            cfg["host"] = host
        if port:
            cfg["port"] = port
        if data_dir:
            cfg["data_dir"] = data_dir
        if script:
            cfg["script"] = script
        if backend:
            cfg["backend"] = backend
        if ui_dir:
            cfg["ui_dir"] = ui_dir
        _pin_clock_for_mock(cfg["backend"])
        llm = build_llm_backend(cfg["backend"], Path(cfg["script"]) if cfg["script"] else None)
        embedder = build_embedder(cfg["backend"])
        cache = build_cache(cfg["backend"])
        app = create_app(
            Path(cfg["data_dir"]),
            llm,
            embedder,
            cache=cache,
            ui_dir=Path(cfg["ui_dir"]) if cfg.get("ui_dir") else None,
        )
        uvicorn.run(app, host=cfg["host"], port=cfg["port"])

    _guarded(run)


if __name__ == "__main__":
    main()
