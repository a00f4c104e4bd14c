"""File-backed project store shared by the CLI and the HTTP service.

One directory per project holds every artifact as versioned JSON plus an
append-only ``audit.ndjson``. Writes take a project-scoped file lock;
reads work on immutable snapshots. Because both front doors run this
same code, they produce byte-identical artifacts for identical inputs.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import replace
from pathlib import Path

from filelock import FileLock

from . import corpus, drafting, evaluation, knowledge, policy, vecindex
from .errors import (
    MalformedInput,
    NotApproved,
    NotFound,
    PreconditionFailed,
)
from .llm import LlmBackend, MockLlmBackend, RemoteLlmBackend, ResponseCache, default_cache_dir
from .util import canonical_json, now_iso, read_json, write_json

logger = logging.getLogger(__name__)

TABLE_KINDS = ("soa", "risk")

SECTION_SLUGS = {
    policy.TargetSection.PURPOSE: "purpose",
    policy.TargetSection.PROCEDURES: "procedures",
    policy.TargetSection.DURATION: "duration",
    policy.TargetSection.RISKS: "risks",
}
SLUG_SECTIONS = {slug: section for section, slug in SECTION_SLUGS.items()}


def section_from_name(name: str) -> policy.TargetSection:
    """Accept short slugs ('risks') or enum values ('RisksAndDiscomforts')."""
    if name in SLUG_SECTIONS:
        return SLUG_SECTIONS[name]
    try:
        return policy.TargetSection(name)
    except ValueError:
        raise NotFound(f"unknown section {name!r}") from None


class Project:
    """One trial's artifacts under a single directory."""

    def __init__(self, root: Path) -> None:
        self.root = Path(root)
        if not (self.root / "project.json").exists():
            raise NotFound(f"no project at {self.root}")
        self.meta = read_json(self.root / "project.json")
        self._lock = FileLock(str(self.root / ".lock"))

    # ------------------------------------------------------------------
    # lifecycle

    @classmethod
    def create(cls, root: Path, trial_ref: str, project_id: str | None = None) -> "Project":
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        if (root / "project.json").exists():
            return cls(root)
        meta = {
            "schema": "project.v1",
            "project_id": project_id or root.name,
            "trial_ref": trial_ref,
            "created_at": now_iso(),
        }
        write_json(root / "project.json", meta)
        project = cls(root)
        project._audit("project.created", trial_ref=trial_ref)
        return project

    @property
    def project_id(self) -> str:
        return self.meta["project_id"]

    @property
    def trial_ref(self) -> str:
        return self.meta["trial_ref"]

    def _audit(self, event: str, **detail) -> None:
        record = {"ts": now_iso(), "event": event, **detail}
        with open(self.root / "audit.ndjson", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    def audit_events(self) -> list[dict]:
        path = self.root / "audit.ndjson"
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]

    # ------------------------------------------------------------------
    # ingestion

    def ingest_protocol(
        self,
        markdown: str,
        embedder,
        cfg: corpus.ChunkConfig | None = None,
    ) -> dict:
        """Parse, chunk, embed, and index the protocol; returns the summary."""
        if not markdown.strip():
            raise MalformedInput("protocol body is empty")
        with self._lock:
            doc = corpus.parse_markdown(markdown, doc_id=self.project_id)
            chunks = corpus.chunk_document(doc, cfg)
            vectors = vecindex.embed([c.text for c in chunks], embedder)
            index = vecindex.VectorIndex(dim=embedder.dim)
            index.upsert_chunks(list(zip(chunks, vectors)))

            (self.root / "protocol.md").write_text(markdown, encoding="utf-8")
            write_json(
                self.root / "chunks.json",
                {"schema": "corpus.chunk.v1", "chunks": [c.to_dict() for c in chunks]},
            )
            index.save(self.root / "index.json")
            summary = {
                "pages": doc.page_count,
                "sections": len(corpus.toc(doc).entries),
                "chunks": len(chunks),
            }
            self._audit("protocol.ingested", **summary)
            return summary

    def protocol_doc(self) -> corpus.ProtocolDocument:
        path = self.root / "protocol.md"
        if not path.exists():
            raise PreconditionFailed("no protocol has been ingested")
        return corpus.parse_markdown(path.read_text(encoding="utf-8"), doc_id=self.project_id)

    def index(self) -> vecindex.VectorIndex:
        path = self.root / "index.json"
        if not path.exists():
            raise PreconditionFailed("no protocol has been ingested")
        return vecindex.VectorIndex.load(path)

    def set_template(
        self,
        markdown: str,
        llm: LlmBackend,
        cache: ResponseCache | None = None,
    ) -> policy.TemplateParse:
        """Parse a site consent template into guidelines and persist them."""
        template_doc = corpus.parse_markdown(markdown, doc_id=f"{self.project_id}-template")
        with self._lock:
            parsed = policy.parse_consent_template(template_doc, llm, cache)
            guidelines = tuple(
                policy.attach_keywords(g, llm, cache) for g in parsed.guidelines
            )
            write_json(self.root / "guidelines.json", policy.guidelines_to_dict(guidelines))
            self._audit(
                "template.parsed",
                sections=[g.section.value for g in guidelines],
                missing=[s.value for s in parsed.missing_sections],
            )
            return replace(parsed, guidelines=guidelines)

    def guidelines(self) -> tuple[policy.SectionGuideline, ...]:
        path = self.root / "guidelines.json"
        if path.exists():
            return policy.guidelines_from_dict(read_json(path))
        return policy.default_guidelines()

    def guideline_for(self, section: policy.TargetSection) -> policy.SectionGuideline:
        for guideline in self.guidelines():
            if guideline.section == section:
                return guideline
        raise NotFound(f"no guideline for section {section.value}")

    # ------------------------------------------------------------------
    # tables

    def _table_dir(self, kind: str) -> Path:
        if kind not in TABLE_KINDS:
            raise NotFound(f"unknown table kind {kind!r}")
        return self.root / "tables" / kind

    def _generation_dir(self, kind: str, generation: int | None = None) -> Path | None:
        base = self._table_dir(kind)
        pointer = base / "LATEST.json"
        if generation is None:
            if not pointer.exists():
                return None
            generation = read_json(pointer)["generation"]
        return base / f"g{generation:03d}"

    def extract_table(
        self,
        kind: str,
        llm: LlmBackend,
        cache: ResponseCache | None = None,
    ):
        """Run extraction; each call starts a new generation, never destroys one."""
        doc = self.protocol_doc()
        with self._lock:
            if kind == "soa":
                table = knowledge.extract_soa(doc, llm, cache)
            else:
                table = knowledge.extract_risk_table(doc, llm, cache)
            base = self._table_dir(kind)
            pointer = base / "LATEST.json"
            generation = 1
            if pointer.exists():
                generation = read_json(pointer)["generation"] + 1
            gen_dir = base / f"g{generation:03d}"
            gen_dir.mkdir(parents=True, exist_ok=True)
            write_json(gen_dir / "extracted.json", table.to_dict())
            write_json(gen_dir / "current.json", table.to_dict())
            (gen_dir / "edits.ndjson").write_text("", encoding="utf-8")
            self._export_csv(kind, table, gen_dir)
            write_json(pointer, {"generation": generation})
            self._audit("table.extracted", kind=kind, generation=generation, version=table.version)
            return table

    def _export_csv(self, kind: str, table, gen_dir: Path) -> None:
        from .knowledge.tables import risk_to_csv, soa_to_csv

        csv_text = soa_to_csv(table) if kind == "soa" else risk_to_csv(table)
        (gen_dir / f"{kind}.csv").write_text(csv_text, encoding="utf-8")

    def table(self, kind: str):
        gen_dir = self._generation_dir(kind)
        if gen_dir is None:
            return None
        data = read_json(gen_dir / "current.json")
        if kind == "soa":
            return knowledge.SoaTable.from_dict(data)
        return knowledge.RiskTable.from_dict(data)

    def table_at_version(self, kind: str, version: int):
        """Reconstruct any historical table version by replaying the edit log."""
        snapshot, edits = self.table_snapshot_and_edits(kind)
        if version < snapshot.version:
            raise NotFound(f"{kind} table has no version {version}")
        table = snapshot
        for edit in edits:
            if table.version == version:
                return table
            table = knowledge.apply_edit(table, edit)
        if table.version != version:
            raise NotFound(f"{kind} table has no version {version}")
        return table

    def table_snapshot_and_edits(self, kind: str):
        """Extracted snapshot plus the recorded edit log, for replay checks."""
        gen_dir = self._generation_dir(kind)
        if gen_dir is None:
            raise NotFound(f"no {kind} table extracted")
        data = read_json(gen_dir / "extracted.json")
        snapshot = (
            knowledge.SoaTable.from_dict(data)
            if kind == "soa"
            else knowledge.RiskTable.from_dict(data)
        )
        edits = [
            knowledge.TableEdit.from_dict(json.loads(line))
            for line in (gen_dir / "edits.ndjson").read_text(encoding="utf-8").splitlines()
            if line
        ]
        return snapshot, edits

    def apply_table_edit(self, kind: str, edit_data: dict, author: str = "reviewer"):
        """Apply one optimistic-locked edit and append it to the log."""
        with self._lock:
            table = self.table(kind)
            if table is None:
                raise NotFound(f"no {kind} table extracted")
            edit = knowledge.TableEdit(
                target=kind,
                op=knowledge.EditOp(edit_data["op"]),
                payload=edit_data.get("payload", {}),
                author=edit_data.get("author", author),
                timestamp=now_iso(),
                base_version=edit_data["base_version"],
            )
            updated = knowledge.apply_edit(table, edit)
            gen_dir = self._generation_dir(kind)
            assert gen_dir is not None
            with open(gen_dir / "edits.ndjson", "a", encoding="utf-8") as fh:
                fh.write(json.dumps(edit.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")
            write_json(gen_dir / "current.json", updated.to_dict())
            self._export_csv(kind, updated, gen_dir)
            event = "table.approved" if updated.status == knowledge.TableStatus.APPROVED else "table.edited"
            self._audit(event, kind=kind, version=updated.version)
            return updated

    def approve_table(self, kind: str, author: str = "reviewer"):
        """Idempotent approval; re-approving an approved table is a no-op."""
        table = self.table(kind)
        if table is None:
            raise NotFound(f"no {kind} table extracted")
        if table.status == knowledge.TableStatus.APPROVED:
            return table
        edit = knowledge.make_approval_edit(table, author=author, timestamp=now_iso())
        return self.apply_table_edit(
            kind,
            {"op": edit.op.value, "payload": edit.payload, "base_version": edit.base_version},
            author=author,
        )

    # ------------------------------------------------------------------
    # drafting

    def _require_approved_tables(self, guideline: policy.SectionGuideline):
        soa = risk = None
        if guideline.requires_soa:
            soa = self.table("soa")
            if soa is None or soa.status != knowledge.TableStatus.APPROVED:
                raise NotApproved(
                    f"{guideline.section.value} drafting requires an approved SOA table"
                )
        if guideline.requires_risk_table:
            risk = self.table("risk")
            if risk is None or risk.status != knowledge.TableStatus.APPROVED:
                raise NotApproved(
                    f"{guideline.section.value} drafting requires an approved risk table"
                )
        return soa, risk

    def draft_section(
        self,
        section: policy.TargetSection,
        llm: LlmBackend,
        embedder,
        cache: ResponseCache | None = None,
    ) -> drafting.CitedDraft:
        guideline = self.guideline_for(section)
        soa, risk = self._require_approved_tables(guideline)
        doc = self.protocol_doc()
        index = self.index()
        with self._lock:
            query = drafting.synthesize_query(guideline, corpus.toc(doc), llm, cache)
            context = drafting.retrieve_context(index, embedder, query, guideline, soa, risk)
            draft = drafting.draft_section(guideline, context, llm, cache)
            slug = SECTION_SLUGS[section]
            write_json(self.root / "drafts" / f"{slug}.draft.json", draft.to_dict())
            write_json(
                self.root / "drafts" / f"{slug}.context.json",
                _context_to_dict(context),
            )
            self._audit("draft.created", section=section.value)
            return draft

    def draft(self, section: policy.TargetSection) -> drafting.CitedDraft | None:
        path = self.root / "drafts" / f"{SECTION_SLUGS[section]}.draft.json"
        if not path.exists():
            return None
        return drafting.CitedDraft.from_dict(read_json(path))

    def draft_context(self, section: policy.TargetSection) -> dict | None:
        path = self.root / "drafts" / f"{SECTION_SLUGS[section]}.context.json"
        if not path.exists():
            return None
        return read_json(path)

    def existing_drafts(self) -> list[drafting.CitedDraft]:
        out = []
        for section in drafting.CANONICAL_ORDER:
            draft = self.draft(section)
            if draft is not None:
                out.append(draft)
        return out

    def resolve_draft(self, section: policy.TargetSection) -> dict:
        """Draft plus per-citation source details for the review UI."""
        draft = self.draft(section)
        if draft is None:
            raise NotFound(f"no draft for section {section.value}")
        context = self.draft_context(section) or {"chunks": [], "special_inputs": []}
        chunk_info = {c["chunk_id"]: c for c in context["chunks"]}
        special_info = {s["ref"]: s for s in context["special_inputs"]}
        resolved = []
        for citation in draft.citations:
            entry = citation.to_dict()
            if citation.kind == "chunk" and citation.target in chunk_info:
                chunk = chunk_info[citation.target]
                entry["text"] = chunk["text"]
                entry["header1"] = chunk["header1"]
                entry["header2"] = chunk["header2"]
                entry["score"] = chunk["score"]
            elif citation.kind == "table" and citation.target in special_info:
                entry["text"] = special_info[citation.target]["text"]
            resolved.append(entry)
        return {"draft": draft.to_dict(), "resolved_citations": resolved}

    def render_icf(self) -> str:
        drafts = self.existing_drafts()
        if not drafts:
            raise PreconditionFailed("no drafts exist yet")
        doc = drafting.assemble_icf(drafts, {"trial_ref": self.trial_ref})
        rendered = drafting.render(doc, "markdown")
        (self.root / "drafts" / "icf.md").write_text(rendered, encoding="utf-8")
        return rendered

    # ------------------------------------------------------------------
    # evaluation

    def evaluate(
        self,
        reference_markdown: str,
        rules: policy.RuleSet,
        llm: LlmBackend,
        cache: ResponseCache | None = None,
    ) -> evaluation.TrialReport:
        drafts = self.existing_drafts()
        if not drafts:
            raise PreconditionFailed("no drafts to evaluate")
        reference_doc = corpus.parse_markdown(
            reference_markdown, doc_id=f"{self.project_id}-reference"
        )
        with self._lock:
            generated = drafting.assemble_icf(drafts, {"trial_ref": self.trial_ref})
            reference = evaluation.standardize_reference(reference_doc, llm, cache)
            report = evaluation.evaluate_trial(
                generated, reference, rules, llm, cache, trial_ref=self.trial_ref
            )
            write_json(self.root / "reports" / "report.json", report.to_dict())
            self._audit("report.created")
            return report

    def report(self) -> dict | None:
        path = self.root / "reports" / "report.json"
        if not path.exists():
            return None
        return read_json(path)

    # ------------------------------------------------------------------
    # state summary

    def state(self) -> dict:
        tables = {}
        for kind in TABLE_KINDS:
            table = self.table(kind)
            tables[kind] = (
                None
                if table is None
                else {"status": table.status.value, "version": table.version}
            )
        return {
            "project_id": self.project_id,
            "trial_ref": self.trial_ref,
            "protocol_ingested": (self.root / "protocol.md").exists(),
            "tables": tables,
            "drafts": [d.section.value for d in self.existing_drafts()],
            "report": self.report() is not None,
        }


def _context_to_dict(context: drafting.ContextBundle) -> dict:
    return {
        "chunks": [
            {**chunk.to_dict(), "score": score} for chunk, score in context.hits
        ],
        "special_inputs": [
            {"ref": s.ref, "text": s.text, "pages": list(s.pages)}
            for s in (context.special_inputs or ())
        ],
    }


# ---------------------------------------------------------------------------
# backend construction shared by CLI and server


def build_llm_backend(name: str, script: Path | None = None) -> LlmBackend:
    if name == "mock":
        if script is None:
            raise MalformedInput("mock backend requires a script file")
        return MockLlmBackend.from_script_file(script)
    if name == "remote":
        return RemoteLlmBackend.from_env()
    raise MalformedInput(f"unknown backend {name!r} (expected 'mock' or 'remote')")


def build_embedder(name: str, dim: int | None = None):
    if name == "mock":
        return vecindex.HashingEmbedder(dim or vecindex.DEFAULT_DIM)
    if name == "remote":
        return vecindex.RemoteEmbedder.from_env(cache_dir=default_cache_dir() / "embeddings")
    raise MalformedInput(f"unknown embedder backend {name!r}")


def build_cache(backend_name: str) -> ResponseCache | None:
    """Disk cache is on for remote backends, off for the mock."""
    if backend_name == "remote" and os.environ.get("CONSENTFORGE_NO_CACHE") != "1":
        return ResponseCache(default_cache_dir() / "completions")
    return None


def canonical_table_json(table) -> str:
    return canonical_json(table.to_dict())
