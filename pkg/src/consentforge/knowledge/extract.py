"""LLM-driven extraction of the SOA and procedure-risk tables.

Both extractions follow the same three-step shape: locate candidate pages
by keyword, prompt the backend for structured content over those pages
only, then assemble and validate. Results always carry source pages from
the located set and start life in Extracted status awaiting review.
"""

from __future__ import annotations

import logging

from ..corpus import ProtocolDocument, locate_pages
from ..errors import ExtractionEmpty, SchemaViolation
from ..llm import LlmBackend, LlmRequest, ResponseCache, complete
from ..prompts import render_prompt
from .tables import (
    Procedure,
    RiskEntry,
    RiskTable,
    SoaCell,
    SoaTable,
    Timepoint,
    normalize_likelihood,
    validate_risk,
    validate_soa,
)

logger = logging.getLogger(__name__)

SOA_KEYWORDS = [
    "schedule of assessment",
    "schedule of activities",
    "schedule of events",
    "visit schedule",
]

RISK_KEYWORDS = [
    "risk",
    "adverse",
    "discomfort",
    "side effect",
]

def _page_blob(doc: ProtocolDocument, pages: list[int]) -> str:
    parts = [f"[page {p}]\n{doc.page_text(p)}" for p in pages]
    return "\n\n".join(parts)


def extract_soa(
    doc: ProtocolDocument,
    llm: LlmBackend,
    cache: ResponseCache | None = None,
) -> SoaTable:
    """Extract the schedule-of-assessments table for human review.

    Raises ExtractionEmpty when no candidate pages exist or the backend
    finds no table, SchemaViolation when the assembled table breaks an
    invariant (for example duplicate timepoint labels).
    """
    pages = locate_pages(doc, SOA_KEYWORDS)
    if not pages:
        raise ExtractionEmpty("no pages matched the schedule-of-assessments keywords")
    blob = _page_blob(doc, pages)

    system, user = render_prompt("soa.axes", pages=blob)
    axes = complete(
        LlmRequest(tag="soa.axes", system=system, user=user, schema_id="soa.axes.v1"),
        llm,
        cache=cache,
    ).parsed
    procedures = tuple(Procedure(name=p["name"]) for p in axes["procedures"])
    timepoints = tuple(
        Timepoint(
            label=t["label"],
            visit_number=t.get("visit_number"),
            day_or_window=t.get("day_or_window"),
            is_visit=t.get("is_visit", True),
        )
        for t in axes["timepoints"]
    )
    if not procedures or not timepoints:
        raise ExtractionEmpty("backend found no procedures or timepoints")

    system, user = render_prompt(
        "soa.cells",
        procedures=", ".join(f"{i}={p.name}" for i, p in enumerate(procedures)),
        timepoints=", ".join(f"{i}={t.label}" for i, t in enumerate(timepoints)),
        pages=blob,
    )
    cells_resp = complete(
        LlmRequest(tag="soa.cells", system=system, user=user, schema_id="soa.cells.v1"),
        llm,
        cache=cache,
    ).parsed
    cells = tuple(
        sorted(
            (
                SoaCell(
                    procedure_index=c["procedure_index"],
                    timepoint_index=c["timepoint_index"],
                    note=c.get("note"),
                )
                for c in cells_resp["cells"]
            ),
            key=lambda c: (c.procedure_index, c.timepoint_index),
        )
    )

    table = SoaTable(
        timepoints=timepoints,
        procedures=procedures,
        cells=cells,
        source_pages=tuple(pages),
    )
    issues = validate_soa(table)
    if issues:
        raise SchemaViolation(
            "extracted SOA table is invalid: "
            + "; ".join(f"{i.code}: {i.message}" for i in issues)
        )
    return table


def extract_risk_table(
    doc: ProtocolDocument,
    llm: LlmBackend,
    cache: ResponseCache | None = None,
) -> RiskTable:
    """Extract the procedure-risk table for human review.

    Duplicate (procedure, risk) pairs from the backend are merged with
    notes concatenated; entries citing pages outside the located candidate
    set are rejected.
    """
    pages = locate_pages(doc, RISK_KEYWORDS)
    if not pages:
        raise ExtractionEmpty("no pages matched the risk keywords")
    located = set(pages)
    blob = _page_blob(doc, pages)

    system, user = render_prompt("risk.entries", pages=blob)
    parsed = complete(
        LlmRequest(tag="risk.entries", system=system, user=user, schema_id="risk.entries.v1"),
        llm,
        cache=cache,
    ).parsed

    merged: dict[tuple[str, str], RiskEntry] = {}
    order: list[tuple[str, str]] = []
    for raw in parsed["entries"]:
        cited = sorted(set(raw["source_pages"]) & located)
        if not cited:
            raise SchemaViolation(
                f"risk entry ({raw['procedure']!r}, {raw['risk']!r}) cites pages "
                f"{raw['source_pages']} outside the located set {sorted(located)}"
            )
        entry = RiskEntry(
            procedure=raw["procedure"],
            risk=raw["risk"],
            likelihood=normalize_likelihood(raw["likelihood"]),
            note=raw.get("note"),
            source_pages=tuple(cited),
        )
        key = (entry.procedure, entry.risk)
        if key in merged:
            prior = merged[key]
            notes = [n for n in (prior.note, entry.note) if n]
            merged[key] = RiskEntry(
                procedure=prior.procedure,
                risk=prior.risk,
                likelihood=prior.likelihood,
                note="; ".join(notes) if notes else None,
                source_pages=tuple(sorted(set(prior.source_pages) | set(entry.source_pages))),
            )
            logger.info("merged duplicate risk entry %s", key)
        else:
            merged[key] = entry
            order.append(key)

    if not merged:
        raise ExtractionEmpty("backend returned no risk entries")
    table = RiskTable(entries=tuple(merged[key] for key in order))
    issues = validate_risk(table)
    if issues:
        raise SchemaViolation(
            "extracted risk table is invalid: "
            + "; ".join(f"{i.code}: {i.message}" for i in issues)
        )
    return table
