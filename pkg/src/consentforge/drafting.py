"""Section drafting: query synthesis, filtered retrieval, cited generation.

Draft bodies embed inline markers ``[[c:<chunk_id>]]`` for protocol chunks
and ``[[t:<table_ref>]]`` for narrative rows derived from the approved
tables. A draft is only accepted once every marker resolves against its
own retrieval context; a backend that cites unknown sources gets one
corrective retry and then fails loudly. Markers are never stripped
silently.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .corpus import Chunk, TableOfContents
from .errors import (
    CitationViolation,
    DuplicateSection,
    EmptyContext,
    NotApproved,
)
from .knowledge import (
    RiskTable,
    SoaTable,
    derive_duration,
    duration_sentence,
    risks_to_narratives,
    soa_to_narratives,
)
from .llm import LlmBackend, LlmRequest, ResponseCache, complete
from .policy import SECTION_TITLES, SectionGuideline, TargetSection
from .prompts import render_prompt
from .util import now_iso
from .vecindex import MetadataFilter, VectorIndex

logger = logging.getLogger(__name__)

MARKER_RE = re.compile(r"\[\[(c|t):([^\[\]\s]+)\]\]")

CANONICAL_ORDER = (
    TargetSection.PURPOSE,
    TargetSection.PROCEDURES,
    TargetSection.DURATION,
    TargetSection.RISKS,
)

DEFAULT_K = 8


@dataclass(frozen=True)
class RetrievalQuery:
    query_text: str
    filter: MetadataFilter
    k: int = DEFAULT_K

    def __post_init__(self) -> None:
        if not self.query_text:
            raise ValueError("query_text must be non-empty")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class SpecialInput:
    """One table-derived narrative offered to the drafter, citable as [[t:ref]]."""

    ref: str
    text: str
    pages: tuple[int, ...]


@dataclass(frozen=True)
class ContextBundle:
    hits: tuple[tuple[Chunk, float], ...]
    special_inputs: tuple[SpecialInput, ...] | None = None

    def chunk_ids(self) -> set[str]:
        return {chunk.chunk_id for chunk, _score in self.hits}

    def table_refs(self) -> set[str]:
        if self.special_inputs is None:
            return set()
        return {s.ref for s in self.special_inputs}

    def is_empty(self) -> bool:
        return not self.hits and not (self.special_inputs or ())


@dataclass(frozen=True)
class Citation:
    marker: str
    kind: str  # "chunk" | "table"
    target: str
    pages: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "marker": self.marker,
            "kind": self.kind,
            "target": self.target,
            "pages": list(self.pages),
        }


@dataclass(frozen=True)
class CitedDraft:
    section: TargetSection
    body: str
    citations: tuple[Citation, ...]
    model_info: str
    created_at: str

    def to_dict(self) -> dict:
        return {
            "schema": "draft.v1",
            "section": self.section.value,
            "body": self.body,
            "citations": [c.to_dict() for c in self.citations],
            "model_info": self.model_info,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CitedDraft":
        return cls(
            section=TargetSection(data["section"]),
            body=data["body"],
            citations=tuple(
                Citation(
                    marker=c["marker"],
                    kind=c["kind"],
                    target=c["target"],
                    pages=tuple(c["pages"]),
                )
                for c in data["citations"]
            ),
            model_info=data["model_info"],
            created_at=data["created_at"],
        )


# ---------------------------------------------------------------------------
# query synthesis

def synthesize_query(
    guideline: SectionGuideline,
    contents: TableOfContents,
    llm: LlmBackend,
    cache: ResponseCache | None = None,
    k: int = DEFAULT_K,
) -> RetrievalQuery:
    """Ask the backend for a query + metadata filter, then sanitize the filter.

    Filter headings the document does not actually contain are dropped with
    a warning rather than failing the draft.
    """
    if not contents.entries:
        raise ValueError("table of contents is empty")
    toc_lines = [
        f"{'#' * e.level} {e.heading} (pages {e.pages[0]}-{e.pages[1]})"
        for e in contents.entries
    ]
    system, user = render_prompt(
        "draft.query",
        section=guideline.section.value,
        keywords=", ".join(guideline.keywords),
        instructions="\n- ".join(guideline.instructions),
        toc="\n".join(toc_lines),
    )
    parsed = complete(
        LlmRequest(tag="draft.query", system=system, user=user, schema_id="query.v1"),
        llm,
        cache=cache,
    ).parsed

    known1 = set(contents.headings(level=1))
    known2 = set(contents.headings(level=2))
    header1 = _keep_known(parsed.get("header1_any"), known1, "header1")
    header2 = _keep_known(parsed.get("header2_any"), known2, "header2")
    page_min = parsed.get("page_min")
    page_max = parsed.get("page_max")
    if page_min is not None and page_max is not None and page_min > page_max:
        logger.warning("dropping inverted page bounds %s..%s", page_min, page_max)
        page_min = page_max = None
    return RetrievalQuery(
        query_text=parsed["query_text"],
        filter=MetadataFilter(
            header1_any=frozenset(header1) if header1 else None,
            header2_any=frozenset(header2) if header2 else None,
            page_min=page_min,
            page_max=page_max,
        ),
        k=k,
    )


def _keep_known(proposed: list[str] | None, known: set[str], label: str) -> list[str]:
    if not proposed:
        return []
    kept = [h for h in proposed if h in known]
    for h in proposed:
        if h not in known:
            logger.warning("dropping hallucinated %s filter heading %r", label, h)
    return kept


# ---------------------------------------------------------------------------
# context retrieval


def retrieve_context(
    index: VectorIndex,
    embedder,
    query: RetrievalQuery,
    guideline: SectionGuideline,
    soa: SoaTable | None = None,
    risks: RiskTable | None = None,
) -> ContextBundle:
    """Search the index and attach table narratives the guideline requires."""
    special: list[SpecialInput] | None = None
    if guideline.requires_soa or guideline.requires_risk_table:
        special = []
        if guideline.requires_soa:
            if soa is None:
                raise NotApproved(
                    f"{guideline.section.value} drafting requires an approved SOA table"
                )
            for i, narrative in enumerate(soa_to_narratives(soa)):
                special.append(
                    SpecialInput(
                        ref=f"soa:{i}", text=narrative.paragraph, pages=soa.source_pages
                    )
                )
            if guideline.section == TargetSection.DURATION:
                summary = derive_duration(soa)
                special.append(
                    SpecialInput(
                        ref="soa:duration",
                        text=duration_sentence(summary),
                        pages=soa.source_pages,
                    )
                )
        if guideline.requires_risk_table:
            if risks is None:
                raise NotApproved(
                    f"{guideline.section.value} drafting requires an approved risk table"
                )
            for i, narrative in enumerate(risks_to_narratives(risks)):
                pages = sorted(
                    {
                        p
                        for e in risks.entries
                        if e.procedure == narrative.procedure
                        for p in e.source_pages
                    }
                )
                special.append(
                    SpecialInput(ref=f"risk:{i}", text=narrative.paragraph, pages=tuple(pages))
                )

    query_vec = embedder.embed([query.query_text])[0]
    raw_hits = index.search(query_vec, filter=query.filter, k=query.k)
    hits = tuple((index.get(h.chunk_id), h.score) for h in raw_hits)

    bundle = ContextBundle(
        hits=hits, special_inputs=tuple(special) if special is not None else None
    )
    if bundle.is_empty():
        raise EmptyContext(
            f"no chunks matched and no table narratives exist for {guideline.section.value}"
        )
    return bundle


# ---------------------------------------------------------------------------
# citation resolution


def resolve_citations(draft_body: str, context: ContextBundle) -> list[Citation]:
    """Resolve every inline marker against the context; unknown targets fail.

    Repeated markers resolve once, in first-appearance order. The function
    is pure and idempotent.
    """
    chunk_pages = {chunk.chunk_id: chunk.pages for chunk, _score in context.hits}
    table_pages = {s.ref: s.pages for s in (context.special_inputs or ())}
    citations: list[Citation] = []
    seen: set[str] = set()
    unknown: list[str] = []
    for match in MARKER_RE.finditer(draft_body):
        marker = match.group(0)
        if marker in seen:
            continue
        seen.add(marker)
        kind, target = match.group(1), match.group(2)
        if kind == "c":
            if target not in chunk_pages:
                unknown.append(marker)
                continue
            citations.append(
                Citation(marker=marker, kind="chunk", target=target, pages=tuple(chunk_pages[target]))
            )
        else:
            if target not in table_pages:
                unknown.append(marker)
                continue
            citations.append(
                Citation(marker=marker, kind="table", target=target, pages=table_pages[target])
            )
    if unknown:
        raise CitationViolation(
            "markers do not resolve to the retrieval context: " + ", ".join(unknown),
            markers=unknown,
        )
    return citations


def strip_markers(body: str) -> str:
    """Remove citation markers, collapsing the space they occupied."""
    stripped = MARKER_RE.sub("", body)
    stripped = re.sub(r" +([.,;:!?])", r"\1", stripped)
    return re.sub(r"[ \t]{2,}", " ", stripped)


# ---------------------------------------------------------------------------
# drafting

def draft_section(
    guideline: SectionGuideline,
    context: ContextBundle,
    llm: LlmBackend,
    cache: ResponseCache | None = None,
    clock: str | None = None,
) -> CitedDraft:
    """Generate a cited draft; validates citations before returning.

    On a citation violation the backend gets exactly one corrective retry
    with the offending markers named, then the violation propagates.
    """
    if context.is_empty():
        raise EmptyContext(f"cannot draft {guideline.section.value} from an empty context")
    system, prompt = render_prompt(
        "draft.section", context=_draft_prompt(guideline, context)
    )
    violation: CitationViolation | None = None
    user = prompt
    for _attempt in range(2):
        parsed = complete(
            LlmRequest(
                tag="draft.section",
                system=system,
                user=user,
                schema_id="draftbody.v1",
            ),
            llm,
            cache=cache,
        )
        body = parsed.parsed["body"]
        try:
            citations = resolve_citations(body, context)
            _check_grounding(guideline, context, citations)
        except CitationViolation as exc:
            violation = exc
            logger.warning("draft for %s rejected: %s", guideline.section.value, exc)
            user = prompt + f"\n\nYour previous draft was rejected: {exc} Cite only the markers listed above."
            continue
        return CitedDraft(
            section=guideline.section,
            body=body,
            citations=tuple(citations),
            model_info=parsed.backend_id,
            created_at=clock if clock is not None else now_iso(),
        )
    assert violation is not None
    raise violation


def _check_grounding(
    guideline: SectionGuideline, context: ContextBundle, citations: list[Citation]
) -> None:
    if context.special_inputs and not any(c.kind == "table" for c in citations):
        raise CitationViolation(
            f"{guideline.section.value} must cite at least one table narrative "
            "([[t:...]] marker)",
            markers=[],
        )


def _draft_prompt(guideline: SectionGuideline, context: ContextBundle) -> str:
    parts = [
        f"Target section: {guideline.section.value}",
        "Instructions:\n- " + "\n- ".join(guideline.instructions),
        "Protocol excerpts (cite with the marker shown):",
    ]
    for chunk, score in context.hits:
        head = chunk.header1 + (f" > {chunk.header2}" if chunk.header2 else "")
        parts.append(
            f"[[c:{chunk.chunk_id}]] (pages {chunk.pages[0]}-{chunk.pages[1]}, "
            f"{head}, score {score:.3f})\n{chunk.text}"
        )
    if context.special_inputs:
        parts.append("Reviewed table content (cite with the marker shown):")
        for special in context.special_inputs:
            parts.append(f"[[t:{special.ref}]]\n{special.text}")
    return "\n\n".join(parts)


# ---------------------------------------------------------------------------
# assembly and rendering


@dataclass(frozen=True)
class IcfDocument:
    drafts: tuple[CitedDraft, ...]  # canonical section order
    site_meta: dict

    def to_dict(self) -> dict:
        return {
            "schema": "icf.v1",
            "site_meta": self.site_meta,
            "sections": [d.to_dict() for d in self.drafts],
        }


def assemble_icf(drafts: list[CitedDraft], site_meta: dict | None = None) -> IcfDocument:
    """Order drafts canonically: Purpose, Procedures, Duration, Risks."""
    by_section: dict[TargetSection, CitedDraft] = {}
    for draft in drafts:
        if draft.section in by_section:
            raise DuplicateSection(f"two drafts for {draft.section.value}")
        by_section[draft.section] = draft
    ordered = tuple(by_section[s] for s in CANONICAL_ORDER if s in by_section)
    return IcfDocument(drafts=ordered, site_meta=site_meta or {})


def render(doc: IcfDocument, mode: str = "markdown") -> str:
    """Render the assembled document with numbered source footnotes."""
    if mode not in ("markdown", "html"):
        raise ValueError(f"unsupported render mode {mode!r}")

    numbering: dict[str, int] = {}
    footnotes: list[Citation] = []
    for draft in doc.drafts:
        for citation in draft.citations:
            if citation.marker not in numbering:
                numbering[citation.marker] = len(numbering) + 1
                footnotes.append(citation)

    def replace_marker(match: re.Match) -> str:
        marker = match.group(0)
        n = numbering.get(marker)
        if n is None:
            return marker
        if mode == "markdown":
            return f"[{n}]"
        return f'<sup><a href="#fn-{n}">[{n}]</a></sup>'

    if mode == "markdown":
        lines = ["# Informed Consent Form", ""]
        if doc.site_meta.get("trial_ref"):
            lines += [f"Trial: {doc.site_meta['trial_ref']}", ""]
        for draft in doc.drafts:
            lines.append(f"## {SECTION_TITLES[draft.section]}")
            lines.append("")
            lines.append(MARKER_RE.sub(replace_marker, draft.body).strip())
            lines.append("")
        if footnotes:
            lines.append("## Sources")
            lines.append("")
            for citation in footnotes:
                lines.append(f"[{numbering[citation.marker]}] {_footnote_text(citation)}")
            lines.append("")
        return "\n".join(lines)

    html = ["<!DOCTYPE html>", "<html><head><meta charset=\"utf-8\">",
            "<title>Informed Consent Form</title></head><body>",
            "<h1>Informed Consent Form</h1>"]
    if doc.site_meta.get("trial_ref"):
        html.append(f"<p>Trial: {_escape(doc.site_meta['trial_ref'])}</p>")
    for draft in doc.drafts:
        html.append(f"<h2>{_escape(SECTION_TITLES[draft.section])}</h2>")
        for paragraph in draft.body.split("\n\n"):
            rendered = MARKER_RE.sub(replace_marker, _escape(paragraph).strip())
            html.append(f"<p>{rendered}</p>")
    if footnotes:
        html.append("<h2>Sources</h2><ol>")
        for citation in footnotes:
            n = numbering[citation.marker]
            html.append(f'<li id="fn-{n}">{_escape(_footnote_text(citation))}</li>')
        html.append("</ol>")
    html.append("</body></html>")
    return "\n".join(html)


def _footnote_text(citation: Citation) -> str:
    pages = citation.pages
    if citation.kind == "chunk":
        where = f"pages {pages[0]}-{pages[1]}" if pages else "pages unknown"
        return f"Protocol, {where} (chunk {citation.target})"
    label = "Schedule of assessments" if citation.target.startswith("soa") else "Procedure risk table"
    where = "pages " + ", ".join(str(p) for p in pages) if pages else "reviewed table"
    return f"{label}, {where} ({citation.target})"


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    )
