"""Protocol Markdown parsing and retrieval chunking.

Input documents are ATX-heading Markdown with page boundaries marked by
sentinel lines of the form ``<!-- page: N -->`` (strictly increasing N).
Level-1/level-2 headings form the section tree; deeper headings stay in
body text. Chunks never cross a level-1/level-2 boundary, carry the
enclosing headings plus an inclusive page range, and reassemble to the
section body byte-for-byte once overlaps are dropped.
"""

from __future__ import annotations

import re
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterator

from .errors import MalformedInput
from .util import stable_hash_hex

PAGE_SENTINEL_RE = re.compile(r"^<!--\s*page:\s*(\d+)\s*-->$")
ATX_HEADING_RE = re.compile(r"^(#{1,6})[ \t]+(.+?)\s*$")
_SENTENCE_END_RE = re.compile(r"[.!?][\"')\]]*\s|\n")

DEFAULT_MAX_CHARS = 1200
DEFAULT_OVERLAP_CHARS = 120


@dataclass(frozen=True)
class Section:
    """One level-1 or level-2 heading with its verbatim body text.

    ``page_marks`` maps body offsets to the page active from that offset,
    in increasing offset order; it lets chunking attribute any slice of the
    body to its source pages.
    """

    heading: str
    level: int
    body: str
    pages: tuple[int, int]
    children: tuple["Section", ...] = ()
    page_marks: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class ProtocolDocument:
    doc_id: str
    title: str
    sections: tuple[Section, ...]
    page_count: int
    preamble: str = ""
    preamble_page_marks: tuple[tuple[int, int], ...] = ()
    page_texts: dict[int, str] = field(default_factory=dict)

    def page_text(self, page: int) -> str:
        return self.page_texts.get(page, "")


@dataclass(frozen=True)
class TocEntry:
    heading: str
    level: int
    pages: tuple[int, int]


@dataclass(frozen=True)
class TableOfContents:
    entries: tuple[TocEntry, ...]

    def headings(self, level: int | None = None) -> list[str]:
        return [e.heading for e in self.entries if level is None or e.level == level]


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    text: str
    header1: str
    header2: str | None
    pages: tuple[int, int]
    char_len: int

    def to_dict(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "doc_id": self.doc_id,
            "text": self.text,
            "header1": self.header1,
            "header2": self.header2,
            "page_start": self.pages[0],
            "page_end": self.pages[1],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Chunk":
        return cls(
            chunk_id=data["chunk_id"],
            doc_id=data["doc_id"],
            text=data["text"],
            header1=data["header1"],
            header2=data.get("header2"),
            pages=(data["page_start"], data["page_end"]),
            char_len=len(data["text"]),
        )


@dataclass(frozen=True)
class ChunkConfig:
    max_chars: int = DEFAULT_MAX_CHARS
    overlap_chars: int = DEFAULT_OVERLAP_CHARS

    def __post_init__(self) -> None:
        if self.max_chars <= 0:
            raise ValueError("max_chars must be positive")
        if self.overlap_chars < 0:
            raise ValueError("overlap_chars must be non-negative")
        if self.max_chars <= self.overlap_chars:
            raise ValueError("max_chars must exceed overlap_chars")


class _SectionBuilder:
    def __init__(self, heading: str, level: int, page: int) -> None:
        self.heading = heading
        self.level = level
        self.start_page = page
        self.parts: list[str] = []
        self.length = 0
        self.marks: list[tuple[int, int]] = []
        self.children: list[Section] = []

    def append(self, line: str, page: int) -> None:
        if not self.marks or self.marks[-1][1] != page:
            self.marks.append((self.length, page))
        self.parts.append(line)
        self.length += len(line)

    def finish(self) -> Section:
        body = "".join(self.parts)
        own_end = self.marks[-1][1] if self.marks else self.start_page
        if self.children:
            own_end = max(own_end, self.children[-1].pages[1])
        return Section(
            heading=self.heading,
            level=self.level,
            body=body,
            pages=(self.start_page, own_end),
            children=tuple(self.children),
            page_marks=tuple(self.marks),
        )


def parse_markdown(markdown: str, doc_id: str) -> ProtocolDocument:
    """Parse sentinel-annotated Markdown into a section tree with page spans.

    Raises MalformedInput for an empty document, non-increasing page
    sentinels, or a document with no level-1/level-2 headings at all.
    """
    if not markdown.strip():
        raise MalformedInput("empty document")

    page = 1
    last_sentinel = 0
    page_count = 1
    page_lines: dict[int, list[str]] = {}

    preamble = _SectionBuilder("", 0, 1)
    top: list[Section] = []
    open1: _SectionBuilder | None = None
    open2: _SectionBuilder | None = None

    def close2() -> None:
        nonlocal open2
        if open2 is not None:
            section = open2.finish()
            if open1 is not None:
                open1.children.append(section)
            else:
                top.append(section)
            open2 = None

    def close1() -> None:
        nonlocal open1
        if open1 is not None:
            top.append(open1.finish())
            open1 = None

    for line in markdown.splitlines(keepends=True):
        stripped = line.rstrip("\r\n")
        sentinel = PAGE_SENTINEL_RE.match(stripped.strip())
        if sentinel:
            value = int(sentinel.group(1))
            if value <= last_sentinel:
                raise MalformedInput(
                    f"page sentinel {value} does not increase (previous {last_sentinel})"
                )
            last_sentinel = value
            page = value
            page_count = max(page_count, value)
            continue

        page_lines.setdefault(page, []).append(line)
        heading = ATX_HEADING_RE.match(stripped)
        level = len(heading.group(1)) if heading else 0
        if heading and level <= 2:
            text = heading.group(2)
            if level == 1:
                close2()
                close1()
                open1 = _SectionBuilder(text, 1, page)
            else:
                close2()
                open2 = _SectionBuilder(text, 2, page)
        else:
            target = open2 or open1
            if target is not None:
                target.append(line, page)
            else:
                preamble.append(line, page)

    close2()
    close1()

    if not top:
        raise MalformedInput("document has no level-1 or level-2 headings")

    title = next((s.heading for s in top if s.level == 1), doc_id)
    page_texts = {p: "".join(lines) for p, lines in page_lines.items()}
    return ProtocolDocument(
        doc_id=doc_id,
        title=title,
        sections=tuple(top),
        page_count=page_count,
        preamble="".join(preamble.parts),
        preamble_page_marks=tuple(preamble.marks),
        page_texts=page_texts,
    )


def iter_section_contexts(
    doc: ProtocolDocument,
) -> Iterator[tuple[Section, str, str | None]]:
    """Yield (section, header1, header2) in document order."""
    for section in doc.sections:
        if section.level == 1:
            yield section, section.heading, None
            for child in section.children:
                yield child, section.heading, child.heading
        else:
            yield section, "", section.heading


def toc(doc: ProtocolDocument) -> TableOfContents:
    entries = [
        TocEntry(section.heading, section.level, section.pages)
        for section, _h1, _h2 in iter_section_contexts(doc)
    ]
    return TableOfContents(entries=tuple(entries))


def locate_pages(doc: ProtocolDocument, keywords: list[str]) -> list[int]:
    """Pages whose text contains at least one keyword, case-insensitive."""
    terms = [k.lower() for k in keywords if k]
    if not terms:
        raise ValueError("keywords must be non-empty")
    hits = [
        page
        for page, text in doc.page_texts.items()
        if any(term in text.lower() for term in terms)
    ]
    return sorted(hits)


def chunk_document(doc: ProtocolDocument, cfg: ChunkConfig | None = None) -> list[Chunk]:
    """Split each section body into chunks honoring size and heading bounds.

    Chunk i>0 within a body is prefixed with the trailing
    ``min(overlap_chars, start_offset)`` characters of the text before it;
    dropping that prefix and concatenating reproduces the body exactly.
    """
    cfg = cfg or ChunkConfig()
    chunks: list[Chunk] = []
    if doc.preamble:
        chunks.extend(
            _chunk_body(doc.preamble, doc.preamble_page_marks, doc.doc_id, "", None, cfg)
        )
    for section, header1, header2 in iter_section_contexts(doc):
        chunks.extend(
            _chunk_body(section.body, section.page_marks, doc.doc_id, header1, header2, cfg)
        )
    return chunks


def _chunk_body(
    body: str,
    marks: tuple[tuple[int, int], ...],
    doc_id: str,
    header1: str,
    header2: str | None,
    cfg: ChunkConfig,
) -> list[Chunk]:
    if not body:
        return []
    offsets = [m[0] for m in marks]
    pages = [m[1] for m in marks]

    def page_at(offset: int) -> int:
        idx = bisect_right(offsets, offset) - 1
        return pages[idx] if idx >= 0 else pages[0]

    chunks = []
    for i, (start, end) in enumerate(_segments(body, cfg)):
        lead = start if i == 0 else max(0, start - cfg.overlap_chars)
        text = body[lead:end]
        span = (page_at(lead), page_at(end - 1))
        chunk_id = stable_hash_hex(
            "\x1f".join([doc_id, header1, header2 or "", str(span[0]), str(span[1]), text])
        )
        chunks.append(
            Chunk(
                chunk_id=chunk_id,
                doc_id=doc_id,
                text=text,
                header1=header1,
                header2=header2,
                pages=span,
                char_len=len(text),
            )
        )
    return chunks


def _segments(body: str, cfg: ChunkConfig) -> list[tuple[int, int]]:
    """Non-overlapping [start, end) spans covering the whole body."""
    n = len(body)
    segments: list[tuple[int, int]] = []
    pos = 0
    budget = cfg.max_chars
    while pos < n:
        if n - pos <= budget:
            segments.append((pos, n))
            break
        cut = _preferred_cut(body, pos, budget)
        segments.append((pos, cut))
        pos = cut
        budget = cfg.max_chars - cfg.overlap_chars
    return segments


def _preferred_cut(body: str, pos: int, budget: int) -> int:
    """Cut at the latest sentence/line boundary in the window, else hard-cut."""
    window = body[pos : pos + budget]
    floor = max(1, budget // 2)
    best = 0
    for match in _SENTENCE_END_RE.finditer(window):
        if match.end() >= floor:
            best = max(best, match.end())
    return pos + (best if best else budget)


def reassemble_section(chunks: list[Chunk], overlap_chars: int) -> str:
    """Inverse of chunking for one body: drop overlap prefixes, concatenate."""
    out: list[str] = []
    total = 0
    for i, chunk in enumerate(chunks):
        drop = 0 if i == 0 else min(overlap_chars, total)
        out.append(chunk.text[drop:])
        total += len(chunk.text) - drop
    return "".join(out)
