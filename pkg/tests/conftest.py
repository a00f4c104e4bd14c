import random
import re
from pathlib import Path

import pytest

from consentforge import corpus, knowledge

FIXTURES = Path(__file__).parent.parent / "fixtures"

WORDS = (
    "study dose visit sample tumor response cycle screening consent site "
    "treatment infusion tablet imaging baseline follow review record staff "
    "participant outcome measure window protocol objective endpoint safety"
).split()


@pytest.fixture(scope="session")
def proto_small_text() -> str:
    return (FIXTURES / "proto_small.md").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def proto_small(proto_small_text) -> corpus.ProtocolDocument:
    return corpus.parse_markdown(proto_small_text, doc_id="proto-small")


def page_grep_oracle(markdown: str, keywords: list[str]) -> list[int]:
    """Independent page locator: split on sentinels, substring-search each page."""
    pages: dict[int, list[str]] = {}
    current = 1
    for line in markdown.splitlines(keepends=True):
        match = re.match(r"^<!--\s*page:\s*(\d+)\s*-->\s*$", line.strip())
        if match:
            current = int(match.group(1))
            continue
        pages.setdefault(current, []).append(line)
    terms = [k.lower() for k in keywords]
    return sorted(
        p for p, lines in pages.items() if any(t in "".join(lines).lower() for t in terms)
    )


def random_document(rng: random.Random, max_pages: int = 15) -> str:
    """Synthetic sentinel-annotated Markdown with unpredictable shape."""

    def sentence() -> str:
        n = rng.randint(3, 12)
        words = [rng.choice(WORDS) for _ in range(n)]
        return " ".join(words).capitalize() + rng.choice([".", ".", "!", "?"])

    def paragraph() -> str:
        return " ".join(sentence() for _ in range(rng.randint(1, 5)))

    lines: list[str] = []
    page = 0
    heading_count = rng.randint(1, 6)

    def maybe_page_break() -> None:
        nonlocal page
        if rng.random() < 0.5 and page < max_pages:
            page += 1
            lines.append(f"<!-- page: {page} -->")

    maybe_page_break()
    for n in range(heading_count):
        level = rng.choice([1, 1, 2])
        # Serial suffix keeps headings unique so (header1, header2) is a key.
        lines.append(f"{'#' * level} {rng.choice(WORDS).title()} {n + 1}")
        for _ in range(rng.randint(0, 4)):
            if rng.random() < 0.15:
                lines.append(f"### {rng.choice(WORDS).title()} detail")
            lines.append(paragraph())
            if rng.random() < 0.3:
                lines.append("")
            maybe_page_break()
    if not any(l.startswith("# ") or l.startswith("## ") for l in lines):
        lines.insert(0, "# Fallback Heading")
    return "\n".join(lines) + "\n"


def make_soa_table() -> knowledge.SoaTable:
    """The SOA table hand-transcribed from fixtures/proto_small.md pages 4-5."""
    return knowledge.SoaTable(
        timepoints=(
            knowledge.Timepoint("Day 1", 1, "Day 1"),
            knowledge.Timepoint("Day 29", 2, "Day 29"),
            knowledge.Timepoint("Day 57", 3, "Day 57"),
        ),
        procedures=(
            knowledge.Procedure("Physical examination"),
            knowledge.Procedure("Blood draw"),
            knowledge.Procedure("12-lead ECG"),
            knowledge.Procedure("Tumor imaging"),
        ),
        cells=(
            knowledge.SoaCell(0, 0), knowledge.SoaCell(0, 1), knowledge.SoaCell(0, 2),
            knowledge.SoaCell(1, 0), knowledge.SoaCell(1, 1), knowledge.SoaCell(1, 2),
            knowledge.SoaCell(2, 0),
            knowledge.SoaCell(3, 0), knowledge.SoaCell(3, 2),
        ),
        source_pages=(4, 5),
    )


def make_risk_table() -> knowledge.RiskTable:
    """Risk entries hand-labeled from fixtures/proto_small.md pages 7-8."""
    return knowledge.RiskTable(
        entries=(
            knowledge.RiskEntry("Blood draw", "bruising", knowledge.Likelihood.LIKELY,
                                source_pages=(7,)),
            knowledge.RiskEntry("Blood draw", "fainting", knowledge.Likelihood.RARE,
                                source_pages=(7,)),
            knowledge.RiskEntry("Oral dosing", "nausea", knowledge.Likelihood.LESS_LIKELY,
                                source_pages=(8,)),
        )
    )


def approve_table(table):
    edit = knowledge.make_approval_edit(table, author="test", timestamp="2026-01-01T00:00:00+00:00")
    return knowledge.apply_edit(table, edit)
