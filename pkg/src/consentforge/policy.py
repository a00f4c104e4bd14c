"""Compliance rules and site-template drafting guidelines.

The default rule bundle is regulatory data shipped with the package: 18
rules derived from FDA informed-consent guidance, each mapped to exactly
one of the four evaluated sections. Site consent templates parse once
into per-section guidelines that are reusable for every trial at the
same site.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path

from .corpus import ProtocolDocument, iter_section_contexts
from .errors import SchemaViolation, UnknownSection
from .llm import LlmBackend, LlmRequest, ResponseCache, complete, validate_against_schema
from .prompts import render_prompt
from .util import read_json

logger = logging.getLogger(__name__)


class TargetSection(str, Enum):
    PURPOSE = "PurposeOfResearch"
    PROCEDURES = "Procedures"
    DURATION = "DurationOfStudyInvolvement"
    RISKS = "RisksAndDiscomforts"
    NOT_APPLICABLE = "NotApplicable"


EVALUATED_SECTIONS = (
    TargetSection.PURPOSE,
    TargetSection.PROCEDURES,
    TargetSection.DURATION,
    TargetSection.RISKS,
)

SECTION_TITLES = {
    TargetSection.PURPOSE: "Purpose of Research",
    TargetSection.PROCEDURES: "Procedures",
    TargetSection.DURATION: "Duration of Study Involvement",
    TargetSection.RISKS: "Risks and Discomforts",
}


@dataclass(frozen=True)
class Rule:
    rule_id: str
    section: TargetSection
    name: str
    description: str


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...]

    def __len__(self) -> int:
        return len(self.rules)

    def rules_for_section(self, section: TargetSection) -> tuple[Rule, ...]:
        return tuple(r for r in self.rules if r.section == section)


def load_rules(path: Path | str) -> RuleSet:
    """Load a rules.v1 file, enforcing unique ids and valid sections."""
    data = read_json(Path(path))
    return _rules_from_data(data, source=str(path))


def default_rules() -> RuleSet:
    data = resources.files("consentforge.data").joinpath("rules_fda_v1.json")
    return _rules_from_data(
        json.loads(data.read_text(encoding="utf-8")), source="bundled"
    )


def _rules_from_data(data: dict, source: str) -> RuleSet:
    validate_against_schema(data, "rules.v1")
    rules = []
    seen: set[str] = set()
    for raw in data["rules"]:
        if raw["rule_id"] in seen:
            raise SchemaViolation(
                f"duplicate rule_id {raw['rule_id']!r} in {source}", rule_id=raw["rule_id"]
            )
        seen.add(raw["rule_id"])
        try:
            section = TargetSection(raw["section"])
        except ValueError as exc:
            raise UnknownSection(f"rule {raw['rule_id']}: {raw['section']!r}") from exc
        if section == TargetSection.NOT_APPLICABLE:
            raise UnknownSection(f"rule {raw['rule_id']} may not target NotApplicable")
        rules.append(
            Rule(
                rule_id=raw["rule_id"],
                section=section,
                name=raw["name"],
                description=raw["description"],
            )
        )
    return RuleSet(rules=tuple(rules))


# ---------------------------------------------------------------------------
# section guidelines


@dataclass(frozen=True)
class SectionGuideline:
    """Drafting directives for one target section.

    The table-dependency flags are derived from the section identity, never
    set by callers: the schedule feeds Procedures and Duration, the risk
    table feeds Risks and Discomforts.
    """

    section: TargetSection
    instructions: tuple[str, ...]
    keywords: tuple[str, ...] = ()
    requires_soa: bool = field(init=False, default=False)
    requires_risk_table: bool = field(init=False, default=False)

    def __post_init__(self) -> None:
        if not self.instructions:
            raise ValueError("guideline instructions must be non-empty")
        object.__setattr__(
            self,
            "requires_soa",
            self.section in (TargetSection.PROCEDURES, TargetSection.DURATION),
        )
        object.__setattr__(
            self, "requires_risk_table", self.section == TargetSection.RISKS
        )

    def to_dict(self) -> dict:
        return {
            "section": self.section.value,
            "instructions": list(self.instructions),
            "keywords": list(self.keywords),
            "requires_soa": self.requires_soa,
            "requires_risk_table": self.requires_risk_table,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SectionGuideline":
        return cls(
            section=TargetSection(data["section"]),
            instructions=tuple(data["instructions"]),
            keywords=tuple(data.get("keywords", ())),
        )


@dataclass(frozen=True)
class TemplateParse:
    guidelines: tuple[SectionGuideline, ...]
    missing_sections: tuple[TargetSection, ...]


def parse_consent_template(
    template_doc: ProtocolDocument,
    llm: LlmBackend,
    cache: ResponseCache | None = None,
) -> TemplateParse:
    """Turn a site template into one guideline per recognized target section.

    Sections the template lacks are reported as warnings in
    ``missing_sections``, not raised: a site may legitimately split or omit
    content that another document supplies.
    """
    lines = []
    for section, _h1, _h2 in iter_section_contexts(template_doc):
        lines.append(f"## {section.heading}\n{section.body.strip()}")
    system, user = render_prompt("template.guidelines", sections="\n\n".join(lines))
    parsed = complete(
        LlmRequest(
            tag="template.guidelines", system=system, user=user,
            schema_id="template.guidelines.v1",
        ),
        llm,
        cache=cache,
    ).parsed

    by_section: dict[TargetSection, list[str]] = {}
    for raw in parsed["guidelines"]:
        section = TargetSection(raw["section"])
        if section == TargetSection.NOT_APPLICABLE:
            continue
        by_section.setdefault(section, []).extend(raw["instructions"])

    guidelines = tuple(
        SectionGuideline(section=section, instructions=tuple(steps))
        for section, steps in by_section.items()
        if steps
    )
    missing = tuple(s for s in EVALUATED_SECTIONS if s not in by_section)
    for section in missing:
        logger.warning("template is missing a %s section", section.value)
    return TemplateParse(guidelines=guidelines, missing_sections=missing)


def guideline_keywords(
    guideline: SectionGuideline,
    llm: LlmBackend,
    cache: ResponseCache | None = None,
) -> list[str]:
    """3-10 lowercase keyword phrases for the guideline, deduplicated."""
    if not guideline.instructions:
        raise ValueError("guideline has no instructions")
    system, user = render_prompt(
        "guideline.keywords",
        section=guideline.section.value,
        instructions="\n- ".join(guideline.instructions),
    )
    parsed = complete(
        LlmRequest(tag="guideline.keywords", system=system, user=user, schema_id="keywords.v1"),
        llm,
        cache=cache,
    ).parsed
    keywords: list[str] = []
    for raw in parsed["keywords"]:
        phrase = raw.strip().lower()
        if not phrase or len(phrase.split()) > 6 or phrase in keywords:
            continue
        keywords.append(phrase)
    if not keywords:
        raise SchemaViolation("keyword extraction produced no usable phrases")
    return keywords[:10]


def attach_keywords(
    guideline: SectionGuideline,
    llm: LlmBackend,
    cache: ResponseCache | None = None,
) -> SectionGuideline:
    return replace(guideline, keywords=tuple(guideline_keywords(guideline, llm, cache)))


# ---------------------------------------------------------------------------
# guidelines persistence (guidelines.v1)


def guidelines_to_dict(guidelines: tuple[SectionGuideline, ...] | list[SectionGuideline]) -> dict:
    return {
        "schema": "guidelines.v1",
        "guidelines": [g.to_dict() for g in guidelines],
    }


def guidelines_from_dict(data: dict) -> tuple[SectionGuideline, ...]:
    if data.get("schema") != "guidelines.v1":
        raise SchemaViolation(f"unsupported guidelines schema: {data.get('schema')!r}")
    return tuple(SectionGuideline.from_dict(g) for g in data["guidelines"])


def default_guidelines() -> tuple[SectionGuideline, ...]:
    """Built-in generic guidelines used when no site template is provided."""
    data = resources.files("consentforge.data").joinpath("default_guidelines.json")
    return guidelines_from_dict(json.loads(data.read_text(encoding="utf-8")))
