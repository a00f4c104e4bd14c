"""Two-axis evaluation: rule compliance and key-fact accuracy.

Compliance verdicts are three-way (Yes / PartialYes / No) with partial
credit configurable; fact verdicts are binary and only count as covered
when the judge quotes evidence found verbatim in the generated text.
Aggregates include compliance rate, factual accuracy, paired winning
rates, and a human-vs-judge confusion summary.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .drafting import IcfDocument, strip_markers
from .errors import EmptyInput, LengthMismatch, SchemaViolation
from .corpus import ProtocolDocument, iter_section_contexts
from .llm import LlmBackend, LlmRequest, ResponseCache, complete
from .policy import EVALUATED_SECTIONS, Rule, RuleSet, TargetSection
from .prompts import render_prompt

logger = logging.getLogger(__name__)

MAX_FACTS_PER_SECTION = 5

# What counts as a key fact, per section.
FACT_CRITERIA = {
    TargetSection.PURPOSE: (
        "the number of people expected to enroll, the disease or condition under "
        "study, and where the study runs"
    ),
    TargetSection.PROCEDURES: (
        "the named study procedures, which procedures are experimental, and how "
        "participants are assigned to groups"
    ),
    TargetSection.DURATION: (
        "the total study duration in months and the expected number of participant visits"
    ),
    TargetSection.RISKS: (
        "each named risk, the procedure it belongs to, and its stated likelihood"
    ),
}


class Verdict:
    YES = "Yes"
    PARTIAL_YES = "PartialYes"
    NO = "No"


@dataclass(frozen=True)
class ComplianceVerdict:
    rule_id: str
    verdict: str
    rationale: str

    def to_dict(self) -> dict:
        return {"rule_id": self.rule_id, "verdict": self.verdict, "rationale": self.rationale}


@dataclass(frozen=True)
class KeyFact:
    fact_id: str
    section: TargetSection
    statement: str
    value: str | float | None = None

    def to_dict(self) -> dict:
        return {
            "fact_id": self.fact_id,
            "section": self.section.value,
            "statement": self.statement,
            "value": self.value,
        }


@dataclass(frozen=True)
class FactVerdict:
    fact_id: str
    covered: bool
    evidence_span: str | None = None

    def to_dict(self) -> dict:
        return {
            "fact_id": self.fact_id,
            "covered": self.covered,
            "evidence_span": self.evidence_span,
        }


@dataclass(frozen=True)
class ConfusionSummary:
    tp: int
    fp: int
    fn: int
    tn: int
    tpr: float | None
    tnr: float | None

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "tpr": self.tpr,
            "tnr": self.tnr,
        }


@dataclass(frozen=True)
class StandardIcf:
    """Reference ICF after section standardization and merge."""

    sections: dict[TargetSection, str]


# ---------------------------------------------------------------------------
# section standardization


def classify_section(
    raw_heading: str,
    raw_body: str,
    llm: LlmBackend,
    cache: ResponseCache | None = None,
) -> TargetSection:
    """Map a raw ICF section onto one of the four targets, or NotApplicable.

    A backend that cannot produce a valid label after retries downgrades to
    NotApplicable with a warning instead of failing the evaluation run.
    """
    system, user = render_prompt(
        "eval.classify", heading=raw_heading, body=raw_body[:2000]
    )
    try:
        parsed = complete(
            LlmRequest(tag="eval.classify", system=system, user=user, schema_id="classify.v1"),
            llm,
            cache=cache,
        ).parsed
    except SchemaViolation:
        logger.warning("classification failed for heading %r; treating as NotApplicable", raw_heading)
        return TargetSection.NOT_APPLICABLE
    return TargetSection(parsed["section"])


def standardize_reference(
    reference_doc: ProtocolDocument,
    llm: LlmBackend,
    cache: ResponseCache | None = None,
) -> StandardIcf:
    """Classify each raw section and merge same-target bodies in order."""
    merged: dict[TargetSection, list[str]] = {}
    for section, _h1, _h2 in iter_section_contexts(reference_doc):
        target = classify_section(section.heading, section.body, llm, cache)
        if target == TargetSection.NOT_APPLICABLE:
            continue
        body = section.body.strip()
        if body:
            merged.setdefault(target, []).append(body)
    return StandardIcf(
        sections={target: "\n\n".join(bodies) for target, bodies in merged.items()}
    )


# ---------------------------------------------------------------------------
# compliance judging


def judge_compliance(
    section_text: str,
    rule: Rule,
    llm: LlmBackend,
    cache: ResponseCache | None = None,
) -> ComplianceVerdict:
    """Three-way rule verdict; empty sections are a No without a model call."""
    if not section_text.strip():
        return ComplianceVerdict(
            rule_id=rule.rule_id,
            verdict=Verdict.NO,
            rationale="The section is empty; nothing can satisfy the rule.",
        )
    system, user = render_prompt(
        "eval.compliance",
        rule_id=rule.rule_id,
        rule_name=rule.name,
        rule_description=rule.description,
        text=section_text,
    )
    parsed = complete(
        LlmRequest(tag="eval.compliance", system=system, user=user, schema_id="compliance.v1"),
        llm,
        cache=cache,
    ).parsed
    return ComplianceVerdict(
        rule_id=rule.rule_id, verdict=parsed["verdict"], rationale=parsed["rationale"]
    )


def compliance_rate(verdicts: list[ComplianceVerdict], partial_weight: float = 0.5) -> float:
    """(Yes + weight * PartialYes) / N."""
    if not verdicts:
        raise EmptyInput("no compliance verdicts to aggregate")
    if not (0.0 <= partial_weight <= 1.0):
        raise ValueError("partial_weight must be in [0, 1]")
    yes = sum(1 for v in verdicts if v.verdict == Verdict.YES)
    partial = sum(1 for v in verdicts if v.verdict == Verdict.PARTIAL_YES)
    return (yes + partial_weight * partial) / len(verdicts)


# ---------------------------------------------------------------------------
# key facts


def extract_key_facts(
    reference_section: str,
    section: TargetSection,
    llm: LlmBackend,
    cache: ResponseCache | None = None,
) -> list[KeyFact]:
    """Up to five facts from the reference text, per section-specific criteria."""
    if not reference_section.strip():
        return []
    criteria = FACT_CRITERIA.get(section, "the most consequential participant-facing facts")
    system, user = render_prompt(
        "eval.facts",
        section=section.value,
        max_facts=str(MAX_FACTS_PER_SECTION),
        criteria=criteria,
        text=reference_section,
    )
    parsed = complete(
        LlmRequest(tag="eval.facts", system=system, user=user, schema_id="facts.v1"),
        llm,
        cache=cache,
    ).parsed
    facts = parsed["facts"]
    if len(facts) > MAX_FACTS_PER_SECTION:
        logger.warning(
            "backend proposed %d facts for %s; truncating to %d",
            len(facts),
            section.value,
            MAX_FACTS_PER_SECTION,
        )
        facts = facts[:MAX_FACTS_PER_SECTION]
    slug = section.value.lower()
    return [
        KeyFact(
            fact_id=f"{slug}.f{i + 1}",
            section=section,
            statement=f["statement"],
            value=f.get("value"),
        )
        for i, f in enumerate(facts)
    ]


def check_fact(
    fact: KeyFact,
    generated_text: str,
    llm: LlmBackend,
    cache: ResponseCache | None = None,
) -> FactVerdict:
    """Binary coverage verdict, gated on verbatim evidence.

    The judge must quote a span from the generated text; a claimed span
    that is not actually present flips the verdict to not-covered rather
    than trusting the model.
    """
    if not generated_text.strip():
        return FactVerdict(fact_id=fact.fact_id, covered=False)
    system, user = render_prompt(
        "eval.factcheck", statement=fact.statement, text=generated_text
    )
    parsed = complete(
        LlmRequest(tag="eval.factcheck", system=system, user=user, schema_id="factcheck.v1"),
        llm,
        cache=cache,
    ).parsed
    covered = parsed["covered"]
    span = parsed.get("evidence_span")
    if covered:
        if not span or span not in generated_text:
            logger.warning(
                "fact %s: claimed evidence %r not found verbatim; marking uncovered",
                fact.fact_id,
                span,
            )
            return FactVerdict(fact_id=fact.fact_id, covered=False)
        return FactVerdict(fact_id=fact.fact_id, covered=True, evidence_span=span)
    return FactVerdict(fact_id=fact.fact_id, covered=False)


def factual_accuracy(verdicts: list[FactVerdict]) -> float:
    if not verdicts:
        raise EmptyInput("no fact verdicts to aggregate")
    return sum(1 for v in verdicts if v.covered) / len(verdicts)


# ---------------------------------------------------------------------------
# paired comparison and agreement


def winning_rate(scores_a: list[float], scores_b: list[float]) -> float:
    """(wins + 0.5 * ties) / trials, exactly antisymmetric with its mirror."""
    if len(scores_a) != len(scores_b):
        raise LengthMismatch(
            f"paired score vectors differ in length: {len(scores_a)} vs {len(scores_b)}"
        )
    if not scores_a:
        raise EmptyInput("no paired scores")
    wins = sum(1 for a, b in zip(scores_a, scores_b) if a > b)
    ties = sum(1 for a, b in zip(scores_a, scores_b) if a == b)
    # Single integer division keeps winning_rate(a,b) + winning_rate(b,a) == 1.0 exact.
    return (2 * wins + ties) / (2 * len(scores_a))


def confusion(ai: list[bool], human: list[bool]) -> ConfusionSummary:
    """2x2 agreement counts with human labels as the reference.

    Rates with a zero denominator are reported as absent (None), never 0.
    """
    if len(ai) != len(human):
        raise LengthMismatch(f"label vectors differ in length: {len(ai)} vs {len(human)}")
    tp = sum(1 for a, h in zip(ai, human) if a and h)
    fp = sum(1 for a, h in zip(ai, human) if a and not h)
    fn = sum(1 for a, h in zip(ai, human) if not a and h)
    tn = sum(1 for a, h in zip(ai, human) if not a and not h)
    tpr = tp / (tp + fn) if (tp + fn) > 0 else None
    tnr = tn / (tn + fp) if (tn + fp) > 0 else None
    return ConfusionSummary(tp=tp, fp=fp, fn=fn, tn=tn, tpr=tpr, tnr=tnr)


def binarize_verdicts(
    verdicts: list[ComplianceVerdict], partial_as_yes: bool = True
) -> list[bool]:
    """Collapse three-way verdicts to binary for agreement analysis."""
    positive = {Verdict.YES, Verdict.PARTIAL_YES} if partial_as_yes else {Verdict.YES}
    return [v.verdict in positive for v in verdicts]


# ---------------------------------------------------------------------------
# whole-trial evaluation


@dataclass(frozen=True)
class SectionReport:
    section: TargetSection
    compliance: tuple[ComplianceVerdict, ...]
    facts: tuple[KeyFact, ...]
    fact_verdicts: tuple[FactVerdict, ...]

    def to_dict(self) -> dict:
        return {
            "section": self.section.value,
            "compliance": [v.to_dict() for v in self.compliance],
            "facts": [f.to_dict() for f in self.facts],
            "fact_verdicts": [v.to_dict() for v in self.fact_verdicts],
        }


@dataclass(frozen=True)
class TrialReport:
    trial_ref: str
    sections: tuple[SectionReport, ...]
    compliance_rate_weighted: float | None
    compliance_rate_strict: float | None
    factual_accuracy: float | None

    def to_dict(self) -> dict:
        return {
            "schema": "report.v1",
            "trial_ref": self.trial_ref,
            "sections": [s.to_dict() for s in self.sections],
            "aggregates": {
                "compliance_rate_weighted": self.compliance_rate_weighted,
                "compliance_rate_strict": self.compliance_rate_strict,
                "factual_accuracy": self.factual_accuracy,
            },
        }


def evaluate_trial(
    generated: IcfDocument,
    reference: StandardIcf,
    rules: RuleSet,
    llm: LlmBackend,
    cache: ResponseCache | None = None,
    trial_ref: str = "",
    partial_weight: float = 0.5,
) -> TrialReport:
    """Judge every applicable rule and every reference fact for one trial.

    A target section missing from the generated document scores No on all
    of its rules and uncovered on all of its facts.
    """
    generated_texts = {
        draft.section: strip_markers(draft.body) for draft in generated.drafts
    }
    section_reports = []
    all_compliance: list[ComplianceVerdict] = []
    all_facts: list[FactVerdict] = []
    for section in EVALUATED_SECTIONS:
        gen_text = generated_texts.get(section, "")
        verdicts = tuple(
            judge_compliance(gen_text, rule, llm, cache)
            for rule in rules.rules_for_section(section)
        )
        facts = tuple(
            extract_key_facts(reference.sections.get(section, ""), section, llm, cache)
        )
        fact_verdicts = tuple(check_fact(fact, gen_text, llm, cache) for fact in facts)
        section_reports.append(
            SectionReport(
                section=section,
                compliance=verdicts,
                facts=facts,
                fact_verdicts=fact_verdicts,
            )
        )
        all_compliance.extend(verdicts)
        all_facts.extend(fact_verdicts)
    return TrialReport(
        trial_ref=trial_ref,
        sections=tuple(section_reports),
        compliance_rate_weighted=(
            compliance_rate(all_compliance, partial_weight) if all_compliance else None
        ),
        compliance_rate_strict=(
            compliance_rate(all_compliance, 0.0) if all_compliance else None
        ),
        factual_accuracy=factual_accuracy(all_facts) if all_facts else None,
    )


def page_bucket(page_count: int) -> str:
    """Protocol-length bucket used in corpus summaries."""
    if page_count < 10:
        return "<10"
    if page_count < 50:
        return "10-49"
    if page_count < 100:
        return "50-99"
    return "100+"
