"""Approved-table serialization into drafting inputs.

Narratives are pure template renders: identical tables always produce
identical text, and nothing here may run before the table passes human
approval.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import NotApproved
from .tables import LIKELIHOOD_ORDER, Likelihood, RiskTable, SoaTable, TableStatus

DAYS_PER_MONTH = 30.4375

_DAY_RE = re.compile(r"day\s*(-?\d+)", re.IGNORECASE)
_WEEK_RE = re.compile(r"week\s*(-?\d+)", re.IGNORECASE)
_MONTH_RE = re.compile(r"month\s*(-?\d+)", re.IGNORECASE)

LIKELIHOOD_PHRASES = {
    Likelihood.LIKELY: "likely",
    Likelihood.LESS_LIKELY: "less likely",
    Likelihood.RARE: "rare",
    Likelihood.UNKNOWN: "of unknown likelihood",
}


@dataclass(frozen=True)
class SoaNarrative:
    timepoint_label: str
    paragraph: str


@dataclass(frozen=True)
class RiskNarrative:
    procedure: str
    paragraph: str


@dataclass(frozen=True)
class DurationSummary:
    total_duration_months: float | None
    expected_visits: int | None
    active_participation: str | None
    basis: tuple[str, ...]


def _require_approved(table: SoaTable | RiskTable, what: str) -> None:
    if table.status != TableStatus.APPROVED:
        raise NotApproved(f"{what} requires an approved table (status is {table.status.value})")


def soa_to_narratives(table: SoaTable) -> list[SoaNarrative]:
    """One paragraph per timepoint naming its procedures in table order."""
    _require_approved(table, "schedule narration")
    checked = {(c.procedure_index, c.timepoint_index): c for c in table.cells}
    out = []
    for ti, timepoint in enumerate(table.timepoints):
        items = []
        for pi, procedure in enumerate(table.procedures):
            cell = checked.get((pi, ti))
            if cell is None:
                continue
            items.append(f"{procedure.name} ({cell.note})" if cell.note else procedure.name)
        if not items:
            paragraph = "No study procedures are scheduled."
        else:
            when = timepoint.label
            if timepoint.day_or_window and timepoint.day_or_window != timepoint.label:
                when = f"{timepoint.label} ({timepoint.day_or_window})"
            paragraph = f"At {when}, the study team will perform: {', '.join(items)}."
        out.append(SoaNarrative(timepoint_label=timepoint.label, paragraph=paragraph))
    return out


def risks_to_narratives(table: RiskTable) -> list[RiskNarrative]:
    """Risks grouped by procedure, ordered most likely first within each group."""
    _require_approved(table, "risk narration")
    groups: dict[str, list] = {}
    order: list[str] = []
    for entry in table.entries:
        if entry.procedure not in groups:
            groups[entry.procedure] = []
            order.append(entry.procedure)
        groups[entry.procedure].append(entry)
    out = []
    for procedure in order:
        entries = sorted(groups[procedure], key=lambda e: LIKELIHOOD_ORDER[e.likelihood])
        parts = []
        for entry in entries:
            phrase = LIKELIHOOD_PHRASES[entry.likelihood]
            text = f"{entry.risk} ({phrase})"
            if entry.note:
                text += f", note: {entry.note}"
            parts.append(text)
        paragraph = f"{procedure} may cause: {'; '.join(parts)}."
        out.append(RiskNarrative(procedure=procedure, paragraph=paragraph))
    return out


def parse_window_days(text: str) -> float | None:
    """Read a day count out of a 'Day 29', 'Week 4', 'Month 6' style window."""
    match = _DAY_RE.search(text)
    if match:
        return float(match.group(1))
    match = _WEEK_RE.search(text)
    if match:
        return float(match.group(1)) * 7.0
    match = _MONTH_RE.search(text)
    if match:
        return float(match.group(1)) * DAYS_PER_MONTH
    return None


def derive_duration(table: SoaTable) -> DurationSummary:
    """Study duration and visit count computed from the approved schedule.

    Duration spans the earliest to latest parseable timepoint, converted
    at 30.4375 days per month; unparseable windows leave the duration
    absent rather than guessed. The basis lists which timepoints counted.
    """
    _require_approved(table, "duration derivation")
    parsed: list[tuple[str, float]] = []
    for timepoint in table.timepoints:
        window = timepoint.day_or_window or timepoint.label
        days = parse_window_days(window)
        if days is not None:
            parsed.append((timepoint.label, days))
    expected_visits = sum(1 for t in table.timepoints if t.is_visit)
    if not parsed:
        return DurationSummary(
            total_duration_months=None,
            expected_visits=expected_visits,
            active_participation=None,
            basis=(),
        )
    days_span = max(d for _, d in parsed) - min(d for _, d in parsed)
    months = days_span / DAYS_PER_MONTH
    first = min(parsed, key=lambda x: x[1])[0]
    last = max(parsed, key=lambda x: x[1])[0]
    active = f"from {first} through {last}" if len(parsed) > 1 else None
    return DurationSummary(
        total_duration_months=months,
        expected_visits=expected_visits,
        active_participation=active,
        basis=tuple(label for label, _ in parsed),
    )


def duration_sentence(summary: DurationSummary) -> str:
    """Single-sentence rendering used as a drafting input."""
    visits = summary.expected_visits or 0
    if summary.total_duration_months is None:
        return f"Participation involves {visits} scheduled visits."
    months = f"{summary.total_duration_months:.2f}"
    sentence = (
        f"Participation lasts about {months} months and involves {visits} scheduled visits"
    )
    if summary.active_participation:
        sentence += f" ({summary.active_participation})"
    return sentence + "."
