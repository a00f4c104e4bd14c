"""Reviewed knowledge tables: schedule-of-assessments and procedure risks.

Tables are immutable versioned values. Edits apply through
:func:`apply_edit` under an optimistic version check and produce a new
value; the full edit log replays deterministically from the extracted
snapshot (the server keeps that log append-only on disk).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from ..errors import InvalidEdit, VersionConflict


class TableStatus(str, Enum):
    EXTRACTED = "Extracted"
    EDITED = "Edited"
    APPROVED = "Approved"


class Likelihood(str, Enum):
    LIKELY = "Likely"
    LESS_LIKELY = "LessLikely"
    RARE = "Rare"
    UNKNOWN = "Unknown"


LIKELIHOOD_ORDER = {
    Likelihood.LIKELY: 0,
    Likelihood.LESS_LIKELY: 1,
    Likelihood.RARE: 2,
    Likelihood.UNKNOWN: 3,
}

# Free-text likelihood wording seen in protocols, mapped onto the closed enum.
LIKELIHOOD_ALIASES = {
    "likely": Likelihood.LIKELY,
    "common": Likelihood.LIKELY,
    "very common": Likelihood.LIKELY,
    "frequent": Likelihood.LIKELY,
    "often": Likelihood.LIKELY,
    "expected": Likelihood.LIKELY,
    "probable": Likelihood.LIKELY,
    "less likely": Likelihood.LESS_LIKELY,
    "less common": Likelihood.LESS_LIKELY,
    "uncommon": Likelihood.LESS_LIKELY,
    "occasional": Likelihood.LESS_LIKELY,
    "sometimes": Likelihood.LESS_LIKELY,
    "possible": Likelihood.LESS_LIKELY,
    "rare": Likelihood.RARE,
    "very rare": Likelihood.RARE,
    "unlikely": Likelihood.RARE,
    "seldom": Likelihood.RARE,
    "infrequent": Likelihood.RARE,
    "unknown": Likelihood.UNKNOWN,
}


def normalize_likelihood(text: str) -> Likelihood:
    key = text.strip().lower()
    if key in LIKELIHOOD_ALIASES:
        return LIKELIHOOD_ALIASES[key]
    try:
        return Likelihood(text.strip())
    except ValueError:
        return Likelihood.UNKNOWN


@dataclass(frozen=True)
class Timepoint:
    label: str
    visit_number: int | None = None
    day_or_window: str | None = None
    is_visit: bool = True


@dataclass(frozen=True)
class Procedure:
    name: str


@dataclass(frozen=True)
class SoaCell:
    procedure_index: int
    timepoint_index: int
    note: str | None = None


@dataclass(frozen=True)
class SoaTable:
    timepoints: tuple[Timepoint, ...]
    procedures: tuple[Procedure, ...]
    cells: tuple[SoaCell, ...]
    source_pages: tuple[int, ...]
    version: int = 1
    status: TableStatus = TableStatus.EXTRACTED

    def to_dict(self) -> dict:
        return {
            "schema": "soa.v1",
            "timepoints": [
                {
                    "label": t.label,
                    "visit_number": t.visit_number,
                    "day_or_window": t.day_or_window,
                    "is_visit": t.is_visit,
                }
                for t in self.timepoints
            ],
            "procedures": [{"name": p.name} for p in self.procedures],
            "cells": [
                {
                    "procedure_index": c.procedure_index,
                    "timepoint_index": c.timepoint_index,
                    "note": c.note,
                }
                for c in self.cells
            ],
            "source_pages": list(self.source_pages),
            "version": self.version,
            "status": self.status.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SoaTable":
        return cls(
            timepoints=tuple(
                Timepoint(
                    label=t["label"],
                    visit_number=t.get("visit_number"),
                    day_or_window=t.get("day_or_window"),
                    is_visit=t.get("is_visit", True),
                )
                for t in data["timepoints"]
            ),
            procedures=tuple(Procedure(name=p["name"]) for p in data["procedures"]),
            cells=tuple(
                SoaCell(
                    procedure_index=c["procedure_index"],
                    timepoint_index=c["timepoint_index"],
                    note=c.get("note"),
                )
                for c in data["cells"]
            ),
            source_pages=tuple(data["source_pages"]),
            version=data["version"],
            status=TableStatus(data["status"]),
        )


@dataclass(frozen=True)
class RiskEntry:
    procedure: str
    risk: str
    likelihood: Likelihood
    note: str | None = None
    source_pages: tuple[int, ...] = ()


@dataclass(frozen=True)
class RiskTable:
    entries: tuple[RiskEntry, ...]
    version: int = 1
    status: TableStatus = TableStatus.EXTRACTED

    def to_dict(self) -> dict:
        return {
            "schema": "risk.v1",
            "entries": [
                {
                    "procedure": e.procedure,
                    "risk": e.risk,
                    "likelihood": e.likelihood.value,
                    "note": e.note,
                    "source_pages": list(e.source_pages),
                }
                for e in self.entries
            ],
            "version": self.version,
            "status": self.status.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RiskTable":
        return cls(
            entries=tuple(
                RiskEntry(
                    procedure=e["procedure"],
                    risk=e["risk"],
                    likelihood=Likelihood(e["likelihood"]),
                    note=e.get("note"),
                    source_pages=tuple(e["source_pages"]),
                )
                for e in data["entries"]
            ),
            version=data["version"],
            status=TableStatus(data["status"]),
        )


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    message: str
    location: str | None = None


def validate_soa(table: SoaTable) -> list[ValidationIssue]:
    """Empty list iff the table satisfies every structural invariant."""
    issues: list[ValidationIssue] = []
    labels = [t.label for t in table.timepoints]
    seen: set[str] = set()
    for i, label in enumerate(labels):
        if label in seen:
            issues.append(
                ValidationIssue(
                    "DuplicateTimepoint",
                    f"timepoint label {label!r} appears more than once",
                    location=f"timepoints[{i}]",
                )
            )
        seen.add(label)
    seen_cells: set[tuple[int, int]] = set()
    for i, cell in enumerate(table.cells):
        loc = f"cells[{i}]"
        if not (0 <= cell.procedure_index < len(table.procedures)):
            issues.append(
                ValidationIssue(
                    "IndexOutOfRange",
                    f"procedure_index {cell.procedure_index} out of range",
                    location=loc,
                )
            )
        if not (0 <= cell.timepoint_index < len(table.timepoints)):
            issues.append(
                ValidationIssue(
                    "IndexOutOfRange",
                    f"timepoint_index {cell.timepoint_index} out of range",
                    location=loc,
                )
            )
        key = (cell.procedure_index, cell.timepoint_index)
        if key in seen_cells:
            issues.append(
                ValidationIssue("DuplicateCell", f"cell {key} appears more than once", loc)
            )
        seen_cells.add(key)
    if table.version < 1:
        issues.append(ValidationIssue("BadVersion", "version must be >= 1"))
    return issues


def validate_risk(table: RiskTable) -> list[ValidationIssue]:
    issues: list[ValidationIssue] = []
    seen: set[tuple[str, str]] = set()
    for i, entry in enumerate(table.entries):
        loc = f"entries[{i}]"
        key = (entry.procedure, entry.risk)
        if key in seen:
            issues.append(
                ValidationIssue(
                    "DuplicateRiskPair", f"(procedure, risk) pair {key} repeats", loc
                )
            )
        seen.add(key)
        if not entry.source_pages:
            issues.append(
                ValidationIssue("MissingSourcePages", "entry cites no source page", loc)
            )
    if table.version < 1:
        issues.append(ValidationIssue("BadVersion", "version must be >= 1"))
    return issues


# ---------------------------------------------------------------------------
# edits


class EditOp(str, Enum):
    ADD_ROW = "AddRow"
    DELETE_ROW = "DeleteRow"
    UPDATE_CELL = "UpdateCell"
    UPDATE_META = "UpdateMeta"


@dataclass(frozen=True)
class TableEdit:
    target: str  # "soa" | "risk"
    op: EditOp
    payload: dict
    author: str
    timestamp: str
    base_version: int

    def to_dict(self) -> dict:
        return {
            "schema": "edit.v1",
            "target": self.target,
            "op": self.op.value,
            "payload": self.payload,
            "author": self.author,
            "timestamp": self.timestamp,
            "base_version": self.base_version,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TableEdit":
        return cls(
            target=data["target"],
            op=EditOp(data["op"]),
            payload=data["payload"],
            author=data["author"],
            timestamp=data["timestamp"],
            base_version=data["base_version"],
        )


def apply_edit(table: SoaTable | RiskTable, edit: TableEdit):
    """Apply one edit; returns the next version or raises.

    Raises VersionConflict when the edit targets a stale version and
    InvalidEdit when the result would violate a table invariant.
    """
    if edit.base_version != table.version:
        raise VersionConflict(
            f"edit built against version {edit.base_version}, table is at {table.version}"
        )
    is_soa = isinstance(table, SoaTable)
    if edit.target != ("soa" if is_soa else "risk"):
        raise InvalidEdit(f"edit targets {edit.target!r}, table is {'soa' if is_soa else 'risk'}")

    if is_soa:
        updated = _apply_soa_edit(table, edit)
        issues = validate_soa(updated)
    else:
        updated = _apply_risk_edit(table, edit)
        issues = validate_risk(updated)
    if issues:
        raise InvalidEdit("; ".join(f"{i.code}: {i.message}" for i in issues))

    approving = edit.op == EditOp.UPDATE_META and edit.payload.get("status") == "Approved"
    status = TableStatus.APPROVED if approving else TableStatus.EDITED
    return replace(updated, version=table.version + 1, status=status)


def make_approval_edit(table: SoaTable | RiskTable, author: str, timestamp: str) -> TableEdit:
    return TableEdit(
        target="soa" if isinstance(table, SoaTable) else "risk",
        op=EditOp.UPDATE_META,
        payload={"status": "Approved"},
        author=author,
        timestamp=timestamp,
        base_version=table.version,
    )


def replay(snapshot: SoaTable | RiskTable, edits: list[TableEdit]):
    """Reapply an edit log to the extracted snapshot; must equal the current table."""
    table = snapshot
    for edit in edits:
        table = apply_edit(table, edit)
    return table


def _apply_soa_edit(table: SoaTable, edit: TableEdit) -> SoaTable:
    p = edit.payload
    if edit.op == EditOp.ADD_ROW:
        axis = p.get("axis")
        if axis == "procedure":
            return replace(table, procedures=table.procedures + (Procedure(name=p["name"]),))
        if axis == "timepoint":
            tp = Timepoint(
                label=p["label"],
                visit_number=p.get("visit_number"),
                day_or_window=p.get("day_or_window"),
                is_visit=p.get("is_visit", True),
            )
            return replace(table, timepoints=table.timepoints + (tp,))
        raise InvalidEdit(f"AddRow axis must be 'procedure' or 'timepoint', got {axis!r}")
    if edit.op == EditOp.DELETE_ROW:
        axis = p.get("axis")
        index = p.get("index")
        if axis == "procedure":
            if not isinstance(index, int) or not (0 <= index < len(table.procedures)):
                raise InvalidEdit(f"procedure index {index!r} out of range")
            procedures = tuple(x for i, x in enumerate(table.procedures) if i != index)
            cells = tuple(
                replace(c, procedure_index=c.procedure_index - (c.procedure_index > index))
                for c in table.cells
                if c.procedure_index != index
            )
            return replace(table, procedures=procedures, cells=cells)
        if axis == "timepoint":
            if not isinstance(index, int) or not (0 <= index < len(table.timepoints)):
                raise InvalidEdit(f"timepoint index {index!r} out of range")
            timepoints = tuple(x for i, x in enumerate(table.timepoints) if i != index)
            cells = tuple(
                replace(c, timepoint_index=c.timepoint_index - (c.timepoint_index > index))
                for c in table.cells
                if c.timepoint_index != index
            )
            return replace(table, timepoints=timepoints, cells=cells)
        raise InvalidEdit(f"DeleteRow axis must be 'procedure' or 'timepoint', got {axis!r}")
    if edit.op == EditOp.UPDATE_CELL:
        pi, ti = p.get("procedure_index"), p.get("timepoint_index")
        if not isinstance(pi, int) or not isinstance(ti, int):
            raise InvalidEdit("UpdateCell requires integer procedure_index/timepoint_index")
        present = p.get("present", True)
        rest = tuple(
            c for c in table.cells if (c.procedure_index, c.timepoint_index) != (pi, ti)
        )
        if not present:
            return replace(table, cells=rest)
        cell = SoaCell(procedure_index=pi, timepoint_index=ti, note=p.get("note"))
        return replace(table, cells=_sorted_cells(rest + (cell,)))
    if edit.op == EditOp.UPDATE_META:
        updated = table
        if "source_pages" in p:
            updated = replace(updated, source_pages=tuple(p["source_pages"]))
        if "timepoint_index" in p:
            i = p["timepoint_index"]
            if not isinstance(i, int) or not (0 <= i < len(table.timepoints)):
                raise InvalidEdit(f"timepoint index {i!r} out of range")
            tp = table.timepoints[i]
            tp = replace(
                tp,
                label=p.get("label", tp.label),
                visit_number=p.get("visit_number", tp.visit_number),
                day_or_window=p.get("day_or_window", tp.day_or_window),
                is_visit=p.get("is_visit", tp.is_visit),
            )
            timepoints = list(updated.timepoints)
            timepoints[i] = tp
            updated = replace(updated, timepoints=tuple(timepoints))
        if "procedure_index" in p and "name" in p:
            i = p["procedure_index"]
            if not isinstance(i, int) or not (0 <= i < len(table.procedures)):
                raise InvalidEdit(f"procedure index {i!r} out of range")
            procedures = list(updated.procedures)
            procedures[i] = Procedure(name=p["name"])
            updated = replace(updated, procedures=tuple(procedures))
        if "status" in p and p["status"] != "Approved":
            raise InvalidEdit("UpdateMeta may only set status to 'Approved'")
        return updated
    raise InvalidEdit(f"unsupported op {edit.op!r} for SOA table")


def _apply_risk_edit(table: RiskTable, edit: TableEdit) -> RiskTable:
    p = edit.payload
    if edit.op == EditOp.ADD_ROW:
        entry = RiskEntry(
            procedure=p["procedure"],
            risk=p["risk"],
            likelihood=normalize_likelihood(p.get("likelihood", "Unknown")),
            note=p.get("note"),
            source_pages=tuple(p.get("source_pages", ())),
        )
        return replace(table, entries=table.entries + (entry,))
    if edit.op == EditOp.DELETE_ROW:
        index = p.get("index")
        if not isinstance(index, int) or not (0 <= index < len(table.entries)):
            raise InvalidEdit(f"entry index {index!r} out of range")
        return replace(table, entries=tuple(e for i, e in enumerate(table.entries) if i != index))
    if edit.op == EditOp.UPDATE_CELL:
        index = p.get("index")
        field = p.get("field")
        if not isinstance(index, int) or not (0 <= index < len(table.entries)):
            raise InvalidEdit(f"entry index {index!r} out of range")
        if field not in {"procedure", "risk", "likelihood", "note", "source_pages"}:
            raise InvalidEdit(f"unknown risk field {field!r}")
        entry = table.entries[index]
        value = p.get("value")
        if field == "likelihood":
            entry = replace(entry, likelihood=normalize_likelihood(str(value)))
        elif field == "source_pages":
            if not isinstance(value, list):
                raise InvalidEdit("source_pages value must be a list of pages")
            entry = replace(entry, source_pages=tuple(value))
        else:
            entry = replace(entry, **{field: value})
        entries = list(table.entries)
        entries[index] = entry
        return replace(table, entries=tuple(entries))
    if edit.op == EditOp.UPDATE_META:
        if "status" in p and p["status"] != "Approved":
            raise InvalidEdit("UpdateMeta may only set status to 'Approved'")
        return table
    raise InvalidEdit(f"unsupported op {edit.op!r} for risk table")


def _sorted_cells(cells: tuple[SoaCell, ...]) -> tuple[SoaCell, ...]:
    return tuple(sorted(cells, key=lambda c: (c.procedure_index, c.timepoint_index)))


# ---------------------------------------------------------------------------
# CSV export for the review UI


def soa_to_csv(table: SoaTable) -> str:
    import csv
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["procedure"] + [t.label for t in table.timepoints])
    marked = {(c.procedure_index, c.timepoint_index): c for c in table.cells}
    for pi, procedure in enumerate(table.procedures):
        row = [procedure.name]
        for ti in range(len(table.timepoints)):
            cell = marked.get((pi, ti))
            row.append("" if cell is None else (cell.note or "X"))
        writer.writerow(row)
    return buf.getvalue()


def risk_to_csv(table: RiskTable) -> str:
    import csv
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["procedure", "risk", "likelihood", "note", "source_pages"])
    for entry in table.entries:
        writer.writerow(
            [
                entry.procedure,
                entry.risk,
                entry.likelihood.value,
                entry.note or "",
                " ".join(str(p) for p in entry.source_pages),
            ]
        )
    return buf.getvalue()
