"""Human-reviewed knowledge tables: extraction, editing, and narration."""

from .extract import RISK_KEYWORDS, SOA_KEYWORDS, extract_risk_table, extract_soa
from .narrate import (
    DAYS_PER_MONTH,
    DurationSummary,
    RiskNarrative,
    SoaNarrative,
    derive_duration,
    duration_sentence,
    parse_window_days,
    risks_to_narratives,
    soa_to_narratives,
)
from .tables import (
    EditOp,
    Likelihood,
    Procedure,
    RiskEntry,
    RiskTable,
    SoaCell,
    SoaTable,
    TableEdit,
    TableStatus,
    Timepoint,
    ValidationIssue,
    apply_edit,
    make_approval_edit,
    normalize_likelihood,
    replay,
    validate_risk,
    validate_soa,
)

__all__ = [
    "DAYS_PER_MONTH",
    "DurationSummary",
    "EditOp",
    "Likelihood",
    "Procedure",
    "RISK_KEYWORDS",
    "RiskEntry",
    "RiskNarrative",
    "RiskTable",
    "SOA_KEYWORDS",
    "SoaCell",
    "SoaNarrative",
    "SoaTable",
    "TableEdit",
    "TableStatus",
    "Timepoint",
    "ValidationIssue",
    "apply_edit",
    "derive_duration",
    "duration_sentence",
    "extract_risk_table",
    "extract_soa",
    "make_approval_edit",
    "normalize_likelihood",
    "parse_window_days",
    "replay",
    "risks_to_narratives",
    "soa_to_narratives",
    "validate_risk",
    "validate_soa",
]
