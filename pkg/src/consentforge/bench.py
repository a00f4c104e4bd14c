"""Paired benchmark over a corpus of trials.

Each trial directory needs ``protocol.md`` and ``reference_icf.md`` and may
carry ``template.md`` plus per-configuration mock scripts. Two backend
configurations run the full pipeline per trial; the summary reports
per-section compliance and factual accuracy, paired winning rates, an
agreement matrix (configuration B's fact verdicts taken as reference), and
a page-bucket breakdown.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import evaluation, policy
from .corpus import parse_markdown
from .errors import ConsentForgeError
from .project import Project, build_cache, build_embedder, build_llm_backend
from .util import read_json, write_json

logger = logging.getLogger(__name__)

SECTION_KEYS = [s.value for s in policy.EVALUATED_SECTIONS]


def load_bench_config(path: Path) -> dict:
    cfg = read_json(path)
    cfg.setdefault("name", path.stem)
    cfg.setdefault("backend", "mock")
    cfg.setdefault("script", None)
    return cfg


def _run_trial(trial_dir: Path, cfg: dict, out_dir: Path, rules: policy.RuleSet) -> dict:
    """Full pipeline for one trial under one configuration; returns report data."""
    script = None
    if cfg["script"]:
        script = trial_dir / cfg["script"]
        if not script.exists():
            script = Path(cfg["script"])
    llm = build_llm_backend(cfg["backend"], script)
    embedder = build_embedder(cfg["backend"])
    cache = build_cache(cfg["backend"])

    project_dir = out_dir / trial_dir.name / cfg["name"]
    # Same project_id for both configurations: chunk ids (and therefore any
    # scripted citations) must not depend on which configuration runs.
    project = Project.create(project_dir, trial_ref=trial_dir.name, project_id=trial_dir.name)
    protocol_md = (trial_dir / "protocol.md").read_text(encoding="utf-8")
    project.ingest_protocol(protocol_md, embedder)
    template = trial_dir / "template.md"
    if template.exists():
        project.set_template(template.read_text(encoding="utf-8"), llm, cache)

    for kind in ("soa", "risk"):
        try:
            project.extract_table(kind, llm, cache)
            project.approve_table(kind, author="bench")
        except ConsentForgeError as exc:
            logger.warning("%s/%s: %s extraction skipped: %s", trial_dir.name, cfg["name"], kind, exc)

    for section in policy.EVALUATED_SECTIONS:
        try:
            project.draft_section(section, llm, embedder, cache)
        except ConsentForgeError as exc:
            logger.warning(
                "%s/%s: draft %s skipped: %s", trial_dir.name, cfg["name"], section.value, exc
            )

    reference_md = (trial_dir / "reference_icf.md").read_text(encoding="utf-8")
    report = project.evaluate(reference_md, rules, llm, cache)
    doc = parse_markdown(protocol_md, doc_id=trial_dir.name)
    return {"report": report.to_dict(), "page_count": doc.page_count}


def _section_scores(report: dict) -> dict[str, dict]:
    """Per-section compliance rate and factual accuracy from a report.v1 dict."""
    out = {}
    for section in report["sections"]:
        verdicts = section["compliance"]
        yes = sum(1 for v in verdicts if v["verdict"] == "Yes")
        partial = sum(1 for v in verdicts if v["verdict"] == "PartialYes")
        compliance = (yes + 0.5 * partial) / len(verdicts) if verdicts else None
        facts = section["fact_verdicts"]
        accuracy = (
            sum(1 for v in facts if v["covered"]) / len(facts) if facts else None
        )
        out[section["section"]] = {
            "compliance": compliance,
            "accuracy": accuracy,
            "fact_verdicts": {v["fact_id"]: v["covered"] for v in facts},
        }
    return out


def run_bench(
    corpus_dir: Path,
    cfg_a_path: Path,
    cfg_b_path: Path,
    out_dir: Path,
    jobs: int = 1,
    rules: policy.RuleSet | None = None,
) -> dict:
    rules = rules or policy.default_rules()
    cfg_a = load_bench_config(cfg_a_path)
    cfg_b = load_bench_config(cfg_b_path)
    if cfg_a["name"] == cfg_b["name"]:
        cfg_b["name"] = cfg_b["name"] + "-b"
    trial_dirs = sorted(
        d for d in corpus_dir.iterdir() if d.is_dir() and (d / "protocol.md").exists()
    )

    def run_pair(trial_dir: Path) -> tuple[str, dict, dict]:
        result_a = _run_trial(trial_dir, cfg_a, out_dir, rules)
        result_b = _run_trial(trial_dir, cfg_b, out_dir, rules)
        return trial_dir.name, result_a, result_b

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_pair, trial_dirs))
    else:
        results = [run_pair(d) for d in trial_dirs]

    summary = _summarize(results, cfg_a["name"], cfg_b["name"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "bench_summary.json", summary)
    (out_dir / "bench_summary.csv").write_text(_summary_csv(summary), encoding="utf-8")
    (out_dir / "page_buckets.csv").write_text(_bucket_csv(summary), encoding="utf-8")
    return summary


def _summarize(results, name_a: str, name_b: str) -> dict:
    per_trial = []
    for trial, result_a, result_b in results:
        per_trial.append(
            {
                "trial": trial,
                "page_count": result_a["page_count"],
                "a": _section_scores(result_a["report"]),
                "b": _section_scores(result_b["report"]),
            }
        )

    sections_summary = {}
    for key in SECTION_KEYS:
        acc_a = [t["a"][key]["accuracy"] for t in per_trial if t["a"][key]["accuracy"] is not None]
        acc_b = [t["b"][key]["accuracy"] for t in per_trial if t["b"][key]["accuracy"] is not None]
        comp_a = [t["a"][key]["compliance"] for t in per_trial if t["a"][key]["compliance"] is not None]
        comp_b = [t["b"][key]["compliance"] for t in per_trial if t["b"][key]["compliance"] is not None]
        paired = [
            (t["a"][key]["accuracy"], t["b"][key]["accuracy"])
            for t in per_trial
            if t["a"][key]["accuracy"] is not None and t["b"][key]["accuracy"] is not None
        ]
        winning = (
            evaluation.winning_rate([p[0] for p in paired], [p[1] for p in paired])
            if paired
            else None
        )
        sections_summary[key] = {
            "compliance_a": _mean(comp_a),
            "compliance_b": _mean(comp_b),
            "accuracy_a": _mean(acc_a),
            "accuracy_b": _mean(acc_b),
            "winning_rate_a": winning,
        }

    # Agreement: configuration A's fact verdicts against B's as reference.
    paired_flags: list[tuple[bool, bool]] = []
    for t in per_trial:
        for key in SECTION_KEYS:
            verdicts_a = t["a"][key]["fact_verdicts"]
            verdicts_b = t["b"][key]["fact_verdicts"]
            for fact_id, covered_a in verdicts_a.items():
                if fact_id in verdicts_b:
                    paired_flags.append((covered_a, verdicts_b[fact_id]))
    confusion = (
        evaluation.confusion(
            [a for a, _ in paired_flags], [b for _, b in paired_flags]
        ).to_dict()
        if paired_flags
        else None
    )

    buckets: dict[str, dict] = {}
    for t in per_trial:
        bucket = evaluation.page_bucket(t["page_count"])
        entry = buckets.setdefault(bucket, {"trials": 0, "acc_a": [], "acc_b": []})
        entry["trials"] += 1
        overall_a = _mean([t["a"][k]["accuracy"] for k in SECTION_KEYS if t["a"][k]["accuracy"] is not None])
        overall_b = _mean([t["b"][k]["accuracy"] for k in SECTION_KEYS if t["b"][k]["accuracy"] is not None])
        if overall_a is not None:
            entry["acc_a"].append(overall_a)
        if overall_b is not None:
            entry["acc_b"].append(overall_b)
    bucket_rows = {
        bucket: {
            "trials": entry["trials"],
            "accuracy_a": _mean(entry["acc_a"]),
            "accuracy_b": _mean(entry["acc_b"]),
        }
        for bucket, entry in buckets.items()
    }

    return {
        "config_a": name_a,
        "config_b": name_b,
        "trials": len(per_trial),
        "sections": sections_summary,
        "fact_confusion_vs_b": confusion,
        "page_buckets": bucket_rows,
        "per_trial": per_trial,
    }


def _mean(values) -> float | None:
    values = [v for v in values if v is not None]
    return sum(values) / len(values) if values else None


def _fmt(value) -> str:
    return "" if value is None else f"{value:.6f}"


def _summary_csv(summary: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["section", "compliance_a", "compliance_b", "accuracy_a", "accuracy_b", "winning_rate_a"]
    )
    for key in SECTION_KEYS:
        row = summary["sections"][key]
        writer.writerow(
            [
                key,
                _fmt(row["compliance_a"]),
                _fmt(row["compliance_b"]),
                _fmt(row["accuracy_a"]),
                _fmt(row["accuracy_b"]),
                _fmt(row["winning_rate_a"]),
            ]
        )
    return buf.getvalue()


def _bucket_csv(summary: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["page_bucket", "trials", "accuracy_a", "accuracy_b"])
    for bucket in ("<10", "10-49", "50-99", "100+"):
        if bucket in summary["page_buckets"]:
            row = summary["page_buckets"][bucket]
            writer.writerow([bucket, row["trials"], _fmt(row["accuracy_a"]), _fmt(row["accuracy_b"])])
    return buf.getvalue()
