"""Small shared helpers: canonical JSON, stable hashing, reproducible clocks."""

from __future__ import annotations

import hashlib
import json
import os
import re
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

SCHEMA_VERSIONS = {
    "corpus.chunk": "corpus.chunk.v1",
    "vecindex": "vecindex.v1",
    "soa": "soa.v1",
    "risk": "risk.v1",
    "edit": "edit.v1",
    "rules": "rules.v1",
    "guidelines": "guidelines.v1",
    "draft": "draft.v1",
    "icf": "icf.v1",
    "report": "report.v1",
    "project": "project.v1",
}


def canonical_json(obj: Any) -> str:
    """Deterministic JSON rendering: sorted keys, two-space indent, newline."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(obj), encoding="utf-8")


def read_json(path: Path) -> Any:
    return json.loads(path.read_text(encoding="utf-8"))


def stable_hash_hex(text: str, digits: int = 16) -> str:
    """Platform-stable hex digest truncated to ``digits`` characters."""
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=16).hexdigest()
    return digest[:digits]


def now_iso() -> str:
    """Current UTC instant; honors SOURCE_DATE_EPOCH for reproducible output."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        dt = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    else:
        dt = datetime.now(tz=timezone.utc)
    return dt.replace(microsecond=0).isoformat()


def slugify(text: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_")
    return slug or "item"
