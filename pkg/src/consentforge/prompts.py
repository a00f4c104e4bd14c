"""Prompt templates loaded from the versioned data bundle.

Prompt wording lives in ``data/prompts_v1.json`` as text with named slots;
code only fills the slots. Mock scripts key off stable phrases in these
templates ("Target section: ...", "Rule <id> ...", "Heading: ...",
"Section: ...", "Key fact: ..."), so wording changes are a versioned-data
event, not a code edit.
"""

from __future__ import annotations

import json
from importlib import resources

_PROMPTS: dict[str, dict[str, str]] | None = None


def _bundle() -> dict[str, dict[str, str]]:
    global _PROMPTS
    if _PROMPTS is None:
        raw = resources.files("consentforge.data").joinpath("prompts_v1.json")
        _PROMPTS = json.loads(raw.read_text(encoding="utf-8"))["prompts"]
    return _PROMPTS


def render_prompt(tag: str, **slots: str) -> tuple[str, str]:
    """(system, user) for a request tag, with slots substituted."""
    template = _bundle().get(tag)
    if template is None:
        raise KeyError(f"no prompt template for tag {tag!r}")
    return template["system"].format(**slots), template["user"].format(**slots)
