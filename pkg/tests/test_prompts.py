import pytest

from consentforge.prompts import render_prompt

SLOTS = {
    "soa.axes": {"pages": "[page 4]\ntable"},
    "soa.cells": {"procedures": "0=Exam", "timepoints": "0=Day 1", "pages": "p"},
    "risk.entries": {"pages": "p"},
    "template.guidelines": {"sections": "## Purpose"},
    "guideline.keywords": {"section": "Procedures", "instructions": "step"},
    "draft.query": {"section": "Procedures", "keywords": "k", "instructions": "i", "toc": "# A"},
    "draft.section": {"context": "Target section: Procedures"},
    "eval.classify": {"heading": "Costs", "body": "b"},
    "eval.compliance": {"rule_id": "purpose-01", "rule_name": "n",
                        "rule_description": "d", "text": "t"},
    "eval.facts": {"section": "Procedures", "max_facts": "5", "criteria": "c", "text": "t"},
    "eval.factcheck": {"statement": "10 visits", "text": "t"},
}

# Phrases the scripted mock backend keys on; wording changes here are breaking.
MATCH_PHRASES = {
    "guideline.keywords": "Target section: Procedures",
    "draft.query": "Target section: Procedures",
    "eval.classify": "Heading: Costs",
    "eval.compliance": "Rule purpose-01 ",
    "eval.facts": "Section: Procedures",
    "eval.factcheck": "Key fact: 10 visits",
}


@pytest.mark.parametrize("tag", sorted(SLOTS))
def test_every_template_renders(tag):
    import re

    system, user = render_prompt(tag, **SLOTS[tag])
    assert system and user
    # No unfilled {slot} survives; literal JSON braces in examples are fine.
    assert not re.search(r"\{[a-z_]+\}", system)
    if tag in MATCH_PHRASES:
        assert MATCH_PHRASES[tag] in user


def test_unknown_tag_rejected():
    with pytest.raises(KeyError):
        render_prompt("no.such.tag")


def test_slot_values_with_braces_survive():
    _system, user = render_prompt("eval.factcheck", statement="a {weird} fact", text="{}")
    assert "a {weird} fact" in user
    assert user.endswith("{}")
