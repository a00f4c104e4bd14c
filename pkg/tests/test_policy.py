import pytest

from consentforge import corpus, policy
from consentforge.errors import SchemaViolation
from consentforge.llm import MockLlmBackend
from consentforge.util import write_json

from conftest import FIXTURES

TEMPLATE_GUIDELINES_RESPONSE = {
    "guidelines": [
        {"section": "PurposeOfResearch", "instructions": [
            "State that participation is voluntary.",
            "Explain what the study is trying to find out.",
            "State how many people are being looked for and where enrollment occurs.",
        ]},
        {"section": "Procedures", "instructions": [
            "Describe what happens visit by visit following the study schedule.",
            "Identify which procedures are experimental.",
        ]},
        {"section": "DurationOfStudyInvolvement", "instructions": [
            "State the expected duration of active participation in months.",
            "State the expected number of study visits.",
        ]},
        {"section": "RisksAndDiscomforts", "instructions": [
            "Describe foreseeable risks per procedure with likelihoods.",
            "Mention unknown risks and potential loss of confidentiality.",
        ]},
        {"section": "NotApplicable", "instructions": ["Describe costs and payments."]},
    ]
}


def mock(entries):
    return MockLlmBackend.from_mapping({"entries": entries})


@pytest.fixture(scope="module")
def template_doc():
    text = (FIXTURES / "template_site.md").read_text(encoding="utf-8")
    return corpus.parse_markdown(text, doc_id="template")


class TestRules:
    def test_default_bundle_has_18_rules(self):
        rules = policy.default_rules()
        assert len(rules) == 18

    def test_rules_partition_four_sections(self):
        rules = policy.default_rules()
        union = []
        for section in policy.EVALUATED_SECTIONS:
            union.extend(rules.rules_for_section(section))
        assert len(union) == 18
        assert len({r.rule_id for r in union}) == 18
        assert {r.rule_id for r in union} == {r.rule_id for r in rules.rules}

    def test_duplicate_rule_id_rejected(self, tmp_path):
        data = {
            "schema": "rules.v1",
            "rules": [
                {"rule_id": "r1", "section": "Procedures", "name": "a", "description": "d"},
                {"rule_id": "r1", "section": "Procedures", "name": "b", "description": "d"},
            ],
        }
        path = tmp_path / "rules.json"
        write_json(path, data)
        with pytest.raises(SchemaViolation):
            policy.load_rules(path)

    def test_load_rules_round_trip(self, tmp_path):
        bundled = policy.default_rules()
        path = tmp_path / "rules.json"
        write_json(
            path,
            {
                "schema": "rules.v1",
                "rules": [
                    {
                        "rule_id": r.rule_id,
                        "section": r.section.value,
                        "name": r.name,
                        "description": r.description,
                    }
                    for r in bundled.rules
                ],
            },
        )
        assert policy.load_rules(path) == bundled


class TestGuidelineFlags:
    @pytest.mark.parametrize(
        "section,soa,risk",
        [
            (policy.TargetSection.PURPOSE, False, False),
            (policy.TargetSection.PROCEDURES, True, False),
            (policy.TargetSection.DURATION, True, False),
            (policy.TargetSection.RISKS, False, True),
        ],
    )
    def test_flags_follow_section(self, section, soa, risk):
        g = policy.SectionGuideline(section=section, instructions=("step",))
        assert g.requires_soa is soa
        assert g.requires_risk_table is risk

    def test_empty_instructions_rejected(self):
        with pytest.raises(ValueError):
            policy.SectionGuideline(section=policy.TargetSection.PURPOSE, instructions=())


class TestParseTemplate:
    def test_fixture_template_four_guidelines(self, template_doc):
        llm = mock([
            {"tag": "template.guidelines", "responses": [TEMPLATE_GUIDELINES_RESPONSE]}
        ])
        parsed = policy.parse_consent_template(template_doc, llm)
        assert len(parsed.guidelines) == 4
        assert parsed.missing_sections == ()
        duration = next(
            g for g in parsed.guidelines
            if g.section == policy.TargetSection.DURATION
        )
        assert any("expected duration" in step for step in duration.instructions)

    def test_missing_risks_section_warns(self, template_doc):
        response = {
            "guidelines": [
                g for g in TEMPLATE_GUIDELINES_RESPONSE["guidelines"]
                if g["section"] != "RisksAndDiscomforts"
            ]
        }
        llm = mock([{"tag": "template.guidelines", "responses": [response]}])
        parsed = policy.parse_consent_template(template_doc, llm)
        assert len(parsed.guidelines) == 3
        assert parsed.missing_sections == (policy.TargetSection.RISKS,)

    def test_parse_deterministic(self, template_doc):
        llm = mock([
            {
                "tag": "template.guidelines",
                "responses": [TEMPLATE_GUIDELINES_RESPONSE, TEMPLATE_GUIDELINES_RESPONSE],
            }
        ])
        first = policy.parse_consent_template(template_doc, llm)
        second = policy.parse_consent_template(template_doc, llm)
        assert first == second

    def test_round_trip_through_schema(self, template_doc):
        llm = mock([
            {"tag": "template.guidelines", "responses": [TEMPLATE_GUIDELINES_RESPONSE]}
        ])
        parsed = policy.parse_consent_template(template_doc, llm)
        data = policy.guidelines_to_dict(parsed.guidelines)
        assert policy.guidelines_from_dict(data) == parsed.guidelines


class TestKeywords:
    def guideline(self):
        return policy.SectionGuideline(
            section=policy.TargetSection.PROCEDURES,
            instructions=("Describe visit-by-visit activities.",),
        )

    def test_includes_expected_phrase(self):
        llm = mock([
            {
                "tag": "guideline.keywords",
                "responses": [
                    {"keywords": ["Schedule of Assessments", "study procedures", "visit plan"]}
                ],
            }
        ])
        keywords = policy.guideline_keywords(self.guideline(), llm)
        assert "schedule of assessments" in keywords
        assert all(k == k.lower() for k in keywords)

    def test_empty_strings_filtered(self):
        llm = mock([
            {
                "tag": "guideline.keywords",
                "responses": [{"keywords": ["", "  ", "study visits", "dosing", "labs"]}],
            }
        ])
        keywords = policy.guideline_keywords(self.guideline(), llm)
        assert "" not in keywords
        assert keywords == ["study visits", "dosing", "labs"]

    def test_duplicates_collapsed(self):
        llm = mock([
            {
                "tag": "guideline.keywords",
                "responses": [{"keywords": ["dosing", "Dosing", "dosing ", "labs"]}],
            }
        ])
        assert policy.guideline_keywords(self.guideline(), llm) == ["dosing", "labs"]

    def test_long_phrases_dropped_and_capped(self):
        many = [f"kw {i}" for i in range(12)] + ["one two three four five six seven"]
        llm = mock([
            {"tag": "guideline.keywords", "responses": [{"keywords": many}]}
        ])
        keywords = policy.guideline_keywords(self.guideline(), llm)
        assert len(keywords) == 10
        assert "one two three four five six seven" not in keywords

    def test_default_guidelines_cover_four_sections(self):
        defaults = policy.default_guidelines()
        assert {g.section for g in defaults} == set(policy.EVALUATED_SECTIONS)
