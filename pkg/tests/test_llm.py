import json

import pytest

from consentforge.errors import SchemaViolation, ScriptExhausted
from consentforge.llm import (
    LlmRequest,
    MockLlmBackend,
    ResponseCache,
    cache_key,
    complete,
    extract_json,
    schema_registry,
)


def mock(entries):
    return MockLlmBackend.from_mapping({"entries": entries})


class TestMockBackend:
    def test_scripted_response(self):
        backend = mock([{"tag": "x", "responses": ["hello"]}])
        resp = complete(LlmRequest(tag="x", system="s", user="u"), backend)
        assert resp.text == "hello"
        assert resp.cached is False
        assert resp.backend_id == "mock"

    def test_exhaustion_raises(self):
        backend = mock([{"tag": "x", "responses": ["only一"]}])
        req = LlmRequest(tag="x", system="s", user="u")
        complete(req, backend)
        with pytest.raises(ScriptExhausted):
            complete(req, backend)

    def test_unmatched_tag_names_tag(self):
        backend = mock([{"tag": "x", "responses": ["r"]}])
        with pytest.raises(ScriptExhausted, match="other"):
            complete(LlmRequest(tag="other", system="s", user="u"), backend)

    def test_match_key_selects_entry(self):
        backend = mock([
            {"tag": "t", "match": "Procedures", "responses": ["proc"]},
            {"tag": "t", "match": "Risks", "responses": ["risk"]},
        ])
        assert complete(LlmRequest(tag="t", system="", user="about Risks"), backend).text == "risk"
        assert complete(LlmRequest(tag="t", system="", user="Procedures here"), backend).text == "proc"

    def test_structured_response_round_trips_schema(self):
        payload = {"verdict": "Yes", "rationale": "states the purpose"}
        backend = mock([{"tag": "j", "responses": [payload]}])
        resp = complete(
            LlmRequest(tag="j", system="s", user="u", schema_id="compliance.v1"), backend
        )
        assert resp.parsed == payload


class TestRetries:
    def test_invalid_twice_then_valid(self):
        backend = mock([
            {"tag": "j", "responses": ["not json", "{\"verdict\": 1}",
                                       {"verdict": "Yes", "rationale": "ok"}]}
        ])
        resp = complete(
            LlmRequest(tag="j", system="s", user="u", schema_id="compliance.v1", max_retries=2),
            backend,
        )
        assert resp.parsed["verdict"] == "Yes"

    def test_exhausted_retries_raise_schema_violation(self):
        backend = mock([
            {"tag": "j", "responses": ["bad", "bad", "bad"]}
        ])
        with pytest.raises(SchemaViolation):
            complete(
                LlmRequest(tag="j", system="s", user="u", schema_id="compliance.v1", max_retries=2),
                backend,
            )

    def test_retry_prompt_carries_error(self):
        seen = []

        class Spy:
            backend_id = "spy"

            def generate(self, req, user):
                seen.append(user)
                return "nope" if len(seen) == 1 else json.dumps(
                    {"verdict": "No", "rationale": "r"}
                )

        complete(
            LlmRequest(tag="j", system="s", user="base", schema_id="compliance.v1"), Spy()
        )
        assert seen[0] == "base"
        assert "rejected" in seen[1]


class TestCache:
    def test_second_call_served_from_cache(self, tmp_path):
        cache = ResponseCache(tmp_path)
        backend = mock([{"tag": "x", "responses": ["once"]}])
        req = LlmRequest(tag="x", system="s", user="u")
        first = complete(req, backend, cache=cache)
        second = complete(req, backend, cache=cache)  # script exhausted if not cached
        assert first.cached is False
        assert second.cached is True
        assert second.text == first.text

    def test_cache_key_covers_identity_fields(self):
        base = LlmRequest(tag="t", system="s", user="u", schema_id=None, temperature=0.0)
        assert cache_key("b", base) == cache_key("b", base)
        assert cache_key("b", base) != cache_key("other", base)
        assert cache_key("b", base) != cache_key(
            "b", LlmRequest(tag="t", system="s", user="u2")
        )

    def test_nonzero_temperature_bypasses_cache(self, tmp_path):
        cache = ResponseCache(tmp_path)
        backend = mock([{"tag": "x", "responses": ["a", "b"]}])
        req = LlmRequest(tag="x", system="s", user="u", temperature=0.7)
        assert complete(req, backend, cache=cache).text == "a"
        assert complete(req, backend, cache=cache).text == "b"


class TestJsonExtraction:
    def test_plain(self):
        assert extract_json('{"a": 1}') == {"a": 1}

    def test_fenced(self):
        assert extract_json('```json\n{"a": 1}\n```') == {"a": 1}

    def test_prose_wrapped(self):
        assert extract_json('Sure thing: {"a": 1} hope that helps') == {"a": 1}

    def test_registry_has_expected_schemas(self):
        registry = schema_registry()
        for schema_id in [
            "soa.axes.v1", "soa.cells.v1", "risk.entries.v1", "template.guidelines.v1",
            "keywords.v1", "query.v1", "draftbody.v1", "classify.v1", "compliance.v1",
            "facts.v1", "factcheck.v1", "rules.v1",
        ]:
            assert schema_id in registry
