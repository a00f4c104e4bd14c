"""Gateway for all model calls.

Every pipeline operation that needs a language model goes through
:func:`complete`, which adds JSON-schema validation with retry, optional
disk caching, and works identically against the deterministic scripted
mock and a remote chat-completions endpoint.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Protocol

import jsonschema

from .errors import (
    BackendTimeout,
    BackendUnavailable,
    SchemaViolation,
    ScriptExhausted,
)

logger = logging.getLogger(__name__)

_RETRY_NOTE = (
    "\n\nYour previous reply was rejected: {error}\n"
    "Reply again with ONLY valid JSON matching the required schema."
)


@dataclass(frozen=True)
class LlmRequest:
    """One model call, identified by a stable purpose ``tag``."""

    tag: str
    system: str
    user: str
    schema_id: str | None = None
    temperature: float = 0.0
    max_retries: int = 2

    def __post_init__(self) -> None:
        if not self.tag:
            raise ValueError("LlmRequest.tag must be non-empty")


@dataclass(frozen=True)
class LlmResponse:
    text: str
    parsed: Any | None
    backend_id: str
    cached: bool = False


class LlmBackend(Protocol):
    """Anything that can answer a request; ``user`` carries retry-amended prompts."""

    backend_id: str

    def generate(self, req: LlmRequest, user: str) -> str: ...


# ---------------------------------------------------------------------------
# schema registry


_SCHEMAS: dict[str, dict] | None = None


def schema_registry() -> dict[str, dict]:
    global _SCHEMAS
    if _SCHEMAS is None:
        schemas: dict[str, dict] = {}
        for entry in resources.files("consentforge.schemas").iterdir():
            if entry.name.endswith(".json"):
                schema = json.loads(entry.read_text(encoding="utf-8"))
                schemas[entry.name.removesuffix(".json")] = schema
        _SCHEMAS = schemas
    return _SCHEMAS


def validate_against_schema(value: Any, schema_id: str) -> None:
    """Raise SchemaViolation when ``value`` does not match the registered schema."""
    registry = schema_registry()
    if schema_id not in registry:
        raise SchemaViolation(f"unknown schema id: {schema_id}", schema_id=schema_id)
    try:
        jsonschema.validate(value, registry[schema_id])
    except jsonschema.ValidationError as exc:
        raise SchemaViolation(
            f"schema {schema_id} violated: {exc.message}", schema_id=schema_id
        ) from exc


def extract_json(text: str) -> Any:
    """Parse a JSON payload, tolerating code fences and surrounding prose."""
    candidate = text.strip()
    if candidate.startswith("```"):
        candidate = candidate.strip("`")
        if candidate.startswith("json"):
            candidate = candidate[4:]
        candidate = candidate.strip()
    try:
        return json.loads(candidate)
    except json.JSONDecodeError:
        start = candidate.find("{")
        end = candidate.rfind("}")
        if start != -1 and end > start:
            return json.loads(candidate[start : end + 1])
        raise


# ---------------------------------------------------------------------------
# caching


class ResponseCache:
    """Disk cache for completions; hits return byte-identical text."""

    def __init__(self, directory: Path) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> str | None:
        path = self._path(key)
        with self._lock:
            if not path.exists():
                return None
            return json.loads(path.read_text(encoding="utf-8"))["text"]

    def put(self, key: str, text: str) -> None:
        with self._lock:
            self._path(key).write_text(
                json.dumps({"text": text}, ensure_ascii=False), encoding="utf-8"
            )


def cache_key(backend_id: str, req: LlmRequest) -> str:
    payload = json.dumps(
        [backend_id, req.tag, req.system, req.user, req.schema_id, req.temperature],
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# completion with validation + retry


def complete(
    req: LlmRequest,
    backend: LlmBackend,
    cache: ResponseCache | None = None,
) -> LlmResponse:
    """Run one model call; validate and retry per the request contract.

    When the response fails JSON-schema validation the call is retried with
    the validation error appended to the prompt, up to ``req.max_retries``
    extra attempts, then raises :class:`SchemaViolation`.
    """
    key = cache_key(backend.backend_id, req)
    if cache is not None and req.temperature == 0:
        hit = cache.get(key)
        if hit is not None:
            parsed = _parse_if_needed(hit, req.schema_id)
            return LlmResponse(hit, parsed, backend.backend_id, cached=True)

    user = req.user
    last_error = ""
    for _attempt in range(req.max_retries + 1):
        text = backend.generate(req, user)
        if req.schema_id is None:
            if cache is not None and req.temperature == 0:
                cache.put(key, text)
            return LlmResponse(text, None, backend.backend_id)
        try:
            parsed = extract_json(text)
            validate_against_schema(parsed, req.schema_id)
        except (json.JSONDecodeError, SchemaViolation) as exc:
            last_error = str(exc)
            logger.warning("tag=%s response rejected: %s", req.tag, last_error)
            user = req.user + _RETRY_NOTE.format(error=last_error)
            continue
        if cache is not None and req.temperature == 0:
            cache.put(key, text)
        return LlmResponse(text, parsed, backend.backend_id)
    raise SchemaViolation(
        f"tag={req.tag}: response failed validation after "
        f"{req.max_retries + 1} attempts: {last_error}",
        tag=req.tag,
    )


def _parse_if_needed(text: str, schema_id: str | None) -> Any | None:
    if schema_id is None:
        return None
    parsed = extract_json(text)
    validate_against_schema(parsed, schema_id)
    return parsed


# ---------------------------------------------------------------------------
# scripted mock backend


@dataclass
class ScriptEntry:
    """Ordered canned responses for one tag, optionally gated on a prompt substring."""

    tag: str
    responses: list[str]
    match: str | None = None
    cursor: int = field(default=0, init=False)

    def take(self) -> str | None:
        if self.cursor >= len(self.responses):
            return None
        value = self.responses[self.cursor]
        self.cursor += 1
        return value


class MockLlmBackend:
    """Fully deterministic backend driven by a script.

    The script is a list of entries, each binding a request tag (and an
    optional ``match`` substring of the prompt) to an ordered response
    list. Exhausting every matching entry raises :class:`ScriptExhausted`
    so test authoring mistakes fail loudly.
    """

    backend_id = "mock"

    def __init__(self, entries: list[ScriptEntry]) -> None:
        self.entries = entries
        self._lock = threading.Lock()

    @classmethod
    def from_mapping(cls, script: dict[str, Any]) -> "MockLlmBackend":
        """Build from ``{"entries": [{tag, match?, responses}, ...]}``."""
        entries = []
        for raw in script["entries"]:
            responses = [_render_response(r) for r in raw["responses"]]
            entries.append(
                ScriptEntry(tag=raw["tag"], responses=responses, match=raw.get("match"))
            )
        return cls(entries)

    @classmethod
    def from_script_file(cls, path: Path | str) -> "MockLlmBackend":
        return cls.from_mapping(json.loads(Path(path).read_text(encoding="utf-8")))

    def generate(self, req: LlmRequest, user: str) -> str:
        haystack = req.system + "\n" + user
        with self._lock:
            matched = False
            for entry in self.entries:
                if entry.tag != req.tag:
                    continue
                if entry.match is not None and entry.match not in haystack:
                    continue
                matched = True
                value = entry.take()
                if value is not None:
                    return value
            if matched:
                raise ScriptExhausted(f"script exhausted for tag {req.tag!r}", tag=req.tag)
            raise ScriptExhausted(f"no script entry for tag {req.tag!r}", tag=req.tag)


def _render_response(value: Any) -> str:
    if isinstance(value, str):
        return value
    return json.dumps(value, sort_keys=True, ensure_ascii=False)


# ---------------------------------------------------------------------------
# remote chat-completions backend


class RemoteLlmBackend:
    """Generic chat-completions JSON-over-HTTP backend, configured from env."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout_s: float = 120.0,
        max_concurrency: int = 4,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout_s = timeout_s
        self.backend_id = f"remote:{model}"
        self._semaphore = threading.Semaphore(max_concurrency)

    @classmethod
    def from_env(cls) -> "RemoteLlmBackend":
        base_url = os.environ.get("LLM_BASE_URL")
        model = os.environ.get("LLM_MODEL")
        if not base_url or not model:
            raise BackendUnavailable(
                "LLM_BASE_URL and LLM_MODEL must be set for the remote backend"
            )
        return cls(base_url, model, os.environ.get("LLM_API_KEY"))

    def generate(self, req: LlmRequest, user: str) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model,
            "temperature": req.temperature,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": user},
            ],
        }
        with self._semaphore:
            try:
                resp = requests.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout_s,
                )
            except requests.Timeout as exc:
                raise BackendTimeout(f"model call timed out after {self.timeout_s}s") from exc
            except requests.RequestException as exc:
                raise BackendUnavailable(f"model endpoint unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnavailable(
                f"model endpoint returned {resp.status_code}: {resp.text[:200]}"
            )
        body = resp.json()
        return body["choices"][0]["message"]["content"]


def default_cache_dir() -> Path:
    root = os.environ.get("CONSENTFORGE_CACHE_DIR")
    if root:
        return Path(root)
    return Path.home() / ".cache" / "consentforge"
