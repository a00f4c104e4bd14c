"""Embedding backends and exact nearest-neighbor retrieval over chunks.

The index is a flat in-process store scanned with exact cosine similarity;
at protocol scale (a few thousand chunks) approximate structures buy
nothing. Writes take the index lock, reads are safe on the immutable row
snapshots. Results order by score descending with ascending chunk_id as
the tie-break so rankings are reproducible.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Chunk
from .errors import BackendUnavailable, BackendTimeout, DimensionMismatch

DEFAULT_DIM = 128
_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class MetadataFilter:
    header1_any: frozenset[str] | None = None
    header2_any: frozenset[str] | None = None
    page_min: int | None = None
    page_max: int | None = None

    def __post_init__(self) -> None:
        if (
            self.page_min is not None
            and self.page_max is not None
            and self.page_min > self.page_max
        ):
            raise ValueError("page_min must not exceed page_max")

    def matches(self, chunk: Chunk) -> bool:
        if self.header1_any is not None and chunk.header1 not in self.header1_any:
            return False
        if self.header2_any is not None and chunk.header2 not in self.header2_any:
            return False
        if self.page_min is not None and chunk.pages[1] < self.page_min:
            return False
        if self.page_max is not None and chunk.pages[0] > self.page_max:
            return False
        return True

    @classmethod
    def from_dict(cls, data: dict) -> "MetadataFilter":
        return cls(
            header1_any=frozenset(data["header1_any"]) if data.get("header1_any") else None,
            header2_any=frozenset(data["header2_any"]) if data.get("header2_any") else None,
            page_min=data.get("page_min"),
            page_max=data.get("page_max"),
        )

    def to_dict(self) -> dict:
        return {
            "header1_any": sorted(self.header1_any) if self.header1_any else None,
            "header2_any": sorted(self.header2_any) if self.header2_any else None,
            "page_min": self.page_min,
            "page_max": self.page_max,
        }


@dataclass(frozen=True)
class SearchHit:
    chunk_id: str
    score: float
    rank: int


class HashingEmbedder:
    """Deterministic offline embedder: token feature-hashing, TF weights, unit norm.

    Tokens are hashed into ``dim`` buckets with a platform-stable digest, so
    identical text yields identical vectors on every run and platform.
    """

    def __init__(self, dim: int = DEFAULT_DIM) -> None:
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.backend_id = f"hashing:{dim}"

    def embed(self, texts: list[str]) -> list[list[float]]:
        return [self._embed_one(text) for text in texts]

    def _embed_one(self, text: str) -> list[float]:
        vec = np.zeros(self.dim, dtype=np.float64)
        counts = Counter(_TOKEN_RE.findall(text.lower()))
        for token, count in counts.items():
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            bucket = int.from_bytes(digest, "big") % self.dim
            vec[bucket] += count
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            vec[0] = 1.0
            return vec.tolist()
        return (vec / norm).tolist()


class RemoteEmbedder:
    """JSON-over-HTTP embeddings endpoint with a content-hash disk cache."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        dim: int = DEFAULT_DIM,
        cache_dir: Path | None = None,
        timeout_s: float = 60.0,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.dim = dim
        self.cache_dir = cache_dir
        self.timeout_s = timeout_s
        self.backend_id = f"remote:{model}:{dim}"
        if cache_dir is not None:
            cache_dir.mkdir(parents=True, exist_ok=True)

    @classmethod
    def from_env(cls, cache_dir: Path | None = None) -> "RemoteEmbedder":
        base_url = os.environ.get("EMBED_BASE_URL")
        model = os.environ.get("EMBED_MODEL")
        if not base_url or not model:
            raise BackendUnavailable(
                "EMBED_BASE_URL and EMBED_MODEL must be set for the remote embedder"
            )
        dim = int(os.environ.get("EMBED_DIM", str(DEFAULT_DIM)))
        return cls(base_url, model, os.environ.get("EMBED_API_KEY"), dim, cache_dir)

    def _cache_path(self, text: str) -> Path | None:
        if self.cache_dir is None:
            return None
        key = hashlib.sha256(
            json.dumps([self.model, self.dim, text], ensure_ascii=False).encode("utf-8")
        ).hexdigest()
        return self.cache_dir / f"{key}.json"

    def embed(self, texts: list[str]) -> list[list[float]]:
        out: list[list[float] | None] = [None] * len(texts)
        missing: list[int] = []
        for i, text in enumerate(texts):
            path = self._cache_path(text)
            if path is not None and path.exists():
                out[i] = json.loads(path.read_text(encoding="utf-8"))
            else:
                missing.append(i)
        if missing:
            fetched = self._fetch([texts[i] for i in missing])
            for i, vec in zip(missing, fetched):
                out[i] = vec
                path = self._cache_path(texts[i])
                if path is not None:
                    path.write_text(json.dumps(vec), encoding="utf-8")
        return [normalize(v) for v in out]  # type: ignore[arg-type]

    def _fetch(self, texts: list[str]) -> list[list[float]]:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model, "input": texts, "dimensions": self.dim},
                headers=headers,
                timeout=self.timeout_s,
            )
        except requests.Timeout as exc:
            raise BackendTimeout(f"embedding call timed out after {self.timeout_s}s") from exc
        except requests.RequestException as exc:
            raise BackendUnavailable(f"embedding endpoint unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnavailable(
                f"embedding endpoint returned {resp.status_code}: {resp.text[:200]}"
            )
        vectors = [item["embedding"] for item in resp.json()["data"]]
        for vec in vectors:
            if len(vec) != self.dim:
                raise DimensionMismatch(
                    f"endpoint returned dimension {len(vec)}, expected {self.dim}"
                )
        return vectors


def normalize(vector: list[float]) -> list[float]:
    arr = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return (arr / norm).tolist()


def embed(texts: list[str], backend) -> list[list[float]]:
    """Embed texts through the backend; every vector comes back unit-norm."""
    vectors = backend.embed(texts)
    if len(vectors) != len(texts):
        raise DimensionMismatch(
            f"backend returned {len(vectors)} vectors for {len(texts)} texts"
        )
    for vec in vectors:
        if len(vec) != backend.dim:
            raise DimensionMismatch(
                f"vector dimension {len(vec)} != backend dimension {backend.dim}"
            )
    return vectors


class VectorIndex:
    """Flat exact-cosine index over chunks with metadata filtering."""

    def __init__(self, dim: int = DEFAULT_DIM) -> None:
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self._lock = threading.Lock()
        self._chunks: dict[str, Chunk] = {}
        self._vectors: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self._chunks)

    def upsert_chunks(self, items: list[tuple[Chunk, list[float]]]) -> int:
        """Insert or replace by chunk_id; re-upserting never duplicates."""
        with self._lock:
            count = 0
            for chunk, vector in items:
                if len(vector) != self.dim:
                    raise DimensionMismatch(
                        f"vector dimension {len(vector)} != index dimension {self.dim}"
                    )
                self._chunks[chunk.chunk_id] = chunk
                self._vectors[chunk.chunk_id] = np.asarray(vector, dtype=np.float64)
                count += 1
            return count

    def get(self, chunk_id: str) -> Chunk | None:
        return self._chunks.get(chunk_id)

    def chunk_ids(self) -> list[str]:
        return list(self._chunks)

    def search(
        self,
        query_vec: list[float],
        filter: MetadataFilter | None = None,
        k: int = 8,
    ) -> list[SearchHit]:
        """Top-k exact cosine hits among chunks satisfying the filter."""
        if k < 1:
            raise ValueError("k must be >= 1")
        query = np.asarray(query_vec, dtype=np.float64)
        if query.shape != (self.dim,):
            raise DimensionMismatch(
                f"query dimension {query.shape} != index dimension {self.dim}"
            )
        scored: list[tuple[float, str]] = []
        for chunk_id, chunk in self._chunks.items():
            if filter is not None and not filter.matches(chunk):
                continue
            score = float(np.dot(self._vectors[chunk_id], query))
            score = max(-1.0, min(1.0, score))
            scored.append((score, chunk_id))
        scored.sort(key=lambda pair: (-pair[0], pair[1]))
        return [
            SearchHit(chunk_id=cid, score=score, rank=rank)
            for rank, (score, cid) in enumerate(scored[:k], start=1)
        ]

    # ------------------------------------------------------------------
    # snapshot serialization (vecindex.v1)

    def to_snapshot(self) -> dict:
        entries = []
        for chunk_id in sorted(self._chunks):
            chunk = self._chunks[chunk_id]
            entries.append(
                {"chunk": chunk.to_dict(), "vector": self._vectors[chunk_id].tolist()}
            )
        return {"schema": "vecindex.v1", "dim": self.dim, "entries": entries}

    @classmethod
    def from_snapshot(cls, snapshot: dict) -> "VectorIndex":
        if snapshot.get("schema") != "vecindex.v1":
            raise ValueError(f"unsupported index snapshot: {snapshot.get('schema')!r}")
        index = cls(dim=snapshot["dim"])
        items = [
            (Chunk.from_dict(entry["chunk"]), entry["vector"])
            for entry in snapshot["entries"]
        ]
        index.upsert_chunks(items)
        return index

    def save(self, path: Path) -> None:
        from .util import write_json

        write_json(path, self.to_snapshot())

    @classmethod
    def load(cls, path: Path) -> "VectorIndex":
        from .util import read_json

        return cls.from_snapshot(read_json(path))
