"""Schema serialization and column-embedding providers.

A column's schema is flattened to one comma-joined sentence (name, type,
then whichever of constraints/comment exist). Embeddings are keyed by the
exact serialized text: identically described columns share semantics, and
a one-character difference is a cache miss by design.

Three providers implement the same surface:

* HashEmbedder   - deterministic token-hash vectors; lets the whole suite
                   run with no model runtime. Texts sharing tokens land
                   closer in cosine than disjoint ones, nothing more is
                   claimed.
* FileEmbedder   - lookups in an ndv-emb-v1 store produced offline.
* RemoteEmbedder - HTTP POST /embed against any encoder service.
"""
from __future__ import annotations

import hashlib
import json
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import ColumnSchema, TableRecord
from .errors import DataError, EmbeddingLookupError, IngestionError, TransportError

EMB_FORMAT = "ndv-emb-v1"
DEFAULT_DIM = 768


@dataclass(frozen=True)
class ColumnText:
    text: str
    source: ColumnSchema


def serialize_column(schema: ColumnSchema) -> ColumnText:
    """Join name, type and present optionals with commas, no whitespace
    injected, no dangling separators. Deterministic per schema."""
    if not schema.name:
        raise DataError("cannot serialize a column without a name")
    if not schema.declared_type:
        raise DataError(f"column {schema.name!r} has no declared type")
    parts = [schema.name, schema.declared_type]
    if schema.constraints is not None:
        parts.append(schema.constraints)
    if schema.comment is not None:
        parts.append(schema.comment)
    return ColumnText(text=",".join(parts), source=schema)


_TOKEN_RE = re.compile(r"[0-9a-zA-Z]+")


class HashEmbedder:
    """Deterministic stand-in for a frozen text encoder.

    Each lowercased token seeds a pseudo-random unit vector; the embedding
    is the L2-normalized mean over token occurrences. No token yields the
    first basis direction.
    """

    provider_id = "test-hash"

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 1:
            raise DataError(f"embedding dim must be >= 1, got {dim}")
        self.dim = dim
        self._token_cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            seed = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "big")
            raw = np.random.default_rng(seed).standard_normal(self.dim)
            vec = raw / np.linalg.norm(raw)
            self._token_cache[token] = vec
        return vec

    def embed_text(self, text: str) -> np.ndarray:
        tokens = [t.lower() for t in _TOKEN_RE.findall(text)]
        if not tokens:
            basis = np.zeros(self.dim)
            basis[0] = 1.0
            return basis
        mean = np.mean([self._token_vector(t) for t in tokens], axis=0)
        norm = np.linalg.norm(mean)
        if norm < 1e-12:
            basis = np.zeros(self.dim)
            basis[0] = 1.0
            return basis
        return mean / norm

    def embed_texts(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed_text(t) for t in texts]


class FileEmbedder:
    """Byte-exact lookups in an immutable in-memory store."""

    def __init__(self, store: "EmbeddingStore"):
        self.store = store
        self.dim = store.dim
        self.provider_id = store.provider

    def embed_text(self, text: str) -> np.ndarray:
        vec = self.store.vectors.get(text)
        if vec is None:
            raise EmbeddingLookupError(text)
        return vec

    def embed_texts(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed_text(t) for t in texts]


class RemoteEmbedder:
    """POST /embed {"texts": [...]} -> {"dim": l, "vectors": [[...], ...]}.

    Non-200 responses and connection failures are retried, then surfaced as
    TransportError with the attempt count. Calls are idempotent.
    """

    def __init__(self, url: str, dim: int | None = None, retries: int = 2, timeout: float = 30.0):
        self.url = url.rstrip("/") + "/embed"
        self.dim = dim
        self.provider_id = f"remote:{url}"
        self.retries = retries
        self.timeout = timeout

    def embed_texts(self, texts: Sequence[str]) -> list[np.ndarray]:
        payload = json.dumps({"texts": list(texts)}).encode("utf-8")
        attempts = 0
        last_err = "no attempt made"
        while attempts <= self.retries:
            attempts += 1
            req = urllib.request.Request(
                self.url, data=payload, headers={"Content-Type": "application/json"}
            )
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    if resp.status != 200:
                        last_err = f"HTTP {resp.status} from {self.url}"
                        continue
                    body = json.loads(resp.read().decode("utf-8"))
                dim = int(body["dim"])
                if self.dim is None:
                    self.dim = dim
                elif dim != self.dim:
                    raise DataError(f"provider returned dim {dim}, expected {self.dim}")
                vectors = [np.asarray(v, dtype=float) for v in body["vectors"]]
                if len(vectors) != len(texts) or any(v.shape != (dim,) for v in vectors):
                    raise DataError("provider response shape does not match request")
                if any(not np.all(np.isfinite(v)) for v in vectors):
                    raise DataError("provider returned non-finite embedding entries")
                return vectors
            except urllib.error.HTTPError as exc:
                last_err = f"HTTP {exc.code} from {self.url}"
            except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
                last_err = f"transport failure: {exc}"
            if attempts <= self.retries:
                time.sleep(0.05 * attempts)
        raise TransportError(last_err, attempts)

    def embed_text(self, text: str) -> np.ndarray:
        return self.embed_texts([text])[0]


@dataclass
class EmbeddingStore:
    """Immutable map from serialized column text to its vector."""

    vectors: dict[str, np.ndarray]
    dim: int
    provider: str
    meta: dict | None = None


def write_embedding_file(path: str | Path, store: EmbeddingStore) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        header = {"format": EMB_FORMAT, "dim": store.dim, "provider": store.provider}
        if store.meta:
            header["meta"] = store.meta
        fp.write(json.dumps(header) + "\n")
        for key in sorted(store.vectors):
            vec = store.vectors[key]
            fp.write(json.dumps({"key": key, "dim": store.dim, "vec": [float(x) for x in vec]}) + "\n")


def read_embedding_file(path: str | Path) -> EmbeddingStore:
    """Parse and validate an ndv-emb-v1 file; every vector must match the
    header dimension."""
    path = Path(path)
    with open(path, encoding="utf-8") as fp:
        header_line = fp.readline()
        if not header_line.strip():
            raise IngestionError(f"{path}: missing header line")
        header = json.loads(header_line)
        if header.get("format") != EMB_FORMAT:
            raise IngestionError(f"{path}: not an {EMB_FORMAT} file (format={header.get('format')!r})")
        dim = int(header["dim"])
        vectors: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fp, start=2):
            if not line.strip():
                continue
            obj = json.loads(line)
            vec = np.asarray(obj["vec"], dtype=float)
            if int(obj.get("dim", dim)) != dim or vec.shape != (dim,):
                raise IngestionError(
                    f"{path}:{lineno}: vector dim {vec.shape[0] if vec.ndim else '?'} != header dim {dim}"
                )
            if not np.all(np.isfinite(vec)):
                raise IngestionError(f"{path}:{lineno}: non-finite vector entry")
            vectors[obj["key"]] = vec
    return EmbeddingStore(vectors=vectors, dim=dim, provider=header.get("provider", "unknown"),
                          meta=header.get("meta"))


def build_store(texts: Sequence[str], provider) -> EmbeddingStore:
    """Embed unique texts through any provider into a store."""
    unique = sorted(set(texts))
    vecs = provider.embed_texts(unique)
    return EmbeddingStore(
        vectors=dict(zip(unique, vecs)),
        dim=provider.dim,
        provider=getattr(provider, "provider_id", "unknown"),
    )


def embed_table(table: TableRecord, provider, texts: Sequence[str] | None = None) -> np.ndarray:
    """t x l matrix of column embeddings, row order = column order.

    texts overrides the serialized schema sentences (used by the ablation
    pipelines that distort them); embedding errors are rethrown with the
    offending column index.
    """
    if texts is None:
        texts = [serialize_column(s).text for s in table.schemas]
    rows = []
    for i, text in enumerate(texts):
        try:
            rows.append(np.asarray(provider.embed_text(text), dtype=float))
        except EmbeddingLookupError as exc:
            raise EmbeddingLookupError(f"{exc.text} (table {table.table_id}, column {i})") from exc
    mat = np.vstack(rows)
    if mat.shape != (table.t, provider.dim):
        raise DataError(f"embedding matrix {mat.shape} != ({table.t}, {provider.dim})")
    return mat


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
