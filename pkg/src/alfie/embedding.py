"""Text-to-unit-vector embedding behind interchangeable backends.

Two backends ship here:

* ``DeterministicBackend`` hashes the normalized text (64-bit FNV-1a) and
  expands the hash with SplitMix64 into a vector. It has no semantic content
  but is bit-exact across runs and languages, which is what the test suite
  needs.
* ``RemoteBackend`` talks to an encoder sidecar over HTTP
  (``POST {endpoint}/embed``, ``GET {endpoint}/healthz``).

``Embedder`` wraps a backend with text normalization and a cache.
"""

from __future__ import annotations

import math
import re
import threading
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from typing import Any, Protocol, Sequence

import httpx

__all__ = [
    "EmbeddingError",
    "EmptyText",
    "BackendUnavailable",
    "DimensionMismatch",
    "EmbeddingVector",
    "BackendKind",
    "BackendDescriptor",
    "DeterministicBackend",
    "RemoteBackend",
    "Embedder",
    "normalize_text",
    "cosine",
    "splitmix64",
    "fnv1a64",
]

MASK64 = 0xFFFF_FFFF_FFFF_FFFF
TWO_64 = 1 << 64
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

DEFAULT_DIM = 64
DEFAULT_CACHE_CAPACITY = 10_000

_WS = re.compile(r"[ \t\n\r\f\v]+")
_ASCII_LOWER = str.maketrans("ABCDEFGHIJKLMNOPQRSTUVWXYZ", "abcdefghijklmnopqrstuvwxyz")


class EmbeddingError(Exception):
    """Base class for embedding failures."""


class EmptyText(EmbeddingError, ValueError):
    pass


class BackendUnavailable(EmbeddingError):
    pass


class DimensionMismatch(EmbeddingError, ValueError):
    pass


def normalize_text(text: str) -> str:
    """Trim, collapse ASCII whitespace runs to one space, lowercase A-Z only."""
    return _WS.sub(" ", text).strip(" ").translate(_ASCII_LOWER)


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & MASK64
    return h


def splitmix64(state: int) -> tuple[int, int]:
    """Advance ``state`` one step. Returns ``(new_state, output)``."""
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & MASK64
    z ^= z >> 31
    return state, z


def _l2_normalize(values: Sequence[float]) -> tuple[float, ...]:
    # sequential summation keeps the result reproducible outside Python
    ss = 0.0
    for x in values:
        ss += x * x
    norm = math.sqrt(ss)
    if not math.isfinite(norm) or norm == 0.0:
        raise ValueError("cannot normalize a zero or non-finite vector")
    return tuple(x / norm for x in values)


@dataclass(frozen=True)
class EmbeddingVector:
    """Immutable unit-norm vector."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) < 1:
            raise ValueError("empty embedding")
        ss = 0.0
        for x in self.values:
            if not math.isfinite(x):
                raise ValueError("embedding contains non-finite values")
            ss += x * x
        if abs(math.sqrt(ss) - 1.0) > 1e-6:
            raise ValueError(f"embedding is not unit norm (norm={math.sqrt(ss)!r})")

    @classmethod
    def from_raw(cls, values: Sequence[float]) -> EmbeddingVector:
        return cls(_l2_normalize([float(x) for x in values]))

    @property
    def dim(self) -> int:
        return len(self.values)

    def __neg__(self) -> EmbeddingVector:
        return EmbeddingVector(tuple(-x for x in self.values))

    def __len__(self) -> int:
        return len(self.values)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity clamped to [-1, 1]."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"dim {a.dim} != dim {b.dim}")
    if a.values == b.values:
        return 1.0
    dot = na = nb = 0.0
    for x, y in zip(a.values, b.values):
        dot += x * y
        na += x * x
        nb += y * y
    c = dot / (math.sqrt(na) * math.sqrt(nb))
    return max(-1.0, min(1.0, c))


class BackendKind(str, Enum):
    Deterministic = "Deterministic"
    Remote = "Remote"


@dataclass(frozen=True)
class BackendDescriptor:
    kind: BackendKind
    dim: int | None = None
    endpoint: str | None = None
    model_name: str | None = None

    def __post_init__(self) -> None:
        if self.kind is BackendKind.Remote and not self.endpoint:
            raise ValueError("remote backend requires a non-empty endpoint")
        if self.dim is not None and self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.kind is BackendKind.Deterministic and self.dim is None:
            raise ValueError("deterministic backend requires a dim")


class Backend(Protocol):
    """Computes raw embeddings for already-normalized, non-empty texts."""

    @property
    def descriptor(self) -> BackendDescriptor: ...

    def compute(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


class DeterministicBackend:
    def __init__(self, dim: int = DEFAULT_DIM) -> None:
        self._descriptor = BackendDescriptor(BackendKind.Deterministic, dim=dim)

    @property
    def descriptor(self) -> BackendDescriptor:
        return self._descriptor

    @property
    def dim(self) -> int:
        assert self._descriptor.dim is not None
        return self._descriptor.dim

    def vector(self, text: str) -> EmbeddingVector:
        state = fnv1a64(text.encode("utf-8"))
        raw = []
        for _ in range(self.dim):
            state, z = splitmix64(state)
            raw.append(2.0 * (z / TWO_64) - 1.0)
        return EmbeddingVector(_l2_normalize(raw))

    def compute(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [self.vector(t) for t in texts]


class RemoteBackend:
    """Client for the encoder sidecar's ``/embed`` protocol.

    The vector dimension is learned from the first successful response and
    enforced afterwards. Any transport failure, non-2xx status or malformed
    body surfaces as ``BackendUnavailable``.
    """

    def __init__(
        self,
        endpoint: str,
        *,
        model_name: str | None = None,
        timeout: float = 30.0,
        client: httpx.Client | None = None,
    ) -> None:
        if not endpoint:
            raise ValueError("remote backend requires a non-empty endpoint")
        self.endpoint = endpoint.rstrip("/")
        self.model_name = model_name
        self._client = client or httpx.Client(timeout=timeout)
        self._dim: int | None = None
        self._lock = threading.Lock()

    @property
    def descriptor(self) -> BackendDescriptor:
        return BackendDescriptor(
            BackendKind.Remote, dim=self._dim, endpoint=self.endpoint, model_name=self.model_name
        )

    @property
    def dim(self) -> int | None:
        return self._dim

    def healthy(self) -> bool:
        try:
            resp = self._client.get(f"{self.endpoint}/healthz")
        except httpx.HTTPError:
            return False
        return resp.is_success

    def compute(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            return []
        try:
            resp = self._client.post(f"{self.endpoint}/embed", json={"texts": list(texts)})
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"{self.endpoint}/embed unreachable: {exc}") from exc
        if not resp.is_success:
            raise BackendUnavailable(f"{self.endpoint}/embed returned HTTP {resp.status_code}")
        try:
            body = resp.json()
        except ValueError as exc:
            raise BackendUnavailable("embed response is not valid JSON") from exc
        return self._parse(body, len(texts))

    def _parse(self, body: Any, expected: int) -> list[EmbeddingVector]:
        if not isinstance(body, dict):
            raise BackendUnavailable("embed response must be an object")
        dim, rows = body.get("dim"), body.get("vectors")
        if not isinstance(dim, int) or isinstance(dim, bool) or dim < 2:
            raise BackendUnavailable(f"embed response has invalid dim: {dim!r}")
        if not isinstance(rows, list) or len(rows) != expected:
            raise BackendUnavailable("embed response has wrong number of vectors")
        with self._lock:
            if self._dim is None:
                self._dim = dim
            elif dim != self._dim:
                raise DimensionMismatch(f"backend switched from dim {self._dim} to {dim}")
        out = []
        for row in rows:
            if not isinstance(row, list) or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in row
            ):
                raise BackendUnavailable("embed response row is not a list of numbers")
            if len(row) != dim:
                raise DimensionMismatch(f"row of length {len(row)} in a dim-{dim} response")
            try:
                out.append(EmbeddingVector.from_raw(row))
            except ValueError as exc:
                raise BackendUnavailable(f"embed response row unusable: {exc}") from exc
        return out

    def close(self) -> None:
        self._client.close()


class _Cache:
    """Thread-safe map with optional LRU eviction (``capacity=None`` is unbounded)."""

    def __init__(self, capacity: int | None) -> None:
        self.capacity = capacity
        self._data: OrderedDict[tuple[Any, str], EmbeddingVector] = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key: tuple[Any, str]) -> EmbeddingVector | None:
        with self._lock:
            v = self._data.get(key)
            if v is not None and self.capacity is not None:
                self._data.move_to_end(key)
            return v

    def put(self, key: tuple[Any, str], value: EmbeddingVector) -> EmbeddingVector:
        with self._lock:
            existing = self._data.get(key)
            if existing is not None:
                return existing
            self._data[key] = value
            if self.capacity is not None and len(self._data) > self.capacity:
                self._data.popitem(last=False)
            return value

    def __len__(self) -> int:
        return len(self._data)


class Embedder:
    """Normalizing, caching front end over a backend."""

    def __init__(
        self,
        backend: Backend,
        *,
        cache: bool = True,
        cache_capacity: int | None = DEFAULT_CACHE_CAPACITY,
    ) -> None:
        self.backend = backend
        if not cache:
            self._cache = None
        elif isinstance(backend, DeterministicBackend):
            self._cache = _Cache(None)
        else:
            self._cache = _Cache(cache_capacity)
        self._identity = (backend.descriptor.kind, backend.descriptor.endpoint, backend.descriptor.model_name)

    @classmethod
    def deterministic(cls, dim: int = DEFAULT_DIM, **kwargs: Any) -> Embedder:
        return cls(DeterministicBackend(dim), **kwargs)

    @property
    def descriptor(self) -> BackendDescriptor:
        return self.backend.descriptor

    @property
    def cache_size(self) -> int:
        return 0 if self._cache is None else len(self._cache)

    def embed(self, text: str) -> EmbeddingVector:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        normalized = []
        for t in texts:
            n = normalize_text(t)
            if not n:
                raise EmptyText(f"text {t!r} is empty after normalization")
            normalized.append(n)

        out: list[EmbeddingVector | None] = [None] * len(normalized)
        missing: dict[str, list[int]] = {}
        for i, n in enumerate(normalized):
            hit = self._cache.get((self._identity, n)) if self._cache is not None else None
            if hit is not None:
                out[i] = hit
            else:
                missing.setdefault(n, []).append(i)

        if missing:
            keys = list(missing)
            vectors = self.backend.compute(keys)
            # validate the whole batch before caching anything
            dims = {v.dim for v in vectors} | {v.dim for v in out if v is not None}
            if len(dims) > 1:
                raise DimensionMismatch(f"mixed dimensions in batch: {sorted(dims)}")
            for key, vec in zip(keys, vectors):
                if self._cache is not None:
                    vec = self._cache.put((self._identity, key), vec)
                for i in missing[key]:
                    out[i] = vec
        return [v for v in out if v is not None]
