"""Append-only JSON-lines persistence for query logs and feedback.

Two files live in the storage directory: ``queries.log`` and ``feedback.log``.
Each line is one JSON object. Ids are assigned per file, starting at 1.
Readers skip lines they cannot parse (e.g. a final line cut short by a crash)
and report how many they skipped.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import asdict, dataclass, fields, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Generic, Iterator, TypeVar

from .adaptation import FeedbackRecord, FeedbackSource
from .embedding import Embedder
from .moral import Emotion, TemplateId, Verdict

log = logging.getLogger(__name__)

__all__ = ["QueryLogRecord", "Stats", "LoadResult", "Store", "StorageError", "utc_now", "format_ts", "parse_ts"]

QUERIES_FILE = "queries.log"
FEEDBACK_FILE = "feedback.log"


class StorageError(OSError):
    pass


def utc_now() -> datetime:
    """Current UTC time truncated to whole milliseconds (the log precision)."""
    now = datetime.now(timezone.utc)
    return now.replace(microsecond=now.microsecond - now.microsecond % 1000)


def format_ts(ts: datetime) -> str:
    if ts.tzinfo is None:
        raise ValueError("timestamps must be timezone-aware")
    ts = ts.astimezone(timezone.utc)
    if ts.microsecond % 1000:
        raise ValueError("timestamps are stored with millisecond precision")
    return ts.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ts.microsecond // 1000:03d}Z"


def parse_ts(s: str) -> datetime:
    return datetime.strptime(s, "%Y-%m-%dT%H:%M:%S.%fZ").replace(tzinfo=timezone.utc)


@dataclass(frozen=True)
class QueryLogRecord:
    """One handled utterance. Score fields are ``None`` for unparseable input."""

    timestamp: datetime
    session_id: str
    utterance_raw: str
    canonical_question: str | None
    template_id: TemplateId | None
    action: str | None
    raw_score: float | None
    normalized_score: float | None
    adjusted_score: float | None
    verdict: Verdict | None
    emotion_label: Emotion | None
    feedback_requested: bool
    id: int | None = None

    def __post_init__(self) -> None:
        if self.normalized_score is not None:
            if self.raw_score is None or self.normalized_score != self.raw_score / 2.0:
                raise ValueError("normalized_score must equal raw_score / 2")
            if not -1.0 <= self.normalized_score <= 1.0:
                raise ValueError("normalized_score outside [-1, 1]")

    @property
    def parsed(self) -> bool:
        return self.template_id is not None


def _query_to_json(rec: QueryLogRecord) -> dict[str, Any]:
    d = asdict(rec)
    d["timestamp"] = format_ts(rec.timestamp)
    for key in ("template_id", "verdict", "emotion_label"):
        if d[key] is not None:
            d[key] = d[key].value
    return d


def _query_from_json(d: dict[str, Any]) -> QueryLogRecord:
    expected = {f.name for f in fields(QueryLogRecord)}
    if set(d) != expected:
        raise ValueError(f"unexpected fields {sorted(set(d) ^ expected)}")
    if not isinstance(d["id"], int) or not isinstance(d["feedback_requested"], bool):
        raise ValueError("bad id or flag")
    return QueryLogRecord(
        id=d["id"],
        timestamp=parse_ts(d["timestamp"]),
        session_id=str(d["session_id"]),
        utterance_raw=str(d["utterance_raw"]),
        canonical_question=d["canonical_question"],
        template_id=None if d["template_id"] is None else TemplateId(d["template_id"]),
        action=d["action"],
        raw_score=_opt_float(d["raw_score"]),
        normalized_score=_opt_float(d["normalized_score"]),
        adjusted_score=_opt_float(d["adjusted_score"]),
        verdict=None if d["verdict"] is None else Verdict(d["verdict"]),
        emotion_label=None if d["emotion_label"] is None else Emotion(d["emotion_label"]),
        feedback_requested=d["feedback_requested"],
    )


_FEEDBACK_FIELDS = (
    "id", "timestamp", "question_canonical", "base_normalized", "agrees",
    "alternative_verdict", "target_score", "source",
)


def _feedback_to_json(rec: FeedbackRecord) -> dict[str, Any]:
    return {
        "id": rec.id,
        "timestamp": format_ts(rec.timestamp),
        "question_canonical": rec.question_canonical,
        "base_normalized": rec.base_normalized,
        "agrees": rec.agrees,
        "alternative_verdict": None if rec.alternative_verdict is None else rec.alternative_verdict.value,
        "target_score": rec.target_score,
        "source": rec.source.value,
    }


def _feedback_from_json(d: dict[str, Any]) -> FeedbackRecord:
    if set(d) != set(_FEEDBACK_FIELDS):
        raise ValueError(f"unexpected fields {sorted(set(d) ^ set(_FEEDBACK_FIELDS))}")
    if not isinstance(d["id"], int) or not isinstance(d["agrees"], bool):
        raise ValueError("bad id or flag")
    alt = d["alternative_verdict"]
    return FeedbackRecord(
        id=d["id"],
        timestamp=parse_ts(d["timestamp"]),
        question_canonical=str(d["question_canonical"]),
        base_normalized=float(d["base_normalized"]),
        agrees=d["agrees"],
        alternative_verdict=None if alt is None else Verdict(alt),
        target_score=_opt_float(d["target_score"]),
        source=FeedbackSource(d["source"]),
    )


def _opt_float(x: Any) -> float | None:
    if x is None:
        return None
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ValueError(f"expected a number, got {x!r}")
    return float(x)


T = TypeVar("T")


@dataclass
class LoadResult(Generic[T]):
    records: list[T]
    skipped: int = 0

    def __iter__(self) -> Iterator[T]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class Stats:
    total_queries: int
    total_feedback: int
    agreement_rate: float | None
    verdict_histogram: dict[Verdict, int]

    def to_json(self) -> dict[str, Any]:
        return {
            "total_queries": self.total_queries,
            "total_feedback": self.total_feedback,
            "agreement_rate": self.agreement_rate,
            "verdict_histogram": {v.value: n for v, n in self.verdict_histogram.items()},
        }


class _LogFile:
    """One append-only JSON-lines file with a process-wide writer lock."""

    def __init__(self, path: Path) -> None:
        self.path = path
        self._lock = threading.Lock()
        self._next_id: int | None = None

    def read(self) -> tuple[list[dict[str, Any]], int]:
        if not self.path.exists():
            return [], 0
        rows: list[dict[str, Any]] = []
        skipped = 0
        try:
            data = self.path.read_bytes()
        except OSError as exc:
            raise StorageError(f"cannot read {self.path}: {exc}") from exc
        for line in data.split(b"\n"):
            if not line.strip():
                continue
            try:
                row = json.loads(line.decode("utf-8"))
                if not isinstance(row, dict):
                    raise ValueError("not an object")
            except ValueError:
                skipped += 1
                continue
            rows.append(row)
        return rows, skipped

    def _scan_next_id(self) -> int:
        rows, _ = self.read()
        ids = [r["id"] for r in rows if isinstance(r.get("id"), int)]
        return max(ids, default=0) + 1

    def append(self, payload: dict[str, Any]) -> int:
        with self._lock:
            if self._next_id is None:
                self._next_id = self._scan_next_id()
            rid = self._next_id
            payload = {"id": rid, **{k: v for k, v in payload.items() if k != "id"}}
            try:
                line = json.dumps(payload, ensure_ascii=False, allow_nan=False)
            except (TypeError, ValueError) as exc:
                raise StorageError(f"cannot serialize record: {exc}") from exc
            try:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "ab") as fh:
                    # terminate a torn final line so the new record stays readable
                    if fh.tell() > 0 and not self._ends_with_newline():
                        fh.write(b"\n")
                    fh.write(line.encode("utf-8") + b"\n")
                    fh.flush()
                    os.fsync(fh.fileno())
            except OSError as exc:
                raise StorageError(f"cannot append to {self.path}: {exc}") from exc
            self._next_id = rid + 1
            return rid

    def _ends_with_newline(self) -> bool:
        with open(self.path, "rb") as fh:
            fh.seek(-1, os.SEEK_END)
            return fh.read(1) == b"\n"


class Store:
    def __init__(self, directory: str | os.PathLike[str]) -> None:
        self.directory = Path(directory)
        self._queries = _LogFile(self.directory / QUERIES_FILE)
        self._feedback = _LogFile(self.directory / FEEDBACK_FILE)

    def append_query(self, record: QueryLogRecord) -> int:
        return self._queries.append(_query_to_json(record))

    def append_feedback(self, record: FeedbackRecord) -> int:
        return self._feedback.append(_feedback_to_json(record))

    def read_queries(self) -> LoadResult[QueryLogRecord]:
        return self._load(self._queries, _query_from_json)

    def read_feedback(self) -> LoadResult[FeedbackRecord]:
        return self._load(self._feedback, _feedback_from_json)

    def load_feedback_all(self, embedder: Embedder | None = None) -> LoadResult[FeedbackRecord]:
        """All valid feedback records; with ``embedder``, embeddings are recomputed."""
        result = self.read_feedback()
        if embedder is not None and result.records:
            vectors = embedder.embed_batch([r.question_canonical for r in result.records])
            result.records = [replace(r, question_embedding=v) for r, v in zip(result.records, vectors)]
        return result

    def stats(self) -> Stats:
        queries = self.read_queries().records
        feedback = self.read_feedback().records
        histogram = {v: 0 for v in Verdict}
        for q in queries:
            if q.parsed and q.verdict is not None:
                histogram[q.verdict] += 1
        agree = sum(1 for f in feedback if f.agrees)
        return Stats(
            total_queries=len(queries),
            total_feedback=len(feedback),
            agreement_rate=agree / len(feedback) if feedback else None,
            verdict_histogram=histogram,
        )

    @staticmethod
    def _load(logfile: _LogFile, decode: Any) -> LoadResult[Any]:
        rows, skipped = logfile.read()
        records = []
        for row in rows:
            try:
                records.append(decode(row))
            except (KeyError, ValueError, TypeError):
                skipped += 1
        if skipped:
            log.warning("%s: skipped %d malformed line(s)", logfile.path, skipped)
        return LoadResult(records, skipped)
