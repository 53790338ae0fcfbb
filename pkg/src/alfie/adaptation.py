"""Score-level adaptation from user disagreement.

Stored feedback pulls the score of similar questions toward the verdict the
user offered instead. Influence of a record is a clipped, rescaled cosine
kernel, so only near-paraphrases (cosine above ``tau``) move a score and an
exact repeat lands on the record's target.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Mapping

from .embedding import DimensionMismatch, EmbeddingVector, cosine
from .moral import Verdict, VerdictThresholds

if TYPE_CHECKING:
    from .store import Store

__all__ = [
    "FeedbackSource",
    "FeedbackRecord",
    "AdaptationParams",
    "FeedbackMemory",
    "target_from_verdict",
    "make_feedback",
    "correction",
    "adjusted_score",
    "ingest_feedback",
]


class FeedbackSource(str, Enum):
    Live = "Live"
    Training = "Training"


DEFAULT_TARGETS: dict[Verdict, float] = {Verdict.Yes: 0.6, Verdict.No: -0.6, Verdict.Neutral: 0.0}


@dataclass(frozen=True)
class AdaptationParams:
    tau: float = 0.85
    targets: Mapping[Verdict, float] = field(default_factory=lambda: dict(DEFAULT_TARGETS))

    def validate(self, thresholds: VerdictThresholds = VerdictThresholds()) -> None:
        band = thresholds.neutral_band
        if not 0.0 < self.tau < 1.0:
            raise ValueError("adaptation.tau must lie in (0, 1)")
        if set(self.targets) != set(Verdict):
            raise ValueError("adaptation.targets needs exactly Yes, No and Neutral")
        for v, t in self.targets.items():
            if abs(t) > 1.0:
                raise ValueError(f"adaptation.targets.{v.value} must lie in [-1, 1]")
        if not self.targets[Verdict.Yes] > band:
            raise ValueError("adaptation.targets.Yes must exceed the neutral band")
        if not self.targets[Verdict.No] < -band:
            raise ValueError("adaptation.targets.No must be below the neutral band")
        if not -band <= self.targets[Verdict.Neutral] <= band:
            raise ValueError("adaptation.targets.Neutral must lie inside the neutral band")

    def __post_init__(self) -> None:
        object.__setattr__(self, "targets", {Verdict(k): float(v) for k, v in self.targets.items()})
        if not 0.0 < self.tau < 1.0:
            raise ValueError("adaptation.tau must lie in (0, 1)")


@dataclass(frozen=True)
class FeedbackRecord:
    timestamp: datetime
    question_canonical: str
    base_normalized: float
    agrees: bool
    source: FeedbackSource
    alternative_verdict: Verdict | None = None
    target_score: float | None = None
    question_embedding: EmbeddingVector | None = field(default=None, compare=False, repr=False)
    id: int | None = None

    def __post_init__(self) -> None:
        if (self.alternative_verdict is None) != (self.target_score is None):
            raise ValueError("target_score must be present exactly when alternative_verdict is")
        if not -1.0 <= self.base_normalized <= 1.0:
            raise ValueError("base_normalized outside [-1, 1]")
        if self.target_score is not None and not -1.0 <= self.target_score <= 1.0:
            raise ValueError("target_score outside [-1, 1]")
        if self.agrees and self.alternative_verdict is not None:
            raise ValueError("an agreeing record carries no alternative verdict")

    @property
    def adapts(self) -> bool:
        return self.target_score is not None and not self.agrees


def target_from_verdict(v: Verdict, params: AdaptationParams = AdaptationParams()) -> float:
    return params.targets[v]


def make_feedback(
    *,
    question_canonical: str,
    base_normalized: float,
    agrees: bool,
    source: FeedbackSource,
    timestamp: datetime,
    alternative: Verdict | None = None,
    embedding: EmbeddingVector | None = None,
    params: AdaptationParams = AdaptationParams(),
) -> FeedbackRecord:
    """Build a record, filling ``target_score`` from the alternative verdict."""
    if agrees:
        alternative = None
    return FeedbackRecord(
        timestamp=timestamp,
        question_canonical=question_canonical,
        base_normalized=base_normalized,
        agrees=agrees,
        source=source,
        alternative_verdict=alternative,
        target_score=None if alternative is None else target_from_verdict(alternative, params),
        question_embedding=embedding,
    )


def correction(
    e_q: EmbeddingVector,
    base: float,
    feedback: Iterable[FeedbackRecord],
    params: AdaptationParams = AdaptationParams(),
) -> float:
    """Score shift for a question with embedding ``e_q`` and base score ``base``.

    Each adapting record gets weight k = max(0, (cos - tau) / (1 - tau)). The
    shift is (weighted mean target - base) scaled by the largest weight.
    Records without a target (agreements, bare disagreements) are ignored.
    """
    tau = params.tau
    total = 0.0
    weighted = 0.0
    k_max = 0.0
    for rec in feedback:
        if not rec.adapts:
            continue
        if rec.question_embedding is None:
            raise ValueError(f"feedback record {rec.id} has no embedding")
        if rec.question_embedding.dim != e_q.dim:
            raise DimensionMismatch(f"feedback dim {rec.question_embedding.dim} != query dim {e_q.dim}")
        k = max(0.0, (cosine(e_q, rec.question_embedding) - tau) / (1.0 - tau))
        if k == 0.0:
            continue
        assert rec.target_score is not None
        total += k
        weighted += k * rec.target_score
        k_max = max(k_max, k)
    if total == 0.0:
        return 0.0
    return (weighted / total - base) * k_max


def adjusted_score(base: float, delta: float) -> float:
    return min(1.0, max(-1.0, base + delta))


class FeedbackMemory:
    """In-process view of the adapting feedback set.

    Readers take an immutable snapshot; writers replace it copy-on-write, so a
    correction in flight keeps the set it started with.
    """

    def __init__(self, records: Iterable[FeedbackRecord] = ()) -> None:
        self._lock = threading.Lock()
        self._records: tuple[FeedbackRecord, ...] = tuple(r for r in records if r.adapts)

    def snapshot(self) -> tuple[FeedbackRecord, ...]:
        return self._records

    def add(self, record: FeedbackRecord) -> None:
        if not record.adapts:
            return
        with self._lock:
            self._records = (*self._records, record)

    def __len__(self) -> int:
        return len(self._records)


def ingest_feedback(
    record: FeedbackRecord, store: Store, memory: FeedbackMemory | None = None
) -> int:
    """Persist ``record``; adapting records also join ``memory`` for later corrections."""
    rid = store.append_feedback(record)
    if memory is not None:
        memory.add(replace(record, id=rid))
    return rid
