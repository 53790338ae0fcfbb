"""Turn handling: parse, score, adapt, decide, annotate, log."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Mapping

from .adaptation import (
    AdaptationParams,
    FeedbackMemory,
    FeedbackSource,
    adjusted_score,
    correction,
    ingest_feedback,
    make_feedback,
)
from .embedding import TWO_64, Embedder, splitmix64
from .moral import (
    DEFAULT_PROTOTYPES,
    Emotion,
    EmotionAssessment,
    MoralScore,
    NoTemplateMatch,
    ParsedQuestion,
    Verdict,
    VerdictThresholds,
    classify_emotion,
    moral_score,
    parse_question,
    render_answer_pair,
    verdict,
)
from .store import QueryLogRecord, Store, utc_now

__all__ = [
    "Gesture",
    "Prosody",
    "DEFAULT_PROSODY",
    "GESTURE_FOR_VERDICT",
    "CLARIFICATION_TEXT",
    "Mode",
    "Session",
    "ResponsePlan",
    "QuestionBankEntry",
    "QuestionBank",
    "UnknownTurn",
    "UnknownSession",
    "UnknownBankEntry",
    "EmptyBank",
    "Agent",
    "compose_answer",
    "should_solicit_feedback",
]

DEFAULT_FEEDBACK_PROBABILITY = 0.3
CLARIFICATION_TEXT = "i did not understand. please ask, for example: should i ...?"
ACK_DISAGREE = "thank you, i will remember that."
ACK_AGREE = "glad we agree."


class Gesture(str, Enum):
    Nod = "Nod"
    Shake = "Shake"
    Tilt = "Tilt"


GESTURE_FOR_VERDICT: dict[Verdict, Gesture] = {
    Verdict.Yes: Gesture.Nod,
    Verdict.No: Gesture.Shake,
    Verdict.Neutral: Gesture.Tilt,
}


@dataclass(frozen=True)
class Prosody:
    pitch: float
    rate: float


# multipliers on the voice's baseline of 1.0
DEFAULT_PROSODY: dict[Emotion, Prosody] = {
    Emotion.Anger: Prosody(0.9, 1.10),
    Emotion.Confusion: Prosody(1.0, 0.90),
    Emotion.Disgust: Prosody(0.95, 0.95),
    Emotion.Fear: Prosody(1.10, 1.15),
    Emotion.Joy: Prosody(1.10, 1.05),
    Emotion.Sadness: Prosody(0.90, 0.85),
    Emotion.Satisfaction: Prosody(1.05, 1.00),
    Emotion.Surprise: Prosody(1.15, 1.10),
}


class UnknownTurn(LookupError):
    pass


class UnknownSession(LookupError):
    pass


class UnknownBankEntry(LookupError):
    pass


class EmptyBank(LookupError):
    pass


class Mode(str, Enum):
    Live = "Live"
    Training = "Training"


@dataclass(frozen=True)
class _Turn:
    question: ParsedQuestion
    base_normalized: float
    verdict: Verdict


@dataclass(eq=False)
class Session:
    id: str
    rng_state: int
    turn_counter: int = 0
    pending_feedback_turn: int | None = None
    mode: Mode = Mode.Live
    turns: dict[int, _Turn] = field(default_factory=dict, repr=False)
    lock: threading.RLock = field(default_factory=threading.RLock, repr=False)


@dataclass(frozen=True)
class ResponsePlan:
    turn_id: int
    answer_text: str
    verdict: Verdict
    score: MoralScore | None
    adjusted: float | None
    emotion: EmotionAssessment | None
    expression: Emotion
    gesture: Gesture
    prosody: Prosody
    feedback_requested: bool

    @property
    def understood(self) -> bool:
        return self.score is not None

    def to_json(self) -> dict[str, Any]:
        return {
            "turn_id": self.turn_id,
            "answer_text": self.answer_text,
            "verdict": self.verdict.value,
            "score": None if self.score is None else {
                "raw": self.score.raw,
                "normalized": self.score.normalized,
                "adjusted": self.adjusted,
            },
            "emotion": {
                "label": self.expression.value,
                "similarity": None if self.emotion is None else self.emotion.similarity,
            },
            "expression": self.expression.value,
            "gesture": self.gesture.value,
            "prosody": {"pitch": self.prosody.pitch, "rate": self.prosody.rate},
            "feedback_requested": self.feedback_requested,
        }


def compose_answer(v: Verdict, q: ParsedQuestion) -> str:
    yes, no = render_answer_pair(q)
    if v is Verdict.Yes:
        return yes
    if v is Verdict.No:
        return no
    return q.template.indecisive_pattern.format(action=q.action)


def should_solicit_feedback(session: Session, p: float) -> bool:
    """One SplitMix64 step of the session's generator; true with probability ``p``."""
    session.rng_state, z = splitmix64(session.rng_state)
    return z / TWO_64 < p


@dataclass
class QuestionBankEntry:
    bank_id: int
    question: str
    times_asked: int = 0
    last_asked: datetime | None = None


class QuestionBank:
    """Curated questions for training mode, asked least-often first."""

    def __init__(self, questions: list[str]) -> None:
        self.entries: list[QuestionBankEntry] = []
        for i, text in enumerate(questions, start=1):
            try:
                canonical = parse_question(text).canonical_question
            except NoTemplateMatch as exc:
                raise ValueError(f"question bank entry {i} does not parse: {text!r}") from exc
            self.entries.append(QuestionBankEntry(i, canonical))
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> QuestionBank:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([ln.strip() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")])

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, bank_id: int) -> QuestionBankEntry:
        for e in self.entries:
            if e.bank_id == bank_id:
                return e
        raise UnknownBankEntry(f"no question bank entry {bank_id}")

    def next(self, now: datetime | None = None) -> QuestionBankEntry:
        with self._lock:
            if not self.entries:
                raise EmptyBank("the question bank is empty")
            entry = min(self.entries, key=lambda e: (e.times_asked, e.question))
            entry.times_asked += 1
            entry.last_asked = now or utc_now()
            return entry


class Agent:
    """Everything a conversation needs: embedder, store, feedback memory and tables."""

    def __init__(
        self,
        embedder: Embedder,
        store: Store,
        *,
        thresholds: VerdictThresholds = VerdictThresholds(),
        adaptation: AdaptationParams = AdaptationParams(),
        prototypes: Mapping[Emotion, str] = DEFAULT_PROTOTYPES,
        prosody: Mapping[Emotion, Prosody] = DEFAULT_PROSODY,
        feedback_probability: float = DEFAULT_FEEDBACK_PROBABILITY,
        seed: int = 42,
        bank: QuestionBank | None = None,
        memory: FeedbackMemory | None = None,
        clock: Callable[[], datetime] = utc_now,
    ) -> None:
        self.embedder = embedder
        self.store = store
        self.thresholds = thresholds
        self.adaptation = adaptation
        self.prototypes = dict(prototypes)
        self.prosody = dict(prosody)
        self.feedback_probability = feedback_probability
        self.seed = seed
        self.bank = bank if bank is not None else QuestionBank([])
        self.memory = memory if memory is not None else FeedbackMemory(
            store.load_feedback_all(embedder).records
        )
        self.clock = clock
        self._sessions: dict[str, Session] = {}
        self._sessions_lock = threading.Lock()

    # -- sessions ----------------------------------------------------------
    def new_session(self, mode: Mode = Mode.Live) -> Session:
        with self._sessions_lock:
            sid = f"s{len(self._sessions) + 1:04d}"
            session = Session(id=sid, rng_state=self.seed & 0xFFFF_FFFF_FFFF_FFFF, mode=mode)
            self._sessions[sid] = session
            return session

    def session(self, session_id: str) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSession(f"unknown session {session_id!r}") from None

    # -- scoring -----------------------------------------------------------
    def assess(self, q: ParsedQuestion) -> tuple[MoralScore, float, Verdict]:
        """Base score, feedback-adjusted score and the verdict on the adjusted score."""
        score = moral_score(q, self.embedder)
        e_q = self.embedder.embed(q.canonical_question)
        delta = correction(e_q, score.normalized, self.memory.snapshot(), self.adaptation)
        adjusted = adjusted_score(score.normalized, delta)
        return score, adjusted, verdict(adjusted, self.thresholds)

    # -- live turns --------------------------------------------------------
    def handle_utterance(self, session: Session, text: str) -> ResponsePlan:
        with session.lock:
            session.turn_counter += 1
            turn_id = session.turn_counter
            try:
                q = parse_question(text)
            except NoTemplateMatch:
                return self._clarify(session, turn_id, text)

            score, adjusted, v = self.assess(q)
            emotion = classify_emotion(q, self.embedder, self.prototypes)
            requested = should_solicit_feedback(session, self.feedback_probability)
            if requested:
                session.pending_feedback_turn = turn_id
            session.turns[turn_id] = _Turn(q, score.normalized, v)
            plan = ResponsePlan(
                turn_id=turn_id,
                answer_text=compose_answer(v, q),
                verdict=v,
                score=score,
                adjusted=adjusted,
                emotion=emotion,
                expression=emotion.label,
                gesture=GESTURE_FOR_VERDICT[v],
                prosody=self.prosody[emotion.label],
                feedback_requested=requested,
            )
            self.store.append_query(
                QueryLogRecord(
                    timestamp=self.clock(),
                    session_id=session.id,
                    utterance_raw=text,
                    canonical_question=q.canonical_question,
                    template_id=q.template_id,
                    action=q.action,
                    raw_score=score.raw,
                    normalized_score=score.normalized,
                    adjusted_score=adjusted,
                    verdict=v,
                    emotion_label=emotion.label,
                    feedback_requested=requested,
                )
            )
            return plan

    def _clarify(self, session: Session, turn_id: int, text: str) -> ResponsePlan:
        self.store.append_query(
            QueryLogRecord(
                timestamp=self.clock(),
                session_id=session.id,
                utterance_raw=text,
                canonical_question=None,
                template_id=None,
                action=None,
                raw_score=None,
                normalized_score=None,
                adjusted_score=None,
                verdict=None,
                emotion_label=None,
                feedback_requested=False,
            )
        )
        return ResponsePlan(
            turn_id=turn_id,
            answer_text=CLARIFICATION_TEXT,
            verdict=Verdict.Neutral,
            score=None,
            adjusted=None,
            emotion=None,
            expression=Emotion.Confusion,
            gesture=Gesture.Tilt,
            prosody=self.prosody[Emotion.Confusion],
            feedback_requested=False,
        )

    def handle_feedback(
        self,
        session: Session,
        turn_id: int,
        agrees: bool,
        alternative: Verdict | None = None,
    ) -> str:
        with session.lock:
            turn = session.turns.get(turn_id)
            if turn is None:
                raise UnknownTurn(f"session {session.id} has no answered turn {turn_id}")
            self._ingest(turn.question, turn.base_normalized, agrees, alternative, FeedbackSource.Live)
            if session.pending_feedback_turn == turn_id:
                session.pending_feedback_turn = None
            return ACK_AGREE if agrees else ACK_DISAGREE

    def _ingest(
        self,
        q: ParsedQuestion,
        base: float,
        agrees: bool,
        alternative: Verdict | None,
        source: FeedbackSource,
    ) -> int:
        record = make_feedback(
            question_canonical=q.canonical_question,
            base_normalized=base,
            agrees=agrees,
            alternative=alternative,
            source=source,
            timestamp=self.clock(),
            embedding=self.embedder.embed(q.canonical_question),
            params=self.adaptation,
        )
        return ingest_feedback(record, self.store, self.memory)

    # -- training mode -----------------------------------------------------
    def training_next(self, session: Session) -> QuestionBankEntry:
        with session.lock:
            session.mode = Mode.Training
            return self.bank.next(self.clock())

    def training_answer(self, session: Session, bank_id: int, user_verdict: Verdict) -> str:
        """Record the user's verdict for a bank question against Alfie's own (unspoken) one."""
        with session.lock:
            entry = self.bank.get(bank_id)
            q = parse_question(entry.question)
            score, _, own = self.assess(q)
            agrees = user_verdict is own
            self._ingest(q, score.normalized, agrees, None if agrees else user_verdict, FeedbackSource.Training)
            return ACK_AGREE if agrees else ACK_DISAGREE
