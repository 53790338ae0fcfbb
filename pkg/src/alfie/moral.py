"""Question templates, similarity-based moral scoring, verdicts and emotions."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .embedding import Embedder, EmbeddingVector, cosine, normalize_text

__all__ = [
    "TemplateId",
    "QuestionTemplate",
    "TEMPLATES",
    "ParsedQuestion",
    "NoTemplateMatch",
    "MissingPrototype",
    "MoralScore",
    "Verdict",
    "VerdictThresholds",
    "Emotion",
    "EMOTION_ORDER",
    "DEFAULT_PROTOTYPES",
    "EmotionAssessment",
    "parse_question",
    "render_answer_pair",
    "moral_score",
    "score_from_vectors",
    "verdict",
    "classify_emotion",
    "nearest_emotion",
]


class TemplateId(str, Enum):
    ShouldI = "ShouldI"
    IsItOkayTo = "IsItOkayTo"


@dataclass(frozen=True)
class QuestionTemplate:
    id: TemplateId
    prefixes: tuple[str, ...]
    answer_pair: tuple[str, str]
    canonical_pattern: str
    indecisive_pattern: str

    def __post_init__(self) -> None:
        patterns = (*self.answer_pair, self.canonical_pattern, self.indecisive_pattern)
        for p in patterns:
            if p.count("{action}") != 1:
                raise ValueError(f"pattern {p!r} must contain exactly one {{action}} slot")
        if not self.prefixes:
            raise ValueError("template needs at least one prefix")
        for prefix in self.prefixes:
            if prefix != prefix.lower() or not prefix.endswith(" ") or not prefix.strip():
                raise ValueError(f"bad prefix {prefix!r}")


TEMPLATES: dict[TemplateId, QuestionTemplate] = {
    TemplateId.ShouldI: QuestionTemplate(
        id=TemplateId.ShouldI,
        prefixes=("should i ",),
        answer_pair=("yes, you should {action}.", "no, you should not {action}."),
        canonical_pattern="should i {action}?",
        indecisive_pattern="i am indecisive about whether you should {action}.",
    ),
    TemplateId.IsItOkayTo: QuestionTemplate(
        id=TemplateId.IsItOkayTo,
        prefixes=("is it okay to ", "is it ok to "),
        answer_pair=("yes, it is okay to {action}.", "no, it is not okay to {action}."),
        canonical_pattern="is it okay to {action}?",
        indecisive_pattern="i am indecisive about whether it is okay to {action}.",
    ),
}


class NoTemplateMatch(ValueError):
    """The utterance is not in one of the recognized question forms."""


class MissingPrototype(KeyError):
    pass


@dataclass(frozen=True)
class ParsedQuestion:
    template_id: TemplateId
    action: str
    canonical_question: str

    @property
    def template(self) -> QuestionTemplate:
        return TEMPLATES[self.template_id]


def parse_question(utterance: str) -> ParsedQuestion:
    text = normalize_text(utterance)
    if text.endswith(("?", ".")):
        text = text[:-1]

    best: tuple[int, QuestionTemplate] | None = None
    for template in TEMPLATES.values():
        for prefix in template.prefixes:
            if text.startswith(prefix) and (best is None or len(prefix) > best[0]):
                best = (len(prefix), template)
    if best is None:
        raise NoTemplateMatch(f"no question template matches {utterance!r}")

    # "should i lie ?" leaves "lie " behind; repeated "??" is treated as one
    action = text[best[0]:].rstrip(" ?.")
    if not action:
        raise NoTemplateMatch(f"no action in {utterance!r}")
    template = best[1]
    return ParsedQuestion(template.id, action, template.canonical_pattern.format(action=action))


def render_answer_pair(q: ParsedQuestion) -> tuple[str, str]:
    yes, no = q.template.answer_pair
    return yes.format(action=q.action), no.format(action=q.action)


@dataclass(frozen=True)
class MoralScore:
    """``raw`` is cos(q, yes) - cos(q, no) in [-2, 2]; ``normalized`` is raw / 2."""

    raw: float
    normalized: float

    def __post_init__(self) -> None:
        if not -1.0 <= self.normalized <= 1.0:
            raise ValueError(f"normalized score {self.normalized} outside [-1, 1]")

    @classmethod
    def from_raw(cls, raw: float) -> MoralScore:
        return cls(raw, raw / 2.0)


def score_from_vectors(
    question: EmbeddingVector, yes: EmbeddingVector, no: EmbeddingVector
) -> MoralScore:
    return MoralScore.from_raw(cosine(question, yes) - cosine(question, no))


def moral_score(q: ParsedQuestion, embedder: Embedder) -> MoralScore:
    yes, no = render_answer_pair(q)
    e_q, e_yes, e_no = embedder.embed_batch([q.canonical_question, yes, no])
    return score_from_vectors(e_q, e_yes, e_no)


class Verdict(str, Enum):
    Yes = "Yes"
    No = "No"
    Neutral = "Neutral"


@dataclass(frozen=True)
class VerdictThresholds:
    neutral_band: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 < self.neutral_band < 1.0:
            raise ValueError("neutral_band must lie in (0, 1)")


def verdict(score: MoralScore | float, th: VerdictThresholds = VerdictThresholds()) -> Verdict:
    """Closed neutral band; yes/no are open at the band edges."""
    value = score.normalized if isinstance(score, MoralScore) else float(score)
    if value < -th.neutral_band:
        return Verdict.No
    if value > th.neutral_band:
        return Verdict.Yes
    return Verdict.Neutral


class Emotion(str, Enum):
    Anger = "Anger"
    Confusion = "Confusion"
    Disgust = "Disgust"
    Fear = "Fear"
    Joy = "Joy"
    Sadness = "Sadness"
    Satisfaction = "Satisfaction"
    Surprise = "Surprise"


EMOTION_ORDER: tuple[Emotion, ...] = tuple(Emotion)

DEFAULT_PROTOTYPES: dict[Emotion, str] = {
    Emotion.Anger: "this makes me angry.",
    Emotion.Confusion: "this is confusing.",
    Emotion.Disgust: "this is disgusting.",
    Emotion.Fear: "this is frightening.",
    Emotion.Joy: "this is delightful.",
    Emotion.Sadness: "this is sad.",
    Emotion.Satisfaction: "this is satisfying.",
    Emotion.Surprise: "this is surprising.",
}


@dataclass(frozen=True)
class EmotionAssessment:
    label: Emotion
    similarity: float
    prototype_text: str


def nearest_emotion(
    query: EmbeddingVector,
    prototype_vectors: Sequence[EmbeddingVector],
    prototypes: Mapping[Emotion, str],
) -> EmotionAssessment:
    """Argmax of cosine over labels in canonical order; first maximum wins."""
    best_label, best_sim = EMOTION_ORDER[0], cosine(query, prototype_vectors[0])
    for label, vec in zip(EMOTION_ORDER[1:], prototype_vectors[1:]):
        sim = cosine(query, vec)
        if sim > best_sim:
            best_label, best_sim = label, sim
    return EmotionAssessment(best_label, best_sim, prototypes[best_label])


def classify_emotion(
    q: ParsedQuestion | str,
    embedder: Embedder,
    prototypes: Mapping[Emotion, str] = DEFAULT_PROTOTYPES,
) -> EmotionAssessment:
    """Label whose prototype sentence is most similar to the question.

    ``q`` may be a parsed question (its canonical text is used) or raw text.
    """
    missing = [e.value for e in EMOTION_ORDER if e not in prototypes]
    if missing:
        raise MissingPrototype(f"no prototype for {', '.join(missing)}")
    text = q.canonical_question if isinstance(q, ParsedQuestion) else q
    vectors = embedder.embed_batch([text, *(prototypes[e] for e in EMOTION_ORDER)])
    return nearest_emotion(vectors[0], vectors[1:], prototypes)
