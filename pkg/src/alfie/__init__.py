"""Moral question answering from sentence-embedding similarity, with feedback adaptation."""

from .adaptation import AdaptationParams, FeedbackRecord, FeedbackSource, adjusted_score, correction
from .config import Config, load_config
from .dialog import Agent, Gesture, Prosody, ResponsePlan, Session
from .embedding import Embedder, EmbeddingVector, cosine
from .moral import Emotion, MoralScore, ParsedQuestion, Verdict, classify_emotion, moral_score, parse_question, verdict
from .store import Store

__version__ = "0.1.0"

__all__ = [
    "AdaptationParams",
    "Agent",
    "Config",
    "Embedder",
    "EmbeddingVector",
    "Emotion",
    "FeedbackRecord",
    "FeedbackSource",
    "Gesture",
    "MoralScore",
    "ParsedQuestion",
    "Prosody",
    "ResponsePlan",
    "Session",
    "Store",
    "Verdict",
    "adjusted_score",
    "classify_emotion",
    "correction",
    "cosine",
    "load_config",
    "moral_score",
    "parse_question",
    "verdict",
]
