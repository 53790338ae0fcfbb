"""HTTP API over an ``Agent``."""

from __future__ import annotations

import logging
from typing import Any, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .dialog import Agent, EmptyBank, UnknownBankEntry, UnknownSession, UnknownTurn
from .embedding import BackendUnavailable, EmbeddingError
from .moral import Verdict

log = logging.getLogger(__name__)

__all__ = ["create_app", "self_test"]


class AskRequest(BaseModel):
    session_id: str
    utterance: str


class FeedbackRequest(BaseModel):
    session_id: str
    turn_id: int
    agrees: bool
    alternative_verdict: Optional[Verdict] = None


class TrainingAnswerRequest(BaseModel):
    session_id: str
    bank_id: int
    verdict: Verdict


def self_test(agent: Agent) -> None:
    """Embed one probe sentence; raises ``BackendUnavailable`` on failure."""
    agent.embedder.embed("healthcheck")


def _error(status: int, kind: str, exc: Exception) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": kind, "detail": str(exc)})


def create_app(agent: Agent, *, run_self_test: bool = True) -> FastAPI:
    app = FastAPI(title="alfie", version="0.1.0")
    app.state.agent = agent
    app.state.ready = False
    if run_self_test:
        self_test(agent)
    app.state.ready = True

    for exc_type, status in (
        (UnknownSession, 404),
        (UnknownTurn, 404),
        (UnknownBankEntry, 404),
        (EmptyBank, 409),
        (BackendUnavailable, 503),
        (EmbeddingError, 502),
    ):
        def handler(request: Request, exc: Exception, status: int = status) -> JSONResponse:
            return _error(status, type(exc).__name__, exc)

        app.add_exception_handler(exc_type, handler)

    @app.get("/healthz")
    def healthz() -> Any:
        if not app.state.ready:
            return JSONResponse(status_code=503, content={"status": "starting"})
        return {"status": "ok"}

    @app.post("/api/session")
    def new_session() -> dict[str, str]:
        return {"session_id": agent.new_session().id}

    @app.post("/api/ask")
    def ask(req: AskRequest) -> dict[str, Any]:
        session = agent.session(req.session_id)
        return agent.handle_utterance(session, req.utterance).to_json()

    @app.post("/api/feedback")
    def feedback(req: FeedbackRequest) -> dict[str, Any]:
        session = agent.session(req.session_id)
        ack = agent.handle_feedback(session, req.turn_id, req.agrees, req.alternative_verdict)
        return {"acknowledgement": ack}

    @app.get("/api/training/next")
    def training_next(session_id: str) -> dict[str, Any]:
        entry = agent.training_next(agent.session(session_id))
        return {
            "bank_id": entry.bank_id,
            "question": entry.question,
            "times_asked": entry.times_asked,
        }

    @app.post("/api/training/answer")
    def training_answer(req: TrainingAnswerRequest) -> dict[str, Any]:
        ack = agent.training_answer(agent.session(req.session_id), req.bank_id, req.verdict)
        return {"acknowledgement": ack}

    @app.get("/api/stats")
    def stats() -> dict[str, Any]:
        return agent.store.stats().to_json()

    return app
