"""Wire an ``Agent`` from a ``Config``."""

from __future__ import annotations

from importlib import resources

from .config import Config
from .dialog import Agent, QuestionBank
from .embedding import Embedder, RemoteBackend
from .store import Store

__all__ = ["build_embedder", "build_bank", "build_agent"]


def build_embedder(cfg: Config) -> Embedder:
    e = cfg.embedding
    if e.backend == "remote":
        backend = RemoteBackend(e.endpoint, model_name=e.model_name or None)
        return Embedder(backend, cache_capacity=e.cache_capacity)
    return Embedder.deterministic(e.dim)


def build_bank(cfg: Config) -> QuestionBank:
    if cfg.bank_path:
        return QuestionBank.from_file(cfg.bank_path)
    default = resources.files("alfie") / "data" / "question_bank.txt"
    with resources.as_file(default) as path:
        return QuestionBank.from_file(path)


def build_agent(cfg: Config, embedder: Embedder | None = None) -> Agent:
    embedder = embedder or build_embedder(cfg)
    return Agent(
        embedder,
        Store(cfg.storage_dir),
        thresholds=cfg.thresholds,
        adaptation=cfg.adaptation,
        prototypes=cfg.prototypes,
        prosody=cfg.prosody,
        feedback_probability=cfg.feedback_probability,
        seed=cfg.feedback_seed,
        bank=build_bank(cfg),
    )
