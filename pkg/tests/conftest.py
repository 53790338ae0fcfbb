import pathlib
import random
import sys
from datetime import datetime, timedelta, timezone

import pytest

from alfie.dialog import Agent, QuestionBank
from alfie.embedding import Embedder
from alfie.store import Store

TESTS = pathlib.Path(__file__).parent
GOLDEN = TESTS / "golden"
sys.path.insert(0, str(TESTS / "oracles"))
sys.path.insert(0, str(TESTS))

WORDS = (
    "kill time humans lie smile help my neighbor steal money eat meat trust strangers "
    "donate blood torture prisoners love friends cheat exam run marathon drink coffee "
    "call mother break promise share food"
).split()


def random_phrase(rng: random.Random) -> str:
    return " ".join(rng.choice(WORDS) for _ in range(rng.randint(1, 4)))


class FixedClock:
    """Deterministic clock ticking one millisecond per call."""

    def __init__(self) -> None:
        self.t = datetime(2026, 1, 1, tzinfo=timezone.utc)

    def __call__(self) -> datetime:
        self.t += timedelta(milliseconds=1)
        return self.t


@pytest.fixture
def embedder() -> Embedder:
    return Embedder.deterministic(64)


@pytest.fixture
def store(tmp_path) -> Store:
    return Store(tmp_path / "data")


@pytest.fixture
def agent(embedder, store) -> Agent:
    return Agent(
        embedder,
        store,
        feedback_probability=0.3,
        seed=42,
        bank=QuestionBank(["should i lie?", "should i smile?"]),
        clock=FixedClock(),
    )


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
