"""Line-oriented console standing in for the spoken conversation."""

from __future__ import annotations

import sys
from typing import TextIO

from .dialog import Agent, QuestionBankEntry, ResponsePlan, Session
from .moral import Verdict
from .store import Stats

HELP = (
    "ask 'should i ...?' or 'is it okay to ...?'. commands: /feedback agree|disagree|yes|no|neutral, "
    "/train, /stats, /help, /quit"
)
_VERDICT_WORDS = {"yes": Verdict.Yes, "no": Verdict.No, "neutral": Verdict.Neutral}


def annotation(plan: ResponsePlan) -> str:
    score = "n/a" if plan.adjusted is None else f"{plan.adjusted:+.4f}"
    line = (
        f"[{plan.verdict.value}|{plan.expression.value}|{plan.gesture.value}"
        f"|{plan.prosody.pitch:.2f}|{plan.prosody.rate:.2f}|{score}]"
    )
    if plan.feedback_requested:
        line += " do you agree? (/feedback agree|yes|no|neutral)"
    return line


def format_stats(stats: Stats) -> str:
    rate = "n/a" if stats.agreement_rate is None else f"{stats.agreement_rate:.2f}"
    hist = " ".join(f"{v.value.lower()}={n}" for v, n in stats.verdict_histogram.items())
    return f"queries={stats.total_queries} feedback={stats.total_feedback} agreement={rate} {hist}"


class Console:
    def __init__(self, agent: Agent, out: TextIO) -> None:
        self.agent = agent
        self.out = out
        self.session: Session = agent.new_session()
        self.last: ResponsePlan | None = None
        self.training: QuestionBankEntry | None = None

    def say(self, text: str) -> None:
        print(text, file=self.out)

    def handle(self, line: str) -> bool:
        """Process one input line; returns False when the console should exit."""
        line = line.strip()
        if not line:
            return True
        cmd, _, arg = line.partition(" ")
        cmd_l = cmd.lower()
        if cmd_l == "/quit":
            return False
        if cmd_l == "/help":
            self.say(HELP)
        elif cmd_l == "/stats":
            self.say(format_stats(self.agent.store.stats()))
        elif cmd_l == "/train":
            self.say("training mode. answer yes, no or neutral; /done to leave.")
            self._ask_training()
        elif cmd_l == "/done" and self.training is not None:
            self.training = None
            self.say("training mode finished.")
        elif cmd_l == "/feedback":
            self._feedback(arg.strip().lower())
        elif self.training is not None:
            self._answer_training(line.lower().rstrip(".!"))
        else:
            self.last = self.agent.handle_utterance(self.session, line)
            self.say(self.last.answer_text)
            self.say(annotation(self.last))
        return True

    def _feedback(self, arg: str) -> None:
        plan = self.last
        if plan is None or not plan.understood:
            self.say("there is no answer to give feedback on.")
            return
        if arg == "agree":
            agrees, alternative = True, None
        elif arg == "disagree":
            agrees, alternative = False, None
        elif arg in _VERDICT_WORDS:
            alternative = _VERDICT_WORDS[arg]
            agrees = alternative is plan.verdict
        else:
            self.say("usage: /feedback agree|disagree|yes|no|neutral")
            return
        self.say(self.agent.handle_feedback(self.session, plan.turn_id, agrees, None if agrees else alternative))

    def _ask_training(self) -> None:
        if not len(self.agent.bank):
            self.training = None
            self.say("the question bank is empty.")
            return
        self.training = self.agent.training_next(self.session)
        self.say(f"[training {self.training.bank_id}] {self.training.question}")

    def _answer_training(self, word: str) -> None:
        assert self.training is not None
        if word not in _VERDICT_WORDS:
            self.say("please answer yes, no or neutral.")
            return
        self.say(self.agent.training_answer(self.session, self.training.bank_id, _VERDICT_WORDS[word]))
        self._ask_training()


def run(agent: Agent, stdin: TextIO | None = None, stdout: TextIO | None = None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    console = Console(agent, stdout)
    interactive = stdin.isatty()
    if interactive:
        console.say(HELP)
    while True:
        if interactive:
            print("> ", end="", file=stdout, flush=True)
        line = stdin.readline()
        if not line or not console.handle(line):
            break
