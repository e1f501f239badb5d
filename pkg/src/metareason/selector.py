"""Score every method in a pool for one input, pick the best, run it.

Scores are integers 0..10 read from a trailing ``SCORE: n`` line and kept as
exact fractions, so ties are detected without float comparison.
"""

from __future__ import annotations

import hashlib
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .backend import Backend, CompletionRequest, cache_key
from .errors import (
    EmptyInput,
    EmptyScoreList,
    KOutOfRange,
    ScoreOutOfRange,
    ScoreUnparseable,
    SelectionError,
)
from .pool import MethodDescriptor, Pool, PromptText, assemble_execution_prompt, assemble_scoring_prompt

SCORE_MAX = 10
_SCORE_LINE = re.compile(r"^\s*score\s*:\s*([+-]?\d+)\s*$", re.IGNORECASE)

FORMAT_REMINDER = (
    "Your previous reply did not end with a valid score line. "
    "Reply again and end with exactly one line of the form\nSCORE: <integer from 0 to 10>"
)

ERROR_LABELS = frozenset({"scoring_error", "self_opinion", "factual_error", "reasoning_error"})

PARSED = "parsed"
DEFAULTED = "defaulted-after-retry"


def parse_score(raw: str) -> Fraction:
    """Value of the last ``SCORE: <int>`` line, divided by 10."""
    matches = [m for m in map(_SCORE_LINE.match, raw.splitlines()) if m]
    if not matches:
        raise ScoreUnparseable(raw[-200:])
    value = int(matches[-1].group(1))
    if not 0 <= value <= SCORE_MAX:
        raise ScoreOutOfRange(value)
    return Fraction(value, SCORE_MAX)


@dataclass(frozen=True)
class CallEntry:
    purpose: str
    digest: str
    cached: bool

    def to_dict(self) -> dict:
        return {"purpose": self.purpose, "digest": self.digest, "cached": self.cached}


@dataclass(frozen=True)
class MethodScore:
    method_id: str
    raw_completion: str
    value: Fraction
    parse_status: str = PARSED
    calls: tuple[CallEntry, ...] = ()

    def __post_init__(self) -> None:
        if not 0 <= self.value <= 1:
            raise ValueError(f"score {self.value} outside [0, 1]")
        if self.parse_status == DEFAULTED and self.value != 0:
            raise ValueError("defaulted score must be 0")

    def to_dict(self) -> dict:
        return {
            "method_id": self.method_id,
            "raw_completion": self.raw_completion,
            "value": str(self.value),
            "parse_status": self.parse_status,
        }

    @classmethod
    def from_dict(cls, data: dict) -> MethodScore:
        return cls(data["method_id"], data["raw_completion"], Fraction(data["value"]),
                   data["parse_status"])


@dataclass(frozen=True)
class SelectionDecision:
    scores: tuple[MethodScore, ...]
    chosen_index: int
    chosen_method_id: str
    tie_broken: bool

    def to_dict(self) -> dict:
        return {
            "scores": [s.to_dict() for s in self.scores],
            "chosen_index": self.chosen_index,
            "chosen_method_id": self.chosen_method_id,
            "tie_broken": self.tie_broken,
        }

    @classmethod
    def from_dict(cls, data: dict) -> SelectionDecision:
        return cls(tuple(MethodScore.from_dict(s) for s in data["scores"]),
                   data["chosen_index"], data["chosen_method_id"], data["tie_broken"])


def select(scores: list[MethodScore]) -> SelectionDecision:
    """Smallest index attaining the maximum score."""
    if not scores:
        raise EmptyScoreList()
    best = max(s.value for s in scores)
    winners = [i for i, s in enumerate(scores) if s.value == best]
    k = winners[0]
    return SelectionDecision(tuple(scores), k, scores[k].method_id, len(winners) > 1)


def select_top_k(scores: list[MethodScore], k: int) -> list[int]:
    if not 1 <= k <= len(scores):
        raise KOutOfRange(f"k={k} with {len(scores)} scores")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i].value, i))
    return order[:k]


@dataclass(frozen=True)
class RouteSettings:
    model: str = "gpt-4"
    scoring_temperature: float = 0.0
    execution_temperature: float = 0.0
    scoring_max_tokens: int = 512
    execution_max_tokens: int = 2048
    # concurrent scoring calls per input; 1 keeps pool order on the wire
    scoring_workers: int = 1


def _scoring_request(text: str, settings: RouteSettings) -> CompletionRequest:
    return CompletionRequest.user(
        text,
        model=settings.model,
        temperature=settings.scoring_temperature,
        max_tokens=settings.scoring_max_tokens,
        purpose_tag="scoring",
    )


def score_method(backend: Backend, d: MethodDescriptor, meta: str, input: str,
                 settings: RouteSettings = RouteSettings()) -> MethodScore:
    prompt = assemble_scoring_prompt(d, meta, input).text
    calls = []
    raw = ""
    for attempt_text in (prompt, prompt + "\n\n" + FORMAT_REMINDER):
        req = _scoring_request(attempt_text, settings)
        reply = backend.complete(req)
        calls.append(CallEntry("scoring", cache_key(req), reply.from_cache))
        raw = reply.text
        try:
            value = parse_score(raw)
        except SelectionError:
            continue
        return MethodScore(d.id, raw, value, PARSED, tuple(calls))
    return MethodScore(d.id, raw, Fraction(0), DEFAULTED, tuple(calls))


@dataclass
class Transcript:
    task_input: str
    decision: SelectionDecision | None
    method_id: str
    execution_prompt: PromptText
    final_output: str
    call_log: list[CallEntry] = field(default_factory=list)
    error_labels: set[str] = field(default_factory=set)

    def __post_init__(self) -> None:
        unknown = set(self.error_labels) - ERROR_LABELS
        if unknown:
            raise ValueError(f"unknown error labels {sorted(unknown)}")

    @property
    def digest(self) -> str:
        return input_digest(self.task_input)

    def to_dict(self) -> dict:
        return {
            "task_input": self.task_input,
            "method_id": self.method_id,
            "decision": self.decision.to_dict() if self.decision else None,
            "execution_prompt": self.execution_prompt.to_dict(),
            "final_output": self.final_output,
            "call_log": [c.to_dict() for c in self.call_log],
            "error_labels": sorted(self.error_labels),
        }

    @classmethod
    def from_dict(cls, data: dict) -> Transcript:
        return cls(
            task_input=data["task_input"],
            decision=SelectionDecision.from_dict(data["decision"]) if data["decision"] else None,
            method_id=data["method_id"],
            execution_prompt=PromptText.from_dict(data["execution_prompt"]),
            final_output=data["final_output"],
            call_log=[CallEntry(**c) for c in data["call_log"]],
            error_labels=set(data.get("error_labels", [])),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2, sort_keys=True) + "\n"

    def write(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{self.digest}.transcript.json"
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def read(cls, path: str | Path) -> Transcript:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def input_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def execute_method(backend: Backend, d: MethodDescriptor, input: str,
                   settings: RouteSettings = RouteSettings()) -> tuple[PromptText, str, CallEntry]:
    prompt = assemble_execution_prompt(d, input)
    req = CompletionRequest.user(
        prompt.text,
        model=settings.model,
        temperature=settings.execution_temperature,
        max_tokens=settings.execution_max_tokens,
        purpose_tag="execution",
    )
    reply = backend.complete(req)
    return prompt, reply.text, CallEntry("execution", cache_key(req), reply.from_cache)


def run_fixed(backend: Backend, d: MethodDescriptor, input: str,
              settings: RouteSettings = RouteSettings()) -> Transcript:
    """Run one designated method with no scoring step."""
    if not input:
        raise EmptyInput()
    prompt, output, call = execute_method(backend, d, input, settings)
    return Transcript(input, None, d.id, prompt, output, [call])


def route_and_solve(backend: Backend, pool: Pool, input: str,
                    settings: RouteSettings = RouteSettings()) -> Transcript:
    if not input:
        raise EmptyInput()
    if len(pool) == 0:
        raise EmptyScoreList("pool is empty")

    def score(d: MethodDescriptor) -> MethodScore:
        return score_method(backend, d, pool.meta_prompt, input, settings)

    if settings.scoring_workers > 1:
        with ThreadPoolExecutor(settings.scoring_workers) as ex:
            scores = list(ex.map(score, pool.methods))
    else:
        scores = [score(d) for d in pool.methods]

    decision = select(scores)
    chosen = pool.methods[decision.chosen_index]
    prompt, output, call = execute_method(backend, chosen, input, settings)
    call_log = [c for s in scores for c in s.calls] + [call]
    return Transcript(input, decision, chosen.id, prompt, output, call_log)
