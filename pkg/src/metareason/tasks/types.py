from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any


class TaskKind(str, Enum):
    GSM8K = "gsm8k"
    GAME24 = "game24"
    TRIVIA_CW = "trivia_cw"
    HOTPOTQA = "hotpotqa"
    BIGTOM = "bigtom"
    CODE_READABILITY = "code_readability"
    MMLU = "mmlu"

    def __str__(self) -> str:
        return self.value

    @property
    def graded(self) -> bool:
        """True when verdicts are fractional rather than right/wrong."""
        return self in (TaskKind.TRIVIA_CW, TaskKind.CODE_READABILITY)


TASK_ORDER = tuple(TaskKind)

# Column headers in report tables.
TASK_LABELS = {
    TaskKind.GSM8K: "GSM8K",
    TaskKind.GAME24: "Gameof24",
    TaskKind.TRIVIA_CW: "Trivia CW",
    TaskKind.HOTPOTQA: "HotpotQA",
    TaskKind.BIGTOM: "BigToM",
    TaskKind.CODE_READABILITY: "Code",
    TaskKind.MMLU: "MMLU",
}


@dataclass(frozen=True)
class Example:
    id: str
    kind: TaskKind
    input: str
    gold: Any
    # option label -> option text, for multiple-choice kinds
    choices: dict[str, str] | None = None


@dataclass(frozen=True)
class Verdict:
    example_id: str
    score: Fraction
    extracted: str = ""
    detail: str = ""
    graded: bool = False
    judge_calls: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        score = Fraction(self.score)
        if not 0 <= score <= 1:
            raise ValueError(f"verdict score {score} outside [0, 1]")
        if not self.graded and score not in (0, 1):
            raise ValueError("boolean verdict must score 0 or 1")
        object.__setattr__(self, "score", score)

    @classmethod
    def boolean(cls, example_id: str, correct: bool, extracted: str = "", detail: str = "") -> Verdict:
        return cls(example_id, Fraction(int(correct)), extracted, detail, graded=False)

    @property
    def correct(self) -> bool:
        return self.score == 1

    def with_id(self, example_id: str) -> Verdict:
        return Verdict(example_id, self.score, self.extracted, self.detail, self.graded, self.judge_calls)

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "score": str(self.score),
            "graded": self.graded,
            "extracted": self.extracted,
            "detail": self.detail,
            "judge_calls": list(self.judge_calls),
        }

    @classmethod
    def from_dict(cls, data: dict) -> Verdict:
        return cls(data["example_id"], Fraction(data["score"]), data.get("extracted", ""),
                   data.get("detail", ""), data.get("graded", False),
                   tuple(data.get("judge_calls", ())))
