"""JSONL loaders for the seven task families and per-kind grading dispatch.

Line schemas::

    gsm8k             {"id", "question", "answer"}         answer ends "#### N"
    game24            {"id", "numbers": [a, b, c, d]}
    trivia_cw         {"id", "topic", "questions": [...], "answers": [[alias, ...], ...]}
    hotpotqa          {"id", "question", "answer", "aliases": [...], "context"?}
    bigtom, mmlu      {"id", "question", "choices": {"A": ..., ...}, "answer": "B"}
    code_readability  {"id", "code"}
"""

from __future__ import annotations

import json
import logging
import re
from importlib import resources
from pathlib import Path
from typing import Callable

from ..backend import Backend
from ..errors import GoldShapeMismatch, JudgeUnparseable, MalformedLine
from .game24 import CARD_RANGE, extract_expression, validate_game24
from .scoring import (
    extract_code,
    score_choice,
    score_exact_match,
    score_numeric,
    score_trivia_coverage,
    score_with_judge,
)
from .types import Example, TaskKind, Verdict

logger = logging.getLogger(__name__)

# Example counts of the full evaluation splits.
EXPECTED_COUNTS = {
    TaskKind.GSM8K: 1319,
    TaskKind.GAME24: 100,
    TaskKind.TRIVIA_CW: 100,
    TaskKind.HOTPOTQA: 300,
    TaskKind.BIGTOM: 100,
    TaskKind.CODE_READABILITY: 300,
    TaskKind.MMLU: 151,
}

GSM8K_SUFFIX = "Solve the problem. On the last line write the final numeric answer as '#### <number>'."
GAME24_TEMPLATE = (
    "Use the numbers {nums} and basic arithmetic operations (+ - * /) to obtain 24. "
    "Use every number exactly once; parentheses are allowed. "
    "On the last line write 'Answer: <expression>' using only the given numbers, e.g. "
    "'Answer: (1 + 2 + 3) * 4'."
)
TRIVIA_TEMPLATE = (
    "Write a short and coherent story about {topic} that incorporates the answers to the "
    "following {n} questions: {questions}"
)
HOTPOT_SUFFIX = "Answer the question. On the last line write 'Answer: <short answer>'."
CHOICE_SUFFIX = "Choose the correct option. On the last line write 'Answer: (<letter>)'."
CODE_TEMPLATE = (
    "Improve the readability of the following code while keeping its behaviour identical. "
    "Return the full rewritten code in a single fenced code block.\n\n```\n{code}\n```"
)

_GSM_GOLD = re.compile(r"####\s*([-+]?[\d,]*\.?\d+)")


def fixture_path(kind: TaskKind | str) -> Path:
    kind = TaskKind(kind)
    return Path(str(resources.files("metareason.tasks") / "fixtures" / f"{kind.value}.jsonl"))


def _require(obj: dict, *keys: str) -> None:
    missing = [k for k in keys if k not in obj]
    if missing:
        raise KeyError(", ".join(missing))


def _choices_block(choices: dict[str, str]) -> str:
    return "\n".join(f"({label}) {text}" for label, text in choices.items())


def _build_gsm8k(obj: dict) -> Example:
    _require(obj, "id", "question", "answer")
    m = _GSM_GOLD.search(str(obj["answer"]))
    gold = m.group(1) if m else str(obj["answer"]).strip()
    if not re.fullmatch(r"[-+]?[\d,]*\.?\d+", gold):
        raise GoldShapeMismatch(f"{obj['id']}: gsm8k answer {obj['answer']!r} is not numeric")
    return Example(str(obj["id"]), TaskKind.GSM8K,
                   f"{obj['question'].strip()}\n\n{GSM8K_SUFFIX}", gold.replace(",", ""))


def _build_game24(obj: dict) -> Example:
    _require(obj, "id", "numbers")
    nums = obj["numbers"]
    if (not isinstance(nums, list) or len(nums) != 4
            or not all(isinstance(n, int) and n in CARD_RANGE for n in nums)):
        raise GoldShapeMismatch(f"{obj['id']}: game24 needs four integers in 1..13, got {nums!r}")
    text = GAME24_TEMPLATE.format(nums=" ".join(map(str, nums)))
    return Example(str(obj["id"]), TaskKind.GAME24, text, tuple(nums))


def _build_trivia(obj: dict) -> Example:
    _require(obj, "id", "topic", "questions", "answers")
    answers = obj["answers"]
    if (not answers or not all(isinstance(a, list) and a and all(isinstance(x, str) for x in a)
                               for a in answers)):
        raise GoldShapeMismatch(f"{obj['id']}: answers must be non-empty alias lists")
    questions = " ".join(f"{i}) {q}" for i, q in enumerate(obj["questions"], 1))
    text = TRIVIA_TEMPLATE.format(topic=obj["topic"], n=len(obj["questions"]), questions=questions)
    return Example(str(obj["id"]), TaskKind.TRIVIA_CW, text,
                   tuple(tuple(a) for a in answers))


def _build_hotpot(obj: dict) -> Example:
    _require(obj, "id", "question", "answer")
    aliases = [obj["answer"], *obj.get("aliases", [])]
    if not all(isinstance(a, str) and a.strip() for a in aliases):
        raise GoldShapeMismatch(f"{obj['id']}: answer aliases must be non-empty strings")
    parts = [obj["question"].strip()]
    if obj.get("context"):
        parts.insert(0, f"Context:\n{obj['context'].strip()}")
    parts.append(HOTPOT_SUFFIX)
    return Example(str(obj["id"]), TaskKind.HOTPOTQA, "\n\n".join(parts), tuple(aliases))


def _build_choice(kind: TaskKind) -> Callable[[dict], Example]:
    def build(obj: dict) -> Example:
        _require(obj, "id", "question", "choices", "answer")
        choices = obj["choices"]
        labels = list(choices) if isinstance(choices, dict) else []
        expected = [chr(ord("A") + i) for i in range(len(labels))]
        if not 2 <= len(labels) <= 26 or labels != expected:
            raise GoldShapeMismatch(f"{obj['id']}: choices must be labelled A, B, C, ...")
        if obj["answer"] not in choices:
            raise GoldShapeMismatch(f"{obj['id']}: answer {obj['answer']!r} is not an option")
        text = f"{obj['question'].strip()}\n\n{_choices_block(choices)}\n\n{CHOICE_SUFFIX}"
        return Example(str(obj["id"]), kind, text, obj["answer"], dict(choices))

    return build


def _build_code(obj: dict) -> Example:
    _require(obj, "id", "code")
    if not isinstance(obj["code"], str) or not obj["code"].strip():
        raise GoldShapeMismatch(f"{obj['id']}: code snippet is empty")
    return Example(str(obj["id"]), TaskKind.CODE_READABILITY,
                   CODE_TEMPLATE.format(code=obj["code"].strip("\n")), obj["code"])


_BUILDERS: dict[TaskKind, Callable[[dict], Example]] = {
    TaskKind.GSM8K: _build_gsm8k,
    TaskKind.GAME24: _build_game24,
    TaskKind.TRIVIA_CW: _build_trivia,
    TaskKind.HOTPOTQA: _build_hotpot,
    TaskKind.BIGTOM: _build_choice(TaskKind.BIGTOM),
    TaskKind.CODE_READABILITY: _build_code,
    TaskKind.MMLU: _build_choice(TaskKind.MMLU),
}


def load_dataset(path: str | Path, kind: TaskKind | str) -> list[Example]:
    kind = TaskKind(kind)
    build = _BUILDERS[kind]
    examples = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise MalformedLine(line_no, "expected a JSON object")
            try:
                ex = build(obj)
            except KeyError as exc:
                raise MalformedLine(line_no, f"missing field(s) {exc.args[0]}") from exc
            except (TypeError, AttributeError) as exc:
                raise MalformedLine(line_no, f"bad field type: {exc}") from exc
            if ex.id in seen:
                raise MalformedLine(line_no, f"duplicate id {ex.id!r}")
            seen.add(ex.id)
            examples.append(ex)
    expected = EXPECTED_COUNTS[kind]
    if len(examples) != expected:
        # bundled fixtures are deliberately tiny, so only real data files warn
        bundled = Path(path).resolve() == fixture_path(kind).resolve()
        logger.log(logging.DEBUG if bundled else logging.WARNING,
                   "%s: loaded %d examples from %s, full split has %d",
                   kind.value, len(examples), path, expected)
    return examples


DEFAULT_RUBRIC = (
    "You are reviewing a code refactoring whose goal was to improve readability.\n"
    "Compare the original and rewritten code below. The rewrite PASSES only if all hold:\n"
    "1. It preserves the original behaviour (same inputs give the same outputs and side effects).\n"
    "2. It is clearly easier to read: better names, structure, comments or formatting.\n"
    "3. It is complete code, not a fragment or a description.\n"
    "Explain briefly, then end with exactly one line: VERDICT: PASS or VERDICT: FAIL"
)


def grade(example: Example, output: str, judge: Backend | None = None,
          rubric: str = DEFAULT_RUBRIC, judge_model: str = "gpt-4") -> Verdict:
    """Score a model output against an example's gold answer."""
    kind = example.kind
    if kind is TaskKind.GSM8K:
        v = score_numeric(output, example.gold)
    elif kind is TaskKind.GAME24:
        expr = extract_expression(output)
        v = validate_game24(expr, example.gold) if expr else Verdict.boolean(
            "", False, "", "no expression found")
    elif kind is TaskKind.TRIVIA_CW:
        v = score_trivia_coverage(output, example.gold)
    elif kind is TaskKind.HOTPOTQA:
        v = score_exact_match(output, example.gold)
    elif kind in (TaskKind.BIGTOM, TaskKind.MMLU):
        v = score_choice(output, example.choices, example.gold)
    else:
        if judge is None:
            raise ValueError("code_readability grading needs a judge backend")
        try:
            v = score_with_judge(judge, example.gold, extract_code(output), rubric, judge_model)
        except JudgeUnparseable as exc:
            v = Verdict("", 0, extract_code(output), f"judge unparseable: {exc}", graded=True)
    return v.with_id(example.id)
