"""Answer extraction and grading for each task family."""

from __future__ import annotations

import re
import string
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Mapping, Sequence

from ..backend import Backend, CompletionRequest, cache_key
from ..errors import EmptyAnswerSets, JudgeUnparseable, NoChoice
from .types import Verdict

# -- numeric (GSM8K) --------------------------------------------------------

_NUMBER = re.compile(r"[-+]?\d[\d,]*(?:\.\d+)?")


def _to_decimal(token: str) -> Decimal | None:
    try:
        return Decimal(token.replace(",", "").rstrip("."))
    except InvalidOperation:
        return None


def extract_number(output: str) -> str | None:
    """Number after the last ``####`` marker, else the last number in the text."""
    if "####" in output:
        found = _NUMBER.findall(output.rsplit("####", 1)[1])
        if found:
            return found[0].replace(",", "")
    found = _NUMBER.findall(output)
    return found[-1].replace(",", "") if found else None


def score_numeric(output: str, gold: str) -> Verdict:
    token = extract_number(output)
    if token is None:
        return Verdict.boolean("", False, "", "no numeric answer found")
    got, want = _to_decimal(token), _to_decimal(str(gold))
    if got is None or want is None:
        return Verdict.boolean("", False, token, f"cannot compare {token!r} with {gold!r}")
    ok = got == want
    return Verdict.boolean("", ok, token, "match" if ok else f"expected {gold}")


# -- normalization ----------------------------------------------------------

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation) | {"‘", "’", "“", "”", "–", "—", "…"}


def normalize_answer(text: str) -> str:
    """Lowercase, drop punctuation and articles, collapse whitespace."""
    text = "".join(ch for ch in text.lower() if ch not in _PUNCT)
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


def _tokens(text: str) -> list[str]:
    # punctuation splits words here, so "paris," and "paris" both yield "paris"
    return [t for t in re.findall(r"\w+", text.lower()) if t not in ("a", "an", "the")]


# -- trivia creative writing ------------------------------------------------

def _contains_run(haystack: list[str], needle: list[str]) -> bool:
    if not needle:
        return False
    n = len(needle)
    first = needle[0]
    return any(
        haystack[i] == first and haystack[i:i + n] == needle
        for i in range(len(haystack) - n + 1)
    )


def score_trivia_coverage(story: str, answer_sets: Sequence[Sequence[str]]) -> Verdict:
    """Fraction of answer sets with at least one alias mentioned in ``story``."""
    if not answer_sets:
        raise EmptyAnswerSets()
    words = _tokens(story)
    hits = []
    for aliases in answer_sets:
        hit = next((a for a in aliases if _contains_run(words, _tokens(a))), None)
        hits.append(hit)
    covered = [h for h in hits if h is not None]
    score = Fraction(len(covered), len(answer_sets))
    return Verdict("", score, "; ".join(covered),
                   f"{len(covered)}/{len(answer_sets)} answers mentioned", graded=True)


# -- exact match (HotpotQA) -------------------------------------------------

_ANSWER_MARKER = re.compile(r"answer\s*:", re.IGNORECASE)


def extract_answer_line(output: str) -> str:
    markers = list(_ANSWER_MARKER.finditer(output))
    if markers:
        rest = output[markers[-1].end():]
        lines = [ln.strip() for ln in rest.splitlines() if ln.strip()]
        return lines[0] if lines else ""
    lines = [ln.strip() for ln in output.splitlines() if ln.strip()]
    return lines[-1] if lines else ""


def score_exact_match(output: str, golds: Sequence[str]) -> Verdict:
    if not golds:
        raise ValueError("gold alias set is empty")
    answer = extract_answer_line(output)
    norm = normalize_answer(answer)
    ok = bool(norm) and any(norm == normalize_answer(g) for g in golds)
    return Verdict.boolean("", ok, answer, "exact match" if ok else "no alias matched")


# -- multiple choice (BigToM, MMLU) -----------------------------------------

def _explicit_patterns(labels: str) -> list[re.Pattern]:
    cls = f"[{labels}]"
    return [
        re.compile(rf"\(({cls})\)"),
        re.compile(rf"(?i:answer)\s*(?i:is|:)?\s*:?\s*\(?\**({cls})\b"),
        re.compile(rf"\b(?i:option)\s*\(?({cls})\b"),
    ]


def extract_choice(output: str, options: Mapping[str, str] | Sequence[str]) -> str:
    """Option label chosen in ``output``.

    Priority: explicit markers such as ``(B)`` or ``Answer: B`` (last one
    wins), then a standalone label token, then the option whose text appears
    latest. Raises :class:`NoChoice` when nothing matches.
    """
    if not isinstance(options, Mapping):
        options = {chr(ord("A") + i): text for i, text in enumerate(options)}
    labels = list(options)
    if not 2 <= len(labels) <= 26 or any(len(lb) != 1 or not lb.isupper() for lb in labels):
        raise ValueError("options must be 2-26 single uppercase labels")
    label_set = "".join(labels)

    best: tuple[int, str] | None = None
    for pattern in _explicit_patterns(label_set):
        for m in pattern.finditer(output):
            label = m.group(1)
            if label in options and (best is None or m.start(1) > best[0]):
                best = (m.start(1), label)
    if best:
        return best[1]

    # standalone token; "A"/"I" followed by a lowercase word are prose, not labels
    standalone = re.compile(rf"(?<![\w'])([{label_set}])(?![\w'])(?!\s+[a-z])")
    found = [m.group(1) for m in standalone.finditer(output)]
    if found:
        return found[-1]

    low = output.lower()
    latest: tuple[int, int, str] | None = None
    for label, text in options.items():
        needle = " ".join(str(text).lower().split()).rstrip(".!?")
        if not needle:
            continue
        hits = list(re.finditer(rf"(?<!\w){re.escape(needle)}(?!\w)", low))
        if hits:
            pos = hits[-1].start()
            key = (pos + len(needle), len(needle), label)
            if latest is None or key[:2] > latest[:2]:
                latest = key
    if latest:
        return latest[2]
    raise NoChoice(output[-200:])


def score_choice(output: str, options: Mapping[str, str], gold: str) -> Verdict:
    try:
        label = extract_choice(output, options)
    except NoChoice:
        return Verdict.boolean("", False, "", "no option label found")
    ok = label == gold
    return Verdict.boolean("", ok, label, "match" if ok else f"expected {gold}")


# -- code readability (model-judged) ----------------------------------------

_FENCE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)
_VERDICT = re.compile(r"^\s*\**verdict\s*:\s*(pass|fail)\**\s*$", re.IGNORECASE)

JUDGE_REMINDER = (
    "Your previous reply did not end with a verdict line. "
    "Reply again and end with exactly one line: VERDICT: PASS or VERDICT: FAIL"
)


def extract_code(output: str) -> str:
    blocks = _FENCE.findall(output)
    return blocks[-1].strip("\n") if blocks else output.strip()


def parse_verdict(reply: str) -> bool | None:
    lines = [ln for ln in reply.splitlines() if ln.strip()]
    if not lines:
        return None
    m = _VERDICT.match(lines[-1])
    return None if m is None else m.group(1).lower() == "pass"


def judge_prompt(rubric: str, original: str, rewritten: str) -> str:
    return (
        f"{rubric.strip()}\n\n"
        f"Original code:\n```\n{original}\n```\n\n"
        f"Rewritten code:\n```\n{rewritten}\n```"
    )


def score_with_judge(backend: Backend, original_code: str, rewritten_code: str, rubric: str,
                     model: str = "gpt-4", max_tokens: int = 512) -> Verdict:
    if not original_code.strip() or not rewritten_code.strip():
        return Verdict("", Fraction(0), rewritten_code, "empty code snippet", graded=True)
    prompt = judge_prompt(rubric, original_code, rewritten_code)
    digests = []
    for text in (prompt, prompt + "\n\n" + JUDGE_REMINDER):
        req = CompletionRequest.user(text, model=model, temperature=0.0,
                                     max_tokens=max_tokens, purpose_tag="judge")
        digests.append(cache_key(req))
        passed = parse_verdict(backend.complete(req).text)
        if passed is not None:
            return Verdict("", Fraction(int(passed)), rewritten_code,
                           "judge: PASS" if passed else "judge: FAIL",
                           graded=True, judge_calls=tuple(digests))
    raise JudgeUnparseable("judge reply lacked a VERDICT line after one retry")
