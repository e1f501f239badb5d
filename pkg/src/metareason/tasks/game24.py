"""Game of 24: expression validation and exhaustive solving.

All arithmetic is exact (``fractions.Fraction``); ``8 / (3 - 8 / 3)`` is 24,
not 23.999999999999996.
"""

from __future__ import annotations

import ast
import re
from collections import Counter
from fractions import Fraction
from itertools import permutations, product

from .types import Verdict

TARGET = 24
CARD_RANGE = range(1, 14)

_OPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
}
_SYMBOLS = str.maketrans({"×": "*", "x": "*", "X": "*", "÷": "/", "−": "-", "–": "-",
                          "[": "(", "]": ")", "{": "(", "}": ")"})


class _Invalid(Exception):
    pass


def _evaluate(node: ast.AST, literals: list[int]) -> Fraction:
    if isinstance(node, ast.Expression):
        return _evaluate(node.body, literals)
    if isinstance(node, ast.Constant) and type(node.value) is int:
        literals.append(node.value)
        return Fraction(node.value)
    if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
        left = _evaluate(node.left, literals)
        right = _evaluate(node.right, literals)
        if isinstance(node.op, ast.Div) and right == 0:
            raise _Invalid("division by zero")
        return _OPS[type(node.op)](left, right)
    raise _Invalid(f"unsupported syntax: {type(node).__name__}")


def evaluate_expression(expr: str) -> tuple[Fraction, list[int]]:
    """Exact value of ``expr`` and the integer literals it uses.

    Raises ``ValueError`` for anything but integers, + - * / and parentheses.
    """
    text = expr.translate(_SYMBOLS).strip()
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse expression: {exc.msg}") from exc
    literals: list[int] = []
    try:
        value = _evaluate(tree, literals)
    except _Invalid as exc:
        raise ValueError(str(exc)) from exc
    return value, literals


def validate_game24(expr: str, numbers) -> Verdict:
    numbers = list(numbers)
    try:
        value, literals = evaluate_expression(expr)
    except ValueError as exc:
        return Verdict.boolean("", False, expr, str(exc))
    if Counter(literals) != Counter(numbers):
        return Verdict.boolean("", False, expr, "literal multiset mismatch")
    if value != TARGET:
        return Verdict.boolean("", False, expr, f"evaluates to {value}, not {TARGET}")
    return Verdict.boolean("", True, expr, "valid")


# Five binary-tree shapes over four leaves a b c d with operators x y z.
_SHAPES = (
    "(({a} {x} {b}) {y} {c}) {z} {d}",
    "({a} {x} ({b} {y} {c})) {z} {d}",
    "({a} {x} {b}) {y} ({c} {z} {d})",
    "{a} {x} (({b} {y} {c}) {z} {d})",
    "{a} {x} ({b} {y} ({c} {z} {d}))",
)


def _apply(op: str, a: Fraction | None, b: Fraction | None) -> Fraction | None:
    if a is None or b is None:
        return None
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    return None if b == 0 else a / b


def _shape_values(shape: int, n: tuple[Fraction, ...], ops: tuple[str, str, str]) -> Fraction | None:
    a, b, c, d = n
    x, y, z = ops
    if shape == 0:
        return _apply(z, _apply(y, _apply(x, a, b), c), d)
    if shape == 1:
        return _apply(z, _apply(x, a, _apply(y, b, c)), d)
    if shape == 2:
        return _apply(y, _apply(x, a, b), _apply(z, c, d))
    if shape == 3:
        return _apply(x, a, _apply(z, _apply(y, b, c), d))
    return _apply(x, a, _apply(y, b, _apply(z, c, d)))


def _solutions(numbers):
    numbers = tuple(numbers)
    if len(numbers) != 4:
        raise ValueError("need exactly four numbers")
    for perm in sorted(set(permutations(numbers))):
        fracs = tuple(Fraction(v) for v in perm)
        for ops in product("+-*/", repeat=3):
            for shape in range(len(_SHAPES)):
                if _shape_values(shape, fracs, ops) == TARGET:
                    a, b, c, d = perm
                    x, y, z = ops
                    yield _SHAPES[shape].format(a=a, b=b, c=c, d=d, x=x, y=y, z=z)


def solve_all(numbers) -> list[str]:
    """Every (ordering, shape, operator) combination that reaches 24."""
    return list(_solutions(numbers))


def solve_game24(numbers) -> str | None:
    """First solution found by exhaustive search, or ``None``."""
    return next(_solutions(numbers), None)


_ANSWER_RE = re.compile(r"answer\s*:\s*(.+)", re.IGNORECASE)
_EXPR_CHARS = re.compile(r"[\d\s+\-*/()×÷−–x\[\]]+")


def extract_expression(output: str) -> str:
    """Pull the candidate expression from a model reply.

    Takes the text after the last ``Answer:`` marker, else the last non-empty
    line; drops everything from ``=`` onward and any surrounding prose.
    """
    matches = _ANSWER_RE.findall(output)
    if matches:
        line = matches[-1]
    else:
        lines = [ln for ln in output.splitlines() if ln.strip()]
        line = lines[-1] if lines else ""
    line = line.split("=")[0].replace("`", "").replace("$", "").replace("\\times", "*")
    line = line.replace("\\div", "/")
    runs = [r.strip() for r in _EXPR_CHARS.findall(line) if re.search(r"\d", r)]
    return max(runs, key=len) if runs else ""
