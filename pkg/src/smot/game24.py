"""The 24-point game as a search domain.

States are multisets of exact rationals. The canonical key lists them in
ascending order, in lowest terms, separated by single spaces (``"2 3 6"``,
``"3 8/3 8"``). A move combines two numbers with one of ``+ - * /``; its
label reads like ``6/2=3``, with non-integer or negative operands wrapped
in parentheses so labels can be parsed back unambiguously.
"""

from __future__ import annotations

import ast
import re
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from itertools import combinations
from typing import Iterable, Sequence, Union

from .extraction import Outcome, ReasoningTree
from .machine import SubSolution

TARGET = Fraction(24)
OPERATORS = ("+", "-", "*", "/")
DOMAIN_ID = "game24"

Number = Union[int, Fraction, str]


class Game24Error(ValueError):
    pass


def _num(x: Number) -> Fraction:
    try:
        return Fraction(x)
    except (ValueError, ZeroDivisionError) as exc:
        raise Game24Error(f"not a rational number: {x!r}") from exc


def canonical_key(numbers: Iterable[Number]) -> str:
    values = sorted(_num(x) for x in numbers)
    if not values:
        raise Game24Error("a state needs at least one number")
    return " ".join(str(v) for v in values)


def parse_key(key: str) -> tuple[Fraction, ...]:
    parts = key.replace(",", " ").split()
    if not parts:
        raise Game24Error(f"empty 24-game state {key!r}")
    return tuple(sorted(_num(p.strip("[]()")) for p in parts))


@dataclass(frozen=True)
class Game24State:
    numbers: tuple[Fraction, ...]

    @classmethod
    def of(cls, numbers: Iterable[Number]) -> "Game24State":
        values = tuple(sorted(_num(x) for x in numbers))
        if not 1 <= len(values) <= 4:
            raise Game24Error(f"a state holds 1 to 4 numbers, got {len(values)}")
        return cls(values)

    @classmethod
    def from_key(cls, key: str) -> "Game24State":
        return cls.of(parse_key(key))

    @property
    def key(self) -> str:
        return " ".join(str(v) for v in self.numbers)

    def __str__(self) -> str:
        return "[" + ", ".join(str(v) for v in self.numbers) + "]"


def _operand(x: Fraction) -> str:
    if x.denominator == 1 and x >= 0:
        return str(x)
    return f"({x})"


def apply_op(a: Fraction, op: str, b: Fraction) -> Fraction:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0:
            raise ZeroDivisionError("division by zero")
        return a / b
    raise Game24Error(f"unknown operator {op!r}")


@dataclass(frozen=True)
class Game24Move:
    a: Fraction
    op: str
    b: Fraction
    result: Fraction

    @property
    def label(self) -> str:
        return f"{_operand(self.a)}{self.op}{_operand(self.b)}={self.result}"


_OPERAND = r"(\d+|\(\s*-?\d+(?:\s*/\s*\d+)?\s*\))"
_LABEL_RE = re.compile(
    rf"^\s*{_OPERAND}\s*([-+*/x×÷−])\s*{_OPERAND}\s*=\s*(\(?\s*-?\d+(?:\s*/\s*\d+)?\s*\)?)\s*$"
)
_OP_ALIASES = {"x": "*", "×": "*", "÷": "/", "−": "-"}


def parse_label(label: str) -> Game24Move:
    """Parse ``"6/2=3"``-style labels, checking the arithmetic."""
    m = _LABEL_RE.match(label)
    if not m:
        raise Game24Error(f"unparseable move label {label!r}")
    a_txt, op, b_txt, r_txt = m.groups()
    clean = lambda t: t.replace("(", "").replace(")", "").replace(" ", "")  # noqa: E731
    a, b, r = Fraction(clean(a_txt)), Fraction(clean(b_txt)), Fraction(clean(r_txt))
    op = _OP_ALIASES.get(op, op)
    try:
        actual = apply_op(a, op, b)
    except ZeroDivisionError:
        raise Game24Error(f"division by zero in {label!r}") from None
    if actual != r:
        raise Game24Error(f"arithmetic is wrong in {label!r}: {a}{op}{b}={actual}")
    return Game24Move(a, op, b, r)


def _moves(numbers: Sequence[Fraction]) -> list[tuple[Game24Move, tuple[Fraction, ...]]]:
    out = {}
    for i, j in combinations(range(len(numbers)), 2):
        a, b = numbers[i], numbers[j]
        rest = [numbers[k] for k in range(len(numbers)) if k != i and k != j]
        pairs = [(a, "+", b), (a, "*", b), (a, "-", b), (b, "-", a)]
        if b != 0:
            pairs.append((a, "/", b))
        if a != 0:
            pairs.append((b, "/", a))
        for x, op, y in pairs:
            move = Game24Move(x, op, y, apply_op(x, op, y))
            state = tuple(sorted(rest + [move.result]))
            out.setdefault((move.label, state), (move, state))
    return [out[k] for k in sorted(out, key=lambda k: (k[0], k[1]))]


@lru_cache(maxsize=None)
def _successors_for_key(key: str) -> tuple[tuple[Game24Move, str, str], ...]:
    numbers = parse_key(key)
    return tuple(
        (move, move.label, " ".join(str(v) for v in state))
        for move, state in _moves(numbers)
    )


def successors(state: Union[Game24State, str]) -> list[tuple[Game24Move, Game24State]]:
    """All distinct moves from ``state``, sorted by label.

    ``+`` and ``*`` are generated once per unordered pair, ``-`` and ``/`` in
    both orders; division by zero is skipped.
    """
    key = state if isinstance(state, str) else state.key
    if len(parse_key(key)) < 2:
        raise Game24Error(f"no moves from a single number: {key!r}")
    return [(m, Game24State.from_key(k)) for m, _, k in _successors_for_key(key)]


def successor_solutions(key: str) -> list[SubSolution]:
    if len(parse_key(key)) < 2:
        return []
    return [SubSolution(label, k) for _, label, k in _successors_for_key(key)]


@lru_cache(maxsize=4096)
def _success_key(key: str) -> bool:
    numbers = parse_key(key)
    return len(numbers) == 1 and numbers[0] == TARGET


def is_success(state: Union[Game24State, str]) -> bool:
    if isinstance(state, str):
        return _success_key(state)
    return state.numbers == (TARGET,)


@lru_cache(maxsize=None)
def _solvable_key(key: str) -> bool:
    numbers = parse_key(key)
    if len(numbers) == 1:
        return numbers[0] == TARGET
    return any(_solvable_key(k) for _, _, k in _successors_for_key(key))


def brute_force_solvable(state: Union[Game24State, str, Iterable[Number]]) -> bool:
    if isinstance(state, Game24State):
        key = state.key
    elif isinstance(state, str):
        key = canonical_key(parse_key(state))
    else:
        key = Game24State.of(state).key
    return _solvable_key(key)


def exhaustive_tree(state: Union[Game24State, str]) -> ReasoningTree:
    """Expand every move down to single numbers; leaves are labelled."""
    key = state if isinstance(state, str) else state.key
    tree = ReasoningTree(exhaustive=True)
    root = tree.add_root(key)
    stack = [root]
    while stack:
        nid = stack.pop()
        node_key = tree.nodes[nid].state
        moves = _successors_for_key(node_key)
        if not moves:
            tree.set_outcome(
                nid, Outcome.SUCCESS if is_success(node_key) else Outcome.FAILURE
            )
            continue
        children = [tree.add_child(nid, label, k) for _, label, k in moves]
        stack.extend(reversed(children))
    return tree


# -- equations -----------------------------------------------------------------


def _eval_expr(text: str) -> Fraction:
    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, int):
            return Fraction(node.value)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -walk(node.operand)
        if isinstance(node, ast.BinOp):
            ops = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/"}
            if type(node.op) in ops:
                return apply_op(walk(node.left), ops[type(node.op)], walk(node.right))
        raise Game24Error(f"unsupported expression element in {text!r}")

    return walk(ast.parse(text, mode="eval"))


def _literal(x: Fraction) -> str:
    if x.denominator == 1 and x >= 0:
        return str(x)
    return f"({x})"


def format_equation(
    start: Union[Game24State, str, Iterable[Number]],
    trajectory: Sequence[Union[SubSolution, Game24Move, str]],
) -> str:
    """Rebuild a single infix expression from a solved move sequence.

    Each step must combine two numbers currently on the table; the returned
    expression is re-evaluated exactly and must equal 24 and use every
    starting number once.
    """
    if isinstance(start, Game24State):
        numbers = list(start.numbers)
    elif isinstance(start, str):
        numbers = list(parse_key(start))
    else:
        numbers = list(Game24State.of(start).numbers)

    table = [(v, _literal(v)) for v in numbers]
    for step in trajectory:
        if isinstance(step, Game24Move):
            move = step
        else:
            move = parse_label(step.label if isinstance(step, SubSolution) else step)
        exprs = []
        for operand in (move.a, move.b):
            idx = next((i for i, (v, _) in enumerate(table) if v == operand), None)
            if idx is None:
                raise Game24Error(f"operand {operand} of {move.label!r} is not available")
            exprs.append(table.pop(idx)[1])
        table.append((move.result, f"({exprs[0]}{move.op}{exprs[1]})"))

    if len(table) != 1 or table[0][0] != TARGET:
        left = ", ".join(str(v) for v, _ in table)
        raise Game24Error(f"trajectory ends at [{left}], not [24]")
    expr = table[0][1]
    if _eval_expr(expr) != TARGET:
        raise Game24Error(f"expression {expr} does not evaluate to 24")
    expected = [x for v in numbers for x in equation_literals(_literal(v))]
    if Counter(equation_literals(expr)) != Counter(expected):
        raise Game24Error(f"expression {expr} does not use each number once")
    return expr


def equation_literals(expr: str) -> list[Fraction]:
    """Integer leaves of ``expr``, negated where written as ``-n``."""
    out = []

    def walk(node):
        if isinstance(node, ast.Constant):
            out.append(Fraction(node.value))
        elif isinstance(node, ast.UnaryOp) and isinstance(node.operand, ast.Constant):
            out.append(-Fraction(node.operand.value))
        else:
            for child in ast.iter_child_nodes(node):
                walk(child)

    walk(ast.parse(expr, mode="eval"))
    return out


def evaluate_equation(expr: str) -> Fraction:
    return _eval_expr(expr)


# -- problem sets --------------------------------------------------------------


def parse_problems(text: str) -> list[Game24State]:
    problems = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise Game24Error(f"line {lineno}: expected 4 numbers, got {len(parts)}")
        try:
            problems.append(Game24State.of(int(p) for p in parts))
        except ValueError:
            raise Game24Error(f"line {lineno}: numbers must be integers") from None
    return problems


def load_problem_set(source=None) -> list[Game24State]:
    """Read a problem file; ``None`` loads the bundled 1,000-problem set."""
    if source is None:
        text = resources.files("smot.data").joinpath("game24_problems.txt").read_text()
    elif hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, encoding="utf-8") as fp:
            text = fp.read()
    return parse_problems(text)


TRAIN_RANGE = range(1, 901)
EVAL_RANGE = range(901, 1001)


class Game24Domain:
    """ProblemDomain adapter over canonical keys."""

    name = DOMAIN_ID

    def canonical(self, key: str) -> str:
        return canonical_key(parse_key(key))

    def successors(self, key: str) -> list[SubSolution]:
        return successor_solutions(key)

    def is_success(self, key: str) -> bool:
        return is_success(key)

    def solvable(self, key: str) -> bool:
        return brute_force_solvable(key)

    def describe(self, key: str) -> str:
        return str(Game24State.from_key(key))
