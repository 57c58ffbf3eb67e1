"""Propositional formulas over four variables and their truth-table semantics.

A truth table (and a concept) is a plain ``int`` in ``0..0xFFFF``.  Bit ``b`` is
set iff the valuation with index ``b`` satisfies the formula, where the index of
a valuation ``v`` is ``v(x1) + 2*v(x2) + 4*v(x3) + 8*v(x4)``.  Under this
convention the variable masks are the usual 0xAAAA/0xCCCC/0xF0F0/0xFF00.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

NUM_VARS = 4
NUM_VALUATIONS = 16
FULL = 0xFFFF
NUM_TABLES = 1 << NUM_VALUATIONS

VAR_MASKS = (0xAAAA, 0xCCCC, 0xF0F0, 0xFF00)


class Op(enum.Enum):
    AND = "&"
    OR = "|"
    XOR = "^"

    def apply(self, a, b):
        """Bitwise semantics; works on ints and numpy integer arrays alike."""
        if self is Op.AND:
            return a & b
        if self is Op.OR:
            return a | b
        return a ^ b


@dataclass(frozen=True)
class Literal:
    var: int
    negated: bool = False

    def __post_init__(self):
        if not 1 <= self.var <= NUM_VARS:
            raise ValueError(f"variable index must be in 1..{NUM_VARS}, got {self.var}")


@dataclass(frozen=True)
class Binary:
    op: Op
    left: "Formula"
    right: "Formula"


Formula = Union[Literal, Binary]


def evaluate(phi: Formula) -> int:
    if isinstance(phi, Literal):
        mask = VAR_MASKS[phi.var - 1]
        return mask ^ FULL if phi.negated else mask
    return phi.op.apply(evaluate(phi.left), evaluate(phi.right))


def size(phi: Formula) -> int:
    """Number of literals plus number of binary operators."""
    if isinstance(phi, Literal):
        return 1
    return size(phi.left) + size(phi.right) + 1


def literals(phi: Formula) -> list[Literal]:
    if isinstance(phi, Literal):
        return [phi]
    return literals(phi.left) + literals(phi.right)


def operators(phi: Formula) -> list[Op]:
    if isinstance(phi, Literal):
        return []
    return operators(phi.left) + operators(phi.right) + [phi.op]


# ---------------------------------------------------------------- concepts

def check_mask(mask: int) -> int:
    mask = int(mask)
    if not 0 <= mask <= FULL:
        raise ValueError(f"truth table must be a 16-bit mask, got {mask:#x}")
    return mask


def cardinality(mask: int) -> int:
    return bin(check_mask(mask)).count("1")


def complement(mask: int) -> int:
    return check_mask(mask) ^ FULL


def cardinality_term(mask: int) -> int:
    """min(#C, #complement(C)), the size of the smaller of a concept and its complement."""
    n = cardinality(mask)
    return min(n, NUM_VALUATIONS - n)


def _check_perm(perm: Sequence[int]) -> tuple[int, ...]:
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(1, NUM_VARS + 1)):
        raise ValueError(f"not a permutation of 1..{NUM_VARS}: {perm}")
    return perm


def _valuation_source(perm: tuple[int, ...]) -> list[int]:
    # relabelled table at valuation b reads the original table at valuation src[b]
    src = []
    for b in range(NUM_VALUATIONS):
        w = 0
        for i, target in enumerate(perm):
            if b >> (target - 1) & 1:
                w |= 1 << i
        src.append(w)
    return src


def relabel(mask: int, perm: Sequence[int]) -> int:
    """Substitute ``x_i -> x_perm[i-1]`` in (any description of) the concept.

    ``perm`` lists the images of 1..4, so ``(2, 1, 3, 4)`` swaps x1 and x2.
    """
    mask = check_mask(mask)
    src = _valuation_source(_check_perm(perm))
    out = 0
    for b, w in enumerate(src):
        if mask >> w & 1:
            out |= 1 << b
    return out


def relabel_index(perm: Sequence[int]) -> np.ndarray:
    """Vectorised ``relabel`` over all 65536 tables: ``out[T] == relabel(T, perm)``."""
    src = _valuation_source(_check_perm(perm))
    tables = np.arange(NUM_TABLES, dtype=np.int64)
    out = np.zeros(NUM_TABLES, dtype=np.int64)
    for b, w in enumerate(src):
        out |= ((tables >> w) & 1) << b
    return out


def inverse_perm(perm: Sequence[int]) -> tuple[int, ...]:
    perm = _check_perm(perm)
    inv = [0] * NUM_VARS
    for i, target in enumerate(perm, start=1):
        inv[target - 1] = i
    return tuple(inv)


def substitute(phi: Formula, perm: Sequence[int]) -> Formula:
    perm = _check_perm(perm)
    if isinstance(phi, Literal):
        return Literal(perm[phi.var - 1], phi.negated)
    return Binary(phi.op, substitute(phi.left, perm), substitute(phi.right, perm))


# ---------------------------------------------------------------- text syntax

class FormulaSyntaxError(ValueError):
    def __init__(self, message: str, text: str, pos: int):
        super().__init__(f"{message} at position {pos}: {text!r}")
        self.text = text
        self.pos = pos


_ALIASES = {"¬": "!", "~": "!", "∧": "&", "∨": "|", "⊕": "^"}
_OPS = {op.value: op for op in Op}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message):
        raise FormulaSyntaxError(message, self.text, self.pos)

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self.skip()
        if self.pos >= len(self.text):
            return ""
        ch = self.text[self.pos]
        return _ALIASES.get(ch, ch)

    def expect(self, ch):
        if self.peek() != ch:
            self.error(f"expected {ch!r}")
        self.pos += 1

    def formula(self) -> Formula:
        ch = self.peek()
        if ch == "(":
            self.pos += 1
            left = self.formula()
            sym = self.peek()
            if sym not in _OPS:
                self.error("expected one of '&', '|', '^'")
            self.pos += 1
            right = self.formula()
            self.expect(")")
            return Binary(_OPS[sym], left, right)
        negated = False
        if ch == "!":
            negated = True
            self.pos += 1
            self.skip()
        m = re.compile(r"x([1-4])").match(self.text, self.pos)
        if not m:
            self.error("expected a literal x1..x4" + (" after '!'" if negated else " or '('"))
        self.pos = m.end()
        return Literal(int(m.group(1)), negated)

    def parse(self) -> Formula:
        phi = self.formula()
        if self.peek():
            self.error("unexpected trailing input")
        return phi


def parse(text: str) -> Formula:
    """Parse the concrete syntax ``x1..x4 ! & | ^`` with fully parenthesised binaries."""
    return _Parser(text).parse()


def to_text(phi: Formula) -> str:
    if isinstance(phi, Literal):
        return ("!" if phi.negated else "") + f"x{phi.var}"
    return f"({to_text(phi.left)} {phi.op.value} {to_text(phi.right)})"


def parse_concept(text: str) -> int:
    """Accept either a hex mask (``0x8888``) or a formula, returning its truth table."""
    s = text.strip()
    if re.fullmatch(r"0[xX][0-9a-fA-F]{1,4}", s):
        return int(s, 16)
    return evaluate(parse(s))


def format_mask(mask: int) -> str:
    return f"0x{check_mask(mask):04X}"
