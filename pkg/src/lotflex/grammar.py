"""The P and P-xor probabilistic grammars and their Dirichlet-parameterised states.

Rules are grouped by left-hand nonterminal; within a group a rule's probability
is its Dirichlet parameter over the group total.  A formula's prior is the
product of the probabilities of the rules in its (unique) derivation.
"""
from __future__ import annotations

import enum
import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .logic import Binary, Formula, Literal, NUM_VARS, Op

DEFAULT_XOR_PRIOR = 1e-4


class GrammarError(ValueError):
    pass


class Language(str, enum.Enum):
    P = "p"
    PXOR = "pxor"

    @property
    def ops(self) -> tuple[Op, ...]:
        if self is Language.P:
            return (Op.AND, Op.OR)
        return (Op.AND, Op.OR, Op.XOR)

    @classmethod
    def parse(cls, value) -> "Language":
        if isinstance(value, Language):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise GrammarError(f"unknown language {value!r} (expected 'p' or 'pxor')") from None


@dataclass(frozen=True)
class Rule:
    id: str
    lhs: str
    rhs: str
    op: Op | None = None
    literal: Literal | None = None


START_RULE = Rule("start", "START", "BOOL")
ATOM_RULE = Rule("atom", "BOOL", "ATOM")
OP_RULES = {
    Op.AND: Rule("and", "BOOL", "(BOOL & BOOL)", op=Op.AND),
    Op.OR: Rule("or", "BOOL", "(BOOL | BOOL)", op=Op.OR),
    Op.XOR: Rule("xor", "BOOL", "(BOOL ^ BOOL)", op=Op.XOR),
}

# literal order matches the leaf index used by the enumerators: x1..x4, !x1..!x4
LITERALS = tuple(Literal(v, neg) for neg in (False, True) for v in range(1, NUM_VARS + 1))
LITERAL_RULES = tuple(
    Rule(("not_x" if lit.negated else "x") + str(lit.var), "ATOM",
         ("!" if lit.negated else "") + f"x{lit.var}", literal=lit)
    for lit in LITERALS
)
_LITERAL_RULE_BY_LIT = {r.literal: r for r in LITERAL_RULES}


def rules(language) -> tuple[Rule, ...]:
    language = Language.parse(language)
    ops = tuple(OP_RULES[op] for op in language.ops)
    return (START_RULE,) + ops + (ATOM_RULE,) + LITERAL_RULES


def rule_ids(language) -> tuple[str, ...]:
    return tuple(r.id for r in rules(language))


def literal_rule(lit: Literal) -> Rule:
    return _LITERAL_RULE_BY_LIT[lit]


@dataclass(frozen=True)
class PcfgState:
    """Immutable grammar state: one positive Dirichlet parameter per rule.

    ``params`` is aligned with ``rules(language)``.  ``grouping`` selects how
    parameters are normalised: ``"lhs"`` (per nonterminal, the default) or
    ``"joint"`` (one normalisation over every rule, kept for sensitivity runs).
    """

    language: Language
    params: tuple[float, ...]
    trial: int = 0
    grouping: str = "lhs"

    def __post_init__(self):
        object.__setattr__(self, "language", Language.parse(self.language))
        params = tuple(float(d) for d in self.params)
        object.__setattr__(self, "params", params)
        if len(params) != len(rules(self.language)):
            raise GrammarError(
                f"{self.language.value} has {len(rules(self.language))} rules, got {len(params)} parameters")
        bad = [rid for rid, d in zip(rule_ids(self.language), params) if not (d > 0 and math.isfinite(d))]
        if bad:
            raise GrammarError(f"Dirichlet parameters must be positive and finite: {', '.join(bad)}")
        if self.grouping not in ("lhs", "joint"):
            raise GrammarError(f"unknown grouping {self.grouping!r}")

    @property
    def rules(self) -> tuple[Rule, ...]:
        return rules(self.language)

    @property
    def D(self) -> dict[str, float]:
        return dict(zip(rule_ids(self.language), self.params))

    def param(self, rule_id: str) -> float:
        try:
            return self.D[rule_id]
        except KeyError:
            raise GrammarError(f"rule {rule_id!r} is not part of language {self.language.value}") from None

    def probabilities(self) -> dict[str, float]:
        totals: dict[str, float] = {}
        for r, d in zip(self.rules, self.params):
            key = r.lhs if self.grouping == "lhs" else "*"
            totals[key] = totals.get(key, 0.0) + d
        return {
            r.id: d / totals[r.lhs if self.grouping == "lhs" else "*"]
            for r, d in zip(self.rules, self.params)
        }

    def with_increments(self, increments: Mapping[str, float]) -> "PcfgState":
        """New state with ``D_i + increments[i]`` and the trial index advanced."""
        D = self.D
        unknown = set(increments) - set(D)
        if unknown:
            raise GrammarError(f"unknown rules: {sorted(unknown)}")
        params = tuple(D[rid] + increments.get(rid, 0.0) for rid in D)
        return replace(self, params=params, trial=self.trial + 1)

    def is_literal_symmetric(self) -> bool:
        D = self.D
        return len({D[r.id] for r in LITERAL_RULES}) == 1

    def key(self) -> str:
        """Stable digest of everything the mass tables depend on."""
        payload = json.dumps([self.language.value, self.grouping, [repr(d) for d in self.params]])
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "language": self.language.value,
            "grouping": self.grouping,
            "trial": self.trial,
            "rules": [
                {"id": r.id, "lhs": r.lhs, "rhs": r.rhs, "D0": d}
                for r, d in zip(self.rules, self.params)
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "PcfgState":
        language = Language.parse(data["language"])
        expected = {r.id: r for r in rules(language)}
        given = {}
        for entry in data["rules"]:
            rid = entry["id"]
            if rid not in expected:
                raise GrammarError(f"rule {rid!r} is not part of language {language.value}")
            r = expected[rid]
            if entry.get("lhs", r.lhs) != r.lhs or entry.get("rhs", r.rhs).replace(" ", "") != r.rhs.replace(" ", ""):
                raise GrammarError(f"rule {rid!r} does not match {r.lhs} -> {r.rhs}")
            if rid in given:
                raise GrammarError(f"duplicate rule {rid!r}")
            given[rid] = float(entry["D0"])
        missing = set(expected) - set(given)
        if missing:
            raise GrammarError(f"missing rules: {sorted(missing)}")
        return cls(language, tuple(given[rid] for rid in expected),
                   trial=int(data.get("trial", 0)), grouping=data.get("grouping", "lhs"))


def default_initial_state(language, xor_prior: float | None = None) -> PcfgState:
    """All parameters 1, except the xor rule (P-xor only) which starts at ``xor_prior``."""
    language = Language.parse(language)
    if language is Language.P:
        if xor_prior is not None:
            raise GrammarError("language p has no xor rule; xor_prior does not apply")
        return PcfgState(language, tuple(1.0 for _ in rules(language)))
    if xor_prior is None:
        xor_prior = DEFAULT_XOR_PRIOR
    if not xor_prior > 0:
        raise GrammarError(f"xor_prior must be positive, got {xor_prior}")
    return PcfgState(language, tuple(xor_prior if rid == "xor" else 1.0 for rid in rule_ids(language)))


def load_state(path) -> PcfgState:
    with open(path) as fh:
        return PcfgState.from_dict(json.load(fh))


def save_state(state: PcfgState, path) -> None:
    Path(path).write_text(json.dumps(state.to_dict(), indent=2) + "\n")


def default_config(language) -> PcfgState:
    """The shipped initial-state file for ``language``."""
    language = Language.parse(language)
    text = resources.files("lotflex").joinpath("data", f"{language.value}.json").read_text()
    return PcfgState.from_dict(json.loads(text))


def rule_probability(state: PcfgState, rule_id: str) -> float:
    probs = state.probabilities()
    if rule_id not in probs:
        raise GrammarError(f"rule {rule_id!r} is not part of language {state.language.value}")
    return probs[rule_id]


def count_rule_uses(phi: Formula) -> Counter:
    """Number of times each rule appears in the derivation of ``phi``."""
    counts = Counter({START_RULE.id: 1})

    def walk(node):
        if isinstance(node, Literal):
            counts[ATOM_RULE.id] += 1
            counts[literal_rule(node).id] += 1
        else:
            counts[OP_RULES[node.op].id] += 1
            walk(node.left)
            walk(node.right)

    walk(phi)
    return counts


def _check_language(counts: Mapping[str, int], state: PcfgState) -> None:
    allowed = set(rule_ids(state.language))
    extra = [rid for rid in counts if rid not in allowed]
    if extra:
        raise GrammarError(f"formula uses {extra} which language {state.language.value} lacks")


def prior_probability(phi: Formula, state: PcfgState, mode: str = "mean") -> float:
    """Probability of generating ``phi``.

    ``mode="mean"`` multiplies the rule probabilities (the Dirichlet mean).
    ``mode="marginal"`` integrates the rule probabilities out under the
    Dirichlet, giving a ratio of multivariate Beta functions per group.  The
    marginal is not a product over rule uses, so the mass tables support only
    the mean mode.
    """
    counts = count_rule_uses(phi)
    _check_language(counts, state)
    if mode == "mean":
        probs = state.probabilities()
        p = 1.0
        for rid, n in counts.items():
            p *= probs[rid] ** n
        return p
    if mode == "marginal":
        groups: dict[str, list[tuple[float, int]]] = {}
        for r, d in zip(state.rules, state.params):
            key = r.lhs if state.grouping == "lhs" else "*"
            groups.setdefault(key, []).append((d, counts.get(r.id, 0)))
        log_p = 0.0
        for entries in groups.values():
            total_d = sum(d for d, _ in entries)
            total_n = sum(n for _, n in entries)
            log_p += math.lgamma(total_d) - math.lgamma(total_d + total_n)
            log_p += sum(math.lgamma(d + n) - math.lgamma(d) for d, n in entries)
        return math.exp(log_p)
    raise GrammarError(f"unknown prior mode {mode!r}")


def iter_formulas(language, n: int) -> Iterable[Formula]:
    """Every formula of ``language`` with exactly ``n`` literals (size ``2n - 1``)."""
    ops = Language.parse(language).ops
    if n == 1:
        yield from LITERALS
        return
    for k in range(1, n):
        for left in iter_formulas(language, k):
            for right in iter_formulas(language, n - k):
                for op in ops:
                    yield Binary(op, left, right)
