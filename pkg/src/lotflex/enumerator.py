"""Exact aggregation of prior mass over every formula up to a size bound.

For each odd size ``s`` and truth table ``T``:

* ``Z(s, T)``   -- total prior of the formulas of size ``s`` evaluating to ``T``;
* ``W_r(s, T)`` -- the same sum weighted by the number of uses of rule ``r``.

``build_mass_tables`` computes them with a size-indexed dynamic program whose
combination step is a bitwise convolution; ``naive_enumerate`` generates the
formulas themselves and serves as the oracle for small bounds.
"""
from __future__ import annotations

import functools
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import transforms as tf
from .grammar import ATOM_RULE, LITERAL_RULES, LITERALS, OP_RULES, START_RULE, Language, PcfgState
from .logic import NUM_TABLES, Op, evaluate

log = logging.getLogger(__name__)

DEFAULT_MAX_SIZE = 19
NAIVE_MAX_SIZE = 9

LITERAL_MASKS = np.array([evaluate(lit) for lit in LITERALS], dtype=np.int64)


class EnumerationError(ValueError):
    pass


def odd_sizes(max_size: int) -> tuple[int, ...]:
    if max_size < 1 or max_size % 2 == 0:
        raise EnumerationError(f"max_size must be odd and >= 1, got {max_size}")
    return tuple(range(1, max_size + 1, 2))


@dataclass
class MassTables:
    """Per-size, per-table prior mass ``Z`` and rule-weighted mass ``W``.

    Row ``k`` of every array holds size ``2k + 1``.  ``W`` maps rule ids to
    arrays of the same shape as ``Z``; the start rule is used exactly once per
    formula, so its entry is ``Z`` itself.  ``support`` marks, exactly, which
    ``(s, T)`` have at least one formula; entries outside it are zero.
    """

    state: PcfgState
    max_size: int
    Z: np.ndarray
    W: dict[str, np.ndarray] = field(default_factory=dict)
    support: np.ndarray | None = None

    @property
    def sizes(self) -> tuple[int, ...]:
        return odd_sizes(self.max_size)

    def row(self, s: int) -> int:
        if s % 2 == 0 or not 1 <= s <= self.max_size:
            raise EnumerationError(f"no row for size {s} (max_size {self.max_size})")
        return (s - 1) // 2

    def z(self, s: int) -> np.ndarray:
        if s % 2 == 0 and 0 < s <= self.max_size:
            return np.zeros(NUM_TABLES)
        return self.Z[self.row(s)]

    def w(self, rule_id: str, s: int) -> np.ndarray:
        if rule_id not in self.W:
            raise EnumerationError(f"rule {rule_id!r} not tracked in these tables")
        if s % 2 == 0 and 0 < s <= self.max_size:
            return np.zeros(NUM_TABLES)
        return self.W[rule_id][self.row(s)]

    def mass_by_size(self, mask: int) -> dict[int, float]:
        return {s: float(self.Z[k, mask]) for k, s in enumerate(self.sizes)}

    def rule_mass(self, mask: int) -> dict[str, float]:
        """``sum_s W_r(s, mask)`` for every tracked rule."""
        return {rid: float(np.sum(W[:, mask])) for rid, W in self.W.items()}

    def reachable(self, mask: int) -> np.ndarray:
        """Boolean per size: does some formula of that size evaluate to ``mask``?"""
        if self.support is not None:
            return self.support[:, mask].copy()
        return self.Z[:, mask] > 0

    def total_generation_mass(self) -> float:
        """Prior mass of all formulas up to ``max_size``; below 1 when mass escapes to larger sizes."""
        return float(self.Z.sum())

    def save(self, path) -> None:
        arrays = {"Z": self.Z}
        arrays.update({f"W_{rid}": W for rid, W in self.W.items() if rid != START_RULE.id})
        if self.support is not None:
            arrays["support"] = self.support
        np.savez_compressed(path, max_size=self.max_size, state_key=self.state.key(), **arrays)

    @classmethod
    def load(cls, path, state: PcfgState) -> "MassTables":
        with np.load(path) as data:
            if str(data["state_key"]) != state.key():
                raise EnumerationError(f"{path} was built for a different grammar state")
            W = {k[2:]: data[k] for k in data.files if k.startswith("W_")}
            Z = data["Z"]
            if W:
                W[START_RULE.id] = Z
            support = data["support"] if "support" in data.files else None
            return cls(state, int(data["max_size"]), Z, W, support)


# ------------------------------------------------------------- exact supports

def _literal_onehot(indices) -> np.ndarray:
    u = np.zeros(NUM_TABLES, dtype=np.int64)
    u[LITERAL_MASKS[list(indices)]] = 1
    return u


@functools.lru_cache(maxsize=8)
def supports(language, max_size: int) -> dict[str, np.ndarray]:
    """Exact reachability, overall (key ``"*"``) and per rule (formulas using it).

    The indicator convolutions run in int64, where every intermediate of the
    transforms is an integer far below 2**63, so zero/nonzero is exact.
    """
    language = Language.parse(language)
    sizes = odd_sizes(max_size)
    ops = language.ops
    n = len(sizes)
    S = np.zeros((n, NUM_TABLES), dtype=bool)
    S[0] = _literal_onehot(range(len(LITERALS))) > 0
    S_hat = {}

    def hats(rows, k):
        u = rows[k].astype(np.int64)
        return {op: tf.forward(op, u) for op in ops}

    for k in range(1, n):
        S_hat[k - 1] = hats(S, k - 1)
        for op in ops:
            acc = sum(S_hat[k1][op] * S_hat[k - 1 - k1][op] for k1 in range(k))
            S[k] |= tf.inverse(op, acc) > 0

    result = {"*": S}
    rule_ids = [r.id for r in OP_RULES.values() if r.op in ops] + [ATOM_RULE.id] + [r.id for r in LITERAL_RULES]
    for rid in rule_ids:
        U = np.zeros_like(S)
        if rid == ATOM_RULE.id:
            U[0] = S[0]
        elif rid.startswith("x") or rid.startswith("not_"):
            U[0] = _literal_onehot([i for i, r in enumerate(LITERAL_RULES) if r.id == rid]) > 0
        U_hat = {}
        for k in range(1, n):
            U_hat[k - 1] = hats(U, k - 1)
            for op in ops:
                acc = sum(U_hat[k1][op] * S_hat[k - 1 - k1][op] for k1 in range(k))
                if OP_RULES[op].id == rid:
                    acc = acc + sum(S_hat[k1][op] * S_hat[k - 1 - k1][op] for k1 in range(k))
                U[k] |= tf.inverse(op, acc) > 0
        result[rid] = U
    return result


# ------------------------------------------------------------- fast DP

def _masked(x: tf.DD, keep: np.ndarray) -> tf.DD:
    return tf.DD(np.where(keep, x.hi, 0.0), np.where(keep, x.lo, 0.0))


def _finish(x: tf.DD, keep: np.ndarray) -> np.ndarray:
    # anything below the double-double resolution may come out slightly negative
    return np.where(keep, np.maximum(x.value(), 0.0), 0.0)


def build_mass_tables(state: PcfgState, max_size: int = DEFAULT_MAX_SIZE,
                      track_rules: bool = True, workers: int = 1) -> MassTables:
    """Z and (optionally) every rule's W up to ``max_size`` by transform-domain DP.

    Base case: each literal contributes ``p_atom * p_literal`` at its table.
    For odd ``s >= 3``, every operator and split ``s1 + s2 = s - 1`` adds
    ``p_op * conv_op(Z(s1), Z(s2))``; a rule's weighted mass follows the
    product rule, and an operator rule also collects the mass of the formulas
    it builds at the root.  Independent rule passes may run on ``workers``
    threads.
    """
    sizes = odd_sizes(max_size)
    n = len(sizes)
    language = state.language
    ops = language.ops
    probs = state.probabilities()
    p_op = {op: probs[OP_RULES[op].id] for op in ops}
    sup = supports(language, max_size)

    lit_mass = np.array([probs[ATOM_RULE.id] * probs[r.id] for r in LITERAL_RULES]) * probs[START_RULE.id]
    z1 = np.zeros(NUM_TABLES)
    z1[LITERAL_MASKS] = lit_mass

    Z = [tf.DD.of(z1)]
    Z_hat = []
    roots: list[dict[Op, tf.DD]] = [{}]  # mass of size-s formulas whose root is op
    for k in range(1, n):
        Z_hat.append({op: tf.forward(op, Z[k - 1]) for op in ops})
        total = tf.DD.zeros()
        parts = {}
        for op in ops:
            acc = _split_products(Z_hat, Z_hat, k, op, symmetric=True)
            part = tf.dd_scale(tf.inverse(op, acc), p_op[op])
            parts[op] = part
            total = tf.dd_add(total, part)
        roots.append(parts)
        Z.append(_masked(total, sup["*"][k]))

    Z_final = np.stack([_finish(z, sup["*"][k]) for k, z in enumerate(Z)])
    W: dict[str, np.ndarray] = {}
    if track_rules:
        tracked = [OP_RULES[op].id for op in ops] + [ATOM_RULE.id] + [r.id for r in LITERAL_RULES]

        def rule_pass(rid):
            base = np.zeros(NUM_TABLES)
            if rid == ATOM_RULE.id:
                base = z1.copy()
            elif rid not in {OP_RULES[op].id for op in ops}:
                i = [r.id for r in LITERAL_RULES].index(rid)
                base[LITERAL_MASKS[i]] = lit_mass[i]
            Wr = [tf.DD.of(base)]
            W_hat = []
            U = sup[rid]
            for k in range(1, n):
                W_hat.append({op: tf.forward(op, Wr[k - 1]) for op in ops})
                total = tf.DD.zeros()
                for op in ops:
                    acc = _split_products(W_hat, Z_hat, k, op, symmetric=False)
                    acc = tf.DD(2.0 * acc.hi, 2.0 * acc.lo)
                    total = tf.dd_add(total, tf.dd_scale(tf.inverse(op, acc), p_op[op]))
                    if OP_RULES[op].id == rid:
                        total = tf.dd_add(total, roots[k][op])
                Wr.append(_masked(total, U[k]))
            return rid, np.stack([_finish(w, U[k]) for k, w in enumerate(Wr)])

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                W.update(pool.map(rule_pass, tracked))
        else:
            W.update(map(rule_pass, tracked))
        W[START_RULE.id] = Z_final
    log.debug("built mass tables for %s up to size %d", language.value, max_size)
    return MassTables(state, max_size, Z_final, W, sup["*"])


def _split_products(left_hat, right_hat, k, op, symmetric):
    """Sum over ``k1 + k2 = k - 1`` of ``left_hat[k1] * right_hat[k2]`` in the op domain.

    Rows index sizes ``2k + 1``, so row ``k`` combines rows summing to
    ``k - 1``.  With ``symmetric`` the two factors are the same sequence and
    mirrored splits are folded together.
    """
    acc = tf.DD.zeros()
    for k1 in range(k):
        k2 = k - 1 - k1
        if symmetric and k1 > k2:
            break
        tf.dd_fma(acc, left_hat[k1][op], right_hat[k2][op], 2.0 if symmetric and k1 != k2 else 1.0)
    return acc


# ------------------------------------------------------------- naive oracle

def _shapes(k):
    """Binary tree shapes with ``k`` internal nodes (None is a leaf)."""
    if k == 0:
        yield None
        return
    for left in range(k):
        for a in _shapes(left):
            for b in _shapes(k - 1 - left):
                yield (a, b)


def _evaluate_shape(shape, leaves, ops):
    """Evaluate ``shape`` with its leaves filled from ``leaves`` (rows) and internal
    nodes from ``ops`` (post-order)."""
    leaf_it = iter(leaves)
    op_it = iter(ops)

    def go(node):
        if node is None:
            return next(leaf_it)
        a = go(node[0])
        b = go(node[1])
        return next(op_it).apply(a, b)

    return go(shape)


def naive_enumerate(state: PcfgState, max_size: int = 7) -> MassTables:
    """Mass tables from explicit enumeration of every formula up to ``max_size``.

    Each formula is a tree shape, an operator per internal node and a literal
    per leaf; the literal assignments of a given shape and operator choice are
    evaluated together as numpy arrays.
    """
    sizes = odd_sizes(max_size)
    if max_size > NAIVE_MAX_SIZE:
        raise EnumerationError(
            f"naive enumeration is limited to max_size <= {NAIVE_MAX_SIZE} (asked for {max_size})")
    ops = state.language.ops
    probs = state.probabilities()
    p_lit = np.array([probs[r.id] for r in LITERAL_RULES])
    tracked = [OP_RULES[op].id for op in ops] + [ATOM_RULE.id] + [r.id for r in LITERAL_RULES]
    Z = np.zeros((len(sizes), NUM_TABLES))
    W = {rid: np.zeros_like(Z) for rid in tracked}
    for row, s in enumerate(sizes):
        k = (s - 1) // 2
        n_leaves = k + 1
        idx = np.indices((len(LITERALS),) * n_leaves).reshape(n_leaves, -1)
        leaves = LITERAL_MASKS[idx]
        leaf_prior = np.prod(p_lit[idx], axis=0) * probs[ATOM_RULE.id] ** n_leaves * probs[START_RULE.id]
        lit_counts = [(idx == j).sum(axis=0) for j in range(len(LITERALS))]
        # extended-precision accumulators: a bin may collect millions of terms
        z_acc = np.zeros(NUM_TABLES, dtype=np.longdouble)
        w_acc = {rid: np.zeros(NUM_TABLES, dtype=np.longdouble) for rid in tracked}
        for shape in _shapes(k):
            for op_choice in itertools.product(ops, repeat=k):
                tables = _evaluate_shape(shape, leaves, op_choice)
                prior = (leaf_prior * np.prod([probs[OP_RULES[op].id] for op in op_choice])).astype(np.longdouble)
                np.add.at(z_acc, tables, prior)
                for op in ops:
                    uses = op_choice.count(op)
                    if uses:
                        np.add.at(w_acc[OP_RULES[op].id], tables, uses * prior)
                np.add.at(w_acc[ATOM_RULE.id], tables, n_leaves * prior)
                for j, r in enumerate(LITERAL_RULES):
                    np.add.at(w_acc[r.id], tables, lit_counts[j] * prior)
        Z[row] = z_acc
        for rid in tracked:
            W[rid][row] = w_acc[rid]
    W[START_RULE.id] = Z
    return MassTables(state, max_size, Z, W, Z > 0)


# ------------------------------------------------------------- cache

def cached_mass_tables(state: PcfgState, max_size: int = DEFAULT_MAX_SIZE, cache_dir=None,
                       track_rules: bool = True, workers: int = 1) -> MassTables:
    """``build_mass_tables`` behind an on-disk cache keyed by language, state digest and bound."""
    if cache_dir is None:
        return build_mass_tables(state, max_size, track_rules=track_rules, workers=workers)
    path = Path(cache_dir) / f"{state.language.value}-{state.key()}-M{max_size}{'' if track_rules else '-z'}.npz"
    if path.exists():
        return MassTables.load(path, state)
    tables = build_mass_tables(state, max_size, track_rules=track_rules, workers=workers)
    path.parent.mkdir(parents=True, exist_ok=True)
    tables.save(path)
    return tables
