"""Posterior over compatible formulas, difficulty, and grammar updates across trials."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .enumerator import DEFAULT_MAX_SIZE, MassTables, build_mass_tables, odd_sizes, supports
from .grammar import Language, PcfgState
from .logic import cardinality_term, check_mask, format_mask

DEFAULT_ALPHA = 0.9

TableBuilder = Callable[[PcfgState, int], MassTables]


class InexpressibleError(ValueError):
    def __init__(self, concept: int, max_size: int, trial: int | None = None):
        where = f" (trial {trial})" if trial is not None else ""
        super().__init__(f"concept {format_mask(concept)} is inexpressible within size {max_size}{where}")
        self.concept = concept
        self.max_size = max_size
        self.trial = trial


def mdl(concept: int, language, max_size: int = DEFAULT_MAX_SIZE) -> int | None:
    """Size of the shortest formula of ``language`` denoting ``concept``, or None beyond ``max_size``."""
    concept = check_mask(concept)
    reach = supports(Language.parse(language), max_size)["*"][:, concept]
    hits = np.flatnonzero(reach)
    return int(2 * hits[0] + 1) if hits.size else None


@dataclass
class ConceptStats:
    concept: int
    mass_by_size: dict[int, float]
    total_mass: float
    expected_length: float
    expected_rule_counts: dict[str, float]
    n_term: int
    difficulty: float
    alpha: float

    @property
    def posterior_by_size(self) -> dict[int, float]:
        return {s: m / self.total_mass for s, m in self.mass_by_size.items()}

    def to_dict(self) -> dict:
        return {
            "concept": format_mask(self.concept),
            "E": self.expected_length,
            "N": self.n_term,
            "d": self.difficulty,
            "alpha": self.alpha,
            "total_mass": self.total_mass,
            "posterior_by_size": {str(s): q for s, q in self.posterior_by_size.items()},
            "expected_rule_counts": self.expected_rule_counts,
        }


def concept_stats(concept: int, state: PcfgState, max_size: int = DEFAULT_MAX_SIZE,
                  alpha: float = DEFAULT_ALPHA, tables: MassTables | None = None) -> ConceptStats:
    """Posterior summary of the formulas compatible with ``concept``.

    The likelihood is 1 on formulas whose table equals the concept and 0
    elsewhere, so the posterior is the prior restricted to that table entry.
    """
    concept = check_mask(concept)
    if tables is None:
        tables = build_mass_tables(state, max_size)
    elif tables.state != state or tables.max_size != max_size:
        raise ValueError("mass tables were built for a different state or size bound")
    by_size = tables.mass_by_size(concept)
    total = sum(by_size.values())
    if not total > 0:
        raise InexpressibleError(concept, max_size)
    expected = sum(s * m for s, m in by_size.items()) / total
    counts = {rid: m / total for rid, m in tables.rule_mass(concept).items()}
    n = cardinality_term(concept)
    return ConceptStats(concept, by_size, total, expected, counts, n, expected + alpha * n, alpha)


def difficulty(expected_length: float, n_term: int, alpha: float = DEFAULT_ALPHA) -> float:
    return expected_length + alpha * n_term


def dirichlet_update(state: PcfgState, concept: int, max_size: int = DEFAULT_MAX_SIZE,
                     weighting: str = "posterior", tables: MassTables | None = None) -> PcfgState:
    """Add each rule's expected use count over the compatible formulas to its parameter.

    ``weighting="posterior"`` normalises the formula weights over the
    compatible set; ``"prior"`` uses the raw prior weights instead.
    """
    concept = check_mask(concept)
    if tables is None:
        tables = build_mass_tables(state, max_size)
    total = float(tables.Z[:, concept].sum())
    if not total > 0:
        raise InexpressibleError(concept, max_size)
    mass = tables.rule_mass(concept)
    if weighting == "posterior":
        increments = {rid: m / total for rid, m in mass.items()}
    elif weighting == "prior":
        increments = mass
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    return state.with_increments(increments)


@dataclass
class TrialRecord:
    trial: int
    label: str
    stats: ConceptStats
    state_before: PcfgState
    state_after: PcfgState


@dataclass
class SimulationTrace:
    model: str
    max_size: int
    alpha: float
    trials: list[TrialRecord] = field(default_factory=list)

    @property
    def difficulties(self) -> list[float]:
        return [t.stats.difficulty for t in self.trials]

    def by_label(self, label: str) -> TrialRecord:
        for t in self.trials:
            if t.label == label:
                return t
        raise KeyError(label)

    def param_trajectory(self, rule_id: str) -> list[float]:
        """Parameter of ``rule_id`` before trial 1, then after each trial."""
        if not self.trials:
            return []
        return [self.trials[0].state_before.param(rule_id)] + [t.state_after.param(rule_id) for t in self.trials]

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "max_size": self.max_size,
            "alpha": self.alpha,
            "trials": [
                {
                    "trial": t.trial,
                    "label": t.label,
                    "mask": format_mask(t.stats.concept),
                    "E": t.stats.expected_length,
                    "N": t.stats.n_term,
                    "d": t.stats.difficulty,
                    "D_before": t.state_before.D,
                    "D_after": t.state_after.D,
                }
                for t in self.trials
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        rule_ids = list(self.trials[0].state_before.D) if self.trials else []
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["trial", "label", "mask", "E", "N", "d"]
                        + [f"D_before_{r}" for r in rule_ids] + [f"D_after_{r}" for r in rule_ids])
        for t in self.trials:
            writer.writerow(
                [t.trial, t.label, format_mask(t.stats.concept), repr(t.stats.expected_length),
                 t.stats.n_term, repr(t.stats.difficulty)]
                + [repr(t.state_before.param(r)) for r in rule_ids]
                + [repr(t.state_after.param(r)) for r in rule_ids])
        return buf.getvalue()


def simulate(sequence: Sequence[int], state0: PcfgState, model: str = "dynamic",
             max_size: int = DEFAULT_MAX_SIZE, alpha: float = DEFAULT_ALPHA,
             labels: Sequence[str] | None = None, weighting: str = "posterior",
             builder: TableBuilder = build_mass_tables) -> SimulationTrace:
    """Run the static (fixed grammar) or dynamic (updated after each concept) learner."""
    if model not in ("static", "dynamic"):
        raise ValueError(f"model must be 'static' or 'dynamic', got {model!r}")
    odd_sizes(max_size)
    labels = list(labels) if labels is not None else [f"t{i}" for i in range(1, len(sequence) + 1)]
    if len(labels) != len(sequence):
        raise ValueError("labels and sequence differ in length")
    trace = SimulationTrace(model, max_size, alpha)
    state = state0
    tables = builder(state, max_size) if model == "static" else None
    for i, (concept, label) in enumerate(zip(sequence, labels), start=1):
        if model == "dynamic":
            tables = builder(state, max_size)
        try:
            stats = concept_stats(concept, state, max_size, alpha, tables=tables)
        except InexpressibleError as exc:
            raise InexpressibleError(exc.concept, max_size, trial=i) from None
        after = dirichlet_update(state, concept, max_size, weighting, tables) if model == "dynamic" else state
        trace.trials.append(TrialRecord(i, label, stats, state, after))
        state = after
    return trace
