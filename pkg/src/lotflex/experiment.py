"""Concept sequences of the two experimental groups, learning-time data, and model fits."""
from __future__ import annotations

import csv
import io
import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats as sps

from .learner import DEFAULT_ALPHA, SimulationTrace
from .logic import evaluate, parse

GROUPS = ("target", "control")


@dataclass(frozen=True)
class ConceptSpec:
    label: str
    template: str  # formula text with {i} {j} {k} {l} placeholders
    mdl_pxor: int
    mdl_p: int

    def instantiate(self, assignment: Mapping[str, int]) -> int:
        return evaluate(parse(self.formula_text(assignment)))

    def formula_text(self, assignment: Mapping[str, int]) -> str:
        return self.template.format(**assignment)


CONCEPTS = {
    c.label: c
    for c in (
        ConceptSpec("C1", "x{i}", 1, 1),
        ConceptSpec("C2x", "(x{i} ^ x{j})", 3, 7),
        ConceptSpec("C3x", "((x{i} ^ x{j}) ^ x{k})", 5, 19),
        ConceptSpec("C4x", "(x{k} ^ x{l})", 3, 7),
        ConceptSpec("C2c", "(x{i} | x{j})", 3, 3),
        ConceptSpec("C3c", "(x{i} | (x{j} & x{k}))", 5, 5),
        ConceptSpec("C4c", "(x{k} | x{l})", 3, 3),
        ConceptSpec("C5", "(x{i} & (x{j} ^ x{k}))", 5, 9),
        ConceptSpec("C6", "(x{i} & (x{j} | x{k}))", 5, 5),
    )
}

SEQUENCES = {
    "target": ("C1", "C2x", "C3x", "C4x", "C5", "C6"),
    "control": ("C1", "C2c", "C3c", "C4c", "C5", "C6"),
}
TEST_CONCEPTS = ("C5", "C6")


class DataError(ValueError):
    pass


def _check_group(group: str) -> str:
    if group not in SEQUENCES:
        raise DataError(f"unknown group {group!r} (expected one of {', '.join(GROUPS)})")
    return group


def sequence_labels(group: str) -> tuple[str, ...]:
    return SEQUENCES[_check_group(group)]


def random_assignment(rng: random.Random) -> dict[str, int]:
    return dict(zip("ijkl", rng.sample(range(1, 5), 4)))


def build_sequence(group: str, seed: int = 0) -> list[int]:
    """The group's six concepts, each with its own random injective variable assignment."""
    rng = random.Random(seed)
    return [CONCEPTS[label].instantiate(random_assignment(rng)) for label in sequence_labels(group)]


# ------------------------------------------------------------------ data

CSV_HEADER = ("participant", "group", "trial", "concept", "time_s")


@dataclass(frozen=True)
class TimeRow:
    participant: str
    group: str
    trial: int
    concept: str
    time_s: float


@dataclass
class ObservedTimes:
    rows: list[TimeRow]
    rejected: list[tuple[int, str]] = field(default_factory=list)

    def counts_by_group(self) -> dict[str, int]:
        out = {g: 0 for g in GROUPS}
        for r in self.rows:
            out[r.group] += 1
        return out

    def times(self, group: str, concept: str) -> list[float]:
        return [r.time_s for r in self.rows if r.group == group and r.concept == concept]

    def summary(self) -> dict[tuple[str, str], tuple[float, float, int]]:
        """(group, concept) -> (mean, standard error of the mean, n)."""
        buckets = defaultdict(list)
        for r in self.rows:
            buckets[r.group, r.concept].append(r.time_s)
        out = {}
        for key, xs in buckets.items():
            arr = np.asarray(xs)
            sem = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else float("nan")
            out[key] = (float(arr.mean()), sem, int(arr.size))
        return out


def ingest_times(source) -> ObservedTimes:
    """Read learning times from a canonical CSV (path, file object or text).

    Malformed rows, unknown labels and nonpositive times are collected in
    ``rejected`` as ``(line number, reason)`` pairs; a duplicated
    (participant, trial) key or a participant appearing in both groups is an
    error.
    """
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, str) and "\n" in source:
        text = source
    else:
        with open(source, newline="") as fh:
            text = fh.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("empty learning-time file") from None
    if tuple(header) != CSV_HEADER:
        raise DataError(f"expected header {','.join(CSV_HEADER)}, got {','.join(header)}")

    rows, rejected = [], []
    seen: dict[tuple[str, int], int] = {}
    group_of: dict[str, str] = {}
    for lineno, fields in enumerate(reader, start=2):
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != len(CSV_HEADER):
            rejected.append((lineno, f"expected {len(CSV_HEADER)} fields, got {len(fields)}"))
            continue
        participant, group, trial, concept, time_s = (f.strip() for f in fields)
        if group not in SEQUENCES:
            rejected.append((lineno, f"unknown group {group!r}"))
            continue
        if concept not in CONCEPTS:
            rejected.append((lineno, f"unknown concept label {concept!r}"))
            continue
        try:
            trial_i = int(trial)
        except ValueError:
            rejected.append((lineno, f"trial {trial!r} is not an integer"))
            continue
        if not 1 <= trial_i <= len(SEQUENCES[group]):
            rejected.append((lineno, f"trial {trial_i} out of range 1..{len(SEQUENCES[group])}"))
            continue
        if SEQUENCES[group][trial_i - 1] != concept:
            rejected.append((lineno, f"{group} trial {trial_i} is {SEQUENCES[group][trial_i - 1]}, not {concept}"))
            continue
        try:
            t = float(time_s)
        except ValueError:
            rejected.append((lineno, f"time_s {time_s!r} is not a number"))
            continue
        if not (t > 0 and math.isfinite(t)):
            rejected.append((lineno, f"time_s must be positive, got {time_s}"))
            continue
        key = (participant, trial_i)
        if key in seen:
            raise DataError(f"duplicate (participant, trial) = ({participant}, {trial_i}) "
                            f"on lines {seen[key]} and {lineno}")
        if group_of.setdefault(participant, group) != group:
            raise DataError(f"participant {participant} appears in both groups (line {lineno})")
        seen[key] = lineno
        rows.append(TimeRow(participant, group, trial_i, concept, t))
    return ObservedTimes(rows, rejected)


def convert_columns(source, column_map: Mapping[str, str], group_map: Mapping[str, str] | None = None,
                    concept_map: Mapping[str, str] | None = None) -> str:
    """Rewrite a CSV with other headers into the canonical schema.

    ``column_map`` maps each canonical column to the source file's header;
    ``group_map``/``concept_map`` translate cell values if the source labels them differently.
    """
    missing = set(CSV_HEADER) - set(column_map)
    if missing:
        raise DataError(f"column_map lacks {sorted(missing)}")
    if hasattr(source, "read"):
        reader = csv.DictReader(source)
        records = list(reader)
    else:
        with open(source, newline="") as fh:
            records = list(csv.DictReader(fh))
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for rec in records:
        row = {c: rec[column_map[c]] for c in CSV_HEADER}
        if group_map:
            row["group"] = group_map.get(row["group"], row["group"])
        if concept_map:
            row["concept"] = concept_map.get(row["concept"], row["concept"])
        writer.writerow([row[c] for c in CSV_HEADER])
    return out.getvalue()


# ------------------------------------------------------------------ fitting

class FitError(ValueError):
    pass


@dataclass
class GroupFit:
    group: str
    concepts: list[str]
    observed: list[float]
    predicted: list[float]
    difficulty: list[float]
    r2: float

    @property
    def residuals(self) -> list[float]:
        return [o - p for o, p in zip(self.observed, self.predicted)]


@dataclass
class FitResult:
    alpha: float
    beta: dict[str, float]
    groups: dict[str, GroupFit]
    sse: float

    @property
    def r2(self) -> dict[str, float]:
        return {g: f.r2 for g, f in self.groups.items()}

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "sse": self.sse,
            "groups": {
                g: {"r2": f.r2, "concepts": f.concepts, "observed_mean": f.observed,
                    "predicted_time": f.predicted, "predicted_difficulty": f.difficulty,
                    "residuals": f.residuals}
                for g, f in self.groups.items()
            },
        }


def r_squared(observed: Sequence[float], predicted: Sequence[float]) -> float:
    y = np.asarray(observed, dtype=float)
    f = np.asarray(predicted, dtype=float)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0:
        return float("nan")
    return 1.0 - float(((y - f) ** 2).sum()) / ss_tot


def _design(traces: Mapping[str, SimulationTrace], means: Mapping[str, Mapping[str, float]]):
    data = {}
    for group, by_concept in means.items():
        if group not in traces:
            raise FitError(f"no simulation trace for group {group!r}")
        labels, ys, Es, Ns = [], [], [], []
        for label, y in by_concept.items():
            try:
                rec = traces[group].by_label(label)
            except KeyError:
                raise FitError(f"trace for {group} does not cover concept {label}") from None
            labels.append(label)
            ys.append(y)
            Es.append(rec.stats.expected_length)
            Ns.append(rec.stats.n_term)
        data[group] = (labels, np.array(ys), np.array(Es), np.array(Ns, dtype=float))
    return data


def _fit_at(data, alpha: float, shared_beta: bool):
    betas = {}
    if shared_beta:
        num = sum(float(y @ (E + alpha * N)) for _, y, E, N in data.values())
        den = sum(float((E + alpha * N) @ (E + alpha * N)) for _, y, E, N in data.values())
        b = num / den
        betas = {g: b for g in data}
    else:
        for g, (_, y, E, N) in data.items():
            d = E + alpha * N
            betas[g] = float(y @ d) / float(d @ d)
    sse = sum(float(((y - betas[g] * (E + alpha * N)) ** 2).sum()) for g, (_, y, E, N) in data.items())
    return betas, sse


def fit_scale(traces: Mapping[str, SimulationTrace], times: ObservedTimes | Mapping[str, Mapping[str, float]],
              mode: str = "fixed-alpha", alpha: float = DEFAULT_ALPHA, shared_beta: bool = True,
              alpha_grid: Iterable[float] | None = None) -> FitResult:
    """Least-squares fit of ``time = beta * (E + alpha * N)`` to mean learning times.

    ``times`` is either ingested data or ``{group: {concept: mean time}}``.
    ``mode="grid-alpha"`` also picks alpha on a grid (default 0..3 step 0.01)
    by minimum squared error, which is the Gaussian maximum likelihood choice.
    """
    if isinstance(times, ObservedTimes):
        means = defaultdict(dict)
        for (g, c), (m, _, _) in times.summary().items():
            means[g][c] = m
    else:
        means = {g: dict(v) for g, v in times.items()}
    data = _design(traces, means)
    n_concepts = sum(len(labels) for labels, *_ in data.values())
    if n_concepts < 2 or any(len(labels) < 2 for labels, *_ in data.values()):
        raise FitError("need at least 2 distinct concepts per group to fit")

    if mode == "fixed-alpha":
        best_alpha = float(alpha)
    elif mode == "grid-alpha":
        grid = np.round(np.arange(0, 301) * 0.01, 2) if alpha_grid is None else list(alpha_grid)
        best_alpha = min(grid, key=lambda a: _fit_at(data, a, shared_beta)[1])
        best_alpha = float(best_alpha)
    else:
        raise FitError(f"unknown fit mode {mode!r}")
    betas, sse = _fit_at(data, best_alpha, shared_beta)
    groups = {}
    for g, (labels, y, E, N) in data.items():
        d = E + best_alpha * N
        pred = betas[g] * d
        groups[g] = GroupFit(g, labels, y.tolist(), pred.tolist(), d.tolist(), r_squared(y, pred))
    return FitResult(best_alpha, betas, groups, sse)


# ------------------------------------------------------------------ statistics

@dataclass(frozen=True)
class TTest:
    t: float
    df: int
    p: float


def two_sample_t(a: Sequence[float], b: Sequence[float]) -> TTest:
    """Pooled-variance two-sample t test, two-sided."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise DataError(f"need at least 2 observations per group, got {a.size} and {b.size}")
    df = a.size + b.size - 2
    pooled = (((a - a.mean()) ** 2).sum() + ((b - b.mean()) ** 2).sum()) / df
    se = math.sqrt(pooled * (1 / a.size + 1 / b.size))
    diff = a.mean() - b.mean()
    if se == 0:
        t = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    else:
        t = float(diff / se)
    p = float(2 * sps.t.sf(abs(t), df))
    return TTest(t, df, p)


def compare_groups(times: ObservedTimes, concept: str, a: str = "control", b: str = "target") -> TTest:
    return two_sample_t(times.times(a, concept), times.times(b, concept))


# ------------------------------------------------------------------ reports

TIDY_HEADER = ("group", "concept", "observed_mean", "observed_sem", "predicted_difficulty", "predicted_time")


def tidy_rows(traces: Mapping[str, SimulationTrace], times: ObservedTimes | None = None,
              fit: FitResult | None = None) -> list[dict]:
    summary = times.summary() if times is not None else {}
    rows = []
    for group, trace in traces.items():
        for rec in trace.trials:
            mean, sem, _ = summary.get((group, rec.label), (None, None, 0))
            beta = fit.beta.get(group) if fit is not None else None
            d = rec.stats.difficulty if fit is None else rec.stats.expected_length + fit.alpha * rec.stats.n_term
            rows.append({
                "group": group,
                "concept": rec.label,
                "observed_mean": mean,
                "observed_sem": sem,
                "predicted_difficulty": d,
                "predicted_time": beta * d if beta is not None else None,
            })
    return rows


def tidy_csv(rows: Sequence[Mapping]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TIDY_HEADER)
    for row in rows:
        writer.writerow(["" if row[c] is None else (repr(row[c]) if isinstance(row[c], float) else row[c])
                         for c in TIDY_HEADER])
    return buf.getvalue()
