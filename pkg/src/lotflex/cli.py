"""Command-line interface: ``lotflex <command> [flags]``.

Exit codes: 0 ok, 1 usage error, 2 domain error, 3 selftest failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from . import enumerator, experiment, grammar, learner, transforms
from .logic import FormulaSyntaxError, Op, format_mask, parse_concept

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_SELFTEST = 0, 1, 2, 3

PINNED_DEFAULTS = {"max_size": 19, "alpha": 0.9, "xor_prior": grammar.DEFAULT_XOR_PRIOR}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p, language_default="pxor", model=True, group=True):
    p.add_argument("--language", choices=["p", "pxor"], default=language_default)
    p.add_argument("--max-size", type=int, default=enumerator.DEFAULT_MAX_SIZE)
    p.add_argument("--alpha", type=float, default=learner.DEFAULT_ALPHA)
    p.add_argument("--xor-prior", type=float, default=None,
                   help=f"initial xor parameter (pxor only; default {grammar.DEFAULT_XOR_PRIOR:g})")
    p.add_argument("--grammar", metavar="JSON", help="initial-state config file (overrides --language/--xor-prior)")
    p.add_argument("--paper-defaults", action="store_true",
                   help="pin max size 19, alpha 0.9 and xor prior 1e-4")
    p.add_argument("--cache-dir", help="reuse mass tables stored here")
    if group:
        p.add_argument("--group", choices=list(experiment.GROUPS), default="target")
        p.add_argument("--seed", type=int, default=0)
    if model:
        p.add_argument("--model", choices=["static", "dynamic"], default="dynamic")
        p.add_argument("--weighting", choices=["posterior", "prior"], default="posterior")


def _output(p, formats=("csv", "json"), default="csv"):
    p.add_argument("--out", metavar="PATH", help="write here instead of stdout")
    p.add_argument("--format", choices=list(formats), default=default)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lotflex", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mdl", help="minimum description length of a concept")
    p.add_argument("--concept", required=True, help="hex mask (0x8888) or formula ((x1 & x2))")
    _common(p, language_default="pxor", model=False, group=False)

    p = sub.add_parser("stats", help="posterior summary of one concept under the initial grammar")
    p.add_argument("--concept", required=True)
    _common(p, model=False, group=False)
    _output(p, default="json")

    p = sub.add_parser("simulate", help="run the learner over a group's concept sequence")
    _common(p)
    _output(p)
    p.add_argument("--tidy", metavar="PATH", help="also write the group,concept,... CSV")

    p = sub.add_parser("fit", help="fit the time scale (and optionally alpha) to learning times")
    _common(p, group=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data", required=True, metavar="CSV")
    p.add_argument("--mode", choices=["fixed-alpha", "grid-alpha"], default="fixed-alpha")
    p.add_argument("--per-group-beta", action="store_true", help="fit one time scale per group")
    _output(p, default="json")

    p = sub.add_parser("ttest", help="pooled two-sample t test between groups on one concept")
    p.add_argument("--data", required=True, metavar="CSV")
    p.add_argument("--concept", choices=list(experiment.CONCEPTS), default="C5")

    p = sub.add_parser("sensitivity", help="difficulties at several size bounds")
    _common(p)
    p.add_argument("--sizes", default="17,19,21", help="comma-separated odd bounds")
    _output(p)

    p = sub.add_parser("selftest", help="oracle equivalence and stored minimum-length checks")
    p.add_argument("--oracle-size", type=int, default=enumerator.NAIVE_MAX_SIZE)

    p = sub.add_parser("bench", help="time convolutions and the full table build")
    p.add_argument("--max-size", type=int, default=enumerator.DEFAULT_MAX_SIZE)
    p.add_argument("--language", choices=["p", "pxor"], default="pxor")
    p.add_argument("--naive-rows", type=int, default=1024,
                   help="rows of the naive double loop to time (the rest is extrapolated)")
    return parser


def _apply_pinned_defaults(args):
    if getattr(args, "paper_defaults", False):
        args.max_size = PINNED_DEFAULTS["max_size"]
        args.alpha = PINNED_DEFAULTS["alpha"]
        if args.language == "pxor" and not args.grammar:
            args.xor_prior = PINNED_DEFAULTS["xor_prior"]


def _initial_state(args) -> grammar.PcfgState:
    if args.grammar:
        return grammar.load_state(args.grammar)
    return grammar.default_initial_state(args.language, args.xor_prior)


def _builder(args):
    if args.cache_dir:
        return lambda state, m: enumerator.cached_mass_tables(state, m, cache_dir=args.cache_dir)
    return enumerator.build_mass_tables


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_group(args, group, model=None, max_size=None):
    state = _initial_state(args)
    labels = experiment.sequence_labels(group)
    seq = experiment.build_sequence(group, args.seed)
    return learner.simulate(seq, state, model or args.model, max_size or args.max_size, args.alpha,
                            labels=labels, weighting=args.weighting, builder=_builder(args))


# ------------------------------------------------------------------ commands

def cmd_mdl(args) -> int:
    concept = parse_concept(args.concept)
    language = grammar.load_state(args.grammar).language if args.grammar else args.language
    value = learner.mdl(concept, language, args.max_size)
    if value is None:
        print(f"not expressible <= {args.max_size}")
        return EXIT_DOMAIN
    print(value)
    return EXIT_OK


def cmd_stats(args) -> int:
    concept = parse_concept(args.concept)
    state = _initial_state(args)
    tables = _builder(args)(state, args.max_size)
    stats = learner.concept_stats(concept, state, args.max_size, args.alpha, tables=tables)
    if args.format == "json":
        _emit(json.dumps(stats.to_dict(), indent=2) + "\n", args.out)
    else:
        _emit(f"concept,E,N,d\n{format_mask(concept)},{stats.expected_length!r},{stats.n_term},"
              f"{stats.difficulty!r}\n", args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    trace = _run_group(args, args.group)
    _emit(trace.to_json() if args.format == "json" else trace.to_csv(), args.out)
    if args.tidy:
        _emit(experiment.tidy_csv(experiment.tidy_rows({args.group: trace})), args.tidy)
    return EXIT_OK


def cmd_fit(args) -> int:
    times = experiment.ingest_times(args.data)
    for lineno, reason in times.rejected:
        logging.warning("line %d rejected: %s", lineno, reason)
    counts = times.counts_by_group()
    logging.info("rows per group: %s", counts)
    traces = {g: _run_group(args, g) for g, n in counts.items() if n}
    fit = experiment.fit_scale(traces, times, mode=args.mode, alpha=args.alpha,
                               shared_beta=not args.per_group_beta)
    if args.format == "json":
        report = fit.to_dict()
        report["rows_per_group"] = counts
        report["rejected"] = [{"line": ln, "reason": r} for ln, r in times.rejected]
        _emit(json.dumps(report, indent=2) + "\n", args.out)
    else:
        _emit(experiment.tidy_csv(experiment.tidy_rows(traces, times, fit)), args.out)
    return EXIT_OK


def cmd_ttest(args) -> int:
    times = experiment.ingest_times(args.data)
    res = experiment.compare_groups(times, args.concept)
    print(f"{args.concept}: t({res.df}) = {res.t:.4f}, p = {res.p:.4g}")
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    try:
        sizes = [int(s) for s in args.sizes.split(",")]
    except ValueError:
        raise UsageError(f"--sizes must be comma-separated integers, got {args.sizes!r}") from None
    traces = {m: _run_group(args, args.group, max_size=m) for m in sizes}
    labels = experiment.sequence_labels(args.group)
    if args.format == "json":
        payload = {str(m): dict(zip(labels, t.difficulties)) for m, t in traces.items()}
        _emit(json.dumps(payload, indent=2) + "\n", args.out)
    else:
        lines = ["concept," + ",".join(f"d_M{m}" for m in sizes)]
        for i, label in enumerate(labels):
            lines.append(label + "," + ",".join(repr(traces[m].difficulties[i]) for m in sizes))
        _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def run_selftest(oracle_size: int = enumerator.NAIVE_MAX_SIZE, out=None) -> bool:
    out = sys.stdout if out is None else out
    ok = True

    def report(name, passed, detail=""):
        nonlocal ok
        ok &= bool(passed)
        print(f"[{'PASS' if passed else 'FAIL'}] {name}{': ' + detail if detail else ''}", file=out)

    rng = np.random.default_rng(12345)
    for op in Op:
        worst = 0.0
        for _ in range(10):
            a = np.zeros(1 << 16)
            b = np.zeros(1 << 16)
            a[rng.integers(0, 1 << 16, 200)] = rng.random(200)
            b[rng.integers(0, 1 << 16, 200)] = rng.random(200)
            ref = transforms.naive_convolve(a, b, op)
            fast = transforms.convolve(a, b, op)
            nz = ref > 0
            worst = max(worst, float(np.max(np.abs(fast[nz] - ref[nz]) / ref[nz])), float(np.abs(fast[~nz]).max()))
        report(f"{op.name} convolution transform vs direct", worst < 1e-10, f"max rel err {worst:.2e}")

    for lang in grammar.Language:
        state = grammar.default_initial_state(lang)
        fast = enumerator.build_mass_tables(state, oracle_size)
        slow = enumerator.naive_enumerate(state, oracle_size)
        worst = 0.0
        same_support = True
        for rid, ref in {"*": slow.Z, **slow.W}.items():
            got = fast.Z if rid == "*" else fast.W[rid]
            nz = ref > 0
            same_support &= bool(np.array_equal(got > 0, nz))
            worst = max(worst, float(np.max(np.abs(got[nz] - ref[nz]) / ref[nz])))
        report(f"mass tables vs enumeration ({lang.value}, M={oracle_size})",
               same_support and worst < 1e-12, f"max rel err {worst:.2e}, supports equal: {same_support}")

    for label, spec in experiment.CONCEPTS.items():
        concept = spec.instantiate({"i": 1, "j": 2, "k": 3, "l": 4})
        got = (learner.mdl(concept, "pxor", 19), learner.mdl(concept, "p", 19))
        want = (spec.mdl_pxor, spec.mdl_p)
        report(f"mdl {label}", got == want, f"(pxor, p) = {got}, expected {want}")
    return ok


def cmd_selftest(args) -> int:
    return EXIT_OK if run_selftest(args.oracle_size) else EXIT_SELFTEST


def cmd_bench(args) -> int:
    rng = np.random.default_rng(0)
    a = rng.random(1 << 16)
    b = rng.random(1 << 16)
    rows = max(1, min(args.naive_rows, a.size))
    for op in Op:
        t0 = time.perf_counter()
        transforms.convolve(a, b, op)
        t_fast = time.perf_counter() - t0
        head = np.zeros_like(a)
        head[:rows] = a[:rows]
        t0 = time.perf_counter()
        transforms.naive_convolve(head, b, op)
        t_naive = (time.perf_counter() - t0) * a.size / rows
        print(f"{op.name:3s} convolution: transform {t_fast * 1e3:8.1f} ms, "
              f"naive {t_naive:8.1f} s (extrapolated from {rows} rows), speedup {t_naive / t_fast:,.0f}x")
    state = grammar.default_initial_state(args.language)
    enumerator.supports(state.language, args.max_size)
    t0 = time.perf_counter()
    tables = enumerator.build_mass_tables(state, args.max_size)
    t_build = time.perf_counter() - t0
    n_conv = sum(len(state.language.ops) * len(tables.W) * (k + 1) for k in range(len(tables.sizes) - 1))
    print(f"mass tables {args.language} M={args.max_size}: {t_build:.2f} s, {len(tables.W)} W tables, "
          f"~{n_conv / t_build:,.0f} table convolutions/s")
    return EXIT_OK


COMMANDS = {
    "mdl": cmd_mdl,
    "stats": cmd_stats,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "ttest": cmd_ttest,
    "sensitivity": cmd_sensitivity,
    "selftest": cmd_selftest,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    _apply_pinned_defaults(args)
    if getattr(args, "max_size", 1) % 2 == 0 or getattr(args, "max_size", 1) < 1:
        parser.error(f"--max-size must be odd and positive, got {args.max_size}")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"lotflex: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormulaSyntaxError, grammar.GrammarError, enumerator.EnumerationError,
            learner.InexpressibleError, experiment.DataError, experiment.FitError, OSError) as exc:
        print(f"lotflex: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
