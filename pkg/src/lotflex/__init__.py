"""Bayesian concept learning over Boolean formulas with trial-by-trial grammar updates."""
from .enumerator import MassTables, build_mass_tables, naive_enumerate, supports
from .experiment import (CONCEPTS, SEQUENCES, build_sequence, fit_scale, ingest_times,
                         sequence_labels, two_sample_t)
from .grammar import (Language, PcfgState, count_rule_uses, default_initial_state,
                      prior_probability, rule_probability)
from .learner import ConceptStats, SimulationTrace, concept_stats, dirichlet_update, mdl, simulate
from .logic import Binary, Literal, Op, cardinality_term, evaluate, parse, relabel, size, to_text
from .transforms import convolve

__version__ = "0.1.0"

__all__ = [
    "Binary", "CONCEPTS", "ConceptStats", "Language", "Literal", "MassTables", "Op", "PcfgState",
    "SEQUENCES", "SimulationTrace", "build_mass_tables", "build_sequence", "cardinality_term",
    "concept_stats", "convolve", "count_rule_uses", "default_initial_state", "dirichlet_update",
    "evaluate", "fit_scale", "ingest_times", "mdl", "naive_enumerate", "parse", "prior_probability",
    "relabel", "rule_probability", "sequence_labels", "simulate", "size", "supports", "to_text",
    "two_sample_t",
]
