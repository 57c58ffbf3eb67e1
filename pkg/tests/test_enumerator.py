import itertools
import math

import numpy as np
import pytest

from lotflex.enumerator import (
    EnumerationError, MassTables, build_mass_tables, cached_mass_tables, naive_enumerate, odd_sizes, supports,
)
from lotflex.grammar import Language, LITERAL_RULES, PcfgState, count_rule_uses, default_initial_state, iter_formulas, prior_probability
from lotflex.logic import evaluate, relabel_index

PERMS = [(2, 1, 3, 4), (4, 3, 2, 1), (2, 3, 4, 1)]


def brute_tables(state, max_size):
    """Formula-by-formula sums through the grammar module's own prior."""
    sizes = odd_sizes(max_size)
    Z = np.zeros((len(sizes), 1 << 16))
    W = {rid: np.zeros_like(Z) for rid in state.D}
    for k, s in enumerate(sizes):
        for phi in iter_formulas(state.language, (s + 1) // 2):
            t = evaluate(phi)
            p = prior_probability(phi, state)
            Z[k, t] += p
            for rid, n in count_rule_uses(phi).items():
                W[rid][k, t] += n * p
    return Z, W


@pytest.mark.parametrize("language", list(Language))
def test_matches_formula_by_formula_sums(language):
    state = PcfgState(language, tuple(0.5 + 0.25 * i for i in range(len(default_initial_state(language).D))))
    Z, W = brute_tables(state, 5)
    fast = build_mass_tables(state, 5)
    np.testing.assert_allclose(fast.Z, Z, rtol=1e-12, atol=0)
    for rid in W:
        np.testing.assert_allclose(fast.W[rid], W[rid], rtol=1e-12, atol=0)


def test_hand_examples(p0):
    t = build_mass_tables(p0, 3)
    p_atom, p_and, p_lit = 1 / 3, 1 / 3, 1 / 8
    assert math.isclose(t.z(1)[0xAAAA], p_atom * p_lit, rel_tol=1e-15)
    # the empty concept at size 3: (l & !l) for 8 ordered literal pairs
    assert math.isclose(t.z(3)[0x0000], 8 * p_and * (p_atom * p_lit) ** 2, rel_tol=1e-14)
    assert t.z(1)[0x8888] == 0 and t.z(3)[0x8888] > 0


def test_even_sizes_and_start_rule(tables19):
    assert np.all(tables19.z(4) == 0)
    assert np.all(tables19.w("and", 10) == 0)
    assert tables19.W["start"] is tables19.Z
    with pytest.raises(EnumerationError):
        tables19.z(21)
    with pytest.raises(EnumerationError):
        tables19.w("nope", 3)


def test_language_p_has_no_xor(tables19_p):
    assert "xor" not in tables19_p.W
    assert len(tables19_p.W) == 12


def rule_count_identity_error(tables):
    worst = 0.0
    for k, s in enumerate(tables.sizes):
        total = sum(W[k] for W in tables.W.values())
        z = tables.Z[k]
        nz = z > 0
        assert np.all(total[~nz] == 0)
        worst = max(worst, float(np.max(np.abs(total[nz] - z[nz] * 3 * (s + 1) / 2) / (z[nz] * 3 * (s + 1) / 2))))
    return worst


def test_rule_count_identity_small(oracle9):
    for fast, _ in oracle9.values():
        assert rule_count_identity_error(fast) < 1e-12


def test_rule_count_identity_large(tables19, tables19_p):
    # entries span about 21 decades at M=19; per-entry agreement is still far inside 1e-10
    assert rule_count_identity_error(tables19) < 1e-10
    assert rule_count_identity_error(tables19_p) < 1e-10


def relabel_tables(tables, perm):
    idx = relabel_index(perm)
    Z = np.zeros_like(tables.Z)
    Z[:, idx] = tables.Z
    W = {}
    for rid, arr in tables.W.items():
        out = np.zeros_like(arr)
        out[:, idx] = arr
        W[rid] = out
    # literal rules move with their variables
    moved = dict(W)
    for r in LITERAL_RULES:
        lit = r.literal
        target = next(q for q in LITERAL_RULES if q.literal.var == perm[lit.var - 1] and q.literal.negated == lit.negated)
        moved[target.id] = W[r.id]
    return Z, moved


def max_rel(a, b):
    nz = b != 0
    assert np.all(a[~nz] == 0)
    return float(np.max(np.abs(a[nz] - b[nz]) / np.abs(b[nz])))


@pytest.mark.parametrize("perm", PERMS)
def test_permutation_equivariance_small(perm, oracle9):
    for fast, _ in oracle9.values():
        Z, W = relabel_tables(fast, perm)
        assert max_rel(Z, fast.Z) < 1e-12
        for rid in W:
            assert max_rel(W[rid], fast.W[rid]) < 1e-12


@pytest.mark.parametrize("perm", PERMS)
def test_permutation_equivariance_large(perm, tables19):
    Z, W = relabel_tables(tables19, perm)
    assert max_rel(Z, tables19.Z) < 1e-10
    for rid in ("x1", "not_x3", "xor"):
        assert max_rel(W[rid], tables19.W[rid]) < 1e-10


def test_support_grows_with_bound():
    prev = None
    for M in range(1, 20, 2):
        reach = supports("pxor", M)["*"].any(axis=0)
        if prev is not None:
            assert np.all(reach >= prev)
        prev = reach
    assert prev.all()
    # P needs more than 19 symbols for 4-variable parity
    assert not supports("p", 19)["*"].any(axis=0).all()


def test_supports_match_mass(tables19):
    S = supports("pxor", 19)
    assert np.array_equal(S["*"], tables19.Z > 0)
    for rid in ("and", "xor", "x2", "atom"):
        assert np.array_equal(S[rid], tables19.W[rid] > 0)


def test_rule_free_build_and_workers(pxor0):
    a = build_mass_tables(pxor0, 9, track_rules=False)
    b = build_mass_tables(pxor0, 9, workers=2)
    assert a.W == {}
    np.testing.assert_array_equal(a.Z, b.Z)
    c = build_mass_tables(pxor0, 9)
    for rid in c.W:
        np.testing.assert_array_equal(b.W[rid], c.W[rid])


def test_total_generation_mass(tables19):
    total = tables19.total_generation_mass()
    assert 0 < total <= 1


def test_save_load_and_cache(tmp_path, pxor0, p0):
    t = build_mass_tables(pxor0, 7)
    t.save(tmp_path / "t.npz")
    back = MassTables.load(tmp_path / "t.npz", pxor0)
    np.testing.assert_array_equal(back.Z, t.Z)
    for rid in t.W:
        np.testing.assert_array_equal(back.W[rid], t.W[rid])
    with pytest.raises(EnumerationError):
        MassTables.load(tmp_path / "t.npz", pxor0.with_increments({"xor": 1.0}))

    first = cached_mass_tables(p0, 7, tmp_path / "cache")
    assert len(list((tmp_path / "cache").glob("*.npz"))) == 1
    second = cached_mass_tables(p0, 7, tmp_path / "cache")
    np.testing.assert_array_equal(first.Z, second.Z)


def test_bounds_validation(pxor0):
    with pytest.raises(EnumerationError):
        odd_sizes(8)
    with pytest.raises(EnumerationError):
        odd_sizes(0)
    with pytest.raises(EnumerationError):
        naive_enumerate(pxor0, 11)
    with pytest.raises(EnumerationError):
        build_mass_tables(pxor0, 6)


def test_reachable_and_mass_by_size(tables19):
    xor = evaluate_text("(x1 ^ x2)")
    r = tables19.reachable(xor)
    assert not r[0] and r[1]
    m = tables19.mass_by_size(xor)
    assert set(m) == set(range(1, 20, 2)) and m[1] == 0 and m[3] > 0


def evaluate_text(text):
    from lotflex.logic import parse
    return evaluate(parse(text))
