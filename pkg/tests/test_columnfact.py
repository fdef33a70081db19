from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest

from conftest import all_vectors, random_sft
from shadowlab.cellauto import apply, identity_ca, pointwise_ca, shift_ca, sum_rule
from shadowlab.columnfact import (
    ColumnFactorizationSpec,
    candidate_space,
    chain_report,
    estimate_sft_window,
    index_box,
    lambda_dimension,
    lambda_restriction,
    psi,
    window_holds,
)
from shadowlab.errors import ContractViolation, InsufficientTruncation, NonCommutingGenerators
from shadowlab.lattice import SiteSet, dyadic_exhaustion
from shadowlab.shadowing import PseudoOrbitTruncation, ShadowingInstance, find_shadowing_point
from shadowlab.shiftspace import Alphabet, FullShift, Pattern, constants_sft, local_pattern_space

A2 = Alphabet(2, 1)


def _iterated(gens, alpha, x: Pattern) -> Pattern:
    """tau_alpha by applying each generator one step at a time."""
    for g, a in zip(gens, alpha):
        for _ in range(a):
            x = apply(g, x)
    return x


def _lambda_oracle(sig, gens, e: SiteSet, t: int, side: int) -> set:
    """Enumerate admissible patterns on a cube and collect their columns."""
    box = SiteSet.cube(sig.r, side)
    if isinstance(sig, FullShift):
        pats = all_vectors(sig.alphabet.p, sig.alphabet.k * len(box))
    else:
        pats = local_pattern_space(sig, box).elements()
    out = set()
    for vec in pats:
        x = Pattern.from_vector(sig.alphabet, box, vec)
        col = []
        for alpha in index_box(t, len(gens)):
            col.extend(int(v) for v in _iterated(gens, alpha, x).restrict(e).vector())
        out.add(tuple(col))
    return out


def _as_set(space) -> set:
    return {tuple(int(t) for t in v) for v in space.elements()}


CASES = {
    "identity": (FullShift(A2, 1), [identity_ca(A2, 1)]),
    "shift": (FullShift(A2, 1), [shift_ca(A2, (1,))]),
    "constants": (constants_sft(A2, 1), [shift_ca(A2, (1,))]),
}


@pytest.mark.parametrize("name", sorted(CASES))
@pytest.mark.parametrize("e_len", [1, 2])
@pytest.mark.parametrize("t", [0, 1, 2, 3])
def test_lambda_restriction_matches_enumeration(name, e_len, t):
    sig, gens = CASES[name]
    e = SiteSet.cube(1, e_len)
    spec = ColumnFactorizationSpec(sig, e, tuple(gens))
    got = lambda_restriction(spec, index_box(t, 1))
    assert got.space.dim == lambda_dimension(spec, index_box(t, 1))[0]
    assert _as_set(got.space) == _lambda_oracle(sig, gens, e, t, e_len + t)


def test_lambda_examples():
    shift = ColumnFactorizationSpec(FullShift(A2, 1), SiteSet.cube(1, 1), (shift_ca(A2, (1,)),))
    assert lambda_restriction(shift, index_box(1, 1)).space.is_full()
    const = ColumnFactorizationSpec(constants_sft(Alphabet(3, 2), 1), SiteSet.cube(1, 1), (shift_ca(Alphabet(3, 2), (1,)),))
    for t in range(3):
        assert lambda_restriction(const, index_box(t, 1)).space.dim == 2


@pytest.mark.parametrize("name", sorted(CASES))
def test_window_is_one(name):
    sig, gens = CASES[name]
    est = estimate_sft_window(ColumnFactorizationSpec(sig, SiteSet.cube(1, 2), tuple(gens)), budget=3)
    assert est.N == 1 and est.found and est.certified


def test_rank_count_matches_dense_candidate_space(rng):
    for trial in range(12):
        p = [2, 3][trial % 2]
        alph = Alphabet(p, 1)
        r = 1 + trial % 2
        sig = FullShift(alph, r) if trial % 3 else random_sft(p, 1, r, rng, reach=1)
        gens = [sum_rule(alph, r, [(0,) * r, tuple(int(i == 0) for i in range(r))], [1, int(rng.integers(1, p))])]
        if trial % 4 == 0:
            gens.append(shift_ca(alph, tuple(int(i == r - 1) for i in range(r))))
        spec = ColumnFactorizationSpec(sig, SiteSet.cube(r, 1), tuple(gens))
        for n in (1, 2) if len(gens) == 1 else (1,):
            cand = candidate_space(spec, n, 1)
            lam = lambda_restriction(spec, index_box(n + 1, spec.s)).space
            holds, _ = window_holds(spec, n, 1)
            assert holds == (cand == lam)
            assert cand.dim >= lam.dim


def test_psi_examples(rng):
    x = Pattern.random(A2, SiteSet.cube(1, 8), rng)
    ident = ColumnFactorizationSpec(FullShift(A2, 1), SiteSet.cube(1, 2), (identity_ca(A2, 1),))
    cols = psi(x, ident, index_box(3, 1))
    assert all(c == x.restrict(SiteSet.cube(1, 2)) for c in cols.values())
    shift = ColumnFactorizationSpec(FullShift(A2, 1), SiteSet.cube(1, 1), (shift_ca(A2, (1,)),))
    cols = psi(x, shift, index_box(4, 1))
    assert [cols[(a,)].values[0, 0] for a in range(5)] == [x.value((a,))[0] for a in range(5)]


def test_psi_reports_missing_sites(rng):
    x = Pattern.random(A2, SiteSet.cube(1, 3), rng)
    spec = ColumnFactorizationSpec(FullShift(A2, 1), SiteSet.cube(1, 2), (shift_ca(A2, (1,)),))
    with pytest.raises(InsufficientTruncation) as info:
        psi(x, spec, index_box(3, 1))
    assert info.value.missing


def test_psi_equivariance_and_membership(rng):
    alph = Alphabet(3, 1)
    gens = (sum_rule(alph, 2, [(0, 0), (1, 0)], [1, 2]), shift_ca(alph, (0, 1)))
    e = SiteSet.from_sites([(0, 0), (1, 1)])
    spec = ColumnFactorizationSpec(FullShift(alph, 2), e, gens)
    f = index_box(1, 2)
    lam = lambda_restriction(spec, f).space
    for _ in range(5):
        x = Pattern.random(alph, SiteSet.cube(2, 8), rng)
        cols = psi(x, spec, index_box(2, 2))
        vec = np.concatenate([cols[a].vector() for a in f])
        assert vec in lam
        for beta in itertools.product(range(2), repeat=2):
            moved = psi(apply(spec.table[beta], x), spec, f)
            for a in f:
                assert moved[a] == cols[tuple(u + v for u, v in zip(a, beta))]


def test_spec_rejects_bad_input():
    alph = Alphabet(2, 2)
    n1 = pointwise_ca(alph, 1, [[0, 1], [0, 0]])
    n2 = pointwise_ca(alph, 1, [[0, 0], [1, 0]])
    with pytest.raises(NonCommutingGenerators):
        ColumnFactorizationSpec(FullShift(alph, 1), SiteSet.cube(1, 1), (n1, n2))
    spec = ColumnFactorizationSpec(FullShift(alph, 1), SiteSet.cube(1, 1), (n1,))
    with pytest.raises(ContractViolation):
        lambda_restriction(spec, SiteSet.from_sites([(1,)]))
    with pytest.raises(ContractViolation):
        estimate_sft_window(spec, budget=0)


def test_chain_report_examples():
    full = chain_report(FullShift(A2, 1), SiteSet.cube(1, 3), 5)
    assert full.stabilization_index == 0 and len(set(full.dims)) == 1
    const = chain_report(constants_sft(A2, 1), SiteSet.cube(1, 3), 5)
    assert 2 ** const.dims[-1] == 2 and const.stabilization_index <= 2
    assert const.strict_drops <= 3
    assert set(const.to_json()) >= {"dims", "stabilizationIndex", "heuristicFlags"}


def test_window_soundness_via_solver(rng):
    """Patterns passing the window checks are columns of real configurations."""
    alph = Alphabet(2, 1)
    for trial in range(6):
        sig = constants_sft(alph, 1) if trial % 2 else FullShift(alph, 1)
        gens = (sum_rule(alph, 1, [(0,), (1,)]),) if trial < 3 else (shift_ca(alph, (1,)),)
        inst = ShadowingInstance(sig, gens, dyadic_exhaustion(1), Fraction(1, 2))
        e = inst.exhaustion.level(inst.n0)
        spec = ColumnFactorizationSpec(sig, e, gens)
        est = estimate_sft_window(spec, budget=3)
        assert est.certified
        depth = 2
        cand = candidate_space(spec, est.N, depth)
        t = est.N + depth
        ne = len(e)
        for _ in range(5):
            z = cand.random_element(rng)
            entries = {
                a: Pattern.from_vector(alph, e, z[i * ne : (i + 1) * ne]) for i, a in enumerate(index_box(t, 1))
            }
            po = PseudoOrbitTruncation(t, 1, e, entries)
            assert find_shadowing_point(po, inst, "exact") is not None


def test_report_json_fields():
    sig, gens = CASES["shift"]
    est = estimate_sft_window(ColumnFactorizationSpec(sig, SiteSet.cube(1, 1), tuple(gens)), budget=2)
    js = est.to_json()
    assert js["N"] == 1 and js["certified"] is True
    assert isinstance(js["dims"], list) and js["heuristicFlags"] == []


def test_window_two_for_period_two_columns():
    # x(g) = x(g + 2): the column of the shift is 2-periodic, so F_1 windows are too short
    from shadowlab.fplinalg import Subspace
    from shadowlab.shiftspace import LinearSFT

    sig = LinearSFT(A2, 1, SiteSet.from_sites([(0,), (2,)]), Subspace.span(2, [[1, 1]], 2))
    spec = ColumnFactorizationSpec(sig, SiteSet.cube(1, 1), (shift_ca(A2, (1,)),))
    assert not window_holds(spec, 1)[0]
    est = estimate_sft_window(spec, budget=3)
    assert est.N == 2 and est.certified
    assert estimate_sft_window(spec, budget=1).N is None
