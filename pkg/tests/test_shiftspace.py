from __future__ import annotations

import itertools

import numpy as np
import pytest

from conftest import all_vectors, random_sft
from shadowlab.errors import ContractViolation, UnsupportedMode
from shadowlab.fplinalg import Subspace
from shadowlab.lattice import SiteSet
from shadowlab.shiftspace import (
    Alphabet,
    FullShift,
    LinearSFT,
    Pattern,
    check_restriction_identity,
    constants_sft,
    local_pattern_space,
    restriction,
    restriction_system,
    shift_pattern,
    subshift_from_json,
    subshift_to_json,
)


def _brute_local_space(sig, box: SiteSet) -> set:
    """Every pattern on ``box`` whose in-box translates of the window lie in ``P``."""
    p, k = sig.alphabet.p, sig.alphabet.k
    allowed = {tuple(int(t) for t in v) for v in sig.constraint.elements()}
    trans = []
    for g in itertools.product(*[range(m + 1) for m in box.upper_corner()]):
        pos = box.index_of(np.asarray(g) + sig.window.coords)
        if (pos >= 0).all():
            trans.append(pos)
    out = set()
    for vec in all_vectors(p, k * len(box)):
        vals = vec.reshape(len(box), k)
        if all(tuple(int(t) for t in vals[pos].reshape(-1)) in allowed for pos in trans):
            out.add(tuple(int(t) for t in vec))
    return out


def _extendable_oracle(sig: LinearSFT, e_len: int) -> set:
    """``Sigma_{[0, e_len)}`` for r = 1 via the graph of width-W words.

    A word extends to a configuration iff its last ``W - 1`` symbols start an
    infinite path, i.e. can reach a cycle of allowed transitions.
    """
    p, k = sig.alphabet.p, sig.alphabet.k
    w = sig.window.max_coord() + 1
    allowed = {tuple(int(t) for t in v) for v in sig.constraint.elements()}
    syms = [tuple(int(t) for t in s) for s in all_vectors(p, k)]
    wsel = [int(d) for d in sig.window.coords[:, 0]]

    def ok(word):
        return tuple(c for d in wsel for c in word[d]) in allowed

    def grow(words):
        return [wd + (s,) for wd in words for s in syms]

    states = set(itertools.product(syms, repeat=w - 1))
    succ = {st: [st[1:] + (s,) for s in syms if ok(st + (s,))] if w > 1 else [st] for st in states}
    if w == 1:
        succ = {(): [()] if any(ok((s,)) for s in syms) else []}
        states = {()}
    live = set(states)
    while True:
        nxt = {st for st in live if any(t in live for t in succ[st])}
        if nxt == live:
            break
        live = nxt
    n = max(e_len, w - 1)
    words = [()]
    for _ in range(n):
        words = grow(words)
    out = set()
    for wd in words:
        if all(ok(wd[i : i + w]) for i in range(n - w + 1)) and (w == 1 or wd[n - w + 1 :] in live):
            if w == 1 and not all(ok((s,)) for s in wd):
                continue
            out.add(tuple(c for s in wd[:e_len] for c in s))
    return out


def _as_set(space: Subspace) -> set:
    return {tuple(int(t) for t in v) for v in space.elements()}


@pytest.mark.parametrize("r", [1, 2])
def test_local_space_matches_enumeration(r, rng):
    for _ in range(6):
        sig = random_sft(2, 1, r, rng, reach=1)
        box = SiteSet.cube(r, 3 if r == 1 else 2)
        assert _as_set(local_pattern_space(sig, box)) == _brute_local_space(sig, box)


def test_exact_restriction_matches_graph_oracle(rng):
    for trial in range(25):
        p = [2, 3][trial % 2]
        k = 1 if p == 3 else int(rng.integers(1, 3))
        sig = random_sft(p, k, 1, rng, reach=2)
        for e_len in (1, 2):
            res = restriction(sig, SiteSet.cube(1, e_len), "exact")
            assert res.exact and not res.heuristic
            assert _as_set(res.space) == _extendable_oracle(sig, e_len)


def test_restriction_drops_where_local_space_lies():
    # x(g)_0 = x(g+1)_1 and x(g+1)_1 = 0 force x(g)_0 = 0 everywhere
    alph = Alphabet(2, 2)
    window = SiteSet.from_sites([(0,), (1,)])
    # layout (site 0: c0, c1, site 1: c0, c1); annihilator rows h: [1,0,0,1] and [0,0,0,1]
    from shadowlab.fplinalg import Matrix, kernel

    space = kernel(Matrix.from_rows(2, [[1, 0, 0, 1], [0, 0, 0, 1]]))
    sig = LinearSFT(alph, 1, window, space)
    e = SiteSet.cube(1, 1)
    assert local_pattern_space(sig, e).dim == 2
    res = restriction(sig, e, "exact")
    assert res.space.dim == 1
    assert res.dims[0] == 2 and res.dims[-1] == 1


def test_constants_chain_example():
    sig = constants_sft(Alphabet(2, 1), 1)
    rep = restriction(sig, SiteSet.cube(1, 3), "exact")
    assert 2 ** rep.dims[0] <= 8 and 2 ** rep.dims[-1] == 2
    assert rep.stabilization_index <= 2
    pat = restriction(sig, SiteSet.cube(1, 3), "patience:3")
    assert pat.heuristic and pat.space == rep.space


def test_full_shift_restriction_is_exact_everywhere():
    sig = FullShift(Alphabet(3, 2), 2)
    res = restriction(sig, SiteSet.cube(2, 2))
    assert res.exact and res.space.is_full() and res.stabilization_index == 0


def test_exact_mode_needs_r1():
    sig = constants_sft(Alphabet(2, 1), 2)
    with pytest.raises(UnsupportedMode):
        restriction(sig, SiteSet.cube(2, 2), "exact")
    with pytest.raises(UnsupportedMode):
        restriction(sig, SiteSet.cube(2, 2), "sometimes")


def test_patience_chain_is_monotone(rng):
    for _ in range(10):
        sig = random_sft(2, 1, 2, rng, reach=1)
        res = restriction(sig, SiteSet.cube(2, 2), "patience:3", max_steps=8)
        assert all(b <= a for a, b in zip(res.dims, res.dims[1:]))
        assert res.strict_drops <= 4


def test_restriction_system_projects_to_restriction(rng):
    for _ in range(8):
        sig = random_sft(3, 1, 1, rng, reach=2)
        e = SiteSet.from_sites([(0,), (2,)])
        system = restriction_system(sig, e, "exact")
        ncols = len(system.box)
        mat = np.zeros((len(system.rows), ncols), dtype=np.int64)
        for i, row in enumerate(system.rows):
            for c, v in row.items():
                mat[i, c] = v
        from shadowlab.fplinalg import Matrix, kernel

        space = kernel(Matrix(3, mat)).project(system.box.index_of(e.coords))
        assert space == restriction(sig, e, "exact").space


def test_shift_pattern_moves_values():
    alph = Alphabet(5, 1)
    x = Pattern(alph, SiteSet.cube(1, 4), [[1], [2], [3], [4]])
    y = shift_pattern((1,), x)
    assert y.domain == SiteSet.cube(1, 3)
    assert [v[0] for v in y.values] == [2, 3, 4]


def test_subshift_json_roundtrip(rng):
    sig = random_sft(3, 2, 2, rng)
    back = subshift_from_json(subshift_to_json(sig))
    assert back.window == sig.window and back.constraint == sig.constraint
    assert isinstance(subshift_from_json({"alphabet": {"p": 2}, "r": 1}), FullShift)
    with pytest.raises(ContractViolation):
        subshift_from_json({"alphabet": {"p": 2}, "r": 1, "kind": "sofic"})


def test_sft_json_reorders_listed_window():
    obj = {
        "alphabet": {"p": 2, "k": 1},
        "r": 1,
        "kind": "sft",
        "window": [[1], [0]],
        "constraint": "2 1 2\n1 0\n",  # value at site 1 free, site 0 forced to zero
    }
    sig = subshift_from_json(obj)
    assert _as_set(sig.constraint) == {(0, 0), (0, 1)}


def test_pattern_json_roundtrip(rng):
    alph = Alphabet(3, 2)
    x = Pattern.random(alph, SiteSet.from_sites([(0, 1), (2, 2), (1, 0)]), rng)
    assert Pattern.from_json(alph, x.to_json()) == x


def test_restriction_identity_small_case():
    alph = Alphabet(2, 1)
    e_set = SiteSet.from_sites([(0, 0), (1, 0)])
    p_con = Subspace.span(2, [[1, 1, 1, 1], [1, 0, 1, 0]], 4)
    assert check_restriction_identity(alph, 2, 1, e_set, [0, 1], p_con, SiteSet.cube(2, 3))
