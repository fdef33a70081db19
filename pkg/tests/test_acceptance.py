"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

from __future__ import annotations

import itertools
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import random_sft
from shadowlab.cellauto import check_lipschitz_pair, random_ca
from shadowlab.cli import random_pair, run_command
from shadowlab.columnfact import ColumnFactorizationSpec, estimate_sft_window, index_box, lambda_restriction
from shadowlab.fplinalg import Matrix, Subspace, image, intersect, kernel, solve
from shadowlab.lattice import (
    SiteSet,
    containment_level,
    dyadic_exhaustion,
    hamming_distance,
    jittered_exhaustion,
    stability_index,
)
from shadowlab.shadowing import counterexample_demo
from shadowlab.shiftspace import Alphabet, check_restriction_identity, restriction
from test_columnfact import CASES, _lambda_oracle

EPSILONS = ["1/2", "1/4", "1/8", "1/16"]


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail

    return emit


# 1. shadowing grid


def _unit(r: int, i: int) -> list[int]:
    return [int(j == i) for j in range(r)]


def _generator(kind: str, p: int, k: int, r: int, rng, base=None) -> dict:
    if kind == "shift":
        return {"shift": _unit(r, int(rng.integers(r)))}
    if kind == "sum":
        n = int(rng.integers(1, 4))
        offsets = {tuple(int(v) for v in rng.integers(0, 3, size=r)) for _ in range(n)}
        offsets = sorted(offsets)
        return {"sum": {"offsets": [list(o) for o in offsets], "coeffs": [int(c) for c in rng.integers(1, p, size=len(offsets))] if p > 2 else [1] * len(offsets)}}
    mat = rng.integers(0, p, size=(k, k))
    if base is not None:
        # a polynomial in the first matrix commutes with it
        a, b = (int(v) for v in rng.integers(0, p, size=2))
        mat = (a * np.asarray(base) + b * np.eye(k, dtype=np.int64)) % p
    return {"pointwise": mat.tolist()}


KINDS = ["shift", "sum", "pointwise"]


def _grid_configs():
    rng = np.random.default_rng(20240611)
    out = []
    for idx, (p, k, r, s) in enumerate(itertools.product([2, 3, 5], [1, 2], [1, 2], [1, 2])):
        first = KINDS[idx % 3]
        gens = [_generator(first, p, k, r, rng)]
        if s == 2:
            second = KINDS[(idx // 3 + 1) % 3]
            base = gens[0]["pointwise"] if first == second == "pointwise" else None
            gens.append(_generator(second, p, k, r, rng, base))
        for eps in EPSILONS:
            inst = {
                "subshift": {"alphabet": {"p": p, "k": k}, "r": r, "kind": "full"},
                "generators": gens,
                "epsilon": eps,
            }
            out.append(((p, k, r, s, eps), {"instance": inst, "budget": 3}))
    return out


def test_criterion_1_shadowing_grid(report):
    start = time.perf_counter()
    trials = successes = perturbed = 0
    failures = []
    kinds = set()
    for seed, (key, cfg) in enumerate(_grid_configs()):
        for g in cfg["instance"]["generators"]:
            kinds |= set(g)
        man = run_command("shadow-demo", cfg, seed=seed, trials=3)
        assert man["summary"]["setup"]["window"]["found"], key
        for res in man["results"]:
            trials += 1
            ok = res["success"] and res["validated"] and res["verified"]
            successes += ok
            perturbed += res["changedSites"] > 0
            if not ok:
                failures.append((key, res["trial"]))
    elapsed = time.perf_counter() - start
    frac = Fraction(successes, trials)
    ok = trials >= 200 and frac == 1 and kinds == set(KINDS) and elapsed < 300 and perturbed > trials // 2
    report(1, ok, f"{successes}/{trials} trials shadowed (fraction {frac}), {perturbed} with a nonzero perturbation, kinds {sorted(kinds)}, {elapsed:.1f}s; failures {failures[:5]}")


# 2. counter-example


def test_criterion_2_counterexample(report):
    start = time.perf_counter()
    bad = []
    cases = 0
    for n in range(1, 7):
        for m in range(1, n + 1):
            for a in (2, 3):
                rep = counterexample_demo(n, m, a)
                cases += 1
                if not rep.pseudo_orbit_valid or rep.shadowing_points != 0:
                    bad.append((n, m, a))
    elapsed = time.perf_counter() - start
    report(2, not bad and elapsed < 1, f"{cases} cases, zero shadowing points and valid pseudo-orbits; bad {bad}; {elapsed:.3f}s")


# 3. Lipschitz bound and stability index


def _stability_oracle(m: SiteSet, e, top: int) -> int:
    ok = [e.level(n).minkowski(m).issubset(e.level(n + 1)) for n in range(top)]
    n0 = top
    for n in range(top - 1, 0, -1):
        if not ok[n]:
            break
        n0 = n
    return n0


def test_criterion_3_lipschitz(report):
    rng = np.random.default_rng(31)
    level = 6
    violations = undecided = checked = 0
    for i in range(50):
        r = 1 + i % 2
        alph = Alphabet([2, 3, 5][i % 3], 1 + (i // 3) % 2)
        e = dyadic_exhaustion(r)
        tau = random_ca(alph, r, rng, diameter=8)
        box = SiteSet.cube(r, 2**level + tau.memory.max_coord())
        for _ in range(100):
            # agreement stops below level 6, so d(x, y) is resolved by E_6
            x, y = random_pair(alph, box, e, level - 1, rng)
            res = check_lipschitz_pair(tau, x, y, e)
            checked += 1
            violations += res is False
            undecided += res is None
    mismatches = 0
    for i in range(100):
        r = 1 + i % 2
        e = dyadic_exhaustion(r)
        sites = {tuple(int(v) for v in rng.integers(0, 9, size=r)) for _ in range(int(rng.integers(1, 6)))}
        mem = SiteSet.from_sites(sites, r)
        mismatches += stability_index(mem, e).n0 != _stability_oracle(mem, e, 7)
    ok = violations == 0 and undecided == 0 and mismatches == 0
    report(3, ok, f"{checked} pairs on 50 CAs: {violations} violations, {undecided} undecided; stability mismatches {mismatches}/100")


# 4. decomposition identity


def test_criterion_4_restriction_identity(report):
    rng = np.random.default_rng(41)
    agree = 0
    pairs = 0
    while pairs < 12:
        alph = Alphabet([2, 3][pairs % 2], 1)
        xs = sorted({int(v) for v in rng.integers(0, 3, size=int(rng.integers(1, 3)))})
        e_set = SiteSet.from_sites([(x, 0) for x in xs])
        d_window = sorted({0} | {int(v) for v in rng.integers(0, 3, size=int(rng.integers(0, 2)))})
        n = len(xs) * len(d_window)
        ann = rng.integers(0, alph.p, size=(int(rng.integers(1, n + 1)), n))
        p_con = kernel(Matrix(alph.p, ann))
        boxes = [SiteSet.cube(2, 3), SiteSet.cube(2, 4), SiteSet.box((0, 0), (3, 2))]
        pairs += 1
        agree += all(check_restriction_identity(alph, 2, 1, e_set, d_window, p_con, b) for b in boxes)
    alph = Alphabet(2, 1)
    e_set = SiteSet.from_sites([(0, 0)])
    control = check_restriction_identity(
        alph, 2, 1, e_set, [0], Subspace.full(2, 1), SiteSet.cube(2, 3), rhs_constraint=Subspace.zero(2, 1)
    )
    report(4, agree == pairs and control is False, f"{agree}/{pairs} pairs equal on boxes up to 4x4; negative control returned {control}")


# 5. column factorization


def test_criterion_5_column_factorization(report):
    bad = []
    checks = 0
    for name, (sig, gens) in sorted(CASES.items()):
        for e_len in (1, 2):
            e = SiteSet.cube(1, e_len)
            spec = ColumnFactorizationSpec(sig, e, tuple(gens))
            for t in range(4):
                got = {tuple(int(v) for v in vec) for vec in lambda_restriction(spec, index_box(t, 1)).space.elements()}
                checks += 1
                if got != _lambda_oracle(sig, gens, e, t, e_len + t):
                    bad.append((name, e_len, t))
        est = estimate_sft_window(ColumnFactorizationSpec(sig, SiteSet.cube(1, 2), tuple(gens)), budget=3)
        if est.N != 1:
            bad.append((name, "N", est.N))
    report(5, not bad, f"{checks} restrictions match enumeration and N = 1 on identity, shift, constants; mismatches {bad}")


# 6. chain stabilization


def test_criterion_6_chain_stabilization(report):
    rng = np.random.default_rng(61)
    exact_bad = []
    for i in range(50):
        p, k = [2, 3][i % 2], 1 + (i // 2) % 2
        sig = random_sft(p, k, 1, rng, reach=3)
        e = SiteSet.cube(1, int(rng.integers(1, 4)))
        res = restriction(sig, e, "exact")
        if not (res.exact and res.stabilized and res.strict_drops <= k * len(e)):
            exact_bad.append(i)
        if any(b > a for a, b in zip(res.dims, res.dims[1:])):
            exact_bad.append(i)
    increases = 0
    traces = 0
    for i in range(50):
        p = [2, 3][i % 2]
        sig = random_sft(p, 1, 2, rng, reach=1)
        e = SiteSet.cube(2, 1 + i % 2)
        res = restriction(sig, e, "patience:3", max_steps=8)
        traces += 1
        increases += sum(1 for a, b in zip(res.dims, res.dims[1:]) if b > a)
    ok = not exact_bad and increases == 0
    report(6, ok, f"r=1 exact: 50 chains, bad {exact_bad}; r=2 patience-3: {traces} traces, {increases} increases")


# 7. linear algebra oracles


def _codes(vectors: np.ndarray) -> np.ndarray:
    """Integer code of each F_2 vector along the last axis."""
    w = 1 << np.arange(vectors.shape[-1], dtype=np.int64)
    return (vectors * w).sum(axis=-1)


def _mask(codes: np.ndarray) -> np.ndarray:
    return np.bitwise_or.reduce(np.left_shift(1, codes), axis=-1)


def _space_mask(u: Subspace) -> int:
    return int(_mask(_codes(u.elements())))


def _all_matrices(m: int, n: int) -> np.ndarray:
    idx = np.arange(2 ** (m * n), dtype=np.int64)
    bits = (idx[:, None] >> np.arange(m * n)) & 1
    return bits.reshape(-1, m, n)


def _all_vectors(n: int) -> np.ndarray:
    return (np.arange(2**n)[:, None] >> np.arange(n)) & 1


def test_criterion_7_linear_algebra_oracles(report):
    bad = []
    cases = 0
    for m in range(1, 5):
        for n in range(1, 5):
            mats = _all_matrices(m, n)
            xs = _all_vectors(n)
            imgs = np.einsum("aij,xj->axi", mats, xs) % 2
            img_mask = _mask(_codes(imgs))
            ker_mask = _mask(np.where((imgs == 0).all(axis=2), _codes(xs)[None, :], 0))
            bvecs = _all_vectors(m)
            for i, a in enumerate(mats):
                cases += 1
                mat = Matrix(2, a)
                if _space_mask(image(mat)) != img_mask[i] or _space_mask(kernel(mat)) != ker_mask[i]:
                    bad.append(("image/kernel", m, n, i))
                b = bvecs[i % len(bvecs)]
                sol = solve(mat, b)
                reachable = (img_mask[i] >> int(_codes(b))) & 1
                if sol is None:
                    if reachable:
                        bad.append(("solve", m, n, i))
                elif not reachable or ((a @ sol[0]) % 2 != b).any() or _space_mask(sol[1]) != ker_mask[i]:
                    bad.append(("solve", m, n, i))
    pair_cases = 0
    for n in range(1, 5):
        for ra, rb in [(1, 1), (1, 2), (2, 2), (1, 3)]:
            if (ra + rb) * n > 16 or max(ra, rb) > n:
                continue
            ua, ub = _all_matrices(ra, n), _all_matrices(rb, n)
            span_a = _mask(_codes(np.einsum("aij,ci->acj", ua, _all_vectors(ra)) % 2))
            span_b = _mask(_codes(np.einsum("aij,ci->acj", ub, _all_vectors(rb)) % 2))
            spaces_a = [Subspace.span(2, a, n) for a in ua]
            spaces_b = [Subspace.span(2, b, n) for b in ub]
            for i, sa in enumerate(spaces_a):
                for j, sb in enumerate(spaces_b):
                    pair_cases += 1
                    if _space_mask(intersect(sa, sb)) != span_a[i] & span_b[j]:
                        bad.append(("intersect", n, i, j))
    report(7, not bad, f"{cases} matrices (solve/image/kernel) and {pair_cases} subspace pairs (intersect) over F_2; mismatches {bad[:5]}")


# 8. metric independence


def test_criterion_8_metric_independence(report):
    rng = np.random.default_rng(81)
    alph = Alphabet(2, 1)
    checked = premises = violations = 0
    r = 2
    dyad = dyadic_exhaustion(r)
    jit = jittered_exhaustion(r, 6, rng)
    deep = 4
    box = SiteSet.cube(r, max(jit.level(6).max_coord(), 2**6 - 1) + 1)
    for e, e_prime in ((dyad, jit), (jit, dyad)):
        for _ in range(250):
            n = int(rng.integers(1, deep + 1))
            n_prime = containment_level(e, e_prime, n)
            x, y = random_pair(alph, box, e_prime, min(6, n_prime + 1), rng)
            d_prime = hamming_distance(x, y, e_prime, 6)
            d = hamming_distance(x, y, e, 6)
            checked += 1
            if d_prime.at_most(Fraction(1, 2**n_prime)):
                premises += 1
                violations += not d.at_most(Fraction(1, 2**n))
    ok = checked >= 500 and violations == 0 and premises > 0
    report(8, ok, f"{checked} pairs, {premises} with the premise met, {violations} violations")
