"""Pseudo-orbits of commuting linear CAs and exact shadowing certificates.

Orbits are indexed by exponent vectors ``alpha`` in a cube ``F_T``; entry
``x_alpha`` plays the role of ``x_{tau_alpha}``.  All thresholds are exact
fractions and every decision is made with finite-field arithmetic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np

from shadowlab.cellauto import MonomialTable, apply, ca_from_config, lipschitz_constant, rule_rows
from shadowlab.errors import ContractViolation, InsufficientResolution, InsufficientTruncation
from shadowlab.fplinalg import SparseEchelon
from shadowlab.lattice import (
    Exhaustion,
    SiteSet,
    hamming_distance,
    resolution_index,
    resolvable_level,
)
from shadowlab.shiftspace import (
    Alphabet,
    FullShift,
    Pattern,
    SubshiftSpec,
    local_constraint_rows,
    restriction_system,
    subshift_from_json,
    subshift_to_json,
)

__all__ = [
    "ShadowingInstance",
    "PseudoOrbitTruncation",
    "ShadowingCertificate",
    "DeltaReport",
    "Validation",
    "CounterexampleReport",
    "delta_for_epsilon",
    "orbit_box",
    "seed_box",
    "random_seed",
    "exact_orbit",
    "perturb_orbit",
    "chained_pseudo_orbit",
    "validate_pseudo_orbit",
    "find_shadowing_point",
    "verify_shadowing",
    "counterexample_demo",
]


def _fraction(v) -> Fraction:
    if isinstance(v, float):
        raise ContractViolation("use exact rationals such as '1/8', not floats")
    return Fraction(v)


@dataclass(frozen=True, eq=False)
class ShadowingInstance:
    sig: SubshiftSpec
    generators: tuple
    exhaustion: Exhaustion
    epsilon: Fraction
    table: MonomialTable = field(init=False, repr=False)

    def __post_init__(self):
        gens = tuple(self.generators)
        if not gens:
            raise ContractViolation("need at least one generator")
        for g in gens:
            if g.alphabet != self.sig.alphabet or g.r != self.sig.r:
                raise ContractViolation("generator alphabet or dimension differs from the subshift")
        if self.exhaustion.r != self.sig.r:
            raise ContractViolation("exhaustion dimension differs from the subshift")
        eps = _fraction(self.epsilon)
        if eps <= 0:
            raise ContractViolation("epsilon must be positive")
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "table", MonomialTable(gens, check=True))

    @property
    def s(self) -> int:
        return len(self.generators)

    @property
    def r(self) -> int:
        return self.sig.r

    @property
    def alphabet(self) -> Alphabet:
        return self.sig.alphabet

    @property
    def n0(self) -> int:
        return resolution_index(self.epsilon)

    def to_json(self) -> dict:
        return {
            "subshift": subshift_to_json(self.sig),
            "generators": [g.to_json() for g in self.generators],
            "exhaustion": self.exhaustion.to_json(),
            "epsilon": str(self.epsilon),
        }

    @classmethod
    def from_json(cls, obj) -> ShadowingInstance:
        if isinstance(obj, str):
            obj = json.loads(obj)
        for key in ("subshift", "generators", "epsilon"):
            if key not in obj:
                raise ContractViolation(f"instance config is missing '{key}'")
        sig = subshift_from_json(obj["subshift"])
        gens = tuple(ca_from_config(sig.alphabet, sig.r, g) for g in obj["generators"])
        ex = obj.get("exhaustion") or {"kind": "dyadic", "r": sig.r}
        if isinstance(ex, dict) and ex.get("kind") == "dyadic" and "r" not in ex:
            ex = dict(ex, r=sig.r)
        try:
            eps = Fraction(str(obj["epsilon"]))
        except (ValueError, ZeroDivisionError) as exc:
            raise ContractViolation(f"epsilon: cannot parse {obj['epsilon']!r}") from exc
        return cls(sig, gens, Exhaustion.from_json(ex), eps)


def _cube(t: int, s: int) -> SiteSet:
    if t < 0:
        raise ContractViolation("index box size T must be >= 0")
    return SiteSet.cube(s, t + 1)


def _unit(s: int, i: int) -> tuple[int, ...]:
    return tuple(int(j == i) for j in range(s))


# ---------------------------------------------------------------------------
# delta


@dataclass(frozen=True)
class DeltaReport:
    delta: Fraction
    n0: int
    C: int
    N: int
    s: int

    def to_json(self) -> dict:
        return {"delta": str(self.delta), "n0": self.n0, "C": self.C, "N": self.N, "s": self.s}


def delta_for_epsilon(inst: ShadowingInstance, n: int) -> DeltaReport:
    """``delta = 1 / (2^n0 * C * N * s)`` with ``C`` the largest Lipschitz constant over ``F_N``."""
    if n < 1:
        raise ContractViolation("window size N must be >= 1")
    n0 = inst.n0
    c = max(lipschitz_constant(inst.table[alpha], inst.exhaustion) for alpha in _cube(n, inst.s))
    return DeltaReport(Fraction(1, 2**n0 * c * n * inst.s), n0, c, n, inst.s)


# ---------------------------------------------------------------------------
# pseudo-orbits


@dataclass(frozen=True, eq=False)
class PseudoOrbitTruncation:
    T: int
    s: int
    box: SiteSet
    entries: dict  # alpha -> Pattern on box
    declared_delta: Fraction | None = None

    def __post_init__(self):
        f = _cube(self.T, self.s)
        if set(self.entries) != set(f):
            raise ContractViolation("entries must be indexed by exactly the cube F_T")
        alph = None
        for x in self.entries.values():
            if x.domain != self.box:
                raise ContractViolation("every entry must live on the spatial box")
            if alph is None:
                alph = x.alphabet
            elif x.alphabet != alph:
                raise ContractViolation("entries over different alphabets")
        if self.declared_delta is not None:
            d = _fraction(self.declared_delta)
            if d <= 0:
                raise ContractViolation("declared delta must be positive")
            object.__setattr__(self, "declared_delta", d)

    @property
    def index_box(self) -> SiteSet:
        return _cube(self.T, self.s)

    @property
    def alphabet(self) -> Alphabet:
        return next(iter(self.entries.values())).alphabet

    def __getitem__(self, alpha) -> Pattern:
        return self.entries[tuple(alpha)]

    def replace_entries(self, entries: dict, delta=None) -> PseudoOrbitTruncation:
        return PseudoOrbitTruncation(self.T, self.s, self.box, entries, delta if delta is not None else self.declared_delta)

    def to_json(self) -> dict:
        return {
            "T": self.T,
            "s": self.s,
            "box": self.box.to_json(),
            "declaredDelta": None if self.declared_delta is None else str(self.declared_delta),
            "entries": [
                {"alpha": list(alpha), "values": self.entries[alpha].values.tolist()}
                for alpha in self.index_box
            ],
        }

    @classmethod
    def from_json(cls, alphabet: Alphabet, obj) -> PseudoOrbitTruncation:
        if isinstance(obj, str):
            obj = json.loads(obj)
        for key in ("T", "s", "box", "entries"):
            if key not in obj:
                raise ContractViolation(f"orbit is missing '{key}'")
        box = SiteSet.from_sites(obj["box"])
        entries = {}
        for ent in obj["entries"]:
            vals = np.asarray(ent["values"], dtype=np.int64).reshape(len(box), alphabet.k)
            entries[tuple(int(a) for a in ent["alpha"])] = Pattern(alphabet, box, vals)
        delta = obj.get("declaredDelta")
        return cls(int(obj["T"]), int(obj["s"]), box, entries, Fraction(delta) if delta else None)


def orbit_box(inst: ShadowingInstance, level: int, margin: int = 4) -> SiteSet:
    """Cube holding ``E_level + M_sigma`` for every generator, plus ``margin`` free layers."""
    if margin < 0:
        raise ContractViolation("margin must be >= 0")
    need = inst.exhaustion.level(level).minkowski(reduce(SiteSet.union, [g.memory for g in inst.generators]))
    return SiteSet.cube(inst.r, need.max_coord() + 1 + margin)


def seed_box(inst: ShadowingInstance, t: int, level: int, margin: int = 4) -> SiteSet:
    """A cube large enough that :func:`exact_orbit` yields entries on :func:`orbit_box`."""
    b = orbit_box(inst, level, margin)
    reach = max(inst.table[alpha].memory.max_coord() for alpha in _cube(t, inst.s))
    return SiteSet.cube(inst.r, b.max_coord() + 1 + reach)


def _subspace_sample(sig: SubshiftSpec, box: SiteSet, rng: np.random.Generator, zero_on: SiteSet | None = None, mode="auto") -> np.ndarray:
    """Random vector of ``Sigma_box`` (through its restriction system), vanishing on ``zero_on``."""
    p, k = sig.alphabet.p, sig.alphabet.k
    system = restriction_system(sig, box, mode)
    big = system.box
    n = k * len(big)
    rows = [dict(r) for r in system.rows]
    if zero_on is not None and len(zero_on):
        idx = big.index_of(zero_on.coords)
        idx = idx[idx >= 0]
        for i in idx:
            for c in range(k):
                rows.append({int(i) * k + c: 1})
    eng = SparseEchelon(p)
    for row in sorted(rows, key=len):
        if row:
            eng.add(row)
    vec = eng.solution(n, free=rng.integers(0, p, size=n))
    pos = big.index_of(box.coords)
    return vec.reshape(len(big), k)[pos]


def random_seed(inst: ShadowingInstance, box: SiteSet, rng: np.random.Generator, mode="auto") -> Pattern:
    """A uniformly random pattern of ``Sigma`` restricted to ``box``."""
    if isinstance(inst.sig, FullShift):
        return Pattern.random(inst.alphabet, box, rng)
    return Pattern(inst.alphabet, box, _subspace_sample(inst.sig, box, rng, mode=mode))


def exact_orbit(seed: Pattern, inst: ShadowingInstance, t: int) -> PseudoOrbitTruncation:
    """``x_alpha = tau_alpha(seed)`` on the common eroded box (a 0-pseudo-orbit)."""
    f = _cube(t, inst.s)
    images = {alpha: apply(inst.table[alpha], seed) for alpha in f}
    box = reduce(SiteSet.intersection, [y.domain for y in images.values()])
    if len(box) == 0:
        raise InsufficientTruncation("seed domain too small: the common output box is empty", [])
    return PseudoOrbitTruncation(t, inst.s, box, {a: y.restrict(box) for a, y in images.items()}, None)


def _guard(inst: ShadowingInstance, level: int, box: SiteSet) -> SiteSet:
    el = inst.exhaustion.level(level)
    grown = el.minkowski(reduce(SiteSet.union, [g.memory for g in inst.generators]))
    return el.union(grown).intersection(box)


@dataclass(frozen=True)
class PerturbResult:
    orbit: PseudoOrbitTruncation
    changed_sites: int
    notice: str | None = None


def perturb_orbit(
    orbit: PseudoOrbitTruncation,
    inst: ShadowingInstance,
    delta,
    rng: np.random.Generator,
    flip_budget: int | None = None,
    mode="auto",
) -> PerturbResult:
    """Change every entry only outside ``E_n + U M_sigma`` (``n`` = resolution of ``delta``).

    Full shift: ``flip_budget`` sites per entry get a nonzero random offset
    (``None`` re-randomises every free site).  SFTs: a random element of the
    restriction to the box that vanishes on the guard is added.
    """
    delta = _fraction(delta)
    if delta <= 0:
        raise ContractViolation("delta must be positive")
    if flip_budget is not None and flip_budget < 0:
        raise ContractViolation("flip budget must be >= 0")
    n = resolution_index(delta)
    box = orbit.box
    guard = _guard(inst, n, box)
    free = box.difference(guard)
    if len(free) == 0:
        return PerturbResult(orbit.replace_entries(dict(orbit.entries), delta), 0, "no perturbable sites")
    if flip_budget == 0:
        return PerturbResult(orbit.replace_entries(dict(orbit.entries), delta), 0)
    p, k = inst.alphabet.p, inst.alphabet.k
    free_pos = box.index_of(free.coords)
    new = {}
    changed = 0
    for alpha in orbit.index_box:
        x = orbit.entries[alpha]
        vals = x.values.copy()
        if isinstance(inst.sig, FullShift):
            if flip_budget is None:
                vals[free_pos] = rng.integers(0, p, size=(len(free_pos), k))
            else:
                pick = rng.choice(free_pos, size=min(flip_budget, len(free_pos)), replace=False)
                comp = rng.integers(0, k, size=len(pick))
                vals[pick, comp] = (vals[pick, comp] + rng.integers(1, p, size=len(pick))) % p
        else:
            vals = (vals + _subspace_sample(inst.sig, box, rng, guard, mode)) % p
        changed += int((vals != x.values).any(axis=1).sum())
        new[alpha] = Pattern(x.alphabet, box, vals)
    return PerturbResult(orbit.replace_entries(new, delta), changed)


def chained_pseudo_orbit(
    inst: ShadowingInstance,
    t: int,
    delta,
    rng: np.random.Generator,
    box: SiteSet | None = None,
) -> PseudoOrbitTruncation:
    """A genuine ``delta``-pseudo-orbit for one generator on the full shift.

    ``x_0`` is random and ``x_{a+1}`` copies ``tau(x_a)`` on ``E_n`` only, with
    fresh random symbols elsewhere, so the errors accumulate along the orbit.
    """
    if inst.s != 1 or not isinstance(inst.sig, FullShift):
        raise ContractViolation("chained pseudo-orbits need one generator on the full shift")
    delta = _fraction(delta)
    n = resolution_index(delta)
    box = box if box is not None else orbit_box(inst, n)
    el = inst.exhaustion.level(n)
    tau = inst.generators[0]
    entries = {(0,): Pattern.random(inst.alphabet, box, rng)}
    for a in range(t):
        y = apply(tau, entries[(a,)])
        if not el.issubset(y.domain):
            raise InsufficientTruncation("box does not cover E_n + M", el.missing_from(y.domain)[:16])
        nxt = Pattern.random(inst.alphabet, box, rng)
        entries[(a + 1,)] = nxt.with_values(el, y.restrict(el).values)
    return PseudoOrbitTruncation(t, 1, box, entries, delta)


@dataclass(frozen=True)
class Validation:
    ok: bool
    level: int
    violation: tuple | None = None  # (alpha, sigma index, Distance)

    def __bool__(self):
        return self.ok

    def to_json(self) -> dict:
        v = None
        if self.violation is not None:
            alpha, sigma, d = self.violation
            v = {"alpha": list(alpha), "sigma": sigma, "distance": d.to_json()}
        return {"ok": self.ok, "level": self.level, "violation": v}


def _require(box: SiteSet, need: SiteSet, what: str):
    if not need.issubset(box):
        miss = need.missing_from(box)
        raise InsufficientResolution(f"spatial box misses {len(miss)} sites of {what}", miss[:16])


def validate_pseudo_orbit(po: PseudoOrbitTruncation, inst: ShadowingInstance, delta) -> Validation:
    """``d(tau_sigma(x_alpha), x_{alpha + e_sigma}) < delta`` whenever both indices lie in ``F_T``."""
    delta = _fraction(delta)
    if delta <= 0:
        raise ContractViolation("delta must be positive")
    if po.s != inst.s:
        raise ContractViolation("orbit and instance disagree on the number of generators")
    m = resolution_index(delta)
    el = inst.exhaustion.level(m)
    for g in inst.generators:
        _require(po.box, el.minkowski(g.memory), f"E_{m} + M_sigma")
    f = po.index_box
    for alpha in f:
        for i, g in enumerate(inst.generators):
            beta = tuple(a + u for a, u in zip(alpha, _unit(inst.s, i)))
            if beta not in f:
                continue
            d = hamming_distance(apply(g, po.entries[alpha]), po.entries[beta], inst.exhaustion, m)
            if not d.below(delta):
                return Validation(False, m, (alpha, i, d))
    return Validation(True, m)


# ---------------------------------------------------------------------------
# shadowing


SCOPE = (
    "certificate covers the truncation F_T at resolution n0 on the search box B*; "
    "absence means no pattern on B* meets the resolution-n0 conditions"
)


@dataclass(frozen=True, eq=False)
class ShadowingCertificate:
    point: Pattern
    residuals: dict  # alpha -> Distance
    epsilon: Fraction
    n0: int
    exact: bool  # False when the subshift restriction was heuristic
    scope: str = SCOPE

    def to_json(self) -> dict:
        return {
            "point": self.point.to_json(),
            "residuals": [{"alpha": list(a), "distance": d.to_json()} for a, d in sorted(self.residuals.items())],
            "epsilon": str(self.epsilon),
            "n0": self.n0,
            "exact": self.exact,
            "scope": self.scope,
        }


def search_box(inst: ShadowingInstance, t: int) -> SiteSet:
    """``B* = U_alpha (E_n0 + M_alpha)``."""
    el = inst.exhaustion.level(inst.n0)
    return reduce(SiteSet.union, [el.minkowski(inst.table[a].memory) for a in _cube(t, inst.s)])


def _residuals(x: Pattern, po: PseudoOrbitTruncation, inst: ShadowingInstance) -> dict:
    out = {}
    for alpha in po.index_box:
        y = apply(inst.table[alpha], x)
        common = y.domain.intersection(po.box)
        lvl = resolvable_level(common, inst.exhaustion)
        out[alpha] = hamming_distance(y, po.entries[alpha], inst.exhaustion, lvl)
    return out


def find_shadowing_point(po: PseudoOrbitTruncation, inst: ShadowingInstance, mode="auto") -> ShadowingCertificate | None:
    """Solve ``tau_alpha(x)|_{E_n0} = x_alpha|_{E_n0}`` for all ``alpha`` in ``F_T``.

    Unknowns are the symbols of ``x`` on a box containing ``B*``; for SFTs the
    restriction system of ``Sigma`` on ``B*`` is added, so ``x|_{B*}`` extends
    to a point of ``Sigma`` (exactly for r = 1, heuristically otherwise).
    """
    if po.s != inst.s:
        raise ContractViolation("orbit and instance disagree on the number of generators")
    n0 = inst.n0
    el = inst.exhaustion.level(n0)
    _require(po.box, el, f"E_{n0}")
    p, k = inst.alphabet.p, inst.alphabet.k
    bstar = search_box(inst, po.T)
    system = restriction_system(inst.sig, bstar, mode)
    big = system.box
    # E_n0 columns first, then the rest of the box
    in_e = el.index_of(big.coords)
    order = np.argsort(in_e < 0, kind="stable")
    site_col = np.empty(len(big), dtype=np.int64)
    site_col[order] = np.arange(len(big))
    colmap = (site_col[:, None] * k + np.arange(k)[None, :]).reshape(-1)

    eng = SparseEchelon(p)
    rows = []
    epos = po.box.index_of(el.coords)
    for alpha in po.index_box:
        rhs = po.entries[alpha].values[epos].reshape(-1)
        for i, row in rule_rows(inst.table[alpha], el, big):
            rows.append(({int(colmap[c]): v for c, v in row.items()}, int(rhs[i])))
    for row in system.rows:
        rows.append(({int(colmap[c]): v for c, v in row.items()}, 0))
    rows.sort(key=lambda rv: len(rv[0]))
    for row, rhs in rows:
        if row:
            eng.add(row, rhs)
        elif rhs:
            eng.inconsistent = True
        if eng.inconsistent:
            return None
    sol = eng.solution(k * len(big))
    if sol is None:
        return None
    vals = sol[colmap].reshape(len(big), k)
    point = Pattern(inst.alphabet, big, vals).restrict(bstar)
    res = _residuals(point, po, inst)
    if not all(d.below(inst.epsilon) for d in res.values()):
        raise AssertionError("solver produced a point that does not shadow; linear system is inconsistent with the metric")
    return ShadowingCertificate(point, res, inst.epsilon, n0, system.exact)


def verify_shadowing(x: Pattern, po: PseudoOrbitTruncation, inst: ShadowingInstance, check_membership: bool = True) -> bool:
    """Recompute ``d(tau_alpha(x), x_alpha) < epsilon`` for every ``alpha``.

    With ``check_membership`` the point must also satisfy every local
    constraint of the subshift inside its domain.
    """
    n0 = inst.n0
    el = inst.exhaustion.level(n0)
    _require(po.box, el, f"E_{n0}")
    for alpha in po.index_box:
        t = inst.table[alpha]
        _require(x.domain, el.minkowski(t.memory), f"E_{n0} + M_alpha")
        d = hamming_distance(apply(t, x), po.entries[alpha], inst.exhaustion, n0)
        if not d.below(inst.epsilon):
            return False
    if check_membership and not isinstance(inst.sig, FullShift):
        p = inst.alphabet.p
        vec = x.vector()
        for row in local_constraint_rows(inst.sig, x.domain):
            if sum(v * int(vec[c]) for c, v in row.items()) % p:
                return False
    return True


# ---------------------------------------------------------------------------
# counter-example over the direct sum of Z/2


@dataclass(frozen=True)
class CounterexampleReport:
    n: int
    m: int
    a: int
    b: int
    pseudo_orbit_valid: bool
    candidates: tuple  # (symbol, shadows, witness g as a bit list or None)
    checked_elements: int

    @property
    def shadowing_points(self) -> int:
        return sum(1 for _, ok, _ in self.candidates if ok)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "a": self.a,
            "b": self.b,
            "epsilon": "1/2",
            "delta": str(Fraction(1, 2**self.n)),
            "pseudoOrbitValid": self.pseudo_orbit_valid,
            "checkedElements": self.checked_elements,
            "candidates": [
                {"symbol": c, "shadows": ok, "witness": w} for c, ok, w in self.candidates
            ],
            "shadowingPoints": self.shadowing_points,
            "verdict": "no shadowing point" if self.shadowing_points == 0 else "shadowed",
        }


def _bits(g: int) -> list[int]:
    """Coordinates of ``g`` in the direct sum, lowest index first (trailing zeros dropped)."""
    return [(g >> i) & 1 for i in range(max(g.bit_length(), 1))]


def counterexample_demo(n: int, m: int, a: int, b: int = 1) -> CounterexampleReport:
    """Constant configurations over the direct sum of countably many Z/2.

    Group elements are bit masks, ``E_k`` is the set of masks below ``2^k`` and
    a constant configuration is just its symbol.  The family ``x_g = 0`` for
    ``g`` in ``E_n`` and ``b`` otherwise is checked to be an
    ``(E_m, d, 2^-n)``-pseudo-orbit, then each of the ``a`` constants is tested
    as an ``epsilon = 1/2`` shadow against every ``g`` below ``2^(n+1)``.
    """
    if m < 1 or n < m:
        raise ContractViolation(f"need n >= m >= 1, got n={n}, m={m}")
    if a < 2:
        raise ContractViolation("the alphabet needs at least two symbols")
    if not 0 < b < a:
        raise ContractViolation("b must be a nonzero symbol")
    delta = Fraction(1, 2**n)
    eps = Fraction(1, 2)
    top = 1 << (n + 1)

    def x(g: int) -> int:
        return 0 if g < (1 << n) else b

    def dist(c1: int, c2: int) -> Fraction:
        # constants agree everywhere or nowhere
        return Fraction(0) if c1 == c2 else Fraction(1)

    # the shift fixes constants, so sigma * x_g = x_g
    valid = all(dist(x(g), x(g ^ sig)) < delta for g in range(top) for sig in range(1 << m))
    cands = []
    for c in range(a):
        witness = next((g for g in range(top) if not dist(c, x(g)) < eps), None)
        cands.append((c, witness is None, None if witness is None else _bits(witness)))
    return CounterexampleReport(n, m, a, b, valid, tuple(cands), top)
