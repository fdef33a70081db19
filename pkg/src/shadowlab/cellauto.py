"""Linear cellular automata over N^r with alphabet F_p^k.

A :class:`LinearCA` is a memory set ``M`` plus a ``k x k|M|`` rule matrix whose
column blocks follow the sorted memory:

    tau(x)(g) = sum_j rule[:, block j] @ x(g + M[j])
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import reduce
from typing import Sequence

import numpy as np

from shadowlab.errors import ContractViolation, ExponentOverflow, NonCommutingGenerators
from shadowlab.fplinalg import Matrix, Subspace, inverse, kernel
from shadowlab.lattice import Exhaustion, SiteSet, hamming_distance, resolvable_level, stability_index
from shadowlab.shiftspace import (
    Alphabet,
    Pattern,
    Restriction,
    SubshiftSpec,
    local_pattern_space,
    restriction,
)

__all__ = [
    "LinearCA",
    "MonomialTable",
    "identity_ca",
    "shift_ca",
    "sum_rule",
    "pointwise_ca",
    "from_blocks",
    "from_subspace_rule",
    "apply",
    "compose",
    "monomial",
    "commute",
    "same_map",
    "lipschitz_constant",
    "preserves_subshift",
    "image_restriction",
    "rule_matrix",
    "rule_rows",
    "stacked_domain",
    "stacked_rule",
    "DEFAULT_MAX_EXPONENT",
    "ca_from_config",
    "check_lipschitz_pair",
    "random_ca",
]

DEFAULT_MAX_EXPONENT = 16


@dataclass(frozen=True, eq=False)
class LinearCA:
    alphabet: Alphabet
    r: int
    memory: SiteSet
    rule: Matrix

    def __post_init__(self):
        k = self.alphabet.k
        if self.memory.r != self.r:
            raise ContractViolation("memory set has the wrong dimension")
        if len(self.memory) == 0:
            raise ContractViolation("memory set must be nonempty")
        if self.rule.p != self.alphabet.p:
            raise ContractViolation("rule matrix is over a different field")
        if self.rule.shape != (k, k * len(self.memory)):
            raise ContractViolation(f"rule must be {k} x {k * len(self.memory)}, got {self.rule.shape}")

    def blocks(self) -> dict[tuple[int, ...], np.ndarray]:
        k = self.alphabet.k
        return {site: self.rule.data[:, j * k : (j + 1) * k] for j, site in enumerate(self.memory)}

    def canonical(self) -> LinearCA:
        """Drop all-zero blocks away from the origin (memory stays sorted)."""
        origin = (0,) * self.r
        kept = {s: b for s, b in self.blocks().items() if s == origin or b.any()}
        if not kept:
            kept = {origin: np.zeros((self.alphabet.k, self.alphabet.k), dtype=np.int64)}
        return from_blocks(self.alphabet, self.r, kept)

    def to_json(self) -> dict:
        return {"memory": self.memory.to_json(), "rule": self.rule.to_text()}

    @classmethod
    def from_json(cls, alphabet: Alphabet, r: int, obj) -> LinearCA:
        if isinstance(obj, str):
            obj = json.loads(obj)
        if "memory" not in obj or "rule" not in obj:
            raise ContractViolation("CA JSON needs 'memory' and 'rule'")
        listed = [tuple(s) for s in obj["memory"]]
        mem = SiteSet.from_sites(listed, r)
        if len(mem) != len(listed):
            raise ContractViolation("CA memory lists a site twice")
        rule = Matrix.from_text(obj["rule"])
        k = alphabet.k
        if rule.shape != (k, k * len(listed)):
            raise ContractViolation(f"CA rule must be {k} x {k * len(listed)}")
        blocks = {s: rule.data[:, j * k : (j + 1) * k] for j, s in enumerate(listed)}
        return from_blocks(alphabet, r, blocks)

    def __repr__(self):
        return f"LinearCA(p={self.alphabet.p}, k={self.alphabet.k}, memory={self.memory.sites()})"


def from_blocks(alphabet: Alphabet, r: int, blocks: dict) -> LinearCA:
    """Build a CA from ``{offset: k x k block}``."""
    k = alphabet.k
    mem = SiteSet.from_sites(blocks.keys(), r)
    rule = np.zeros((k, k * len(mem)), dtype=np.int64)
    for j, site in enumerate(mem):
        rule[:, j * k : (j + 1) * k] = np.asarray(blocks[site], dtype=np.int64).reshape(k, k)
    return LinearCA(alphabet, r, mem, Matrix(alphabet.p, rule))


def identity_ca(alphabet: Alphabet, r: int) -> LinearCA:
    return from_blocks(alphabet, r, {(0,) * r: np.eye(alphabet.k, dtype=np.int64)})


def shift_ca(alphabet: Alphabet, g: Sequence[int]) -> LinearCA:
    """``x -> g * x``."""
    return from_blocks(alphabet, len(g), {tuple(int(v) for v in g): np.eye(alphabet.k, dtype=np.int64)})


def sum_rule(alphabet: Alphabet, r: int, offsets: Sequence[Sequence[int]], coeffs: Sequence[int] | None = None) -> LinearCA:
    """Constant-coefficient rule ``sum_i c_i x(g + m_i)``."""
    coeffs = [1] * len(offsets) if coeffs is None else list(coeffs)
    if len(coeffs) != len(offsets):
        raise ContractViolation("one coefficient per offset")
    acc: dict = {}
    eye = np.eye(alphabet.k, dtype=np.int64)
    for off, c in zip(offsets, coeffs):
        key = tuple(int(v) for v in off)
        acc[key] = acc.get(key, 0) + c * eye
    return from_blocks(alphabet, r, acc)


def pointwise_ca(alphabet: Alphabet, r: int, matrix) -> LinearCA:
    """``x(g) -> matrix @ x(g)``."""
    return from_blocks(alphabet, r, {(0,) * r: np.asarray(matrix, dtype=np.int64)})


def from_subspace_rule(alphabet: Alphabet, r: int, memory: SiteSet, domain: Subspace, values) -> LinearCA:
    """Extend a linear rule known only on ``domain`` (a subspace of ``A^M``).

    ``values[:, i]`` is the image of the ``i``-th reduced basis vector of
    ``domain``.  The rule is extended by zero on the complement spanned by the
    standard vectors at non-pivot coordinates, so it agrees with the given map
    on ``domain``.
    """
    p, k = alphabet.p, alphabet.k
    n = k * len(memory)
    if domain.ambient_dim != n:
        raise ContractViolation("domain subspace must live in A^M")
    vals = np.asarray(values, dtype=np.int64).reshape(k, domain.dim)
    free = [c for c in range(n) if c not in set(domain.pivots)]
    q = np.zeros((n, n), dtype=np.int64)
    q[: domain.dim] = domain.basis.data
    for i, c in enumerate(free):
        q[domain.dim + i, c] = 1
    v_all = np.zeros((k, n), dtype=np.int64)
    v_all[:, : domain.dim] = vals
    # rule @ q.T = v_all
    rule = Matrix(p, v_all) @ inverse(Matrix(p, q.T))
    return LinearCA(alphabet, r, memory, rule)


# ---------------------------------------------------------------------------
# application


def _eroded(domain: SiteSet, memory: SiteSet) -> tuple[SiteSet, np.ndarray]:
    """``{g : g + M <= domain}`` and the positions of ``g + m`` in ``domain``."""
    r = domain.r
    if len(domain) == 0:
        return SiteSet.empty(r), np.zeros((0, len(memory)), dtype=np.int64)
    if domain.is_box:
        lo, hi = (np.array(v) for v in domain.box_bounds)
        mlo, mhi = memory.coords.min(axis=0), memory.coords.max(axis=0)
        out_lo = np.maximum(lo - mlo, 0)
        out_hi = hi - mhi
        out = SiteSet.box(tuple(out_lo), tuple(out_hi))
    else:
        cand = domain.coords - memory.coords[0]
        cand = cand[(cand >= 0).all(axis=1)]
        ok = np.ones(len(cand), dtype=bool)
        for m in memory.coords[1:]:
            ok &= domain.index_of(cand + m) >= 0
        out = SiteSet(r, cand[ok], _trusted=True)
    idx = np.stack([domain.index_of(out.coords + m) for m in memory.coords], axis=1)
    idx = idx.reshape(len(out), len(memory))
    return out, idx


def apply(t: LinearCA, x: Pattern) -> Pattern:
    """Apply ``t`` on the memory-eroded domain of ``x`` (possibly empty)."""
    if x.alphabet != t.alphabet or x.r != t.r:
        raise ContractViolation("pattern and CA disagree on alphabet or dimension")
    out, idx = _eroded(x.domain, t.memory)
    k, p = t.alphabet.k, t.alphabet.p
    if len(out) == 0:
        return Pattern.zeros(t.alphabet, out)
    gathered = x.values[idx].reshape(len(out), len(t.memory) * k)
    return Pattern(t.alphabet, out, (gathered @ t.rule.data.T) % p)


def _check_pair(t1: LinearCA, t2: LinearCA):
    if t1.alphabet != t2.alphabet or t1.r != t2.r:
        raise ContractViolation("CAs over different alphabets or dimensions")


def compose(t1: LinearCA, t2: LinearCA) -> LinearCA:
    """``t1 o t2``; the memory is the full Minkowski sum ``M1 + M2``.

    Blocks that cancel stay in place as zero blocks; use :meth:`LinearCA.canonical`
    to prune them.
    """
    _check_pair(t1, t2)
    p = t1.alphabet.p
    acc: dict = {}
    for m1, b1 in t1.blocks().items():
        for m2, b2 in t2.blocks().items():
            key = tuple(a + b for a, b in zip(m1, m2))
            acc[key] = (acc.get(key, 0) + b1 @ b2) % p
    return from_blocks(t1.alphabet, t1.r, acc)


def same_map(t1: LinearCA, t2: LinearCA) -> bool:
    """Equal as maps: blocks agree on the union of memories (missing = zero)."""
    _check_pair(t1, t2)
    b1, b2 = t1.blocks(), t2.blocks()
    zero = np.zeros((t1.alphabet.k,) * 2, dtype=np.int64)
    return all(np.array_equal(b1.get(s, zero), b2.get(s, zero)) for s in set(b1) | set(b2))


def commute(t1: LinearCA, t2: LinearCA) -> bool:
    return same_map(compose(t1, t2), compose(t2, t1))


def _check_commuting(gens: Sequence[LinearCA]):
    for i in range(len(gens)):
        for j in range(i + 1, len(gens)):
            if not commute(gens[i], gens[j]):
                raise NonCommutingGenerators(f"generators {i} and {j} do not commute")


def monomial(
    gens: Sequence[LinearCA],
    alpha: Sequence[int],
    check: bool = True,
    max_exponent: int = DEFAULT_MAX_EXPONENT,
) -> LinearCA:
    """``tau_1^a_1 o ... o tau_s^a_s`` by repeated squaring per generator."""
    if not gens:
        raise ContractViolation("need at least one generator")
    if len(alpha) != len(gens):
        raise ContractViolation("exponent vector length differs from the generator count")
    if any(a < 0 for a in alpha):
        raise ContractViolation("exponents must be non-negative")
    if sum(alpha) > max_exponent:
        raise ExponentOverflow(f"|alpha| = {sum(alpha)} exceeds the budget {max_exponent}")
    if check:
        _check_commuting(gens)
    result = identity_ca(gens[0].alphabet, gens[0].r)
    for g, a in zip(gens, alpha):
        power = identity_ca(g.alphabet, g.r)
        base = g
        while a:
            if a & 1:
                power = compose(power, base)
            a >>= 1
            if a:
                base = compose(base, base)
        result = compose(result, power)
    return result


class MonomialTable:
    """Memoised monomials of one commuting generator family."""

    def __init__(self, gens: Sequence[LinearCA], check: bool = True, max_exponent: int = DEFAULT_MAX_EXPONENT):
        if not gens:
            raise ContractViolation("need at least one generator")
        if check:
            _check_commuting(gens)
        self.gens = list(gens)
        self.max_exponent = max_exponent
        self._cache: dict[tuple[int, ...], LinearCA] = {
            (0,) * len(gens): identity_ca(gens[0].alphabet, gens[0].r)
        }

    @property
    def s(self) -> int:
        return len(self.gens)

    def __getitem__(self, alpha) -> LinearCA:
        alpha = tuple(int(a) for a in alpha)
        hit = self._cache.get(alpha)
        if hit is not None:
            return hit
        if len(alpha) != self.s or any(a < 0 for a in alpha):
            raise ContractViolation(f"bad exponent {alpha}")
        if sum(alpha) > self.max_exponent:
            raise ExponentOverflow(f"|alpha| = {sum(alpha)} exceeds the budget {self.max_exponent}")
        i = max(j for j, a in enumerate(alpha) if a)
        prev = list(alpha)
        prev[i] -= 1
        val = compose(self[tuple(prev)], self.gens[i])
        self._cache[alpha] = val
        return val


# ---------------------------------------------------------------------------
# metric and subshift interaction


def lipschitz_constant(t: LinearCA, e: Exhaustion) -> int:
    """``2^n0`` with ``n0`` the stability index of the memory set."""
    return 2 ** stability_index(t.memory, e).n0


def preserves_subshift(t: LinearCA, sig: SubshiftSpec, depth: int) -> bool:
    """Check ``t`` maps local pattern spaces on cubes into the eroded local spaces."""
    _ = _sig_matches(t, sig)
    reach = t.memory.max_coord()
    for side in range(1, depth + reach + 1):
        box = SiteSet.cube(t.r, side)
        space = local_pattern_space(sig, box)
        out_dom, _idx = _eroded(box, t.memory)
        if len(out_dom) == 0:
            continue
        target = local_pattern_space(sig, out_dom)
        for vec in space.basis.data:
            y = apply(t, Pattern.from_vector(t.alphabet, box, vec))
            if y.vector() not in target:
                return False
    return True


def _sig_matches(t: LinearCA, sig: SubshiftSpec) -> bool:
    if sig.alphabet != t.alphabet or sig.r != t.r:
        raise ContractViolation("CA and subshift disagree on alphabet or dimension")
    return True


def rule_rows(t: LinearCA, e: SiteSet, domain: SiteSet, row_offset: int = 0, col_offset: int = 0):
    """Sparse rows of the map ``A^domain -> A^e``, ``x -> tau(x)|_e``.

    Yields ``(row_index, {col: coeff})``.
    """
    k = t.alphabet.k
    rule = t.rule.data
    pos = np.stack([domain.index_of(e.coords + m) for m in t.memory.coords], axis=1).reshape(len(e), len(t.memory))
    if (pos < 0).any():
        raise ContractViolation("domain does not cover e + M")
    cols = (pos[:, :, None] * k + np.arange(k)[None, None, :]).reshape(len(e), -1) + col_offset
    nz = [np.flatnonzero(rule[c]) for c in range(k)]
    for i in range(len(e)):
        ci = cols[i]
        for c in range(k):
            yield row_offset + i * k + c, {int(ci[j]): int(rule[c, j]) for j in nz[c]}


def rule_matrix(t: LinearCA, e: SiteSet, domain: SiteSet) -> Matrix:
    """Dense version of :func:`rule_rows`."""
    k = t.alphabet.k
    mat = np.zeros((k * len(e), k * len(domain)), dtype=np.int64)
    for i, row in rule_rows(t, e, domain):
        for c, v in row.items():
            mat[i, c] = (mat[i, c] + v) % t.alphabet.p
    return Matrix(t.alphabet.p, mat)


def image_restriction(t: LinearCA, sig: SubshiftSpec, e: SiteSet, mode="auto", patience: int = 3) -> Restriction:
    """``(tau(Sigma))_e`` as the image of ``Sigma_{e+M}``; flags follow the restriction."""
    _sig_matches(t, sig)
    dom = e.minkowski(t.memory)
    res = restriction(sig, dom, mode, patience)
    mat = rule_matrix(t, e, dom)
    img = Subspace.span(t.alphabet.p, (mat @ res.space.basis.T).data.T, t.alphabet.k * len(e))
    return replace(res, space=img)


def stacked_domain(table: MonomialTable, f: SiteSet, e: SiteSet) -> SiteSet:
    """``e + M_F`` with ``M_F`` the union of memories of the monomials in ``f``."""
    mems = [table[alpha].memory for alpha in f]
    m_f = reduce(SiteSet.union, mems)
    return e.minkowski(m_f)


def stacked_rule(gens, f: SiteSet, e: SiteSet) -> Matrix:
    """``A^{e + M_F} -> prod_{alpha in f} A^e`` stacking ``tau_alpha(x)|_e``.

    Row blocks follow the sorted order of ``f`` and then ``e``; columns follow
    :func:`stacked_domain`.
    """
    table = gens if isinstance(gens, MonomialTable) else MonomialTable(gens)
    dom = stacked_domain(table, f, e)
    blocks = [rule_matrix(table[alpha], e, dom).data for alpha in f]
    k = table.gens[0].alphabet.k
    data = np.vstack(blocks) if blocks else np.zeros((0, k * len(dom)), dtype=np.int64)
    return Matrix(table.gens[0].alphabet.p, data)


def kernel_of(t: LinearCA, box: SiteSet) -> Subspace:
    """Patterns on ``box`` killed by ``t`` on the eroded box."""
    out, _ = _eroded(box, t.memory)
    return kernel(rule_matrix(t, out, box))


def ca_from_config(alphabet: Alphabet, r: int, obj) -> LinearCA:
    """Accept ``{"memory", "rule"}`` or one of the shorthands ``shift``, ``sum``, ``pointwise``."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    if not isinstance(obj, dict):
        raise ContractViolation("generator config must be an object")
    if "shift" in obj:
        g = tuple(int(v) for v in obj["shift"])
        if len(g) != r:
            raise ContractViolation(f"generator 'shift' needs {r} coordinates")
        return shift_ca(alphabet, g)
    if "sum" in obj:
        body = obj["sum"]
        if "offsets" not in body:
            raise ContractViolation("generator 'sum' needs 'offsets'")
        return sum_rule(alphabet, r, body["offsets"], body.get("coeffs"))
    if "pointwise" in obj:
        mat = np.asarray(obj["pointwise"], dtype=np.int64)
        if mat.shape != (alphabet.k, alphabet.k):
            raise ContractViolation(f"generator 'pointwise' must be {alphabet.k} x {alphabet.k}")
        return pointwise_ca(alphabet, r, mat % alphabet.p)
    return LinearCA.from_json(alphabet, r, obj)


def check_lipschitz_pair(t: LinearCA, x: Pattern, y: Pattern, e: Exhaustion) -> bool | None:
    """Test ``d(t x, t y) <= C d(x, y)`` on one pair of truncations.

    Returns ``None`` when the truncation cannot decide (the pair agrees on every
    resolvable level, or ``t x`` and ``t y`` agree further than can be seen).
    """
    c = lipschitz_constant(t, e)
    lx = resolvable_level(x.domain.intersection(y.domain), e)
    dxy = hamming_distance(x, y, e, lx)
    if not dxy.exact:
        return None
    bound = c * dxy.value
    if bound >= 1:
        return True
    tx, ty = apply(t, x), apply(t, y)
    lt = resolvable_level(tx.domain.intersection(ty.domain), e)
    dt = hamming_distance(tx, ty, e, lt)
    if dt.exact or dt.value <= bound:
        return dt.value <= bound
    return None


def random_ca(alphabet: Alphabet, r: int, rng: np.random.Generator, diameter: int = 8, max_sites: int = 4) -> LinearCA:
    """Random memory inside ``{0..diameter}^r`` with random ``k x k`` blocks."""
    size = int(rng.integers(1, max_sites + 1))
    offsets = {tuple(int(v) for v in rng.integers(0, diameter + 1, size=r)) for _ in range(size)}
    k = alphabet.k
    return from_blocks(alphabet, r, {m: rng.integers(0, alphabet.p, size=(k, k)) for m in offsets})
