"""Column factorizations of a linear subshift under commuting linear CAs.

For a window ``e`` and commuting generators ``tau_1..tau_s`` the column map is

    Psi_e(x)(alpha) = tau_alpha(x)|_e,   alpha in N^s,

and ``Lambda = Psi_e(Sigma)`` is a subshift of ``(Sigma_e)^(N^s)``.  Finite
restrictions ``Lambda_F`` are images of ``Sigma_{e + M_F}`` under the stacked
rule.  Window estimation compares dimensions, so it runs on sparse systems and
scales to windows with thousands of sites.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from shadowlab.cellauto import MonomialTable, apply, rule_rows, stacked_domain, stacked_rule
from shadowlab.errors import ContractViolation, InsufficientTruncation
from shadowlab.fplinalg import SparseEchelon, Subspace
from shadowlab.lattice import SiteSet
from shadowlab.shiftspace import (
    Alphabet,
    LinearSFT,
    Pattern,
    SubshiftSpec,
    local_pattern_space,
    restriction,
    restriction_system,
)

__all__ = [
    "ColumnFactorizationSpec",
    "LambdaRestriction",
    "WindowEstimate",
    "ChainReport",
    "index_box",
    "psi",
    "lambda_restriction",
    "lambda_dimension",
    "window_holds",
    "candidate_space",
    "estimate_sft_window",
    "chain_report",
]


@dataclass(frozen=True, eq=False)
class ColumnFactorizationSpec:
    sig: SubshiftSpec
    e: SiteSet
    generators: tuple
    table: MonomialTable = field(init=False, repr=False)

    def __post_init__(self):
        gens = tuple(self.generators)
        if not gens:
            raise ContractViolation("need at least one generator")
        for g in gens:
            if g.alphabet != self.sig.alphabet or g.r != self.sig.r:
                raise ContractViolation("generator alphabet or dimension differs from the subshift")
        if self.e.r != self.sig.r:
            raise ContractViolation("window e has the wrong dimension")
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "table", MonomialTable(gens, check=True))

    @property
    def s(self) -> int:
        return len(self.generators)

    @property
    def alphabet(self) -> Alphabet:
        return self.sig.alphabet


def index_box(t: int, s: int) -> SiteSet:
    """``F_T = {0..T}^s``."""
    if t < 0:
        raise ContractViolation("index box size T must be >= 0")
    return SiteSet.cube(s, t + 1)


def _check_index_box(f: SiteSet, s: int):
    if f.r != s:
        raise ContractViolation(f"index set lives in N^{f.r}, generators need N^{s}")
    if len(f) == 0:
        raise ContractViolation("index box is empty")
    lo, hi = f.box_bounds if f.is_box else (None, None)
    if lo is None or any(lo) or len(set(hi)) != 1:
        raise ContractViolation("index sets must be cubes {0..T}^s")


def psi(x: Pattern, spec: ColumnFactorizationSpec, f: SiteSet) -> dict[tuple[int, ...], Pattern]:
    """``alpha -> tau_alpha(x)|_e`` for ``alpha`` in ``f``."""
    _check_index_box(f, spec.s)
    out = {}
    for alpha in f:
        t = spec.table[alpha]
        need = spec.e.minkowski(t.memory)
        if not need.issubset(x.domain):
            miss = need.missing_from(x.domain)
            raise InsufficientTruncation(
                f"pattern misses {len(miss)} sites needed for alpha={alpha}", miss[:16]
            )
        out[alpha] = apply(t, x).restrict(spec.e)
    return out


@dataclass(frozen=True)
class LambdaRestriction:
    space: Subspace  # inside (A^e)^f, layout: alpha-major, then e, then component
    exact: bool
    heuristic: bool


def lambda_restriction(spec: ColumnFactorizationSpec, f: SiteSet, mode="auto", patience: int = 3) -> LambdaRestriction:
    """``Lambda_F`` as the image of ``Sigma_{e + M_F}`` under the stacked rule."""
    _check_index_box(f, spec.s)
    dom = stacked_domain(spec.table, f, spec.e)
    res = restriction(spec.sig, dom, mode, patience)
    mat = stacked_rule(spec.table, f, spec.e)
    img = (mat @ res.space.basis.T).data.T
    space = Subspace.span(spec.alphabet.p, img, mat.rows)
    return LambdaRestriction(space, res.exact, res.heuristic)


# ---------------------------------------------------------------------------
# sparse dimension computations


class _Columns:
    """Allocates column ids so that earlier-registered blocks are eliminated first."""

    def __init__(self):
        self.n = 0

    def block(self, size: int) -> int:
        start = self.n
        self.n += size
        return start


def _box_colmap(box: SiteSet, e: SiteSet, k: int, start_e: int, start_rest: int) -> np.ndarray:
    """Column id per box coordinate: ``e`` sites in one block, the rest in another."""
    in_e = e.index_of(box.coords)
    colmap = np.empty(len(box) * k, dtype=np.int64)
    rest_rank = np.cumsum(in_e < 0) - 1
    for i in range(len(box)):
        if in_e[i] >= 0:
            base = start_e + in_e[i] * k
        else:
            base = start_rest + rest_rank[i] * k
        colmap[i * k : i * k + k] = np.arange(base, base + k)
    return colmap


def _remap(row: dict, colmap: np.ndarray) -> dict:
    return {int(colmap[c]): v for c, v in row.items()}


def _feed(eng: SparseEchelon, rows):
    for row in sorted(rows, key=len):
        if row:
            eng.add(row)


def lambda_dimension(spec: ColumnFactorizationSpec, f: SiteSet, mode="auto", patience: int = 3) -> tuple[int, bool]:
    """``dim Lambda_F`` without materialising a basis; returns ``(dim, exact)``."""
    _check_index_box(f, spec.s)
    p, k = spec.alphabet.p, spec.alphabet.k
    e = spec.e
    dom = stacked_domain(spec.table, f, e)
    system = restriction_system(spec.sig, dom, mode, patience)
    box = system.box
    colmap = _box_colmap(box, e, k, 0, k * len(e))
    k_rows = [_remap(r, colmap) for r in system.rows]
    eng_k = SparseEchelon(p)
    _feed(eng_k, k_rows)
    eng = SparseEchelon(p)
    s_rows = []
    for alpha in f:
        for _, row in rule_rows(spec.table[alpha], e, box):
            s_rows.append(_remap(row, colmap))
    _feed(eng, s_rows + k_rows)
    return eng.rank - eng_k.rank, system.exact


def _candidate_dimension(spec: ColumnFactorizationSpec, n: int, depth: int, mode, patience) -> tuple[int, bool]:
    """Dimension of the SFT with window ``F_N`` and constraint ``Lambda_{F_N}`` on ``F_{N+depth}``."""
    p, k, e, s = spec.alphabet.p, spec.alphabet.k, spec.e, spec.s
    f_n = index_box(n, s)
    f_test = index_box(n + depth, s)
    betas = index_box(depth, s)
    dom = stacked_domain(spec.table, f_n, e)
    system = restriction_system(spec.sig, dom, mode, patience)
    box = system.box
    ne = k * len(e)

    cols = _Columns()
    # copies of the box for every translate: e-part first, then the outer part
    x_e_start = [cols.block(ne) for _ in betas]
    x_rest_start = [cols.block(k * len(box) - ne) for _ in betas]
    # z blocks, larger alpha first
    f_sorted = sorted(f_test, key=lambda a: (-sum(a), tuple(-v for v in a)))
    z_start = {alpha: cols.block(ne) for alpha in f_sorted}
    nz = ne * len(f_test)

    rows: list[dict] = []
    for bi, beta in enumerate(betas):
        colmap = _box_colmap(box, e, k, x_e_start[bi], x_rest_start[bi])
        rows.extend(_remap(r, colmap) for r in system.rows)
        for alpha in f_n:
            target = tuple(b + a for b, a in zip(beta, alpha))
            zs = z_start[target]
            for i, row in rule_rows(spec.table[alpha], e, box):
                rr = _remap(row, colmap)
                c = zs + i
                rr[c] = (rr.get(c, 0) - 1) % p
                rows.append(rr)
    eng = SparseEchelon(p)
    _feed(eng, rows)

    # rank of [K; S_N] on one copy
    colmap = _box_colmap(box, e, k, 0, ne)
    k_rows = [_remap(r, colmap) for r in system.rows]
    s_rows = [_remap(row, colmap) for alpha in f_n for _, row in rule_rows(spec.table[alpha], e, box)]
    eng_ks = SparseEchelon(p)
    _feed(eng_ks, s_rows + k_rows)
    dim = nz - eng.rank + len(betas) * eng_ks.rank
    return dim, system.exact


def window_holds(spec: ColumnFactorizationSpec, n: int, depth: int = 1, mode="auto", patience: int = 3) -> tuple[bool, bool]:
    """Does the ``F_N`` window cut out ``Lambda`` on ``F_{N+depth}``?  ``(holds, exact)``."""
    cand, ex1 = _candidate_dimension(spec, n, depth, mode, patience)
    lam, ex2 = lambda_dimension(spec, index_box(n + depth, spec.s), mode, patience)
    if lam > cand and ex1 and ex2:
        raise AssertionError("Lambda_F is not contained in its window closure; inconsistent restriction")
    return cand == lam, ex1 and ex2


def candidate_space(spec: ColumnFactorizationSpec, n: int, depth: int = 1, mode="auto", patience: int = 3) -> Subspace:
    """Explicit form of the window closure on ``F_{N+depth}`` (small cases)."""
    s = spec.s
    lam_n = lambda_restriction(spec, index_box(n, s), mode, patience).space
    col_alpha = Alphabet(spec.alphabet.p, spec.alphabet.k * len(spec.e))
    sft = LinearSFT(col_alpha, s, index_box(n, s), lam_n)
    return local_pattern_space(sft, index_box(n + depth, s))


@dataclass(frozen=True)
class WindowEstimate:
    N: int | None
    certified: bool
    found: bool
    test_depth: int
    tried: tuple[int, ...]
    heuristic_flags: tuple[str, ...]
    dims: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {
            "N": self.N,
            "certified": self.certified,
            "found": self.found,
            "testDepth": self.test_depth,
            "tried": list(self.tried),
            "dims": list(self.dims),
            "heuristicFlags": list(self.heuristic_flags),
        }


def estimate_sft_window(
    spec: ColumnFactorizationSpec,
    budget: int = 3,
    patience: int = 3,
    test_depth: int = 1,
    mode="auto",
) -> WindowEstimate:
    """Smallest ``N <= budget`` whose ``F_N`` constraints reproduce ``Lambda`` on ``F_{N+test_depth}``.

    ``certified`` is true only when every restriction involved was exact; the
    check itself is always limited to the test box.
    """
    if budget < 1:
        raise ContractViolation("window budget must be >= 1")
    if test_depth < 1:
        raise ContractViolation("test depth must be >= 1")
    tried = []
    dims = []
    flags = []
    exact_all = True
    for n in range(1, budget + 1):
        tried.append(n)
        holds, exact = window_holds(spec, n, test_depth, mode, patience)
        dims.append(lambda_dimension(spec, index_box(n, spec.s), mode, patience)[0])
        if not exact:
            exact_all = False
            flags.append(f"N={n}: restriction computed with the patience heuristic")
        if holds:
            return WindowEstimate(n, exact_all, True, test_depth, tuple(tried), tuple(flags), tuple(dims))
    flags.append("no window found within budget")
    return WindowEstimate(None, False, False, test_depth, tuple(tried), tuple(flags), tuple(dims))


@dataclass(frozen=True)
class ChainReport:
    dims: tuple[int, ...]
    stabilization_index: int | None
    stabilized: bool
    strict_drops: int
    exact: bool
    heuristic: bool

    def to_json(self) -> dict:
        return {
            "dims": list(self.dims),
            "stabilizationIndex": self.stabilization_index,
            "stabilized": self.stabilized,
            "strictDrops": self.strict_drops,
            "exact": self.exact,
            "heuristicFlags": ["patience rule"] if self.heuristic else [],
        }


def chain_report(sig: SubshiftSpec, e: SiteSet, max_steps: int = 32, patience: int = 3, mode="auto") -> ChainReport:
    """Dimension trace of the restriction chain and where it settles."""
    if max_steps < 1:
        raise ContractViolation("max_steps must be >= 1")
    res = restriction(sig, e, mode, patience, max_steps)
    return ChainReport(res.dims, res.stabilization_index, res.stabilized, res.strict_drops, res.exact, res.heuristic)
