"""Patterns, full shifts and linear subshifts of finite type over N^r.

Symbols are vectors of F_p^k.  A pattern on a finite domain is flattened
site-major: coordinate ``i * k + c`` is component ``c`` at the ``i``-th site of
the (lexicographically sorted) domain.  Every subspace of ``A^B`` in this
package uses that layout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from shadowlab.errors import ContractViolation, InsufficientTruncation, UnsupportedMode
from shadowlab.fplinalg import FieldSpec, Matrix, Subspace, intersect, kernel, preimage
from shadowlab.lattice import SiteSet

__all__ = [
    "Alphabet",
    "Pattern",
    "FullShift",
    "LinearSFT",
    "SubshiftSpec",
    "Restriction",
    "RestrictionSystem",
    "shift_pattern",
    "constants_sft",
    "local_constraint_rows",
    "local_pattern_space",
    "restriction",
    "restriction_system",
    "check_restriction_identity",
    "restriction_identity_sides",
    "subshift_from_json",
    "subshift_to_json",
]


@dataclass(frozen=True)
class Alphabet:
    """``A = F_p^k``."""

    p: int
    k: int = 1

    def __post_init__(self):
        FieldSpec(self.p)
        if self.k < 1:
            raise ContractViolation("alphabet rank k must be >= 1")

    @property
    def field(self) -> FieldSpec:
        return FieldSpec(self.p)

    @property
    def size(self) -> int:
        return self.p**self.k

    def to_json(self) -> dict:
        return {"p": self.p, "k": self.k}


class Pattern:
    """A finitely supported assignment of symbols in F_p^k to sites."""

    __slots__ = ("alphabet", "domain", "values")

    def __init__(self, alphabet: Alphabet, domain: SiteSet, values):
        vals = np.array(values, dtype=np.int64).reshape(len(domain), alphabet.k) % alphabet.p
        vals.setflags(write=False)
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "values", vals)

    def __setattr__(self, name, value):
        raise AttributeError("Pattern is immutable")

    @classmethod
    def zeros(cls, alphabet: Alphabet, domain: SiteSet) -> Pattern:
        return cls(alphabet, domain, np.zeros((len(domain), alphabet.k), dtype=np.int64))

    @classmethod
    def random(cls, alphabet: Alphabet, domain: SiteSet, rng: np.random.Generator) -> Pattern:
        return cls(alphabet, domain, rng.integers(0, alphabet.p, size=(len(domain), alphabet.k)))

    @classmethod
    def from_vector(cls, alphabet: Alphabet, domain: SiteSet, vec) -> Pattern:
        return cls(alphabet, domain, np.asarray(vec, dtype=np.int64).reshape(len(domain), alphabet.k))

    @property
    def r(self) -> int:
        return self.domain.r

    def vector(self) -> np.ndarray:
        return self.values.reshape(-1)

    def value(self, site) -> tuple[int, ...]:
        i = int(self.domain.index_of(np.asarray(site).reshape(1, -1))[0])
        if i < 0:
            raise InsufficientTruncation(f"site {tuple(site)} outside the pattern domain", [tuple(site)])
        return tuple(int(v) for v in self.values[i])

    def restrict(self, sites: SiteSet) -> Pattern:
        idx = self.domain.index_of(sites.coords)
        if (idx < 0).any():
            miss = sites.coords[idx < 0]
            raise InsufficientTruncation(
                f"{len(miss)} requested sites lie outside the pattern domain",
                [tuple(int(v) for v in s) for s in miss[:16]],
            )
        return Pattern(self.alphabet, sites, self.values[idx])

    def with_values(self, sites: SiteSet, values) -> Pattern:
        """Copy with the symbols at ``sites`` replaced."""
        idx = self.domain.index_of(sites.coords)
        if (idx < 0).any():
            raise InsufficientTruncation("replacement sites outside the pattern domain")
        vals = self.values.copy()
        vals[idx] = np.asarray(values, dtype=np.int64).reshape(len(sites), self.alphabet.k)
        return Pattern(self.alphabet, self.domain, vals)

    def _check_same(self, other: Pattern):
        if self.alphabet != other.alphabet or self.domain != other.domain:
            raise ContractViolation("patterns must share alphabet and domain")

    def __add__(self, other: Pattern) -> Pattern:
        self._check_same(other)
        return Pattern(self.alphabet, self.domain, self.values + other.values)

    def __sub__(self, other: Pattern) -> Pattern:
        self._check_same(other)
        return Pattern(self.alphabet, self.domain, self.values - other.values)

    def scale(self, c: int) -> Pattern:
        return Pattern(self.alphabet, self.domain, self.values * int(c))

    def __eq__(self, other):
        if not isinstance(other, Pattern):
            return NotImplemented
        return (
            self.alphabet == other.alphabet
            and self.domain == other.domain
            and bool(np.array_equal(self.values, other.values))
        )

    def __hash__(self):
        return hash((self.alphabet, self.domain, self.values.tobytes()))

    def __repr__(self):
        return f"Pattern(p={self.alphabet.p}, k={self.alphabet.k}, |domain|={len(self.domain)})"

    def to_json(self) -> dict:
        return {"domain": self.domain.to_json(), "values": self.values.tolist()}

    @classmethod
    def from_json(cls, alphabet: Alphabet, obj, r: int | None = None) -> Pattern:
        if isinstance(obj, str):
            obj = json.loads(obj)
        for key in ("domain", "values"):
            if key not in obj:
                raise ContractViolation(f"pattern JSON is missing {key!r}")
        dom_raw = [tuple(s) for s in obj["domain"]]
        dom = SiteSet.from_sites(dom_raw, r)
        vals = np.asarray(obj["values"], dtype=np.int64).reshape(len(dom_raw), alphabet.k)
        if len(dom) != len(dom_raw):
            raise ContractViolation("pattern domain has repeated sites")
        order = dom.index_of(np.asarray(dom_raw, dtype=np.int64).reshape(-1, dom.r))
        sorted_vals = np.empty_like(vals)
        sorted_vals[order] = vals
        return cls(alphabet, dom, sorted_vals)


def shift_pattern(g, x: Pattern) -> Pattern:
    """``(g * x)(h) = x(h + g)`` on ``{h in N^r : h + g in domain(x)}``."""
    g = np.asarray(g, dtype=np.int64)
    if g.shape != (x.r,) or (g < 0).any():
        raise ContractViolation("shift must be a site of N^r")
    moved = x.domain.coords - g
    keep = (moved >= 0).all(axis=1)
    box = None
    if x.domain.is_box and keep.all():
        lo, hi = x.domain.box_bounds
        box = (tuple(int(a - b) for a, b in zip(lo, g)), tuple(int(a - b) for a, b in zip(hi, g)))
    dom = SiteSet(x.r, moved[keep], _trusted=True, _box=box)
    return Pattern(x.alphabet, dom, x.values[keep])


# ---------------------------------------------------------------------------
# subshift specifications


@dataclass(frozen=True, eq=False)
class FullShift:
    alphabet: Alphabet
    r: int

    kind = "full"


@dataclass(frozen=True, eq=False)
class LinearSFT:
    """``{x : (g * x)|_D in P for every g}`` with ``P`` a subspace of ``A^D``."""

    alphabet: Alphabet
    r: int
    window: SiteSet
    constraint: Subspace
    _annihilator: Matrix = field(init=False, repr=False)

    kind = "sft"

    def __post_init__(self):
        if self.window.r != self.r:
            raise ContractViolation("window dimension differs from r")
        if len(self.window) == 0:
            raise ContractViolation("SFT window must be nonempty")
        if self.constraint.p != self.alphabet.p:
            raise ContractViolation("constraint subspace is over a different field")
        if self.constraint.ambient_dim != self.alphabet.k * len(self.window):
            raise ContractViolation(
                f"constraint lives in dimension {self.constraint.ambient_dim}, "
                f"expected k*|D| = {self.alphabet.k * len(self.window)}"
            )
        object.__setattr__(self, "_annihilator", self.constraint.annihilator())

    @property
    def annihilator(self) -> Matrix:
        return self._annihilator


SubshiftSpec = Union[FullShift, LinearSFT]


def constants_sft(alphabet: Alphabet, r: int = 1) -> LinearSFT:
    """Constant configurations: window ``{0, e_1, ..., e_r}``, all entries equal."""
    k, p = alphabet.k, alphabet.p
    sites = [(0,) * r] + [tuple(1 if j == i else 0 for j in range(r)) for i in range(r)]
    window = SiteSet.from_sites(sites, r)
    vecs = np.zeros((k, k * len(window)), dtype=np.int64)
    for c in range(k):
        vecs[c, c :: k] = 1
    return LinearSFT(alphabet, r, window, Subspace.span(p, vecs, k * len(window)))


def subshift_to_json(sig: SubshiftSpec) -> dict:
    out = {"alphabet": sig.alphabet.to_json(), "r": sig.r, "kind": sig.kind}
    if isinstance(sig, LinearSFT):
        out["window"] = sig.window.to_json()
        out["constraint"] = sig.constraint.basis.to_text()
    return out


def subshift_from_json(obj) -> SubshiftSpec:
    if isinstance(obj, str):
        obj = json.loads(obj)
    try:
        alph = Alphabet(int(obj["alphabet"]["p"]), int(obj["alphabet"].get("k", 1)))
        r = int(obj["r"])
        kind = obj.get("kind", "full")
    except (KeyError, TypeError) as exc:
        raise ContractViolation(f"subshift JSON is missing field {exc}") from exc
    if kind == "full":
        return FullShift(alph, r)
    if kind == "sft":
        if "window" not in obj or "constraint" not in obj:
            raise ContractViolation("sft JSON needs 'window' and 'constraint'")
        window_raw = [tuple(s) for s in obj["window"]]
        window = SiteSet.from_sites(window_raw, r)
        mat = Matrix.from_text(obj["constraint"])
        if mat.p != alph.p:
            raise ContractViolation("constraint matrix is over a different field")
        # rows are given in the listed window order; re-sort to the canonical order
        order = window.index_of(np.asarray(window_raw, dtype=np.int64).reshape(-1, r))
        k = alph.k
        perm = np.empty(k * len(window), dtype=np.int64)
        for listed, canon in enumerate(order):
            perm[canon * k : canon * k + k] = np.arange(listed * k, listed * k + k)
        data = mat.data[:, perm] if mat.rows else np.zeros((0, k * len(window)), dtype=np.int64)
        return LinearSFT(alph, r, window, Subspace.span(alph.p, data, k * len(window)))
    if kind == "constants":
        return constants_sft(alph, r)
    raise ContractViolation(f"unknown subshift kind {kind!r}")


# ---------------------------------------------------------------------------
# local pattern spaces


def _translate_indices(window: SiteSet, b: SiteSet) -> np.ndarray:
    """Rows ``[pos(g + d) for d in window]`` for every ``g`` with ``g + D <= b``."""
    if len(b) == 0:
        return np.zeros((0, len(window)), dtype=np.int64)
    cand = b.coords - window.coords[0]
    cand = cand[(cand >= 0).all(axis=1)]
    if len(cand) == 0:
        return np.zeros((0, len(window)), dtype=np.int64)
    idx = np.stack([b.index_of(cand + d) for d in window.coords], axis=1)
    return idx[(idx >= 0).all(axis=1)]


def local_constraint_rows(sig: SubshiftSpec, b: SiteSet, offset: int = 0) -> list[dict]:
    """Sparse linear constraints cutting the local pattern space out of ``A^b``.

    Column ``offset + i*k + c`` is component ``c`` at the ``i``-th site of ``b``.
    """
    if isinstance(sig, FullShift):
        return []
    k = sig.alphabet.k
    h = sig.annihilator.data
    if h.shape[0] == 0:
        return []
    idx = _translate_indices(sig.window, b)
    if len(idx) == 0:
        return []
    cols = (idx[:, :, None] * k + np.arange(k)[None, None, :]).reshape(len(idx), -1) + offset
    rows = []
    nz = [np.flatnonzero(hrow) for hrow in h]
    for g in range(len(idx)):
        cg = cols[g]
        for hrow, sel in zip(h, nz):
            rows.append({int(cg[t]): int(hrow[t]) for t in sel})
    return rows


def _local_constraint_matrix(sig: LinearSFT, b: SiteSet) -> Matrix:
    k = sig.alphabet.k
    h = sig.annihilator.data
    idx = _translate_indices(sig.window, b)
    ng, nh = len(idx), h.shape[0]
    mat = np.zeros((ng * nh, k * len(b)), dtype=np.int64)
    if ng and nh:
        cols = (idx[:, :, None] * k + np.arange(k)[None, None, :]).reshape(ng, -1)
        rows = np.arange(ng * nh).reshape(ng, nh)
        mat[rows[:, :, None], cols[:, None, :]] = h[None, :, :]
    return Matrix(sig.alphabet.p, mat)


def local_pattern_space(sig: SubshiftSpec, b: SiteSet) -> Subspace:
    """Patterns on ``b`` satisfying every translated constraint that fits inside ``b``."""
    n = sig.alphabet.k * len(b)
    if isinstance(sig, FullShift):
        return Subspace.full(sig.alphabet.p, n)
    return kernel(_local_constraint_matrix(sig, b))


def _coords_of(sub: SiteSet, big: SiteSet, k: int) -> np.ndarray:
    idx = big.index_of(sub.coords)
    if (idx < 0).any():
        raise ContractViolation("sub-domain not contained in the ambient domain")
    return (idx[:, None] * k + np.arange(k)[None, :]).reshape(-1)


# ---------------------------------------------------------------------------
# restrictions Sigma_E


@dataclass(frozen=True)
class Restriction:
    """``Sigma_E`` (or a certified-from-above approximation) with its chain trace.

    ``dims`` lists the dimensions of the projected local pattern spaces on the
    growing boxes.  ``heuristic`` marks results of the patience rule, which can
    only overestimate ``Sigma_E``.
    """

    space: Subspace
    exact: bool
    heuristic: bool
    stabilization_index: int | None
    dims: tuple[int, ...]
    stabilized: bool
    box_step: int  # t of the box B_t used for the returned value

    @property
    def strict_drops(self) -> int:
        return sum(1 for a, b in zip(self.dims, self.dims[1:]) if b < a)


def _chain_box(e: SiteSet, t: int) -> SiteSet:
    upper = e.upper_corner()
    return SiteSet.box((0,) * e.r, tuple(u + t for u in upper))


def _parse_mode(mode, patience: int) -> tuple[str, int]:
    if isinstance(mode, tuple):
        return mode[0], int(mode[1])
    if isinstance(mode, str) and mode.startswith("patience"):
        if ":" in mode:
            return "patience", int(mode.split(":", 1)[1])
        return "patience", patience
    if mode in ("exact", "auto"):
        return mode, patience
    raise UnsupportedMode(f"unknown restriction mode {mode!r}")


def _extendable_states(sig: LinearSFT) -> tuple[int, Subspace]:
    """Greatest fixpoint of right-extendable states of width ``W = max(D)``."""
    p, k = sig.alphabet.p, sig.alphabet.k
    w = sig.window.max_coord() + 1
    width = w - 1
    span = SiteSet.cube(1, w)
    sel_d = np.zeros((k * len(sig.window), k * w), dtype=np.int64)
    sel_d[np.arange(k * len(sig.window)), _coords_of(sig.window, span, k)] = 1
    padded = preimage(Matrix(p, sel_d), sig.constraint)
    tail = np.zeros((k * width, k * w), dtype=np.int64)
    tail[np.arange(k * width), np.arange(k, k * w)] = 1
    tail_m = Matrix(p, tail)
    head = np.arange(k * width)
    states = Subspace.full(p, k * width)
    while True:
        words = intersect(padded, preimage(tail_m, states))
        nxt = intersect(states, words.project(head))
        if nxt == states:
            return width, states
        states = nxt


def _exact_system_1d(sig: LinearSFT, e: SiteSet) -> tuple[SiteSet, list[dict]]:
    width, states = _extendable_states(sig)
    n = max(e.max_coord() + 1 if len(e) else 0, width, 1)
    box = SiteSet.cube(1, n)
    k = sig.alphabet.k
    rows = local_constraint_rows(sig, box)
    ann = states.annihilator().data
    base = (n - width) * k
    for hrow in ann:
        rows.append({base + int(t): int(hrow[t]) for t in np.flatnonzero(hrow)})
    return box, rows


def _kernel_of_rows(rows: list[dict], ncols: int, p: int) -> Subspace:
    mat = np.zeros((len(rows), ncols), dtype=np.int64)
    for i, row in enumerate(rows):
        for c, v in row.items():
            mat[i, c] = v
    return kernel(Matrix(p, mat))


def restriction(
    sig: SubshiftSpec,
    e: SiteSet,
    mode="auto",
    patience: int = 3,
    max_steps: int = 64,
) -> Restriction:
    """``Sigma_E`` via the descending chain of projected local pattern spaces.

    ``mode="exact"`` (r = 1 only) solves a greatest-fixpoint extendability
    problem and returns the true restriction.  ``mode="patience"`` stops once
    ``patience`` consecutive chain values agree and flags the result as
    heuristic.  ``"auto"`` picks exact for r = 1 and patience otherwise.  The
    full shift is always exact.
    """
    p, k = sig.alphabet.p, sig.alphabet.k
    kind, j = _parse_mode(mode, patience)
    if j < 1:
        raise ContractViolation("patience must be >= 1")
    if e.r != sig.r:
        raise ContractViolation("restriction window has the wrong dimension")
    if isinstance(sig, FullShift):
        full = Subspace.full(p, k * len(e))
        return Restriction(full, True, False, 0, (full.dim,), True, 0)
    if kind == "auto":
        kind = "exact" if sig.r == 1 else "patience"
    if kind == "exact" and sig.r != 1:
        raise UnsupportedMode("exact restriction is only available for r = 1")

    def chain_value(t: int) -> Subspace:
        box = _chain_box(e, t)
        return local_pattern_space(sig, box).project(_coords_of(e, box, k))

    if kind == "exact":
        box, rows = _exact_system_1d(sig, e)
        truth = _kernel_of_rows(rows, k * len(box), p).project(_coords_of(e, box, k))
        dims = []
        t = 0
        while True:
            val = chain_value(t)
            dims.append(val.dim)
            if val == truth:
                break
            t += 1
            if t > max(max_steps, 4 * k * (sig.window.max_coord() + 1) + len(e) * k + 8):
                raise RuntimeError("restriction chain failed to reach the exact fixpoint")
        return Restriction(truth, True, False, t, tuple(dims), True, t)

    dims = []
    values = []
    for t in range(max_steps + 1):
        values.append(chain_value(t))
        dims.append(values[-1].dim)
        if len(values) >= j and all(v == values[-1] for v in values[-j:]):
            return Restriction(values[-1], False, True, t - j + 1, tuple(dims), True, t)
    return Restriction(values[-1], False, True, None, tuple(dims), False, max_steps)


@dataclass(frozen=True)
class RestrictionSystem:
    """``Sigma_E`` as the projection to ``e`` of ``{x on box : rows . x = 0}``."""

    box: SiteSet
    rows: list
    exact: bool
    heuristic: bool


def restriction_system(sig: SubshiftSpec, e: SiteSet, mode="auto", patience: int = 3) -> RestrictionSystem:
    """Sparse description of the restriction, suitable for large linear systems."""
    if isinstance(sig, FullShift):
        return RestrictionSystem(e, [], True, False)
    kind, j = _parse_mode(mode, patience)
    if kind == "auto":
        kind = "exact" if sig.r == 1 else "patience"
    if kind == "exact":
        if sig.r != 1:
            raise UnsupportedMode("exact restriction is only available for r = 1")
        box, rows = _exact_system_1d(sig, e)
        return RestrictionSystem(box, rows, True, False)
    res = restriction(sig, e, ("patience", j))
    box = _chain_box(e, res.box_step)
    return RestrictionSystem(box, local_constraint_rows(sig, box), False, True)


# ---------------------------------------------------------------------------
# product decomposition identity


def _strip_sites(g: np.ndarray, h_axis: int, e_set: SiteSet, length: int) -> np.ndarray:
    """Sites ``g + h*u + e_j`` for ``h < length`` in the order (h, j)."""
    r = e_set.r
    u = np.zeros(r, dtype=np.int64)
    u[h_axis] = 1
    hs = np.arange(length)[:, None, None] * u[None, None, :]
    return (g[None, None, :] + hs + e_set.coords[None, :, :]).reshape(-1, r)


def restriction_identity_sides(
    alphabet: Alphabet,
    dims: int,
    h_axis: int,
    e_set: SiteSet,
    d_window: Sequence[int],
    p_constraint: Subspace,
    test_box: SiteSet,
) -> tuple[Subspace, Subspace]:
    """Both sides of ``Sigma(A^G; HE, Sigma(B^H; D, P)) = Sigma(A^G; DE, P)`` on a box.

    ``G = N^dims``, ``H = N * u`` along ``h_axis`` and ``E`` a finite set of sites
    with zero ``h_axis`` coordinate.  ``D`` is given by its positions along
    ``H``; ``P`` lives in ``B^D`` with ``B = A^E`` (layout: D-major, then E,
    then the alphabet component).
    """
    if dims < 2 or not 0 <= h_axis < dims or e_set.r != dims:
        raise ContractViolation("decomposition needs G = N^r (r >= 2), a valid H axis and E in N^r")
    if len(e_set) == 0 or (e_set.coords[:, h_axis] != 0).any():
        raise ContractViolation("E must be nonempty and meet each H-coset once (zero H coordinate)")
    d_sorted = sorted(set(int(d) for d in d_window))
    if not d_sorted or d_sorted[0] < 0 or len(d_sorted) != len(list(d_window)):
        raise ContractViolation("D must be a nonempty set of non-negative positions along H")
    if list(d_window) != d_sorted:
        raise ContractViolation("D must be listed in increasing order")
    k, p = alphabet.k, alphabet.p
    ne = len(e_set)
    if p_constraint.ambient_dim != k * ne * len(d_sorted) or p_constraint.p != p:
        raise ContractViolation("P must be a subspace of B^D = (A^E)^D")

    big_alpha = Alphabet(p, k * ne)
    strip_sig = LinearSFT(big_alpha, 1, SiteSet.from_sites([(d,) for d in d_sorted], 1), p_constraint)

    # left side: every truncated H-strip lies in the local space of Sigma(B^H; D, P)
    lo, hi = test_box.box_bounds if test_box.is_box else (None, None)
    if lo is None:
        raise ContractViolation("test region must be a box")
    ncols = k * len(test_box)
    lhs_rows: list[np.ndarray] = []
    for g in test_box.coords:
        if (test_box.index_of(g[None, :] + e_set.coords) < 0).any():
            continue
        length = hi[h_axis] - int(g[h_axis]) + 1
        strip_space = local_pattern_space(strip_sig, SiteSet.cube(1, length))
        ann = strip_space.annihilator().data
        if ann.shape[0] == 0:
            continue
        sites = _strip_sites(g, h_axis, e_set, length)
        pos = test_box.index_of(sites)
        cols = (pos[:, None] * k + np.arange(k)[None, :]).reshape(-1)
        block = np.zeros((ann.shape[0], ncols), dtype=np.int64)
        block[:, cols] = ann
        lhs_rows.append(block)
    lhs_mat = np.vstack(lhs_rows) if lhs_rows else np.zeros((0, ncols), dtype=np.int64)
    lhs = kernel(Matrix(p, lhs_mat))

    # right side: the SFT with window DE and the reindexed constraint
    u = np.zeros(dims, dtype=np.int64)
    u[h_axis] = 1
    de_listed = np.array([d * u + ej for d in d_sorted for ej in e_set.coords], dtype=np.int64)
    window = SiteSet(dims, de_listed)
    order = window.index_of(de_listed)
    perm = np.empty(k * len(window), dtype=np.int64)
    for listed, canon in enumerate(order):
        perm[canon * k : canon * k + k] = np.arange(listed * k, listed * k + k)
    p_de = p_constraint.project(perm)
    rhs = local_pattern_space(LinearSFT(alphabet, dims, window, p_de), test_box)
    return lhs, rhs


def check_restriction_identity(
    alphabet: Alphabet,
    dims: int,
    h_axis: int,
    e_set: SiteSet,
    d_window: Sequence[int],
    p_constraint: Subspace,
    test_box: SiteSet,
    rhs_window: Sequence[int] | None = None,
    rhs_constraint: Subspace | None = None,
) -> bool:
    """Compare both sides as subspaces of ``A^test_box``.

    ``rhs_window``/``rhs_constraint`` swap in a different SFT for the right side
    (negative controls).
    """
    lhs, rhs = restriction_identity_sides(alphabet, dims, h_axis, e_set, d_window, p_constraint, test_box)
    if rhs_window is not None or rhs_constraint is not None:
        _, rhs = restriction_identity_sides(
            alphabet,
            dims,
            h_axis,
            e_set,
            rhs_window if rhs_window is not None else d_window,
            rhs_constraint if rhs_constraint is not None else p_constraint,
            test_box,
        )
    return lhs == rhs
