"""Sites, finite site sets, admissible exhaustions and the Hamming metric on N^r."""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from shadowlab.errors import ContractViolation, InsufficientResolution

__all__ = [
    "Site",
    "SiteSet",
    "Exhaustion",
    "AdmissibilityReport",
    "StabilityIndex",
    "Distance",
    "dyadic_exhaustion",
    "jittered_exhaustion",
    "resolvable_level",
    "check_admissible",
    "resolution_index",
    "stability_index",
    "hamming_distance",
    "containment_level",
]

Site = tuple  # tuple[int, ...] of non-negative coordinates

_BITS = 20
_LIMIT = 1 << _BITS
MAX_DIM = 3


def _keys(coords: np.ndarray) -> np.ndarray:
    keys = np.zeros(coords.shape[0], dtype=np.int64)
    for j in range(coords.shape[1]):
        keys = (keys << _BITS) | coords[:, j]
    return keys


class SiteSet:
    """A finite, sorted, duplicate-free set of sites of N^r.

    Sites are ordered lexicographically.  Boxes ``[lo, hi]`` (inclusive) are
    recognised and get arithmetic indexing instead of a sorted search.
    """

    __slots__ = ("r", "coords", "keys", "box_bounds", "_hash")

    def __init__(self, r: int, coords, *, _trusted: bool = False, _box=None):
        if not 1 <= r <= MAX_DIM:
            raise ContractViolation(f"dimension r={r} outside the supported range 1..{MAX_DIM}")
        arr = np.asarray(coords, dtype=np.int64)
        if arr.size == 0:
            arr = np.zeros((0, r), dtype=np.int64)
        arr = arr.reshape(-1, r)
        if not _trusted:
            if (arr < 0).any():
                raise ContractViolation("sites of N^r must have non-negative coordinates")
            if (arr >= _LIMIT).any():
                raise ContractViolation(f"coordinates must stay below {_LIMIT}")
            keys = _keys(arr)
            keys, first = np.unique(keys, return_index=True)
            arr = arr[first]
        else:
            keys = _keys(arr)
        arr.setflags(write=False)
        keys.setflags(write=False)
        box = _box
        if box is None and len(arr):
            lo, hi = arr.min(axis=0), arr.max(axis=0)
            if int(np.prod(hi - lo + 1)) == len(arr):
                box = (tuple(int(v) for v in lo), tuple(int(v) for v in hi))
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "coords", arr)
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "box_bounds", box)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, name, value):
        raise AttributeError("SiteSet is immutable")

    # constructors -----------------------------------------------------------
    @classmethod
    def from_sites(cls, sites: Iterable[Sequence[int]], r: int | None = None) -> SiteSet:
        sites = [tuple(int(c) for c in s) for s in sites]
        if r is None:
            if not sites:
                raise ContractViolation("dimension needed for an empty site set")
            r = len(sites[0])
        if any(len(s) != r for s in sites):
            raise ContractViolation(f"all sites must have {r} coordinates")
        return cls(r, sites)

    @classmethod
    def box(cls, lo: Sequence[int], hi: Sequence[int]) -> SiteSet:
        lo, hi = tuple(int(v) for v in lo), tuple(int(v) for v in hi)
        r = len(lo)
        if len(hi) != r:
            raise ContractViolation("box corners have different dimensions")
        if any(h < l for l, h in zip(lo, hi)):
            return cls.empty(r)
        grids = np.meshgrid(*[np.arange(l, h + 1) for l, h in zip(lo, hi)], indexing="ij")
        coords = np.stack([g.ravel() for g in grids], axis=1)
        if (coords < 0).any():
            raise ContractViolation("box leaves N^r")
        return cls(r, coords, _trusted=True, _box=(lo, hi))

    @classmethod
    def cube(cls, r: int, side: int) -> SiteSet:
        """``{0, ..., side-1}^r``."""
        return cls.box((0,) * r, (side - 1,) * r)

    @classmethod
    def empty(cls, r: int) -> SiteSet:
        return cls(r, np.zeros((0, r), dtype=np.int64), _trusted=True)

    # container protocol ---------------------------------------------------
    def __len__(self) -> int:
        return self.coords.shape[0]

    def __iter__(self):
        for row in self.coords:
            yield tuple(int(v) for v in row)

    def sites(self) -> list[tuple[int, ...]]:
        return list(self)

    def __getitem__(self, i: int) -> tuple[int, ...]:
        return tuple(int(v) for v in self.coords[i])

    def __contains__(self, site) -> bool:
        return bool(self.index_of(np.asarray(site, dtype=np.int64).reshape(1, -1))[0] >= 0)

    def __eq__(self, other):
        if not isinstance(other, SiteSet):
            return NotImplemented
        return self.r == other.r and np.array_equal(self.keys, other.keys)

    def __hash__(self):
        if self._hash is None:
            object.__setattr__(self, "_hash", hash((self.r, self.keys.tobytes())))
        return self._hash

    def __repr__(self):
        if self.box_bounds is not None:
            return f"SiteSet(box {self.box_bounds[0]}..{self.box_bounds[1]})"
        return f"SiteSet({self.sites()[:8]}{'...' if len(self) > 8 else ''})"

    @property
    def is_box(self) -> bool:
        return self.box_bounds is not None

    # lookups ------------------------------------------------------------------
    def index_of(self, coords) -> np.ndarray:
        """Positions of the given sites in this set, ``-1`` where absent."""
        c = np.asarray(coords, dtype=np.int64).reshape(-1, self.r)
        if len(self) == 0 or len(c) == 0:
            return np.full(len(c), -1, dtype=np.int64)
        if self.box_bounds is not None:
            lo = np.array(self.box_bounds[0])
            hi = np.array(self.box_bounds[1])
            inside = ((c >= lo) & (c <= hi)).all(axis=1)
            out = np.full(len(c), -1, dtype=np.int64)
            if inside.any():
                shape = tuple(hi - lo + 1)
                out[inside] = np.ravel_multi_index(tuple((c[inside] - lo).T), shape)
            return out
        valid = ((c >= 0) & (c < _LIMIT)).all(axis=1)
        out = np.full(len(c), -1, dtype=np.int64)
        if valid.any():
            k = _keys(c[valid])
            pos = np.searchsorted(self.keys, k)
            pos_c = np.minimum(pos, len(self.keys) - 1)
            found = self.keys[pos_c] == k
            out[np.flatnonzero(valid)[found]] = pos_c[found]
        return out

    def issubset(self, other: SiteSet) -> bool:
        return bool((other.index_of(self.coords) >= 0).all())

    def missing_from(self, other: SiteSet) -> list[tuple[int, ...]]:
        """Sites of ``self`` that ``other`` lacks."""
        idx = other.index_of(self.coords)
        return [tuple(int(v) for v in row) for row in self.coords[idx < 0]]

    # set algebra --------------------------------------------------------------
    def union(self, other: SiteSet) -> SiteSet:
        return SiteSet(self.r, np.vstack([self.coords, other.coords]))

    def intersection(self, other: SiteSet) -> SiteSet:
        return SiteSet(self.r, self.coords[other.index_of(self.coords) >= 0], _trusted=True)

    def difference(self, other: SiteSet) -> SiteSet:
        return SiteSet(self.r, self.coords[other.index_of(self.coords) < 0], _trusted=True)

    def minkowski(self, other: SiteSet) -> SiteSet:
        """``{a + b : a in self, b in other}``."""
        if len(self) == 0 or len(other) == 0:
            return SiteSet.empty(self.r)
        if self.is_box and other.is_box:
            lo = tuple(a + b for a, b in zip(self.box_bounds[0], other.box_bounds[0]))
            hi = tuple(a + b for a, b in zip(self.box_bounds[1], other.box_bounds[1]))
            return SiteSet.box(lo, hi)
        small, big = (self, other) if len(self) <= len(other) else (other, self)
        sums = (big.coords[None, :, :] + small.coords[:, None, :]).reshape(-1, self.r)
        return SiteSet(self.r, sums)

    def translate(self, g: Sequence[int]) -> SiteSet:
        """``{h + g}`` keeping only sites that stay in N^r (``g`` may be negative)."""
        g = np.asarray(g, dtype=np.int64)
        moved = self.coords + g
        keep = (moved >= 0).all(axis=1)
        box = None
        if self.is_box and keep.all():
            box = (
                tuple(int(a + b) for a, b in zip(self.box_bounds[0], g)),
                tuple(int(a + b) for a, b in zip(self.box_bounds[1], g)),
            )
        return SiteSet(self.r, moved[keep], _trusted=True, _box=box)

    def max_coord(self) -> int:
        return int(self.coords.max()) if len(self) else 0

    def upper_corner(self) -> tuple[int, ...]:
        if not len(self):
            return (0,) * self.r
        return tuple(int(v) for v in self.coords.max(axis=0))

    # serialisation --------------------------------------------------------------
    def to_text(self) -> str:
        return "".join(" ".join(str(v) for v in s) + "\n" for s in self)

    @classmethod
    def from_text(cls, text: str, r: int | None = None) -> SiteSet:
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        return cls.from_sites(([int(v) for v in row] for row in rows), r)

    def to_json(self) -> list[list[int]]:
        return self.coords.tolist()


# ---------------------------------------------------------------------------
# exhaustions


class Exhaustion:
    """An increasing family ``E_0 = {} , E_1, E_2, ...`` of finite subsets of N^r.

    ``kind == "dyadic"`` is the built-in family ``E_n = {0..2^n - 1}^r`` and is
    available at every level.  ``kind == "explicit"`` wraps a finite prefix of
    levels supplied by the caller; queries beyond that prefix raise.
    """

    def __init__(self, r: int, kind: str, levels: Sequence[SiteSet] | None = None):
        if r < 1:
            raise ContractViolation("an exhaustion needs dimension r >= 1")
        if kind not in ("dyadic", "explicit"):
            raise ContractViolation(f"unknown exhaustion kind {kind!r}")
        self.r = r
        self.kind = kind
        self._levels = tuple(levels) if levels is not None else None
        self._cache: dict[int, SiteSet] = {}
        if kind == "explicit":
            if not self._levels:
                raise ContractViolation("an explicit exhaustion needs at least level 0")
            if any(lv.r != r for lv in self._levels):
                raise ContractViolation("explicit levels must all have dimension r")

    @classmethod
    def explicit(cls, levels: Sequence[SiteSet]) -> Exhaustion:
        levels = list(levels)
        return cls(levels[0].r if levels else 1, "explicit", levels)

    @property
    def depth(self) -> int | None:
        """Largest materialised level, ``None`` for the unbounded dyadic family."""
        return None if self._levels is None else len(self._levels) - 1

    def level(self, n: int) -> SiteSet:
        if n < 0:
            raise ContractViolation("exhaustion levels start at 0")
        if self.kind == "dyadic":
            if n not in self._cache:
                self._cache[n] = SiteSet.empty(self.r) if n == 0 else SiteSet.cube(self.r, 2**n)
            return self._cache[n]
        if n > self.depth:
            raise ContractViolation(f"level {n} exceeds the materialised depth {self.depth}")
        return self._levels[n]

    def level_of(self, coords) -> np.ndarray:
        """Smallest ``n >= 1`` with the site in ``E_n``; ``depth + 1`` if beyond."""
        c = np.asarray(coords, dtype=np.int64).reshape(-1, self.r)
        if self.kind == "dyadic":
            m = c.max(axis=1) if len(c) else np.zeros(0, dtype=np.int64)
            bits = np.zeros(len(m), dtype=np.int64)
            v = m.copy()
            while (v > 0).any():
                bits += v > 0
                v >>= 1
            return np.maximum(bits, 1)
        out = np.full(len(c), self.depth + 1, dtype=np.int64)
        for n in range(self.depth, 0, -1):
            out[self._levels[n].index_of(c) >= 0] = n
        return out

    def to_json(self) -> dict:
        if self.kind == "dyadic":
            return {"kind": "dyadic", "r": self.r}
        return {"kind": "explicit", "levels": [lv.to_json() for lv in self._levels]}

    @classmethod
    def from_json(cls, obj) -> Exhaustion:
        if isinstance(obj, str):
            obj = json.loads(obj)
        kind = obj.get("kind")
        if kind == "dyadic":
            if "r" not in obj:
                raise ContractViolation("dyadic exhaustion config needs 'r'")
            return dyadic_exhaustion(int(obj["r"]))
        if kind == "explicit":
            raw = obj.get("levels")
            if not raw:
                raise ContractViolation("explicit exhaustion config needs 'levels'")
            r = obj.get("r")
            if r is None:
                r = next((len(lv[0]) for lv in raw if lv), None)
            if r is None:
                raise ContractViolation("cannot infer dimension from empty levels; give 'r'")
            return cls(int(r), "explicit", [SiteSet.from_sites(lv, int(r)) for lv in raw])
        raise ContractViolation(f"exhaustion config has unknown kind {kind!r}")

    def __repr__(self):
        if self.kind == "dyadic":
            return f"Exhaustion(dyadic, r={self.r})"
        return f"Exhaustion(explicit, r={self.r}, depth={self.depth})"


def dyadic_exhaustion(r: int) -> Exhaustion:
    """``E_0 = {}`` and ``E_n = {0, ..., 2^n - 1}^r``."""
    if r < 1:
        raise ContractViolation("dyadic exhaustion needs r >= 1")
    return Exhaustion(r, "dyadic")


def jittered_exhaustion(r: int, depth: int, rng: np.random.Generator) -> Exhaustion:
    """Random admissible family of boxes ``E_n = prod [0, a_{n,i}]``.

    ``a_{1,i}`` is 0 or 1 and ``a_{n+1,i} = 2 a_{n,i} + j`` with ``j`` in
    ``{1, 2}``: ``E_n + E_n`` stays inside ``E_{n+1}`` and the boxes grow
    without bound.
    """
    if depth < 1:
        raise ContractViolation("depth must be >= 1")
    levels = [SiteSet.empty(r)]
    hi = rng.integers(0, 2, size=r)
    for _ in range(depth):
        levels.append(SiteSet.box((0,) * r, tuple(int(v) for v in hi)))
        hi = 2 * hi + rng.integers(1, 3, size=r)
    return Exhaustion(r, "explicit", levels)


@dataclass(frozen=True)
class AdmissibilityReport:
    ok: bool
    axiom: str | None = None  # "1": E_0 empty / 0 in E_1; "2": E_n + E_n in E_{n+1}
    level: int | None = None

    def __bool__(self):
        return self.ok


def check_admissible(e: Exhaustion, depth: int) -> AdmissibilityReport:
    """Check ``E_0 = {}``, ``0 in E_1`` and ``E_n + E_n <= E_{n+1}`` for ``n < depth``."""
    if e.depth is not None and depth > e.depth:
        raise ContractViolation(f"depth {depth} exceeds the materialised depth {e.depth}")
    if len(e.level(0)) != 0:
        return AdmissibilityReport(False, "1", 0)
    if depth >= 1 and (0,) * e.r not in e.level(1):
        return AdmissibilityReport(False, "1", 1)
    for n in range(depth):
        cur = e.level(n)
        if not cur.minkowski(cur).issubset(e.level(n + 1)):
            return AdmissibilityReport(False, "2", n)
    return AdmissibilityReport(True)


def resolution_index(eps) -> int:
    """Smallest ``n >= 1`` with ``2^-n < eps`` (strict)."""
    eps = Fraction(eps)
    if eps <= 0:
        raise ContractViolation(f"epsilon must be positive, got {eps}")
    n = 1
    while Fraction(1, 2**n) >= eps:
        n += 1
    return n


@dataclass(frozen=True)
class StabilityIndex:
    n0: int
    certified: bool
    verified_depth: int | None = None  # explicit exhaustions only

    def __int__(self):
        return self.n0


def stability_index(m: SiteSet, e: Exhaustion) -> StabilityIndex:
    """Least ``n0 >= 1`` with ``E_n + M <= E_{n+1}`` for every ``n >= n0``.

    Dyadic: closed form, ``n0`` is the least ``n >= 1`` with ``max coord(M) <= 2^n``.
    Explicit: checked up to the materialised depth and reported uncertified.
    """
    if e.kind == "dyadic":
        c = m.max_coord()
        n0 = max(1, (c - 1).bit_length()) if c > 0 else 1
        return StabilityIndex(n0, True)
    top = e.depth
    n0 = None
    for n in range(top - 1, 0, -1):
        if e.level(n).minkowski(m).issubset(e.level(n + 1)):
            n0 = n
        else:
            break
    if n0 is None:
        # nothing verifiable inside the prefix
        return StabilityIndex(max(1, top), False, top)
    return StabilityIndex(n0, False, top)


# ---------------------------------------------------------------------------
# metric


@dataclass(frozen=True)
class Distance:
    """A Hamming distance resolved at a finite level.

    ``exact`` means the value is exactly ``2^-level``; otherwise the patterns
    agree on all of ``E_level`` and only the bound ``d <= 2^-level`` is known.
    """

    level: int
    exact: bool

    @property
    def value(self) -> Fraction:
        return Fraction(1, 2**self.level)

    def below(self, eps) -> bool:
        """Certainly ``d < eps``."""
        return self.value < Fraction(eps)

    def at_most(self, bound) -> bool:
        """Certainly ``d <= bound``."""
        return self.value <= Fraction(bound)

    def __str__(self):
        s = f"2^-{self.level}"
        return s if self.exact else f"<= {s}"

    def to_json(self):
        return {"level": self.level, "exact": self.exact, "value": str(self.value)}


def hamming_distance(x, y, e: Exhaustion, level: int) -> Distance:
    """Distance of two patterns seen through ``E_0, ..., E_level``."""
    if x.alphabet != y.alphabet:
        raise ContractViolation("patterns over different alphabets")
    el = e.level(level)
    ix = x.domain.index_of(el.coords)
    iy = y.domain.index_of(el.coords)
    if (ix < 0).any() or (iy < 0).any():
        miss = el.coords[(ix < 0) | (iy < 0)]
        raise InsufficientResolution(
            f"pattern domains do not cover E_{level} ({len(miss)} sites missing)",
            [tuple(int(v) for v in s) for s in miss[:16]],
        )
    diff = (x.values[ix] != y.values[iy]).any(axis=1)
    if not diff.any():
        return Distance(level, False)
    first = int(e.level_of(el.coords[diff]).min())
    return Distance(first - 1, True)


def resolvable_level(domain: SiteSet, e: Exhaustion, cap: int = 64) -> int:
    """Largest ``L`` with ``E_L`` inside ``domain``."""
    L = 0
    top = cap if e.depth is None else min(cap, e.depth)
    while L < top and e.level(L + 1).issubset(domain):
        L += 1
    return L


def containment_level(e: Exhaustion, e_prime: Exhaustion, n: int, search: int = 64) -> int:
    """Smallest ``n'`` with ``E_n <= E'_{n'}``."""
    target = e.level(n)
    top = search if e_prime.depth is None else min(search, e_prime.depth)
    for k in range(top + 1):
        if target.issubset(e_prime.level(k)):
            return k
    raise ContractViolation(f"E_{n} is not contained in any of the first {top} levels")
