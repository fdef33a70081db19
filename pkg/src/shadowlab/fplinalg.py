"""Exact linear algebra over prime fields F_p.

Matrices hold residues in ``[0, p)`` as read-only ``int64`` arrays.  Subspaces
are stored by their reduced row-echelon basis, so two subspaces are equal
exactly when their representations are equal.

Over ``p = 2`` row reduction runs on rows packed into Python integers; every
other prime goes through :func:`rref_reference`, which is also kept as the
test oracle for the packed path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from shadowlab.errors import ContractViolation

__all__ = [
    "FieldSpec",
    "Matrix",
    "Subspace",
    "SparseEchelon",
    "rref",
    "rref_reference",
    "rank",
    "solve",
    "image",
    "kernel",
    "intersect",
    "preimage",
    "contains",
    "member",
    "join",
    "inverse",
    "sparse_rank",
]


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    d = 2
    while d * d <= n:
        if n % d == 0:
            return False
        d += 1
    return True


@dataclass(frozen=True)
class FieldSpec:
    """The prime field F_p."""

    p: int

    def __post_init__(self):
        if not isinstance(self.p, (int, np.integer)) or not _is_prime(int(self.p)):
            raise ContractViolation(f"modulus {self.p!r} is not a prime")
        if self.p >= 2**31:
            raise ContractViolation("moduli >= 2**31 are not supported")

    def inv(self, a: int) -> int:
        a %= self.p
        if a == 0:
            raise ZeroDivisionError("0 has no inverse")
        return pow(int(a), -1, self.p)


def _check_p(p: int) -> int:
    FieldSpec(int(p))
    return int(p)


def _mulmod(a: np.ndarray, b: np.ndarray, p: int) -> np.ndarray:
    inner = a.shape[-1] if a.ndim else 1
    if (p - 1) ** 2 * max(inner, 1) < 2**62:
        return (a @ b) % p
    out = (a.astype(object) @ b.astype(object)) % p
    return out.astype(np.int64)


class Matrix:
    """Immutable dense matrix over F_p."""

    __slots__ = ("p", "data")

    def __init__(self, p: int, data):
        arr = np.array(data, dtype=np.int64, copy=True)
        if arr.ndim != 2:
            raise ContractViolation(f"matrix data must be 2-D, got shape {arr.shape}")
        arr %= p
        arr.setflags(write=False)
        object.__setattr__(self, "p", int(p))
        object.__setattr__(self, "data", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Matrix is immutable")

    @classmethod
    def from_rows(cls, p: int, rows: Sequence[Sequence[int]], cols: int | None = None) -> Matrix:
        rows = [list(r) for r in rows]
        if not rows:
            return cls(p, np.zeros((0, cols or 0), dtype=np.int64))
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise ContractViolation("ragged matrix rows")
        if cols is not None and width != cols:
            raise ContractViolation(f"expected {cols} columns, got {width}")
        return cls(p, rows)

    @classmethod
    def zeros(cls, p: int, rows: int, cols: int) -> Matrix:
        return cls(p, np.zeros((rows, cols), dtype=np.int64))

    @classmethod
    def identity(cls, p: int, n: int) -> Matrix:
        return cls(p, np.eye(n, dtype=np.int64))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def T(self) -> Matrix:
        return Matrix(self.p, self.data.T)

    def __eq__(self, other):
        if not isinstance(other, Matrix):
            return NotImplemented
        return self.p == other.p and self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self):
        return hash((self.p, self.shape, self.data.tobytes()))

    def __repr__(self):
        return f"Matrix(p={self.p}, {self.data.tolist()})"

    def __matmul__(self, other):
        if isinstance(other, Matrix):
            if other.p != self.p:
                raise ContractViolation("field mismatch in matrix product")
            if self.cols != other.rows:
                raise ContractViolation(f"shape mismatch {self.shape} @ {other.shape}")
            return Matrix(self.p, _mulmod(self.data, other.data, self.p))
        vec = np.asarray(other, dtype=np.int64)
        if vec.ndim != 1 or vec.shape[0] != self.cols:
            raise ContractViolation(f"vector of length {vec.shape} does not match {self.cols} columns")
        return _mulmod(self.data, vec % self.p, self.p)

    def hstack(self, other: Matrix) -> Matrix:
        return Matrix(self.p, np.hstack([self.data, other.data]))

    def vstack(self, other: Matrix) -> Matrix:
        return Matrix(self.p, np.vstack([self.data, other.data]))

    def tolist(self) -> list[list[int]]:
        return self.data.tolist()

    def to_text(self) -> str:
        lines = [f"{self.p} {self.rows} {self.cols}"]
        lines += [" ".join(str(int(v)) for v in row) for row in self.data]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Matrix:
        lines = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
        if not lines or len(lines[0]) != 3:
            raise ContractViolation("matrix header must be 'p rows cols'")
        p, nrows, ncols = (int(v) for v in lines[0])
        _check_p(p)
        body = lines[1:]
        if len(body) != nrows:
            raise ContractViolation(f"expected {nrows} rows, found {len(body)}")
        values = []
        for row in body:
            if len(row) != ncols:
                raise ContractViolation(f"expected {ncols} entries per row, found {len(row)}")
            vals = [int(v) for v in row]
            if any(v < 0 or v >= p for v in vals):
                raise ContractViolation("matrix entries must be residues in [0, p)")
            values.append(vals)
        return cls(p, np.array(values, dtype=np.int64).reshape(nrows, ncols))


# ---------------------------------------------------------------------------
# row reduction


def rref_reference(a: np.ndarray, p: int) -> tuple[np.ndarray, list[int]]:
    """Gauss-Jordan elimination over F_p on a plain array.

    Returns the nonzero rows of the reduced echelon form and the pivot columns.
    Works for every prime; used directly for odd p and as the oracle for the
    packed GF(2) routine.
    """
    a = np.array(a, dtype=np.int64) % p
    m, n = a.shape
    pivots: list[int] = []
    r = 0
    for c in range(n):
        if r == m:
            break
        nz = np.flatnonzero(a[r:, c])
        if nz.size == 0:
            continue
        i = r + int(nz[0])
        if i != r:
            a[[r, i]] = a[[i, r]]
        lead = int(a[r, c])
        if lead != 1:
            a[r] = (a[r] * pow(lead, -1, p)) % p
        col = a[:, c].copy()
        col[r] = 0
        hit = np.flatnonzero(col)
        if hit.size:
            a[hit] = (a[hit] - np.outer(col[hit], a[r])) % p
        pivots.append(c)
        r += 1
    return a[:r], pivots


def _pack_rows(a: np.ndarray) -> list[int]:
    if a.shape[1] == 0:
        return [0] * a.shape[0]
    packed = np.packbits(a.astype(np.uint8) & 1, axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


def _unpack_rows(rows: list[int], n: int) -> np.ndarray:
    out = np.zeros((len(rows), n), dtype=np.int64)
    nbytes = (n + 7) // 8
    for i, v in enumerate(rows):
        bits = np.unpackbits(np.frombuffer(v.to_bytes(nbytes, "little"), dtype=np.uint8), bitorder="little")
        out[i] = bits[:n]
    return out


def _rref_gf2(a: np.ndarray) -> tuple[np.ndarray, list[int]]:
    n = a.shape[1]
    basis: dict[int, int] = {}
    for v in _pack_rows(a):
        for c, b in basis.items():
            if (v >> c) & 1:
                v ^= b
        if not v:
            continue
        c = (v & -v).bit_length() - 1
        for c2, b2 in basis.items():
            if (b2 >> c) & 1:
                basis[c2] = b2 ^ v
        basis[c] = v
    pivots = sorted(basis)
    return _unpack_rows([basis[c] for c in pivots], n), pivots


def _rref_array(a: np.ndarray, p: int) -> tuple[np.ndarray, list[int]]:
    if p == 2:
        return _rref_gf2(a)
    return rref_reference(a, p)


def rref(m: Matrix) -> tuple[Matrix, tuple[int, ...], int]:
    """Reduced row-echelon form: ``(R, pivots, rank)`` with zero rows dropped."""
    red, piv = _rref_array(m.data, m.p)
    return Matrix(m.p, red.reshape(len(piv), m.cols)), tuple(piv), len(piv)


def rank(m: Matrix) -> int:
    return rref(m)[2]


# ---------------------------------------------------------------------------
# subspaces


class Subspace:
    """An F_p-subspace of F_p^n held by its reduced row-echelon basis."""

    __slots__ = ("p", "ambient_dim", "basis", "pivots")

    def __init__(self, p: int, ambient_dim: int, basis: Matrix, pivots: tuple[int, ...]):
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "ambient_dim", ambient_dim)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "pivots", tuple(pivots))

    def __setattr__(self, name, value):
        raise AttributeError("Subspace is immutable")

    @classmethod
    def span(cls, p: int, vectors, ambient_dim: int) -> Subspace:
        arr = np.asarray(vectors, dtype=np.int64)
        if arr.size == 0:
            arr = np.zeros((0, ambient_dim), dtype=np.int64)
        elif ambient_dim:
            arr = arr.reshape(-1, ambient_dim)
        red, piv = _rref_array(arr % p, p)
        return cls(p, ambient_dim, Matrix(p, red.reshape(len(piv), ambient_dim)), tuple(piv))

    @classmethod
    def full(cls, p: int, n: int) -> Subspace:
        return cls(p, n, Matrix.identity(p, n), tuple(range(n)))

    @classmethod
    def zero(cls, p: int, n: int) -> Subspace:
        return cls(p, n, Matrix.zeros(p, 0, n), ())

    @property
    def dim(self) -> int:
        return len(self.pivots)

    def __eq__(self, other):
        if not isinstance(other, Subspace):
            return NotImplemented
        return self.p == other.p and self.ambient_dim == other.ambient_dim and self.basis == other.basis

    def __hash__(self):
        return hash((self.p, self.ambient_dim, self.basis))

    def __repr__(self):
        return f"Subspace(p={self.p}, ambient={self.ambient_dim}, dim={self.dim})"

    def __contains__(self, vec) -> bool:
        return member(vec, self)

    def is_full(self) -> bool:
        return self.dim == self.ambient_dim

    def annihilator(self) -> Matrix:
        """Rows ``h`` with ``h . v = 0`` for every ``v`` in the subspace."""
        return kernel(self.basis).basis

    def project(self, coords: Sequence[int]) -> Subspace:
        """Image under the coordinate projection onto ``coords`` (in that order)."""
        coords = np.asarray(coords, dtype=np.int64)
        return Subspace.span(self.p, self.basis.data[:, coords], len(coords))

    def reorder(self, perm: Sequence[int]) -> Subspace:
        """Subspace whose i-th coordinate is the ``perm[i]``-th coordinate of ``self``."""
        if sorted(perm) != list(range(self.ambient_dim)):
            raise ContractViolation("reorder expects a permutation of all coordinates")
        return self.project(perm)

    def elements(self) -> np.ndarray:
        """All p**dim vectors; only sensible for tiny subspaces."""
        d = self.dim
        if d == 0:
            return np.zeros((1, self.ambient_dim), dtype=np.int64)
        coeffs = np.array(np.meshgrid(*[np.arange(self.p)] * d, indexing="ij")).reshape(d, -1).T
        return _mulmod(coeffs, self.basis.data, self.p)

    def random_element(self, rng: np.random.Generator) -> np.ndarray:
        if self.dim == 0:
            return np.zeros(self.ambient_dim, dtype=np.int64)
        c = rng.integers(0, self.p, size=self.dim)
        return _mulmod(c, self.basis.data, self.p)


def _vector(x, p: int) -> np.ndarray:
    v = np.asarray(x, dtype=np.int64)
    if v.ndim != 1:
        raise ContractViolation("expected a 1-D vector")
    return v % p


def solve(a: Matrix, b) -> tuple[np.ndarray, Subspace] | None:
    """Solve ``a x = b``; returns a particular solution and the kernel, or ``None``."""
    bv = _vector(b, a.p)
    if bv.shape[0] != a.rows:
        raise ContractViolation(f"right-hand side has length {bv.shape[0]}, matrix has {a.rows} rows")
    aug = np.hstack([a.data, bv.reshape(-1, 1)])
    red, piv = _rref_array(aug, a.p)
    if piv and piv[-1] == a.cols:
        return None
    x = np.zeros(a.cols, dtype=np.int64)
    for i, c in enumerate(piv):
        x[c] = red[i, -1]
    return x, kernel(a)


def image(a: Matrix) -> Subspace:
    """Column space of ``a`` as a subspace of F_p^rows."""
    return Subspace.span(a.p, a.data.T, a.rows)


def kernel(a: Matrix) -> Subspace:
    """Null space of ``a`` as a subspace of F_p^cols."""
    p, n = a.p, a.cols
    red, piv = _rref_array(a.data, p)
    free = [c for c in range(n) if c not in set(piv)]
    vecs = np.zeros((len(free), n), dtype=np.int64)
    for j, f in enumerate(free):
        vecs[j, f] = 1
        for i, c in enumerate(piv):
            vecs[j, c] = (-red[i, f]) % p
    return Subspace.span(p, vecs, n)


def _same_ambient(u: Subspace, v: Subspace):
    if u.p != v.p or u.ambient_dim != v.ambient_dim:
        raise ContractViolation(
            f"subspaces live in different spaces: (p={u.p}, n={u.ambient_dim}) vs (p={v.p}, n={v.ambient_dim})"
        )


def intersect(u: Subspace, v: Subspace) -> Subspace:
    _same_ambient(u, v)
    if u.is_full():
        return v
    if v.is_full():
        return u
    constraints = u.annihilator().vstack(v.annihilator())
    return kernel(constraints)


def join(u: Subspace, v: Subspace) -> Subspace:
    """Smallest subspace containing both."""
    _same_ambient(u, v)
    return Subspace.span(u.p, np.vstack([u.basis.data, v.basis.data]), u.ambient_dim)


def preimage(a: Matrix, w: Subspace) -> Subspace:
    """``{x : a x in w}``."""
    if a.p != w.p or a.rows != w.ambient_dim:
        raise ContractViolation(f"preimage: matrix of shape {a.shape} does not map into dimension {w.ambient_dim}")
    return kernel(w.annihilator() @ a)


def contains(u: Subspace, v: Subspace) -> bool:
    """True when ``v`` is a subspace of ``u``."""
    _same_ambient(u, v)
    if v.dim > u.dim:
        return False
    return join(u, v).dim == u.dim


def member(x, u: Subspace) -> bool:
    v = _vector(x, u.p)
    if v.shape[0] != u.ambient_dim:
        raise ContractViolation(f"vector of length {v.shape[0]} is not in a space of dimension {u.ambient_dim}")
    if u.dim == 0:
        return not v.any()
    # reduced echelon basis: subtract the pivot combination and check for zero
    coeffs = v[list(u.pivots)]
    residue = (v - _mulmod(coeffs, u.basis.data, u.p)) % u.p
    return not residue.any()


def inverse(a: Matrix) -> Matrix:
    n = a.rows
    if a.cols != n:
        raise ContractViolation("only square matrices can be inverted")
    red, piv = _rref_array(np.hstack([a.data, np.eye(n, dtype=np.int64)]), a.p)
    if list(piv[:n]) != list(range(n)) or len(piv) < n:
        raise ContractViolation("matrix is singular")
    return Matrix(a.p, red[:, n:])


# ---------------------------------------------------------------------------
# sparse incremental elimination


class SparseEchelon:
    """Incremental row echelon form for large sparse systems over F_p.

    Rows are fed one at a time; each is reduced against the pivots collected so
    far, always eliminating its smallest column first.  Callers control the
    elimination order through the column numbering.  Over GF(2) rows are kept
    as packed integers, otherwise as ``{column: value}`` dictionaries.
    """

    def __init__(self, p: int):
        self.p = _check_p(p)
        self._piv: dict[int, tuple] = {}
        self.inconsistent = False

    @property
    def rank(self) -> int:
        return len(self._piv)

    def add(self, row, rhs: int = 0) -> bool:
        """Insert a row (``{col: coeff}``); return True if it raised the rank."""
        if self.p == 2:
            return self._add_gf2(row, rhs)
        p = self.p
        r = {}
        for c, v in row.items():
            v %= p
            if v:
                r[c] = v
        rhs %= p
        piv = self._piv
        while r:
            c = min(r)
            hit = piv.get(c)
            if hit is None:
                lead = r[c]
                if lead != 1:
                    inv = pow(lead, -1, p)
                    r = {j: (v * inv) % p for j, v in r.items()}
                    rhs = (rhs * inv) % p
                piv[c] = (r, rhs)
                return True
            f = r[c]
            prow, prhs = hit
            for j, v in prow.items():
                nv = (r.get(j, 0) - f * v) % p
                if nv:
                    r[j] = nv
                else:
                    r.pop(j, None)
            rhs = (rhs - f * prhs) % p
        if rhs:
            self.inconsistent = True
        return False

    def _add_gf2(self, row, rhs: int) -> bool:
        if isinstance(row, int):
            v = row
        else:
            v = 0
            for c, val in row.items():
                if val % 2:
                    v ^= 1 << c
        rhs &= 1
        piv = self._piv
        while v:
            c = (v & -v).bit_length() - 1
            hit = piv.get(c)
            if hit is None:
                piv[c] = (v, rhs)
                return True
            v ^= hit[0]
            rhs ^= hit[1]
        if rhs:
            self.inconsistent = True
        return False

    def solution(self, ncols: int, free=None) -> np.ndarray | None:
        """A solution; free variables take ``free[c]`` (default zero)."""
        if self.inconsistent:
            return None
        p = self.p
        x = np.zeros(ncols, dtype=np.int64)
        if free is not None:
            x[:] = np.asarray(free, dtype=np.int64) % p
            x[list(self._piv)] = 0
        if p == 2:
            xbits = 0
            for c in np.flatnonzero(x):
                xbits |= 1 << int(c)
            for c in sorted(self._piv, reverse=True):
                v, rhs = self._piv[c]
                val = (rhs + bin(v & xbits).count("1")) & 1
                if val:
                    xbits |= 1 << c
                    x[c] = 1
            return x
        for c in sorted(self._piv, reverse=True):
            r, rhs = self._piv[c]
            acc = rhs
            for j, v in r.items():
                if j != c:
                    acc -= v * int(x[j])
            x[c] = acc % p
        return x


def sparse_rank(rows: Iterable[dict], p: int) -> int:
    """Rank of sparse rows; sparser rows are inserted first."""
    eng = SparseEchelon(p)
    for row in sorted(rows, key=lambda r: (len(r), min(r) if r else -1)):
        eng.add(row)
    return eng.rank
