from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def all_vectors(p: int, n: int) -> np.ndarray:
    """Every vector of F_p^n, one per row."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(itertools.product(range(p), repeat=n)), dtype=np.int64)


def brute_span(p: int, vecs, n: int) -> set[tuple[int, ...]]:
    """All F_p combinations of ``vecs``."""
    vecs = np.asarray(vecs, dtype=np.int64).reshape(-1, n)
    out = set()
    for coeffs in itertools.product(range(p), repeat=len(vecs)):
        v = np.zeros(n, dtype=np.int64)
        for c, row in zip(coeffs, vecs):
            v = (v + c * row) % p
        out.add(tuple(int(t) for t in v))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_sft(p: int, k: int, r: int, rng, reach: int = 2, max_sites: int = 3, codim: int | None = None):
    """Random linear SFT: a window inside ``{0..reach}^r`` containing the origin."""
    from shadowlab.fplinalg import Subspace
    from shadowlab.lattice import SiteSet
    from shadowlab.shiftspace import Alphabet, LinearSFT

    n_sites = int(rng.integers(1, max_sites + 1))
    sites = {(0,) * r} | {tuple(int(v) for v in rng.integers(0, reach + 1, size=r)) for _ in range(n_sites)}
    window = SiteSet.from_sites(sites, r)
    n = k * len(window)
    c = int(rng.integers(1, n)) if codim is None and n > 1 else (codim or 0)
    ann = rng.integers(0, p, size=(c, n))
    from shadowlab.fplinalg import Matrix, kernel

    space = kernel(Matrix(p, ann))
    return LinearSFT(Alphabet(p, k), r, window, Subspace.span(p, space.basis.data, n))
