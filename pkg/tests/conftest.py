"""Shared generators for randomized tests.

All randomness is seeded; every helper returns plain branchnet objects.
"""

import numpy as np
import pytest

from branchnet import Atom, Chain0, Chain1, Edge, canonicalize


def random_chain(rng, n=2, m=1, edges=6, span=4.0, grid=None) -> Chain1:
    """Random canonical chain; with ``grid`` set, endpoints snap to an
    integer lattice so intersections and overlaps occur frequently."""
    out = []
    for _ in range(edges):
        while True:
            a = rng.uniform(-span, span, n)
            b = rng.uniform(-span, span, n)
            if grid:
                a = np.round(a * grid) / grid
                b = np.round(b * grid) / grid
            if not np.allclose(a, b):
                break
        theta = tuple(rng.normal(scale=2.0, size=m))
        out.append(Edge(tuple(a), tuple(b), theta))
    return canonicalize(Chain1(n, m, tuple(out)))


def random_measure(rng, n=2, m=1, atoms=8, span=4.0, weights=None) -> Chain0:
    pts = rng.uniform(-span, span, (atoms, n))
    if weights is None:
        weights = rng.normal(scale=2.0, size=(atoms, m))
    return Chain0(n, m, tuple(Atom(tuple(p), tuple(w)) for p, w in zip(pts, weights)))


def compatible_pair(rng, n=2, m=1, atoms=8, span=4.0):
    """(mu_minus, mu_plus) with positive weights and equal componentwise totals."""
    wm = rng.uniform(0.2, 2.0, (atoms, m))
    wp = rng.uniform(0.2, 2.0, (atoms, m))
    wp *= wm.sum(axis=0) / wp.sum(axis=0)
    mu_minus = Chain0(n, m, tuple(
        Atom(tuple(p), tuple(w)) for p, w in zip(rng.uniform(-span, span, (atoms, n)), wm)
    ))
    mu_plus = Chain0(n, m, tuple(
        Atom(tuple(p), tuple(w)) for p, w in zip(rng.uniform(-span, span, (atoms, n)), wp)
    ))
    return mu_minus, mu_plus


def path_chain(points, theta) -> Chain1:
    """Polyline through ``points`` carrying constant multiplicity."""
    n, m = len(points[0]), len(theta)
    edges = tuple(Edge(tuple(a), tuple(b), tuple(theta)) for a, b in zip(points, points[1:]))
    return Chain1(n, m, edges)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
