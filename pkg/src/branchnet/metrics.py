"""Verification metrics: flat-distance bounds, slicing, coarea and
integral-geometric identities, the augmentation map, and upper bounds for
the W transportation distance.

Affine functionals are passed as a gradient vector ``g`` plus scalar
``offset``: f(x) = g.x + offset, Lip(f) = |g|.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from branchnet.chains import (
    Atom,
    Chain0,
    Chain1,
    canonicalize,
    canonicalize0,
    component_lift,
    edge_arrays,
    is_compatible,
    mass,
)
from branchnet.costs import CostSpec
from branchnet.energy import energy


@dataclass(frozen=True)
class FlatBounds:
    """Per-component flat values with the bracket max_j <= F <= sum_j."""

    lower: float
    upper: float
    per_component: tuple[float, ...]
    exact: bool = True  # False when the components are themselves brackets

    def __post_init__(self):
        if self.per_component:
            lo = max(self.per_component)
            hi = math.fsum(self.per_component)
            if not (lo <= self.lower + 1e-12 and self.upper <= hi + 1e-9 + 1e-9 * hi):
                raise AssertionError("flat bracket ordering violated")
        if self.lower > self.upper * (1 + 1e-12) + 1e-15:
            raise AssertionError("flat lower bound exceeds upper bound")


def flat_norm_0chain_component(nu: Chain0, j: int) -> float:
    """Exact flat norm of one real component of an atomic 0-chain.

    Solves min_S mass(S) + mass(nu_j - boundary S) as a transportation
    linear program: ship flow from positive to negative atoms at cost
    |p - q| per unit, or pay cost 1 per unit of untransported residual on
    either side.
    """
    pos, neg = [], []
    for a in nu.atoms:
        w = a.weight[j]
        if w > 0:
            pos.append((np.array(a.position), w))
        elif w < 0:
            neg.append((np.array(a.position), -w))
    P = math.fsum(w for _, w in pos)
    N = math.fsum(w for _, w in neg)
    if not pos or not neg:
        return P + N

    # Objective over flows only: shipping a unit saves the two residual
    # units it would otherwise cost, so cost coefficient is d - 2.
    npos, nneg = len(pos), len(neg)
    D = np.array([[float(np.linalg.norm(p - q)) for q, _ in neg] for p, _ in pos])
    c = (D - 2.0).ravel()
    rows, cols, vals = [], [], []
    for i in range(npos):
        for k in range(nneg):
            idx = i * nneg + k
            rows.append(i)
            cols.append(idx)
            vals.append(1.0)
            rows.append(npos + k)
            cols.append(idx)
            vals.append(1.0)
    A_ub = coo_matrix((vals, (rows, cols)), shape=(npos + nneg, npos * nneg))
    b_ub = np.array([w for _, w in pos] + [w for _, w in neg])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=(0, None), method="highs")
    if not res.success:  # residual-only solution is always feasible
        raise RuntimeError(f"flat-norm LP failed: {res.message}")
    return float(res.fun + P + N)


def flat_bounds(X: Chain0 | Chain1) -> FlatBounds:
    """Flat-distance bracket assembled from per-component values.

    For 0-chains the components are exact (transportation LP); for
    1-chains each component value is its mass, an upper bracket for the
    component flat norm (take the zero filling).
    """
    if isinstance(X, Chain0):
        nu = canonicalize0(X)
        per = tuple(flat_norm_0chain_component(nu, j) for j in range(nu.m))
        exact = True
    else:
        T = X if X.canonical else canonicalize(X)
        per = tuple(mass(component_lift(T, j)) for j in range(T.m))
        exact = False
    lo = max(per) if per else 0.0
    hi = math.fsum(per)
    return FlatBounds(lo, hi, per, exact)


def slice_chain(T: Chain1, g, y: float, offset: float = 0.0) -> Chain0:
    """Slice a 1-chain by the level set {g.x + offset = y}.

    Each transversal edge contributes an atom at the crossing point with
    weight +theta when f increases along the edge orientation and -theta
    otherwise.  A y hitting a vertex is perturbed by a relative epsilon
    with a warning.
    """
    gv = np.asarray(g, dtype=float)
    if not T.edges:
        return Chain0(T.n, T.m, ())
    A, B, Th = edge_arrays(T)
    fa = A @ gv + offset
    fb = B @ gv + offset
    frange = max(float(np.max(np.concatenate([fa, fb])) - np.min(np.concatenate([fa, fb]))), 1.0)
    eps = 1e-9 * frange
    if np.any(np.abs(fa - y) <= eps) or np.any(np.abs(fb - y) <= eps):
        warnings.warn("slice level hits a vertex; perturbing y", stacklevel=2)
        y = y + 2 * eps
        if np.any(np.abs(fa - y) <= eps) or np.any(np.abs(fb - y) <= eps):
            y = y - 4.1 * eps
    atoms = []
    for i in range(len(A)):
        lo, hi = min(fa[i], fb[i]), max(fa[i], fb[i])
        if not (lo < y < hi):
            continue
        t = (y - fa[i]) / (fb[i] - fa[i])
        z = tuple(float(c) for c in A[i] + t * (B[i] - A[i]))
        sign = 1.0 if fb[i] > fa[i] else -1.0
        atoms.append(Atom(z, tuple(sign * Th[i])))
    return canonicalize0(Chain0(T.n, T.m, tuple(atoms)))


def coarea_check(T: Chain1, g, offset: float = 0.0) -> tuple[float, float]:
    """(closed-form coarea integral, Lipschitz bound Lip(f)*mass(T)).

    The integral of mass(slice(T, f, y)) over y equals
    sum_e |theta_e|_2 * |f(b_e) - f(a_e)| exactly for affine f.
    """
    gv = np.asarray(g, dtype=float)
    if not T.edges:
        return 0.0, 0.0
    A, B, Th = edge_arrays(T)
    drops = np.abs((B - A) @ gv)
    norms = np.linalg.norm(Th, axis=1)
    integral = float(math.fsum(sorted(norms * drops)))
    bound = float(np.linalg.norm(gv)) * mass(T)
    return integral, bound


def augmentation(nu: Chain0) -> np.ndarray:
    """Total weight vector chi(nu); vanishes identically on boundaries."""
    out = np.zeros(nu.m)
    for a in nu.atoms:
        out += a.weight
    return out


def _calibration_constant(n: int, samples: int, rng) -> float:
    """c(n,1) = 1 / E|u.v| over uniform unit directions v."""
    if n == 2:
        return math.pi / 2.0  # E|cos phi| = 2/pi
    V = rng.normal(size=(samples, n))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    return float(1.0 / np.mean(np.abs(V[:, 0])))


def ig_identity_mc(
    T: Chain1, cost: CostSpec, samples: int = 10**6, seed: int = 0
) -> tuple[float, float, float]:
    """Monte Carlo check of the integral-geometric energy representation.

    For each random unit direction v the slice integral over levels has
    the closed form sum_e C(theta_e) * len(e) * |tau_e . v|; the average
    over directions times the calibration constant c(n,1) recovers the
    energy.  Returns (estimate, exact, relative error).
    """
    exact = energy(T if T.canonical else canonicalize(T), cost)
    if not T.edges:
        return 0.0, 0.0, 0.0
    A, B, _ = edge_arrays(T)
    tau = B - A
    lengths = np.linalg.norm(tau, axis=1)
    tau = tau / lengths[:, None]
    weights = np.array([_edge_cost(T, cost, i) for i in range(len(T.edges))]) * lengths

    rng = np.random.default_rng(seed)
    c = _calibration_constant(T.n, min(samples, 10**6), np.random.default_rng(seed + 1))
    acc = np.zeros(len(T.edges))
    done = 0
    chunk = 1 << 16
    while done < samples:
        k = min(chunk, samples - done)
        V = rng.normal(size=(k, T.n))
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        acc += np.abs(V @ tau.T).sum(axis=0)
        done += k
    estimate = c * float(weights @ (acc / samples))
    rel = abs(estimate - exact) / exact if exact > 0 else abs(estimate)
    return estimate, exact, rel


def _edge_cost(T: Chain1, cost: CostSpec, i: int) -> float:
    from branchnet.costs import evaluate

    return evaluate(cost, T.edges[i].theta)


def w_upper(
    mu_minus: Chain0,
    mu_plus: Chain0,
    cost: CostSpec,
    K: int = 4,
    config=None,
    grid=None,
) -> float:
    """Upper bound for the W transportation distance between compatible
    measures: the better of the cascade competitor and local search.

    Passing a shared ``grid`` makes sweeps over dyadic approximations of a
    fixed target coherent: the cascade between the level-h approximation
    and the target on the same grid reduces to the series tail from level
    h, which decreases with h.
    """
    if not is_compatible(mu_minus, mu_plus):
        raise ValueError("incompatible measures")
    nu = canonicalize0(mu_plus - mu_minus)
    if not nu.atoms:
        return 0.0

    best = math.inf
    try:
        from branchnet.construct import cascade, shifted_grid

        if grid is None:
            pts = np.array([a.position for a in nu.atoms])
            center = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
            edge = float(np.max(pts.max(axis=0) - pts.min(axis=0))) or 1.0
            grid = shifted_grid(tuple(center), edge, [mu_minus, mu_plus], k_max=max(K + 1, 8))
        best = energy(cascade(mu_minus, mu_plus, grid, min(K, grid.k_max - 1)).chain, cost)
    except Exception:
        pass

    from branchnet.optimize import OptimizerConfig, local_search

    cfg = config or OptimizerConfig()
    T, _ = local_search(mu_minus, mu_plus, cost, cfg)
    return min(best, energy(T, cost))
