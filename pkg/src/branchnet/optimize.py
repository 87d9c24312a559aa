"""Energy-decreasing transformations and local-search solver.

Moves: per-component cycle canceling (yields the acyclic part),
degree-2 straightening, Weiszfeld branch-point relocation, and a
subadditivity-driven merge move that reroutes two near-parallel edge
bundles through a shared trunk.  Every accepted move is energy
non-increasing; there is no global optimality guarantee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from branchnet.chains import (
    Chain0,
    Chain1,
    Edge,
    boundary,
    canonicalize,
    component_lift,
    divergence,
    is_compatible,
    mass,
)
from branchnet.costs import CostSpec, evaluate
from branchnet.energy import energy, mass_bound_constant

_FLOW_TOL_REL = 1e-14


@dataclass(frozen=True)
class OptimizerConfig:
    moves: frozenset = frozenset({"cycle_removal", "straighten", "relocate", "merge_split"})
    rel_tol: float = 1e-6
    max_iters: int = 50
    seed: int = 0
    init: str = "cone"  # "cone" | "cascade"
    weiszfeld_iters: int = 200
    weiszfeld_tol: float = 1e-12
    merge_angle_deg: float = 30.0
    merge_dist_frac: float = 0.1

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.init not in ("cone", "cascade"):
            raise ValueError("init must be 'cone' or 'cascade'")


@dataclass(frozen=True)
class SolutionReport:
    energy: float
    mass: float
    boundary_residual: float
    acyclic_per_component: tuple[bool, ...]
    mass_bound_ok: bool
    mass_bound_constant: float
    iterations: int
    eps_bnd: float = 1e-8

    @property
    def ok(self) -> bool:
        return (
            self.boundary_residual <= self.eps_bnd
            and all(self.acyclic_per_component)
            and self.mass_bound_ok
        )


# ---------------------------------------------------------------------------
# cycle removal

def _flow_graph(T: Chain1, j: int, tol: float):
    """Directed arcs (u, v, edge_index, flow>0) for commodity j."""
    arcs = []
    for i, e in enumerate(T.edges):
        f = e.theta[j]
        if f > tol:
            arcs.append((e.a, e.b, i, f))
        elif f < -tol:
            arcs.append((e.b, e.a, i, -f))
    return arcs


def _find_directed_cycle(arcs):
    """One directed cycle as a list of arc indices, or None (iterative DFS)."""
    adj: dict = {}
    for k, (u, v, _, _) in enumerate(arcs):
        adj.setdefault(u, []).append((v, k))
        adj.setdefault(v, [])
    color = {u: 0 for u in adj}  # 0 white, 1 on stack, 2 done
    parent_arc: dict = {}
    for start in adj:
        if color[start] != 0:
            continue
        stack = [(start, iter(adj[start]))]
        color[start] = 1
        while stack:
            u, it = stack[-1]
            advanced = False
            for v, k in it:
                if color[v] == 0:
                    color[v] = 1
                    parent_arc[v] = k
                    stack.append((v, iter(adj[v])))
                    advanced = True
                    break
                if color[v] == 1:
                    # back edge: walk the stack from u back to v
                    cycle = [k]
                    w = u
                    while w != v:
                        ka = parent_arc[w]
                        cycle.append(ka)
                        w = arcs[ka][0]
                    cycle.reverse()
                    return cycle
            if not advanced:
                color[u] = 2
                stack.pop()
        # unwind leaves color 1 entries; mark done
        for u in adj:
            if color[u] == 1:
                color[u] = 2
    return None


def remove_cycles(T: Chain1) -> Chain1:
    """Cancel all per-component directed cycles (the discrete acyclic part).

    Repeatedly finds a cycle in the sign-consistent flow support of each
    commodity and subtracts the minimum flow along it.  Divergence is
    preserved exactly, the result is a piece of T, and each component's
    support becomes acyclic.  Terminates: every cancellation zeroes at
    least one edge-component.
    """
    if not T.canonical:
        T = canonicalize(T)
    theta = np.array([e.theta for e in T.edges]) if T.edges else np.zeros((0, T.m))
    max_th = float(np.max(np.abs(theta))) if T.edges else 0.0
    tol = _FLOW_TOL_REL * max_th

    for j in range(T.m):
        while True:
            work = Chain1(T.n, T.m, tuple(
                Edge(e.a, e.b, tuple(row)) for e, row in zip(T.edges, theta)
            ), canonical=True)
            arcs = _flow_graph(work, j, tol)
            cycle = _find_directed_cycle(arcs)
            if cycle is None:
                break
            c = min(arcs[k][3] for k in cycle)
            for k in cycle:
                _, _, ei, _ = arcs[k]
                s = 1.0 if theta[ei, j] > 0 else -1.0
                theta[ei, j] -= s * c
                if abs(theta[ei, j]) <= tol:
                    theta[ei, j] = 0.0

    out = [
        Edge(e.a, e.b, tuple(row))
        for e, row in zip(T.edges, theta)
        if float(np.linalg.norm(row)) > tol
    ]
    return Chain1(T.n, T.m, tuple(out), canonical=True)


@dataclass(frozen=True)
class MultiplicityBoundReport:
    ok: bool
    worst_ratio: float
    violations: tuple[tuple[int, int], ...]  # (edge index, component)


def check_multiplicity_bound(T: Chain1, tol: float = 1e-9) -> MultiplicityBoundReport:
    """Verify |theta_j(e)| <= half the boundary mass of each component lift
    (valid for acyclic chains)."""
    violations = []
    worst = 0.0
    for j in range(T.m):
        half = 0.5 * mass(boundary(component_lift(T, j)))
        for i, e in enumerate(T.edges):
            v = abs(e.theta[j])
            if v > tol:
                worst = max(worst, v / half if half > 0 else math.inf)
                if v > half + tol:
                    violations.append((i, j))
    return MultiplicityBoundReport(not violations, worst, tuple(violations))


# ---------------------------------------------------------------------------
# straightening

def straighten(T: Chain1, eps: float = 1e-12) -> Chain1:
    """Collapse interior degree-2 vertices with identical through-flow.

    Replaces the two incident edges by their chord; energy never increases
    (triangle inequality times the shared cost term) and the boundary is
    untouched since the collapsed vertex carries no net weight.
    """
    if not T.canonical:
        T = canonicalize(T)
    edges = {i: e for i, e in enumerate(T.edges)}
    next_id = len(T.edges)
    incident: dict = {}
    for i, e in edges.items():
        incident.setdefault(e.a, set()).add(i)
        incident.setdefault(e.b, set()).add(i)

    changed = True
    while changed:
        changed = False
        for v, ids in list(incident.items()):
            if len(ids) != 2:
                continue
            i1, i2 = sorted(ids)
            e1, e2 = edges[i1], edges[i2]
            thru1 = np.array(e1.theta) * (1.0 if e1.b == v else -1.0)  # flow into v
            thru2 = np.array(e2.theta) * (1.0 if e2.a == v else -1.0)  # flow out of v
            scale = max(1.0, float(np.max(np.abs(thru1))))
            if np.max(np.abs(thru1 - thru2)) > eps * scale:
                continue
            x = e1.a if e1.b == v else e1.b
            y = e2.b if e2.a == v else e2.a
            if x == y:
                continue  # two-edge loop; cycle removal's job
            new_edge = Edge(x, y, tuple(thru1))
            for i in (i1, i2):
                e = edges.pop(i)
                incident[e.a].discard(i)
                incident[e.b].discard(i)
            edges[next_id] = new_edge
            incident.setdefault(x, set()).add(next_id)
            incident.setdefault(y, set()).add(next_id)
            next_id += 1
            changed = True
    return canonicalize(Chain1(T.n, T.m, tuple(edges[i] for i in sorted(edges))))


# ---------------------------------------------------------------------------
# Weiszfeld branch-point relocation

def _weiszfeld(v0: np.ndarray, anchors: np.ndarray, weights: np.ndarray, iters: int, tol: float, diam: float, rng) -> np.ndarray:
    """Weighted geometric median with damping at anchor coincidences."""
    v = v0.copy()
    for _ in range(iters):
        d = np.linalg.norm(anchors - v, axis=1)
        hit = np.nonzero(d < 1e-12 * max(diam, 1.0))[0]
        if hit.size:
            k = int(hit[0])
            away = np.nonzero(d >= 1e-12 * max(diam, 1.0))[0]
            if away.size == 0:
                return anchors[k]
            dirs = anchors[away] - v
            nrm = np.linalg.norm(dirs, axis=1)
            R = np.sum(weights[away, None] * dirs / nrm[:, None], axis=0)
            # coincident anchors contribute a full subgradient ball each
            slack = float(np.sum(weights[hit]))
            if np.linalg.norm(R) <= slack * (1 + 1e-12):
                return anchors[k]  # subgradient optimality at the anchor
            step = 1e-7 * max(diam, 1.0)
            v = v + 0.5 * step * R / np.linalg.norm(R)
            continue
        wd = weights / d
        v_new = (wd @ anchors) / np.sum(wd)
        if np.linalg.norm(v_new - v) <= tol * max(diam, 1.0):
            return v_new
        v = v_new
    return v


def _free_vertices(T: Chain1, eps: float = 1e-12) -> set:
    bnd = {a.position for a in boundary(T).atoms}
    return {v for v in T.vertices() if v not in bnd}


def _chain_diam(T: Chain1) -> float:
    pts = np.array([p for e in T.edges for p in (e.a, e.b)])
    if len(pts) == 0:
        return 1.0
    return float(np.max(np.ptp(pts, axis=0))) or 1.0


def relocate_branch_points(
    T: Chain1, cost: CostSpec, iters: int = 200, tol: float = 1e-12, seed: int = 0
) -> Chain1:
    """One sweep of Weiszfeld relocation over the free vertices.

    A free vertex carries zero boundary weight; its optimal position for
    fixed topology minimizes sum_e C(theta_e) |v - other(e)|.  Moves are
    accepted only when the local objective does not increase, so the sweep
    is energy non-increasing.  Vertices that land on a neighbor make the
    connecting edge vanish.
    """
    if not T.canonical:
        T = canonicalize(T)
    if not T.edges:
        return T
    rng = np.random.default_rng(seed)
    diam = _chain_diam(T)
    edges = [(e.a, e.b, e.theta) for e in T.edges]

    for v in sorted(_free_vertices(T)):
        inc = [(i, 0) for i, (a, _, _) in enumerate(edges) if a == v]
        inc += [(i, 1) for i, (_, b, _) in enumerate(edges) if b == v]
        if not inc:
            continue
        anchors = np.array([edges[i][1 - side] for i, side in inc])
        weights = np.array([evaluate(cost, edges[i][2]) for i, side in inc])
        old = np.array(v)
        f_old = float(np.sum(weights * np.linalg.norm(anchors - old, axis=1)))
        new = _weiszfeld(old, anchors, weights, iters, tol, diam, rng)
        # snap to a coincident anchor so the degenerate edge can be dropped
        d = np.linalg.norm(anchors - new, axis=1)
        k = int(np.argmin(d))
        if d[k] < 1e-9 * max(diam, 1.0):
            new = anchors[k]
        f_new = float(np.sum(weights * np.linalg.norm(anchors - new, axis=1)))
        if f_new > f_old * (1 + 1e-12):
            continue
        vt = tuple(float(c) for c in new)
        for i, side in inc:
            a, b, th = edges[i]
            edges[i] = (vt, b, th) if side == 0 else (a, vt, th)

    kept = [Edge(a, b, th) for a, b, th in edges if a != b]
    return canonicalize(Chain1(T.n, T.m, tuple(kept)))


# ---------------------------------------------------------------------------
# merge/split topology move

def _merge_candidates(T: Chain1, config: OptimizerConfig):
    """Pairs of distinct near-parallel nearby edges, best-first by closeness."""
    E = T.edges
    if len(E) < 2:
        return []
    diam = _chain_diam(T)
    cos_thr = math.cos(math.radians(config.merge_angle_deg))
    A = np.array([e.a for e in E])
    B = np.array([e.b for e in E])
    U = (B - A) / np.linalg.norm(B - A, axis=1)[:, None]
    M = 0.5 * (A + B)
    ii, jj = np.triu_indices(len(E), 1)
    dots = np.sum(U[ii] * U[jj], axis=1)
    dist = np.linalg.norm(M[ii] - M[jj], axis=1)
    keep = (np.abs(dots) >= cos_thr) & (dist <= config.merge_dist_frac * diam)
    out = [(float(dist[k]), int(ii[k]), int(jj[k]), float(dots[k])) for k in np.nonzero(keep)[0]]
    out.sort()
    return out


def _apply_merge(T: Chain1, i: int, k: int, aligned: bool, cost: CostSpec, config: OptimizerConfig) -> Chain1:
    """Reroute edges i and k through a shared trunk and relocate its ends."""
    E = list(T.edges)
    e1, e2 = E[i], E[k]
    a2, b2, th2 = (e2.a, e2.b, e2.theta)
    if not aligned:
        a2, b2 = b2, a2
        th2 = tuple(-t for t in th2)
    v = tuple(0.5 * (np.array(e1.a) + a2))
    w = tuple(0.5 * (np.array(e1.b) + b2))
    if v == w:
        return T
    rest = [e for idx, e in enumerate(E) if idx not in (i, k)]
    trunk = tuple(x + y for x, y in zip(e1.theta, th2))
    new = [
        Edge(e1.a, v, e1.theta),
        Edge(a2, v, th2),
        Edge(v, w, trunk),
        Edge(w, e1.b, e1.theta),
        Edge(w, b2, th2),
    ]
    new = [e for e in new if e.a != e.b]
    trial = canonicalize(Chain1(T.n, T.m, tuple(rest + new)))
    return relocate_branch_points(trial, cost, config.weiszfeld_iters, config.weiszfeld_tol, config.seed)


# ---------------------------------------------------------------------------
# local search driver

def local_search(
    mu_minus: Chain0,
    mu_plus: Chain0,
    cost: CostSpec,
    config: OptimizerConfig | None = None,
) -> tuple[Chain1, SolutionReport]:
    """Heuristic minimizer of the transportation energy between two
    compatible measures.

    Starts from the cone (or cascade) competitor and sweeps the move set,
    accepting only strict energy decreases; stops when a full sweep gains
    less than rel_tol relatively or after max_iters sweeps.
    """
    config = config or OptimizerConfig()
    if not is_compatible(mu_minus, mu_plus):
        raise ValueError("incompatible measures")
    nu = mu_plus - mu_minus

    if config.init == "cascade":
        from branchnet.construct import cascade, shifted_grid

        pts = np.array([a.position for a in nu.atoms])
        center = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
        edge = float(np.max(pts.max(axis=0) - pts.min(axis=0))) or 1.0
        grid = shifted_grid(tuple(center), edge, [mu_minus, mu_plus], seed=config.seed)
        T = cascade(mu_minus, mu_plus, grid, K=4).chain
    else:
        pts = np.array([a.position for a in nu.atoms])
        wts = np.array([np.linalg.norm(a.weight) for a in nu.atoms])
        vertex = tuple((wts @ pts) / np.sum(wts)) if len(pts) else (0.0,) * nu.n
        T = canonicalize(cone(nu, vertex)) if len(pts) else Chain1(nu.n, nu.m, (), canonical=True)

    E = energy(T, cost)
    iters = 0
    for iters in range(1, config.max_iters + 1):
        E_start = E
        if "cycle_removal" in config.moves:
            T2 = remove_cycles(T)
            E2 = energy(T2, cost)
            if E2 <= E:
                T, E = T2, E2
        if "straighten" in config.moves:
            T2 = straighten(T)
            E2 = energy(T2, cost)
            if E2 <= E * (1 + 1e-12):
                T, E = T2, E2
        if "relocate" in config.moves:
            T2 = relocate_branch_points(T, cost, config.weiszfeld_iters, config.weiszfeld_tol, config.seed)
            E2 = energy(T2, cost)
            if E2 <= E * (1 + 1e-12):
                T, E = T2, E2
        if "merge_split" in config.moves:
            for _, i, k, dot in _merge_candidates(T, config)[:8]:
                T2 = _apply_merge(T, i, k, dot > 0, cost, config)
                E2 = energy(T2, cost)
                if E2 < E * (1 - config.rel_tol):
                    T, E = T2, E2
                    break
        if E_start - E < config.rel_tol * max(E_start, 1e-300):
            break

    report = verify_solution(T, mu_minus, mu_plus, cost, iterations=iters)
    return T, report


def cone(nu: Chain0, vertex) -> Chain1:
    from branchnet.construct import cone as _cone

    return _cone(nu, vertex)


def verify_solution(
    T: Chain1,
    mu_minus: Chain0,
    mu_plus: Chain0,
    cost: CostSpec,
    iterations: int = 0,
    eps_bnd: float = 1e-8,
) -> SolutionReport:
    """Certify a produced network: boundary residual (flat upper bound of
    divergence minus target), per-component acyclicity, and the
    energy-controls-mass inequality."""
    from branchnet.metrics import flat_bounds

    if not T.canonical:
        T = canonicalize(T)
    target = mu_minus - mu_plus
    residual_chain = divergence(T) - target
    from branchnet.chains import canonicalize0

    residual = flat_bounds(canonicalize0(residual_chain)).upper
    acyclic = []
    theta = np.array([e.theta for e in T.edges]) if T.edges else np.zeros((0, T.m))
    max_th = float(np.max(np.abs(theta))) if T.edges else 0.0
    tol = _FLOW_TOL_REL * max_th
    for j in range(T.m):
        arcs = _flow_graph(T, j, tol)
        acyclic.append(_find_directed_cycle(arcs) is None)

    bm = mass(canonicalize0(target))
    E = energy(T, cost)
    M = mass(T)
    if bm > 0:
        cconst = mass_bound_constant(cost, bm)
        mass_ok = bool(M <= cconst * E * (1 + 1e-9) + 1e-12)
    else:
        cconst = 0.0
        mass_ok = bool(M <= 1e-12)
    return SolutionReport(E, M, float(residual), tuple(bool(a) for a in acyclic), mass_ok, cconst, iterations, eps_bnd)
