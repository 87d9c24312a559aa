"""Discrete transportation energy and its analytic mass/energy constants.

The energy of a canonical polyhedral 1-chain is the sum over edges of
C(theta) times edge length.  It is only well defined on non-overlapping
representations, so non-canonical input is rejected rather than silently
canonicalized.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from branchnet.chains import Chain1, component_lift
from branchnet.costs import CostSpec, derivative_profile, evaluate


class NonCanonicalError(ValueError):
    """Energy evaluation requires a canonical (non-overlapping) chain."""


@dataclass(frozen=True)
class EnergyCertificate:
    """An energy value together with an analytic upper bound it respects."""

    energy: float
    bound: float
    bound_kind: str  # "cascade" | "mass_control" | "none"
    inputs_digest: str = ""
    sample_count: int = 0

    def __post_init__(self):
        if self.bound_kind not in ("cascade", "mass_control", "none"):
            raise ValueError(f"unknown bound kind {self.bound_kind!r}")
        if self.bound_kind != "none" and self.energy > self.bound:
            raise ValueError(f"certificate violated: energy {self.energy} > bound {self.bound}")


def energy(T: Chain1, cost: CostSpec) -> float:
    """Total cost: sum of C(theta_e) * length(e) over the edges of T."""
    if T.edges and not T.canonical:
        raise NonCanonicalError("energy is defined on canonical chains only; canonicalize first")
    if T.m != cost.m:
        raise ValueError("chain/cost component mismatch")
    terms = sorted(evaluate(cost, e.theta) * e.length for e in T.edges)
    return float(math.fsum(terms))


def energy_component(T: Chain1, cost: CostSpec, j: int) -> float:
    """Energy of the lift of component j (all other multiplicities zeroed)."""
    return energy(component_lift(T, j), cost)


def mass_bound_constant(
    cost: CostSpec,
    boundary_mass: float,
    directions: int = 10_000,
    radii: int = 64,
    seed: int = 0,
) -> float:
    """Constant C with mass(T') <= C * energy(T) for acyclic fluxes T'.

    Built from the inverse per-axis derivatives at 0 (with the convention
    that an infinite derivative contributes 0) and the sampled supremum of
    |theta|/C(theta) over the ball |theta| <= boundary_mass, scaled by m.
    The supremum is sample-based, not certified, for custom costs.
    """
    if boundary_mass <= 0:
        raise ValueError("boundary_mass must be positive")
    prof = derivative_profile(cost, samples=0)
    inv_deriv = 0.0
    for j in prof.basis_set:
        inv_deriv = max(inv_deriv, 1.0 / prof.axis_derivatives[j])

    rng = np.random.default_rng(seed)
    rs = boundary_mass * np.logspace(-8, 0, radii)
    sup_ratio = 0.0
    for _ in range(max(1, directions // radii)):
        u = rng.normal(size=cost.m)
        u /= np.linalg.norm(u)
        for r in rs:
            c = evaluate(cost, r * u)
            if c > 0.0:
                sup_ratio = max(sup_ratio, r / c)
    # axis directions are the extremal ones for the built-in families
    for j in range(cost.m):
        ej = np.zeros(cost.m)
        ej[j] = 1.0
        for r in rs:
            c = evaluate(cost, r * ej)
            if c > 0.0:
                sup_ratio = max(sup_ratio, r / c)
    return cost.m * max(inv_deriv, sup_ratio)


def digest_inputs(*parts) -> str:
    """Stable digest of arbitrary inputs for certificate bookkeeping."""
    h = hashlib.sha256()
    for p in parts:
        h.update(repr(p).encode())
    return h.hexdigest()[:16]
