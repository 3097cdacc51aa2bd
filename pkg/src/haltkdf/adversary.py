"""Exact analysis of the optimal offline guesser.

An attacker holding the client state (salt and predicates) and the server
digest spends a hash budget ``B`` across guessing rounds.  Normalizing by
``B / k`` hash-chain evaluations, a strategy is a vector ``b`` of budget
fractions: ``b_m`` is the share spent hashing candidates at least ``m``
rounds.  Feasibility requires

    sum(b) = 1,   0 <= b_1 <= min(1, k |P| / B),
    b_{m+1} <= b_m * (l_m - 1) / l_m

because only candidates whose round-``m`` predicate missed are worth a
round ``m + 1`` (a fraction ``1 / l_m`` of survivors fires each round).
The success probability of a strategy is linear in ``b``:

    (B / (k |P|)) * sum_i  P_i * b_i * prod_{j<i} l_j / (l_j - 1)

so the optimum sits at a vertex of the feasible polytope, and the exact
success rate is the vertex maximum, clamped to 1.  Once ``B / k`` reaches
the bound of :func:`max_budget_bound` the attacker can afford to run every
candidate to its stopping time and wins outright.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mechanism import StoppingDistribution
from .outcomes import OutcomeSpace

#: Feasibility slack and vertex deduplication tolerance.
FEASIBILITY_TOL = 1e-9

#: Combinatorial guard on vertex enumeration.
MAX_ROUNDS_FOR_VERTICES = 8


@dataclass(frozen=True)
class AttackContext:
    """Budget scenario: hash budget, per-round cost, password-space size.

    ``k_det`` is the iteration count of the cost-equivalent deterministic
    derivation and is only needed for the baseline success rate.
    """

    budget: float
    k: int
    pwd_space_size: float
    k_det: int | None = None

    def __post_init__(self) -> None:
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.pwd_space_size <= 0:
            raise ValueError("password space must be non-empty")

    @property
    def beta(self) -> float:
        """Budget ratio ``B / (k |P|)``."""
        return self.budget / (self.k * self.pwd_space_size)

    @property
    def det_ratio(self) -> float:
        """Budget normalized by the deterministic baseline, ``B / (k' |P|)``."""
        if self.k_det is None:
            raise ValueError("k_det is not set on this context")
        return self.budget / (self.k_det * self.pwd_space_size)


@dataclass(frozen=True)
class AdversaryStrategy:
    """Normalized budget-allocation vector over guessing rounds."""

    b: tuple[float, ...]


@dataclass(frozen=True)
class FeasibleRegion:
    """Linear system ``A x <= b`` plus the implicit simplex equality."""

    moduli: tuple[int, ...]
    beta: float
    a_ub: np.ndarray
    b_ub: np.ndarray

    @property
    def rounds(self) -> int:
        return len(self.moduli) + 1

    def contains(self, point: Sequence[float], tol: float = FEASIBILITY_TOL) -> bool:
        x = np.asarray(point, dtype=float)
        if x.shape != (self.rounds,):
            return False
        if abs(float(x.sum()) - 1.0) > tol:
            return False
        return bool(np.all(self.a_ub @ x <= self.b_ub + tol))


def feasible_region(space: OutcomeSpace, beta: float) -> FeasibleRegion:
    """Build the strategy polytope for a budget ratio ``beta``."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    n = space.rounds
    cap = 1.0 if beta <= 1.0 else 1.0 / beta
    rows = []
    rhs = []
    e1 = np.zeros(n)
    e1[0] = 1.0
    rows.append(e1)
    rhs.append(cap)
    for m, modulus in enumerate(space.moduli):
        row = np.zeros(n)
        row[m + 1] = 1.0
        row[m] = -(modulus - 1) / modulus
        rows.append(row)
        rhs.append(0.0)
    for i in range(n):
        row = np.zeros(n)
        row[i] = -1.0
        rows.append(row)
        rhs.append(0.0)
    return FeasibleRegion(
        moduli=space.moduli,
        beta=beta,
        a_ub=np.array(rows),
        b_ub=np.array(rhs),
    )


def _vertex_array(region: FeasibleRegion, tol: float = FEASIBILITY_TOL) -> np.ndarray:
    """All polytope vertices as an array of shape (count, n).

    Every choice of ``n - 1`` active inequality rows is solved together
    with the simplex equality; singular systems are dropped, infeasible
    solutions filtered, near-duplicates merged.
    """
    n = region.rounds
    if n > MAX_ROUNDS_FOR_VERTICES:
        raise ValueError(
            f"vertex enumeration guarded to n <= {MAX_ROUNDS_FOR_VERTICES}"
        )
    m_rows = region.a_ub.shape[0]
    combos = list(itertools.combinations(range(m_rows), n - 1))
    systems = np.empty((len(combos), n, n))
    rhs = np.empty((len(combos), n))
    for idx, combo in enumerate(combos):
        systems[idx, : n - 1] = region.a_ub[list(combo)]
        rhs[idx, : n - 1] = region.b_ub[list(combo)]
        systems[idx, n - 1] = 1.0
        rhs[idx, n - 1] = 1.0
    dets = np.linalg.det(systems)
    solvable = np.abs(dets) > 1e-12
    if not solvable.any():
        return np.empty((0, n))
    points = np.linalg.solve(systems[solvable], rhs[solvable][..., None])[..., 0]
    feasible = np.all(
        points @ region.a_ub.T <= region.b_ub[None, :] + tol, axis=1
    )
    points = points[feasible] + 0.0  # normalizes -0.0
    vertices: list[np.ndarray] = []
    for p in points:
        if not any(np.max(np.abs(p - q)) <= tol for q in vertices):
            vertices.append(p)
    if not vertices:
        return np.empty((0, n))
    return np.array(vertices)


def enumerate_vertices(region: FeasibleRegion) -> list[AdversaryStrategy]:
    """Vertices of the feasible polytope; the payoff optimum is among them."""
    return [
        AdversaryStrategy(tuple(float(v) for v in row))
        for row in _vertex_array(region)
    ]


def _payoff_weights(dist: StoppingDistribution) -> np.ndarray:
    amps = dist.space.amplification()
    return np.array([a * p for a, p in zip(amps, dist.stop_probs)])


def strategy_payoff(
    b: AdversaryStrategy | Sequence[float], dist: StoppingDistribution
) -> float:
    """Per-budget-unit success weight of a strategy against a distribution."""
    vec = np.asarray(b.b if isinstance(b, AdversaryStrategy) else b, dtype=float)
    if vec.shape != (dist.space.rounds,):
        raise ValueError("strategy length does not match the space")
    return float(_payoff_weights(dist) @ vec)


def max_budget_bound(space: OutcomeSpace, pwd_space_size: float) -> float:
    """Threshold on ``B / k`` above which the attacker succeeds outright.

    Running every candidate to its stopping time costs ``|P|`` chains for
    round one plus the surviving fraction for each later round.
    """
    total = 1.0
    surviving = 1.0
    for modulus in space.moduli:
        surviving *= (modulus - 1) / modulus
        total += surviving
    return total * pwd_space_size


def p_adv(dist: StoppingDistribution, ctx: AttackContext) -> float:
    """Success rate of the optimal attacker: vertex maximum, clamped to [0, 1]."""
    if ctx.budget == 0:
        return 0.0
    bound = max_budget_bound(dist.space, ctx.pwd_space_size)
    if ctx.budget / ctx.k >= bound * (1.0 - 1e-12):
        return 1.0
    verts = _vertex_array(feasible_region(dist.space, ctx.beta))
    if verts.shape[0] == 0:
        # Empty polytope only happens past the budget bound.
        return 1.0
    best = float(np.max(verts @ _payoff_weights(dist)))
    return min(1.0, max(0.0, ctx.beta * best))


def p_det(ctx: AttackContext) -> float:
    """Baseline success rate against the cost-equivalent deterministic KDF."""
    return min(1.0, ctx.det_ratio)


def gain(dist: StoppingDistribution, ctx: AttackContext) -> float:
    """Reduction in success rate versus the deterministic baseline.

    Can be negative for a poorly matched fixed design.
    """
    return p_det(ctx) - p_adv(dist, ctx)
