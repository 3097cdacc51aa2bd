"""Selection distributions over halting-predicate outcomes.

A selection rule is fully described by per-outcome probabilities
``p_1..p_n``, one value per stopping-time class: every outcome in class
``j`` is drawn with probability ``p_j``, so the aggregate chance of
stopping at round ``j`` is ``P_j = O_j * p_j``.  Because the class sizes
are the same for every password, a single normalization constraint plus
pairwise ratio bounds ``p_i / p_j <= e**eps`` enforce the per-password
privacy guarantee: the stored outcome shifts the likelihood of any
password by at most ``e**eps``, i.e. leaks at most ``eps / ln 2`` bits.

The softmax-style rule implemented by :func:`exponential_distribution`
weights class ``j`` by ``exp(eps * (1 - j) / (n - 1))``, which meets the
ratio bound with equality between the fastest and slowest classes.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Sequence

from .outcomes import DigestChain, Outcome, OutcomeSpace, Predicate

#: Probability vectors must satisfy sum(O_j * p_j) == 1 to this tolerance.
NORMALIZATION_TOL = 1e-12
#: Additive slack allowed on the e**eps ratio bound (solver residual).
RATIO_TOL = 1e-9


class BudgetTooSmallError(ValueError):
    """Cost budget cannot cover even one hash round at the given distribution."""


@dataclass(frozen=True)
class StoppingDistribution:
    """Per-class outcome probabilities over a symmetric outcome space.

    ``class_probs[j-1]`` is the probability of each single outcome with
    stopping time ``j``.  When ``epsilon`` is set the distribution is
    checked against the ratio bound at construction.
    """

    space: OutcomeSpace
    class_probs: tuple[float, ...]
    epsilon: float | None = None

    def __post_init__(self) -> None:
        n = self.space.rounds
        if len(self.class_probs) != n:
            raise ValueError(f"need {n} class probabilities")
        if any(p < 0.0 or p > 1.0 for p in self.class_probs):
            raise ValueError("class probabilities must lie in [0, 1]")
        total = sum(o * p for o, p in zip(self.space.class_sizes, self.class_probs))
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"class probabilities sum to {total}, not 1")
        if self.epsilon is not None:
            if self.epsilon < 0:
                raise ValueError("epsilon must be >= 0")
            ratio = privacy_ratio(self)
            if ratio > math.exp(self.epsilon) + RATIO_TOL:
                raise ValueError(
                    f"probability ratio {ratio} exceeds exp(epsilon)"
                )

    @property
    def stop_probs(self) -> tuple[float, ...]:
        """Aggregate stopping-time probabilities ``P_j = O_j * p_j``."""
        return tuple(
            o * p for o, p in zip(self.space.class_sizes, self.class_probs)
        )

    @property
    def expected_rounds(self) -> float:
        return sum(j * pj for j, pj in enumerate(self.stop_probs, start=1))


@dataclass(frozen=True)
class MechanismParams:
    """A fitted mechanism: privacy level, cost budget, iteration counts."""

    epsilon: float
    cost_ratio: float
    k: int
    k_det: int = field(default=0)

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        k_det = self.k_det or math.floor(self.cost_ratio)
        object.__setattr__(self, "k_det", k_det)
        if self.k > k_det:
            raise ValueError("k cannot exceed the deterministic-equivalent k")

    @classmethod
    def fit(
        cls, dist: StoppingDistribution, epsilon: float, cost_ratio: float
    ) -> "MechanismParams":
        return cls(epsilon=epsilon, cost_ratio=cost_ratio, k=fit_k(dist, cost_ratio))


def exponential_distribution(epsilon: float, space: OutcomeSpace) -> StoppingDistribution:
    """Softmax selection over stopping-time classes.

    Class ``j`` gets weight ``exp(eps * (1 - j) / (n - 1))``; the
    normalizer is ``W = sum(O_j * weight_j)``.  At ``eps = 0`` this is the
    uniform distribution over all outcomes.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    n = space.rounds
    weights = [math.exp(epsilon * (1 - j) / (n - 1)) for j in range(1, n + 1)]
    w_total = sum(o * w for o, w in zip(space.class_sizes, weights))
    probs = tuple(w / w_total for w in weights)
    return StoppingDistribution(space=space, class_probs=probs, epsilon=epsilon)


def fit_k(dist: StoppingDistribution, cost_ratio: float) -> int:
    """Largest integer ``k`` with ``k * expected_rounds <= cost_ratio``.

    Raises :class:`BudgetTooSmallError` when even ``k = 1`` overruns the
    budget.  The floor is computed robustly against floating-point
    round-off so maximality holds exactly.
    """
    expected = dist.expected_rounds
    k = math.floor(cost_ratio / expected)
    # Repair an off-by-one from the float division in either direction.
    while (k + 1) * expected <= cost_ratio:
        k += 1
    while k >= 1 and k * expected > cost_ratio:
        k -= 1
    if k < 1:
        raise BudgetTooSmallError(
            f"cost ratio {cost_ratio} is below the expected rounds {expected}"
        )
    return k


def privacy_ratio(dist: StoppingDistribution) -> float:
    """Worst-case ratio ``max p_i / p_j`` over ordered class pairs."""
    lo = min(dist.class_probs)
    hi = max(dist.class_probs)
    if lo == 0.0:
        return math.inf if hi > 0.0 else 1.0
    return hi / lo


def info_leak_bits(epsilon: float) -> float:
    """Upper bound, in bits, on what a stored outcome reveals."""
    return epsilon / math.log(2)


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    ok: bool
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[ConstraintCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failures(self) -> tuple[ConstraintCheck, ...]:
        return tuple(c for c in self.checks if not c.ok)


def validate(
    space: OutcomeSpace,
    class_probs: Sequence[float],
    epsilon: float,
    cost_ratio: float,
    k: int,
) -> ValidationReport:
    """Check a raw probability vector against the design constraints.

    Reports normalization, range, the ``e**eps`` ratio bound, and the cost
    bound ``sum(j * O_j * p_j) <= cost_ratio / k``.  Class-level checks
    suffice: symmetry makes them equivalent to the per-password ones.
    """
    probs = [float(p) for p in class_probs]
    sizes = space.class_sizes
    checks = []

    in_range = all(0.0 <= p <= 1.0 for p in probs)
    checks.append(
        ConstraintCheck("range", in_range, "all class probabilities in [0, 1]")
    )

    total = sum(o * p for o, p in zip(sizes, probs))
    checks.append(
        ConstraintCheck(
            "normalization",
            abs(total - 1.0) <= NORMALIZATION_TOL,
            f"sum(O_j * p_j) = {total:.15g}",
        )
    )

    lo, hi = min(probs), max(probs)
    ratio = math.inf if lo <= 0.0 < hi else (1.0 if hi == 0.0 else hi / lo)
    bound = math.exp(epsilon)
    checks.append(
        ConstraintCheck(
            "epsilon_ratio",
            ratio <= bound + RATIO_TOL,
            f"max ratio {ratio:.15g} vs bound {bound:.15g}",
        )
    )

    cost = sum(j * o * p for j, (o, p) in enumerate(zip(sizes, probs), start=1))
    budget = cost_ratio / k
    checks.append(
        ConstraintCheck(
            "cost",
            cost <= budget + RATIO_TOL,
            f"expected rounds {cost:.15g} vs budget {budget:.15g}",
        )
    )
    return ValidationReport(tuple(checks))


def sample_stopping_time(dist: StoppingDistribution, rng: random.Random) -> int:
    """Draw a stopping time ``j`` from the aggregate probabilities."""
    u = rng.random()
    acc = 0.0
    for j, pj in enumerate(dist.stop_probs, start=1):
        acc += pj
        if u < acc:
            return j
    return dist.space.rounds


def sample_outcome(
    dist: StoppingDistribution, chain: DigestChain, rng: random.Random
) -> Outcome:
    """Draw an outcome with the distribution's law, uniform within its class.

    Never enumerates the outcome space: the stopping time ``j`` is drawn
    first, then each slot picks a residue directly against the chain --
    a uniformly random non-firing residue before slot ``j``, the firing
    residue at slot ``j``, and an unconstrained uniform residue after it
    (for ``j = n`` every slot is non-firing).
    """
    space = dist.space
    if chain.rounds != space.rounds:
        raise ValueError("chain length does not match the outcome space")
    j = sample_stopping_time(dist, rng)
    preds = []
    for m, modulus in enumerate(space.moduli, start=1):
        firing = _firing_residue(chain.digests[m - 1], modulus)
        if m < j:
            offset = 1 + rng.randrange(modulus - 1)
            residue = (firing + offset) % modulus
        elif m == j:
            residue = firing
        else:
            residue = rng.randrange(modulus)
        preds.append(Predicate(residue, modulus))
    return Outcome(tuple(preds))


def _firing_residue(digest: bytes, modulus: int) -> int:
    acc = 0
    for byte in digest:
        acc = (acc * 256 + byte) % modulus
    return acc


# ---------------------------------------------------------------------------
# Distribution interchange format

def distribution_to_json(dist: StoppingDistribution, k: int | None = None) -> dict:
    return {
        "moduli": list(dist.space.moduli),
        "class_probs": list(dist.class_probs),
        "epsilon": dist.epsilon,
        "k": k,
    }


def distribution_from_json(data: dict) -> tuple[StoppingDistribution, int | None]:
    space = OutcomeSpace(tuple(int(m) for m in data["moduli"]))
    eps = data.get("epsilon")
    dist = StoppingDistribution(
        space=space,
        class_probs=tuple(float(p) for p in data["class_probs"]),
        epsilon=None if eps is None else float(eps),
    )
    k = data.get("k")
    return dist, (None if k is None else int(k))
