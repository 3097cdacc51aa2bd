"""Halting-predicate outcome spaces.

A halting predicate is a residue test ``x = r (mod m)`` applied to an
intermediate digest of an iterated hash chain; a chain of ``n`` rounds
carries ``n - 1`` predicates, and the stopping time of a password is the
first round whose predicate fires (``n`` if none does).

The product space of all residue choices for fixed moduli is *symmetric*:
for any digest chain the number of predicate sequences with stopping time
``j`` is a constant ``O_j`` that depends only on the moduli.  For ``j < n``
exactly one residue per earlier slot misses (``l_i - 1`` choices), the
``j``-th slot is pinned to the firing residue, and later slots are free:

    O_j = prod(l_i - 1 for i < j) * prod(l_i for i > j)
    O_n = prod(l_i - 1 for all i)

All types here are immutable and all operations pure.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

#: Largest outcome-space cardinality that classify_outcomes will enumerate.
ENUMERATION_GUARD = 10**6


class EnumerationGuardError(ValueError):
    """Outcome space too large to enumerate exhaustively."""


@dataclass(frozen=True)
class Predicate:
    """Residue test: fires on digests congruent to ``residue`` mod ``modulus``."""

    residue: int
    modulus: int

    def __post_init__(self) -> None:
        if self.modulus < 2:
            raise ValueError(f"modulus must be >= 2, got {self.modulus}")
        if not 0 <= self.residue < self.modulus:
            raise ValueError(
                f"residue must be in [0, {self.modulus}), got {self.residue}"
            )

    def evaluate(self, digest: bytes) -> int:
        return predicate_eval(self, digest)


def predicate_eval(pred: Predicate, digest: bytes) -> int:
    """Evaluate a predicate on a digest, returning 1 if it fires else 0.

    The digest is interpreted as a big-endian unsigned integer and reduced
    incrementally byte by byte (Horner), so digests of any length are
    handled exactly without constructing a big integer.
    """
    acc = 0
    m = pred.modulus
    for byte in digest:
        acc = (acc * 256 + byte) % m
    return 1 if acc == pred.residue else 0


@dataclass(frozen=True)
class Outcome:
    """An ordered sequence of ``n - 1`` halting predicates."""

    predicates: tuple[Predicate, ...]

    def __post_init__(self) -> None:
        if not self.predicates:
            raise ValueError("an outcome needs at least one predicate")

    @property
    def rounds(self) -> int:
        return len(self.predicates) + 1

    def to_json(self) -> list[dict[str, int]]:
        return [{"residue": p.residue, "modulus": p.modulus} for p in self.predicates]

    @classmethod
    def from_json(cls, items: Sequence[dict[str, int]]) -> "Outcome":
        return cls(tuple(Predicate(int(d["residue"]), int(d["modulus"])) for d in items))


@dataclass(frozen=True)
class OutcomeSpace:
    """All predicate sequences over fixed per-slot moduli ``(l_1..l_{n-1})``."""

    moduli: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.moduli) < 1:
            raise ValueError("need at least one modulus (two rounds)")
        for m in self.moduli:
            if m < 2:
                raise ValueError(f"every modulus must be >= 2, got {m}")

    @property
    def rounds(self) -> int:
        return len(self.moduli) + 1

    @property
    def total_outcomes(self) -> int:
        return math.prod(self.moduli)

    @property
    def class_sizes(self) -> tuple[int, ...]:
        """Per-stopping-time class sizes ``(O_1, ..., O_n)``; see module docs."""
        n = self.rounds
        sizes = []
        for j in range(1, n):
            miss = math.prod(m - 1 for m in self.moduli[: j - 1])
            free = math.prod(self.moduli[j:])
            sizes.append(miss * free)
        sizes.append(math.prod(m - 1 for m in self.moduli))
        return tuple(sizes)

    def amplification(self) -> tuple[float, ...]:
        """Survival amplification factors ``prod(l_j / (l_j - 1), j < i)``.

        Factor ``i`` rescales the stopping-time-``i`` probability to a
        conditional probability given survival past round ``i - 1``; used
        by the adversary payoff.
        """
        amps = [1.0]
        for m in self.moduli:
            amps.append(amps[-1] * m / (m - 1))
        return tuple(amps[: self.rounds])

    def iter_outcomes(self) -> Iterator[Outcome]:
        for residues in itertools.product(*(range(m) for m in self.moduli)):
            yield Outcome(
                tuple(Predicate(r, m) for r, m in zip(residues, self.moduli))
            )

    def contains(self, outcome: Outcome) -> bool:
        return len(outcome.predicates) == len(self.moduli) and all(
            p.modulus == m for p, m in zip(outcome.predicates, self.moduli)
        )


def build_outcome_space(moduli: Sequence[int]) -> OutcomeSpace:
    """Construct an outcome space, rejecting any modulus below 2."""
    return OutcomeSpace(tuple(int(m) for m in moduli))


@dataclass(frozen=True)
class DigestChain:
    """The ``n`` digests of one iterated derivation (round 1 through ``n``)."""

    digests: tuple[bytes, ...]

    def __post_init__(self) -> None:
        if len(self.digests) < 2:
            raise ValueError("a chain needs at least two rounds")

    @property
    def rounds(self) -> int:
        return len(self.digests)


def stopping_time(outcome: Outcome, chain: DigestChain) -> int:
    """First round whose predicate fires on its digest, else ``n``.

    ``chain`` must carry one more digest than ``outcome`` has predicates.
    """
    n = chain.rounds
    if len(outcome.predicates) != n - 1:
        raise ValueError(
            f"outcome has {len(outcome.predicates)} predicates "
            f"but chain has {n} rounds"
        )
    for i, pred in enumerate(outcome.predicates, start=1):
        if pred.evaluate(chain.digests[i - 1]):
            return i
    return n


def classify_outcomes(
    chain: DigestChain, space: OutcomeSpace
) -> tuple[tuple[Outcome, ...], ...]:
    """Partition every outcome of ``space`` by stopping time against ``chain``.

    Returns a tuple of ``n`` classes; class ``j`` (index ``j - 1``) holds the
    outcomes with stopping time ``j`` and has exactly ``class_sizes[j - 1]``
    members for any chain.  Test-and-analysis machinery only; guarded to
    ``ENUMERATION_GUARD`` outcomes.
    """
    if space.total_outcomes > ENUMERATION_GUARD:
        raise EnumerationGuardError(
            f"{space.total_outcomes} outcomes exceed the enumeration guard "
            f"({ENUMERATION_GUARD})"
        )
    if chain.rounds != space.rounds:
        raise ValueError("chain length does not match the outcome space")
    classes: list[list[Outcome]] = [[] for _ in range(space.rounds)]
    for outcome in space.iter_outcomes():
        classes[stopping_time(outcome, chain) - 1].append(outcome)
    return tuple(tuple(c) for c in classes)
