"""Monte Carlo validation against a small synthetic password space.

The simulator runs real account creations and real budgeted guessing
strategies (the per-round candidate-set process) and compares the
empirical success rate with the analytic vertex optimum.  The synthetic
space is the integers ``0 .. N-1`` rendered as fixed-width decimal
strings; trials hash through the "mix64" backend so a full validation
matrix stays fast.

Two implementations are kept deliberately: :func:`run_strategy` is a
plain scalar reference that drives the production engine record by
record, while :func:`estimate_p_adv` batches trials through the numba
kernels (bit-identical hashing, counter-based per-trial randomness).
"""

from __future__ import annotations

import json
import math
import os
import random
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _simkernel
from ._mix64 import fmix64
from .adversary import (
    AdversaryStrategy,
    AttackContext,
    enumerate_vertices,
    feasible_region,
    max_budget_bound,
    p_adv,
)
from .kdf import KdfParams, create_account, hash_round, resolve_hash, _frame
from .mechanism import StoppingDistribution, exponential_distribution
from .outcomes import OutcomeSpace, build_outcome_space


def _apply_thread_cap() -> None:
    cap = os.environ.get("CASH_THREADS")
    if cap:
        import numba

        numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))


@dataclass(frozen=True)
class SimConfig:
    """One validation scenario: space, design, budget, and trial count."""

    space: OutcomeSpace
    dist: StoppingDistribution
    budget: float
    pwd_space_size: int = 10_000
    k: int = 4
    trials: int = 10_000
    rng_seed: int = 0
    hash_id: str = "mix64"

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.budget / self.k > max_budget_bound(self.space, self.pwd_space_size):
            raise ValueError("budget exceeds the sure-win bound; nothing to measure")
        if self.dist.space != self.space:
            raise ValueError("distribution space mismatch")

    @property
    def beta(self) -> float:
        return self.budget / (self.k * self.pwd_space_size)

    @property
    def pwd_width(self) -> int:
        return len(str(self.pwd_space_size - 1))

    def render_pwd(self, index: int) -> str:
        return str(index).zfill(self.pwd_width)


@dataclass(frozen=True)
class StrategyRun:
    """Outcome of one strategy execution against one fresh account."""

    success: bool
    set_sizes: tuple[int, ...]
    hit_sizes: tuple[int, ...]


@dataclass(frozen=True)
class VertexStats:
    strategy: tuple[float, ...]
    success_rate: float
    std_error: float
    mean_set_sizes: tuple[float, ...]
    mean_hit_sizes: tuple[float, ...]


@dataclass(frozen=True)
class SimResult:
    empirical_p_adv: float
    std_error: float
    analytic_p_adv: float
    trials: int
    vertex_stats: tuple[VertexStats, ...] = field(default_factory=tuple)

    def to_json(self) -> dict:
        return {
            "empirical_p_adv": self.empirical_p_adv,
            "std_error": self.std_error,
            "analytic_p_adv": self.analytic_p_adv,
            "trials": self.trials,
            "vertices": [
                {
                    "strategy": list(v.strategy),
                    "success_rate": v.success_rate,
                    "std_error": v.std_error,
                    "mean_set_sizes": list(v.mean_set_sizes),
                    "mean_hit_sizes": list(v.mean_hit_sizes),
                }
                for v in self.vertex_stats
            ],
        }


def _strategy_sizes(config: SimConfig, b: Sequence[float]) -> list[int]:
    chains = config.budget / config.k
    return [int(round(bi * chains)) for bi in b]


def run_strategy(
    config: SimConfig,
    strategy: AdversaryStrategy | Sequence[float],
    user_secret: str,
    rng: random.Random,
) -> StrategyRun:
    """Scalar reference: one account creation, one budgeted guessing run.

    Candidate sets are drawn uniformly without replacement; a candidate
    whose predicate fires at round ``m`` is checked against the stored
    digest, survivors feed the next round's draw, and leftover budget is
    discarded when the survivor pool runs short.
    """
    b = strategy.b if isinstance(strategy, AdversaryStrategy) else tuple(strategy)
    region = feasible_region(config.space, config.beta)
    if not region.contains(b):
        raise ValueError(f"strategy {b} is infeasible at beta={config.beta}")
    n = config.space.rounds
    params = KdfParams(
        k=config.k, rounds=n, hash_id=config.hash_id, salt_bits=128
    )
    client, server = create_account(
        "sim", "sim", user_secret, config.dist, params, rng
    )
    hash_fn = resolve_hash(config.hash_id)
    sizes = _strategy_sizes(config, b)

    target = server.derived_hash
    success = False
    actual_sizes = []
    hit_sizes = []
    pool = rng.sample(range(config.pwd_space_size), min(sizes[0], config.pwd_space_size))
    digests = {
        idx: hash_round(
            _frame(config.render_pwd(idx).encode(), client.salt), config.k, hash_fn
        )
        for idx in pool
    }
    for m in range(1, n + 1):
        actual_sizes.append(len(pool))
        if m < n:
            pred = client.outcome.predicates[m - 1]
            fired = [idx for idx in pool if pred.evaluate(digests[idx])]
            hit_sizes.append(len(fired))
            if any(digests[idx] == target for idx in fired):
                success = True
            survivors = [idx for idx in pool if not pred.evaluate(digests[idx])]
            take = min(sizes[m], len(survivors))
            pool = rng.sample(survivors, take)
            digests = {
                idx: hash_round(digests[idx], config.k, hash_fn) for idx in pool
            }
        else:
            hit_sizes.append(len(pool))
            if any(digests[idx] == target for idx in pool):
                success = True
    return StrategyRun(
        success=success,
        set_sizes=tuple(actual_sizes),
        hit_sizes=tuple(hit_sizes),
    )


def _config_stream_seed(config: SimConfig) -> int:
    """Derive a kernel seed from the config so distinct cells decorrelate."""
    h = fmix64(config.rng_seed & ((1 << 64) - 1))
    for m in config.space.moduli:
        h = fmix64(h ^ m)
    h = fmix64(h ^ config.pwd_space_size)
    h = fmix64(h ^ config.k)
    h = fmix64(h ^ int(config.budget))
    return h


def estimate_p_adv(config: SimConfig) -> SimResult:
    """Run every vertex strategy for ``trials`` fresh accounts each.

    The empirical success rate is the maximum across vertices (the
    attacker picks the best strategy); its standard error comes from the
    binomial count at the maximizing vertex.
    """
    if config.hash_id != "mix64":
        raise ValueError("batched estimation requires the mix64 backend")
    _apply_thread_cap()
    n = config.space.rounds
    vertices = enumerate_vertices(feasible_region(config.space, config.beta))
    if not vertices:
        raise ValueError("no feasible strategies at this budget")
    pwd_low = _simkernel.pwd_low_words(config.pwd_space_size, config.pwd_width)
    moduli = np.array(config.space.moduli, dtype=np.int64)
    stop_cdf = np.cumsum(np.array(config.dist.stop_probs))
    stop_cdf[-1] = 1.0
    seed = np.uint64(_config_stream_seed(config))

    stats = []
    for vi, vertex in enumerate(vertices):
        sizes = np.array(_strategy_sizes(config, vertex.b), dtype=np.int64)
        success = np.zeros(config.trials, dtype=np.uint8)
        set_sizes = np.zeros((config.trials, n), dtype=np.int64)
        hit_sizes = np.zeros((config.trials, n), dtype=np.int64)
        _simkernel.run_vertex_batch(
            seed,
            np.uint64((vi + 1) << 40),
            config.trials,
            config.pwd_space_size,
            config.pwd_width,
            config.k,
            moduli,
            stop_cdf,
            sizes,
            pwd_low,
            success,
            set_sizes,
            hit_sizes,
        )
        rate = float(success.mean())
        stats.append(
            VertexStats(
                strategy=vertex.b,
                success_rate=rate,
                std_error=math.sqrt(rate * (1.0 - rate) / config.trials),
                mean_set_sizes=tuple(set_sizes.mean(axis=0)),
                mean_hit_sizes=tuple(hit_sizes.mean(axis=0)),
            )
        )

    best = max(stats, key=lambda s: s.success_rate)
    ctx = AttackContext(
        budget=config.budget, k=config.k, pwd_space_size=config.pwd_space_size
    )
    return SimResult(
        empirical_p_adv=best.success_rate,
        std_error=best.std_error,
        analytic_p_adv=p_adv(config.dist, ctx),
        trials=config.trials,
        vertex_stats=tuple(stats),
    )


def halt_rate_check(
    space: OutcomeSpace, k: int, samples: int, rng_seed: int = 0
) -> list[list[float]]:
    """Empirical per-round firing frequency of every residue.

    Hashes ``samples`` random passwords (random salts) through the mix64
    chain and tabulates round-``m`` digests modulo each slot's modulus.
    Frequencies in each row sum to one exactly; each entry should sit
    within sampling error of ``1 / modulus``.
    """
    moduli = np.array(space.moduli, dtype=np.int64)
    counts = np.zeros((len(space.moduli), int(max(space.moduli))), dtype=np.int64)
    _simkernel.halt_counts(np.uint64(rng_seed), samples, 7, k, moduli, counts)
    freqs = []
    for m, modulus in enumerate(space.moduli):
        freqs.append([counts[m, r] / samples for r in range(modulus)])
    return freqs


# ---------------------------------------------------------------------------
# The standard validation matrix

@dataclass(frozen=True)
class MatrixCell:
    moduli: tuple[int, ...]
    epsilon: float
    beta: float


@dataclass(frozen=True)
class CellResult:
    cell: MatrixCell
    analytic: float
    empirical: float
    std_error: float

    @property
    def ok(self) -> bool:
        return abs(self.analytic - self.empirical) <= 3.0 * max(self.std_error, 1e-12)


def standard_matrix() -> list[MatrixCell]:
    cells = []
    for moduli in ((2,), (3, 3)):
        for eps in (0.0, 0.5, 1.609):
            for beta in (0.5, 1.0, 1.4):
                cells.append(MatrixCell(moduli=moduli, epsilon=eps, beta=beta))
    return cells


def run_matrix(
    cells: Sequence[MatrixCell] | None = None,
    trials: int = 10_000,
    pwd_space_size: int = 10_000,
    k: int = 4,
    seed: int = 1,
    analytic_offset: float = 0.0,
) -> list[CellResult]:
    """Evaluate every cell; ``analytic_offset`` exists as a negative-control
    hook that perturbs the analytic value before comparison."""
    results = []
    for cell in cells if cells is not None else standard_matrix():
        space = build_outcome_space(cell.moduli)
        dist = exponential_distribution(cell.epsilon, space)
        config = SimConfig(
            space=space,
            dist=dist,
            budget=cell.beta * k * pwd_space_size,
            pwd_space_size=pwd_space_size,
            k=k,
            trials=trials,
            rng_seed=seed,
        )
        sim = estimate_p_adv(config)
        results.append(
            CellResult(
                cell=cell,
                analytic=sim.analytic_p_adv + analytic_offset,
                empirical=sim.empirical_p_adv,
                std_error=sim.std_error,
            )
        )
    return results


def matrix_report(results: Sequence[CellResult]) -> str:
    lines = []
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        lines.append(
            f"{status} moduli={r.cell.moduli} eps={r.cell.epsilon:g} "
            f"beta={r.cell.beta:g}: analytic={r.analytic:.4f} "
            f"empirical={r.empirical:.4f} (3se={3 * r.std_error:.4f})"
        )
    return "\n".join(lines)


def save_results(results: Sequence[CellResult], path) -> None:
    payload = [
        {
            "moduli": list(r.cell.moduli),
            "epsilon": r.cell.epsilon,
            "beta": r.cell.beta,
            "analytic": r.analytic,
            "empirical": r.empirical,
            "std_error": r.std_error,
            "ok": r.ok,
        }
        for r in results
    ]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
