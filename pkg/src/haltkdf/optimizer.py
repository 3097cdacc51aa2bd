"""Design optimization and gain-curve drivers.

For a fixed per-round iteration count ``k`` the best halting design is a
small linear program: choose class probabilities minimizing an epigraph
variable that dominates the attacker's payoff at every vertex of the
strategy polytope, subject to normalization, the pairwise privacy-ratio
bound, and the cost bound ``sum(j * O_j * p_j) <= cost_ratio / k``.
The outer search scans integer ``k`` and keeps the best solution.

The solver is a dense two-phase tableau simplex with Bland's anti-cycling
rule; the problems here have a handful of variables and under thirty
rows, so no sparse machinery is warranted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .adversary import (
    AdversaryStrategy,
    AttackContext,
    _vertex_array,
    feasible_region,
    max_budget_bound,
    p_det,
)
from .mechanism import StoppingDistribution, exponential_distribution, fit_k
from .outcomes import OutcomeSpace

MAX_PIVOTS = 100_000
MAX_K_CANDIDATES = 4096

_ENTER_TOL = 1e-10
_PIVOT_TOL = 1e-9


class NoFeasibleKError(ValueError):
    """No iteration count admits a design within the cost budget."""


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class LinearProgram:
    """minimize objective @ x  subject to  rows x {<=,=,>=} rhs, bounds."""

    objective: np.ndarray
    rows: np.ndarray
    senses: tuple[str, ...]
    rhs: np.ndarray
    bounds: tuple[tuple[float | None, float | None], ...]

    def __post_init__(self) -> None:
        self.objective = np.asarray(self.objective, dtype=float)
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        self.rhs = np.asarray(self.rhs, dtype=float)
        nvar = self.objective.shape[0]
        if self.rows.shape != (len(self.senses), nvar):
            raise ValueError("constraint matrix shape mismatch")
        if self.rhs.shape != (len(self.senses),):
            raise ValueError("rhs length mismatch")
        if len(self.bounds) != nvar:
            raise ValueError("bounds length mismatch")
        if not (np.all(np.isfinite(self.rows)) and np.all(np.isfinite(self.rhs))
                and np.all(np.isfinite(self.objective))):
            raise ValueError("coefficients must be finite")
        for s in self.senses:
            if s not in ("<=", "=", ">="):
                raise ValueError(f"unknown sense {s!r}")


@dataclass
class LpResult:
    status: LpStatus
    x: np.ndarray | None
    objective: float | None


def _pivot(tab: np.ndarray, basis: list[int], row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    colvals = tab[:, col].copy()
    colvals[row] = 0.0
    tab -= np.outer(colvals, tab[row])
    # Re-pin the pivot column exactly to kill round-off drift.
    tab[:, col] = 0.0
    tab[row, col] = 1.0
    basis[row] = col


def _pivot_loop(
    tab: np.ndarray, basis: list[int], allowed: Sequence[int], budget: int
) -> tuple[str, int]:
    """Run Bland-rule pivots until optimal/unbounded or the budget runs out."""
    m = tab.shape[0] - 1
    while budget > 0:
        cost = tab[-1]
        enter = -1
        for j in allowed:  # smallest improving index (Bland)
            if cost[j] < -_ENTER_TOL:
                enter = j
                break
        if enter < 0:
            return "optimal", budget
        col = tab[:m, enter]
        leave = -1
        best = 0.0
        for i in range(m):
            if col[i] > _PIVOT_TOL:
                ratio = tab[i, -1] / col[i]
                if leave < 0 or ratio < best - 1e-12:
                    best, leave = ratio, i
                elif ratio <= best + 1e-12 and basis[i] < basis[leave]:
                    leave = i
        if leave < 0:
            return "unbounded", budget
        _pivot(tab, basis, leave, enter)
        budget -= 1
    return "iteration_limit", budget


def solve_lp(lp: LinearProgram, max_pivots: int = MAX_PIVOTS) -> LpResult:
    """Two-phase simplex with Bland's rule.

    Returns an optimal basic feasible solution, or an
    infeasible/unbounded/iteration-limit status.  At an optimal point the
    constraint residuals are at the level of the pivot arithmetic
    (far below 1e-9 for the problem sizes used here).
    """
    nvar = lp.objective.shape[0]

    # Shift every variable onto y >= 0.
    base = np.zeros(nvar)
    col_of_var: list[list[tuple[int, float]]] = [[] for _ in range(nvar)]
    struct_cols: list[tuple[int, float]] = []  # (var, sign) per structural col
    extra_rows: list[tuple[int, float]] = []  # (structural col, upper bound)
    for j, (lo, hi) in enumerate(lp.bounds):
        if lo is not None and hi is not None and hi < lo:
            return LpResult(LpStatus.INFEASIBLE, None, None)
        if lo is not None:
            base[j] = lo
            struct_cols.append((j, 1.0))
            col_of_var[j].append((len(struct_cols) - 1, 1.0))
            if hi is not None:
                extra_rows.append((len(struct_cols) - 1, hi - lo))
        elif hi is not None:
            base[j] = hi
            struct_cols.append((j, -1.0))
            col_of_var[j].append((len(struct_cols) - 1, -1.0))
        else:
            struct_cols.append((j, 1.0))
            col_of_var[j].append((len(struct_cols) - 1, 1.0))
            struct_cols.append((j, -1.0))
            col_of_var[j].append((len(struct_cols) - 1, -1.0))

    nstruct = len(struct_cols)
    a_rows = []
    b_vals = []
    senses = []
    shifted_rhs = lp.rhs - lp.rows @ base
    for r in range(lp.rows.shape[0]):
        row = np.zeros(nstruct)
        for c, (var, sign) in enumerate(struct_cols):
            row[c] = lp.rows[r, var] * sign
        a_rows.append(row)
        b_vals.append(shifted_rhs[r])
        senses.append(lp.senses[r])
    for c, ub in extra_rows:
        row = np.zeros(nstruct)
        row[c] = 1.0
        a_rows.append(row)
        b_vals.append(ub)
        senses.append("<=")

    a_std = np.array(a_rows)
    b_std = np.array(b_vals, dtype=float)
    neg = b_std < 0
    a_std[neg] *= -1.0
    b_std[neg] *= -1.0
    flipped = {"<=": ">=", ">=": "<=", "=": "="}
    senses = [flipped[s] if f else s for s, f in zip(senses, neg)]

    m = a_std.shape[0]
    n_le = senses.count("<=")
    n_ge = senses.count(">=")
    n_art = n_ge + senses.count("=")
    ncols = nstruct + n_le + n_ge + n_art
    tab = np.zeros((m + 1, ncols + 1))
    tab[:m, :nstruct] = a_std
    tab[:m, -1] = b_std

    basis = [0] * m
    slack_at = nstruct
    surp_at = nstruct + n_le
    art_at = nstruct + n_le + n_ge
    art_cols: list[int] = []
    for i, s in enumerate(senses):
        if s == "<=":
            tab[i, slack_at] = 1.0
            basis[i] = slack_at
            slack_at += 1
        else:
            if s == ">=":
                tab[i, surp_at] = -1.0
                surp_at += 1
            tab[i, art_at] = 1.0
            basis[i] = art_at
            art_cols.append(art_at)
            art_at += 1
    art_set = set(art_cols)

    budget = max_pivots
    if art_cols:
        tab[-1, :] = 0.0
        for c in art_cols:
            tab[-1, c] = 1.0
        for i in range(m):
            if basis[i] in art_set:
                tab[-1] -= tab[i]
        outcome, budget = _pivot_loop(tab, basis, range(ncols), budget)
        if outcome == "iteration_limit":
            return LpResult(LpStatus.ITERATION_LIMIT, None, None)
        if -tab[-1, -1] > 1e-8:
            return LpResult(LpStatus.INFEASIBLE, None, None)
        # Drive artificials out of the basis where a real pivot exists.
        for i in range(m):
            if basis[i] in art_set:
                for j in range(nstruct + n_le + n_ge):
                    if abs(tab[i, j]) > _PIVOT_TOL:
                        _pivot(tab, basis, i, j)
                        break

    c_std = np.zeros(ncols)
    for c, (var, sign) in enumerate(struct_cols):
        c_std[c] = lp.objective[var] * sign
    tab[-1, :-1] = c_std
    tab[-1, -1] = 0.0
    for i in range(m):
        cb = c_std[basis[i]]
        if cb != 0.0:
            tab[-1] -= cb * tab[i]

    allowed = [j for j in range(ncols) if j not in art_set]
    outcome, budget = _pivot_loop(tab, basis, allowed, budget)
    if outcome == "iteration_limit":
        return LpResult(LpStatus.ITERATION_LIMIT, None, None)
    if outcome == "unbounded":
        return LpResult(LpStatus.UNBOUNDED, None, None)

    y = np.zeros(ncols)
    for i in range(m):
        y[basis[i]] = tab[i, -1]
    x = base.copy()
    for var in range(nvar):
        for c, sign in col_of_var[var]:
            x[var] += sign * y[c]
    return LpResult(LpStatus.OPTIMAL, x, float(lp.objective @ x))


def lp_residuals(lp: LinearProgram, x: np.ndarray) -> float:
    """Largest constraint/bound violation of ``x`` (nonnegative)."""
    worst = 0.0
    vals = lp.rows @ x
    for v, s, b in zip(vals, lp.senses, lp.rhs):
        if s == "<=":
            worst = max(worst, v - b)
        elif s == ">=":
            worst = max(worst, b - v)
        else:
            worst = max(worst, abs(v - b))
    for xj, (lo, hi) in zip(x, lp.bounds):
        if lo is not None:
            worst = max(worst, lo - xj)
        if hi is not None:
            worst = max(worst, xj - hi)
    return worst


# ---------------------------------------------------------------------------
# The design LP

def build_design_lp(
    epsilon: float,
    space: OutcomeSpace,
    k: int,
    ctx: AttackContext,
    vertices: Union[np.ndarray, Sequence[AdversaryStrategy]],
    cost_ratio: float | None = None,
) -> LinearProgram:
    """LP over ``(p_1..p_n, t)`` minimizing the epigraph ``t`` of the payoff.

    One row per strategy vertex bounds ``t`` from below by the attacker's
    success rate; ``cost_ratio`` defaults to the context's deterministic
    iteration count when not given explicitly.
    """
    if cost_ratio is None:
        if ctx.k_det is None:
            raise ValueError("need cost_ratio or a context with k_det")
        cost_ratio = float(ctx.k_det)
    n = space.rounds
    sizes = np.array(space.class_sizes, dtype=float)
    amps = np.array(space.amplification())
    beta = ctx.beta
    if isinstance(vertices, np.ndarray):
        verts = vertices
    else:
        verts = np.array([v.b for v in vertices], dtype=float)

    nvar = n + 1
    rows = []
    senses = []
    rhs = []

    norm = np.zeros(nvar)
    norm[:n] = sizes
    rows.append(norm)
    senses.append("=")
    rhs.append(1.0)

    e_eps = math.exp(epsilon)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            row = np.zeros(nvar)
            row[i] = 1.0
            row[j] = -e_eps
            rows.append(row)
            senses.append("<=")
            rhs.append(0.0)

    for b in verts:
        row = np.zeros(nvar)
        row[:n] = beta * amps * sizes * b
        row[n] = -1.0
        rows.append(row)
        senses.append("<=")
        rhs.append(0.0)

    cost = np.zeros(nvar)
    cost[:n] = np.arange(1, n + 1) * sizes
    rows.append(cost)
    senses.append("<=")
    rhs.append(cost_ratio / k)

    objective = np.zeros(nvar)
    objective[n] = 1.0
    bounds = tuple([(0.0, 1.0)] * n + [(0.0, None)])
    return LinearProgram(
        objective=objective,
        rows=np.array(rows),
        senses=tuple(senses),
        rhs=np.array(rhs),
        bounds=bounds,
    )


@dataclass(frozen=True)
class OptimalDesign:
    """Best design found for one budget scenario."""

    dist: StoppingDistribution
    k: int
    p_adv: float
    gain: float
    epsilon: float
    beta: float


_EMIN_CACHE: dict[tuple[tuple[int, ...], float], float] = {}


def _min_expected_rounds(epsilon: float, space: OutcomeSpace) -> float:
    """Smallest expected round count any valid design can reach.

    Determines which iteration counts are cost-feasible at all; solved as
    a tiny LP and cached per (space, epsilon).
    """
    key = (space.moduli, round(epsilon, 12))
    cached = _EMIN_CACHE.get(key)
    if cached is not None:
        return cached
    n = space.rounds
    sizes = np.array(space.class_sizes, dtype=float)
    rows = [np.concatenate([sizes])]
    senses = ["="]
    rhs = [1.0]
    e_eps = math.exp(epsilon)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            row = np.zeros(n)
            row[i] = 1.0
            row[j] = -e_eps
            rows.append(row)
            senses.append("<=")
            rhs.append(0.0)
    lp = LinearProgram(
        objective=np.arange(1, n + 1) * sizes,
        rows=np.array(rows),
        senses=tuple(senses),
        rhs=np.array(rhs),
        bounds=tuple([(0.0, 1.0)] * n),
    )
    res = solve_lp(lp)
    if res.status is not LpStatus.OPTIMAL:
        raise RuntimeError("minimum-cost design LP failed unexpectedly")
    _EMIN_CACHE[key] = res.objective
    return res.objective


def _regime_thresholds(space: OutcomeSpace) -> list[float]:
    """Budget ratios where the vertex structure of the polytope changes."""
    thresholds = [1.0]
    surviving = 1.0
    for modulus in space.moduli:
        surviving *= (modulus - 1) / modulus
        thresholds.append(thresholds[-1] + surviving)
    return thresholds


def _k_candidates(
    space: OutcomeSpace, cost_ratio: float, budget: float, pwd_space_size: float
) -> list[int]:
    n = space.rounds
    k_det = math.floor(cost_ratio)
    k_lo = max(1, math.floor(cost_ratio / n))
    count = k_det - k_lo + 1
    if count <= MAX_K_CANDIDATES:
        return list(range(k_lo, k_det + 1))
    geo = np.geomspace(k_lo, k_det, MAX_K_CANDIDATES)
    cands = {int(v) for v in np.round(geo)}
    for thr in _regime_thresholds(space):
        k_star = budget / (pwd_space_size * thr)
        for kk in (math.floor(k_star), math.ceil(k_star)):
            if k_lo <= kk <= k_det:
                cands.add(int(kk))
    return sorted(cands)


def _design_probs_or_none(
    epsilon: float, space: OutcomeSpace, cost_ratio: float, k: int
) -> np.ndarray | None:
    """Any probability vector meeting the non-adversarial constraints."""
    lp = build_design_lp(
        epsilon,
        space,
        k,
        AttackContext(budget=0.0, k=k, pwd_space_size=1.0),
        np.empty((0, space.rounds)),
        cost_ratio=cost_ratio,
    )
    res = solve_lp(lp)
    if res.status is not LpStatus.OPTIMAL:
        return None
    return res.x[: space.rounds]


def optimal_mechanism(
    epsilon: float,
    space: OutcomeSpace,
    cost_ratio: float,
    budget: float,
    pwd_space_size: float,
) -> OptimalDesign:
    """Search integer iteration counts, solving the design LP for each.

    Candidates cover all integers in ``[floor(cost_ratio / n),
    floor(cost_ratio)]`` (a geometric subsample plus regime-boundary
    values when that interval is huge).  Iteration counts are scanned in
    descending order so the universal payoff lower bound ``beta / C``
    (attained by the run-everything-to-the-end vertex for any
    distribution) can cut the scan once it exceeds the incumbent; ties
    resolve to the smaller count.
    """
    n = space.rounds
    k_det = math.floor(cost_ratio)
    if k_det < 1:
        raise NoFeasibleKError(f"cost ratio {cost_ratio} admits no k >= 1")
    candidates = _k_candidates(space, cost_ratio, budget, pwd_space_size)
    e_min = _min_expected_rounds(epsilon, space)
    bound_norm = max_budget_bound(space, 1.0)

    best: tuple[float, int, np.ndarray] | None = None
    fallback: tuple[float, int, np.ndarray] | None = None
    for k in reversed(candidates):
        if k * e_min > cost_ratio * (1 + 1e-12):
            continue
        beta = budget / (k * pwd_space_size)
        if beta >= bound_norm * (1 - 1e-12):
            # Past the all-candidates bound the attacker wins outright,
            # and every remaining (smaller) k is also past it.
            if best is None and fallback is None:
                # This k already passed the cost-feasibility check, so the
                # smallest feasible candidate exists (it may be k itself).
                k_fb = next(
                    (kk for kk in candidates
                     if kk * e_min <= cost_ratio * (1 + 1e-12)),
                    k,
                )
                probs = _design_probs_or_none(epsilon, space, cost_ratio, k_fb)
                if probs is not None:
                    fallback = (1.0, k_fb, probs)
            break
        if best is not None and beta / bound_norm > best[0] + 1e-15:
            break
        ctx = AttackContext(
            budget=budget, k=k, pwd_space_size=pwd_space_size, k_det=k_det
        )
        verts = _vertex_array(feasible_region(space, beta))
        lp = build_design_lp(epsilon, space, k, ctx, verts, cost_ratio=cost_ratio)
        res = solve_lp(lp)
        if res.status is not LpStatus.OPTIMAL:
            continue
        val = res.objective
        if best is None or val < best[0] or (val == best[0] and k < best[1]):
            best = (val, k, res.x[:n])

    chosen = best if best is not None else fallback
    if chosen is None:
        raise NoFeasibleKError(
            f"no k in [1, {k_det}] admits a design at epsilon={epsilon}"
        )
    val, k, probs = chosen
    sizes = np.array(space.class_sizes, dtype=float)
    probs = np.clip(probs, 0.0, None)
    probs = probs / float(sizes @ probs)
    dist = StoppingDistribution(
        space=space, class_probs=tuple(float(p) for p in probs), epsilon=epsilon
    )
    ctx = AttackContext(budget=budget, k=k, pwd_space_size=pwd_space_size, k_det=k_det)
    return OptimalDesign(
        dist=dist,
        k=k,
        p_adv=val,
        gain=p_det(ctx) - val,
        epsilon=epsilon,
        beta=ctx.beta,
    )


# ---------------------------------------------------------------------------
# Gain-curve sweep drivers

@dataclass(frozen=True)
class CurvePoint:
    det_ratio: float
    p_det: float
    p_adv: float
    gain: float


def gain_curve(
    kind: str,
    epsilon: float,
    space: OutcomeSpace,
    cost_ratio: float,
    pwd_space: float,
    budget_grid: Iterable[float],
) -> list[CurvePoint]:
    """Evaluate success rates across normalized budgets ``B / (k' |P|)``.

    ``kind = "exponential"`` fixes the softmax design once (iteration
    count fitted to the cost budget); ``kind = "optimal"`` re-optimizes
    the design at every budget point.
    """
    from . import adversary

    if kind not in ("exponential", "optimal"):
        raise ValueError(f"unknown curve kind {kind!r}")
    k_det = math.floor(cost_ratio)
    points = []
    if kind == "exponential":
        dist = exponential_distribution(epsilon, space)
        k = fit_k(dist, cost_ratio)
        for d in budget_grid:
            budget = d * k_det * pwd_space
            ctx = AttackContext(
                budget=budget, k=k, pwd_space_size=pwd_space, k_det=k_det
            )
            adv = adversary.p_adv(dist, ctx)
            det = p_det(ctx)
            points.append(CurvePoint(d, det, adv, det - adv))
    else:
        for d in budget_grid:
            budget = d * k_det * pwd_space
            design = optimal_mechanism(epsilon, space, cost_ratio, budget, pwd_space)
            det = min(1.0, d)
            points.append(CurvePoint(d, det, design.p_adv, det - design.p_adv))
    return points


def write_curve_csv(points: Sequence[CurvePoint], path: Union[str, Path]) -> None:
    lines = ["det_ratio,p_det,p_adv,gain"]
    for p in points:
        lines.append(
            f"{p.det_ratio:.9g},{p.p_det:.9g},{p.p_adv:.9g},{p.gain:.9g}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def stationary_onset(
    curves: dict[float, Sequence[CurvePoint]], tol: float = 1e-6
) -> float | None:
    """Smallest epsilon whose gain curve matches the next larger one.

    The gain profile stops changing once the ratio bound is slack
    everywhere; this reports where that first happens on the sampled
    epsilon grid (None if it never does).
    """
    eps_sorted = sorted(curves)
    for lo, hi in zip(eps_sorted, eps_sorted[1:]):
        diff = max(
            abs(a.gain - b.gain) for a, b in zip(curves[lo], curves[hi])
        )
        if diff < tol:
            return lo
    return None
