import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from haltkdf.adversary import (
    AdversaryStrategy,
    AttackContext,
    enumerate_vertices,
    feasible_region,
    gain,
    max_budget_bound,
    p_adv,
    p_det,
    strategy_payoff,
)
from haltkdf.mechanism import StoppingDistribution, exponential_distribution
from haltkdf.outcomes import build_outcome_space

S2 = build_outcome_space((2,))
S3 = build_outcome_space((3, 3))


def random_dist(space, rng):
    weights = [rng.uniform(0.05, 1.0) for _ in space.class_sizes]
    total = sum(o * w for o, w in zip(space.class_sizes, weights))
    return StoppingDistribution(space, tuple(w / total for w in weights))


def ctx_for(space, beta, pwd_space=10_000.0, k=10, k_det=20):
    return AttackContext(
        budget=beta * k * pwd_space, k=k, pwd_space_size=pwd_space, k_det=k_det
    )


# ---------------------------------------------------------------------------
# Hand-coded piecewise success rates for the two- and three-round cases.
# These re-derive the dominant-strategy bounds independently of the generic
# vertex machinery and serve as its oracle.

def p_adv_closed_form_2(dist, beta):
    p1, p2 = dist.stop_probs  # class sizes are (1, 1)
    if beta >= 1.5:
        return 1.0
    if beta <= 1.0:
        value = beta * max(p1, 2.0 / 3.0)
    else:
        value = max(p1 + 2.0 * p2 * (beta - 1.0), (2.0 / 3.0) * beta)
    return min(1.0, value)


def p_adv_closed_form_3(dist, beta):
    q1, q2, q3 = dist.class_probs  # per-outcome probabilities
    if beta >= 19.0 / 9.0:
        return 1.0
    b1 = 3.0 * q1 * beta
    b2 = (9.0 / 5.0 * q1 + 6.0 / 5.0 * q2) * beta
    b3 = (9.0 / 19.0) * beta
    b4 = 3.0 * q1 + 3.0 * q2 * (beta - 1.0)
    b5 = 3.0 * q1 + (9.0 / 5.0 * q2 + 18.0 / 5.0 * q3) * (beta - 1.0)
    b6 = 3.0 * q1 + 2.0 * q2 + 9.0 * q3 * (beta - 5.0 / 3.0)
    if beta <= 1.0:
        value = max(b1, b2, b3)
    elif beta <= 5.0 / 3.0:
        value = max(b2, b3, b4, b5)
    else:
        value = max(b3, b5, b6)
    return min(1.0, value)


class TestFeasibleRegion:
    def test_cap_on_first_coordinate(self):
        assert feasible_region(S2, 1.0).b_ub[0] == 1.0
        assert feasible_region(S3, 0.5).b_ub[0] == 1.0  # min clamps at 1
        assert feasible_region(S2, 2.0).b_ub[0] == 0.5

    def test_chain_constraint_rows(self):
        region = feasible_region(S2, 1.0)
        # b_2 <= b_1 / 2 encoded as b_2 - b_1/2 <= 0
        assert region.a_ub[1].tolist() == [-0.5, 1.0]
        assert region.b_ub[1] == 0.0

    def test_contains(self):
        region = feasible_region(S2, 1.0)
        assert region.contains((2 / 3, 1 / 3))
        assert region.contains((1.0, 0.0))
        assert not region.contains((0.5, 0.5))  # violates the chain bound
        assert not region.contains((0.9, 0.0))  # violates the simplex sum


class TestVertices:
    def test_two_round_vertex_sets(self):
        verts = {v.b for v in enumerate_vertices(feasible_region(S2, 0.8))}
        assert any(np.allclose(v, (1.0, 0.0)) for v in verts)
        assert any(np.allclose(v, (2 / 3, 1 / 3)) for v in verts)

    def test_three_round_always_contains_full_chain_vertex(self):
        for beta in (0.3, 1.0, 1.4, 1.9, 2.0):
            verts = enumerate_vertices(feasible_region(S3, beta))
            assert any(
                np.allclose(v.b, (9 / 19, 6 / 19, 4 / 19)) for v in verts
            ), beta

    def test_three_round_mid_regime_vertex(self):
        beta = 1.3  # inside (1, 5/3)
        verts = enumerate_vertices(feasible_region(S3, beta))
        expect = (
            1 / beta,
            (3 / 5) * (1 - 1 / beta),
            (2 / 5) * (1 - 1 / beta),
        )
        assert any(np.allclose(v.b, expect, atol=1e-12) for v in verts)

    def test_guard(self):
        space = build_outcome_space((2,) * 8)  # n = 9
        with pytest.raises(ValueError):
            enumerate_vertices(feasible_region(space, 1.0))


class TestPayoff:
    def test_examples(self):
        uniform2 = exponential_distribution(0.0, S2)
        assert strategy_payoff((2 / 3, 1 / 3), uniform2) == pytest.approx(2 / 3)
        assert strategy_payoff((1.0, 0.0), uniform2) == pytest.approx(
            uniform2.stop_probs[0]
        )
        uniform3 = exponential_distribution(0.0, S3)
        assert strategy_payoff((3 / 5, 2 / 5, 0.0), uniform3) == pytest.approx(1 / 3)

    def test_first_round_only_equals_first_stop_prob(self):
        rng = random.Random(2)
        for _ in range(20):
            d = random_dist(S3, rng)
            b = (1.0, 0.0, 0.0)
            assert strategy_payoff(b, d) == d.stop_probs[0]


class TestPAdv:
    def test_zero_budget(self):
        d = exponential_distribution(0.0, S2)
        assert p_adv(d, ctx_for(S2, 0.0)) == 0.0

    def test_uniform_two_round_at_beta_one(self):
        d = exponential_distribution(0.0, S2)
        assert p_adv(d, ctx_for(S2, 1.0)) == pytest.approx(2 / 3)

    def test_two_round_sure_win_past_bound(self):
        for eps in (0.0, 0.9, 2.303):
            d = exponential_distribution(eps, S2)
            for beta in (1.5, 1.7, 5.0):
                assert p_adv(d, ctx_for(S2, beta)) == 1.0

    def test_three_round_sure_win_threshold(self):
        d = exponential_distribution(1.0, S3)
        pwd_space = 10_000.0
        k = 4
        budget = (19.0 / 9.0) * pwd_space * k
        ctx = AttackContext(budget=budget, k=k, pwd_space_size=pwd_space, k_det=8)
        assert p_adv(d, ctx) == 1.0

    def test_closed_form_equivalence_500_instances(self):
        rng = random.Random(31337)
        for _ in range(250):
            d = random_dist(S2, rng)
            beta = rng.uniform(0.0, 1.6)
            got = p_adv(d, ctx_for(S2, beta))
            assert abs(got - p_adv_closed_form_2(d, beta)) <= 1e-9
        for _ in range(250):
            d = random_dist(S3, rng)
            beta = rng.uniform(0.0, 2.2)
            got = p_adv(d, ctx_for(S3, beta))
            assert abs(got - p_adv_closed_form_3(d, beta)) <= 1e-9

    def test_grid_oracle(self):
        # Brute-force maximization over a 1e-3 grid of the feasible region.
        rng = random.Random(555)
        for _ in range(25):
            d = random_dist(S2, rng)
            beta = rng.uniform(0.05, 1.45)
            got = p_adv(d, ctx_for(S2, beta))
            assert abs(got - _grid_p_adv_2(d, beta)) <= 2e-3
        for _ in range(25):
            d = random_dist(S3, rng)
            beta = rng.uniform(0.05, 2.05)
            got = p_adv(d, ctx_for(S3, beta))
            assert abs(got - _grid_p_adv_3(d, beta)) <= 2e-3

    @settings(max_examples=40, deadline=None)
    @given(
        eps=st.floats(0.0, 2.5),
        b_lo=st.floats(0.01, 2.0),
        b_hi=st.floats(0.01, 2.0),
    )
    def test_monotone_in_budget(self, eps, b_lo, b_hi):
        if b_lo > b_hi:
            b_lo, b_hi = b_hi, b_lo
        d = exponential_distribution(eps, S3)
        lo = p_adv(d, ctx_for(S3, b_lo))
        hi = p_adv(d, ctx_for(S3, b_hi))
        assert 0.0 <= lo <= hi + 1e-12 <= 1.0 + 1e-12


def _grid_p_adv_2(dist, beta, step=1e-3):
    cap = min(1.0, 1.0 / beta) if beta > 0 else 1.0
    b1 = np.arange(0.0, 1.0 + step, step)
    b2 = 1.0 - b1
    ok = (b1 <= cap + 1e-9) & (b2 >= -1e-9) & (b2 <= b1 * 0.5 + 1e-9)
    if not ok.any():
        return 1.0
    w = np.array(dist.stop_probs) * np.array(S2.amplification())
    payoff = w[0] * b1[ok] + w[1] * b2[ok]
    return min(1.0, beta * float(payoff.max()))


def _grid_p_adv_3(dist, beta, step=1e-3):
    cap = min(1.0, 1.0 / beta) if beta > 0 else 1.0
    b1 = np.arange(0.0, cap + step, step)
    b2 = np.arange(0.0, 2.0 / 3.0 + step, step)
    g1, g2 = np.meshgrid(b1, b2, indexing="ij")
    g3 = 1.0 - g1 - g2
    ok = (
        (g1 <= cap + 1e-9)
        & (g2 <= g1 * (2.0 / 3.0) + 1e-9)
        & (g3 >= -1e-9)
        & (g3 <= g2 * (2.0 / 3.0) + 1e-9)
    )
    if not ok.any():
        return 1.0
    w = np.array(dist.stop_probs) * np.array(S3.amplification())
    payoff = w[0] * g1[ok] + w[1] * g2[ok] + w[2] * g3[ok]
    return min(1.0, beta * float(payoff.max()))


class TestPDetAndGain:
    def test_p_det(self):
        ctx = AttackContext(budget=200.0, k=1, pwd_space_size=10.0, k_det=20)
        assert p_det(ctx) == 1.0  # B = k' |P|
        assert p_det(AttackContext(budget=0.0, k=1, pwd_space_size=10.0, k_det=20)) == 0.0
        ctx = AttackContext(budget=74.0, k=1, pwd_space_size=10.0, k_det=20)
        assert p_det(ctx) == pytest.approx(0.37)

    def test_gain_zero_at_zero_budget(self):
        d = exponential_distribution(1.0, S2)
        ctx = AttackContext(budget=0.0, k=5, pwd_space_size=100.0, k_det=10)
        assert gain(d, ctx) == 0.0

    def test_degenerate_dist_with_equal_k_gives_zero_gain(self):
        # All mass on stopping time 1 and k = k': the randomized scheme
        # degenerates to the deterministic one, so the gain vanishes.
        d = StoppingDistribution(S2, (1.0, 0.0))
        for beta in (0.2, 0.7, 1.0):
            ctx = AttackContext(
                budget=beta * 7 * 100.0, k=7, pwd_space_size=100.0, k_det=7
            )
            assert gain(d, ctx) == pytest.approx(0.0, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(b_lo=st.floats(0.0, 2.0), b_hi=st.floats(0.0, 2.0))
    def test_p_det_monotone(self, b_lo, b_hi):
        if b_lo > b_hi:
            b_lo, b_hi = b_hi, b_lo
        ctx_lo = AttackContext(budget=b_lo * 1000, k=5, pwd_space_size=100.0, k_det=10)
        ctx_hi = AttackContext(budget=b_hi * 1000, k=5, pwd_space_size=100.0, k_det=10)
        assert p_det(ctx_lo) <= p_det(ctx_hi)


class TestMaxBudgetBound:
    def test_values(self):
        assert max_budget_bound(S2, 1.0) == pytest.approx(1.5)
        assert max_budget_bound(S3, 1.0) == pytest.approx(19 / 9)
        assert max_budget_bound(build_outcome_space((3,)), 1.0) == pytest.approx(5 / 3)
        assert max_budget_bound(S3, 250.0) == pytest.approx(250 * 19 / 9)

    def test_equal_moduli_closed_form(self):
        # With every modulus equal to n the bound is (n^n - (n-1)^n) / n^(n-1).
        for n in (2, 3, 4, 5):
            space = build_outcome_space((n,) * (n - 1))
            expect = (n**n - (n - 1) ** n) / n ** (n - 1)
            assert max_budget_bound(space, 1.0) == pytest.approx(expect)


def test_strategy_dataclass():
    s = AdversaryStrategy((0.5, 0.5))
    assert s.b == (0.5, 0.5)
