import math
import random

import numpy as np
import pytest
from scipy import stats

from haltkdf import _simkernel
from haltkdf.adversary import enumerate_vertices, feasible_region
from haltkdf.kdf import KdfParams, digest_chain
from haltkdf.mechanism import StoppingDistribution, exponential_distribution
from haltkdf.outcomes import build_outcome_space
from haltkdf.simulate import (
    SimConfig,
    estimate_p_adv,
    halt_rate_check,
    run_matrix,
    run_strategy,
    standard_matrix,
)

S2 = build_outcome_space((2,))
S3 = build_outcome_space((3, 3))


def small_config(space, eps=0.0, beta=1.0, n_pwd=400, k=2, trials=300, seed=3):
    dist = exponential_distribution(eps, space)
    return SimConfig(
        space=space,
        dist=dist,
        budget=beta * k * n_pwd,
        pwd_space_size=n_pwd,
        k=k,
        trials=trials,
        rng_seed=seed,
    )


class TestKernelParity:
    @pytest.mark.parametrize("width", [1, 2, 4, 7])
    def test_chain_states_match_scalar_engine(self, width):
        rng = random.Random(width)
        for _ in range(5):
            idx = rng.randrange(10**width)
            salt_lo = rng.getrandbits(64)
            salt_hi = rng.getrandbits(64)
            salt = salt_lo.to_bytes(8, "little") + salt_hi.to_bytes(8, "little")
            params = KdfParams(k=3, rounds=3, hash_id="mix64")
            chain = digest_chain(str(idx).zfill(width), salt, params)
            expect = [int.from_bytes(d, "little") for d in chain.digests]
            pwd_low = _simkernel.pwd_low_words(idx + 1, width)[idx]
            got = _simkernel.chain_states(
                np.uint64(pwd_low), np.uint64(salt_lo), np.uint64(salt_hi),
                width, 3, 3,
            )
            assert expect == [int(x) for x in got]

    def test_pwd_low_words_guards(self):
        with pytest.raises(ValueError):
            _simkernel.pwd_low_words(100, 8)
        with pytest.raises(ValueError):
            _simkernel.pwd_low_words(1001, 3)


class TestRunStrategy:
    def test_zero_budget_never_succeeds(self):
        config = small_config(S2, beta=0.0, trials=1)
        rng = random.Random(0)
        for i in range(20):
            run = run_strategy(config, (1.0, 0.0), config.render_pwd(i), rng)
            assert not run.success
            assert run.set_sizes == (0, 0)

    def test_infeasible_strategy_rejected(self):
        config = small_config(S2, beta=1.0)
        with pytest.raises(ValueError):
            run_strategy(config, (0.4, 0.6), "0001", random.Random(0))

    def test_first_round_only_rate_matches_first_stop_prob(self):
        # b = (1, 0) at beta = 1 hashes the whole space once; it wins
        # exactly when the account stops at round one.
        config = small_config(S2, eps=1.0, beta=1.0, n_pwd=300, trials=400)
        rng = random.Random(11)
        wins = 0
        for t in range(config.trials):
            secret = config.render_pwd(rng.randrange(config.pwd_space_size))
            run = run_strategy(config, (1.0, 0.0), secret, rng)
            wins += run.success
        p1 = config.dist.stop_probs[0]
        sigma = math.sqrt(p1 * (1 - p1) / config.trials)
        assert abs(wins / config.trials - p1) <= 3 * sigma

    def test_hit_fraction_near_one_over_modulus(self):
        config = small_config(S3, eps=0.5, beta=1.0, n_pwd=600, trials=60)
        rng = random.Random(5)
        strategies = enumerate_vertices(feasible_region(S3, config.beta))
        b = strategies[-1].b
        total_s1 = total_hits = 0
        for t in range(config.trials):
            secret = config.render_pwd(rng.randrange(config.pwd_space_size))
            run = run_strategy(config, b, secret, rng)
            total_s1 += run.set_sizes[0]
            total_hits += run.hit_sizes[0]
        frac = total_hits / total_s1
        sigma = math.sqrt((1 / 3) * (2 / 3) / total_s1)
        assert abs(frac - 1 / 3) <= 3 * sigma


class TestEstimatePAdv:
    def test_reproducible_bitwise(self):
        config = small_config(S3, eps=0.5, beta=1.2, n_pwd=500, trials=500)
        r1 = estimate_p_adv(config)
        r2 = estimate_p_adv(config)
        assert r1 == r2
        r3 = estimate_p_adv(
            SimConfig(
                space=config.space, dist=config.dist, budget=config.budget,
                pwd_space_size=config.pwd_space_size, k=config.k,
                trials=config.trials, rng_seed=config.rng_seed + 1,
            )
        )
        assert r3 != r1

    def test_budget_past_bound_rejected(self):
        dist = exponential_distribution(0.0, S2)
        with pytest.raises(ValueError):
            SimConfig(space=S2, dist=dist, budget=2.0 * 4 * 100,
                      pwd_space_size=100, k=4)

    def test_agreement_on_random_configs(self):
        # Ten random (distribution, beta) scenarios at full trial count.
        rng = random.Random(20250809)
        for i in range(10):
            space = S2 if i % 2 == 0 else S3
            weights = [rng.uniform(0.1, 1.0) for _ in space.class_sizes]
            total = sum(o * w for o, w in zip(space.class_sizes, weights))
            dist = StoppingDistribution(
                space, tuple(w / total for w in weights)
            )
            beta = rng.uniform(0.3, 1.45)
            config = SimConfig(
                space=space, dist=dist, budget=beta * 4 * 10_000,
                pwd_space_size=10_000, k=4, trials=10_000, rng_seed=100 + i,
            )
            result = estimate_p_adv(config)
            diff = abs(result.analytic_p_adv - result.empirical_p_adv)
            assert diff <= 3 * result.std_error, (i, result)

    def test_scalar_and_batched_estimators_agree(self):
        # The slow reference process and the kernel are independent
        # implementations of the same experiment.
        config = small_config(S2, eps=0.7, beta=1.0, n_pwd=500, trials=400, seed=21)
        batched = estimate_p_adv(config)
        rng = random.Random(77)
        verts = enumerate_vertices(feasible_region(S2, config.beta))
        best = 0.0
        for v in verts:
            wins = 0
            for _ in range(config.trials):
                secret = config.render_pwd(rng.randrange(config.pwd_space_size))
                wins += run_strategy(config, v, secret, rng).success
            best = max(best, wins / config.trials)
        se = math.sqrt(0.25 / config.trials)
        assert abs(best - batched.empirical_p_adv) <= 6 * se

    def test_set_sizes_follow_strategy(self):
        config = small_config(S3, eps=0.0, beta=1.0, n_pwd=900, trials=200)
        result = estimate_p_adv(config)
        chains = config.budget / config.k
        for v in result.vertex_stats:
            assert v.mean_set_sizes[0] == pytest.approx(
                round(v.strategy[0] * chains), abs=1.0
            )
            # survivors shrink by about 1/l per round
            if v.strategy[1] > 0:
                assert v.mean_hit_sizes[0] / v.mean_set_sizes[0] == pytest.approx(
                    1 / 3, abs=0.05
                )


class TestHaltRates:
    def test_binary_modulus(self):
        freqs = halt_rate_check(S2, k=4, samples=100_000, rng_seed=9)
        sigma = math.sqrt(0.25 / 100_000)
        assert abs(freqs[0][0] - 0.5) <= 3 * sigma
        assert sum(freqs[0]) == pytest.approx(1.0)

    def test_ternary_moduli(self):
        freqs = halt_rate_check(S3, k=4, samples=100_000, rng_seed=10)
        sigma = math.sqrt((1 / 3) * (2 / 3) / 100_000)
        for row in freqs:
            assert sum(row) == pytest.approx(1.0)
            for f in row:
                assert abs(f - 1 / 3) <= 3 * sigma


class TestAccountHistogram:
    def test_chi_square_against_stop_probs(self):
        from haltkdf.kdf import create_account
        from haltkdf.outcomes import stopping_time

        dist = exponential_distribution(1.609, S3)
        params = KdfParams(k=2, rounds=3, hash_id="mix64")
        rng = random.Random(14)
        trials = 5000
        counts = [0, 0, 0]
        for i in range(trials):
            pwd = f"w{i}"
            client, _ = create_account("u", "a", pwd, dist, params, rng)
            chain = digest_chain(pwd, client.salt, params)
            counts[stopping_time(client.outcome, chain) - 1] += 1
        expected = [p * trials for p in dist.stop_probs]
        assert stats.chisquare(counts, expected).pvalue > 0.001


class TestMatrix:
    def test_standard_matrix_shape(self):
        cells = standard_matrix()
        assert len(cells) == 18
        assert {c.moduli for c in cells} == {(2,), (3, 3)}
        assert {c.epsilon for c in cells} == {0.0, 0.5, 1.609}
        assert {c.beta for c in cells} == {0.5, 1.0, 1.4}

    def test_small_matrix_run_and_negative_control(self):
        cells = standard_matrix()[:2]
        results = run_matrix(cells=cells, trials=400, pwd_space_size=500, k=2, seed=5)
        assert all(r.ok for r in results)
        off = run_matrix(
            cells=cells, trials=400, pwd_space_size=500, k=2, seed=5,
            analytic_offset=0.1,
        )
        assert not all(r.ok for r in off)

    def test_result_json(self):
        config = small_config(S2, trials=50)
        result = estimate_p_adv(config)
        data = result.to_json()
        assert set(data) >= {"empirical_p_adv", "std_error", "analytic_p_adv"}
        assert len(data["vertices"]) == len(result.vertex_stats)

    def test_thread_cap_env_honored(self, monkeypatch):
        monkeypatch.setenv("CASH_THREADS", "1")
        config = small_config(S2, trials=50)
        baseline = estimate_p_adv(config)
        assert estimate_p_adv(config) == baseline
