import math

import numpy as np
import pytest

from dpduel.dp_mechanisms import (
    BinTreeCounter,
    CapacityError,
    LaplaceSampler,
    bintree_error_bound,
    laplace_inverse_cdf,
    laplace_sample,
    node_noise_scale,
)


class TestLaplaceSampling:
    def test_median_maps_to_zero(self):
        assert laplace_inverse_cdf(0.5, 1.0) == 0.0

    def test_quantiles_match_closed_form(self):
        # P(X <= x) = 1 - exp(-x)/2 for x >= 0, so u=0.75 -> ln 2
        assert laplace_inverse_cdf(0.75, 1.0) == pytest.approx(math.log(2.0), rel=1e-12)
        assert laplace_inverse_cdf(0.25, 1.0) == pytest.approx(-math.log(2.0), rel=1e-12)
        assert laplace_inverse_cdf(0.75, 3.0) == pytest.approx(3.0 * math.log(2.0), rel=1e-12)

    def test_moments_converge(self):
        sampler = LaplaceSampler(1.0, seed=42)
        draws = sampler.sample_many(1_000_000)
        assert abs(draws.mean()) < 0.01
        assert abs(np.abs(draws).mean() - 1.0) < 0.01

    def test_scalar_draws_match_distribution(self):
        sampler = LaplaceSampler(2.0, seed=7)
        draws = np.array([sampler.sample() for _ in range(20000)])
        assert abs(draws.mean()) < 0.1
        assert abs(np.abs(draws).mean() - 2.0) < 0.1

    def test_nonpositive_scale_rejected(self):
        with pytest.raises(ValueError):
            laplace_inverse_cdf(0.5, 0.0)
        with pytest.raises(ValueError):
            LaplaceSampler(-1.0)
        with pytest.raises(ValueError):
            laplace_sample(0.0, np.random.default_rng(0))

    def test_u_outside_open_interval_rejected(self):
        with pytest.raises(ValueError):
            laplace_inverse_cdf(0.0, 1.0)
        with pytest.raises(ValueError):
            laplace_inverse_cdf(1.0, 1.0)


class TestCounterConstruction:
    def test_empty_counter(self):
        c = BinTreeCounter(8, 1.0, seed=7)
        assert c.position == 0
        assert c.exact_sum() == 0.0
        assert c.estimate() == 0.0  # empty dyadic decomposition: no data, no noise

    def test_noise_scale_formula(self):
        # ceil(log2 1024) = 10 levels, budget 0.5 -> per-node scale 20
        assert BinTreeCounter(1024, 0.5, seed=1).node_noise_scale == 20.0
        assert node_noise_scale(1024, 0.5) == 20.0
        assert node_noise_scale(1000, 2.0) == 5.0

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            BinTreeCounter(0, 1.0)
        with pytest.raises(ValueError):
            BinTreeCounter(8, 0.0)
        with pytest.raises(ValueError):
            BinTreeCounter(8, -2.0)


class TestCounterExactness:
    def test_all_ones(self):
        c = BinTreeCounter(16, 1.0, noiseless=True)
        for _ in range(5):
            c.append(1)
        assert c.estimate() == 5.0

    def test_cancellation(self):
        c = BinTreeCounter(4, 1.0, noiseless=True)
        c.append(1)
        c.append(-1)
        assert c.estimate() == 0.0

    def test_every_prefix_matches_true_sum(self):
        rng = np.random.default_rng(3)
        values = rng.choice([-1.0, 0.0, 1.0], size=100)
        c = BinTreeCounter(100, 1.0, noiseless=True)
        for v in values:
            c.append(v)
        prefixes = np.cumsum(values)
        for t in range(1, 101):
            assert c.estimate(position=t) == prefixes[t - 1]
            assert c.exact_sum(position=t) == prefixes[t - 1]

    def test_noisy_counter_exact_reconstruction(self):
        # exact_sum strips the noise even when the released value carries it
        c = BinTreeCounter(64, 0.5, seed=11)
        for v in [1, 1, 0, -1, 1]:
            c.append(v)
        assert c.exact_sum() == 2.0
        assert c.estimate() != c.exact_sum()

    def test_overflow_and_domain_errors(self):
        c = BinTreeCounter(3, 1.0, noiseless=True)
        for _ in range(3):
            c.append(1)
        with pytest.raises(CapacityError):
            c.append(1)
        c2 = BinTreeCounter(3, 1.0, noiseless=True)
        with pytest.raises(ValueError):
            c2.append(1.5)
        with pytest.raises(ValueError):
            c2.append(-2)


class TestCounterNoiseStructure:
    def test_repeated_queries_are_stable(self):
        c = BinTreeCounter(32, 1.0, seed=5)
        for _ in range(10):
            c.append(1)
        first = c.estimate()
        assert all(c.estimate() == first for _ in range(5))

    def test_past_positions_stable_under_later_appends(self):
        c = BinTreeCounter(32, 1.0, seed=5)
        c.append(1)
        early = c.estimate(position=1)
        for _ in range(20):
            c.append(1)
        assert c.estimate(position=1) == early

    def test_noise_is_data_independent(self):
        # identical seeds, different data: released - exact is identical per position
        c1 = BinTreeCounter(64, 1.0, seed=9)
        c2 = BinTreeCounter(64, 1.0, seed=9)
        rng = np.random.default_rng(0)
        for _ in range(50):
            c1.append(rng.choice([0.0, 1.0]))
            c2.append(rng.choice([0.0, 1.0]))
        for t in range(51):
            n1 = c1.estimate(position=t) - c1.exact_sum(position=t)
            n2 = c2.estimate(position=t) - c2.exact_sum(position=t)
            assert n1 == pytest.approx(n2, abs=1e-9)

    def test_sensitivity_coupling_single_flip(self):
        # one element changed by +/- 1 moves every estimate by at most 1
        rng = np.random.default_rng(21)
        values = rng.choice([0.0, 1.0], size=80)
        flipped = values.copy()
        flipped[17] = 1.0 - flipped[17]
        c1 = BinTreeCounter(80, 1.0, seed=4)
        c2 = BinTreeCounter(80, 1.0, seed=4)
        for v1, v2 in zip(values, flipped):
            c1.append(v1)
            c2.append(v2)
        divergence = [abs(c1.estimate(position=t) - c2.estimate(position=t))
                      for t in range(81)]
        assert max(divergence) <= 1.0 + 1e-9

    def test_sensitivity_coupling_k_flips(self):
        rng = np.random.default_rng(22)
        values = rng.choice([0.0, 1.0], size=60)
        flipped = values.copy()
        for pos in (5, 20, 44):
            flipped[pos] = 1.0 - flipped[pos]
        c1 = BinTreeCounter(60, 1.0, seed=8)
        c2 = BinTreeCounter(60, 1.0, seed=8)
        for v1, v2 in zip(values, flipped):
            c1.append(v1)
            c2.append(v2)
        worst = max(abs(c1.estimate(position=t) - c2.estimate(position=t))
                    for t in range(61))
        assert worst <= 3.0 + 1e-9


class TestCounterAccuracy:
    def test_error_bound_violation_rate(self):
        # scaled-down version of the acceptance check: T=256, 60 seeds
        T, eps, delta = 256, 1.0, 0.05
        bound = bintree_error_bound(T, eps, delta)
        margin = 2.576 * math.sqrt(delta * (1 - delta) / 60)
        violations = np.zeros(T)
        for seed in range(60):
            c = BinTreeCounter(T, eps, seed=seed)
            for _ in range(T):
                c.append(0.0)
            for t in range(1, T + 1):
                if abs(c.estimate(position=t)) > bound:
                    violations[t - 1] += 1
        assert np.max(violations) / 60 <= delta + margin

    def test_bound_formula_value(self):
        # anchor: 4 * ln(20) * log2(1024)^2.5 is about 3.79e3
        assert bintree_error_bound(1024, 1.0, 0.05) == pytest.approx(3789.3349, rel=1e-6)
