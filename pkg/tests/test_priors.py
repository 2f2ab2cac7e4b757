import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skelgan import priors
from skelgan.errors import ConfigError


def test_salient_is_one_hot():
    rng = np.random.default_rng(0)
    for _ in range(50):
        c = priors.sample_salient(rng)
        assert c.shape == (60,)
        assert np.sum(c) == 1.0
        assert np.count_nonzero(c == 1.0) == 1


def test_salient_uniformity_binomial_bound():
    rng = np.random.default_rng(1)
    counts = np.zeros(60)
    for _ in range(60000):
        counts[np.argmax(priors.sample_salient(rng))] += 1
    # ~3 sigma binomial band around 1000, widened per contract to +-130
    assert np.all(np.abs(counts - 1000) <= 130)


def test_salient_entropy_closed_form():
    assert priors.salient_entropy(60) == pytest.approx(math.log(60), abs=1e-12)
    assert priors.salient_entropy(60) == pytest.approx(4.0943, abs=5e-5)


def test_noise_range_and_mean():
    rng = np.random.default_rng(2)
    draws = np.stack([priors.sample_noise(rng) for _ in range(100_000)])
    assert draws.min() >= 0.0 and draws.max() <= 1.0
    assert np.all(np.abs(draws.mean(axis=0) - 0.5) < 0.005)


def test_noise_reproducible():
    a = priors.sample_noise(np.random.default_rng(3))
    b = priors.sample_noise(np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)


def test_length_bounds_and_cap():
    rng = np.random.default_rng(4)
    prior = priors.LengthPrior()
    draws = [priors.sample_length(rng, prior) for _ in range(5000)]
    assert min(draws) >= 20
    assert max(draws) <= 150
    # degenerate Beta(1e6, 1e-6)-ish not needed: force the cap via scale
    wide = priors.LengthPrior(scale=1000.0)
    assert all(priors.sample_length(rng, wide) == 150 for _ in range(20))


def test_length_mean_against_monte_carlo_oracle():
    # oracle: independent 1e6-draw simulation of the same formula
    orng = np.random.default_rng(2024)
    b = orng.beta(12.5, 2.5, size=1_000_000)
    oracle = np.minimum(20 + np.floor(130.0 * b + 0.5), 150).mean()

    rng = np.random.default_rng(5)
    draws = np.array([priors.sample_length(rng) for _ in range(10_000)])
    assert abs(draws.mean() - oracle) < 2.0


def test_seed_batch_matches_contract():
    rng = np.random.default_rng(6)
    batch = priors.sample_seed_batch(rng, 17)
    assert len(batch) == 17
    assert batch.c.shape == (17, 60) and batch.z.shape == (17, 64)
    np.testing.assert_array_equal(batch.c.sum(axis=1), np.ones(17))
    assert batch.lengths.min() >= 20 and batch.lengths.max() <= 150
    one = batch[3]
    assert isinstance(one, priors.LatentSeed)
    assert one.l == batch.lengths[3]


@given(st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_samplers_deterministic_in_seed(seed):
    s1 = priors.sample_seed(np.random.default_rng(seed))
    s2 = priors.sample_seed(np.random.default_rng(seed))
    np.testing.assert_array_equal(s1.c, s2.c)
    np.testing.assert_array_equal(s1.z, s2.z)
    assert s1.l == s2.l
    assert 20 <= s1.l <= 150


def test_invalid_priors_rejected():
    with pytest.raises(ConfigError):
        priors.LengthPrior(offset=0)
    with pytest.raises(ConfigError):
        priors.LengthPrior(cap=10)
    with pytest.raises(ConfigError):
        priors.LatentConfig(n_categories=1)
