import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from basisgan.divergence import (LOG4, check_distribution, diversity_score, gan_value, jsd, jsd_from_samples, kl,
                                 mode_coverage, optimal_discriminator, random_pair, verify_eq3)

LOG2 = math.log(2.0)


def kl_oracle(p, q):
    """50-digit loop over the support."""
    mpmath.mp.dps = 50
    total = mpmath.mpf(0)
    for a, b in zip(p, q):
        if a > 0:
            total += mpmath.mpf(a) * mpmath.log(mpmath.mpf(a) / mpmath.mpf(b))
    return float(total)


def pairs_oracle(samples):
    n = len(samples)
    flat = [np.ravel(s) for s in samples]
    acc, count = 0.0, 0
    for i in range(n):
        for j in range(i + 1, n):
            acc += sum(abs(a - b) for a, b in zip(flat[i], flat[j])) / len(flat[i])
            count += 1
    return acc / count


# --- kl / jsd ---

def test_kl_examples():
    p = np.array([0.2, 0.8])
    assert kl(p, p) == 0.0
    assert abs(kl([1.0, 0.0], [0.5, 0.5]) - LOG2) < 1e-15
    assert kl([0.5, 0.5], [1.0, 0.0]) == math.inf


def test_kl_against_high_precision_loop():
    rng = np.random.default_rng(0)
    for _ in range(20):
        p, q = random_pair(rng, 16)
        assert abs(kl(p, q) - kl_oracle(p, q)) < 1e-14


def test_jsd_examples():
    assert jsd([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert abs(jsd([1.0, 0.0], [0.0, 1.0]) - LOG2) < 1e-15
    p, q = [0.5, 0.5], [0.25, 0.75]
    m = [0.375, 0.625]
    direct = 0.5 * sum(a * math.log(a / b) for a, b in zip(p, m)) + 0.5 * sum(a * math.log(a / b) for a, b in zip(q, m))
    assert abs(jsd(p, q) - direct) < 1e-15
    assert jsd(p, q) == jsd(q, p)


def test_jsd_symmetry_and_bounds_on_many_pairs():
    rng = np.random.default_rng(1)
    for _ in range(10_000):
        p, q = random_pair(rng, int(rng.integers(2, 8)))
        v = jsd(p, q)
        assert abs(v - jsd(q, p)) < 1e-14
        assert -1e-15 <= v <= LOG2 + 1e-15


def test_check_distribution():
    check_distribution([0.25, 0.75])
    for bad in ([0.5, 0.6], [-0.1, 1.1], [[0.5, 0.5]]):
        with pytest.raises(ValueError):
            check_distribution(bad)


# --- optimal discriminator and value ---

def test_optimal_discriminator_examples():
    assert np.all(optimal_discriminator([0.2, 0.8], [0.2, 0.8]) == 0.5)
    d = optimal_discriminator([0.5, 0.5, 0.0], [0.0, 0.5, 0.5])
    assert d[0] == 1.0 and d[1] == 0.5 and d[2] == 0.0
    assert optimal_discriminator([1.0, 0.0], [1.0, 0.0])[1] == 0.5


def test_optimal_discriminator_is_not_improved_by_perturbation():
    rng = np.random.default_rng(2)
    for _ in range(100):
        p, q = random_pair(rng, 6)
        d = optimal_discriminator(p, q)
        best = gan_value(p, q, d)
        for i in range(6):
            for delta in (-0.01, 0.01):
                e = d.copy()
                e[i] = np.clip(e[i] + delta, 1e-9, 1 - 1e-9)
                assert gan_value(p, q, e) <= best + 1e-15


def test_gan_value_examples():
    assert abs(gan_value([0.5, 0.5], [0.5, 0.5], [0.5, 0.5]) + LOG4) < 1e-15
    p, q = [1.0, 0.0], [0.0, 1.0]
    assert gan_value(p, q, optimal_discriminator(p, q)) == 0.0
    assert gan_value([1.0, 0.0], [0.5, 0.5], [0.0, 0.5]) == -math.inf


def test_value_at_optimum_equals_shifted_jsd():
    rng = np.random.default_rng(3)
    for _ in range(100):
        p, q = random_pair(rng, 16)
        assert abs(gan_value(p, q, optimal_discriminator(p, q)) - (-LOG4 + 2 * jsd(p, q))) < 1e-12


def test_verify_eq3_report():
    rng = np.random.default_rng(4)
    rep = verify_eq3([random_pair(rng, 16) for _ in range(100)])
    assert rep["max_deviation"] < 1e-12
    assert rep["argmin_error"] <= 1e-3 + 1e-12
    p = np.array([0.3, 0.7])
    assert verify_eq3([(p, p)])["max_deviation"] < 1e-15
    assert abs(gan_value(p, p, optimal_discriminator(p, p)) + LOG4) < 1e-15
    with pytest.raises(ValueError):
        verify_eq3([])


def test_grid_argmin_exact_fractions():
    """2-state cost C(q) with rational p: brute force in exact-ish arithmetic agrees on the argmin."""
    p = (Fraction(3, 10), Fraction(7, 10))
    grid = [Fraction(k, 1000) for k in range(1, 1000)]

    def cost(g):
        q = (g, 1 - g)
        return sum(float(a) * math.log(a / (a + b)) + float(b) * math.log(b / (a + b)) for a, b in zip(p, q))
    best = min(grid, key=cost)
    assert best == Fraction(3, 10)
    assert verify_eq3([(np.array([0.3, 0.7]), np.array([0.5, 0.5]))])["grid_argmin_q"] == pytest.approx(0.3, abs=1e-12)


# --- sample estimators ---

def test_jsd_from_samples_identical_is_zero():
    x = np.random.default_rng(5).standard_normal(500)
    assert jsd_from_samples(x, x) == 0.0


def test_jsd_from_samples_same_distribution_small():
    rng = np.random.default_rng(6)
    v = jsd_from_samples(rng.standard_normal(100_000), rng.standard_normal(100_000), bins=50, range=(-5, 5))
    assert v < 0.01


def test_jsd_from_samples_separated_modes_large():
    rng = np.random.default_rng(7)
    v = jsd_from_samples(rng.normal(-2, 0.1, 10_000), rng.normal(2, 0.1, 10_000))
    assert 0.6 < v <= LOG2


def test_jsd_from_samples_shrinks_with_batch_size():
    rng = np.random.default_rng(8)
    vals = [np.mean([jsd_from_samples(rng.standard_normal(n), rng.standard_normal(n), bins=50, range=(-5, 5))
                     for _ in range(3)]) for n in (1_000, 10_000, 100_000)]
    assert vals[0] > vals[1] > vals[2]


def test_jsd_from_samples_errors():
    x = np.zeros(200)
    with pytest.raises(ValueError):
        jsd_from_samples(x[:50], x)
    with pytest.raises(ValueError):
        jsd_from_samples(x + 10, x + 10, range=(-1, 1))


def test_jsd_from_samples_2d():
    rng = np.random.default_rng(9)
    a, b = rng.standard_normal((2000, 2)), rng.standard_normal((2000, 2))
    assert jsd_from_samples(a, b, bins=10, range=[(-3, 3), (-3, 3)]) < 0.02


def test_diversity_examples():
    assert diversity_score(np.ones((4, 3))) == 0.0
    assert abs(diversity_score(np.stack([np.zeros(5), np.full(5, 0.3)])) - 0.3) < 1e-15
    s = np.random.default_rng(10).standard_normal((5, 2, 3))
    assert abs(diversity_score(s) - pairs_oracle(s)) < 1e-14
    with pytest.raises(ValueError):
        diversity_score(np.zeros((1, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8), st.floats(-100, 100), st.integers(0, 10**6))
def test_diversity_translation_invariant(n, shift, seed):
    s = np.random.default_rng(seed).standard_normal((n, 4))
    assert abs(diversity_score(s + shift) - diversity_score(s)) < 1e-12


def test_mode_coverage_examples():
    centers = np.array([[-2.0, 0.0], [2.0, 0.0]])
    assert mode_coverage(np.tile(centers[0], (10, 1)), centers, 0.3) == 0.5
    assert mode_coverage(centers, centers, 1e-9) == 1.0
    rng = np.random.default_rng(11)
    draws = centers[rng.integers(2, size=10_000)] + 0.1 * rng.standard_normal((10_000, 2))
    assert mode_coverage(draws, centers, 0.3) == 1.0
    with pytest.raises(ValueError):
        mode_coverage(draws, centers, 0.0)
