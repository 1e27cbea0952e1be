import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from oracles import pairwise_mean
from tracksim.stats import (chi2_gof, energy_distance, energy_distance_to_normal, gaussian_energy_distance,
                            histogram_gof, kuiper_uniform, ks_1samp, ks_2samp)


@given(seed=st.integers(0, 10 ** 6), n=st.integers(5, 300))
def test_ks_1samp_matches_scipy(seed, n):
    x = np.random.default_rng(seed).normal(size=n)
    ref = sps.kstest(x, sps.norm.cdf, method="exact")
    d, p = ks_1samp(x, sps.norm.cdf)
    assert d == pytest.approx(ref.statistic, abs=1e-14)
    assert p == pytest.approx(ref.pvalue, rel=1e-8, abs=1e-14)


@given(seed=st.integers(0, 10 ** 6))
def test_ks_2samp_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=400), rng.normal(0.1, 1.0, size=300)
    ref = sps.ks_2samp(x, y, method="exact")
    d, p = ks_2samp(x, y)
    assert d == pytest.approx(ref.statistic, abs=1e-14)
    # limiting Kolmogorov law of sqrt(n m / (n + m)) D
    assert p == pytest.approx(sps.kstwobign.sf(np.sqrt(400 * 300 / 700) * d), rel=1e-10)
    assert abs(p - ref.pvalue) < 0.05


def test_chi2_matches_scipy_without_merging():
    obs = np.array([18, 25, 30, 27])
    prob = np.array([0.2, 0.25, 0.3, 0.25])
    ref = sps.chisquare(obs, prob * obs.sum())
    stat, p, dof = chi2_gof(obs, prob)
    assert (stat, dof) == (pytest.approx(ref.statistic), 3)
    assert p == pytest.approx(ref.pvalue)


def test_chi2_merges_sparse_bins():
    stat, p, dof = chi2_gof([50, 45, 3, 1, 1], [0.5, 0.45, 0.03, 0.01, 0.01])
    assert dof == 2
    assert stat == pytest.approx(0.0)


def test_histogram_gof_accepts_true_law():
    x = np.random.default_rng(1).normal(size=20000)
    assert histogram_gof(x, sps.norm.cdf)[1] > 1e-3
    assert histogram_gof(x + 0.1, sps.norm.cdf)[1] < 1e-6


def test_kuiper_critical_value():
    # the asymptotic 5% point of the Kuiper distribution is 1.747
    from tracksim.stats import _kuiper_sf
    assert _kuiper_sf(1.747) == pytest.approx(0.05, abs=1e-3)
    assert _kuiper_sf(0.1) == 1.0


def test_kuiper_detects_rotation_invariant_bias():
    rng = np.random.default_rng(2)
    assert kuiper_uniform(rng.uniform(size=2000))[1] > 1e-3
    # a bimodal law with uniform mean defeats a mean test but not Kuiper
    bimodal = (rng.choice([0.25, 0.75], size=2000) + 0.05 * rng.normal(size=2000)) % 1
    assert kuiper_uniform(bimodal)[1] < 1e-6


@given(seed=st.integers(0, 10 ** 6), d=st.integers(1, 4))
def test_energy_distance_matches_dense_oracle(seed, d):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(60, d)), rng.normal(0.3, 1.0, size=(45, d))
    ref = 2 * pairwise_mean(x, y) - pairwise_mean(x) - pairwise_mean(y)
    assert energy_distance(x, y) == pytest.approx(ref, rel=1e-9, abs=1e-12)
    assert energy_distance(x, x) == pytest.approx(-2 * pairwise_mean(x) + 2 * pairwise_mean(x, x), abs=1e-12)


def test_energy_distance_is_unbiased_under_equal_laws():
    rng = np.random.default_rng(3)
    vals = [energy_distance(rng.normal(size=(200, 2)), rng.normal(size=(200, 2))) for _ in range(200)]
    assert abs(np.mean(vals)) < 4 * np.std(vals) / np.sqrt(200)


def test_closed_form_reference_matches_large_sample():
    rng = np.random.default_rng(4)
    mean, std = np.array([0.5, -1.0, 2.0]), 1.3
    x = mean + rng.normal(0, 1.1, size=(1500, 3)) + 0.2
    ref = energy_distance(x, mean + std * rng.normal(size=(1500, 3)))
    closed = energy_distance_to_normal(x, mean, std)
    assert closed == pytest.approx(ref, abs=0.03)
    vals = [energy_distance_to_normal(mean + std * rng.normal(size=(300, 3)), mean, std) for _ in range(100)]
    assert abs(np.mean(vals)) < 4 * np.std(vals) / 10


def test_gaussian_energy_distance_population_value():
    # d = 1: E|X - Y| for N(0, s^2) is 2 s / sqrt(pi)
    s_a, s_b = 1.0, 2.0
    expected = (2 * np.sqrt(2 * (s_a ** 2 + s_b ** 2) / np.pi) - 2 * s_a / np.sqrt(np.pi)
                - 2 * s_b / np.sqrt(np.pi))
    assert gaussian_energy_distance([[s_a ** 2]], [[s_b ** 2]]) == pytest.approx(expected, rel=1e-8)
    assert gaussian_energy_distance(np.eye(3), np.eye(3)) == pytest.approx(0.0, abs=1e-10)
