"""Goodness-of-fit and two-sample statistics used by the experiments.

The statistics are computed here; scipy supplies their reference
distributions and the pairwise distance kernel.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special, stats as sps
from scipy.spatial import distance


def ks_1samp(x, cdf) -> tuple[float, float]:
    """Kolmogorov-Smirnov statistic and exact p-value against a continuous CDF."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    f = cdf(x)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))
    return d, float(sps.kstwo.sf(d, n))


def ks_2samp(x, y) -> tuple[float, float]:
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    allv = np.concatenate([x, y])
    cx = np.searchsorted(x, allv, side="right") / x.size
    cy = np.searchsorted(y, allv, side="right") / y.size
    d = float(np.max(np.abs(cx - cy)))
    en = math.sqrt(x.size * y.size / (x.size + y.size))
    return d, float(special.kolmogorov(en * d))


def chi2_gof(observed, expected_prob, min_expected: float = 5.0) -> tuple[float, float, int]:
    """Pearson chi-square against bin probabilities; sparse bins are merged.

    Returns (statistic, p-value, degrees of freedom).
    """
    obs = np.asarray(observed, dtype=float)
    prob = np.asarray(expected_prob, dtype=float)
    prob = prob / prob.sum()
    n = obs.sum()
    merged_obs, merged_exp = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(obs, prob * n):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            merged_obs.append(acc_o)
            merged_exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if merged_exp:
            merged_obs[-1] += acc_o
            merged_exp[-1] += acc_e
        else:
            merged_obs.append(acc_o)
            merged_exp.append(acc_e)
    o, e = np.array(merged_obs), np.array(merged_exp)
    stat = float(np.sum((o - e) ** 2 / e))
    dof = max(len(o) - 1, 1)
    return stat, float(sps.chi2.sf(stat, dof)), dof


def histogram_gof(samples, cdf, bins: int = 50) -> tuple[float, float]:
    """Chi-square of a ``bins``-bin histogram against a 1-D CDF; outer bins extend to infinity."""
    x = np.asarray(samples, dtype=float)
    edges = np.linspace(x.min(), x.max(), bins + 1)
    counts, _ = np.histogram(x, edges)
    cdf_edges = cdf(edges)
    cdf_edges[0], cdf_edges[-1] = 0.0, 1.0
    stat, p, _ = chi2_gof(counts, np.diff(cdf_edges))
    return stat, p


def kuiper_uniform(u) -> tuple[float, float]:
    """Kuiper statistic of samples in [0, 1) against the uniform law, asymptotic p-value."""
    u = np.sort(np.asarray(u, dtype=float))
    n = u.size
    i = np.arange(1, n + 1)
    v = float(np.max(i / n - u) + np.max(u - (i - 1) / n))
    sn = math.sqrt(n)
    lam = (sn + 0.155 + 0.24 / sn) * v
    return v, _kuiper_sf(lam)


def _kuiper_sf(lam: float) -> float:
    if lam < 0.4:
        return 1.0
    j = np.arange(1, 101)
    terms = (4 * j ** 2 * lam ** 2 - 1) * np.exp(-2 * j ** 2 * lam ** 2)
    return float(min(1.0, max(0.0, 2 * terms.sum())))


def _mean_pairwise(x, y=None, chunk: int = 1024) -> float:
    """Mean Euclidean distance over pairs; i != j pairs only when ``y`` is omitted."""
    same = y is None
    y = x if same else y
    total = 0.0
    for start in range(0, x.shape[0], chunk):
        total += distance.cdist(x[start:start + chunk], y).sum()
    if same:
        n = x.shape[0]
        return total / (n * (n - 1))
    return total / (x.shape[0] * y.shape[0])


def _as_samples(x):
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def energy_distance(x, y) -> float:
    """Unbiased two-sample energy statistic 2E|X-Y| - E|X-X'| - E|Y-Y'|."""
    x, y = _as_samples(x), _as_samples(y)
    return 2 * _mean_pairwise(x, y) - _mean_pairwise(x) - _mean_pairwise(y)


def _mean_norm_noncentral(a, d):
    """E|Z + a e_1| for standard normal Z in R^d."""
    a = np.asarray(a, dtype=float)
    c = math.sqrt(2.0) * math.exp(math.lgamma((d + 1) / 2) - math.lgamma(d / 2))
    return c * special.hyp1f1(-0.5, d / 2, -0.5 * a ** 2)


def energy_distance_to_normal(x, mean, std: float) -> float:
    """Unbiased energy statistic of a sample against N(mean, std^2 I) in closed form."""
    x = _as_samples(x)
    d = x.shape[1]
    a = np.linalg.norm(x - np.asarray(mean, dtype=float), axis=1) / std
    cross = std * float(np.mean(_mean_norm_noncentral(a, d)))
    within_ref = 2 * std * math.exp(math.lgamma((d + 1) / 2) - math.lgamma(d / 2))
    return 2 * cross - _mean_pairwise(x) - within_ref


def gaussian_energy_distance(cov_a, cov_b) -> float:
    """Population energy distance between two centred normal laws, by quadrature.

    Uses |z| = (4 pi)^{-1/2} int_0^inf (1 - exp(-t |z|^2)) t^{-3/2} dt.
    """
    from scipy import integrate

    def mean_norm(cov):
        lam = np.linalg.eigvalsh(cov)

        def f(t):
            return (1 - np.prod((1 + 2 * t * lam) ** -0.5)) * t ** -1.5
        val = integrate.quad(f, 0, 1, limit=200)[0] + integrate.quad(f, 1, np.inf, limit=200)[0]
        return val / (2 * math.sqrt(math.pi))

    a, b = np.asarray(cov_a, float), np.asarray(cov_b, float)
    return 2 * mean_norm(a + b) - mean_norm(2 * a) - mean_norm(2 * b)
