"""Translation-invariant approximate-position instruments.

An instrument is fixed by the outcome density ``|g(q - x)|^2``; the amplitude
``g`` is taken as its non-negative square root (a global phase of ``g`` is
unobservable).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import InvalidParameterError, QuadratureError


class NoiseKernel:
    """Common interface: ``density``, ``amplitude``, ``sample`` and a per-axis CDF."""

    d: int

    def density(self, q, x=None) -> np.ndarray:
        """|g(q - x)|^2, broadcasting over leading axes of ``q`` and ``x``."""
        u = _displacement(q, x, self.d)
        return self._density0(u)

    def amplitude(self, q, x=None) -> np.ndarray:
        return np.sqrt(self.density(q, x))

    def log_density(self, q, x=None) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.density(q, x))

    def _density0(self, u):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        raise NotImplementedError

    @property
    def covariance(self) -> np.ndarray:
        raise NotImplementedError


def _displacement(q, x, d):
    q = np.asarray(q, dtype=float)
    if x is not None:
        q = q - np.asarray(x, dtype=float)
    if d == 1 and (q.ndim == 0 or q.shape[-1] != 1):
        q = q[..., None]
    if q.shape[-1] != d:
        raise InvalidParameterError(f"expected vectors of dimension {d}, got shape {q.shape}")
    return q


@dataclass(frozen=True, eq=False)
class GaussianKernel(NoiseKernel):
    """Centered normal outcome density with covariance ``sigma``.

    A scalar ``sigma`` is read as the variance in one dimension.
    """

    sigma: np.ndarray

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if s.shape[0] != s.shape[1]:
            raise InvalidParameterError(f"sigma must be square, got {s.shape}")
        if np.max(np.abs(s - s.T)) > 1e-12:
            raise InvalidParameterError("sigma must be symmetric")
        try:
            chol = np.linalg.cholesky(s)
        except np.linalg.LinAlgError:
            raise InvalidParameterError("sigma must be positive definite") from None
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_prec", np.linalg.inv(s))
        _, logdet = np.linalg.slogdet(s)
        object.__setattr__(self, "_lognorm", -0.5 * (s.shape[0] * np.log(2 * np.pi) + logdet))

    @classmethod
    def isotropic(cls, std: float, d: int = 1) -> "GaussianKernel":
        return cls(std ** 2 * np.eye(d))

    @property
    def d(self) -> int:
        return self.sigma.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        return self.sigma

    def log_density(self, q, x=None):
        u = _displacement(q, x, self.d)
        quad = np.einsum("...i,ij,...j->...", u, self._prec, u)
        return self._lognorm - 0.5 * quad

    def _density0(self, u):
        return np.exp(self.log_density(u))

    def sample(self, rng, size=None):
        shape = (() if size is None else np.atleast_1d(size).tolist())
        z = rng.standard_normal(tuple(shape) + (self.d,))
        return z @ self._chol.T

    def marginal_cdf(self, axis: int, t):
        return special.ndtr(np.asarray(t) / np.sqrt(self.sigma[axis, axis]))

    def __repr__(self):
        return f"GaussianKernel(sigma={self.sigma.tolist()})"


@dataclass(frozen=True, eq=False)
class BumpCosineKernel(NoiseKernel):
    """Product of ``cos^2(pi q / 2w) / w`` on ``[-w, w]`` along each axis."""

    halfwidth: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.halfwidth, dtype=float))
        if w.ndim != 1 or np.any(~(w > 0)):
            raise InvalidParameterError(f"halfwidth must be positive per axis, got {self.halfwidth}")
        w.setflags(write=False)
        object.__setattr__(self, "halfwidth", w)

    @property
    def d(self) -> int:
        return self.halfwidth.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        return np.diag(self.halfwidth ** 2 * (1.0 / 3.0 - 2.0 / np.pi ** 2))

    def _density0(self, u):
        w = self.halfwidth
        inside = np.abs(u) < w
        per_axis = np.where(inside, np.cos(np.pi * u / (2 * w)) ** 2 / w, 0.0)
        return np.prod(per_axis, axis=-1)

    def sample(self, rng, size=None):
        shape = () if size is None else tuple(np.atleast_1d(size).tolist())
        n = int(np.prod(shape, dtype=int))
        out = np.empty((n, self.d))
        for axis, w in enumerate(self.halfwidth):
            out[:, axis] = _rejection_cos2(rng, n, w)
        return out.reshape(shape + (self.d,))

    def marginal_cdf(self, axis: int, t):
        w = self.halfwidth[axis]
        t = np.clip(np.asarray(t, dtype=float), -w, w)
        return (t + w) / (2 * w) + np.sin(np.pi * t / w) / (2 * np.pi)

    def __repr__(self):
        return f"BumpCosineKernel(halfwidth={self.halfwidth.tolist()})"


def _rejection_cos2(rng, n, w):
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 16)
        u = rng.uniform(-w, w, size=m)
        keep = u[rng.random(m) < np.cos(np.pi * u / (2 * w)) ** 2]
        take = min(keep.size, n - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
    return out


@dataclass(frozen=True, eq=False)
class DeltaKernel(NoiseKernel):
    """Zero-width instrument for noiseless test oracles. Has no density."""

    d: int = 1

    @property
    def covariance(self):
        return np.zeros((self.d, self.d))

    def _density0(self, u):
        raise InvalidParameterError("the zero-width kernel has no density")

    def sample(self, rng, size=None):
        shape = () if size is None else tuple(np.atleast_1d(size).tolist())
        return np.zeros(shape + (self.d,))


@dataclass(frozen=True)
class KernelReport:
    normalization_residual: float
    mean_residual: float
    second_moment: np.ndarray


def _quad(f, a, b):
    val, err, *_ = integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=200, full_output=1)
    if err > 1e-8:
        raise QuadratureError("quadrature did not converge", value=val, error=err, interval=(a, b))
    return val


def validate(kernel: NoiseKernel) -> KernelReport:
    """Check normalization, centering and the second moment by adaptive quadrature.

    Both kernel families factorize along an orthonormal frame (principal axes
    for the Gaussian, coordinate axes for the bump), so d-dimensional
    integrals reduce to products of one-dimensional ones.
    """
    if isinstance(kernel, DeltaKernel):
        raise InvalidParameterError("the zero-width kernel is test-only and cannot be validated")
    if isinstance(kernel, GaussianKernel):
        lam, frame = np.linalg.eigh(kernel.sigma)
        factors = [
            (lambda u, s=s: np.exp(-0.5 * u * u / s) / np.sqrt(2 * np.pi * s), 12 * np.sqrt(s))
            for s in lam
        ]
    elif isinstance(kernel, BumpCosineKernel):
        frame = np.eye(kernel.d)
        factors = [
            (lambda u, w=w: np.cos(np.pi * u / (2 * w)) ** 2 / w, w) for w in kernel.halfwidth
        ]
    else:
        raise InvalidParameterError(f"cannot validate kernel of type {type(kernel).__name__}")

    norms, means, variances = [], [], []
    for f, half in factors:
        norms.append(_quad(f, -half, half))
        means.append(_quad(lambda u: u * f(u), -half, half))
        variances.append(_quad(lambda u: u * u * f(u), -half, half))
    norm = float(np.prod(norms))
    mean = frame @ np.asarray(means)
    second = frame @ np.diag(variances) @ frame.T
    return KernelReport(
        normalization_residual=abs(norm - 1.0),
        mean_residual=float(np.max(np.abs(mean))),
        second_moment=np.diag(second).copy(),
    )
