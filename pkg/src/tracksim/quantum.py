"""Exact quantum measurement chain with two backends.

* Grid backend: a wavefunction on a uniform periodic 1-D grid. Free motion is
  an exact spectral multiplier; harmonic motion uses the exact
  kick-drift-kick factorization of each sub-step's rotation, so the only
  error is spatial discretization.
* Gaussian backend: mean and Wigner covariance of a pure Gaussian state in
  d dimensions, exact for quadratic dynamics and Gaussian instruments.

Units follow ``[x, p] = i eps``, so ``p = -i eps d/dx`` on the grid. One chain
step is: multiply by the amplitude ``g(q - x)``, then evolve for one period.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Union

import numpy as np

from .classical import MeasurementRecord
from .errors import (BoundaryError, ConfigError, InvalidParameterError, QuadratureError,
                     UnsupportedBackendError)
from .instrument import GaussianKernel, NoiseKernel, DeltaKernel
from .phasespace import Free, Harmonic, Magnetic, SymplecticMap, omega

NORM_TOL = 1e-10
BOUNDARY_MASS_TOL = 1e-8
MASS_DEFECT_TOL = 1e-6
CONVERGENCE_TOL = 1e-8


# -- grid backend -------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    n: int
    x_lo: float
    x_hi: float

    def __post_init__(self):
        if self.n < 8 or self.n & (self.n - 1):
            raise InvalidParameterError(f"grid size must be a power of two >= 8, got {self.n}")
        if not self.x_hi > self.x_lo:
            raise InvalidParameterError("grid needs x_hi > x_lo")

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.n

    @property
    def x(self) -> np.ndarray:
        return self.x_lo + self.dx * np.arange(self.n)

    @property
    def k(self) -> np.ndarray:
        """Angular wavenumbers in FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    @property
    def length(self) -> float:
        return self.x_hi - self.x_lo


def grid_for(x_lo: float, x_hi: float, p_max: float, epsilon: float, min_n: int = 256) -> Grid:
    """Smallest power-of-two grid whose Nyquist momentum exceeds ``2 * p_max``."""
    k_needed = 2.0 * p_max / epsilon
    n = min_n
    while np.pi * n / (x_hi - x_lo) < k_needed:
        n *= 2
    return Grid(n, x_lo, x_hi)


@dataclass(frozen=True, eq=False)
class GridState:
    psi: np.ndarray
    grid: Grid
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidParameterError(f"epsilon must be positive, got {self.epsilon}")
        psi = np.asarray(self.psi, dtype=complex)
        if psi.shape != (self.grid.n,):
            raise InvalidParameterError(f"psi has shape {psi.shape}, grid has {self.grid.n} points")
        object.__setattr__(self, "psi", psi)

    @property
    def x(self):
        return self.grid.x

    @property
    def dx(self):
        return self.grid.dx

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.psi) ** 2) * self.dx))

    def normalized(self) -> "GridState":
        return replace(self, psi=self.psi / self.norm())

    def position_density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def inner(self, other: "GridState") -> complex:
        return complex(np.vdot(self.psi, other.psi) * self.dx)

    def momentum_psi(self) -> np.ndarray:
        """(p psi)(x) with p = -i eps d/dx, spectrally."""
        return np.fft.ifft(self.epsilon * self.grid.k * np.fft.fft(self.psi))

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Mean (x, p) and the symmetrized 2x2 covariance."""
        w = np.abs(self.psi) ** 2
        w_tot = w.sum()
        x = self.x
        mx = float(np.sum(w * x) / w_tot)
        vxx = float(np.sum(w * (x - mx) ** 2) / w_tot)
        phat = np.fft.fft(self.psi)
        wk = np.abs(phat) ** 2
        pk = self.epsilon * self.grid.k
        mp = float(np.sum(wk * pk) / wk.sum())
        vpp = float(np.sum(wk * (pk - mp) ** 2) / wk.sum())
        ppsi = np.fft.ifft(pk * phat)
        # Re <(x - mx) psi, (p - mp) psi> is the symmetrized cross moment
        cross = np.vdot((x - mx) * self.psi, ppsi - mp * self.psi).real / w_tot
        return np.array([mx, mp]), np.array([[vxx, cross], [cross, vpp]])

    def position_mean(self) -> float:
        return float(self.moments()[0][0])

    def momentum_mean(self) -> float:
        return float(self.moments()[0][1])

    def boundary_mass(self, width: int = 4) -> float:
        w = np.abs(self.psi) ** 2 * self.dx
        return float(w[:width].sum() + w[-width:].sum())


def gaussian_profile(u):
    return np.pi ** -0.25 * np.exp(-0.5 * np.asarray(u) ** 2)


def make_coherent(grid: Grid, x0: float, p0: float, epsilon: float, beta: float = 0.5,
                  profile: Callable | None = None, margin: float = 8.0) -> GridState:
    """eps^{-beta/2} h((x - x0) / eps^beta) exp(i x p0 / eps), normalized on the grid."""
    if not epsilon > 0:
        raise InvalidParameterError(f"epsilon must be positive, got {epsilon}")
    h = gaussian_profile if profile is None else profile
    width = epsilon ** beta
    if not (grid.x_lo + margin * width <= x0 <= grid.x_hi - margin * width):
        raise ConfigError(
            f"coherent state at x0={x0} needs {margin} widths ({margin * width:.3g}) of grid margin "
            f"inside [{grid.x_lo}, {grid.x_hi})")
    x = grid.x
    psi = epsilon ** (-beta / 2) * h((x - x0) / width) * np.exp(1j * x * p0 / epsilon)
    return GridState(psi, grid, epsilon).normalized()


def _check_boundary(state: GridState):
    mass = state.boundary_mass()
    if mass > BOUNDARY_MASS_TOL:
        raise BoundaryError(f"wavepacket mass {mass:.2e} within 4 grid points of the boundary",
                            boundary_mass=mass)


def _drift(psi_k, k, eps, t):
    return psi_k * np.exp(-0.5j * t * eps * k ** 2)


def _harmonic_substeps(theta: float) -> int:
    return max(1, int(np.ceil(abs(theta) / (np.pi / 4))))


def _harmonic_evolve(psi, grid, eps, w, tau, m):
    """m kick-drift-kick sub-steps, each exactly the rotation by w * tau / m."""
    th = w * tau / m
    a = -w * np.tan(th / 2)
    b = np.sin(th) / w
    half_kick = np.exp(0.5j * a * grid.x ** 2 / eps)
    drift = np.exp(-0.5j * b * eps * grid.k ** 2)
    for _ in range(m):
        psi = np.fft.ifft(drift * np.fft.fft(half_kick * psi)) * half_kick
    return psi


def evolve_grid(state: GridState, dyn, steps: int = 1, verify: bool = False) -> GridState:
    """Apply exp(-i tau H / eps) ``steps`` times for 1-D free or harmonic dynamics.

    With ``verify`` the harmonic result is compared against a run with twice as
    many sub-steps and a ``QuadratureError`` is raised if they differ by more
    than 1e-8 in L2.
    """
    if steps < 0:
        raise InvalidParameterError("steps must be non-negative")
    if dyn.d != 1:
        raise UnsupportedBackendError("the grid backend supports one-dimensional dynamics only")
    if steps == 0:
        return state
    grid, eps = state.grid, state.epsilon
    before, _ = state.moments()
    if isinstance(dyn, Free):
        psi = np.fft.ifft(_drift(np.fft.fft(state.psi), grid.k, eps, steps * dyn.tau_over_m))
    elif isinstance(dyn, Harmonic):
        w = float(np.sqrt(dyn.O[0, 0]))
        if w == 0.0:
            psi = np.fft.ifft(_drift(np.fft.fft(state.psi), grid.k, eps, steps * dyn.tau))
        else:
            total = steps * dyn.tau
            m = _harmonic_substeps(w * total)
            psi = _harmonic_evolve(state.psi, grid, eps, w, total, m)
            if verify:
                fine = _harmonic_evolve(state.psi, grid, eps, w, total, 2 * m)
                diff = np.sqrt(np.sum(np.abs(psi - fine) ** 2) * grid.dx)
                if diff > CONVERGENCE_TOL:
                    raise QuadratureError("harmonic sub-stepping not converged", l2_difference=diff)
    else:
        raise UnsupportedBackendError(f"grid backend cannot evolve {type(dyn).__name__} dynamics")
    out = GridState(psi, grid, eps)
    _check_boundary(out)
    # quadratic dynamics move the mean exactly along the classical map; a
    # mismatch means the packet wrapped around the periodic grid
    expected = dyn.symplectic_map().power(steps).matrix @ before
    after, _ = out.moments()
    if abs(after[0] - expected[0]) > max(1e-6, 0.5 * grid.dx) * (1 + abs(expected[0])):
        raise BoundaryError("wavepacket wrapped around the periodic grid",
                            expected_mean=expected[0], mean=after[0])
    return out


def _require_1d(kernel: NoiseKernel):
    if kernel.d != 1:
        raise UnsupportedBackendError("the grid backend needs a one-dimensional kernel")
    if isinstance(kernel, DeltaKernel):
        raise UnsupportedBackendError("the zero-width kernel has no quantum amplitude")


def outcome_density_grid(state: GridState, kernel: NoiseKernel, q) -> np.ndarray:
    """Born density Pi(q) = sum_j |g(q - x_j)|^2 |psi_j|^2 dx."""
    _require_1d(kernel)
    q = np.atleast_1d(np.asarray(q, dtype=float))
    w = np.abs(state.psi) ** 2 * state.dx
    dens = kernel.density(q[:, None, None] - state.x[None, :, None])
    return dens @ w


def condition_grid(state: GridState, kernel: NoiseKernel, q: float) -> tuple[GridState, float]:
    """Kraus update psi_j -> g(q - x_j) psi_j, renormalized; returns log Pi(q)."""
    _require_1d(kernel)
    amp = kernel.amplitude((q - state.x)[:, None])
    psi = amp * state.psi
    mass = float(np.sum(np.abs(psi) ** 2) * state.dx)
    if not mass > 0:
        raise QuadratureError(f"outcome q={q} has zero Born density on the grid", q=q)
    return GridState(psi / np.sqrt(mass), state.grid, state.epsilon), float(np.log(mass))


def measure_grid(state: GridState, kernel: NoiseKernel, rng) -> tuple[float, GridState, float]:
    """Sample q from the Born density, then apply the Kraus update.

    Pi is a mixture of kernel bumps centred on the grid points with weights
    |psi_j|^2 dx, so q is drawn exactly by picking a grid point and adding
    kernel noise.
    """
    _require_1d(kernel)
    w = np.abs(state.psi) ** 2 * state.dx
    total = w.sum()
    if abs(total - 1.0) > MASS_DEFECT_TOL:
        raise QuadratureError(f"Born weights sum to {total:.9f}", mass=total)
    cdf = np.cumsum(w)
    j = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), state.grid.n - 1)
    q = float(state.x[j] + kernel.sample(rng)[0])
    new, logd = condition_grid(state, kernel, q)
    return q, new, logd


# -- Gaussian backend ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GaussianState:
    """Pure Gaussian state: phase-space mean and Wigner covariance."""

    mean: np.ndarray
    cov: np.ndarray
    epsilon: float

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        cov = np.asarray(self.cov, dtype=float)
        if mean.shape[0] % 2 or cov.shape != (mean.shape[0],) * 2:
            raise InvalidParameterError("mean must have length 2d and cov shape (2d, 2d)")
        if not self.epsilon > 0:
            raise InvalidParameterError(f"epsilon must be positive, got {self.epsilon}")
        if np.max(np.abs(cov - cov.T)) > 1e-10 * max(1.0, np.abs(cov).max()):
            raise InvalidParameterError("covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))

    @property
    def d(self) -> int:
        return self.mean.shape[0] // 2

    def uncertainty_residual(self) -> float:
        """Smallest eigenvalue of cov + i (eps / 2) Omega; >= 0 for physical states."""
        herm = self.cov + 0.5j * self.epsilon * omega(self.d)
        return float(np.linalg.eigvalsh(herm).min())

    def is_physical(self, tol: float = 1e-10) -> bool:
        return self.uncertainty_residual() >= -tol * max(1.0, self.epsilon)


def coherent_gaussian(x0, p0, epsilon: float, beta: float = 0.5) -> GaussianState:
    """Gaussian counterpart of ``make_coherent`` with a Gaussian profile."""
    x0, p0 = np.atleast_1d(np.asarray(x0, float)), np.atleast_1d(np.asarray(p0, float))
    d = x0.shape[0]
    vx = 0.5 * epsilon ** (2 * beta)
    vp = 0.5 * epsilon ** (2 - 2 * beta)
    cov = np.diag(np.concatenate([np.full(d, vx), np.full(d, vp)]))
    return GaussianState(np.concatenate([x0, p0]), cov, epsilon)


def evolve_gaussian(state: GaussianState, J: SymplecticMap) -> GaussianState:
    m = J.matrix
    if m.shape[0] != state.mean.shape[0]:
        raise InvalidParameterError("map and state dimensions differ")
    return GaussianState(m @ state.mean, m @ state.cov @ m.T, state.epsilon)


def _require_gaussian(kernel):
    if not isinstance(kernel, GaussianKernel):
        raise UnsupportedBackendError("the Gaussian backend needs a Gaussian kernel")


def outcome_law_gaussian(state: GaussianState, kernel: GaussianKernel) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the (normal) Born law of the next outcome."""
    _require_gaussian(kernel)
    d = state.d
    return state.mean[:d].copy(), state.cov[:d, :d] + kernel.sigma


def condition_gaussian(state: GaussianState, kernel: GaussianKernel, q) -> tuple[GaussianState, float]:
    """Kraus update by a Gaussian amplitude.

    Multiplying psi by g(q - x) multiplies the Wigner function by |g(q - x)|^2
    (a Bayesian position update) and convolves it in momentum with a normal
    law of covariance (eps^2 / 4) sigma^{-1}.
    """
    _require_gaussian(kernel)
    d = state.d
    q = np.atleast_1d(np.asarray(q, dtype=float))
    mu, S = outcome_law_gaussian(state, kernel)
    C = state.cov
    gain = np.linalg.solve(S, C[:d, :]).T          # C H^t S^{-1}
    mean = state.mean + gain @ (q - mu)
    cov = C - gain @ C[:d, :]
    cov[d:, d:] += 0.25 * state.epsilon ** 2 * np.linalg.inv(kernel.sigma)
    r = q - mu
    _, logdet = np.linalg.slogdet(S)
    logd = -0.5 * (d * np.log(2 * np.pi) + logdet + r @ np.linalg.solve(S, r))
    return GaussianState(mean, cov, state.epsilon), float(logd)


def measure_gaussian(state: GaussianState, kernel: GaussianKernel, rng):
    mu, S = outcome_law_gaussian(state, kernel)
    q = mu + np.linalg.cholesky(S) @ rng.standard_normal(state.d)
    new, logd = condition_gaussian(state, kernel, q)
    return q, new, logd


def gaussian_record_law(state: GaussianState, J: SymplecticMap, kernel: GaussianKernel, n: int
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Exact joint normal law of the flattened record (q_0, ..., q_n).

    The Gaussian chain has the same conditionals as a linear model in which
    xi_k is observed with kernel noise and, after each observation, momentum
    receives independent noise of covariance (eps^2 / 4) sigma^{-1} before
    evolving by J. The record is a linear image of the independent inputs.
    """
    _require_gaussian(kernel)
    d = state.d
    if J.d != d:
        raise InvalidParameterError("map and state dimensions differ")
    kick = 0.25 * state.epsilon ** 2 * np.linalg.inv(kernel.sigma)
    blocks = [np.linalg.cholesky(state.cov)]
    for _ in range(n + 1):
        blocks += [np.linalg.cholesky(kernel.sigma), np.linalg.cholesky(kick)]
    width = sum(b.shape[1] for b in blocks)
    load = np.zeros((2 * d, width))          # xi_k = mean_k + load @ z
    load[:, : 2 * d] = blocks[0]
    mean = state.mean.copy()
    q_mean = np.empty((n + 1, d))
    q_load = np.zeros((n + 1, d, width))
    col = 2 * d
    for k in range(n + 1):
        q_mean[k] = mean[:d]
        q_load[k] = load[:d]
        q_load[k][:, col: col + d] += blocks[1 + 2 * k]
        col += d
        load[d:, col: col + d] += blocks[2 + 2 * k]
        col += d
        load = J.matrix @ load
        mean = J.matrix @ mean
    L = q_load.reshape((n + 1) * d, width)
    return q_mean.ravel(), L @ L.T


# -- chains -------------------------------------------------------------------

QuantumState = Union[GridState, GaussianState]


@dataclass(frozen=True, eq=False)
class KrausChainResult:
    record: MeasurementRecord
    final_state: QuantumState
    log_likelihood: float


def _backend_ops(state, dyn):
    if isinstance(state, GridState):
        return condition_grid, measure_grid, (lambda s: evolve_grid(s, dyn))
    if isinstance(state, GaussianState):
        J = dyn if isinstance(dyn, SymplecticMap) else dyn.symplectic_map()
        if J.d != state.d:
            raise InvalidParameterError("dynamics and state dimensions differ")
        return condition_gaussian, measure_gaussian, (lambda s: evolve_gaussian(s, J))
    raise UnsupportedBackendError(f"no backend for state type {type(state).__name__}")


def run_chain(state: QuantumState, dyn, kernel: NoiseKernel, n: int, rng,
              metadata: dict | None = None) -> KrausChainResult:
    """n + 1 measurements, each followed by one period of evolution."""
    if n < 0:
        raise InvalidParameterError("n must be non-negative")
    _, measure, evolve = _backend_ops(state, dyn)
    outcomes, loglik = [], 0.0
    for _ in range(n + 1):
        q, state, logd = measure(state, kernel, rng)
        state = evolve(state)
        outcomes.append(np.atleast_1d(q))
        loglik += logd
    return KrausChainResult(MeasurementRecord(np.array(outcomes), dict(metadata or {})), state, loglik)


def chain_log_likelihood(state: QuantumState, dyn, kernel: NoiseKernel, outcomes) -> tuple[float, QuantumState]:
    """log of tr[Phi_{q_n} ... Phi_{q_0}(rho_0)] for given outcomes, and the final state."""
    condition, _, evolve = _backend_ops(state, dyn)
    q = outcomes.outcomes if isinstance(outcomes, MeasurementRecord) else np.asarray(outcomes, float)
    if q.ndim == 1:
        q = q[:, None]
    loglik = 0.0
    for qk in q:
        state, logd = condition(state, kernel, qk if isinstance(state, GaussianState) else float(qk[0]))
        state = evolve(state)
        loglik += logd
    return loglik, state


def kraus_weight(state: QuantumState, dyn, kernel: NoiseKernel, q) -> float:
    """tr[Phi*_q(rho)]: norm of the evolved, amplitude-multiplied state."""
    if isinstance(state, GridState):
        _require_1d(kernel)
        psi = kernel.amplitude((float(q) - state.x)[:, None]) * state.psi
        evolved = evolve_grid(GridState(psi, state.grid, state.epsilon), dyn)
        return float(np.sum(np.abs(evolved.psi) ** 2) * state.dx)
    mu, S = outcome_law_gaussian(state, kernel)
    r = np.atleast_1d(q) - mu
    d = state.d
    return float(np.exp(-0.5 * r @ np.linalg.solve(S, r)) / np.sqrt((2 * np.pi) ** d * np.linalg.det(S)))
