"""Reconstruction of the initial phase-space point from a position record.

Two estimators are provided: the two-stage free-particle estimator (momentum
from the end-to-end slope, then position from a short window) and the linear
least-squares fit of a deterministic orbit to the record.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg

from .classical import MeasurementRecord
from .errors import InvalidParameterError, SingularDesignError
from .phasespace import PhasePoint, SymplecticMap, check_symplectic, jxp_invertible, spectrum_on_unit_circle

SINGULAR_RTOL = 1e-10


def _outcomes(record) -> np.ndarray:
    if isinstance(record, MeasurementRecord):
        return record.outcomes
    q = np.asarray(record, dtype=float)
    return q[:, None] if q.ndim == 1 else q


# -- free particle ------------------------------------------------------------

def free_momentum_estimate(record, n: int, tau_over_m: float = 1.0) -> np.ndarray:
    """(Q_n - Q_0) / (n tau/m)."""
    q = _outcomes(record)
    if n < 1:
        raise InvalidParameterError(f"n must be at least 1, got {n}")
    if q.shape[0] < n + 1:
        raise InvalidParameterError(f"record has {q.shape[0]} outcomes, need {n + 1}")
    return (q[n] - q[0]) / (n * tau_over_m)


def default_window(n: int) -> int:
    return math.isqrt(n - 1) + 1 if n > 0 else 0   # ceil(sqrt(n))


def free_position_estimate(record, n: int, window: int | None = None,
                           tau_over_m: float = 1.0) -> np.ndarray:
    """Mean of Q_k - k tau/m p_n over k = 0..N, with p_n the momentum estimate at n.

    The window ``N`` defaults to ceil(sqrt(n)). The average runs over its N + 1
    terms.
    """
    q = _outcomes(record)
    N = default_window(n) if window is None else int(window)
    if N < 0 or N > n:
        raise InvalidParameterError(f"window must satisfy 0 <= N <= n, got N={N}, n={n}")
    p = free_momentum_estimate(q, n, tau_over_m)
    k = np.arange(N + 1)[:, None]
    return np.mean(q[: N + 1] - k * tau_over_m * p, axis=0)


# -- least squares ------------------------------------------------------------

@dataclass(frozen=True)
class Design:
    """Stacked blocks ``M J^{2k}`` (k = 0..n) mapping xi_0 to (x_{2k}, x_{2k+1})."""

    M: np.ndarray
    blocks: np.ndarray          # (n + 1, 2d, 2d)
    normal: np.ndarray          # sum_k (M J^{2k})^t M J^{2k}
    gram: np.ndarray            # sum_k (J^{2k})^t J^{2k}
    m_singular: bool

    @property
    def stacked(self) -> np.ndarray:
        return self.blocks.reshape(-1, self.blocks.shape[-1])


def build_design(J: SymplecticMap, n: int) -> Design:
    if n < 0:
        raise InvalidParameterError(f"n must be non-negative, got {n}")
    d = J.d
    M = np.block([[np.eye(d), np.zeros((d, d))], [J.xx, J.xp]])
    J2 = J.matrix @ J.matrix
    P = np.eye(2 * d)
    blocks = np.empty((n + 1, 2 * d, 2 * d))
    gram = np.zeros((2 * d, 2 * d))
    for k in range(n + 1):
        blocks[k] = M @ P
        gram += P.T @ P
        P = J2 @ P
    normal = np.einsum("kij,kil->jl", blocks, blocks)
    ok, _ = jxp_invertible(J)
    return Design(M, blocks, normal, gram, m_singular=not ok)


@dataclass(frozen=True)
class EstimatorDiagnostics:
    sigma_n_min_eig: float
    condition: float
    n_used: int


def least_squares_estimate(J: SymplecticMap, record, n: int | None = None
                           ) -> tuple[PhasePoint, EstimatorDiagnostics]:
    """Least-squares fit of an orbit of J to outcomes Q_0..Q_{2n+1}.

    ``n`` counts outcome pairs beyond the first; by default all complete pairs
    are used and an unpaired trailing outcome is dropped with a warning.
    """
    q = _outcomes(record)
    d = J.d
    if q.shape[1] != d:
        raise InvalidParameterError(f"record dimension {q.shape[1]} does not match map dimension {d}")
    ok, residual = check_symplectic(J, tol=1e-8)
    if not ok:
        raise InvalidParameterError(f"map is not symplectic (residual {residual:.2e})")
    if n is None:
        if q.shape[0] % 2:
            warnings.warn("odd record length; dropping the last outcome", RuntimeWarning, stacklevel=2)
        n = q.shape[0] // 2 - 1
    if n < 0 or q.shape[0] < 2 * n + 2:
        raise InvalidParameterError(f"need {2 * n + 2} outcomes for n={n}, record has {q.shape[0]}")

    if not spectrum_on_unit_circle(J):
        warnings.warn("map spectrum is not on the unit circle", RuntimeWarning, stacklevel=2)
    if not jxp_invertible(J)[0]:
        warnings.warn("position-momentum block of the map is singular", RuntimeWarning, stacklevel=2)

    design, eig, Q, R, piv = _factorized(J.matrix.tobytes(), 2 * d, n)
    if eig[0] <= SINGULAR_RTOL * eig[-1]:
        raise SingularDesignError("normal-equations matrix is numerically singular",
                                  min_eig=float(eig[0]), max_eig=float(eig[-1]), n=n)
    target = q[: 2 * n + 2].reshape(-1)
    if n == 0:
        # square design: the orbit interpolates the record, solve it directly
        xi = linalg.solve(design.stacked, target)
    else:
        xi = np.empty(2 * d)
        xi[piv] = linalg.solve_triangular(R, Q.T @ target)
    diag = EstimatorDiagnostics(sigma_n_min_eig=float(eig[0]),
                                condition=float(eig[-1] / eig[0]), n_used=n)
    return PhasePoint.from_vector(xi), diag


@lru_cache(maxsize=64)
def _factorized(matrix_bytes: bytes, size: int, n: int):
    """Design, normal-matrix spectrum and pivoted QR of the stacked design, cached per (J, n)."""
    J = SymplecticMap(np.frombuffer(matrix_bytes).reshape(size, size))
    design = build_design(J, n)
    eig = np.linalg.eigvalsh(design.normal)
    Q, R, piv = linalg.qr(design.stacked, mode="economic", pivoting=True)
    return design, eig, Q, R, piv
