"""Phase space, the standard symplectic form and time-step maps of quadratic dynamics.

Momenta are velocity-scaled throughout (p stands for p/m), so mass only enters
through ``tau_over_m`` for free motion and through ``beta = B/m`` in a magnetic
field.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import InvalidParameterError, NumericError

SYMPLECTIC_TOL = 1e-12
SPECTRUM_TOL = 1e-9
PSD_TOL = 1e-12
_SINC_SERIES_CUTOFF = 1e-4


def omega(d: int) -> np.ndarray:
    """Standard form ``[[0, -1], [1, 0]]`` in d x d blocks."""
    if d < 1:
        raise InvalidParameterError(f"dimension must be >= 1, got {d}")
    eye = np.eye(d)
    zero = np.zeros((d, d))
    return np.block([[zero, -eye], [eye, zero]])


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        x = _readonly(np.atleast_1d(self.x))
        p = _readonly(np.atleast_1d(self.p))
        if x.ndim != 1 or x.shape != p.shape:
            raise InvalidParameterError(
                f"x and p must be vectors of equal length, got {x.shape} and {p.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
            raise InvalidParameterError("phase point components must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    @property
    def d(self) -> int:
        return self.x.shape[0]

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.p])

    @classmethod
    def from_vector(cls, v) -> "PhasePoint":
        v = np.asarray(v, dtype=float)
        if v.ndim != 1 or v.shape[0] % 2:
            raise InvalidParameterError(f"phase vector must have even length, got {v.shape}")
        d = v.shape[0] // 2
        return cls(v[:d], v[d:])

    def __iter__(self):
        yield self.x
        yield self.p


def as_vector(xi) -> np.ndarray:
    if isinstance(xi, PhasePoint):
        return xi.vector
    return np.asarray(xi, dtype=float)


@dataclass(frozen=True)
class SymplecticMap:
    """Linear time-step map ``xi -> J xi`` on R^d x R^d."""

    matrix: np.ndarray

    def __post_init__(self):
        m = _readonly(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 2:
            raise InvalidParameterError(f"J must be square with even size, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    @property
    def d(self) -> int:
        return self.matrix.shape[0] // 2

    @property
    def xx(self) -> np.ndarray:
        return self.matrix[: self.d, : self.d]

    @property
    def xp(self) -> np.ndarray:
        return self.matrix[: self.d, self.d:]

    @property
    def px(self) -> np.ndarray:
        return self.matrix[self.d:, : self.d]

    @property
    def pp(self) -> np.ndarray:
        return self.matrix[self.d:, self.d:]

    def __matmul__(self, other: "SymplecticMap") -> "SymplecticMap":
        return SymplecticMap(self.matrix @ other.matrix)

    def power(self, n: int) -> "SymplecticMap":
        return SymplecticMap(np.linalg.matrix_power(self.matrix, n))

    def inverse(self) -> "SymplecticMap":
        # J^{-1} = Omega^{-1} J^t Omega for symplectic J
        om = omega(self.d)
        return SymplecticMap(-om @ self.matrix.T @ om)

    @classmethod
    def identity(cls, d: int) -> "SymplecticMap":
        return cls(np.eye(2 * d))


def build_free_map(d: int, tau_over_m: float) -> SymplecticMap:
    if d < 1:
        raise InvalidParameterError(f"dimension must be >= 1, got {d}")
    if not tau_over_m > 0:
        raise InvalidParameterError(f"tau_over_m must be positive, got {tau_over_m}")
    eye = np.eye(d)
    return SymplecticMap(np.block([[eye, tau_over_m * eye], [np.zeros((d, d)), eye]]))


def _check_psd(O) -> tuple[np.ndarray, np.ndarray]:
    O = np.atleast_2d(np.asarray(O, dtype=float))
    if O.shape[0] != O.shape[1]:
        raise InvalidParameterError(f"O must be square, got {O.shape}")
    if np.max(np.abs(O - O.T), initial=0.0) > PSD_TOL:
        raise InvalidParameterError("O must be symmetric")
    lam, vec = np.linalg.eigh(0.5 * (O + O.T))
    if lam.min() < -PSD_TOL:
        raise InvalidParameterError(f"O must be positive semidefinite, min eigenvalue {lam.min():.3e}")
    return np.clip(lam, 0.0, None), vec


def _tau_sinc(w: np.ndarray, tau: float) -> np.ndarray:
    """tau * sin(w tau) / (w tau), series below the cutoff."""
    z = w * tau
    out = np.empty_like(z)
    small = np.abs(z) < _SINC_SERIES_CUTOFF
    out[small] = 1.0 - z[small] ** 2 / 6.0 + z[small] ** 4 / 120.0
    out[~small] = np.sin(z[~small]) / z[~small]
    return tau * out


def build_harmonic_map(O, tau: float) -> SymplecticMap:
    """Time-tau map of h = (|p|^2 + x^t O x) / 2, via the eigendecomposition of O."""
    if not tau > 0:
        raise InvalidParameterError(f"tau must be positive, got {tau}")
    lam, V = _check_psd(O)
    w = np.sqrt(lam)
    c = V @ np.diag(np.cos(w * tau)) @ V.T
    s = V @ np.diag(_tau_sinc(w, tau)) @ V.T
    ws = V @ np.diag(-w * np.sin(w * tau)) @ V.T
    return SymplecticMap(np.block([[c, s], [ws, c]]))


def magnetic_normal_form(beta: float, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """The rotation ``G`` and change of variables ``P`` with ``J = P^{-1} G P``.

    Coordinates are ordered (x1, x2, x3, p1, p2, p3); the field points along x3.
    """
    c, s = np.cos(2 * beta * tau), np.sin(2 * beta * tau)
    G = np.array([
        [c, 0, 0, s, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 1, 0, 0, tau],
        [-s, 0, 0, c, 0, 0],
        [0, 0, 0, 0, 1, 0],
        [0, 0, 0, 0, 0, 1],
    ], dtype=float)
    rb, ib = np.sqrt(beta), 1.0 / np.sqrt(beta)
    r2 = np.sqrt(2.0)
    P = np.array([
        [rb, 0, 0, 0, ib, 0],
        [0, rb, 0, ib, 0, 0],
        [0, 0, r2, 0, 0, 0],
        [0, -rb, 0, ib, 0, 0],
        [-rb, 0, 0, 0, ib, 0],
        [0, 0, 0, 0, 0, r2],
    ]) / r2
    return G, P


def build_magnetic_map(beta: float, tau: float) -> SymplecticMap:
    if not beta > 0:
        raise InvalidParameterError(f"beta must be positive, got {beta}")
    if not tau > 0:
        raise InvalidParameterError(f"tau must be positive, got {tau}")
    G, P = magnetic_normal_form(beta, tau)
    return SymplecticMap(np.linalg.solve(P, G @ P))


def apply(J: SymplecticMap, xi) -> PhasePoint:
    v = as_vector(xi)
    if v.shape != (J.matrix.shape[0],):
        raise InvalidParameterError(
            f"phase point of length {v.shape} does not match map of size {J.matrix.shape}")
    return PhasePoint.from_vector(J.matrix @ v)


def _matrix(J) -> np.ndarray:
    return J.matrix if isinstance(J, SymplecticMap) else np.asarray(J, dtype=float)


def check_symplectic(J, tol: float = SYMPLECTIC_TOL) -> tuple[bool, float]:
    """Return ``(||J^t Omega J - Omega||_max <= tol, residual)``."""
    m = _matrix(J)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 2:
        return False, float("inf")
    om = omega(m.shape[0] // 2)
    residual = float(np.max(np.abs(m.T @ om @ m - om)))
    return residual <= tol, residual


def spectrum_on_unit_circle(J, tol: float = SPECTRUM_TOL) -> bool:
    m = _matrix(J)
    try:
        ev = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise NumericError("eigenvalue solver failed", matrix=m) from exc
    return bool(np.all(np.abs(np.abs(ev) - 1.0) <= tol))


def jxp_invertible(J, tol: float = 1e-10) -> tuple[bool, float]:
    """Whether the upper-right block is invertible, with its 2-norm condition number.

    The block counts as singular when its smallest singular value is below
    ``tol`` times the 2-norm of the whole map.
    """
    m = _matrix(J)
    d = m.shape[0] // 2
    sv = np.linalg.svd(m[:d, d:], compute_uv=False)
    scale = np.linalg.norm(m, 2)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    return bool(sv[-1] > tol * scale), cond


# -- dynamics parameters -----------------------------------------------------

@dataclass(frozen=True)
class Free:
    tau_over_m: float
    d: int = 1

    def __post_init__(self):
        if not self.tau_over_m > 0:
            raise InvalidParameterError(f"tau_over_m must be positive, got {self.tau_over_m}")
        if self.d < 1:
            raise InvalidParameterError(f"dimension must be >= 1, got {self.d}")

    @property
    def tau(self) -> float:
        return self.tau_over_m

    def symplectic_map(self) -> SymplecticMap:
        return build_free_map(self.d, self.tau_over_m)

    def hamiltonian(self, xi) -> float:
        v = as_vector(xi)
        p = v[self.d:]
        return 0.5 * float(p @ p)


@dataclass(frozen=True)
class Harmonic:
    O: np.ndarray
    tau: float

    def __post_init__(self):
        O = np.atleast_2d(np.asarray(self.O, dtype=float))
        _check_psd(O)
        if not self.tau > 0:
            raise InvalidParameterError(f"tau must be positive, got {self.tau}")
        object.__setattr__(self, "O", _readonly(0.5 * (O + O.T)))

    @classmethod
    def isotropic(cls, omega_: float, tau: float, d: int = 1) -> "Harmonic":
        return cls(omega_ ** 2 * np.eye(d), tau)

    @property
    def d(self) -> int:
        return self.O.shape[0]

    def symplectic_map(self) -> SymplecticMap:
        return build_harmonic_map(self.O, self.tau)

    def hamiltonian(self, xi) -> float:
        v = as_vector(xi)
        x, p = v[: self.d], v[self.d:]
        return 0.5 * float(p @ p + x @ self.O @ x)


@dataclass(frozen=True)
class Magnetic:
    beta: float
    tau: float

    def __post_init__(self):
        if not self.beta > 0:
            raise InvalidParameterError(f"beta must be positive, got {self.beta}")
        if not self.tau > 0:
            raise InvalidParameterError(f"tau must be positive, got {self.tau}")

    d = 3

    def symplectic_map(self) -> SymplecticMap:
        return build_magnetic_map(self.beta, self.tau)

    def hamiltonian(self, xi) -> float:
        x1, x2, _, p1, p2, p3 = as_vector(xi)
        b = self.beta
        return 0.5 * ((p1 - b * x2) ** 2 + (p2 + b * x1) ** 2 + p3 ** 2)


Dynamics = Union[Free, Harmonic, Magnetic]


def symplectic_map(dyn: Dynamics) -> SymplecticMap:
    return dyn.symplectic_map()
