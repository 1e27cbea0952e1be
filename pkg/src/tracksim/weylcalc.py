"""Weyl quantization of symbols given by finite sums of plane waves.

A symbol is ``a(xi) = sum_i c_i exp(i zeta_i^t Omega xi)``; its quantization
is ``sum_i c_i W(zeta_i)`` with Weyl operators ``W(zeta) = exp(i zeta^t Omega xi_hat)``.
For zeta = (zx, zp) in one dimension,

    W(zeta) psi(x) = exp(-i eps zp zx / 2) exp(i zp x) psi(x - eps zx),

which gives ``W(z1) W(z2) = exp(+i eps/2 z1^t Omega z2) W(z1 + z2)``. The star
product carries the same phase so that ``Op(a) Op(b) = Op(a * b)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import BoundaryError, InvalidParameterError
from .phasespace import SymplecticMap, check_symplectic, omega
from .quantum import Grid, GridState, evolve_grid

MERGE_TOL = 1e-12
PROBE_BOUNDARY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class AtomicSymbol:
    """Weights ``c`` (m,) and frequencies ``zeta`` (m, 2d)."""

    c: np.ndarray
    zeta: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=complex).ravel()
        z = np.array(self.zeta, dtype=float)
        if z.ndim == 1:
            z = z[None, :]
        if z.ndim != 2 or z.shape[0] != c.shape[0] or z.shape[1] % 2 or z.shape[1] == 0:
            raise InvalidParameterError(f"need (m,) weights and (m, 2d) frequencies, got {c.shape}, {z.shape}")
        c.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "zeta", z)

    @classmethod
    def zero(cls, d: int = 1) -> "AtomicSymbol":
        return cls(np.zeros(0, complex), np.zeros((0, 2 * d)))

    @classmethod
    def constant(cls, value: complex = 1.0, d: int = 1) -> "AtomicSymbol":
        return cls([value], np.zeros((1, 2 * d)))

    @classmethod
    def random(cls, rng, m: int = 3, d: int = 1, scale: float = 1.0, real: bool = False) -> "AtomicSymbol":
        c = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        z = scale * rng.standard_normal((m, 2 * d))
        a = cls(c / m, z)
        return a.real_part() if real else a

    @property
    def d(self) -> int:
        return self.zeta.shape[1] // 2

    def __len__(self):
        return self.c.shape[0]

    def evaluate(self, xi) -> np.ndarray:
        """a(xi) for xi of shape (..., 2d)."""
        xi = np.asarray(xi, dtype=float)
        phase = np.einsum("mi,ij,...j->...m", self.zeta, omega(self.d), xi)
        return np.exp(1j * phase) @ self.c

    def conj(self) -> "AtomicSymbol":
        return AtomicSymbol(np.conj(self.c), -self.zeta)

    def real_part(self) -> "AtomicSymbol":
        return (0.5 * (self + self.conj())).merged()

    def is_real(self, tol: float = 1e-12) -> bool:
        return tv_distance(self, self.conj()) <= tol

    def __add__(self, other: "AtomicSymbol") -> "AtomicSymbol":
        _same_dim(self, other)
        return AtomicSymbol(np.concatenate([self.c, other.c]), np.vstack([self.zeta, other.zeta]))

    def __sub__(self, other: "AtomicSymbol") -> "AtomicSymbol":
        return self + (-1.0) * other

    def __mul__(self, scalar) -> "AtomicSymbol":
        return AtomicSymbol(scalar * self.c, self.zeta)

    __rmul__ = __mul__

    def merged(self, tol: float = MERGE_TOL) -> "AtomicSymbol":
        """Combine atoms whose frequencies lie within ``tol``; drop exact zeros."""
        m = len(self)
        if m == 0:
            return self
        order = np.lexsort(self.zeta.T[::-1])
        z, c = self.zeta[order], self.c[order]
        taken = np.zeros(m, bool)
        out_c, out_z = [], []
        for i in range(m):
            if taken[i]:
                continue
            near = ~taken & (np.linalg.norm(z - z[i], axis=1) <= tol)
            taken |= near
            w = c[near].sum()
            if w != 0:
                out_c.append(w)
                out_z.append(z[i])
        if not out_c:
            return AtomicSymbol.zero(self.d)
        return AtomicSymbol(np.array(out_c), np.array(out_z))

    def to_json(self) -> str:
        atoms = [[float(ci.real), float(ci.imag), *map(float, zi)] for ci, zi in zip(self.c, self.zeta)]
        return json.dumps({"d": self.d, "atoms": atoms})

    @classmethod
    def from_json(cls, text: str) -> "AtomicSymbol":
        obj = json.loads(text)
        d = int(obj["d"])
        atoms = obj["atoms"]
        if not atoms:
            return cls.zero(d)
        arr = np.asarray(atoms, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 + 2 * d:
            raise InvalidParameterError(f"each atom needs {2 + 2 * d} numbers")
        return cls(arr[:, 0] + 1j * arr[:, 1], arr[:, 2:])


def _same_dim(a: AtomicSymbol, b: AtomicSymbol):
    if a.d != b.d:
        raise InvalidParameterError(f"symbol dimensions differ: {a.d} vs {b.d}")


def tv_norm(a: AtomicSymbol, k: float = 0) -> float:
    """sum_i |c_i| (1 + |zeta_i|)^k."""
    if k < 0:
        raise InvalidParameterError(f"order k must be non-negative, got {k}")
    return float(np.sum(np.abs(a.c) * (1 + np.linalg.norm(a.zeta, axis=1)) ** k))


def tv_distance(a: AtomicSymbol, b: AtomicSymbol, k: float = 0) -> float:
    return tv_norm((a - b).merged(), k)


def symplectic_pairing(z1, z2) -> np.ndarray:
    """z1^t Omega z2, broadcasting over leading axes."""
    z1, z2 = np.asarray(z1, float), np.asarray(z2, float)
    return np.einsum("...i,ij,...j->...", z1, omega(z1.shape[-1] // 2), z2)


def _pairs(a: AtomicSymbol, b: AtomicSymbol):
    _same_dim(a, b)
    cc = np.outer(a.c, b.c)
    zz = a.zeta[:, None, :] + b.zeta[None, :, :]
    sigma = symplectic_pairing(a.zeta[:, None, :], b.zeta[None, :, :])
    return cc, zz, sigma


def star_product(a: AtomicSymbol, b: AtomicSymbol, epsilon: float) -> AtomicSymbol:
    """Symbol of Op(a) Op(b)."""
    cc, zz, sigma = _pairs(a, b)
    c = cc * np.exp(0.5j * epsilon * sigma)
    return AtomicSymbol(c.ravel(), zz.reshape(-1, 2 * a.d)).merged()


def pointwise_product(a: AtomicSymbol, b: AtomicSymbol) -> AtomicSymbol:
    cc, zz, _ = _pairs(a, b)
    return AtomicSymbol(cc.ravel(), zz.reshape(-1, 2 * a.d)).merged()


def compose_linear(a: AtomicSymbol, J: SymplecticMap) -> AtomicSymbol:
    """Symbol of xi -> a(J xi); each frequency maps to J^{-1} zeta."""
    if J.d != a.d:
        raise InvalidParameterError(f"map dimension {J.d} does not match symbol dimension {a.d}")
    ok, residual = check_symplectic(J, tol=1e-10)
    if not ok:
        raise InvalidParameterError(f"map is not symplectic (residual {residual:.2e})")
    return AtomicSymbol(a.c, a.zeta @ J.inverse().matrix.T)


# -- operators on grid states -------------------------------------------------

def _require_grid_1d(state: GridState):
    if not isinstance(state, GridState):
        raise InvalidParameterError("Weyl operators act on grid states")


def _edge_mass(psi: np.ndarray, dx: float, width: int = 4) -> float:
    """Mass within ``width`` points of the position boundary or the spectral edge."""
    pos = np.sum(np.abs(psi[:width]) ** 2) + np.sum(np.abs(psi[-width:]) ** 2)
    n = psi.shape[0]
    power = np.abs(np.fft.fft(psi)) ** 2 / n
    mid = n // 2
    power_edge = np.sum(power[mid - width: mid + width])
    return float(max(pos, power_edge) * dx)


def weyl_apply(zeta, epsilon: float, state: GridState) -> GridState:
    """Apply the unitary W(zeta) to a one-dimensional grid state."""
    _require_grid_1d(state)
    zx, zp = np.asarray(zeta, dtype=float).ravel()
    grid = state.grid
    shift = epsilon * zx
    psi = state.psi
    if shift != 0.0:
        psi = np.fft.ifft(np.fft.fft(psi) * np.exp(-1j * grid.k * shift))
    psi = np.exp(-0.5j * epsilon * zp * zx) * np.exp(1j * zp * grid.x) * psi
    out = GridState(psi, grid, state.epsilon)
    mass = _edge_mass(psi, grid.dx)
    if mass > PROBE_BOUNDARY_TOL * max(1.0, state.norm() ** 2):
        raise BoundaryError(f"W({zx:g}, {zp:g}) pushes mass {mass:.2e} onto the grid edge",
                            edge_mass=mass, zeta=(zx, zp))
    return out


def op_apply(a: AtomicSymbol, epsilon: float, state: GridState) -> GridState:
    """Op_eps(a) psi = sum_i c_i W(zeta_i) psi."""
    _require_grid_1d(state)
    if a.d != 1:
        raise InvalidParameterError("grid states are one-dimensional")
    psi = np.zeros_like(state.psi)
    for c, z in zip(a.c, a.zeta):
        psi = psi + c * weyl_apply(z, epsilon, state).psi
    return GridState(psi, state.grid, state.epsilon)


def _l2(u: GridState, v: GridState) -> float:
    return float(np.sqrt(np.sum(np.abs(u.psi - v.psi) ** 2) * u.dx))


def evolve_back(state: GridState, dyn) -> GridState:
    """U^{-1} psi via time reversal, conj(U conj(psi)); valid for real Hamiltonians."""
    flipped = GridState(np.conj(state.psi), state.grid, state.epsilon)
    out = evolve_grid(flipped, dyn)
    return GridState(np.conj(out.psi), state.grid, state.epsilon)


def probe_states(grid: Grid, epsilon: float, count: int = 32, seed: int = 0,
                 center_span: float = 0.25, momentum_span: float = 1.0) -> list[GridState]:
    """Seeded Gaussian wavepackets with random centres and widths.

    Centres are drawn from the middle ``center_span`` fraction of the grid and
    widths from [0.5, 2] sqrt(eps).
    """
    rng = np.random.default_rng(seed)
    mid = 0.5 * (grid.x_lo + grid.x_hi)
    half = 0.5 * center_span * grid.length
    out = []
    for _ in range(count):
        x0 = rng.uniform(mid - half, mid + half)
        p0 = rng.uniform(-momentum_span, momentum_span)
        width = np.sqrt(epsilon) * rng.uniform(0.5, 2.0)
        psi = np.exp(-0.5 * ((grid.x - x0) / width) ** 2 + 1j * p0 * grid.x / epsilon)
        st = GridState(psi, grid, epsilon).normalized()
        if _edge_mass(st.psi, grid.dx) > PROBE_BOUNDARY_TOL:
            raise BoundaryError("probe state is not resolved by the grid", x0=x0, p0=p0, width=width)
        out.append(st)
    return out


def weyl_relation_residual(z1, z2, epsilon: float, probes) -> float:
    """max over probes of ||W(z1) W(z2) psi - exp(i eps/2 z1^t Omega z2) W(z1 + z2) psi||."""
    z1, z2 = np.asarray(z1, float), np.asarray(z2, float)
    phase = np.exp(0.5j * epsilon * symplectic_pairing(z1, z2))
    worst = 0.0
    for psi in probes:
        lhs = weyl_apply(z1, epsilon, weyl_apply(z2, epsilon, psi))
        rhs = weyl_apply(z1 + z2, epsilon, psi)
        worst = max(worst, _l2(lhs, GridState(phase * rhs.psi, rhs.grid, rhs.epsilon)))
    return worst


def classical_limit_residual(a: AtomicSymbol, b: AtomicSymbol, epsilon: float, probes
                             ) -> tuple[float, float]:
    """Bracket ||Op(a) Op(b) - Op(a b)|| from below (probes) and above (analytic).

    The upper bound is sum_ij |c_i| |d_j| |exp(i eps/2 zeta_i^t Omega zeta_j) - 1|.
    """
    if len(probes) == 0:
        raise InvalidParameterError("need at least one probe state")
    cc, _, sigma = _pairs(a, b)
    upper = float(np.sum(np.abs(cc) * np.abs(np.exp(0.5j * epsilon * sigma) - 1)))
    ab = pointwise_product(a, b)
    lower = 0.0
    for psi in probes:
        lhs = op_apply(a, epsilon, op_apply(b, epsilon, psi))
        lower = max(lower, _l2(lhs, op_apply(ab, epsilon, psi)))
    return lower, upper


def egorov_check(a: AtomicSymbol, dyn, epsilon: float, probes) -> float:
    """max over probes of ||(U^{-1} Op(a) U - Op(a o J)) psi||."""
    if dyn.d != 1:
        raise InvalidParameterError("the grid check is one-dimensional")
    evolved_symbol = compose_linear(a, dyn.symplectic_map())
    worst = 0.0
    for psi in probes:
        lhs = evolve_back(op_apply(a, epsilon, evolve_grid(psi, dyn)), dyn)
        worst = max(worst, _l2(lhs, op_apply(evolved_symbol, epsilon, psi)))
    return worst
