"""The classical limit process: initial-condition laws, orbits and noisy position records."""
from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from .errors import InvalidParameterError
from .instrument import NoiseKernel
from .phasespace import PhasePoint, SymplecticMap, as_vector


# -- initial measures ---------------------------------------------------------

@dataclass(frozen=True)
class PointMass:
    xi0: PhasePoint

    @property
    def d(self):
        return self.xi0.d

    def sample(self, rng) -> PhasePoint:
        return self.xi0


@dataclass(frozen=True)
class PositionSmeared:
    """x = x0 + noise with density ``profile``, momentum fixed at p0."""

    x0: np.ndarray
    p0: np.ndarray
    profile: NoiseKernel

    @property
    def d(self):
        return np.atleast_1d(self.x0).shape[0]

    def sample(self, rng) -> PhasePoint:
        return PhasePoint(np.atleast_1d(self.x0) + self.profile.sample(rng), self.p0)


@dataclass(frozen=True)
class MomentumSmeared:
    """Position fixed at x0, p = p0 + noise with density ``profile``."""

    x0: np.ndarray
    p0: np.ndarray
    profile: NoiseKernel

    @property
    def d(self):
        return np.atleast_1d(self.x0).shape[0]

    def sample(self, rng) -> PhasePoint:
        return PhasePoint(self.x0, np.atleast_1d(self.p0) + self.profile.sample(rng))


@dataclass(frozen=True)
class IsotropicShell:
    """Position x0, momentum of fixed ``speed`` in a uniformly random direction."""

    x0: np.ndarray
    speed: float

    def __post_init__(self):
        if not self.speed > 0:
            raise InvalidParameterError(f"speed must be positive, got {self.speed}")

    @property
    def d(self):
        return np.atleast_1d(self.x0).shape[0]

    def sample(self, rng) -> PhasePoint:
        z = rng.standard_normal(self.d)
        return PhasePoint(self.x0, self.speed * z / np.linalg.norm(z))


@dataclass(frozen=True)
class Mixture:
    components: tuple
    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.components) == 0 or w.shape != (len(self.components),) or np.any(w < 0):
            raise InvalidParameterError("mixture needs one non-negative weight per component")
        object.__setattr__(self, "weights", tuple(w / w.sum()))

    @property
    def d(self):
        return self.components[0].d

    def sample(self, rng) -> PhasePoint:
        i = rng.choice(len(self.components), p=self.weights)
        return self.components[i].sample(rng)


InitialMeasure = Union[PointMass, PositionSmeared, MomentumSmeared, IsotropicShell, Mixture]


def sample_initial(mu0: InitialMeasure, rng) -> PhasePoint:
    return mu0.sample(rng)


# -- records ------------------------------------------------------------------

@dataclass(frozen=True)
class MeasurementRecord:
    """Outcomes q_0, ..., q_n as an ``(n + 1, d)`` array plus free-form metadata."""

    outcomes: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        q = np.asarray(self.outcomes, dtype=float)
        if q.ndim == 1:
            q = q[:, None]
        if q.ndim != 2 or q.shape[0] == 0:
            raise InvalidParameterError(f"record must be a non-empty (n+1, d) array, got {q.shape}")
        q.setflags(write=False)
        object.__setattr__(self, "outcomes", q)

    @property
    def d(self) -> int:
        return self.outcomes.shape[1]

    def __len__(self):
        return self.outcomes.shape[0]

    def __getitem__(self, k):
        return self.outcomes[k]

    def concat(self, other: "MeasurementRecord") -> "MeasurementRecord":
        return MeasurementRecord(np.vstack([self.outcomes, other.outcomes]), dict(self.metadata))

    def to_csv(self, path_or_buf=None) -> str | None:
        buf = io.StringIO()
        for key, value in self.metadata.items():
            buf.write(f"# {key}: {value}\n")
        buf.write(",".join(["step"] + [f"q_{i + 1}" for i in range(self.d)]) + "\n")
        for k, row in enumerate(self.outcomes):
            buf.write(",".join([str(k)] + [repr(float(v)) for v in row]) + "\n")
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w") as fh:
                fh.write(text)
        return None

    @classmethod
    def from_csv(cls, path_or_buf) -> "MeasurementRecord":
        if hasattr(path_or_buf, "read"):
            lines = path_or_buf.read().splitlines()
        else:
            with open(path_or_buf) as fh:
                lines = fh.read().splitlines()
        meta, rows, header = {}, [], None
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
                continue
            cells = [c.strip() for c in line.split(",")]
            if header is None:
                header = cells
                if header[0] != "step" or len(header) < 2:
                    raise InvalidParameterError(f"row {lineno}: bad record header {line!r}")
                continue
            if len(cells) != len(header):
                raise InvalidParameterError(f"row {lineno}: expected {len(header)} columns")
            try:
                step = int(cells[0])
                values = [float(c) for c in cells[1:]]
            except ValueError:
                raise InvalidParameterError(f"row {lineno}: non-numeric entry in {line!r}") from None
            if step != len(rows):
                raise InvalidParameterError(f"row {lineno}: steps must be consecutive from 0")
            rows.append(values)
        if header is None or not rows:
            raise InvalidParameterError("record CSV contains no outcomes")
        return cls(np.array(rows), meta)


# -- orbits and tracks --------------------------------------------------------

def classical_orbit(J: SymplecticMap, xi0, n: int) -> list[PhasePoint]:
    """(xi_0, ..., xi_n) with xi_k = J^k xi_0."""
    return [PhasePoint.from_vector(v) for v in orbit_array(J, xi0, n)]


def orbit_array(J: SymplecticMap, xi0, n: int) -> np.ndarray:
    """Rows J^k xi0 for k = 0..n."""
    if n < 0:
        raise InvalidParameterError(f"n must be non-negative, got {n}")
    v = as_vector(xi0)
    if v.shape != (J.matrix.shape[0],):
        raise InvalidParameterError(f"phase point of length {v.shape} does not match map of size {J.matrix.shape}")
    return map_powers(J, n) @ v


def map_powers(J: SymplecticMap, n: int) -> np.ndarray:
    """Read-only stack of J^0, ..., J^n, shape (n + 1, 2d, 2d); cached per (J, n)."""
    return _powers(J.matrix.tobytes(), J.matrix.shape[0], n)


@lru_cache(maxsize=32)
def _powers(matrix_bytes: bytes, size: int, n: int) -> np.ndarray:
    m = np.frombuffer(matrix_bytes).reshape(size, size)
    out = np.empty((n + 1, size, size))
    out[0] = np.eye(size)
    for k in range(1, n + 1):
        out[k] = m @ out[k - 1]
    out.setflags(write=False)
    return out


def simulate_track(J: SymplecticMap, mu0: InitialMeasure, kernel: NoiseKernel, n: int, rng,
                   metadata: dict | None = None) -> tuple[PhasePoint, MeasurementRecord]:
    """Draw xi_0 from mu0, then Q_k = x_k + kappa_k with i.i.d. kernel noise.

    The hidden initial condition is returned alongside the record.
    """
    xi0 = sample_initial(mu0, rng)
    orbit = orbit_array(J, xi0, n)
    x = orbit[:, : J.d]
    q = x + kernel.sample(rng, n + 1)
    return xi0, MeasurementRecord(q, dict(metadata or {}))


def record_log_density(J: SymplecticMap, xi0, kernel: NoiseKernel, record) -> float:
    """sum_k log |g(q_k - x_k)|^2; ``-inf`` (with a warning) outside the kernel support."""
    q = record.outcomes if isinstance(record, MeasurementRecord) else np.atleast_2d(record)
    if q.shape[1] != J.d:
        raise InvalidParameterError(f"record dimension {q.shape[1]} does not match map dimension {J.d}")
    x = orbit_array(J, xi0, q.shape[0] - 1)[:, : J.d]
    total = float(np.sum(kernel.log_density(q, x)))
    if total == -np.inf:
        warnings.warn("record has zero density under the classical law", RuntimeWarning, stacklevel=2)
    return total
