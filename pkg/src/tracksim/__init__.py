"""Simulation of repeated approximate position measurements on quantum and classical particles,
together with estimators of the initial phase-space point from the resulting track."""

from .errors import (BoundaryError, ConfigError, InvalidParameterError, NumericError,
                     QuadratureError, SingularDesignError, TracksimError, UnsupportedBackendError)
from .phasespace import (Free, Harmonic, Magnetic, PhasePoint, SymplecticMap, build_free_map,
                         build_harmonic_map, build_magnetic_map, check_symplectic, jxp_invertible,
                         omega, spectrum_on_unit_circle)
from .instrument import BumpCosineKernel, GaussianKernel, validate
from .classical import MeasurementRecord, classical_orbit, simulate_track

__version__ = "0.1.0"
