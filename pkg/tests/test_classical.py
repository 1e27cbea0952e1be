import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from tracksim.classical import (IsotropicShell, MeasurementRecord, Mixture, MomentumSmeared, PointMass,
                                PositionSmeared, classical_orbit, orbit_array, record_log_density,
                                sample_initial, simulate_track)
from tracksim.errors import InvalidParameterError
from tracksim.instrument import BumpCosineKernel, DeltaKernel, GaussianKernel
from tracksim.phasespace import PhasePoint, build_free_map, build_harmonic_map, build_magnetic_map
from tracksim.stats import chi2_gof, kuiper_uniform

vals = st.floats(-10, 10, allow_nan=False)


def test_point_mass_returns_exact_point(rng):
    xi = PhasePoint([1.0], [2.0])
    assert all(sample_initial(PointMass(xi), rng) is xi for _ in range(5))


def test_shell_speed_and_mean(rng):
    shell = IsotropicShell(np.zeros(3), 1.0)
    p = np.array([shell.sample(rng).p for _ in range(100000)])
    assert np.allclose(np.linalg.norm(p, axis=1), 1.0)
    assert np.all(np.abs(p.mean(0)) < 4 / np.sqrt(1e5))


def test_momentum_smeared_keeps_position(rng):
    mu = MomentumSmeared(np.array([2.0]), np.array([1.0]), GaussianKernel.isotropic(0.5))
    draws = [mu.sample(rng) for _ in range(200)]
    assert all(xi.x[0] == 2.0 for xi in draws)
    assert np.std([xi.p[0] for xi in draws]) > 0.3


def test_position_smeared_keeps_momentum(rng):
    mu = PositionSmeared(np.array([0.0]), np.array([-1.0]), BumpCosineKernel(0.3))
    draws = [mu.sample(rng) for _ in range(200)]
    assert all(xi.p[0] == -1.0 for xi in draws)
    assert all(abs(xi.x[0]) < 0.3 for xi in draws)


def test_mixture_weights(rng):
    a, b = PointMass(PhasePoint([0.0], [0.0])), PointMass(PhasePoint([1.0], [0.0]))
    mix = Mixture((a, b), (1.0, 3.0))
    assert mix.weights == (0.25, 0.75)
    frac = np.mean([mix.sample(rng).x[0] for _ in range(4000)])
    assert abs(frac - 0.75) < 4 * np.sqrt(0.75 * 0.25 / 4000)


def test_mixture_rejects_bad_weights():
    with pytest.raises(InvalidParameterError):
        Mixture((PointMass(PhasePoint([0.0], [0.0])),), (1.0, 2.0))


def test_shell_rejects_zero_speed():
    with pytest.raises(InvalidParameterError):
        IsotropicShell(np.zeros(2), 0.0)


def test_free_orbit_positions():
    orbit = classical_orbit(build_free_map(1, 1.0), PhasePoint([0.5], [2.0]), 4)
    assert [xi.x[0] for xi in orbit] == [0.5, 2.5, 4.5, 6.5, 8.5]


def test_orbit_n_zero():
    xi = PhasePoint([1.0], [2.0])
    orbit = classical_orbit(build_free_map(1, 1.0), xi, 0)
    assert len(orbit) == 1 and np.array_equal(orbit[0].vector, xi.vector)


def test_harmonic_full_period_orbit_is_constant():
    o = orbit_array(build_harmonic_map(1.0, 2 * np.pi), [0.3, -0.7], 10)
    assert np.allclose(o, [0.3, -0.7], atol=1e-13)


def test_orbit_rejects_negative_n():
    with pytest.raises(InvalidParameterError):
        orbit_array(build_free_map(1, 1.0), [0.0, 0.0], -1)


@given(a=vals, b=vals, u=st.lists(vals, min_size=6, max_size=6), v=st.lists(vals, min_size=6, max_size=6))
def test_orbit_is_linear(a, b, u, v):
    J = build_magnetic_map(0.7, 0.9)
    u, v = np.array(u), np.array(v)
    lhs = orbit_array(J, a * u + b * v, 6)
    rhs = a * orbit_array(J, u, 6) + b * orbit_array(J, v, 6)
    assert np.allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(rhs).max()))


def test_noiseless_track_equals_orbit(rng):
    J = build_free_map(2, 1.0)
    mu = PointMass(PhasePoint([1.0, 0.0], [0.5, -1.0]))
    xi0, rec = simulate_track(J, mu, DeltaKernel(2), 7, rng)
    assert len(rec) == 8
    assert np.array_equal(rec.outcomes, orbit_array(J, xi0, 7)[:, :2])


def test_momentum_from_long_track(rng):
    _, rec = simulate_track(build_free_map(1, 1.0), PointMass(PhasePoint([0.0], [1.0])),
                            GaussianKernel.isotropic(1.0), 10000, rng)
    assert abs((rec[10000][0] - rec[0][0]) / 10000 - 1.0) < 5 * np.sqrt(2) / 10000


def test_track_is_bit_reproducible():
    args = (build_magnetic_map(1.0, 0.7), IsotropicShell(np.zeros(3), 1.0), BumpCosineKernel([1, 1, 1]), 20)
    _, r1 = simulate_track(*args, np.random.default_rng(9))
    _, r2 = simulate_track(*args, np.random.default_rng(9))
    assert r1.outcomes.tobytes() == r2.outcomes.tobytes()


def test_noise_law_matches_kernel():
    J = build_free_map(1, 1.0)
    kernel = BumpCosineKernel(1.5)
    rng = np.random.default_rng(4)
    resid = []
    for _ in range(10000):
        xi0, rec = simulate_track(J, PointMass(PhasePoint([0.0], [1.0])), kernel, 1, rng)
        resid.append(rec[1][0] - 1.0)
    edges = np.linspace(-1.5, 1.5, 31)
    counts, _ = np.histogram(resid, edges)
    _, p, _ = chi2_gof(counts, np.diff(kernel.marginal_cdf(0, edges)))
    assert p > 1e-3


def test_shell_track_direction_is_uniform():
    J = build_free_map(2, 1.0)
    rng = np.random.default_rng(5)
    angles = []
    for _ in range(2000):
        _, rec = simulate_track(J, IsotropicShell(np.zeros(2), 1.0), GaussianKernel.isotropic(1.0, 2), 50, rng)
        dq = rec[50] - rec[0]
        angles.append(np.arctan2(dq[1], dq[0]))
    _, p = kuiper_uniform((np.array(angles) % (2 * np.pi)) / (2 * np.pi))
    assert p > 1e-3


def test_log_density_single_outcome():
    J = build_free_map(1, 1.0)
    val = record_log_density(J, PhasePoint([0.3], [1.0]), GaussianKernel(1.0), np.array([[0.3]]))
    assert val == pytest.approx(np.log((2 * np.pi) ** -0.5))


def test_log_density_additive_over_concatenation():
    J = build_free_map(1, 1.0)
    kernel = GaussianKernel(0.5)
    xi0 = PhasePoint([0.0], [1.0])
    q = np.array([[0.1], [0.8], [2.3], [2.9]])
    whole = record_log_density(J, xi0, kernel, MeasurementRecord(q))
    head = record_log_density(J, xi0, kernel, q[:2])
    tail = record_log_density(J, PhasePoint([2.0], [1.0]), kernel, q[2:])
    assert whole == pytest.approx(head + tail, rel=1e-14)


@given(a=vals)
def test_log_density_translation_covariant(a):
    J = build_free_map(1, 1.0)
    kernel = GaussianKernel(0.7)
    q = np.array([[0.1], [1.2], [1.7]])
    base = record_log_density(J, PhasePoint([0.0], [1.0]), kernel, q)
    shifted = record_log_density(J, PhasePoint([a], [1.0]), kernel, q + a)
    assert shifted == pytest.approx(base, rel=1e-10, abs=1e-10)


def test_log_density_outside_support_warns():
    J = build_free_map(1, 1.0)
    with pytest.warns(RuntimeWarning):
        val = record_log_density(J, PhasePoint([0.0], [0.0]), BumpCosineKernel(1.0), np.array([[5.0]]))
    assert val == -np.inf


def test_log_density_dimension_mismatch():
    with pytest.raises(InvalidParameterError):
        record_log_density(build_free_map(2, 1.0), PhasePoint([0, 0], [0, 0]), GaussianKernel.isotropic(1, 2),
                           np.zeros((3, 1)))


def test_record_csv_roundtrip():
    rec = MeasurementRecord(np.array([[0.1, 1 / 3], [2.5, -7e-12]]), {"dynamics": "free", "sigma": 1.0})
    text = rec.to_csv()
    assert text.startswith("# dynamics: free\n# sigma: 1.0\nstep,q_1,q_2\n")
    back = MeasurementRecord.from_csv(io.StringIO(text))
    assert back.outcomes.tobytes() == rec.outcomes.tobytes()
    assert back.metadata["dynamics"] == "free"


@pytest.mark.parametrize("body, row", [("step,q_1\n0,1.0\n1,abc\n", 3), ("step,q_1\n0,1.0\n2,1.0\n", 3),
                                       ("step,q_1\n0,1.0,2.0\n", 2)])
def test_record_csv_errors_name_row(body, row):
    with pytest.raises(InvalidParameterError, match=f"row {row}"):
        MeasurementRecord.from_csv(io.StringIO(body))


def test_record_rejects_empty():
    with pytest.raises(InvalidParameterError):
        MeasurementRecord(np.zeros((0, 1)))
    with pytest.raises(InvalidParameterError):
        MeasurementRecord.from_csv(io.StringIO("# only: comments\n"))


def test_record_concat():
    a = MeasurementRecord(np.zeros((2, 1)))
    b = MeasurementRecord(np.ones((3, 1)))
    assert len(a.concat(b)) == 5
