import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import dense_operators, dense_weyl
from tracksim.errors import BoundaryError, InvalidParameterError
from tracksim.phasespace import Free, Harmonic, SymplecticMap, build_harmonic_map, build_magnetic_map
from tracksim.quantum import Grid, GridState, make_coherent
from tracksim.weylcalc import (AtomicSymbol, classical_limit_residual, compose_linear, egorov_check, op_apply,
                               pointwise_product, probe_states, star_product, symplectic_pairing, tv_distance,
                               tv_norm, weyl_apply, weyl_relation_residual)

GRID = Grid(2048, -20.0, 20.0)
freq = st.floats(-2, 2, allow_nan=False)


def symbols(m=3):
    return st.integers(0, 2 ** 32 - 1).map(lambda s: AtomicSymbol.random(np.random.default_rng(s), m))


def l2(u, v):
    return float(np.sqrt(np.sum(np.abs(u.psi - v.psi) ** 2) * u.dx))


@pytest.fixture(scope="module")
def probes():
    return probe_states(GRID, 0.1, count=8, seed=3)


# -- symbols ------------------------------------------------------------------------

def test_tv_norm_examples():
    assert tv_norm(AtomicSymbol.constant(1.0)) == 1.0
    a = AtomicSymbol([1.0, -1.0], [[1.0, 0.0], [0.0, 1.0]])
    assert tv_norm(a, k=1) == 4.0
    assert tv_norm(AtomicSymbol.zero()) == 0.0
    with pytest.raises(InvalidParameterError):
        tv_norm(a, k=-1)


@given(a=symbols(), b=symbols(), eps=st.floats(0.01, 1.0))
def test_tv_norm_submultiplicative(a, b, eps):
    for k in (0, 1, 2):
        assert tv_norm(star_product(a, b, eps), k) <= tv_norm(a, k) * tv_norm(b, k) * (1 + 1e-12)


def test_merge_cancels_and_collects():
    z = [[0.5, 0.25], [0.5, 0.25], [1.0, 0.0]]
    a = AtomicSymbol([1.0, 2.0, 1.0], z)
    merged = a.merged()
    assert len(merged) == 2 and tv_norm(merged) == 4.0
    assert tv_distance(a, a) == 0.0


@given(a=symbols(), x=freq, p=freq)
def test_symbol_algebra_matches_evaluation(a, x, p):
    xi = np.array([x, p])
    b = AtomicSymbol.random(np.random.default_rng(1), 2)
    assert (a + b).evaluate(xi) == pytest.approx(a.evaluate(xi) + b.evaluate(xi))
    assert (a * 2j).evaluate(xi) == pytest.approx(2j * a.evaluate(xi))
    assert pointwise_product(a, b).evaluate(xi) == pytest.approx(a.evaluate(xi) * b.evaluate(xi))
    assert a.conj().evaluate(xi) == pytest.approx(np.conj(a.evaluate(xi)))
    assert np.imag(a.real_part().evaluate(xi)) == pytest.approx(0.0, abs=1e-12)


def test_json_roundtrip():
    a = AtomicSymbol.random(np.random.default_rng(0), 4, d=2)
    b = AtomicSymbol.from_json(a.to_json())
    assert np.array_equal(a.c, b.c) and np.array_equal(a.zeta, b.zeta)


def test_bad_shapes_rejected():
    with pytest.raises(InvalidParameterError):
        AtomicSymbol([1.0, 2.0], [[0.0, 1.0]])
    with pytest.raises(InvalidParameterError):
        AtomicSymbol([1.0], [[0.0, 1.0, 2.0]])
    with pytest.raises(InvalidParameterError):
        star_product(AtomicSymbol.constant(d=1), AtomicSymbol.constant(d=2), 0.1)


# -- star product ---------------------------------------------------------------------

@given(a=symbols(), eps=st.floats(0.01, 1.0))
def test_star_with_constant(a, eps):
    one = AtomicSymbol.constant(1.0)
    assert tv_distance(star_product(one, a, eps), a) < 1e-12
    assert tv_distance(star_product(a, one, eps), a) < 1e-12


@given(a=symbols(2), b=symbols(2), c=symbols(2), eps=st.floats(0.01, 1.0))
def test_star_associative(a, b, c, eps):
    left = star_product(star_product(a, b, eps), c, eps)
    right = star_product(a, star_product(b, c, eps), eps)
    assert tv_distance(left, right) < 1e-12


@given(seed=st.integers(0, 2 ** 32 - 1))
def test_star_tends_to_pointwise_linearly(seed):
    # the error is eps/2 sum |c d sigma| to leading order; for a = b it cancels to second order
    rng = np.random.default_rng(seed)
    a, b = AtomicSymbol.random(rng, 3), AtomicSymbol.random(rng, 3)
    d1 = tv_distance(star_product(a, b, 1e-3), pointwise_product(a, b))
    d2 = tv_distance(star_product(a, b, 5e-4), pointwise_product(a, b))
    if d1 > 1e-12:
        assert d1 / d2 == pytest.approx(2.0, rel=1e-3)


def test_commuting_frequencies_have_exact_product():
    a = AtomicSymbol([1.0, 0.5], [[1.0, 2.0], [-0.5, -1.0]])
    assert tv_distance(star_product(a, a, 0.3), pointwise_product(a, a)) < 1e-15


# -- compositions with linear maps --------------------------------------------------------

def test_compose_identity_and_full_period():
    a = AtomicSymbol.random(np.random.default_rng(2), 4)
    assert tv_distance(compose_linear(a, SymplecticMap.identity(1)), a) == 0.0
    assert tv_distance(compose_linear(a, build_harmonic_map(1.0, 2 * np.pi)), a) < 1e-12


def test_compose_evaluates_at_mapped_points():
    rng = np.random.default_rng(4)
    a = AtomicSymbol.random(rng, 5, d=3)
    J = build_magnetic_map(1.0, 0.7)
    b = compose_linear(a, J)
    for xi in rng.normal(size=(100, 6)):
        assert b.evaluate(xi) == pytest.approx(a.evaluate(J.matrix @ xi), rel=1e-12, abs=1e-12)


def test_compose_rejects_non_symplectic():
    with pytest.raises(InvalidParameterError):
        compose_linear(AtomicSymbol.constant(), SymplecticMap(np.diag([2.0, 1.0])))


def test_symplectic_pairing_sign():
    assert symplectic_pairing([1.0, 0.0], [0.0, 1.0]) == -1.0


# -- operators on the grid --------------------------------------------------------------

def test_weyl_zero_is_identity(probes):
    psi = probes[0]
    assert l2(weyl_apply([0.0, 0.0], 0.1, psi), psi) == 0.0


@given(zx=freq, zp=freq)
def test_weyl_is_unitary(zx, zp, probes):
    psi = probes[1]
    out = weyl_apply([zx, zp], 0.1, psi)
    assert out.norm() == pytest.approx(1.0, abs=1e-12)
    back = weyl_apply([-zx, -zp], 0.1, out)
    assert l2(back, psi) < 1e-12


def test_weyl_relation_phase_for_basis_vectors(probes):
    eps = 0.1
    psi = probes[2]
    lhs = weyl_apply([1.0, 0.0], eps, weyl_apply([0.0, 1.0], eps, psi))
    rhs = weyl_apply([1.0, 1.0], eps, psi)
    assert l2(lhs, GridState(np.exp(-0.5j * eps) * rhs.psi, GRID, eps)) < 1e-8
    assert weyl_relation_residual([1.0, 0.0], [0.0, 1.0], eps, probes) < 1e-8


@given(z1=st.tuples(freq, freq), z2=st.tuples(freq, freq))
def test_weyl_relation_holds(z1, z2, probes):
    assert weyl_relation_residual(z1, z2, 0.1, probes[:2]) < 1e-8


def test_weyl_matches_dense_exponential():
    n, lo, hi, eps = 256, -8.0, 8.0, 0.2
    grid = Grid(n, lo, hi)
    X, P, _ = dense_operators(n, lo, hi, eps)
    psi = probe_states(grid, eps, count=3, seed=1)
    for zeta in ([0.7, 0.0], [0.0, 1.3], [0.8, -1.1]):
        W = dense_weyl(zeta, eps, X, P)
        for p in psi:
            assert np.linalg.norm(W @ p.psi - weyl_apply(zeta, eps, p).psi) * np.sqrt(grid.dx) < 1e-8


def test_op_norm_bounded_by_tv(probes):
    a = AtomicSymbol.random(np.random.default_rng(5), 6)
    for psi in probes:
        assert op_apply(a, 0.1, psi).norm() <= tv_norm(a) * (1 + 1e-12)


def test_real_symbol_has_real_expectation(probes):
    a = AtomicSymbol.random(np.random.default_rng(6), 4, real=True)
    for psi in probes:
        assert abs(psi.inner(op_apply(a, 0.1, psi)).imag) < 1e-12


def test_adjoint_is_conjugate_symbol(probes):
    a = AtomicSymbol.random(np.random.default_rng(7), 4)
    u, v = probes[0], probes[1]
    lhs = u.inner(op_apply(a, 0.1, v))
    rhs = op_apply(a.conj(), 0.1, u).inner(v)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_op_is_linear(probes):
    rng = np.random.default_rng(8)
    a, b = AtomicSymbol.random(rng, 3), AtomicSymbol.random(rng, 3)
    psi = probes[3]
    lhs = op_apply(a * 2.0 + b, 0.1, psi)
    rhs = GridState(2.0 * op_apply(a, 0.1, psi).psi + op_apply(b, 0.1, psi).psi, GRID, 0.1)
    assert l2(lhs, rhs) < 1e-12


def test_star_product_is_operator_composition():
    rng = np.random.default_rng(9)
    for eps in (0.4, 0.1):
        probes_eps = probe_states(GRID, eps, count=50, seed=10)
        for psi in probes_eps:
            a, b = AtomicSymbol.random(rng, 3), AtomicSymbol.random(rng, 3)
            lhs = op_apply(a, eps, op_apply(b, eps, psi))
            assert l2(lhs, op_apply(star_product(a, b, eps), eps, psi)) < 1e-8


def test_classical_limit_bracket_and_rate():
    rng = np.random.default_rng(11)
    a, b = AtomicSymbol.random(rng, 3), AtomicSymbol.random(rng, 3)
    uppers = []
    for eps in (0.2, 0.1, 0.05):
        lower, upper = classical_limit_residual(a, b, eps, probe_states(GRID, eps, count=4, seed=0))
        assert lower <= upper * (1 + 1e-12)
        uppers.append(upper)
    for big, small in zip(uppers, uppers[1:]):
        assert 1.6 <= big / small <= 2.4


@pytest.mark.parametrize("dyn", [Free(1.0), Harmonic.isotropic(1.0, 0.7)])
@pytest.mark.parametrize("eps", [0.5, 0.1])
def test_egorov_exact_for_quadratic_flows(dyn, eps):
    a = AtomicSymbol.random(np.random.default_rng(12), 3)
    assert egorov_check(a, dyn, eps, probe_states(GRID, eps, count=4, seed=1)) < 1e-6


def test_boundary_detection():
    psi = make_coherent(GRID, 0.0, 0.0, 0.1)
    weyl_apply([100.0, 100.0], 0.1, psi)
    with pytest.raises(BoundaryError):
        weyl_apply([200.0, 0.0], 0.1, psi)
    with pytest.raises(BoundaryError):
        weyl_apply([0.0, 160.0], 0.1, psi)


@given(seed=st.integers(0, 2 ** 32 - 1))
def test_commutator_and_pointwise_rate(seed):
    # first-order coefficients: a*b - ab ~ (i eps / 2) sum c d sigma e(xi), [a, b]_* ~ i eps sum c d sigma e(xi)
    rng = np.random.default_rng(seed)
    a, b = AtomicSymbol.random(rng, 3), AtomicSymbol.random(rng, 3)
    xi = rng.normal(size=2)
    cc = np.outer(a.c, b.c)
    sigma = symplectic_pairing(a.zeta[:, None, :], b.zeta[None, :, :])
    waves = np.exp(1j * symplectic_pairing(a.zeta[:, None, :] + b.zeta[None, :, :], xi))
    slope = abs(np.sum(cc * sigma * waves))
    eps = 1e-4
    commutator = abs((star_product(a, b, eps) - star_product(b, a, eps)).evaluate(xi))
    defect = abs(star_product(a, b, eps).evaluate(xi) - a.evaluate(xi) * b.evaluate(xi))
    tol = eps * np.sum(np.abs(cc) * sigma ** 2) + 1e-9     # second-order remainder
    assert abs(commutator / eps - slope) <= tol
    assert abs(defect / eps - slope / 2) <= tol


def test_constant_symbol_acts_as_identity(probes):
    one = AtomicSymbol.constant(1.0)
    assert l2(op_apply(one, 0.1, probes[0]), probes[0]) == 0.0
    assert egorov_check(one, Free(1.0), 0.1, probes[:2]) < 1e-12


def test_egorov_at_full_harmonic_period():
    a = AtomicSymbol.random(np.random.default_rng(13), 3)
    assert egorov_check(a, Harmonic.isotropic(1.0, 2 * np.pi), 0.1, probe_states(GRID, 0.1, count=3)) < 1e-6
