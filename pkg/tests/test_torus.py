from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phlab import torus
from phlab.torus import (
    DEFAULT_MATRIX,
    InvalidMapError,
    anosov,
    apply,
    center_derivative,
    derivative,
    eigen_data,
    fixed_point_count,
    inverse_apply,
    iterate,
    mane,
    min_image,
    torus_distance,
    validate_mane_spec,
    wrap,
)

coord = st.floats(-5.0, 5.0, allow_nan=False, allow_infinity=False)
point = st.tuples(coord, coord, coord).map(np.array)
unit_point = st.tuples(*(st.floats(0.0, 1.0, exclude_max=True),) * 3).map(np.array)


def test_eigenvalues_match_root_finder(root_oracle):
    k, V = eigen_data(DEFAULT_MATRIX)
    assert np.allclose(k, root_oracle, atol=1e-12)
    assert abs(np.prod(k) - 1.0) < 1e-10
    A = np.array(DEFAULT_MATRIX, dtype=float)
    assert np.allclose(A @ V, V * k, atol=1e-12)


@pytest.mark.parametrize("matrix, fragment", [
    (((2, 0, 0), (0, 1, 0), (0, 0, 1)), "determinant"),
    (((1, 0, 0), (0, 1, 0), (0, 0, 1)), "eigenvalue"),
    (((0, 0, 1), (1, 0, 0), (0, 1, 0)), "complex"),
])
def test_invalid_matrices_rejected(matrix, fragment):
    with pytest.raises(InvalidMapError, match=fragment):
        anosov(matrix)


def test_bump_radius_limit():
    with pytest.raises(InvalidMapError):
        mane(rho=0.5)
    with pytest.raises(InvalidMapError):
        mane(rho=-0.01)


@given(point)
def test_wrap_range(x):
    y = wrap(x)
    assert np.all((0.0 <= y) & (y < 1.0))
    assert np.allclose(min_image(y - x), 0.0, atol=1e-12)


def test_origin_fixed(anosov_spec, mane_spec):
    assert np.array_equal(apply(anosov_spec, np.zeros(3)), np.zeros(3))
    assert np.array_equal(apply(mane_spec, np.zeros(3)), np.zeros(3))


def test_half_integer_point_exact(anosov_spec):
    x = [Fraction(1, 2)] * 3
    expected = [sum(Fraction(a) * b for a, b in zip(row, x)) % 1 for row in DEFAULT_MATRIX]
    assert np.array_equal(apply(anosov_spec, np.full(3, 0.5)), np.array([float(v) for v in expected]))


def test_mane_is_linear_outside_ball(mane_spec, anosov_spec, rng):
    X = rng.random((4000, 3))
    far = torus_distance(X, mane_spec.p) >= mane_spec.rho
    assert far.sum() > 3900
    assert np.array_equal(apply(mane_spec, X[far]), apply(anosov_spec, X[far]))
    D = derivative(mane_spec, X[far])
    assert np.array_equal(D, np.broadcast_to(anosov_spec.A, D.shape))


def test_anosov_derivative_constant(anosov_spec, rng):
    D = derivative(anosov_spec, rng.random((50, 3)))
    assert np.array_equal(D, np.broadcast_to(anosov_spec.A, D.shape))


def test_center_multiplier_at_p(mane_spec):
    D = derivative(mane_spec, mane_spec.p)
    v2 = mane_spec.eigenvectors[:, 1]
    assert np.allclose(D @ v2, v2, atol=1e-12)
    assert abs(center_derivative(mane_spec, mane_spec.p) - 1.0) < 1e-12


@settings(max_examples=50, deadline=None)
@given(unit_point, st.tuples(*(st.integers(-3, 3),) * 3))
def test_periodicity_under_lattice_translation(x, k):
    for spec in (anosov(), mane()):
        assert np.allclose(min_image(apply(spec, x + np.array(k)) - apply(spec, x)), 0.0, atol=1e-12)


@pytest.mark.parametrize("make", [anosov, mane])
def test_chain_rule(make, rng):
    spec = make()
    X = wrap(spec.p + 0.06 * (rng.random((1000, 3)) - 0.5))
    prod = derivative(spec, apply(spec, X)) @ derivative(spec, X)
    # fourth-order central differences of f^2; the bump profile is only C^1 at
    # its rim, which limits the attainable agreement to about 1e-9
    h = 3e-6
    fd = np.empty_like(prod)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h

        def f2(Y):
            return iterate(spec, Y, 2)

        d1 = min_image(f2(X + e) - f2(X - e))
        d2 = min_image(f2(X + 2 * e) - f2(X - 2 * e))
        fd[:, :, j] = (8 * d1 - d2) / (12 * h)
    assert np.max(np.abs(fd - prod)) < 1e-7
    outside = (torus_distance(X, spec.p) >= spec.rho) & (torus_distance(apply(spec, X), spec.p) >= spec.rho)
    assert np.array_equal(prod[outside], np.broadcast_to(spec.A @ spec.A, prod[outside].shape))


@pytest.mark.parametrize("make", [anosov, mane])
def test_finite_difference_derivative(make, rng):
    spec = make()
    X = np.vstack([rng.random((500, 3)), wrap(spec.p + 0.08 * (rng.random((500, 3)) - 0.5))])
    h = 1e-6
    D = derivative(spec, X)
    fd = np.empty_like(D)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd[:, :, j] = min_image(apply(spec, X + e) - apply(spec, X - e)) / (2 * h)
    assert np.max(np.abs(fd - D)) < 1e-6


def test_volume(anosov_spec, mane_spec, rng):
    X = rng.random((1000, 3))
    assert np.all(np.abs(np.linalg.det(derivative(anosov_spec, X))) == pytest.approx(1.0, abs=1e-12))
    far = torus_distance(X, mane_spec.p) >= mane_spec.rho
    assert np.allclose(np.abs(np.linalg.det(derivative(mane_spec, X[far]))), 1.0, atol=1e-12)


@pytest.mark.parametrize("make", [anosov, mane])
def test_inverse(make, rng):
    spec = make()
    X = np.vstack([rng.random((300, 3)), wrap(spec.p + 0.08 * (rng.random((300, 3)) - 0.5))])
    assert np.max(torus_distance(apply(spec, inverse_apply(spec, X)), X)) < 1e-12
    assert np.array_equal(inverse_apply(anosov(), np.zeros(3)), np.zeros(3))


def test_iterate_matches_repeated_apply(mane_spec, rng):
    X = rng.random((20, 3))
    Y = X
    for _ in range(7):
        Y = apply(mane_spec, Y)
    assert np.max(torus_distance(iterate(mane_spec, X, 7), Y)) < 1e-12


def test_validation_passes_for_default(mane_spec):
    rep = validate_mane_spec(mane_spec, 32)
    assert rep.passed, rep.messages
    assert rep.min_center_derivative >= 1.0 - 1e-9
    assert rep.argmin_cells_from_p <= 2.0


def test_validation_fails_for_overdriven_bump():
    rep = validate_mane_spec(mane(delta=0.5), 32)
    assert not rep.passed
    assert len(rep.violations) > 0


def test_fixed_point_counts():
    assert [fixed_point_count(DEFAULT_MATRIX, n) for n in range(1, 5)] == [1, 13, 91, 533]


def test_dictionary_modes():
    m = torus.dictionary_modes(2)
    assert len(m) == (5 ** 3 - 1) // 2
    assert len({tuple(v) for v in m} | {tuple(-v) for v in m}) == 2 * len(m)
