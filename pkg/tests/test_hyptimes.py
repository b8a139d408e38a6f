import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from phlab.cocycle import contraction_series, contraction_series_batch
from phlab.hyptimes import (
    TailCurve,
    brute_force_hyperbolic_times,
    check_contraction_at_ht,
    cu_neighbor,
    default_b,
    detect_hyperbolic_times,
    expansion_time,
    expansion_times,
    fit_survival,
    iid_tail_probability,
    pliss_density,
    tail_distribution,
    tail_from_series,
)
from phlab.periodic import find_periodic, unstable_disk
from phlab.torus import anosov, iterate, mane

series_st = st.lists(st.floats(-2.0, 2.0, allow_nan=False), min_size=1, max_size=200).map(np.array)
b_st = st.floats(0.01, 1.5)


@settings(max_examples=200, deadline=None)
@given(series_st, b_st)
def test_detector_matches_brute_force(a, b):
    assert np.array_equal(detect_hyperbolic_times(a, b).times, brute_force_hyperbolic_times(a, b))


@settings(max_examples=100, deadline=None)
@given(series_st, b_st, b_st)
def test_antitone_in_b(a, b1, b2):
    lo, hi = sorted((b1, b2))
    t_lo = set(detect_hyperbolic_times(a, lo).times.tolist())
    t_hi = set(detect_hyperbolic_times(a, hi).times.tolist())
    assert t_hi <= t_lo


@settings(max_examples=100, deadline=None)
@given(series_st, b_st)
def test_times_satisfy_window_condition(a, b):
    for n in detect_hyperbolic_times(a, b).times:
        sums = np.cumsum(a[:n][::-1])
        assert np.all(sums <= -b * np.arange(1, n + 1))


def test_constant_series_analytics(anosov_spec):
    a = contraction_series(anosov_spec, np.array([0.3, 0.6, 0.9]), 1000)
    rep = detect_hyperbolic_times(a, 0.4)
    assert rep.density == 1.0 and rep.first_time == 1
    assert detect_hyperbolic_times(a, 0.5).times.size == 0
    assert pliss_density(a, 0.4) == 1.0
    assert expansion_time(a, 0.4).value == 1


def test_shift_equivariance_constant_series():
    a = np.full(300, -0.44)
    full = detect_hyperbolic_times(a, 0.4).times
    shifted = detect_hyperbolic_times(a[1:], 0.4).times
    assert np.array_equal(shifted + 1, full[full > 1])


def test_detector_rejects_bad_input():
    with pytest.raises(ValueError):
        detect_hyperbolic_times(np.ones(3), 0.0)
    with pytest.raises(ValueError):
        detect_hyperbolic_times(np.array([]), 0.3)


@settings(max_examples=200, deadline=None)
@given(series_st, b_st)
def test_expansion_time_definition(a, b):
    rec = expansion_time(a, b)
    avg = np.cumsum(a) / np.arange(1, a.size + 1)
    if rec.censored:
        assert avg[-1] >= -b / 2
        return
    N = rec.value
    assert np.all(avg[N - 1:] < -b / 2)
    if N > 1:
        assert avg[N - 2] >= -b / 2


@settings(max_examples=100, deadline=None)
@given(series_st, b_st)
def test_expansion_time_consistency(a, b):
    avg = np.cumsum(a) / np.arange(1, a.size + 1)
    violating = np.flatnonzero(avg >= -b / 2) + 1
    rec = expansion_time(a, b)
    if rec.censored:
        assert violating[-1] == a.size
    else:
        last = violating.max(initial=0)
        assert rec.value == last + 1


def test_expansion_times_vectorized_matches_scalar(rng):
    A = rng.normal(-0.1, 0.6, size=(50, 80))
    E = expansion_times(A, 0.3)
    for row, e in zip(A, E):
        rec = expansion_time(row, 0.3)
        assert (e == -1) == rec.censored
        if not rec.censored:
            assert e == rec.value


def test_iid_tail_matches_oracle():
    rng = np.random.default_rng(7)
    p_up, up, down, b = 0.3, 0.5, -0.6, 0.2
    N, L, n_max = 20000, 60, 12
    A = np.where(rng.random((N, L)) < p_up, up, down)
    curve = tail_from_series(A, b, n_max)
    exact = iid_tail_probability(p_up, up, down, b, n_max, L)
    tol = 4.0 * np.sqrt(exact * (1 - exact) / N) + 1e-12
    assert np.all(np.abs(curve.survival - exact) <= tol)
    assert np.all(np.diff(curve.survival) <= 0)
    assert curve.fit_c > 0


def test_fit_survival_exact_exponential():
    n = np.arange(1, 41)
    S = np.exp(-0.25 * n)
    curve = fit_survival(TailCurve(n, S, 0, 10 ** 9, 0.1))
    assert curve.fit_c == pytest.approx(0.25, abs=1e-9)
    assert curve.fit_r2 == pytest.approx(1.0, abs=1e-12)
    assert curve.stretched_tau == pytest.approx(1.0)


def test_fit_survival_refusal():
    curve = fit_survival(TailCurve(np.arange(1, 4), np.array([0.5, 0.2, 0.1]), 0, 1000, 0.1))
    assert np.isnan(curve.fit_c)
    assert any("refused" in f for f in curve.flags)


def test_all_censored_rejected():
    with pytest.raises(ValueError):
        tail_from_series(np.zeros((5, 10)), 0.3)


def test_anosov_disk_immediate_expansion(anosov_spec):
    disk = unstable_disk(anosov_spec, find_periodic(anosov_spec, 1)[0], 0.05, 50, rng=0)
    curve = tail_distribution(anosov_spec, disk.points, 0.4, 20)
    assert curve.survival[0] == 0.0
    assert "immediate expansion" in curve.flags
    assert np.isnan(curve.fit_c)


def test_contraction_along_unstable_direction(anosov_spec):
    x = np.array([0.2, 0.5, 0.7])
    n = 6
    y = cu_neighbor(anosov_spec, x, n, 1e-3, direction=(0.0, 0.0, 1.0))
    chk = check_contraction_at_ht(anosov_spec, x, n, y, 0.4)
    k3 = anosov_spec.eigenvalues[2]
    assert np.allclose(chk.factors, k3 ** -np.arange(1, n + 1), rtol=1e-6)
    assert chk.passed


def test_contraction_identical_points(anosov_spec):
    x = np.array([0.2, 0.5, 0.7])
    chk = check_contraction_at_ht(anosov_spec, x, 4, x, 0.4)
    assert np.all(chk.factors == 0.0)


def test_contraction_at_mane_hyperbolic_time(mane_spec):
    rng = np.random.default_rng(3)
    X = rng.random((200, 3))
    b = default_b(mane_spec, X[:20], L=500)
    A = contraction_series_batch(mane_spec, X, 40)
    checked = 0
    for x, a in zip(X, A):
        times = detect_hyperbolic_times(a, b).times
        # backward pull-back of y amplifies rounding by 1/k1 per step; keep n short
        times = times[times <= 10]
        if times.size == 0:
            continue
        n = int(times[-1])
        y = cu_neighbor(mane_spec, x, n, 1e-4)
        chk = check_contraction_at_ht(mane_spec, x, n, y, b)
        assert chk.max_violation_ratio <= 1.0 + 1e-3
        checked += 1
        if checked == 20:
            break
    assert checked == 20


def test_distance_check_radius(anosov_spec):
    x = np.array([0.2, 0.5, 0.7])
    y = cu_neighbor(anosov_spec, x, 2, 0.2)
    with pytest.raises(ValueError):
        check_contraction_at_ht(anosov_spec, x, 2, y, 0.4, r=0.05)


def test_default_b(anosov_spec, rng):
    b = default_b(anosov_spec, rng.random((5, 3)), L=100)
    assert b == pytest.approx(0.5 * np.log(anosov_spec.eigenvalues[1]), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 50))
def test_orbit_shift_of_series(k):
    spec = anosov()
    x = np.array([0.31, 0.17, 0.59])
    a = contraction_series(spec, x, 60).values
    b = contraction_series(spec, iterate(spec, x, k), 60 - k).values
    assume(b.size > 0)
    assert np.allclose(a[k:], b, atol=1e-12)
