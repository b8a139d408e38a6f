import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phlab.measures import (
    N_AVERAGES,
    UNRESOLVED,
    Coboundary,
    CorrelationSeries,
    Observable,
    TentObservable,
    basin_map,
    batch_means_variance,
    birkhoff,
    birkhoff_batch,
    birkhoff_observable,
    center_exponent_of_cluster,
    clt_variance,
    cluster_measures,
    constant,
    correlation,
    dictionary_averages,
    dictionary_labels,
    exact_character_correlation,
    exact_vanishing_lag,
    fit_decay,
    lebesgue_fingerprint,
    parameter_sweep,
    raw_clusters,
)
from phlab.parallel import uniform_seeds
from phlab.torus import DEFAULT_MATRIX, apply

COS_E1 = Observable((1, 0, 0), "cos")


def test_observable_validation():
    with pytest.raises(ValueError):
        Observable((4, 0, 0))
    with pytest.raises(ValueError):
        Observable((1, 0, 0), "tan")
    with pytest.raises(ValueError):
        TentObservable(alpha=0.0)


def test_character_orthogonality_sampled():
    X = uniform_seeds(1, 200000)
    for m in [(1, 0, 0), (0, 2, -1), (3, 3, 3)]:
        for kind in ("cos", "sin"):
            assert abs(Observable(m, kind)(X).mean()) < 5 / math.sqrt(X.shape[0])


def test_tent_range(rng):
    v = TentObservable((0.1, 0.2, 0.3), 0.5)(rng.random((1000, 3)))
    assert np.all((0 <= v) & (v <= 1))


def test_histogram_mass_and_bounds(mane_spec, rng):
    for m in birkhoff_batch(mane_spec, rng.random((5, 3)), 100, 20000):
        assert abs(m.histogram.sum() - 1.0) <= 1e-12
        assert np.all(np.abs(m.averages) <= 1.0)
        assert m.averages.shape == (N_AVERAGES,)
    assert len(dictionary_labels()) == N_AVERAGES


def test_birkhoff_minimum_length(anosov_spec):
    with pytest.raises(ValueError):
        birkhoff(anosov_spec, np.zeros(3), 0, 100)


def test_anosov_averages_vanish(anosov_spec):
    n = 10 ** 6
    F = dictionary_averages(anosov_spec, uniform_seeds(3, 3), 1000, n)
    assert np.max(np.abs(F)) <= 3 / math.sqrt(n)


def test_constant_average_exact(mane_spec):
    assert birkhoff_observable(mane_spec, np.array([0.1, 0.2, 0.3]), constant(1.0), 10, 10 ** 4) == 1.0


def test_birkhoff_split_consistency(mane_spec):
    x = np.array([0.12, 0.34, 0.56])
    n = 20000
    whole = birkhoff_observable(mane_spec, x, COS_E1, 100, n)
    first = birkhoff_observable(mane_spec, x, COS_E1, 100, n // 2)
    second = birkhoff_observable(mane_spec, x, COS_E1, 100 + n // 2, n // 2)
    assert abs(whole - 0.5 * (first + second)) <= 1e-12


def test_birkhoff_kernel_matches_observable(mane_spec):
    x = np.array([0.12, 0.34, 0.56])
    m = birkhoff(mane_spec, x, 100, 20000)
    i = dictionary_labels().index("cos_1_0_0")
    assert m.averages[i] == pytest.approx(birkhoff_observable(mane_spec, x, COS_E1, 100, 20000), abs=1e-12)


def test_fingerprint_invariance(mane_spec, rng):
    n = 20000
    X = rng.random((10, 3))
    F0 = dictionary_averages(mane_spec, X, 100, n)
    F1 = dictionary_averages(mane_spec, apply(mane_spec, X), 100, n)
    assert np.max(np.abs(F0 - F1)) <= 3 / math.sqrt(n)


def test_cluster_synthetic_populations(rng):
    eps = 0.05
    F = np.vstack([rng.normal(0, 0.002, (50, 8)), rng.normal(0, 0.002, (50, 8)) + 10 * eps])
    rep = cluster_measures(F, eps)
    assert rep.cluster_count == 2
    assert rep.coverage == 1.0
    assert len(set(rep.assignment[:50])) == 1 and len(set(rep.assignment[50:])) == 1


def test_cluster_unresolved_outliers(rng):
    F = np.vstack([rng.normal(0, 0.002, (98, 4)), np.full((2, 4), 0.9)])
    rep = cluster_measures(F, 0.05)
    assert rep.cluster_count == 1
    assert np.all(rep.assignment[-2:] == UNRESOLVED)
    assert rep.coverage == pytest.approx(0.98)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.005, 0.2), st.floats(0.005, 0.2))
def test_raw_cluster_count_monotone_in_eps(seed, e1, e2):
    F = np.random.default_rng(seed).random((30, 3)) * 0.5
    lo, hi = sorted((e1, e2))
    assert raw_clusters(F, hi).max() <= raw_clusters(F, lo).max()


def test_cluster_rejects_bad_input():
    with pytest.raises(ValueError):
        cluster_measures(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        cluster_measures(np.zeros((3, 3)), eps=0.0)


def test_basin_anosov(anosov_spec):
    rep, seeds, F = basin_map(anosov_spec, g=5, n_transient=100, n_avg=20000, rng_seed=4)
    assert seeds.shape == (125, 3)
    assert rep.cluster_count == 1 and rep.coverage >= 0.99
    assert np.max(np.abs(rep.centroids[0] - lebesgue_fingerprint())) <= 0.05


def test_basin_grid_size(anosov_spec):
    with pytest.raises(ValueError):
        basin_map(anosov_spec, g=4)


def test_mane_single_cluster_small(mane_spec):
    F = dictionary_averages(mane_spec, uniform_seeds(8, 60), 1000, 10 ** 5)
    rep = cluster_measures(F, 0.05)
    assert rep.cluster_count == 1 and rep.coverage >= 0.95


def test_center_exponent_anosov(anosov_spec, rng):
    rep = center_exponent_of_cluster(anosov_spec, rng.random((10, 3)), 10 ** 4)
    assert rep.mean == pytest.approx(np.log(anosov_spec.eigenvalues[1]), abs=1e-6)


def test_center_exponent_mane_positive(mane_spec, rng):
    rep = center_exponent_of_cluster(mane_spec, rng.random((20, 3)), 10 ** 4)
    assert rep.positive


def test_center_exponent_needs_seeds(anosov_spec):
    with pytest.raises(ValueError):
        center_exponent_of_cluster(anosov_spec, np.zeros((3, 3)))


def test_exact_character_oracle():
    assert exact_character_correlation(DEFAULT_MATRIX, COS_E1, COS_E1, 0) == 0.5
    assert exact_character_correlation(DEFAULT_MATRIX, COS_E1, COS_E1, 1) == 0.0
    s = Observable((1, 0, 0), "sin")
    assert exact_character_correlation(DEFAULT_MATRIX, s, s, 0) == 0.5
    assert exact_character_correlation(DEFAULT_MATRIX, COS_E1, s, 0) == 0.0
    assert exact_vanishing_lag(DEFAULT_MATRIX, COS_E1, COS_E1) == 1


def test_anosov_correlation_below_floor(anosov_spec):
    seeds = uniform_seeds(11, 1000)
    cs = correlation(anosov_spec, COS_E1, COS_E1, 10, seeds)
    n0 = exact_vanishing_lag(DEFAULT_MATRIX, COS_E1, COS_E1)
    assert np.all(np.abs(cs.C[n0:]) <= cs.floors[n0:])
    assert abs(cs.C[0] - 0.5) <= 3 * cs.floors[0]
    # C(0) equals the empirical covariance
    v = COS_E1(seeds)
    assert cs.C[0] == pytest.approx(np.mean((v - v.mean()) * v), abs=1e-12)


def test_constant_observable_correlation_zero(mane_spec):
    cs = correlation(mane_spec, constant(2.0), COS_E1, 5, uniform_seeds(2, 300))
    assert np.all(cs.C == 0.0)


def test_correlation_argument_checks(anosov_spec):
    with pytest.raises(ValueError):
        correlation(anosov_spec, COS_E1, COS_E1, 3, uniform_seeds(1, 100))
    with pytest.raises(ValueError):
        correlation(anosov_spec, COS_E1, COS_E1, 3, uniform_seeds(1, 300), mode="time")


def test_measure_mode_runs(mane_spec):
    cs = correlation(mane_spec, COS_E1, COS_E1, 3, uniform_seeds(5, 256), mode="measure",
                     n_transient=100, orbit_length=4)
    assert cs.sample_size == 1024 and cs.mode == "measure"


def test_fit_decay_exact():
    n = np.arange(12)
    rate, r2 = fit_decay(np.exp(-0.3 * n))
    assert rate == pytest.approx(0.3, abs=1e-6)
    assert r2 >= 0.999999


def test_fit_decay_noisy_with_floor():
    rng = np.random.default_rng(9)
    n = np.arange(40)
    C = np.exp(-0.3 * n) + rng.normal(0, 1e-4, n.size)
    rate, r2 = fit_decay(C, floor=3e-4)
    assert rate == pytest.approx(0.3, abs=0.02)


def test_fit_decay_refusal():
    cs = CorrelationSeries(COS_E1, COS_E1, np.arange(5), np.array([1.0, 0.1, 1e-5, 0, 0]),
                           np.full(5, 1e-3), 1e-3, 1000, "lebesgue")
    rate, r2 = fit_decay(cs)
    assert math.isnan(rate) and cs.n_fit_points == 2
    assert any("refused" in f for f in cs.flags)


def test_batch_means_iid():
    rng = np.random.default_rng(2)
    v = 2.5
    est = batch_means_variance(rng.normal(0, math.sqrt(v), 200000), 50)
    assert abs(est.sigma2 - v) <= 3 * est.stderr
    with pytest.raises(ValueError):
        batch_means_variance(np.zeros(100), 10)


def test_clt_anosov_green_kubo(anosov_spec):
    est = clt_variance(anosov_spec, COS_E1, uniform_seeds(6, 8), 2000, 50)
    assert abs(est.sigma2 - 0.5) <= 3 * est.stderr


def test_clt_coboundary_vanishes(mane_spec):
    seeds = uniform_seeds(7, 4)
    base = clt_variance(mane_spec, COS_E1, seeds, 2000, 50)
    cob = clt_variance(mane_spec, Coboundary(mane_spec, COS_E1), seeds, 2000, 50)
    assert 0.0 <= cob.sigma2 <= base.stderr
    assert cob.sigma2 < 1e-2 * base.sigma2


def test_parameter_sweep_small():
    pts = parameter_sweep([0.0, 0.05], n_seeds=30, n_transient=200, n_avg=20000, rng_seed=3)
    assert [p.valid for p in pts] == [True, True]
    assert all(p.report.cluster_count == 1 for p in pts)
    assert np.max(np.abs(pts[0].fingerprint - lebesgue_fingerprint())) <= 0.05
    assert pts[1].distance_to_previous <= 0.05


def test_parameter_sweep_flags_invalid_points():
    pts = parameter_sweep([0.05, 0.3], n_seeds=10, n_avg=10 ** 4, n_transient=0)
    assert pts[1].valid is False and pts[1].flags
    with pytest.raises(ValueError):
        parameter_sweep([0.05, 0.01])
