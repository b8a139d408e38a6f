"""Empirical measures, clustering of fingerprints, basins, correlations and CLT variance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from . import kernels
from .cocycle import DEFAULT_WARMUP, ftle_batch, ftle_generic, inverse_map_callables
from .hyptimes import fit_survival, TailCurve
from .parallel import map_chunks, uniform_seeds
from .torus import InvalidMapError, dictionary_modes, mane, validate_mane_spec

UNRESOLVED = -1
MODES = dictionary_modes(2)
N_AVERAGES = 2 * len(MODES)
HIST_BINS = 16
MIN_N_AVG = 10 ** 4


# --------------------------------------------------------------------------
# observables


@dataclass(frozen=True)
class Observable:
    """``cos`` or ``sin`` of ``2 pi <m, x>`` with integer ``|m|_inf <= 3``."""

    m: tuple
    kind: str = "cos"
    name: str = ""

    def __post_init__(self):
        m = tuple(int(v) for v in self.m)
        if len(m) != 3 or max(abs(v) for v in m) > 3:
            raise ValueError("frequency must be an integer 3-vector with |m|_inf <= 3")
        if self.kind not in ("cos", "sin"):
            raise ValueError("kind must be 'cos' or 'sin'")
        object.__setattr__(self, "m", m)
        if not self.name:
            object.__setattr__(self, "name", f"{self.kind}_{'_'.join(map(str, m))}")

    def __call__(self, X):
        ph = 2.0 * np.pi * (np.asarray(X) @ np.asarray(self.m, dtype=np.float64))
        return np.cos(ph) if self.kind == "cos" else np.sin(ph)


@dataclass(frozen=True)
class TentObservable:
    """Product of Hoelder tents ``prod_i (2 |((x_i + s_i) mod 1) - 1/2|)^alpha``."""

    shift: tuple = (0.0, 0.0, 0.0)
    alpha: float = 1.0
    name: str = ""

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("Hoelder exponent must lie in (0, 1]")
        if not self.name:
            object.__setattr__(self, "name", f"tent{self.alpha:g}_" + "_".join(f"{v:g}" for v in self.shift))

    def __call__(self, X):
        t = 2.0 * np.abs(np.mod(np.asarray(X) + np.asarray(self.shift), 1.0) - 0.5)
        return np.prod(t ** self.alpha, axis=-1)


@dataclass(frozen=True)
class Coboundary:
    """``psi o f - psi`` for a map spec and a base observable."""

    spec: object
    base: object
    name: str = "coboundary"

    def __call__(self, X):
        X = np.atleast_2d(X)
        return self.base(kernels.apply_batch(self.spec.params, X)) - self.base(X)


def constant(value=1.0):
    def f(X):
        return np.full(np.atleast_2d(X).shape[0], float(value))
    f.name = f"const{value:g}"
    return f


# --------------------------------------------------------------------------
# empirical measures


@dataclass
class EmpiricalMeasure:
    averages: np.ndarray   # cos then sin for each dictionary mode
    histogram: np.ndarray  # 16^3 cell masses
    n_avg: int
    seed_point: np.ndarray

    @property
    def fingerprint(self):
        return self.averages


def dictionary_labels():
    out = []
    for m in MODES:
        tag = "_".join(str(int(v)) for v in m)
        out.append(f"cos_{tag}")
        out.append(f"sin_{tag}")
    return out


def _sums_to_averages(re, im, n_avg):
    A = np.empty((re.shape[0], 2 * re.shape[1]))
    A[:, 0::2] = re / n_avg
    A[:, 1::2] = im / n_avg
    return A


def _birkhoff_chunk(prm, n_transient, n_avg, X):
    re, im, hist, _ = kernels.birkhoff_sums(prm, X, int(n_transient), int(n_avg), MODES)
    return _sums_to_averages(re, im, n_avg), hist


def birkhoff_batch(spec, X, n_transient, n_avg, workers=1):
    """Empirical measures for every row of ``X``; deterministic for any worker count."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    fn = partial(_birkhoff_chunk, spec.params, int(n_transient), int(n_avg))
    parts = map_chunks(fn, (X,), workers)
    out = []
    row = 0
    for avg, hist in parts:
        for a, h in zip(avg, hist):
            out.append(EmpiricalMeasure(a, h / float(n_avg), int(n_avg), X[row].copy()))
            row += 1
    return out


def dictionary_averages(spec, X, n_transient, n_avg, workers=1):
    return np.array([m.averages for m in birkhoff_batch(spec, X, n_transient, n_avg, workers)])


def birkhoff(spec, x, n_transient, n_avg):
    if n_avg < MIN_N_AVG:
        raise ValueError(f"n_avg must be at least {MIN_N_AVG}")
    return birkhoff_batch(spec, np.asarray(x)[None, :], n_transient, n_avg)[0]


def birkhoff_observable(spec, x, fn, n_transient, n_avg, block=4096):
    """Time average of an arbitrary observable, compensated summation."""
    X = np.asarray(x, dtype=np.float64)[None, :]
    X = kernels.iterate(spec.params, X, int(n_transient))
    partials = []
    left = int(n_avg)
    while left > 0:
        k = min(block, left)
        traj = kernels.trajectory(spec.params, X[0], k)
        partials.append(math.fsum(np.asarray(fn(traj[1:]), dtype=np.float64)))
        X = traj[-1:]
        left -= k
    return math.fsum(partials) / n_avg


# --------------------------------------------------------------------------
# clustering and basins


@dataclass
class BasinReport:
    cluster_count: int
    centroids: list
    assignment: np.ndarray
    coverage: float
    raw_cluster_count: int
    eps: float
    flags: list = field(default_factory=list)

    def summary(self):
        return {
            "cluster_count": self.cluster_count,
            "raw_cluster_count": self.raw_cluster_count,
            "coverage": self.coverage,
            "eps": self.eps,
            "flags": list(self.flags),
        }


def _fingerprint_matrix(measures):
    if isinstance(measures, np.ndarray):
        return np.atleast_2d(measures)
    return np.array([m.averages if isinstance(m, EmpiricalMeasure) else m for m in measures])


def raw_clusters(F, eps):
    """Single-linkage components at sup-metric threshold ``eps`` (labels from 0)."""
    if F.shape[0] == 1:
        return np.zeros(1, dtype=np.int64)
    Z = linkage(F, method="single", metric="chebyshev")
    lab = fcluster(Z, t=eps, criterion="distance")
    # relabel by first appearance for determinism
    _, first, inv = np.unique(lab, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inv]


def cluster_measures(measures, eps=0.05, min_fraction=0.05):
    """Count physical-measure candidates among fingerprints.

    Single linkage at ``eps``; clusters holding at least ``min_fraction`` of the
    seeds are kept, their centroids merged while closer than ``2 eps``, and each
    seed assigned to the nearest centroid within ``2 eps`` (else UNRESOLVED).
    """
    F = _fingerprint_matrix(measures)
    n = F.shape[0]
    if n < 2:
        raise ValueError("need at least two measures")
    if eps <= 0:
        raise ValueError("eps must be positive")
    lab = raw_clusters(F, eps)
    sizes = np.bincount(lab)
    major = [c for c in range(sizes.size) if sizes[c] >= min_fraction * n]
    members = [np.flatnonzero(lab == c) for c in major]
    merged = True
    while merged and len(members) > 1:
        merged = False
        cents = [F[g].mean(axis=0) for g in members]
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                if np.max(np.abs(cents[i] - cents[j])) <= 2 * eps:
                    members[i] = np.sort(np.concatenate([members[i], members[j]]))
                    del members[j]
                    merged = True
                    break
            if merged:
                break
    cents = [F[g].mean(axis=0) for g in members]
    assign = np.full(n, UNRESOLVED, dtype=np.int64)
    if cents:
        C = np.array(cents)
        d = np.max(np.abs(F[:, None, :] - C[None, :, :]), axis=2)
        best = np.argmin(d, axis=1)
        ok = d[np.arange(n), best] <= 2 * eps
        assign[ok] = best[ok]
    coverage = float(np.mean(assign != UNRESOLVED))
    flags = []
    if coverage < 0.95:
        flags.append("high unresolved fraction")
    return BasinReport(len(cents), cents, assign, coverage, int(sizes.size), float(eps), flags)


def jittered_grid(g, rng):
    idx = np.stack(np.meshgrid(*(np.arange(g),) * 3, indexing="ij"), axis=-1).reshape(-1, 3)
    return (idx + rng.random(idx.shape)) / g


def basin_map(spec, g=6, n_transient=1000, n_avg=10 ** 5, eps=0.05, rng_seed=0, workers=1):
    """Fingerprints on a jittered ``g^3`` grid, clustered.  Returns (report, seeds, F)."""
    if g < 5:
        raise ValueError("grid size must be at least 5")
    seeds = jittered_grid(int(g), np.random.default_rng(rng_seed))
    F = dictionary_averages(spec, seeds, n_transient, n_avg, workers)
    return cluster_measures(F, eps), seeds, F


@dataclass
class CenterExponentReport:
    mean: float
    stderr: float
    values: np.ndarray

    @property
    def positive(self):
        return bool(self.mean > 3.0 * self.stderr)


def center_exponent_of_cluster(spec, seeds, n=10 ** 4, warmup=DEFAULT_WARMUP, reflected=False):
    """Mean middle finite-time exponent over seeds with its standard error."""
    seeds = np.atleast_2d(np.asarray(seeds, dtype=np.float64))
    if seeds.shape[0] < 10:
        raise ValueError("need at least 10 seeds")
    if reflected:
        step, jac = inverse_map_callables(spec)
        vals = np.array([ftle_generic(step, jac, x, n, warmup).center for x in seeds])
    else:
        vals = ftle_batch(spec, seeds, n, warmup)[:, 1]
    se = float(vals.std(ddof=1) / np.sqrt(vals.size))
    return CenterExponentReport(float(vals.mean()), se, vals)


# --------------------------------------------------------------------------
# correlations


@dataclass
class CorrelationSeries:
    phi: object
    psi: object
    n_grid: np.ndarray
    C: np.ndarray
    floors: np.ndarray
    noise_floor: float
    sample_size: int
    mode: str
    fit_d: float = float("nan")
    fit_r2: float = float("nan")
    n_fit_points: int = 0
    flags: list = field(default_factory=list)


def _corr_chunk(prm, phi, psi, n_max, n_transient, T, phi_mean, X):
    X = kernels.iterate(prm, X, int(n_transient))
    s_ab = [[] for _ in range(n_max + 1)]
    s_ab2 = [[] for _ in range(n_max + 1)]
    window = []
    for t in range(T + n_max):
        if t < T:
            a = phi(X)
            const = np.all(a == a[0]) and abs(phi_mean - a[0]) <= 1e-15 * max(1.0, abs(a[0]))
            a = np.zeros_like(a) if const else a - phi_mean
            window.append(a)
        b = psi(X)
        for k in range(n_max + 1):
            if 0 <= t - k < T:
                ab = window[t - k] * b
                s_ab[k].append(math.fsum(ab))
                s_ab2[k].append(math.fsum(ab * ab))
        if t >= n_max:
            window[t - n_max] = None
        X = kernels.apply_batch(prm, X)
    return np.array([math.fsum(v) for v in s_ab]), np.array([math.fsum(v) for v in s_ab2])


def _phi_sum_chunk(prm, phi, n_transient, T, X):
    X = kernels.iterate(prm, X, int(n_transient))
    acc = []
    for _ in range(T):
        acc.append(math.fsum(phi(X)))
        X = kernels.apply_batch(prm, X)
    return math.fsum(acc)


def correlation(spec, phi, psi, n_max, seeds, mode="lebesgue", n_transient=10 ** 4,
                orbit_length=1, workers=1, chunk=4096):
    """Estimate ``C(n) = E[phi . psi o f^n] - E[phi] E[psi o f^n]``.

    ``lebesgue`` mode uses the seeds themselves as the ensemble.  ``measure``
    mode runs every seed ``n_transient`` steps first and then also averages
    over ``orbit_length`` consecutive times along each orbit.  The floor at lag
    n is three standard errors of the product average.
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=np.float64))
    N = seeds.shape[0]
    if N < 200:
        raise ValueError("ensemble must contain at least 200 seeds")
    if mode not in ("lebesgue", "measure"):
        raise ValueError("mode must be 'lebesgue' or 'measure'")
    nt = 0 if mode == "lebesgue" else int(n_transient)
    T = 1 if mode == "lebesgue" else int(orbit_length)
    n_max = int(n_max)
    S = N * T
    parts = map_chunks(partial(_phi_sum_chunk, spec.params, phi, nt, T), (seeds,), workers, chunk)
    phi_mean = math.fsum(parts) / S
    parts = map_chunks(partial(_corr_chunk, spec.params, phi, psi, n_max, nt, T, phi_mean),
                       (seeds,), workers, chunk)
    s_ab = np.array([math.fsum(col) for col in zip(*(p[0] for p in parts))])
    s_ab2 = np.array([math.fsum(col) for col in zip(*(p[1] for p in parts))])
    # phi is centred, so mean(phi_c psi_n) = E[phi psi_n] - E[phi] E[psi_n]
    C = s_ab / S
    var = np.maximum(s_ab2 / S - C * C, 0.0)
    floors = 3.0 * np.sqrt(var) / np.sqrt(S)
    series = CorrelationSeries(phi, psi, np.arange(n_max + 1), C, floors,
                               float(floors.max()), S, mode)
    fit_decay(series)
    return series


def _line_fit(x, y):
    A = np.vstack([np.ones_like(x), x]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss if ss > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


def fit_decay(series, floor=None, n_grid=None, min_points=4):
    """Exponential rate of a correlation series or survival curve.

    For correlations the fit uses the initial run of lags with ``|C| > floor``.
    Returns ``(rate, r2)``; (nan, nan) when fewer than ``min_points`` remain.
    """
    if isinstance(series, TailCurve):
        fit_survival(series, min_points)
        return series.fit_c, series.fit_r2
    if isinstance(series, CorrelationSeries):
        C, floors, n = series.C, series.floors, series.n_grid
    else:
        C = np.asarray(series, dtype=np.float64)
        floors = np.broadcast_to(0.0 if floor is None else floor, C.shape)
        n = np.arange(C.size) if n_grid is None else np.asarray(n_grid)
    above = np.abs(C) > floors
    k = int(np.argmin(above)) if not above.all() else above.size
    rate, r2 = float("nan"), float("nan")
    if k >= min_points:
        _, slope, r2 = _line_fit(n[:k].astype(np.float64), np.log(np.abs(C[:k])))
        rate = -slope
    if isinstance(series, CorrelationSeries):
        series.fit_d, series.fit_r2, series.n_fit_points = rate, r2, k
        if k < min_points:
            series.flags.append("fit refused: too few points above the noise floor")
    return rate, r2


def exact_character_correlation(matrix, phi, psi, n):
    """Lebesgue correlation of two characters under the linear automorphism.

    ``psi o A^n`` is the character with frequency ``(A^T)^n m_psi``, so the
    integral is nonzero only when that frequency equals ``+-m_phi``.
    """
    At = np.asarray(matrix, dtype=object).T
    k = np.asarray(psi.m, dtype=object)
    for _ in range(int(n)):
        k = At.dot(k)
    a = tuple(int(v) for v in phi.m)
    b = tuple(int(v) for v in k)
    neg = tuple(-v for v in b)

    def mean_of(m, kind):
        return (1.0 if kind == "cos" else 0.0) if not any(m) else 0.0

    if not any(a) or not any(b):
        e = mean_of(a, phi.kind) * mean_of(b, psi.kind)
    else:
        same, opp = float(a == b), float(a == neg)
        if phi.kind == "cos" and psi.kind == "cos":
            e = 0.5 * (same + opp)
        elif phi.kind == "sin" and psi.kind == "sin":
            e = 0.5 * (same - opp)
        else:
            e = 0.0
    return e - mean_of(a, phi.kind) * mean_of(b, psi.kind)


def exact_vanishing_lag(matrix, phi, psi, n_max=50):
    """Smallest n0 with exact correlation zero for all n0 <= n <= n_max."""
    vals = [exact_character_correlation(matrix, phi, psi, n) for n in range(n_max + 1)]
    n0 = n_max + 1
    for n in range(n_max, -1, -1):
        if vals[n] != 0.0:
            break
        n0 = n
    return n0


# --------------------------------------------------------------------------
# CLT variance


@dataclass
class CltEstimate:
    sigma2: float
    stderr: float
    batch_count: int
    batch_length: int


def batch_means_variance(values, batch_count):
    """Batch-means estimate of ``lim Var(S_n)/n`` for a single stationary series."""
    if batch_count < 20:
        raise ValueError("batch_count must be at least 20")
    v = np.asarray(values, dtype=np.float64)
    m = v.size // batch_count
    if m < 1:
        raise ValueError("series shorter than the batch count")
    means = v[: m * batch_count].reshape(batch_count, m).mean(axis=1)
    s2 = float(m * means.var(ddof=1))
    return CltEstimate(s2, s2 * math.sqrt(2.0 / (batch_count - 1)), int(batch_count), int(m))


def _clt_chunk(prm, phi, n_transient, total, batch_count, X):
    out = []
    for x in X:
        x = kernels.iterate(prm, x[None, :], int(n_transient))[0]
        traj = kernels.trajectory(prm, x, int(total))[1:]
        out.append(batch_means_variance(phi(traj), batch_count).sigma2)
    return np.array(out)


def clt_variance(spec, phi, seeds, n, batch_count=50, n_transient=1000, workers=1):
    """Batch means over orbits of length ``n * batch_count``, averaged over seeds."""
    if batch_count < 20:
        raise ValueError("batch_count must be at least 20")
    seeds = np.atleast_2d(np.asarray(seeds, dtype=np.float64))
    fn = partial(_clt_chunk, spec.params, phi, int(n_transient), int(n) * int(batch_count),
                 int(batch_count))
    vals = np.concatenate(map_chunks(fn, (seeds,), workers, chunk=1))
    if vals.size > 1:
        se = float(vals.std(ddof=1) / math.sqrt(vals.size))
    else:
        se = float(vals[0] * math.sqrt(2.0 / (batch_count - 1)))
    return CltEstimate(float(vals.mean()), se, int(batch_count), int(n))


# --------------------------------------------------------------------------
# parameter sweep


@dataclass
class SweepPoint:
    value: float
    valid: bool
    report: BasinReport | None
    fingerprint: np.ndarray | None
    distance_to_previous: float = float("nan")
    flags: list = field(default_factory=list)


def lebesgue_fingerprint():
    """Dictionary averages of Lebesgue measure: every nonconstant character integrates to 0."""
    return np.zeros(N_AVERAGES)


def parameter_sweep(values, parameter="rho", base_rho=0.05, n_seeds=200, n_transient=1000,
                    n_avg=10 ** 5, eps=0.05, rng_seed=0, workers=1, validation_grid=32,
                    matrix=None):
    """Physical-measure fingerprints along a grid of bump radii or strengths."""
    vals = [float(v) for v in values]
    if any(b < a for a, b in zip(vals, vals[1:])):
        raise ValueError("parameter grid must be monotone non-decreasing")
    seeds = uniform_seeds(rng_seed, int(n_seeds))
    out = []
    prev = None
    for v in vals:
        kw = {} if matrix is None else {"matrix": matrix}
        try:
            spec = mane(rho=v, **kw) if parameter == "rho" else mane(rho=base_rho, delta=v, **kw)
        except InvalidMapError as exc:
            out.append(SweepPoint(v, False, None, None, flags=[f"invalid: {exc}"]))
            continue
        if spec.rho > 0.0:
            rep = validate_mane_spec(spec, validation_grid)
            if not rep.passed:
                out.append(SweepPoint(v, False, None, None, flags=["validation failed"] + rep.messages))
                continue
        F = dictionary_averages(spec, seeds, n_transient, n_avg, workers)
        report = cluster_measures(F, eps)
        big = int(np.argmax([np.sum(report.assignment == i) for i in range(report.cluster_count)])) \
            if report.cluster_count else None
        fp = report.centroids[big] if big is not None else None
        pt = SweepPoint(v, True, report, fp)
        if prev is not None and fp is not None:
            pt.distance_to_previous = float(np.max(np.abs(fp - prev)))
        if fp is not None:
            prev = fp
        out.append(pt)
    return out
