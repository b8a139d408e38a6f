"""Hyperbolic times, Pliss density, expansion times and their tails.

Throughout, a series ``a`` holds ``a_n = log ||Df^{-1}|E^cu(f^n x)||`` for
``n = 1..L`` and time indices are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cocycle import ContractionSeries, contraction_series_batch
from .torus import apply, inverse_apply, iterate, min_image

CENSORED = None


def _values(series):
    if isinstance(series, ContractionSeries):
        return series.values
    return np.asarray(series, dtype=np.float64)


@dataclass
class HyperbolicTimeReport:
    b: float
    times: np.ndarray
    density: float
    first_time: int | None
    length: int


def hyperbolic_time_mask(a, b):
    """Boolean mask over n = 1..L of b-hyperbolic times.

    n qualifies iff every window sum ``a_{n-k+1} + ... + a_n <= -b k``.  With
    ``T_n = S_n + b n`` this is ``T_n <= min(T_0, ..., T_{n-1})``, one pass.
    """
    a = np.asarray(a, dtype=np.float64)
    T = np.concatenate(([0.0], np.cumsum(a + b)))
    prev_min = np.minimum.accumulate(T)[:-1]
    return T[1:] <= prev_min


def detect_hyperbolic_times(series, b):
    if b <= 0:
        raise ValueError("b must be positive")
    a = _values(series)
    if a.size < 1:
        raise ValueError("series must be non-empty")
    mask = hyperbolic_time_mask(a, b)
    times = np.flatnonzero(mask) + 1
    return HyperbolicTimeReport(
        b=float(b),
        times=times,
        density=float(times.size / a.size),
        first_time=int(times[0]) if times.size else None,
        length=int(a.size),
    )


def brute_force_hyperbolic_times(a, b):
    """O(L^2) reference: sums every backward window directly."""
    a = np.asarray(a, dtype=np.float64)
    out = []
    for n in range(1, a.size + 1):
        window_sums = np.cumsum(a[:n][::-1])
        k = np.arange(1, n + 1)
        if np.all(window_sums <= -b * k):
            out.append(n)
    return np.array(out, dtype=np.int64)


def pliss_density(series, b):
    return detect_hyperbolic_times(series, b).density


@dataclass
class ExpansionTimeRecord:
    b: float
    value: int | None
    orbit_length: int

    @property
    def censored(self):
        return self.value is None


def expansion_times(A, b):
    """Vectorized expansion times for series stacked in rows of ``A``.

    Returns an int array with -1 marking censored rows: rows whose running
    average is still ``>= -b/2`` at the horizon.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    L = A.shape[1]
    n = np.arange(1, L + 1)
    bad = np.cumsum(A, axis=1) / n >= -b / 2.0
    any_bad = bad.any(axis=1)
    last_bad = L - np.argmax(bad[:, ::-1], axis=1)  # 1-based index of last violation
    out = np.where(any_bad, last_bad + 1, 1)
    out[bad[:, -1]] = -1
    return out


def expansion_time(series, b):
    a = _values(series)
    if a.size < 1:
        raise ValueError("series must be non-empty")
    v = int(expansion_times(a, b)[0])
    return ExpansionTimeRecord(float(b), None if v < 0 else v, int(a.size))


@dataclass
class TailCurve:
    n_grid: np.ndarray
    survival: np.ndarray
    censored_count: int
    sample_size: int
    b: float
    fit_c: float = float("nan")
    fit_tau: float = 1.0
    fit_r2: float = float("nan")
    fit_log_amplitude: float = float("nan")
    stretched_c: float = float("nan")
    stretched_tau: float = float("nan")
    stretched_r2: float = float("nan")
    n_fit_points: int = 0
    flags: list = field(default_factory=list)

    def fit_record(self):
        return {
            "b": self.b,
            "fit_c": self.fit_c,
            "fit_tau": self.fit_tau,
            "fit_r2": self.fit_r2,
            "stretched_c": self.stretched_c,
            "stretched_tau": self.stretched_tau,
            "stretched_r2": self.stretched_r2,
            "n_fit_points": self.n_fit_points,
            "sample_size": self.sample_size,
            "censored_count": self.censored_count,
            "flags": list(self.flags),
        }


def _weighted_line(x, y, w):
    """Weighted least squares y ~ alpha + beta x; returns (alpha, beta, r2, sse)."""
    W = w.sum()
    xm = (w * x).sum() / W
    ym = (w * y).sum() / W
    sxx = (w * (x - xm) ** 2).sum()
    sxy = (w * (x - xm) * (y - ym)).sum()
    beta = sxy / sxx
    alpha = ym - beta * xm
    resid = y - alpha - beta * x
    sse = (w * resid ** 2).sum()
    syy = (w * (y - ym) ** 2).sum()
    r2 = 1.0 - sse / syy if syy > 0 else 1.0
    return alpha, beta, r2, sse


def fit_survival(curve, min_points=4):
    """Fill the exponential and stretched-exponential fits of a tail curve in place.

    Survival values below ``5 / sample_size`` are dropped.  The exponential fit
    has tau = 1; the stretched fit scans tau on (0, 1].  Weights are the inverse
    delta-method variances of log survival.
    """
    N = curve.sample_size
    S = curve.survival
    n = curve.n_grid.astype(np.float64)
    keep = S >= 5.0 / N
    curve.n_fit_points = int(keep.sum())
    if curve.n_fit_points < min_points:
        curve.flags.append("fit refused: too few points above the noise floor")
        return curve
    x, y = n[keep], np.log(S[keep])
    w = N * S[keep] / np.maximum(1.0 - S[keep], 1.0 / N)
    alpha, beta, r2, _ = _weighted_line(x, y, w)
    curve.fit_c, curve.fit_tau, curve.fit_r2 = float(-beta), 1.0, float(r2)
    curve.fit_log_amplitude = float(alpha)
    best = None
    for tau in np.linspace(0.02, 1.0, 50):
        a_, b_, r2_, sse = _weighted_line(x ** tau, y, w)
        if best is None or sse < best[0]:
            best = (sse, tau, -b_, r2_)
    _, curve.stretched_tau, curve.stretched_c, curve.stretched_r2 = (float(v) for v in best)
    return curve


def tail_from_series(A, b, n_max=None):
    """Survival curve of expansion times for a stack of series (rows)."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    N, L = A.shape
    n_max = L if n_max is None else min(int(n_max), L)
    E = expansion_times(A, b)
    censored = E < 0
    if censored.all():
        raise ValueError("every sample is censored; b is too large for this horizon")
    n_grid = np.arange(1, n_max + 1)
    # censored entries count as E > L, hence > n for every n <= L
    Eeff = np.where(censored, L + 1, E)
    survival = (Eeff[:, None] > n_grid[None, :]).mean(axis=0)
    curve = TailCurve(n_grid, survival, int(censored.sum()), int(N), float(b))
    if survival[0] == 0.0:
        curve.flags.append("immediate expansion")
        return curve
    return fit_survival(curve)


def tail_distribution(spec, disk, b, n_max, horizon=None, warmup=200):
    """Tail of the expansion time over points of a local unstable disk."""
    disk = np.atleast_2d(np.asarray(disk, dtype=np.float64))
    L = int(horizon or n_max)
    A = contraction_series_batch(spec, disk, L, warmup)
    return tail_from_series(A, b, n_max)


def iid_tail_probability(p_up, up, down, b, n_max, horizon):
    """Exact P(E_b > n) for i.i.d. steps: ``up`` w.p. ``p_up``, else ``down``.

    Dynamic programming over the number of ``up`` steps; used as an oracle
    for the survival estimator on synthetic coin-flip series.
    """
    L = int(horizon)
    thr = -b / 2.0

    def bad(m, h):
        return (h * up + (m - h) * down) / m >= thr

    from math import comb

    out = np.empty(n_max)
    for n in range(1, n_max + 1):
        # distribution of h at time n, restricted to paths good at time n
        h = np.arange(n + 1)
        probs = np.array([comb(n, k) for k in h], dtype=np.float64)
        probs *= p_up ** h * (1 - p_up) ** (n - h)
        probs[bad(n, h)] = 0.0
        for m in range(n + 1, L + 1):
            nxt = np.zeros(m + 1)
            nxt[:-1] += probs * (1 - p_up)
            nxt[1:] += probs * p_up
            hh = np.arange(m + 1)
            nxt[bad(m, hh)] = 0.0
            probs = nxt
        out[n - 1] = 1.0 - probs.sum()
    return out


def adapted_distance(spec, x, y):
    G, Gi = spec.frame
    return np.linalg.norm(min_image(np.asarray(x) - np.asarray(y)) @ Gi.T, axis=-1)


@dataclass
class ContractionCheck:
    factors: np.ndarray   # d(f^{n-k}x, f^{n-k}y) / d(f^n x, f^n y), k = 1..n
    bounds: np.ndarray    # exp(-k b / 2)
    ratios: np.ndarray    # factors / bounds
    max_violation_ratio: float

    @property
    def passed(self):
        return self.max_violation_ratio <= 1.0 + 1e-3


def cu_neighbor(spec, x, n, dist, direction=(0.0, 0.3, 1.0)):
    """A point y whose n-th image lies at adapted distance ``dist`` from f^n(x)
    along a direction of the center-unstable plane.

    The pull-back amplifies rounding along E^s by about ``1/k1`` per step, so
    ``n`` should stay near 10 for separations around 1e-4."""
    G, Gi = spec.frame
    xn = iterate(spec, x, n)
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    d[0] = 0.0  # stay in span(e2, e3) of the adapted frame
    d = d / np.linalg.norm(d)
    y = xn + dist * (G @ d)
    for _ in range(n):
        y = inverse_apply(spec, y)
    return y


def check_contraction_at_ht(spec, x, n, y, b, r=0.05):
    """Backward contraction along a cu-disk at a hyperbolic time ``n``.

    Verifies ``d(f^{n-k}x, f^{n-k}y) <= exp(-k b / 2) d(f^n x, f^n y)`` for
    ``1 <= k <= n`` in the adapted metric.
    """
    X = [np.asarray(x, dtype=np.float64)]
    Y = [np.asarray(y, dtype=np.float64)]
    for _ in range(n):
        X.append(apply(spec, X[-1]))
        Y.append(apply(spec, Y[-1]))
    X, Y = np.array(X), np.array(Y)
    d = adapted_distance(spec, X, Y)
    if d[n] > r:
        raise ValueError(f"d(f^n x, f^n y) = {d[n]:.3g} exceeds r = {r}")
    k = np.arange(1, n + 1)
    if d[n] == 0.0:
        factors = np.zeros(n)
    else:
        factors = d[n - k] / d[n]
    bounds = np.exp(-k * b / 2.0)
    ratios = factors / bounds
    return ContractionCheck(factors, bounds, ratios, float(ratios.max(initial=0.0)))


def default_b(spec, seeds, L=2000, warmup=200):
    """Half the median over seeds of the Birkhoff average of ``-a_n``."""
    A = contraction_series_batch(spec, seeds, L, warmup)
    return 0.5 * float(np.median(-A.mean(axis=1)))
