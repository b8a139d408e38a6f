"""Periodic points, stable indices, shadowing of quasi-hyperbolic segments and
skeleton candidates with local unstable disks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .cocycle import DEFAULT_WARMUP, contraction_series_batch
from .hyptimes import adapted_distance, hyperbolic_time_mask
from .torus import (
    AnosovSpec,
    derivative,
    int_matrix_power,
    lattice_solutions,
    min_image,
    orbit,
    torus_distance,
    wrap,
)

log = logging.getLogger(__name__)

MAX_PERIOD = 6
SEED_GRID = 32
MERGE_DISTANCE = 1e-8
MAX_MERGE_RADIUS = 1e-4
RESIDUAL_TOL = 1e-10
UNIT_BAND = 1e-8


@dataclass
class PeriodicOrbit:
    period: int
    points: np.ndarray          # (period, 3), points[0] is the base point
    multipliers: np.ndarray     # sorted by modulus, ascending
    stable_index: int
    residual: float
    hyperbolic: bool

    @property
    def point(self):
        return self.points[0]

    @property
    def moduli(self):
        return np.abs(self.multipliers)


@dataclass
class QuasiHyperbolicSegment:
    start: np.ndarray
    length: int
    lam: float
    endpoint_gap: float
    start_index: int = 0


@dataclass
class ShadowResult:
    success: bool
    orbit: PeriodicOrbit | None
    newton_steps: int
    shadow_distance: float
    l_shadow: float
    message: str = ""


@dataclass
class SkeletonCandidate:
    saddles: list
    pairwise_related: np.ndarray
    P: int
    groups: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    @property
    def size(self):
        return len(self.saddles)

    def to_record(self):
        return {
            "size": self.size,
            "P": self.P,
            "representatives": [
                {
                    "period": s.period,
                    "point": [float(v) for v in s.point],
                    "multipliers": [float(v) for v in np.real(s.multipliers)],
                    "stable_index": s.stable_index,
                }
                for s in self.saddles
            ],
            "pairwise_related": self.pairwise_related.astype(int).tolist(),
            "groups": [list(map(int, g)) for g in self.groups],
            "flags": list(self.flags),
        }


@dataclass
class UnstableDisk:
    points: np.ndarray
    center: np.ndarray
    radius: float
    basis: np.ndarray             # (3, 2) expanding directions at the center
    invariance_residual: float


# --------------------------------------------------------------------------
# lifts and period maps


def _lift_apply(spec, X):
    """The map on the universal cover, for lifted points X (N, 3)."""
    AX = X @ spec.A.T
    Y = kernels.apply_batch(spec.params, wrap(X))
    return AX + min_image(Y - AX)


def _period_map(spec, X, n):
    """Lifted ``f^n(X)`` and the Jacobian product ``D(f^n)`` at X."""
    J = np.broadcast_to(np.eye(3), (X.shape[0], 3, 3)).copy()
    Y = X
    for _ in range(n):
        J = derivative(spec, wrap(Y)).reshape(-1, 3, 3) @ J
        Y = _lift_apply(spec, Y)
    return Y, J


def _newton(spec, X, n, max_iter=100, tol=1e-14):
    """Batched Newton on ``f^n(x) - x - k = 0`` over the lift.

    The integer translation k is re-chosen at every step as the rounding of the
    displacement.  Returns (X, steps, converged) per seed.
    """
    X = wrap(np.array(X, dtype=np.float64))
    N = X.shape[0]
    steps = np.zeros(N, dtype=np.int64)
    active = np.ones(N, dtype=bool)
    eye = np.eye(3)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Y, J = _period_map(spec, X[idx], n)
        R = Y - X[idx]
        R -= np.round(R)
        scale = np.maximum(1.0, np.abs(Y).max(axis=1))
        small = np.max(np.abs(R), axis=1) <= tol * scale
        try:
            dX = np.linalg.solve(J - eye, R[..., None])[..., 0]
        except np.linalg.LinAlgError:
            dX = np.array([np.linalg.lstsq(Jk - eye, r, rcond=None)[0] for Jk, r in zip(J, R)])
        dX[small] = 0.0
        X[idx] = wrap(X[idx] - dX)
        steps[idx[~small]] += 1
        done = small | (np.max(np.abs(dX), axis=1) <= tol * scale)
        active[idx[done]] = False
    return X, steps, ~active


def _root_radius(spec, X, n):
    """Uncertainty of Newton roots: rounding floor of the residual divided by the
    smallest singular value of ``D(f^n) - I``, capped at MAX_MERGE_RADIUS."""
    Y, J = _period_map(spec, X, n)
    R = Y - X
    R -= np.round(R)
    res = np.linalg.norm(R, axis=1)
    sig = np.linalg.svd(J - np.eye(3), compute_uv=False)[:, -1]
    noise = np.maximum(res, 4.0 * np.finfo(float).eps * np.abs(Y).max(axis=1))
    return res, np.minimum(10.0 * noise / np.maximum(sig, 1e-300), MAX_MERGE_RADIUS)


def _snap_to_p(spec, X, n, radii):
    """Replace stalled iterates near the degenerate fixed point by ``p`` itself.

    Newton converges only linearly to p, whose center multiplier is exactly 1,
    and stalls at distance ~eps^(1/3); those iterates are not distinct roots.
    """
    if spec.rho == 0.0:
        return X
    X = X.copy()
    for i in range(X.shape[0]):
        pts = orbit(spec, X[i], n)[:-1]
        d = torus_distance(pts, spec.p[None, :])
        if d.min() <= radii[i]:
            X[i] = spec.p
    return X


def orbit_residual(spec, x, n):
    pts = orbit(spec, x, n)
    return float(torus_distance(pts[-1], pts[0]))


def classify(points, spec):
    """Multipliers (by modulus) and stable index of a periodic orbit.

    Returns ``(multipliers, stable_index, hyperbolic)``; an orbit is flagged
    non-hyperbolic when some multiplier modulus lies within 1e-8 of 1.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    J = np.eye(3)
    for D in derivative(spec, points).reshape(-1, 3, 3):
        J = D @ J
    mu = np.linalg.eigvals(J)
    mu = mu[np.argsort(np.abs(mu))]
    if np.all(np.abs(mu.imag) <= 1e-12 * np.maximum(1.0, np.abs(mu))):
        mu = mu.real
    mod = np.abs(mu)
    hyperbolic = not np.any(np.abs(mod - 1.0) <= UNIT_BAND)
    return mu, int(np.sum(mod < 1.0)), hyperbolic


def _minimal_period(spec, x, n, tol=1e-9):
    pts = orbit(spec, x, n)
    for d in range(1, n + 1):
        if n % d == 0 and torus_distance(pts[d], pts[0]) <= tol:
            return d
    return n


def make_orbit(spec, x, n):
    """A PeriodicOrbit record for a point of period dividing ``n``."""
    x = wrap(np.asarray(x, dtype=np.float64))
    per = _minimal_period(spec, x, n)
    pts = orbit(spec, x, per)
    residual = float(torus_distance(pts[-1], pts[0]))
    mu, i_s, hyp = classify(pts[:-1], spec)
    return PeriodicOrbit(per, pts[:-1], mu, i_s, residual, hyp)


def _merge(points, radii, residuals):
    """Greedy duplicate merging, best residual first; deterministic."""
    order = np.lexsort(tuple(points.T[::-1]) + (residuals,))
    kept, kept_r = [], []
    for i in order:
        x = points[i]
        dup = False
        for y, ry in zip(kept, kept_r):
            if torus_distance(x, y) <= max(MERGE_DISTANCE, radii[i] + ry):
                dup = True
                break
        if not dup:
            kept.append(x)
            kept_r.append(radii[i])
    return np.array(kept).reshape(-1, 3)


def linear_periodic_points(matrix, n):
    M = int_matrix_power(matrix, n)
    for i in range(3):
        M[i][i] -= 1
    ys, D = lattice_solutions(M)
    return np.array(ys, dtype=np.float64) / D


def _ball_seeds(spec, grid):
    h = 2.0 / grid
    t = -1.0 + h * (np.arange(grid) + 0.5)
    Xi = np.stack(np.meshgrid(t, t, t, indexing="ij"), axis=-1).reshape(-1, 3)
    Xi = Xi[np.einsum("ij,ij->i", Xi, Xi) < 1.0] * spec.rho
    G, _ = spec.frame
    return wrap(spec.p + Xi @ G.T)


def find_periodic(spec, n, grid=SEED_GRID):
    """All points of period dividing ``n`` (1 <= n <= 6), one record per point."""
    n = int(n)
    if not 1 <= n <= MAX_PERIOD:
        raise ValueError(f"period must be in 1..{MAX_PERIOD}, got {n}")
    lin = linear_periodic_points(spec.matrix, n)
    if isinstance(spec, AnosovSpec) or spec.rho == 0.0:
        return [make_orbit(spec, x, n) for x in lin]
    seeds = np.vstack([lin, _ball_seeds(spec, grid)])
    X, _, conv = _newton(spec, seeds, n)
    res, radii = _root_radius(spec, X, n)
    ok = conv & (res <= RESIDUAL_TOL)
    if np.any(~ok):
        log.info("period %d: dropped %d of %d seeds (Newton failure)", n, int((~ok).sum()), len(seeds))
    X = _snap_to_p(spec, X[ok], n, radii[ok])
    res, radii = _root_radius(spec, X, n)
    pts = _merge(X, radii, res)
    return [make_orbit(spec, x, n) for x in pts]


# --------------------------------------------------------------------------
# quasi-hyperbolic recurrence and shadowing


def quasi_hyperbolic_recurrence(spec, x, lam, rho, L, max_length=8, max_segments=None,
                                warmup=DEFAULT_WARMUP):
    """Orbit segments between hyperbolic times whose endpoints nearly coincide.

    Hyperbolic times use the threshold ``-log lam``.  A segment starts at a
    hyperbolic time ``n_i`` and ends at a later one ``n_j`` with
    ``n_j - n_i <= max_length`` and ``d(f^{n_i}x, f^{n_j}x) <= rho``.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError("lam must lie in (0, 1)")
    if rho > 0.05:
        raise ValueError("rho must be at most 0.05")
    L = int(L)
    x = np.asarray(x, dtype=np.float64)
    a = contraction_series_batch(spec, x, L, warmup)[0]
    ht = np.flatnonzero(hyperbolic_time_mask(a, -np.log(lam))) + 1
    if ht.size < 2:
        return []
    pts = orbit(spec, x, L)
    out = []
    for lag in range(1, int(max_length) + 1):
        # pairs of hyperbolic times exactly ``lag`` apart
        is_ht = np.zeros(L + 1, dtype=bool)
        is_ht[ht] = True
        starts = ht[(ht + lag <= L)]
        starts = starts[is_ht[starts + lag]]
        if starts.size == 0:
            continue
        gaps = torus_distance(pts[starts], pts[starts + lag])
        for i in np.flatnonzero(gaps <= rho):
            s = int(starts[i])
            out.append(QuasiHyperbolicSegment(pts[s].copy(), lag, float(lam), float(gaps[i]), s))
    out.sort(key=lambda seg: (seg.start_index, seg.length))
    if max_segments is not None:
        out = out[: int(max_segments)]
    return out


def linear_shadow_bound(spec):
    k1, k2, _ = spec.eigenvalues
    return 1.0 / (1.0 - k1) + 1.0 / (k2 - 1.0)


def shadow_to_periodic(spec, segment, max_iter=100, tol=1e-14):
    """Newton on the lifted period map, seeded at the segment start."""
    n = int(segment.length)
    x0 = wrap(np.asarray(segment.start, dtype=np.float64))
    X, steps, conv = _newton(spec, x0[None, :], n, max_iter=max_iter, tol=tol)
    _, radius = _root_radius(spec, X, n)
    p = _snap_to_p(spec, X, n, radius)[0]
    res = orbit_residual(spec, p, n)
    if not conv[0] or res > RESIDUAL_TOL:
        return ShadowResult(False, None, int(steps[0]), np.nan, np.nan,
                            f"Newton failed (residual {res:.3g})")
    po = make_orbit(spec, p, n)
    seg_orbit = orbit(spec, x0, n)
    per_orbit = orbit(spec, p, n)
    dist = float(adapted_distance(spec, seg_orbit, per_orbit).max())
    # ratio taken in the adapted metric at both ends
    gap = float(adapted_distance(spec, seg_orbit[-1], seg_orbit[0]))
    l_shadow = dist / gap if gap > 0 else 0.0
    return ShadowResult(True, po, int(steps[0]), dist, l_shadow)


def orbit_conorm_series(spec, po, repeats=1, warmup=DEFAULT_WARMUP):
    """Co-norm series ``a`` along a periodic orbit for ``repeats`` periods."""
    return contraction_series_batch(spec, po.point, po.period * repeats, warmup)[0]


def satisfies_quasi_hyperbolic(spec, po, lam, slack=1e-3, warmup=DEFAULT_WARMUP):
    """Whether the orbit's period is a hyperbolic time for ``-log lam - slack``."""
    a = orbit_conorm_series(spec, po, 1, warmup)
    return bool(hyperbolic_time_mask(a, -np.log(lam) - slack)[-1])


# --------------------------------------------------------------------------
# unstable disks and skeletons


def _expanding_frame(spec, po):
    J = np.eye(3)
    for D in derivative(spec, po.points).reshape(-1, 3, 3):
        J = D @ J
    mu, vec = np.linalg.eig(J)
    order = np.argsort(np.abs(mu))
    mu, vec = np.real(mu[order]), np.real(vec[:, order])
    return mu, vec


def unstable_disk(spec, saddle, r=0.05, m=1000, rng=None, periods=None):
    """``m`` points on the local unstable manifold of a saddle with i_s = 1.

    A small ellipse in the expanding eigenplane of the period map is pushed
    forward by whole periods so that its linearized image is the round disk of
    adapted radius ``r``; the image is trimmed to that ball.  The reported
    residual is the largest adapted offset of disk points along the
    contracting eigendirection, which vanishes for a flat linear disk.
    """
    if r > 0.05:
        raise ValueError("disk radius must be at most 0.05")
    if saddle.stable_index != 1 or not saddle.hyperbolic:
        raise ValueError("unstable disks need a hyperbolic saddle with stable index 1")
    rng = np.random.default_rng(rng)
    x0 = saddle.point
    mu, vec = _expanding_frame(spec, saddle)
    G, Gi = spec.frame
    basis = vec[:, 1:]
    if r == 0.0:
        return UnstableDisk(np.repeat(x0[None, :], m, axis=0), x0, 0.0, basis, 0.0)
    # adapted-frame images of the two expanding directions
    E = Gi @ basis
    if periods is None:
        periods = max(1, int(np.ceil(np.log(1e3) / np.log(abs(mu[1])))))
    scale = np.abs(mu[1:]) ** periods
    pts = []
    need = m
    tries = 0
    while need > 0:
        tries += 1
        if tries > 20:
            raise RuntimeError("trim starvation: disk points escape the r-ball")
        k = 2 * need + 16
        rad = r * np.sqrt(rng.random(k))
        th = 2.0 * np.pi * rng.random(k)
        # coefficients c with |E c| = rad after the linearized push-forward
        target = np.stack([rad * np.cos(th), rad * np.sin(th)], axis=1)
        Q, R = np.linalg.qr(E)
        coef = np.linalg.solve(R, target.T).T / scale
        Y = wrap(x0 + coef @ basis.T)
        Y = kernels.iterate(spec.params, Y, saddle.period * periods)
        d = adapted_distance(spec, Y, x0[None, :])
        Y = Y[d <= r]
        pts.append(Y[:need])
        need -= min(need, Y.shape[0])
    P = np.vstack(pts)[:m]
    s_dir = vec[:, 0]
    w = np.linalg.inv(vec)[0]
    off = np.abs(min_image(P - x0) @ w) * np.linalg.norm(Gi @ s_dir)
    return UnstableDisk(P, x0, float(r), basis, float(off.max(initial=0.0)))


def _related_groups(rel):
    n = rel.shape[0]
    label = -np.ones(n, dtype=np.int64)
    groups = []
    for i in range(n):
        if label[i] >= 0:
            continue
        stack, comp = [i], []
        label[i] = len(groups)
        while stack:
            j = stack.pop()
            comp.append(j)
            for k in np.flatnonzero(rel[j]):
                if label[k] < 0:
                    label[k] = len(groups)
                    stack.append(k)
        groups.append(sorted(comp))
    return groups


def saddle_fingerprint(spec, saddle, r=0.01, m=16, n_transient=1000, n_avg=10**5, rng=0):
    """Mean dictionary averages of orbits started on a small unstable disk."""
    from .measures import dictionary_averages

    disk = unstable_disk(spec, saddle, r=r, m=m, rng=rng)
    return dictionary_averages(spec, disk.points, n_transient, n_avg).mean(axis=0)


def skeleton_candidates(spec, pool, eps=0.05, fingerprint_fn=None, **fp_kwargs):
    """Group saddles by empirical relatedness and pick one representative per group.

    Two saddles are related when the fingerprints of orbits started on their
    unstable disks agree within ``eps`` in the sup metric.  Representatives
    have minimal period, ties broken by coordinates.
    """
    pool = [s for s in pool if s.hyperbolic and s.stable_index == 1]
    if not pool:
        return SkeletonCandidate([], np.zeros((0, 0), dtype=bool), 1, [], ["empty pool"])
    if fingerprint_fn is None:
        def fingerprint_fn(s):
            return saddle_fingerprint(spec, s, **fp_kwargs)
    F = np.array([np.asarray(fingerprint_fn(s), dtype=np.float64) for s in pool])
    dist = np.max(np.abs(F[:, None, :] - F[None, :, :]), axis=2)
    rel = dist <= eps
    groups = _related_groups(rel)
    reps = []
    for g in groups:
        best = min(g, key=lambda i: (pool[i].period, tuple(np.round(pool[i].point, 12))))
        reps.append(pool[best])
    P = int(np.prod([s.period for s in reps]))
    return SkeletonCandidate(reps, rel, P, groups, [])
