"""Invariant splitting, finite-time Lyapunov exponents and center-unstable co-norms.

Norms used for exponents and co-norms are taken in the eigen-adapted frame of the
base automorphism (``spec.frame``), in which the eigenvectors are orthogonal.
Exponents do not depend on the metric; the co-norm series does, and in this
frame it is exactly ``-log k2`` for the linear map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .torus import apply, derivative, inverse_apply

DEFAULT_WARMUP = 200
MIN_WARMUP = 50

# generic seed frames; perturbed if they happen to hit an invariant direction
_SEED_VEC = np.array([0.5377, 1.8339, -2.2588])
_SEED_FRAME = np.array([[0.8622, 0.3188], [-1.3077, -0.4336], [0.3426, 3.5784]])


@dataclass
class SplittingFrame:
    point: np.ndarray
    e_s: np.ndarray
    e_c: np.ndarray
    e_u: np.ndarray
    residual: float
    cu_plane: np.ndarray
    cs_plane: np.ndarray

    def min_angle(self):
        vs = (self.e_s, self.e_c, self.e_u)
        angles = []
        for i in range(3):
            for j in range(i + 1, 3):
                c = abs(float(vs[i] @ vs[j]))
                angles.append(np.arccos(min(c, 1.0)))
        return min(angles)


@dataclass
class FtleReport:
    exponents: np.ndarray  # descending
    orbit_length: int
    warmup: int

    @property
    def center(self):
        return float(self.exponents[1])


@dataclass
class ContractionSeries:
    """``values[n-1] = log ||Df^{-1}|E^cu(f^n x)||`` for n = 1..L."""

    base_point: np.ndarray
    values: np.ndarray
    warmup: int

    @property
    def length(self):
        return self.values.size

    def __len__(self):
        return self.values.size


class SplittingError(RuntimeError):
    pass


def _unit(v):
    return v / np.linalg.norm(v)


def _canonical_sign(v):
    return v if v[np.argmax(np.abs(v))] >= 0 else -v


def _seed_vector(spec):
    v = _unit(_SEED_VEC)
    V = spec.eigenvectors
    if np.min(1.0 - np.abs(V.T @ v)) < 1e-24:
        v = _unit(v + 1e-12)
    return v


def _orth(Q):
    q, _ = np.linalg.qr(Q)
    return q


def _splitting_raw(spec, x, warmup):
    x = np.asarray(x, dtype=np.float64)
    back = [x]
    for _ in range(warmup):
        back.append(inverse_apply(spec, back[-1]))
    back = np.array(back[::-1])  # f^{-w}x, ..., x
    D_back = derivative(spec, back[:-1])
    u = _seed_vector(spec)
    Q = _orth(_SEED_FRAME)
    for D in D_back:
        u = _unit(D @ u)
        Q = _orth(D @ Q)

    fwd = [x]
    for _ in range(warmup):
        fwd.append(apply(spec, fwd[-1]))
    D_fwd = derivative(spec, np.array(fwd[:-1]))  # Df at x, ..., f^{w-1}x
    s = _seed_vector(spec)
    Qs = _orth(_SEED_FRAME)
    for D in D_fwd[::-1]:
        s = _unit(np.linalg.solve(D, s))
        Qs = _orth(np.linalg.solve(D, Qs))

    n_cu = np.cross(Q[:, 0], Q[:, 1])
    n_cs = np.cross(Qs[:, 0], Qs[:, 1])
    c = _unit(np.cross(n_cu, n_cs))
    return _canonical_sign(s), _canonical_sign(c), _canonical_sign(u), Q, Qs


def _line_angle(a, b):
    return float(np.arccos(min(abs(float(_unit(a) @ _unit(b))), 1.0)))


def estimate_splitting(spec, x, warmup=DEFAULT_WARMUP, min_angle=1e-3):
    """Numerical E^s, E^c, E^u at ``x``.

    ``e_u`` and the center-unstable plane come from forward power iteration along
    the backward orbit ending at ``x``; ``e_s`` and the center-stable plane from
    backward iteration along the forward orbit.  ``e_c`` is the intersection of
    the two planes.  The residual is the largest angle between ``Df e_i(x)`` and
    the independent estimate ``e_i(f(x))``.
    """
    if warmup < MIN_WARMUP:
        raise ValueError(f"warmup must be at least {MIN_WARMUP}, got {warmup}")
    x = np.asarray(x, dtype=np.float64)
    s, c, u, Q, Qs = _splitting_raw(spec, x, warmup)
    fx = apply(spec, x)
    s1, c1, u1, _, _ = _splitting_raw(spec, fx, warmup)
    D = derivative(spec, x)
    residual = max(_line_angle(D @ s, s1), _line_angle(D @ c, c1), _line_angle(D @ u, u1))
    frame = SplittingFrame(x, s, c, u, residual, Q, Qs)
    if frame.min_angle() < min_angle:
        raise SplittingError(f"bundles nearly tangent (min angle {frame.min_angle():.3g})")
    return frame


def ftle_batch(spec, X, n, warmup=DEFAULT_WARMUP):
    """Finite-time exponents for a batch of seeds, shape (N, 3), descending."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Q = np.broadcast_to(np.eye(3), (X.shape[0], 3, 3)).copy()
    X, Q, _ = kernels.qr_steps(spec.params, X, Q, int(warmup), False)
    _, _, logsum = kernels.qr_steps(spec.params, X, Q, int(n), True)
    return -np.sort(-logsum / n, axis=1)


def ftle(spec, x, n, warmup=DEFAULT_WARMUP):
    if n < 1:
        raise ValueError("n must be positive")
    return FtleReport(ftle_batch(spec, x, n, warmup)[0], int(n), int(warmup))


def ftle_generic(step, jac, x, n, warmup=DEFAULT_WARMUP):
    """QR exponents for an arbitrary map given by callables (Euclidean frame)."""
    x = np.asarray(x, dtype=np.float64)
    Q = np.eye(3)
    acc = np.zeros(3)
    for t in range(warmup + n):
        Q, R = np.linalg.qr(jac(x) @ Q)
        d = np.diag(R)
        Q = Q * np.sign(d)
        if t >= warmup:
            acc += np.log(np.abs(d))
        x = step(x)
    return FtleReport(-np.sort(-acc / n), int(n), int(warmup))


def inverse_map_callables(spec):
    """(step, jacobian) of the inverse map, for sign checks under time reversal."""

    def step(y):
        return inverse_apply(spec, y)

    def jac(y):
        return np.linalg.inv(derivative(spec, inverse_apply(spec, y)))

    return step, jac


def _cu_seed_frames(n):
    Q = _orth(_SEED_FRAME)
    return np.broadcast_to(Q, (n, 3, 2)).copy()


def backward_points(spec, X, warmup):
    Y = np.atleast_2d(np.asarray(X, dtype=np.float64))
    for _ in range(warmup):
        Y = inverse_apply(spec, Y)
    return Y


def cu_frames(spec, X, warmup=DEFAULT_WARMUP):
    """Adapted-frame orthonormal bases (N, 3, 2) of the estimated E^cu at ``X``.

    The plane is transported forward along the backward orbit ending at each point.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = backward_points(spec, X, warmup)
    _, Q, _ = kernels.cu_steps(spec.params, Y, _cu_seed_frames(X.shape[0]), int(warmup), False)
    return Q


def contraction_series_batch(spec, X, L, warmup=DEFAULT_WARMUP):
    """Co-norm series for a batch of base points, shape (N, L)."""
    if L < 1:
        raise ValueError("L must be at least 1")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Q = cu_frames(spec, X, warmup)
    _, _, a = kernels.cu_steps(spec.params, X, Q, int(L), True)
    if np.any(a > -np.log(1e-14)):
        raise SplittingError("derivative restricted to E^cu is numerically singular")
    return a


def contraction_series(spec, x, L, warmup=DEFAULT_WARMUP):
    x = np.asarray(x, dtype=np.float64)
    a = contraction_series_batch(spec, x, L, warmup)[0]
    return ContractionSeries(x.copy(), a, int(warmup))


def cu_product_conorm(spec, x, n, warmup=DEFAULT_WARMUP):
    """``-log`` of the smallest singular value of D(f^n) restricted to E^cu(x)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    Q = cu_frames(spec, x, warmup)[0]
    pts = kernels.trajectory(spec.params, x[0], int(n))[:-1]
    Rprod = np.eye(2)
    for J in kernels.adapted_jacobian_batch(spec.params, pts):
        M = J @ Q
        Q, R = np.linalg.qr(M)
        Rprod = R @ Rprod
    return float(-np.log(np.linalg.svd(Rprod, compute_uv=False)[-1]))
