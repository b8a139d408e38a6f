"""Phase space T^3, linear Anosov automorphisms and the Mane derived-from-Anosov map.

Points are numpy arrays with coordinates in the fundamental domain [0, 1)^3,
either a single point of shape ``(3,)`` or a batch of shape ``(N, 3)``.

Both map families share one closed form.  With ``u`` the minimal-image
displacement from the fixed point ``p`` and ``b = w2 . u`` its coordinate along
the center eigenvector ``v2``::

    h(x) = x - delta * beta(s) * sin(2 pi b) / (2 pi) * v2,   s = |Gi u|^2 / rho^2
    f(x) = A h(x)  (mod 1)

where ``beta(s) = (1 - s)^2`` on ``s < 1`` and 0 elsewhere.  ``Gi`` maps to
eigen-coordinates scaled so that ``|Gi u| >= |u|``; the support of the
perturbation therefore lies inside the Euclidean ``rho``-ball around ``p``.
A linear Anosov map is the case ``rho = 0``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels

DEFAULT_MATRIX = ((0, 0, 1), (1, 0, -6), (0, 1, 5))
DEFAULT_RHO = 0.05

_ROOT_TOL = 1e-9


class InvalidMapError(ValueError):
    """A matrix or perturbation that does not define a valid example map."""


# --------------------------------------------------------------------------
# torus geometry


def wrap(x):
    """Reduce coordinates to the fundamental domain [0, 1)."""
    x = np.asarray(x, dtype=np.float64)
    y = x - np.floor(x)
    return np.where(y >= 1.0, 0.0, y)


def torus_point(coords):
    return wrap(np.asarray(coords, dtype=np.float64))


def min_image(d):
    """Minimal-image representative of a displacement, componentwise in [-1/2, 1/2)."""
    d = np.asarray(d, dtype=np.float64)
    return d - np.floor(d + 0.5)


def torus_distance(x, y):
    """Euclidean distance on R^3/Z^3 (broadcasts over leading axes)."""
    d = np.abs(np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64))
    d = d - np.floor(d)
    d = np.minimum(d, 1.0 - d)
    return np.sqrt(np.sum(d * d, axis=-1))


# --------------------------------------------------------------------------
# integer linear algebra


def _int_det3(M):
    M = [[int(v) for v in row] for row in M]
    return (
        M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1])
        - M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0])
        + M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0])
    )


def _int_adj3(M):
    M = [[int(v) for v in row] for row in M]
    C = [[0] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(3):
            rows = [r for r in range(3) if r != i]
            cols = [c for c in range(3) if c != j]
            minor = (M[rows[0]][cols[0]] * M[rows[1]][cols[1]]
                     - M[rows[0]][cols[1]] * M[rows[1]][cols[0]])
            C[i][j] = (-1) ** (i + j) * minor
    # adjugate is the transposed cofactor matrix
    return [[C[j][i] for j in range(3)] for i in range(3)]


def _int_matmul(X, Y):
    return [[sum(X[i][k] * Y[k][j] for k in range(3)) for j in range(3)] for i in range(3)]


def int_matrix_power(M, n):
    M = [[int(v) for v in row] for row in M]
    out = [[int(i == j) for j in range(3)] for i in range(3)]
    for _ in range(n):
        out = _int_matmul(out, M)
    return out


def lattice_solutions(M):
    """All x in [0,1)^3 with M x in Z^3, for a nonsingular integer matrix M.

    Returned as integer numerators ``y`` with ``x = y / D``, ``D = |det M|``.
    The solution set is the finite group generated by the columns of
    ``adj(M) / det(M)`` modulo 1; it is enumerated by closure.
    """
    det = _int_det3(M)
    if det == 0:
        raise InvalidMapError("singular integer matrix has a continuum of solutions")
    D = abs(det)
    adj = _int_adj3(M)
    sign = 1 if det > 0 else -1
    gens = [tuple((sign * adj[i][j]) % D for i in range(3)) for j in range(3)]
    seen = {(0, 0, 0)}
    frontier = [(0, 0, 0)]
    while frontier:
        nxt = []
        for y in frontier:
            for g in gens:
                z = tuple((y[i] + g[i]) % D for i in range(3))
                if z not in seen:
                    seen.add(z)
                    nxt.append(z)
        frontier = nxt
    if len(seen) != D:
        raise AssertionError("lattice enumeration did not reach |det|")
    return sorted(seen), D


# --------------------------------------------------------------------------
# eigen data


def _char_poly(M):
    """Integer coefficients (1, c2, c1, c0) of det(tI - M)."""
    M = [[int(v) for v in row] for row in M]
    tr = M[0][0] + M[1][1] + M[2][2]
    minors = (M[0][0] * M[1][1] - M[0][1] * M[1][0]
              + M[0][0] * M[2][2] - M[0][2] * M[2][0]
              + M[1][1] * M[2][2] - M[1][2] * M[2][1])
    return 1, -tr, minors, -_int_det3(M)


def eigen_data(matrix):
    """Eigenvalues ``k1 < k2 < k3`` and unit eigenvectors of an integer 3x3 matrix.

    The matrix must have ``|det| = 1`` and three simple positive real eigenvalues
    with ``0 < k1 < 1 < k2 < k3``.

    Returns ``(k, V)`` with ``k`` of shape (3,) ascending and ``V`` whose columns
    are the matching eigenvectors, normalized to unit length with their largest
    component positive.
    """
    M = np.asarray(matrix)
    if M.shape != (3, 3) or not np.all(M == np.round(M)):
        raise InvalidMapError("matrix must be a 3x3 integer matrix")
    det = _int_det3(M)
    if abs(det) != 1:
        raise InvalidMapError(f"determinant invariant violated: |det| = {abs(det)}, expected 1")
    coeffs = np.array(_char_poly(M), dtype=np.float64)
    roots = np.roots(coeffs)
    if np.any(np.abs(roots.imag) > 1e-7):
        raise InvalidMapError(f"complex eigenvalues {roots}; not a valid Anosov base")
    k = np.sort(roots.real)
    # Newton polish on the cubic
    dcoeffs = np.polyder(coeffs)
    for _ in range(4):
        k = k - np.polyval(coeffs, k) / np.polyval(dcoeffs, k)
    if np.min(np.diff(k)) < _ROOT_TOL:
        raise InvalidMapError(f"repeated eigenvalues {k}")
    if k[0] <= 0.0:
        raise InvalidMapError(f"non-positive eigenvalue {k[0]}")
    if np.any(np.abs(np.abs(k) - 1.0) < _ROOT_TOL):
        raise InvalidMapError(f"eigenvalue on the unit circle {k}")
    if not (k[0] < 1.0 < k[1] < k[2]):
        raise InvalidMapError(f"eigenvalues {k} do not satisfy 0 < k1 < 1 < k2 < k3")
    Mf = M.astype(np.float64)
    V = np.empty((3, 3))
    for i, ki in enumerate(k):
        _, _, vt = np.linalg.svd(Mf - ki * np.eye(3))
        v = vt[-1]
        v = v / np.linalg.norm(v)
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        V[:, i] = v
    return k, V


# --------------------------------------------------------------------------
# map specifications


@dataclass(frozen=True)
class AnosovSpec:
    """Linear hyperbolic automorphism of T^3 given by an integer matrix."""

    matrix: tuple = DEFAULT_MATRIX

    def __post_init__(self):
        m = tuple(tuple(int(v) for v in row) for row in np.asarray(self.matrix).tolist())
        object.__setattr__(self, "matrix", m)
        eigen_data(m)  # raises on invalid matrices

    @cached_property
    def _eig(self):
        return eigen_data(self.matrix)

    @property
    def eigenvalues(self):
        return self._eig[0]

    @property
    def eigenvectors(self):
        return self._eig[1]

    @property
    def A(self):
        return np.array(self.matrix, dtype=np.float64)

    @cached_property
    def A_inv(self):
        det = _int_det3(self.matrix)
        return np.array(_int_adj3(self.matrix), dtype=np.float64) * det

    @property
    def base(self):
        return self

    @property
    def rho(self):
        return 0.0

    @property
    def delta(self):
        return 0.0

    @property
    def p(self):
        return np.zeros(3)

    @property
    def is_volume_preserving(self):
        return True

    @cached_property
    def frame(self):
        """(G, Gi): eigenbasis scaled so that the adapted norm dominates the Euclidean one."""
        V = self.eigenvectors
        c = np.linalg.svd(V, compute_uv=False)[0]
        G = V / c
        return G, np.linalg.inv(G)

    @cached_property
    def params(self):
        return _pack(self, rho=0.0, delta=0.0, p=np.zeros(3))


@dataclass(frozen=True)
class ManeDASpec:
    """Mane's derived-from-Anosov perturbation of ``base`` around the origin.

    ``delta=None`` selects ``1 - 1/k2``, the strength at which the center
    derivative at ``p`` equals 1.
    """

    base: AnosovSpec = field(default_factory=AnosovSpec)
    rho: float = DEFAULT_RHO
    delta: float | None = None

    def __post_init__(self):
        if self.delta is None:
            object.__setattr__(self, "delta", 1.0 - 1.0 / self.base.eigenvalues[1])
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "delta", float(self.delta))
        if self.rho < 0.0:
            raise InvalidMapError("bump radius must be non-negative")
        limit = max_bump_radius(self.base)
        if self.rho >= limit:
            raise InvalidMapError(
                f"bump radius {self.rho} must be below half the minimal distance "
                f"between points of period <= 2 ({limit:.6g})"
            )

    @property
    def matrix(self):
        return self.base.matrix

    @property
    def eigenvalues(self):
        return self.base.eigenvalues

    @property
    def eigenvectors(self):
        return self.base.eigenvectors

    @property
    def A(self):
        return self.base.A

    @property
    def A_inv(self):
        return self.base.A_inv

    @property
    def frame(self):
        return self.base.frame

    @property
    def p(self):
        return np.zeros(3)

    @property
    def is_volume_preserving(self):
        return self.rho == 0.0 or self.delta == 0.0

    @cached_property
    def params(self):
        return _pack(self.base, rho=self.rho, delta=self.delta, p=self.p)


MapSpec = AnosovSpec | ManeDASpec


def _pack(base, rho, delta, p):
    G, Gi = base.frame
    A = base.A
    V = base.eigenvectors
    v2 = V[:, 1]
    w2 = np.linalg.inv(V)[1]
    prm = np.zeros(kernels.PARAM_SIZE)
    L = kernels.PARAM_LAYOUT
    prm[L["A"]] = A.ravel()
    prm[L["Lt"]] = (Gi @ A @ G).ravel()
    prm[L["G"]] = G.ravel()
    prm[L["Gi"]] = Gi.ravel()
    prm[L["p"]] = p
    prm[L["rho"]] = rho
    prm[L["delta"]] = delta
    prm[L["v2"]] = v2
    prm[L["w2"]] = w2
    prm[L["Av2"]] = A @ v2
    prm[L["alpha"]] = Gi @ A @ v2
    prm.flags.writeable = False
    return prm


def anosov(matrix=DEFAULT_MATRIX):
    return AnosovSpec(matrix)


def mane(rho=DEFAULT_RHO, delta=None, matrix=DEFAULT_MATRIX):
    return ManeDASpec(AnosovSpec(matrix), rho=rho, delta=delta)


_RADIUS_CACHE: dict = {}


def max_bump_radius(base):
    """Half the minimal torus distance between distinct points of period <= 2."""
    key = base.matrix
    if key not in _RADIUS_CACHE:
        M = int_matrix_power(base.matrix, 2)
        for i in range(3):
            M[i][i] -= 1
        ys, D = lattice_solutions(M)
        pts = np.array(ys, dtype=np.float64) / D
        d = torus_distance(pts[:, None, :], pts[None, :, :])
        d[np.diag_indices_from(d)] = np.inf
        _RADIUS_CACHE[key] = 0.5 * float(d.min())
    return _RADIUS_CACHE[key]


# --------------------------------------------------------------------------
# map evaluation


def _batched(x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    return np.atleast_2d(x), single


def apply(spec, x):
    """Image of one point or a batch of points."""
    X, single = _batched(x)
    Y = kernels.apply_batch(spec.params, X)
    return Y[0] if single else Y


def derivative(spec, x):
    """Exact Jacobian of ``apply`` at one point (3x3) or a batch (N,3,3)."""
    X, single = _batched(x)
    D = kernels.derivative_batch(spec.params, X)
    return D[0] if single else D


def adapted_derivative(spec, x):
    """Jacobian in the eigen-adapted frame, ``Gi Df G``."""
    X, single = _batched(x)
    D = kernels.adapted_jacobian_batch(spec.params, X)
    return D[0] if single else D


def iterate(spec, x, n):
    X, single = _batched(x)
    Y = kernels.iterate(spec.params, X, int(n))
    return Y[0] if single else Y


def orbit(spec, x, n):
    """Points x, f(x), ..., f^n(x) as an (n+1, 3) array."""
    return kernels.trajectory(spec.params, np.asarray(x, dtype=np.float64), int(n))


def _bump_terms(spec, u):
    """Support mask, s, xi and center coordinate b for displacements u (N,3)."""
    G, Gi = spec.frame
    xi = u @ Gi.T
    if spec.rho > 0.0:
        s = np.einsum("ij,ij->i", xi, xi) / spec.rho ** 2
    else:
        s = np.full(u.shape[0], np.inf)
    V = spec.eigenvectors
    w2 = np.linalg.inv(V)[1]
    b = u @ w2
    return s < 1.0, s, xi, b


def _perturbation(spec, u):
    """g(u) = beta(s) sin(2 pi b) / (2 pi) and its derivative along v2."""
    mask, s, xi, b = _bump_terms(spec, u)
    g = np.zeros(u.shape[0])
    dg = np.zeros(u.shape[0])
    if np.any(mask):
        G, Gi = spec.frame
        c = 1.0 / np.linalg.norm(G[:, 0])
        one_s = 1.0 - s[mask]
        sn = np.sin(2 * np.pi * b[mask])
        cs = np.cos(2 * np.pi * b[mask])
        g[mask] = one_s ** 2 * sn / (2 * np.pi)
        # d/dt of s along v2 is 2 c xi_2 / rho^2 because Gi v2 = c e2
        ds = 2.0 * c * xi[mask, 1] / spec.rho ** 2
        dg[mask] = -2.0 * one_s * ds * sn / (2 * np.pi) + one_s ** 2 * cs
    return g, dg


def center_derivative(spec, x):
    """Derivative along the invariant center direction v2 (a scalar per point).

    The perturbation moves points only along ``v2``, so ``Df v2`` is parallel to
    ``v2`` everywhere and this scalar is the exact center multiplier.
    """
    X, single = _batched(x)
    k2 = spec.eigenvalues[1]
    if spec.rho == 0.0:
        out = np.full(X.shape[0], k2)
    else:
        _, dg = _perturbation(spec, min_image(X - spec.p))
        out = k2 * (1.0 - spec.delta * dg)
    return out[0] if single else out


def inverse_apply(spec, y, tol=1e-15, max_iter=60):
    """Preimage under the map.

    The linear part is inverted exactly with the integer inverse matrix.  For the
    perturbed map the remaining equation ``h(x) = z`` reduces to a scalar
    equation along ``v2``, solved by Newton's method on the lift.
    """
    Y, single = _batched(y)
    Z = wrap(Y @ spec.A_inv.T)
    if spec.rho > 0.0:
        u = min_image(Z - spec.p)
        mask, *_ = _bump_terms(spec, u)
        if np.any(mask):
            idx = np.flatnonzero(mask)
            uz = u[idx]
            v2 = spec.eigenvectors[:, 1]
            t = np.zeros(idx.size)
            for _ in range(max_iter):
                g, dg = _perturbation(spec, uz + t[:, None] * v2)
                step = (t - spec.delta * g) / (1.0 - spec.delta * dg)
                t = t - step
                if np.max(np.abs(step)) <= tol:
                    break
            else:
                raise RuntimeError("inverse Newton iteration did not converge")
            Z[idx] = wrap(spec.p + uz + t[:, None] * v2)
    return Z[0] if single else Z


# --------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    passed: bool
    min_center_derivative: float
    argmin: np.ndarray
    argmin_cells_from_p: float
    min_abs_det: float
    center_derivative_at_p: float
    grid_n: int
    cell: float
    violations: np.ndarray
    messages: list


def validate_mane_spec(spec, grid_n=64):
    """Grid check of the center-derivative and diffeomorphism conditions.

    Scans a ``grid_n``-per-axis grid over the cube circumscribing the
    perturbation support.  Passes iff the center derivative is ``>= 1 - 1e-9``
    everywhere, within 1e-6 of 1 only within two cells of ``p``, the Jacobian
    determinant stays away from zero, and the argmin sits within two cells of ``p``.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    k = spec.eigenvalues
    rho = spec.rho
    if rho == 0.0:
        return ValidationReport(True, float(k[1]), spec.p.copy(), 0.0, 1.0, float(k[1]),
                                grid_n, 0.0, np.empty((0, 3)), ["zero-size bump: linear map"])
    ax = np.linspace(-rho, rho, grid_n)
    cell = ax[1] - ax[0]
    U = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    U = U[np.einsum("ij,ij->i", U, U) <= rho * rho]
    X = wrap(spec.p + U)
    cd = center_derivative(spec, X)
    det = np.abs(cd / k[1] * np.linalg.det(spec.A))
    i = int(np.argmin(cd))
    dist_cells = float(np.linalg.norm(U[i]) / cell)
    msgs = []
    bad = cd < 1.0 - 1e-9
    if np.any(bad):
        msgs.append(f"center derivative below 1 at {int(bad.sum())} grid points "
                    f"(min {cd.min():.6g})")
    near_one = np.abs(cd - 1.0) <= 1e-6
    far = np.linalg.norm(U, axis=1) > 2.0 * cell
    if np.any(near_one & far):
        msgs.append("center derivative equals 1 away from p")
        bad = bad | (near_one & far)
    if det.min() <= 1e-12:
        msgs.append("Jacobian determinant vanishes on the grid")
        bad = bad | (det <= 1e-12)
    if dist_cells > 2.0:
        msgs.append(f"argmin {dist_cells:.3g} cells from p")
    return ValidationReport(
        passed=not msgs,
        min_center_derivative=float(cd.min()),
        argmin=X[i],
        argmin_cells_from_p=dist_cells,
        min_abs_det=float(det.min()),
        center_derivative_at_p=float(center_derivative(spec, spec.p)),
        grid_n=grid_n,
        cell=float(cell),
        violations=X[bad],
        messages=msgs,
    )


def fixed_point_count(matrix, n):
    """|det(A^n - I)|, the number of points of period dividing n for a hyperbolic A."""
    M = int_matrix_power(matrix, n)
    for i in range(3):
        M[i][i] -= 1
    return abs(_int_det3(M))


def dictionary_modes(max_freq=2):
    """Frequency vectors m with |m|_inf <= max_freq, one per +-m pair, m != 0."""
    out = []
    for m in itertools.product(range(-max_freq, max_freq + 1), repeat=3):
        nz = [v for v in m if v != 0]
        if nz and nz[0] > 0:
            out.append(m)
    return np.array(out, dtype=np.int64)
