"""Pure numpy implementations of the hot kernels.

Every function is vectorized over a batch of seeds ``X`` of shape ``(N, 3)`` and
loops in Python over time.  The compiled module ``_ckernels`` exposes the same
functions with the same signatures; ``phlab.kernels`` picks one at import.

Map parameters arrive as the flat float64 vector built by
``phlab.torus.MapSpec.params`` (see ``phlab.kernels.PARAM_LAYOUT``).
"""

import numpy as np

TWO_PI = 2.0 * np.pi
HIST_BINS = 16


def _unpack(prm):
    return dict(
        A=prm[0:9].reshape(3, 3),
        Lt=prm[9:18].reshape(3, 3),
        G=prm[18:27].reshape(3, 3),
        Gi=prm[27:36].reshape(3, 3),
        p=prm[36:39],
        rho=prm[39],
        delta=prm[40],
        v2=prm[41:44],
        w2=prm[44:47],
        Av2=prm[47:50],
        alpha=prm[50:53],
    )


def wrap(Y):
    Y = Y - np.floor(Y)
    Y[Y >= 1.0] = 0.0
    return Y


def _bump(P, X):
    """Return (mask, s, xi, b) for points inside the perturbation support."""
    u = X - P["p"]
    u = u - np.floor(u + 0.5)
    xi = u @ P["Gi"].T
    s = np.einsum("ij,ij->i", xi, xi) / (P["rho"] * P["rho"])
    b = u @ P["w2"]
    return s < 1.0, s, xi, b


def apply_batch(prm, X):
    P = _unpack(prm)
    X = np.ascontiguousarray(X, dtype=np.float64)
    H = X.copy()
    if P["rho"] > 0.0:
        m, s, xi, b = _bump(P, X)
        if m.any():
            one_s = 1.0 - s[m]
            g = one_s * one_s * np.sin(TWO_PI * b[m]) / TWO_PI
            H[m] -= (P["delta"] * g)[:, None] * P["v2"]
    return wrap(H @ P["A"].T)


def _grad_g(P, s, xi, b):
    one_s = 1.0 - s
    sn = np.sin(TWO_PI * b)
    cs = np.cos(TWO_PI * b)
    radial = (-2.0 * one_s) * (2.0 / (P["rho"] * P["rho"])) * sn / TWO_PI
    return radial[:, None] * (xi @ P["Gi"]) + (one_s * one_s * cs)[:, None] * P["w2"]


def derivative_batch(prm, X):
    P = _unpack(prm)
    X = np.ascontiguousarray(X, dtype=np.float64)
    D = np.broadcast_to(P["A"], (X.shape[0], 3, 3)).copy()
    if P["rho"] > 0.0:
        m, s, xi, b = _bump(P, X)
        if m.any():
            grad = _grad_g(P, s[m], xi[m], b[m])
            D[m] -= P["delta"] * P["Av2"][None, :, None] * grad[:, None, :]
    return D


def adapted_jacobian_batch(prm, X):
    """Jacobian expressed in the eigen-adapted frame, ``Gi @ Df @ G``."""
    P = _unpack(prm)
    J = np.broadcast_to(P["Lt"], (X.shape[0], 3, 3)).copy()
    if P["rho"] > 0.0:
        m, s, xi, b = _bump(P, X)
        if m.any():
            grad = _grad_g(P, s[m], xi[m], b[m])
            gg = grad @ P["G"]
            J[m] -= P["delta"] * P["alpha"][None, :, None] * gg[:, None, :]
    return J


def iterate(prm, X, n):
    X = np.array(X, dtype=np.float64)
    for _ in range(n):
        X = apply_batch(prm, X)
    return X


def trajectory(prm, x, n):
    out = np.empty((n + 1, 3))
    out[0] = x
    cur = np.array(x, dtype=np.float64).reshape(1, 3)
    for i in range(1, n + 1):
        cur = apply_batch(prm, cur)
        out[i] = cur[0]
    return out


def _mgs(M):
    """Modified Gram-Schmidt on the columns of a batch of 3xk matrices."""
    Q = M.copy()
    k = M.shape[2]
    R = np.zeros((M.shape[0], k, k))
    for j in range(k):
        for i in range(j):
            r = np.einsum("nd,nd->n", Q[:, :, i], Q[:, :, j])
            R[:, i, j] = r
            Q[:, :, j] -= r[:, None] * Q[:, :, i]
        nrm = np.sqrt(np.einsum("nd,nd->n", Q[:, :, j], Q[:, :, j]))
        R[:, j, j] = nrm
        Q[:, :, j] /= nrm[:, None]
    return Q, R


def qr_steps(prm, X, Q, n, accumulate=True):
    """Advance ``n`` steps of the tangent QR scheme; returns (X, Q, logsum)."""
    X = np.array(X, dtype=np.float64)
    Q = np.array(Q, dtype=np.float64)
    logsum = np.zeros((X.shape[0], 3))
    for _ in range(n):
        J = adapted_jacobian_batch(prm, X)
        Q, R = _mgs(J @ Q)
        if accumulate:
            logsum += np.log(np.abs(np.diagonal(R, axis1=1, axis2=2)))
        X = apply_batch(prm, X)
    return X, Q, logsum


def _sigma_min_upper(r11, r12, r22):
    t = r11 * r11 + r12 * r12 + r22 * r22
    d = np.abs(r11 * r22)
    disc = np.sqrt(np.maximum(t * t - 4.0 * d * d, 0.0))
    smax = np.sqrt(0.5 * (t + disc))
    return d / smax


def cu_steps(prm, X, Q2, n, record=True):
    """Transport a 2-frame ``n`` steps; return (X, Q2, a) with a of shape (N, n).

    ``a[:, i]`` is minus the log of the smallest singular value of the
    derivative restricted to the transported plane at step ``i``.
    """
    X = np.array(X, dtype=np.float64)
    Q2 = np.array(Q2, dtype=np.float64)
    a = np.empty((X.shape[0], n if record else 0))
    for i in range(n):
        J = adapted_jacobian_batch(prm, X)
        Q2, R = _mgs(J @ Q2)
        if record:
            a[:, i] = -np.log(_sigma_min_upper(R[:, 0, 0], R[:, 0, 1], R[:, 1, 1]))
        X = apply_batch(prm, X)
    return X, Q2, a


def birkhoff_sums(prm, X, n_transient, n_avg, modes):
    """Sums of exp(2 pi i <m, x>) and 16^3 visit counts over iterates
    ``n_transient + 1 .. n_transient + n_avg``."""
    X = np.array(X, dtype=np.float64)
    modes = np.asarray(modes, dtype=np.float64)
    N = X.shape[0]
    K = modes.shape[0]
    X = iterate(prm, X, n_transient)
    re = np.zeros((N, K))
    im = np.zeros((N, K))
    hist = np.zeros((N, HIST_BINS ** 3), dtype=np.int64)
    rows = np.arange(N)
    for _ in range(n_avg):
        X = apply_batch(prm, X)
        ph = TWO_PI * (X @ modes.T)
        re += np.cos(ph)
        im += np.sin(ph)
        idx = np.minimum((X * HIST_BINS).astype(np.int64), HIST_BINS - 1)
        flat = (idx[:, 0] * HIST_BINS + idx[:, 1]) * HIST_BINS + idx[:, 2]
        hist[rows, flat] += 1
    return re, im, hist, X
