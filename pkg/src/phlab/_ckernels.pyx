# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels.  Signatures mirror ``phlab._pykernels``."""

import numpy as np
from libc.math cimport sin, cos, floor, log, sqrt, fabs
from libc.stdint cimport int64_t

cdef enum:
    HIST_BINS = 16
    BLOCK = 256

cdef double TWO_PI = 6.283185307179586


cdef struct MapParams:
    double A[9]
    double Lt[9]
    double G[9]
    double Gi[9]
    double p[3]
    double rho
    double delta
    double v2[3]
    double w2[3]
    double Av2[3]
    double alpha[3]


cdef void _load(const double[::1] prm, MapParams* P):
    cdef int i
    for i in range(9):
        P.A[i] = prm[i]
        P.Lt[i] = prm[9 + i]
        P.G[i] = prm[18 + i]
        P.Gi[i] = prm[27 + i]
    for i in range(3):
        P.p[i] = prm[36 + i]
        P.v2[i] = prm[41 + i]
        P.w2[i] = prm[44 + i]
        P.Av2[i] = prm[47 + i]
        P.alpha[i] = prm[50 + i]
    P.rho = prm[39]
    P.delta = prm[40]


cdef inline void _wrap3(double* y) noexcept nogil:
    cdef int i
    for i in range(3):
        y[i] = y[i] - floor(y[i])
        if y[i] >= 1.0:
            y[i] = 0.0


cdef inline bint _bump(const MapParams* P, const double* x,
                       double* xi, double* s, double* b) noexcept nogil:
    cdef double u[3]
    cdef int i
    if P.rho <= 0.0:
        return 0
    for i in range(3):
        u[i] = x[i] - P.p[i]
        u[i] = u[i] - floor(u[i] + 0.5)
    for i in range(3):
        xi[i] = P.Gi[3 * i] * u[0] + P.Gi[3 * i + 1] * u[1] + P.Gi[3 * i + 2] * u[2]
    s[0] = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]) / (P.rho * P.rho)
    b[0] = u[0] * P.w2[0] + u[1] * P.w2[1] + u[2] * P.w2[2]
    return s[0] < 1.0


cdef inline void _apply(const MapParams* P, const double* x, double* y) noexcept nogil:
    cdef double h[3]
    cdef double xi[3]
    cdef double s, b, one_s, g
    cdef int i
    h[0] = x[0]
    h[1] = x[1]
    h[2] = x[2]
    if _bump(P, x, xi, &s, &b):
        one_s = 1.0 - s
        g = one_s * one_s * sin(TWO_PI * b) / TWO_PI
        for i in range(3):
            h[i] = h[i] - (P.delta * g) * P.v2[i]
    for i in range(3):
        y[i] = P.A[3 * i] * h[0] + P.A[3 * i + 1] * h[1] + P.A[3 * i + 2] * h[2]
    _wrap3(y)


cdef inline bint _grad_g(const MapParams* P, const double* x, double* grad) noexcept nogil:
    cdef double xi[3]
    cdef double s, b, one_s, radial, tang
    cdef int i
    if not _bump(P, x, xi, &s, &b):
        return 0
    one_s = 1.0 - s
    radial = (-2.0 * one_s) * (2.0 / (P.rho * P.rho)) * sin(TWO_PI * b) / TWO_PI
    tang = one_s * one_s * cos(TWO_PI * b)
    for i in range(3):
        # (xi @ Gi)[i]
        grad[i] = radial * (xi[0] * P.Gi[i] + xi[1] * P.Gi[3 + i] + xi[2] * P.Gi[6 + i]) \
            + tang * P.w2[i]
    return 1


cdef inline void _adapted_jac(const MapParams* P, const double* x, double* J) noexcept nogil:
    cdef double grad[3]
    cdef double gg[3]
    cdef int i, j
    for i in range(9):
        J[i] = P.Lt[i]
    if _grad_g(P, x, grad):
        for j in range(3):
            gg[j] = grad[0] * P.G[j] + grad[1] * P.G[3 + j] + grad[2] * P.G[6 + j]
        for i in range(3):
            for j in range(3):
                J[3 * i + j] = J[3 * i + j] - P.delta * P.alpha[i] * gg[j]


def apply_batch(const double[::1] prm, X):
    cdef MapParams P
    _load(prm, &P)
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    out = np.empty((Xv.shape[0], 3))
    cdef double[:, ::1] Y = out
    cdef Py_ssize_t n
    with nogil:
        for n in range(Xv.shape[0]):
            _apply(&P, &Xv[n, 0], &Y[n, 0])
    return out


def derivative_batch(const double[::1] prm, X):
    cdef MapParams P
    _load(prm, &P)
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    out = np.empty((Xv.shape[0], 3, 3))
    cdef double[:, :, ::1] D = out
    cdef double grad[3]
    cdef Py_ssize_t n
    cdef int i, j
    with nogil:
        for n in range(Xv.shape[0]):
            for i in range(3):
                for j in range(3):
                    D[n, i, j] = P.A[3 * i + j]
            if _grad_g(&P, &Xv[n, 0], grad):
                for i in range(3):
                    for j in range(3):
                        D[n, i, j] = D[n, i, j] - P.delta * P.Av2[i] * grad[j]
    return out


def adapted_jacobian_batch(const double[::1] prm, X):
    cdef MapParams P
    _load(prm, &P)
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    out = np.empty((Xv.shape[0], 3, 3))
    cdef double[:, :, ::1] D = out
    cdef Py_ssize_t n
    with nogil:
        for n in range(Xv.shape[0]):
            _adapted_jac(&P, &Xv[n, 0], &D[n, 0, 0])
    return out


def iterate(const double[::1] prm, X, Py_ssize_t n):
    cdef MapParams P
    _load(prm, &P)
    out = np.array(X, dtype=np.float64, order="C")
    cdef double[:, ::1] Y = out
    cdef double tmp[3]
    cdef Py_ssize_t k, t
    with nogil:
        for k in range(Y.shape[0]):
            for t in range(n):
                _apply(&P, &Y[k, 0], tmp)
                Y[k, 0] = tmp[0]
                Y[k, 1] = tmp[1]
                Y[k, 2] = tmp[2]
    return out


def trajectory(const double[::1] prm, x, Py_ssize_t n):
    cdef MapParams P
    _load(prm, &P)
    out = np.empty((n + 1, 3))
    cdef double[:, ::1] T = out
    x0 = np.asarray(x, dtype=np.float64).reshape(3)
    T[0, 0] = x0[0]
    T[0, 1] = x0[1]
    T[0, 2] = x0[2]
    cdef Py_ssize_t i
    with nogil:
        for i in range(1, n + 1):
            _apply(&P, &T[i - 1, 0], &T[i, 0])
    return out


cdef inline void _mat_times_frame(const double* J, const double* Q, double* M, int k) noexcept nogil:
    # Q, M: 3 x k row-major
    cdef int i, j
    for i in range(3):
        for j in range(k):
            M[k * i + j] = J[3 * i] * Q[j] + J[3 * i + 1] * Q[k + j] + J[3 * i + 2] * Q[2 * k + j]


cdef inline void _mgs(double* M, double* R, int k) noexcept nogil:
    # in-place modified Gram-Schmidt on the k columns of a 3 x k row-major M
    cdef int i, j
    cdef double r, nrm
    for j in range(k):
        for i in range(j):
            r = M[i] * M[j] + M[k + i] * M[k + j] + M[2 * k + i] * M[2 * k + j]
            R[k * i + j] = r
            M[j] = M[j] - r * M[i]
            M[k + j] = M[k + j] - r * M[k + i]
            M[2 * k + j] = M[2 * k + j] - r * M[2 * k + i]
        nrm = sqrt(M[j] * M[j] + M[k + j] * M[k + j] + M[2 * k + j] * M[2 * k + j])
        R[k * j + j] = nrm
        M[j] = M[j] / nrm
        M[k + j] = M[k + j] / nrm
        M[2 * k + j] = M[2 * k + j] / nrm


def qr_steps(const double[::1] prm, X, Q, Py_ssize_t n, bint accumulate=True):
    cdef MapParams P
    _load(prm, &P)
    Xo = np.array(X, dtype=np.float64, order="C")
    Qo = np.array(Q, dtype=np.float64, order="C")
    logsum_o = np.zeros((Xo.shape[0], 3))
    cdef double[:, ::1] Xv = Xo
    cdef double[:, :, ::1] Qv = Qo
    cdef double[:, ::1] L = logsum_o
    cdef double J[9]
    cdef double M[9]
    cdef double R[9]
    cdef double tmp[3]
    cdef Py_ssize_t k, t
    cdef int i
    with nogil:
        for k in range(Xv.shape[0]):
            for t in range(n):
                _adapted_jac(&P, &Xv[k, 0], J)
                _mat_times_frame(J, &Qv[k, 0, 0], M, 3)
                _mgs(M, R, 3)
                for i in range(9):
                    Qv[k, i // 3, i % 3] = M[i]
                if accumulate:
                    L[k, 0] += log(fabs(R[0]))
                    L[k, 1] += log(fabs(R[4]))
                    L[k, 2] += log(fabs(R[8]))
                _apply(&P, &Xv[k, 0], tmp)
                Xv[k, 0] = tmp[0]
                Xv[k, 1] = tmp[1]
                Xv[k, 2] = tmp[2]
    return Xo, Qo, logsum_o


cdef inline double _sigma_min_upper(double r11, double r12, double r22) noexcept nogil:
    cdef double t = r11 * r11 + r12 * r12 + r22 * r22
    cdef double d = fabs(r11 * r22)
    cdef double disc = t * t - 4.0 * d * d
    if disc < 0.0:
        disc = 0.0
    return d / sqrt(0.5 * (t + sqrt(disc)))


def cu_steps(const double[::1] prm, X, Q2, Py_ssize_t n, bint record=True):
    cdef MapParams P
    _load(prm, &P)
    Xo = np.array(X, dtype=np.float64, order="C")
    Qo = np.array(Q2, dtype=np.float64, order="C")
    a_o = np.empty((Xo.shape[0], n if record else 0))
    cdef double[:, ::1] Xv = Xo
    cdef double[:, :, ::1] Qv = Qo
    cdef double[:, ::1] a = a_o
    cdef double J[9]
    cdef double M[6]
    cdef double R[4]
    cdef double tmp[3]
    cdef Py_ssize_t k, t
    cdef int i
    with nogil:
        for k in range(Xv.shape[0]):
            for t in range(n):
                _adapted_jac(&P, &Xv[k, 0], J)
                _mat_times_frame(J, &Qv[k, 0, 0], M, 2)
                _mgs(M, R, 2)
                for i in range(6):
                    Qv[k, i // 2, i % 2] = M[i]
                if record:
                    a[k, t] = -log(_sigma_min_upper(R[0], R[1], R[3]))
                _apply(&P, &Xv[k, 0], tmp)
                Xv[k, 0] = tmp[0]
                Xv[k, 1] = tmp[1]
                Xv[k, 2] = tmp[2]
    return Xo, Qo, a_o


cdef inline void _neumaier(double* total, double* comp, double v) noexcept nogil:
    cdef double t = total[0] + v
    if fabs(total[0]) >= fabs(v):
        comp[0] += (total[0] - t) + v
    else:
        comp[0] += (v - t) + total[0]
    total[0] = t


def birkhoff_sums(const double[::1] prm, X, Py_ssize_t n_transient, Py_ssize_t n_avg, modes):
    cdef MapParams P
    _load(prm, &P)
    Xo = np.array(X, dtype=np.float64, order="C")
    cdef int64_t[:, ::1] mv = np.ascontiguousarray(modes, dtype=np.int64)
    cdef Py_ssize_t N = Xo.shape[0]
    cdef Py_ssize_t K = mv.shape[0]
    re_o = np.zeros((N, K))
    im_o = np.zeros((N, K))
    hist_o = np.zeros((N, HIST_BINS * HIST_BINS * HIST_BINS), dtype=np.int64)
    cdef double[:, ::1] Xv = Xo
    cdef double[:, ::1] RE = re_o
    cdef double[:, ::1] IM = im_o
    cdef int64_t[:, ::1] H = hist_o
    # per-mode scratch: block sums and Neumaier compensation terms
    blk_o = np.zeros((4, K))
    cdef double[:, ::1] blk = blk_o
    cdef double pwr[3][5]
    cdef double pwi[3][5]
    cdef double x[3]
    cdef double tmp[3]
    cdef double c, s, ar, ai, br, bi, cr, ci
    cdef Py_ssize_t k, t, m
    cdef int j, i0, i1, i2, cnt
    with nogil:
        for k in range(N):
            x[0] = Xv[k, 0]
            x[1] = Xv[k, 1]
            x[2] = Xv[k, 2]
            for t in range(n_transient):
                _apply(&P, x, tmp)
                x[0] = tmp[0]
                x[1] = tmp[1]
                x[2] = tmp[2]
            for m in range(K):
                blk[0, m] = 0.0
                blk[1, m] = 0.0
                blk[2, m] = 0.0
                blk[3, m] = 0.0
            cnt = 0
            for t in range(n_avg):
                _apply(&P, x, tmp)
                x[0] = tmp[0]
                x[1] = tmp[1]
                x[2] = tmp[2]
                for j in range(3):
                    c = cos(TWO_PI * x[j])
                    s = sin(TWO_PI * x[j])
                    pwr[j][2] = 1.0
                    pwi[j][2] = 0.0
                    pwr[j][3] = c
                    pwi[j][3] = s
                    pwr[j][4] = c * c - s * s
                    pwi[j][4] = 2.0 * c * s
                    pwr[j][1] = c
                    pwi[j][1] = -s
                    pwr[j][0] = pwr[j][4]
                    pwi[j][0] = -pwi[j][4]
                for m in range(K):
                    i0 = mv[m, 0] + 2
                    i1 = mv[m, 1] + 2
                    i2 = mv[m, 2] + 2
                    ar = pwr[0][i0]
                    ai = pwi[0][i0]
                    br = pwr[1][i1]
                    bi = pwi[1][i1]
                    cr = ar * br - ai * bi
                    ci = ar * bi + ai * br
                    ar = pwr[2][i2]
                    ai = pwi[2][i2]
                    blk[0, m] += cr * ar - ci * ai
                    blk[1, m] += cr * ai + ci * ar
                i0 = <int>(x[0] * HIST_BINS)
                i1 = <int>(x[1] * HIST_BINS)
                i2 = <int>(x[2] * HIST_BINS)
                if i0 > HIST_BINS - 1:
                    i0 = HIST_BINS - 1
                if i1 > HIST_BINS - 1:
                    i1 = HIST_BINS - 1
                if i2 > HIST_BINS - 1:
                    i2 = HIST_BINS - 1
                H[k, (i0 * HIST_BINS + i1) * HIST_BINS + i2] += 1
                cnt += 1
                if cnt == BLOCK or t == n_avg - 1:
                    for m in range(K):
                        _neumaier(&RE[k, m], &blk[2, m], blk[0, m])
                        _neumaier(&IM[k, m], &blk[3, m], blk[1, m])
                        blk[0, m] = 0.0
                        blk[1, m] = 0.0
                    cnt = 0
            for m in range(K):
                RE[k, m] += blk[2, m]
                IM[k, m] += blk[3, m]
            Xv[k, 0] = x[0]
            Xv[k, 1] = x[1]
            Xv[k, 2] = x[2]
    return re_o, im_o, hist_o, Xo
