# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Pure-numpy equivalents live in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, exp, log, expm1, hypot, atan2, fabs

ctypedef double complex cplx

cdef int RESEED = 512
cdef double PI = 3.141592653589793
cdef double TWO_PI = 6.283185307179586


cdef inline cplx _log1m(double lr, double x) noexcept nogil:
    # principal log(1 - exp(lr + i x)); exact cancellation handled by expm1
    cdef double e = expm1(lr)
    cdef double s = sin(0.5 * x)
    cdef double re = 2.0 * s * s - e * cos(x)
    cdef double im = -(e + 1.0) * sin(x)
    cdef cplx out
    out.real = log(hypot(re, im))
    out.imag = atan2(im, re)
    return out


cdef inline cplx _log1m_b(double x) noexcept nogil:
    # log(1 - exp(i x)) on the unit circle: one sin and one log
    cdef cplx out
    if x > PI:
        x -= TWO_PI
    elif x <= -PI:
        x += TWO_PI
    out.real = log(2.0 * fabs(sin(0.5 * x)))
    out.imag = 0.5 * x - (0.5 * PI if x > 0 else -0.5 * PI)
    return out


cdef inline cplx _one_minus(double lr, double x) noexcept nogil:
    # 1 - exp(lr + i x)
    cdef double e = expm1(lr)
    cdef double s = sin(0.5 * x)
    cdef cplx out
    out.real = 2.0 * s * s - e * cos(x)
    out.imag = -(e + 1.0) * sin(x)
    return out


cdef inline cplx _cis(double x) noexcept nogil:
    cdef cplx out
    out.real = cos(x)
    out.imag = sin(x)
    return out


def exp_sum(const double[::1] t, const cplx[::1] c, long lo, long hi):
    """out[m - lo] = sum_j c_j exp(-i m t_j) for lo <= m <= hi."""
    cdef Py_ssize_t n = t.shape[0], nm = hi - lo + 1, j, i
    out_arr = np.zeros(nm, dtype=np.complex128)
    cdef cplx[::1] out = out_arr
    cdef cplx step, cur
    with nogil:
        for j in range(n):
            step = _cis(-t[j])
            for i in range(nm):
                if i % RESEED == 0:
                    cur = c[j] * _cis(-(lo + i) * t[j])
                out[i] += cur
                cur = cur * step
    return out_arr


def interval_sum(const double[::1] center, const double[::1] half,
                 const cplx[::1] w, long lo, long hi):
    """sum_j w_j * integral over [c_j - h_j, c_j + h_j] of exp(-i m t) dt."""
    cdef Py_ssize_t n = center.shape[0], nm = hi - lo + 1, j, i
    out_arr = np.zeros(nm, dtype=np.complex128)
    cdef cplx[::1] out = out_arr
    cdef cplx step, cur, hstep, hcur
    cdef long m
    with nogil:
        for j in range(n):
            step = _cis(-center[j])
            hstep = _cis(half[j])
            for i in range(nm):
                m = lo + i
                if i % RESEED == 0:
                    cur = w[j] * _cis(-m * center[j])
                    hcur = _cis(m * half[j])
                if m == 0:
                    out[i] += cur * (2.0 * half[j])
                else:
                    out[i] += cur * (2.0 * hcur.imag / m)
                cur = cur * step
                hcur = hcur * hstep
    return out_arr


def logsum_direct(const double[::1] a, const double[::1] b,
                  const double[::1] base, const double[::1] off,
                  const double[::1] lr):
    """sum_k log(1 - z e^{-i b_k}) - log(1 - z e^{-i a_k}), z = exp(lr + i(base + off))."""
    cdef Py_ssize_t nk = a.shape[0], nq = base.shape[0], q, k
    out_arr = np.zeros(nq, dtype=np.complex128)
    cdef cplx[::1] out = out_arr
    cdef cplx acc
    with nogil:
        for q in range(nq):
            acc = 0
            for k in range(nk):
                acc = acc + _log1m(lr[q], (base[q] - b[k]) + off[q]) \
                          - _log1m(lr[q], (base[q] - a[k]) + off[q])
            out[q] = acc
    return out_arr


cdef class LogSumTree:
    """Multipole tree over the rank-N intervals of a nested construction.

    Node (r, j) owns the leaves ``j << (N - r)`` .. ``((j + 1) << (N - r)) - 1``.
    Moments are stored for ranks 1..rmax as
    ``B_p = sum_s sign_s ((w_s - w_c) / rho)^p / p`` with ``w = e^{-it}``.
    """

    cdef public int N, P, rmax
    cdef public double theta
    cdef double[::1] a_leaf
    cdef double[::1] b_leaf
    cdef double[::1] node_c
    cdef double[::1] rho
    cdef cplx[:, ::1] mom

    def __init__(self, const double[::1] a_all, const double[::1] sigma,
                 int N, int P=36, double theta=0.35, int leaf_block=3):
        cdef Py_ssize_t nl = 1 << N, k, r, j, p, idx
        cdef double c, sr
        cdef cplx wc, db, da, pb, pa, tmp
        self.N = N
        self.P = P
        self.theta = theta
        self.rmax = max(0, N - leaf_block)
        self.a_leaf = np.array(a_all[(1 << N) - 1:(1 << (N + 1)) - 1], dtype=np.float64)
        self.b_leaf = np.asarray(self.a_leaf) + sigma[N]
        nnodes = max(0, (1 << (self.rmax + 1)) - 2)
        self.node_c = np.zeros(nnodes)
        self.rho = np.zeros(self.rmax + 1)
        self.mom = np.zeros((nnodes, P + 1), dtype=np.complex128)
        for r in range(1, self.rmax + 1):
            self.rho[r] = 2.0 * sin(0.25 * sigma[r])
            for j in range(1 << r):
                self.node_c[(1 << r) - 2 + j] = a_all[(1 << r) - 1 + j] + 0.5 * sigma[r]
        with nogil:
            for r in range(1, self.rmax + 1):
                sr = self.rho[r]
                for k in range(nl):
                    j = k >> (N - r)
                    idx = (1 << r) - 2 + j
                    c = self.node_c[idx]
                    wc = _cis(-c)
                    # w_t - w_c = w_c (exp(-i(t - c)) - 1)
                    db = wc * (-_one_minus(0.0, -(self.b_leaf[k] - c))) / sr
                    da = wc * (-_one_minus(0.0, -(self.a_leaf[k] - c))) / sr
                    pb = db
                    pa = da
                    for p in range(1, P + 1):
                        self.mom[idx, p] += (pb - pa) / p
                        pb = pb * db
                        pa = pa * da

    cdef cplx _leaves(self, Py_ssize_t k0, Py_ssize_t k1, double base, double off,
                      double lr) noexcept nogil:
        cdef cplx acc = 0
        cdef Py_ssize_t k
        if lr == 0.0:
            for k in range(k0, k1):
                acc = acc + _log1m_b((base - self.b_leaf[k]) + off) \
                          - _log1m_b((base - self.a_leaf[k]) + off)
            return acc
        for k in range(k0, k1):
            acc = acc + _log1m(lr, (base - self.b_leaf[k]) + off) \
                      - _log1m(lr, (base - self.a_leaf[k]) + off)
        return acc

    cdef cplx _eval_one(self, double base, double off, double lr,
                        Py_ssize_t* stack_r, Py_ssize_t* stack_j) noexcept nogil:
        cdef Py_ssize_t top = 0, r, j, idx, p, span
        cdef cplx acc = 0, v, eta, h
        cdef double u = base + off
        if self.rmax < 1:
            return self._leaves(0, 1 << self.N, base, off, lr)
        stack_r[0] = 1
        stack_j[0] = 0
        stack_r[1] = 1
        stack_j[1] = 1
        top = 2
        while top > 0:
            top -= 1
            r = stack_r[top]
            j = stack_j[top]
            idx = (1 << r) - 2 + j
            v = _one_minus(lr, u - self.node_c[idx])
            if self.rho[r] <= self.theta * hypot(v.real, v.imag):
                eta = exp(lr) * _cis(u) * self.rho[r] / v
                h = self.mom[idx, self.P]
                for p in range(self.P - 1, 0, -1):
                    h = h * eta + self.mom[idx, p]
                acc = acc - h * eta
            elif r == self.rmax:
                span = 1 << (self.N - r)
                acc = acc + self._leaves(j * span, (j + 1) * span, base, off, lr)
            else:
                stack_r[top] = r + 1
                stack_j[top] = 2 * j
                stack_r[top + 1] = r + 1
                stack_j[top + 1] = 2 * j + 1
                top += 2
        return acc

    def eval(self, const double[::1] base, const double[::1] off, const double[::1] lr):
        cdef Py_ssize_t nq = base.shape[0], q
        out_arr = np.zeros(nq, dtype=np.complex128)
        cdef cplx[::1] out = out_arr
        sr_arr = np.zeros(2 * self.rmax + 4, dtype=np.intp)
        sj_arr = np.zeros(2 * self.rmax + 4, dtype=np.intp)
        cdef Py_ssize_t[::1] sr = sr_arr
        cdef Py_ssize_t[::1] sj = sj_arr
        with nogil:
            for q in range(nq):
                out[q] = self._eval_one(base[q], off[q], lr[q], &sr[0], &sj[0])
        return out_arr

    def near(self, Py_ssize_t k, int width, const double[::1] base,
             const double[::1] off):
        """Exact boundary log-sum of leaves k-width..k+width (cyclic)."""
        cdef Py_ssize_t nq = base.shape[0], q
        out_arr = np.zeros(nq, dtype=np.complex128)
        cdef cplx[::1] out = out_arr
        with nogil:
            for q in range(nq):
                out[q] = self._near_one(k, width, base[q], off[q])
        return out_arr

    cdef cplx _near_one(self, Py_ssize_t k, int width, double base, double off) noexcept nogil:
        cdef Py_ssize_t nl = 1 << self.N, i, kk, cnt
        cdef cplx acc = 0
        cnt = 2 * width + 1
        if cnt > nl:
            cnt = nl
        for i in range(cnt):
            kk = (k - width + i) % nl
            if kk < 0:
                kk += nl
            acc = acc + _log1m_b((base - self.b_leaf[kk]) + off) \
                      - _log1m_b((base - self.a_leaf[kk]) + off)
        return acc


def interval_moments(LogSumTree tree, double dens, double delta, double ktot,
                     const long[::1] side, const double[::1] off,
                     const double[::1] rel, const double[::1] wk,
                     const double[::1] wg, int pm, int width, int nc):
    """Graded-quadrature moments of f = exp(delta H) over every leaf interval.

    Returns ``mom[k, p] = int_{I_k} f(t) (t - c_k)^p / p! dt`` and a per-leaf
    Kronrod-minus-Gauss error estimate on ``mom[k, 0]``.
    """
    cdef Py_ssize_t nl = 1 << tree.N, k, i, p, q, nn = off.shape[0], nwide
    cdef double sigma = tree.b_leaf[0] - tree.a_leaf[0]
    cdef double pref = dens / (2.0 * 3.141592653589793)
    mom_arr = np.zeros((nl, pm), dtype=np.complex128)
    err_arr = np.zeros(nl)
    cdef cplx[:, ::1] mom = mom_arr
    cdef double[::1] err = err_arr
    cheb_x = np.cos(np.pi * (np.arange(nc) + 0.5) / nc)
    cdef double[::1] cx = cheb_x
    cheb_m = np.cos(np.pi * np.outer(np.arange(nc), np.arange(nc) + 0.5) / nc) * (2.0 / nc)
    cheb_m[0] *= 0.5
    cdef double[:, ::1] cm = np.ascontiguousarray(cheb_m)
    cdef double[::1] cbase = np.zeros(nc)
    cdef double[::1] coff = np.zeros(nc)
    cdef double[::1] clr = np.zeros(nc)
    cdef cplx[::1] far = np.zeros(nc, dtype=np.complex128)
    cdef cplx[::1] coef = np.zeros(nc, dtype=np.complex128)
    cdef cplx[::1] tot
    cdef cplx b0, b1, b2, s, hval, fval, eg
    cdef double x, pw, basev, sr, wsum
    sr_arr = np.zeros(2 * tree.rmax + 4, dtype=np.intp)
    sj_arr = np.zeros(2 * tree.rmax + 4, dtype=np.intp)
    cdef Py_ssize_t[::1] srs = sr_arr
    cdef Py_ssize_t[::1] sjs = sj_arr
    nwide = 2 * width + 1
    for k in range(nl):
        with nogil:
            for i in range(nc):
                coff[i] = 0.5 * sigma * (1.0 + cx[i])
                if nwide < nl:
                    far[i] = tree._eval_one(tree.a_leaf[k], coff[i], 0.0, &srs[0], &sjs[0]) \
                        - tree._near_one(k, width, tree.a_leaf[k], coff[i])
                else:
                    far[i] = 0
            for p in range(nc):
                s = 0
                for i in range(nc):
                    s = s + cm[p, i] * far[i]
                coef[p] = s
            eg = 0
            for q in range(nn):
                if side[q] == 0:
                    basev = tree.a_leaf[k]
                    x = 2.0 * off[q] / sigma - 1.0
                else:
                    basev = tree.b_leaf[k]
                    x = 1.0 + 2.0 * off[q] / sigma
                # Clenshaw
                b1 = 0
                b2 = 0
                for p in range(nc - 1, 0, -1):
                    b0 = 2.0 * x * b1 - b2 + coef[p]
                    b2 = b1
                    b1 = b0
                s = x * b1 - b2 + coef[0]
                s = s + tree._near_one(k, width, basev, off[q])
                hval.real = pref * (ktot + 2.0 * s.imag)
                hval.imag = -2.0 * pref * s.real
                fval = exp(delta * hval.real) * _cis(delta * hval.imag)
                pw = wk[q]
                for p in range(pm):
                    mom[k, p] += pw * fval
                    pw = pw * rel[q] / (p + 1)
                eg = eg + (wk[q] - wg[q]) * fval
            err[k] = hypot(eg.real, eg.imag)
    return mom_arr, err_arr
