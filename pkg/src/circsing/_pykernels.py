"""Pure-numpy fallback for the compiled kernels.

Same signatures and results as ``_ckernels`` (to rounding); the log-sum
"tree" here is a direct O(points x intervals) sum.
"""
from __future__ import annotations

import numpy as np

_CHUNK = 1 << 22


def _log1m(lr, x):
    e = np.expm1(lr)
    s = np.sin(0.5 * x)
    re = 2.0 * s * s - e * np.cos(x)
    im = -(e + 1.0) * np.sin(x)
    return np.log(np.hypot(re, im)) + 1j * np.arctan2(im, re)


def exp_sum(t, c, lo, hi):
    t = np.asarray(t, dtype=float)
    c = np.asarray(c, dtype=complex)
    m = np.arange(lo, hi + 1)
    out = np.zeros(m.size, dtype=complex)
    step = max(1, _CHUNK // max(1, m.size))
    for s in range(0, t.size, step):
        tt = t[s:s + step]
        out += np.exp(-1j * np.outer(m, tt)) @ c[s:s + step]
    return out


def interval_sum(center, half, w, lo, hi):
    center = np.asarray(center, dtype=float)
    half = np.asarray(half, dtype=float)
    w = np.asarray(w, dtype=complex)
    m = np.arange(lo, hi + 1)
    out = np.zeros(m.size, dtype=complex)
    step = max(1, _CHUNK // max(1, m.size))
    for s in range(0, center.size, step):
        c = center[s:s + step]
        h = half[s:s + step]
        # 2 sin(m h)/m written as 2h sinc
        kern = 2.0 * h[None, :] * np.sinc(np.outer(m, h) / np.pi)
        out += (np.exp(-1j * np.outer(m, c)) * kern) @ w[s:s + step]
    return out


def logsum_direct(a, b, base, off, lr):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    base = np.asarray(base, dtype=float)
    off = np.asarray(off, dtype=float)
    lr = np.asarray(lr, dtype=float)
    out = np.zeros(base.size, dtype=complex)
    step = max(1, _CHUNK // max(1, a.size))
    for s in range(0, base.size, step):
        bq = base[s:s + step, None]
        oq = off[s:s + step, None]
        lq = lr[s:s + step, None]
        out[s:s + step] = (_log1m(lq, (bq - b[None, :]) + oq)
                           - _log1m(lq, (bq - a[None, :]) + oq)).sum(axis=1)
    return out


class LogSumTree:
    """Direct-summation stand-in with the compiled tree's interface."""

    def __init__(self, a_all, sigma, N, P=36, theta=0.35, leaf_block=3):
        self.N = N
        self.P = P
        self.theta = theta
        self.rmax = max(0, N - leaf_block)
        a_all = np.asarray(a_all, dtype=float)
        self.a_leaf = np.ascontiguousarray(a_all[(1 << N) - 1:(1 << (N + 1)) - 1])
        self.b_leaf = self.a_leaf + sigma[N]

    def eval(self, base, off, lr):
        return logsum_direct(self.a_leaf, self.b_leaf, base, off, lr)

    def near(self, k, width, base, off):
        nl = self.a_leaf.size
        idx = np.unique((k + np.arange(-width, width + 1)) % nl)
        base = np.asarray(base, dtype=float)
        return logsum_direct(self.a_leaf[idx], self.b_leaf[idx], base,
                             np.asarray(off, dtype=float), np.zeros(base.size))


def interval_moments(tree, dens, delta, ktot, side, off, rel, wk, wg, pm, width, nc):
    nl = tree.a_leaf.size
    sigma = tree.b_leaf[0] - tree.a_leaf[0]
    pref = dens / (2.0 * np.pi)
    side = np.asarray(side)
    off = np.asarray(off, dtype=float)
    rel = np.asarray(rel, dtype=float)
    wk = np.asarray(wk, dtype=float)
    wg = np.asarray(wg, dtype=float)
    powers = np.stack([rel ** p for p in range(pm)], axis=1)
    fact = np.cumprod(np.r_[1.0, np.arange(1, pm)])
    powers = powers / fact[None, :]
    mom = np.zeros((nl, pm), dtype=complex)
    err = np.zeros(nl)
    for k in range(nl):
        base = np.where(side == 0, tree.a_leaf[k], tree.b_leaf[k])
        s = tree.eval(base, off, np.zeros(off.size))
        h = pref * (ktot + 2.0 * s.imag) - 2j * pref * s.real
        f = np.exp(delta * h)
        mom[k] = (wk * f) @ powers
        err[k] = abs(((wk - wg) * f).sum())
    return mom, err
