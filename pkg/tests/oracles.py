"""Independent reference computations used by the tests.

None of these call into circsing; they are slow, direct formulas.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate

TWO_PI = 2.0 * math.pi


def coeff_quad(density, a: float, b: float, m: int) -> complex:
    """``int_a^b density(t) exp(-i m t) dt`` by adaptive quadrature."""
    re = integrate.quad(lambda t: density(t) * math.cos(m * t), a, b, limit=400)[0]
    im = integrate.quad(lambda t: -density(t) * math.sin(m * t), a, b, limit=400)[0]
    return complex(re, im)


def exp_sum_direct(t, c, ms) -> np.ndarray:
    t = np.asarray(t, float)
    c = np.asarray(c, complex)
    return np.array([np.sum(c * np.exp(-1j * m * t)) for m in ms])


def interval_coeffs(starts, lengths, dens, ms) -> np.ndarray:
    """Closed form for piecewise-constant densities, summed term by term."""
    out = []
    for m in ms:
        tot = 0j
        for a, ln, w in zip(starts, lengths, dens):
            b = a + ln
            if m == 0:
                tot += w * ln
            else:
                tot += w * (np.exp(-1j * m * a) - np.exp(-1j * m * b)) / (1j * m)
        out.append(tot)
    return np.array(out)


def herglotz_quad(intervals, sigma: float, n: int, z: complex) -> complex:
    """``(1/2pi) int (e^{it} + z)/(e^{it} - z) g_n(t) dt`` per interval by quadrature."""
    dens = n / TWO_PI

    def kern(t):
        e = np.exp(1j * t)
        return (e + z) / (e - z)

    tot = 0j
    for a in intervals:
        re = integrate.quad(lambda t: kern(t).real, a, a + sigma, limit=200, epsabs=1e-13)[0]
        im = integrate.quad(lambda t: kern(t).imag, a, a + sigma, limit=200, epsabs=1e-13)[0]
        tot += complex(re, im)
    return dens * tot / TWO_PI


def gauge_t_log(n: int) -> float:
    """``(2 pi / n) log(n 2^n / 2 pi)`` for the natural rank-n cover."""
    return (TWO_PI / n) * math.log(n * 2.0 ** n / TWO_PI)


def cover_bruteforce(starts, lengths, eps: float, grid: int = 4000) -> int:
    """Minimal arc cover found by trying every greedy start on a fine grid of offsets.

    For a union on the circle an optimal cover can be rotated so one arc
    begins at a component start; we still scan offsets to stay independent.
    """
    starts = np.asarray(starts, float)
    lengths = np.asarray(lengths, float)
    pts = []
    for a, ln in zip(starts, lengths):
        k = max(2, int(math.ceil(ln / (eps / 50))) + 1)
        pts.append(np.linspace(a, a + ln, k))
    pts = np.sort(np.mod(np.concatenate(pts), TWO_PI))
    best = None
    cands = np.r_[pts, np.linspace(0, TWO_PI, grid, endpoint=False)]
    for s in cands:
        rel = np.sort(np.mod(pts - s, TWO_PI))
        cnt, i = 0, 0
        while i < rel.size:
            cnt += 1
            end = rel[i] + eps + 1e-12
            i = int(np.searchsorted(rel, end, side="right"))
        best = cnt if best is None else min(best, cnt)
    return best


def neg_tail_threshold(c_neg, p: float, target: float) -> int:
    """Smallest ``s`` with ``(sum_{n >= s} |c_{-n}|^p)^(1/p) < target``; ``c_neg[i]`` is ``c_{-(i+1)}``."""
    a = np.abs(np.asarray(c_neg)) ** p
    for s in range(1, a.size + 2):
        if np.sum(a[s - 1:]) ** (1.0 / p) < target:
            return s
    raise AssertionError("no threshold")


def smallest_dilation(fn, D: int, tol: float, lmax: int) -> int:
    """Scalar scan of ``sum_{0<|n|<=D} fn(l n)`` for the first ``l`` below ``tol``."""
    for l in range(1, lmax + 1):
        s = sum(fn(l * n) + fn(-l * n) for n in range(1, D + 1))
        if s < tol:
            return l
    raise AssertionError("not found")


def p_series(exponent: float, N: int) -> np.ndarray:
    n = np.arange(1, N + 1, dtype=float)
    return np.cumsum(n ** (-exponent))
