"""Herglotz extensions of the stage densities and the distribution built from them.

For the rank-n system with density ``d = n / (2 pi)`` on ``K_n``::

    H_n(z) = (d / 2pi) sum_k [ (b_k - a_k) - 2i (log(1 - z e^{-i b_k}) - log(1 - z e^{-i a_k})) ]
    F_n(z) = exp(delta H_n(z))

``Re H_n`` is the Poisson integral of ``g_n`` (equal to ``d`` on ``K_n`` and 0
off it on the circle), ``Im H_n`` its conjugate. ``H_n(0) = 1 / (2 pi)``.

Points are passed around as ``(base, off, lr)`` with
``z = exp(lr + i (base + off))`` so that boundary points a hair away from an
endpoint keep their distance to it exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .cantor import RankedIntervalSystem, build, leaf_arrays, stage_density
from .core import (ANGLE_TOL, TWO_PI, CoeffWindow, SmoothBump, WindowError, block_verdict,
                   fourier_coeffs, pair)
from .quadrature import graded_rule, segment_nodes
from .report import CertifiedReport

DEFAULT_C_LOG = 2.0
SMALL_DELTA = 0.05 * TWO_PI
LARGE_DELTA = 2.0 * TWO_PI
SERIES_MAX_TERMS = 1 << 23


class EndpointSingularity(ValueError):
    pass


class StageDepthError(ValueError):
    pass


class AliasError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


class SeriesTailError(ValueError):
    pass


def n_of_m(m: int, C_log: float = DEFAULT_C_LOG) -> int:
    """Stage used for coefficient ``m``: ``max(1, ceil(C_log ln m))``."""
    m = abs(int(m))
    if m <= 1:
        return 1
    return max(1, math.ceil(C_log * math.log(m)))


def _next_pow2(x: float) -> int:
    return 1 << max(0, math.ceil(math.log2(max(1.0, x))))


@dataclass(eq=False)
class StageAnalytic:
    """``H_n`` and ``F_n = exp(delta H_n)`` of one stage of a built system."""

    sys: RankedIntervalSystem
    n: int
    delta: float
    strategy: str = "closed_form"
    series_terms: int | None = None
    tail_tol: float = 1e-10

    def __post_init__(self):
        if not 1 <= self.n <= self.sys.n_max:
            raise StageDepthError(f"stage {self.n} needs n_max >= {self.n}; increase n_max")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.strategy not in ("closed_form", "truncated_series"):
            raise ValueError(f"unknown strategy {self.strategy!r}")

    @property
    def density(self) -> float:
        return self.n / TWO_PI

    @property
    def total_length(self) -> float:
        return (1 << self.n) * self.sys.sigma(self.n)

    @property
    def sup_F(self) -> float:
        return math.exp(self.delta * self.density)

    @cached_property
    def leaves(self) -> tuple[np.ndarray, np.ndarray]:
        return leaf_arrays(self.sys, self.n)

    @cached_property
    def tree(self):
        return kernels.LogSumTree(self.sys.a_flat, np.asarray(self.sys.schedule.sigma), self.n)

    # -- closed form -------------------------------------------------------
    def logsum(self, base, off, lr, direct: bool = False) -> np.ndarray:
        base = np.ascontiguousarray(base, dtype=float)
        off = np.ascontiguousarray(np.broadcast_to(off, base.shape), dtype=float)
        lr = np.ascontiguousarray(np.broadcast_to(lr, base.shape), dtype=float)
        if direct:
            a, b = self.leaves
            return kernels.logsum_direct(a, b, base, off, lr)
        return self.tree.eval(base, off, lr)

    def H_from_logsum(self, s: np.ndarray) -> np.ndarray:
        pref = self.density / TWO_PI
        return pref * (self.total_length - 2j * s)

    def H_polar(self, base, off, lr, direct: bool = False) -> np.ndarray:
        return self.H_from_logsum(self.logsum(base, off, lr, direct))

    def check_boundary(self, angles: np.ndarray):
        a, b = self.leaves
        ends = np.sort(np.mod(np.r_[a, b], TWO_PI))
        ang = np.mod(angles, TWO_PI)
        i = np.searchsorted(ends, ang)
        lo = ends[(i - 1) % ends.size]
        hi = ends[i % ends.size]
        dist = np.minimum(np.abs(np.mod(ang - lo + np.pi, TWO_PI) - np.pi),
                          np.abs(np.mod(hi - ang + np.pi, TWO_PI) - np.pi))
        if np.any(dist <= ANGLE_TOL):
            raise EndpointSingularity("endpoint singularity")

    def H(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        shape = z.shape
        z = z.ravel()
        r = np.abs(z)
        if np.any(r > 1.0 + 1e-15):
            raise ValueError("|z| must be <= 1")
        if self.strategy == "truncated_series":
            return herglotz_series(self, z, self.series_terms, self.tail_tol)[0].reshape(shape)
        on_circle = r >= 1.0
        ang = np.mod(np.angle(z), TWO_PI)
        if np.any(on_circle):
            self.check_boundary(ang[on_circle])
        with np.errstate(divide="ignore"):
            lr = np.where(on_circle, 0.0, np.log(np.where(r > 0, r, 1.0)))
        lr = np.where(r == 0, -np.inf, lr)
        return self.H_polar(ang, np.zeros_like(ang), lr).reshape(shape)

    def F(self, z) -> np.ndarray:
        return np.exp(self.delta * self.H(z))

    def boundary_f(self, base, off) -> np.ndarray:
        base = np.asarray(base, dtype=float)
        return np.exp(self.delta * self.H_polar(base, off, np.zeros(base.shape)))


def herglotz_series(sa: StageAnalytic, z: np.ndarray, terms: int | None = None,
                    tail_tol: float = 1e-10) -> tuple[np.ndarray, int, float]:
    """``(1/2pi)(g_hat(0) + 2 sum_{k=1}^{M'} g_hat(k) z^k)`` with its tail bound.

    Returns (values, M', tail bound). With ``terms=None`` the smallest ``M'``
    meeting ``tail_tol`` is used.
    """
    z = np.asarray(z, dtype=complex).ravel()
    rmax = float(np.abs(z).max(initial=0.0))
    if rmax >= 1.0:
        raise SeriesTailError("series needs |z| < 1")

    def tail(M):
        return rmax ** (M + 1) / (math.pi * (1.0 - rmax))

    if terms is None:
        if rmax == 0.0:
            terms = 0
        else:
            need = math.log(tail_tol * math.pi * (1.0 - rmax)) / math.log(rmax) - 1.0
            terms = max(0, math.ceil(need))
        if terms > SERIES_MAX_TERMS:
            raise SeriesTailError(f"series needs M' = {terms} terms; above cap")
    tb = tail(terms) if rmax > 0 else 0.0
    if tb > tail_tol:
        need = math.ceil(math.log(tail_tol * math.pi * (1.0 - rmax)) / math.log(rmax) - 1.0)
        raise SeriesTailError(f"tail bound {tb:.3g} above tolerance; need M' >= {need}")
    g = fourier_coeffs(stage_density(sa.sys, sa.n), 0, terms).values
    coef = 2.0 * g
    coef[0] = g[0]
    vals = np.polynomial.polynomial.polyval(z, coef) / TWO_PI
    return vals, terms, tb


def herglotz_eval(sa: StageAnalytic, z) -> np.ndarray | complex:
    out = sa.H(z)
    return complex(out) if np.ndim(out) == 0 else out


def stage_F(sa: StageAnalytic, z) -> np.ndarray | complex:
    out = sa.F(z)
    return complex(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# contour extraction of Taylor coefficients

def alias_bound(sup_f: float, r: float, fft_size: int, m: int) -> float:
    return sup_f * r ** (fft_size - m)


def default_fft_size(m: int, delta: float, n: int) -> int:
    return _next_pow2(max(8 * m, 4 * m * math.ceil(delta * n)))


def fft_size_for(m: int, r: float, sup_f: float, tol: float, floor: int) -> int:
    """Smallest power of two >= ``floor`` whose alias bound is below ``tol * max(1, sup_f)``."""
    target = tol * max(1.0, sup_f)
    if sup_f <= target or r == 0.0:
        return floor
    need = m + math.log(target / sup_f) / math.log(r)
    return max(floor, _next_pow2(need + 1))


def contour_coeffs(fun: Callable[[np.ndarray], np.ndarray], r: float, fft_size: int) -> np.ndarray:
    """Coefficients ``0..fft_size-1`` from samples on ``|z| = r``.

    ``c_k = (1 / (2 pi i)) oint F(z) z^{-k-1} dz`` discretized with the
    trapezoid rule, i.e. ``fft(F(r w^p))[k] / (P r^k)``.
    """
    p = np.arange(fft_size)
    z = r * np.exp(2j * np.pi * p / fft_size)
    vals = np.asarray(fun(z), dtype=complex)
    c = np.fft.fft(vals) / fft_size
    k = np.arange(fft_size)
    return c * np.exp(-k * math.log(r)) if r != 1.0 else c


def contour_taylor(fun, m: int, sup_f: float, fft_size: int | None = None,
                   radius: float | None = None, tol: float = 1e-9, floor: int | None = None):
    """Single coefficient ``m`` of an analytic ``fun``; returns (value, alias bound, size, r)."""
    if m < 0:
        return 0j, 0.0, 0, 1.0
    r = radius if radius is not None else 1.0 - 1.0 / max(m, 2)
    floor = floor if floor is not None else _next_pow2(8 * max(m, 1))
    user = fft_size is not None
    size = fft_size if user else fft_size_for(m, r, sup_f, tol, floor)
    ab = alias_bound(sup_f, r, size, m)
    if ab > tol * max(1.0, sup_f):
        raise AliasError(f"alias bound {ab:.3g} above tolerance; "
                         f"use fft_size >= {fft_size_for(m, r, sup_f, tol, floor)}")
    c = contour_coeffs(fun, r, size)
    return complex(c[m]), ab, size, r


@dataclass
class TaylorGroup:
    stage: int
    r: float
    fft_size: int
    alias: float
    residual: float
    coeffs: np.ndarray  # index m = 0 .. m_max


def _stage_residual(sa: StageAnalytic, z: np.ndarray, samples: int = 32) -> float:
    """``e * max |F_tree - F_direct|`` on a spread of contour points."""
    idx = np.linspace(0, z.size - 1, min(samples, z.size)).astype(int)
    zz = z[idx]
    base = np.mod(np.angle(zz), TWO_PI)
    lr = np.log(np.abs(zz))
    h1 = sa.H_polar(base, np.zeros_like(base), lr)
    h2 = sa.H_polar(base, np.zeros_like(base), lr, direct=True)
    return math.e * float(np.max(np.abs(np.exp(sa.delta * h1) - np.exp(sa.delta * h2))))


def taylor_group(sys: RankedIntervalSystem, delta: float, stage: int, m_max: int,
                 tol: float = 1e-9, fft_size: int | None = None) -> TaylorGroup:
    """``F_hat_stage(m)`` for ``m = 0..m_max`` from one contour at ``r = 1 - 1/max(m_max, 2)``."""
    if stage > sys.n_max:
        raise StageDepthError(f"stage {stage} exceeds built depth {sys.n_max}; increase n_max")
    sa = StageAnalytic(sys, stage, delta)
    m_max = max(int(m_max), 1)
    r = 1.0 - 1.0 / max(m_max, 2)
    floor = default_fft_size(m_max, delta, stage)
    size = fft_size if fft_size is not None else fft_size_for(m_max, r, sa.sup_F, tol, floor)
    ab = alias_bound(sa.sup_F, r, size, m_max)
    if ab > tol * max(1.0, sa.sup_F):
        raise AliasError(f"alias bound {ab:.3g} above tolerance; "
                         f"use fft_size >= {fft_size_for(m_max, r, sa.sup_F, tol, floor)}")
    zs = r * np.exp(2j * np.pi * np.arange(size) / size)
    base = np.mod(2 * np.pi * np.arange(size) / size, TWO_PI)
    lr = np.full(size, math.log(r))
    vals = np.exp(delta * sa.H_polar(base, np.zeros(size), lr))
    c = np.fft.fft(vals)[:m_max + 1] / size
    c = c * np.exp(-np.arange(m_max + 1) * math.log(r))
    res = _stage_residual(sa, zs) if delta != 0 else 0.0
    return TaylorGroup(stage, r, size, ab, res, c)


def taylor_coeff(sys: RankedIntervalSystem, delta: float, m: int, C_log: float = DEFAULT_C_LOG,
                 stage: int | None = None, fft_size: int | None = None,
                 tol: float = 1e-9) -> CertifiedReport:
    """``F_hat_{n(m)}(m)``; ``stage`` overrides ``n(m)``. Negative ``m`` gives exactly 0."""
    n = stage if stage is not None else n_of_m(m, C_log)
    params = {"m": int(m), "delta": delta, "C_log": C_log, "stage_n": n, "n_max": sys.n_max}
    if m < 0:
        return CertifiedReport("taylor_coeff", 0j, params, {"alias": 0.0, "residual": 0.0},
                               tol, True, sys.seed)
    if n > sys.n_max:
        raise StageDepthError(f"n(m) = {n} exceeds built depth {sys.n_max}; increase n_max")
    g = taylor_group(sys, delta, n, max(m, 1), tol, fft_size)
    params.update(radius=g.r, fft_size=g.fft_size)
    return CertifiedReport("taylor_coeff", complex(g.coeffs[m]), params,
                           {"alias": g.alias, "residual": g.residual}, tol, True, sys.seed)


def taylor_table(sys: RankedIntervalSystem, delta: float, ms: Sequence[int],
                 C_log: float = DEFAULT_C_LOG, tol: float = 1e-9,
                 stage_cap: int | None = None) -> dict[int, tuple[complex, int, float, float]]:
    """``{m: (F_hat, stage, alias, residual)}`` with one contour per stage."""
    groups: dict[int, list[int]] = {}
    for m in ms:
        n = n_of_m(m, C_log)
        if stage_cap is not None:
            n = min(n, stage_cap)
        groups.setdefault(n, []).append(int(m))
    out = {}
    for n, mlist in sorted(groups.items()):
        pos = [m for m in mlist if m >= 0]
        for m in mlist:
            if m < 0:
                out[m] = (0j, n, 0.0, 0.0)
        if not pos:
            continue
        g = taylor_group(sys, delta, n, max(pos), tol)
        for m in pos:
            out[m] = (complex(g.coeffs[m]), n, g.alias, g.residual)
    return out


# ---------------------------------------------------------------------------
# boundary values

def _segments(sys: RankedIntervalSystem, N: int, which: str):
    a, b = leaf_arrays(sys, N)
    if which == "intervals":
        return a, b
    nxt = np.r_[a[1:], a[0] + TWO_PI]
    return b, nxt


def boundary_integral(sys: RankedIntervalSystem, delta: float, N: int, ms: Iterable[int],
                      where: str = "all", tol: float = 1e-9):
    """``int f_N(t) e^{-imt} dt`` over K_N ('intervals'), its complement ('gaps') or 'all'.

    Every panel is integrated twice, whole and halved; the halved result is
    returned and the per-segment differences, summed in absolute value, are
    the error estimate.
    """
    ms = np.asarray(list(ms), dtype=np.int64)
    sa = StageAnalytic(sys, N, delta)
    hmax = 0.25 / max(1, int(np.abs(ms).max(initial=1)))
    kinds = ("intervals", "gaps") if where == "all" else (where,)
    vals = np.zeros(ms.size, dtype=complex)
    errs = np.zeros(ms.size)
    for kind in kinds:
        left, right = _segments(sys, N, kind)
        per_seg = []
        for split in (1, 2):
            seg, base, off, wk, _ = segment_nodes(left, right, tol, hmax, split)
            f = wk * sa.boundary_f(base, off)
            t = base + off
            res = np.zeros((ms.size, left.size), dtype=complex)
            for i, m in enumerate(ms):
                e = np.exp(-1j * m * t) * f
                res[i] = np.bincount(seg, e.real, left.size) + 1j * np.bincount(seg, e.imag, left.size)
            per_seg.append(res)
        vals += per_seg[1].sum(axis=1)
        errs += np.abs(per_seg[1] - per_seg[0]).sum(axis=1)
    return vals, errs


def fhat(sys: RankedIntervalSystem, delta: float, N: int, m: int, tol: float = 1e-9,
         max_error: float = 1e-6) -> CertifiedReport:
    """``f_hat_N(m)`` by endpoint-graded quadrature over the whole circle."""
    if not 1 <= N <= sys.n_max:
        raise StageDepthError(f"stage {N} outside built depth {sys.n_max}")
    v, e = boundary_integral(sys, delta, N, [m], "all", tol)
    params = {"m": int(m), "delta": delta, "stage_n": N, "tol": tol}
    if e[0] > max_error:
        raise QuadratureError(f"quadrature error estimate {e[0]:.3g} above {max_error:.3g}")
    return CertifiedReport("fhat", complex(v[0]), params, {"quadrature": float(e[0])},
                           tol, True, sys.seed)


# ---------------------------------------------------------------------------
# moments of f_N over K_N and the X_m window

@dataclass
class KMoments:
    """``mom[k, p] = int_{I_k} f_N (t - c_k)^p / p! dt`` for every rank-N interval."""

    N: int
    delta: float
    centers: np.ndarray
    half: float
    mom: np.ndarray
    err: np.ndarray
    tol: float

    @property
    def pm(self) -> int:
        return self.mom.shape[1]

    def m_reach(self) -> int:
        """Largest |m| for which the truncated moment expansion meets ``tol``."""
        P = self.pm
        lim = (self.tol * math.factorial(P)) ** (1.0 / P) / self.half
        return int(lim)

    def X(self, lo: int, hi: int) -> tuple[np.ndarray, float]:
        """``X_m = int_{K_N} f_N e^{-imt} dt`` for ``m = lo..hi`` and an error bound."""
        if max(abs(lo), abs(hi)) > self.m_reach():
            raise WindowError(f"moments cover |m| <= {self.m_reach()}; raise pm")
        m = np.arange(lo, hi + 1)
        out = np.zeros(m.size, dtype=complex)
        fac = np.ones(m.size, dtype=complex)
        for p in range(self.pm):
            out += fac * kernels.exp_sum(self.centers, self.mom[:, p], lo, hi)
            fac = fac * (-1j * m)
        mm = max(abs(lo), abs(hi))
        trunc = float(np.sum(np.abs(self.mom[:, 0]))) * (mm * self.half) ** self.pm / math.factorial(self.pm)
        nufft = kernels.NUFFT_EPS * float(np.sum(np.abs(self.mom[:, 0])))
        return out, float(self.err.sum()) + trunc + nufft


def moments_order(m_abs: int, half: float, tol: float) -> int:
    x = max(m_abs, 1) * half
    P, term = 1, x
    while term >= tol:
        P += 1
        term *= x / P
    return P


def k_moments(sys: RankedIntervalSystem, delta: float, N: int, m_abs: int, tol: float = 1e-9,
              width: int = 1, nc: int = 15, backend: str | None = None) -> KMoments:
    if not 1 <= N <= sys.n_max:
        raise StageDepthError(f"stage {N} outside built depth {sys.n_max}")
    sig = sys.sigma(N)
    rule = graded_rule(sig, tol)
    pm = moments_order(m_abs, 0.5 * sig, tol * 1e-3)
    mod = kernels.backend_module(backend)
    tree = mod.LogSumTree(sys.a_flat, np.asarray(sys.schedule.sigma), N)
    mom, err = kernels.interval_moments(tree, N / TWO_PI, delta, (1 << N) * sig, rule.side,
                                        rule.off, rule.rel, rule.wk, rule.wg, pm, width, nc)
    a, _ = leaf_arrays(sys, N)
    return KMoments(N, delta, a + 0.5 * sig, 0.5 * sig, mom, err, tol)


# ---------------------------------------------------------------------------
# the distribution S

@dataclass
class ShatResult:
    window: CoeffWindow
    stage_n: np.ndarray
    N_f: int
    error: float
    stability: np.ndarray | None
    params: dict = field(default_factory=dict)

    def rows(self):
        for i, m in enumerate(self.window.indices):
            v = self.window.values[i]
            st = float(self.stability[i]) if self.stability is not None else float("nan")
            yield [int(m), float(v.real), float(v.imag), int(self.stage_n[i]), self.N_f, st]

    def report(self, m: int) -> CertifiedReport:
        i = m - self.window.lo
        st = None if self.stability is None else float(self.stability[i])
        return CertifiedReport("shat", complex(self.window.values[i]),
                               dict(self.params, m=int(m), stage_n=int(self.stage_n[i])),
                               {"total": self.error}, None, None, self.params.get("seed"),
                               {"stability": st})


def _shat_values(sys, delta, lo, hi, C_log, N_f, tol, single_stage, clamp=False, cache=None):
    """Window of S_hat at boundary stage ``N_f``.

    Negative m: ``X_m``. Nonnegative m: ``F_hat_{n'}(m) - F_hat_{N_f}(m) + X_m``
    with ``n' = n(m)``; ``clamp`` caps it at ``N_f`` and ``single_stage`` fixes it to ``N_f``.
    """
    mabs = max(abs(lo), abs(hi))
    cache = {} if cache is None else cache

    def group(n, mmax):
        key = (int(n), int(mmax))
        if key not in cache:
            cache[key] = taylor_group(sys, delta, int(n), int(mmax), tol)
        return cache[key]

    km = k_moments(sys, delta, N_f, mabs, tol)
    X, xerr = km.X(lo, hi)
    vals = X.copy()
    m = np.arange(lo, hi + 1)
    if single_stage:
        stages = np.full(m.size, N_f)
    elif clamp:
        stages = np.array([min(n_of_m(k, C_log), N_f) for k in m])
    else:
        stages = np.array([n_of_m(k, C_log) for k in m])
        if stages.max() > sys.n_max:
            raise StageDepthError(f"n(m) reaches {stages.max()} > n_max {sys.n_max}; "
                                  "increase n_max or clamp")
    err = xerr
    if hi >= 0 and not single_stage:
        pos = m >= 0
        full = group(N_f, max(hi, 1))
        err += TWO_PI * (full.alias + full.residual)
        for n in np.unique(stages[pos]):
            sel = pos & (stages == n)
            if n == N_f:
                continue
            ks = m[sel]
            g = group(n, max(int(ks.max()), 1))
            err += TWO_PI * (g.alias + g.residual)
            # Taylor coefficient a_m of F is F_hat(m) / (2 pi) in the measure convention
            vals[sel] += TWO_PI * (g.coeffs[ks] - full.coeffs[ks])
    return vals, stages, err


def shat_window(sys: RankedIntervalSystem, delta: float, lo: int, hi: int,
                C_log: float = DEFAULT_C_LOG, N_f: int | None = None, tol: float = 1e-9,
                stability: bool = True, single_stage: bool = False,
                clamp: bool = False) -> ShatResult:
    """Stage surrogate of ``S_hat`` on ``lo..hi`` with the ``N_f -> N_f + 1`` change."""
    if N_f is None:
        raise ValueError("N_f is required")
    need = N_f + 1 if stability else N_f
    if need > sys.n_max:
        raise StageDepthError(f"stage {need} exceeds built depth {sys.n_max}; increase n_max")
    if delta == 0:
        # F = 1 and f = 1 identically: S vanishes
        z = np.zeros(hi - lo + 1, dtype=complex)
        st = np.zeros(hi - lo + 1) if stability else None
        return ShatResult(CoeffWindow(lo, hi, z), np.full(z.size, N_f), N_f, 0.0, st,
                          {"delta": delta, "C_log": C_log, "N_f": N_f, "seed": sys.seed})
    cache: dict = {}
    vals, stages, err = _shat_values(sys, delta, lo, hi, C_log, N_f, tol, single_stage, clamp,
                                     cache)
    st = None
    if stability:
        v2, _, e2 = _shat_values(sys, delta, lo, hi, C_log, N_f + 1, tol, single_stage, clamp,
                                 cache)
        st = np.abs(vals - v2)
        err = max(err, e2)
    params = {"delta": delta, "C_log": C_log, "N_f": N_f, "seed": sys.seed,
              "n_max": sys.n_max, "single_stage": single_stage, "clamp": clamp, "tol": tol}
    return ShatResult(CoeffWindow(lo, hi, vals), stages, N_f, err, st, params)


def shat(sys: RankedIntervalSystem, delta: float, m: int, C_log: float = DEFAULT_C_LOG,
         N_f: int = 10, tol: float = 1e-9, clamp: bool = False) -> CertifiedReport:
    res = shat_window(sys, delta, m, m, C_log, N_f, tol, stability=True, clamp=clamp)
    return res.report(m)


# ---------------------------------------------------------------------------
# support pairing

class BumpNotInGap(ValueError):
    pass


def bump_in_gap(sys: RankedIntervalSystem, N: int, psi: SmoothBump) -> bool:
    a, b = leaf_arrays(sys, N)
    lo = np.mod(psi.center - psi.half_width, TWO_PI)
    # the bump must fit in the gap that follows some interval
    gaps_lo = b
    gaps_hi = np.r_[a[1:], a[0] + TWO_PI]
    for shift in (0.0, TWO_PI):
        x0 = lo + shift
        i = np.searchsorted(gaps_lo, x0, side="right") - 1
        if 0 <= i < gaps_lo.size and gaps_lo[i] < x0 and x0 + 2 * psi.half_width < gaps_hi[i]:
            return True
    return False


def largest_gap_bump(sys: RankedIntervalSystem, N: int, order: int = 6,
                     fill: float = 0.8) -> SmoothBump:
    """Bump centred in the widest rank-N gap, covering ``fill`` of its width."""
    a, b = leaf_arrays(sys, N)
    gaps_hi = np.r_[a[1:], a[0] + TWO_PI]
    w = gaps_hi - b
    i = int(np.argmax(w))
    return SmoothBump(float(np.mod(b[i] + 0.5 * w[i], TWO_PI)), 0.5 * fill * float(w[i]), order)


@dataclass
class PairingResult:
    partial: np.ndarray
    budget: np.ndarray
    verdict: str
    check_M: list[int]


def support_pairing(s_window: CoeffWindow, sys: RankedIntervalSystem, psi: SmoothBump, M: int,
                    N: int | None = None, tv_bound: float | None = None,
                    numeric_error: float = 0.0) -> PairingResult:
    """Partial sums of ``<S, psi>`` and the budget they are judged against.

    ``budget[M'] = (tv / 2pi) * tail(psi_hat, M') + numeric + rounding``, where
    ``tv`` bounds ``sup |S_hat|`` (default: the observed maximum of the window).
    Verdict 'supported-off-psi' when ``|P_M'| <= budget`` at the last three
    dyadic ``M'``.
    """
    N = sys.n_max if N is None else N
    if not bump_in_gap(sys, N, psi):
        raise BumpNotInGap("bump not in gap")
    P = pair(s_window, psi, M)
    tv = float(np.abs(s_window.get(-M, M)).max()) if tv_bound is None else tv_bound
    Ms = np.arange(M + 1)
    tail = np.array([psi.decay_bound(max(k, 1)) for k in Ms])
    terms = np.abs(s_window.get(-M, M)) * np.abs(psi.coeffs(np.arange(-M, M + 1)))
    rounding = 64 * np.finfo(float).eps * float(terms.sum()) / TWO_PI
    budget = (tv * tail / TWO_PI if tv > 0 else np.zeros(M + 1)) + numeric_error + rounding
    checks = []
    k = M
    while len(checks) < 3 and k >= 1:
        checks.append(k)
        k //= 2
    ok = len(checks) == 3 and all(abs(P[c]) <= budget[c] for c in checks)
    return PairingResult(P, budget, "supported-off-psi" if ok else "not-supported-off-psi", checks)


# ---------------------------------------------------------------------------
# Monte-Carlo moment probe

@dataclass
class MomentProbe:
    m: np.ndarray
    seeds: list[int]
    X: np.ndarray            # [seed, m]
    fourth: np.ndarray       # E|X|^4 per m
    fourth_se: np.ndarray
    second: np.ndarray       # E|X|^2 per m
    slope: float
    slope_se: float
    intercept: float
    params: dict

    @property
    def band95(self) -> tuple[float, float]:
        return self.slope - 1.96 * self.slope_se, self.slope + 1.96 * self.slope_se

    def rows(self):
        for i, m in enumerate(self.m):
            yield [int(m), float(self.fourth[i]), float(self.fourth_se[i]), len(self.seeds)]


def derive_seeds(master_seed: int, count: int) -> list[int]:
    ss = np.random.SeedSequence(master_seed)
    return [int(s) for s in ss.generate_state(count, dtype=np.uint64)]


def weighted_slope(x: np.ndarray, y: np.ndarray, sy: np.ndarray | None = None):
    """Weighted least squares ``y = a + b x``; returns (b, se_b, a)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    w = np.ones_like(x) if sy is None else 1.0 / np.maximum(np.asarray(sy, float), 1e-300) ** 2
    W = w.sum()
    xm = (w * x).sum() / W
    ym = (w * y).sum() / W
    sxx = (w * (x - xm) ** 2).sum()
    b = (w * (x - xm) * (y - ym)).sum() / sxx
    a = ym - b * xm
    if sy is None:
        resid = y - a - b * x
        dof = max(1, x.size - 2)
        se = math.sqrt((resid ** 2).sum() / dof / sxx)
    else:
        se = math.sqrt(1.0 / sxx)
    return float(b), float(se), float(a)


def probe_seed(seed: int, delta: float, ms: Sequence[int], C_log: float, tol: float,
               mode: str = "random") -> np.ndarray:
    """``X_m`` at stage ``n(m)`` for each ``m``, for one freshly built system."""
    stages = [n_of_m(m, C_log) for m in ms]
    sys = build(seed, max(stages), mode)
    out = np.zeros(len(ms), dtype=complex)
    for n in sorted(set(stages)):
        idx = [i for i, s in enumerate(stages) if s == n]
        mm = max(abs(ms[i]) for i in idx)
        if delta == 0:
            g = fourier_coeffs(stage_density(sys, n), -mm, mm)
            for i in idx:
                out[i] = g.get(ms[i]) * TWO_PI / n
            continue
        km = k_moments(sys, delta, n, mm, tol)
        for i in idx:
            out[i] = km.X(ms[i], ms[i])[0][0]
    return out


def moment_probe(delta: float, m_list: Sequence[int], seeds: Sequence[int],
                 C_log: float = DEFAULT_C_LOG, tol: float = 1e-7,
                 progress: Callable[[int, int], None] | None = None) -> MomentProbe:
    if len(seeds) < 16:
        raise ValueError("insufficient replication (need >= 16 seeds)")
    ms = [int(m) for m in m_list]
    if any(m < 1 or (m & (m - 1)) for m in ms):
        raise ValueError("m_list must contain powers of two")
    X = np.zeros((len(seeds), len(ms)), dtype=complex)
    for i, s in enumerate(seeds):
        X[i] = probe_seed(int(s), delta, ms, C_log, tol)
        if progress:
            progress(i + 1, len(seeds))
    a4 = np.abs(X) ** 4
    fourth = a4.mean(axis=0)
    se = a4.std(axis=0, ddof=1) / math.sqrt(len(seeds))
    second = (np.abs(X) ** 2).mean(axis=0)
    logm = np.log(np.asarray(ms, float))
    if np.all(fourth > 0):
        b, sb, a = weighted_slope(logm, np.log(fourth), se / fourth)
    else:
        b, sb, a = float("nan"), float("nan"), float("nan")
    return MomentProbe(np.asarray(ms), [int(s) for s in seeds], X, fourth, se, second, b, sb, a,
                       {"delta": delta, "C_log": C_log, "tol": tol})


# ---------------------------------------------------------------------------
# growth of Taylor coefficients in the large-delta regime

@dataclass
class GrowthReport:
    m: np.ndarray
    coeffs: np.ndarray
    stages: np.ndarray
    slope: float | None
    slope_se: float | None
    status: str
    local_slopes: np.ndarray
    stage_bound_ok: bool


def growth_fit(sys: RankedIntervalSystem, delta: float, m_list: Sequence[int],
               C_log: float = DEFAULT_C_LOG, tol: float = 1e-9) -> GrowthReport:
    """Fit ``log |F_hat_{n(m)}(m)|`` against ``log m``.

    status is 'all zero', 'polynomial' or 'super-polynomial' (local slopes
    increasing across every consecutive pair with the last above twice the
    fitted slope).
    """
    ms = np.asarray(sorted(int(m) for m in m_list))
    tab = taylor_table(sys, delta, ms, C_log, tol)
    c = np.array([tab[m][0] for m in ms])
    st = np.array([tab[m][1] for m in ms])
    bound = np.exp(delta * st / TWO_PI) * math.e
    ok = bool(np.all(np.abs(c) <= bound * (1 + 1e-9)))
    mag = np.abs(c)
    if np.all(mag <= 1e-14):
        return GrowthReport(ms, c, st, None, None, "all zero", np.zeros(0), ok)
    keep = mag > 1e-14
    x, y = np.log(ms[keep]), np.log(mag[keep])
    b, sb, _ = weighted_slope(x, y)
    loc = np.diff(y) / np.diff(x)
    superp = loc.size >= 3 and np.all(np.diff(loc) > 0) and loc[-1] > 2 * max(b, 0)
    return GrowthReport(ms, c, st, b, sb, "super-polynomial" if superp else "polynomial", loc, ok)
