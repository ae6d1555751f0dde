"""Measures, coefficient windows, norms, energies and pairings on the circle.

Coefficient convention, fixed everywhere in this package::

    mu_hat(m) = integral of exp(-i m t) d mu(t)       (no 1/(2 pi))

A density ``h`` is treated as the measure ``h(t) dt``, so the uniform
probability measure has ``mu_hat(0) = 1`` and the constant function 1 has
coefficient ``2 pi`` at 0.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.special import comb

from . import kernels

TWO_PI = 2.0 * math.pi
ANGLE_TOL = 1e-12
CONVENTION = "measure"
INT_LIMIT = 1 << 40


class WindowError(ValueError):
    """A request reaches outside the indices a window actually holds."""


@dataclass(frozen=True)
class Interval:
    """Half-open arc ``[start, start + length)`` taken mod 2 pi."""

    start: float
    length: float

    def __post_init__(self):
        if not (self.length > 0):
            raise ValueError("interval length must be positive")
        if self.length > TWO_PI + ANGLE_TOL:
            raise ValueError("interval longer than the circle")
        object.__setattr__(self, "start", float(self.start) % TWO_PI)

    @property
    def end(self) -> float:
        return self.start + self.length


@dataclass(frozen=True)
class IntervalUnion:
    """Sorted, pairwise disjoint arcs.

    Stored as two arrays; the last arc may wrap past 2 pi.
    """

    starts: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.starts, dtype=float)
        ln = np.asarray(self.lengths, dtype=float)
        if s.shape != ln.shape or s.ndim != 1:
            raise ValueError("starts and lengths must be 1-d and equal length")
        if np.any(ln <= 0):
            raise ValueError("interval lengths must be positive")
        if s.size and (np.any(s < -ANGLE_TOL) or np.any(s >= TWO_PI + ANGLE_TOL)):
            raise ValueError("starts must lie in [0, 2pi)")
        if s.size > 1:
            gaps = s[1:] - (s[:-1] + ln[:-1])
            if np.any(np.diff(s) <= 0) or np.any(gaps <= 0):
                raise ValueError("intervals must be sorted with positive gaps")
            wrap_gap = s[0] + TWO_PI - (s[-1] + ln[-1])
            if wrap_gap <= 0:
                raise ValueError("last interval overlaps the first across 2pi")
        if ln.sum() > TWO_PI + ANGLE_TOL:
            raise ValueError("total length exceeds 2pi")
        s.setflags(write=False)
        ln.setflags(write=False)
        object.__setattr__(self, "starts", s)
        object.__setattr__(self, "lengths", ln)

    @classmethod
    def from_intervals(cls, intervals: Sequence[Interval]) -> "IntervalUnion":
        ivs = sorted(intervals, key=lambda iv: iv.start)
        return cls(np.array([iv.start for iv in ivs]), np.array([iv.length for iv in ivs]))

    @classmethod
    def merged(cls, starts, lengths) -> "IntervalUnion":
        """Union of possibly overlapping arcs (touching arcs are joined)."""
        starts = np.mod(np.asarray(starts, dtype=float), TWO_PI)
        lengths = np.asarray(lengths, dtype=float)
        if starts.size == 0:
            return cls(np.zeros(0), np.zeros(0))
        if lengths.max() >= TWO_PI:
            return full_circle()
        order = np.argsort(starts, kind="stable")
        s, e = starts[order], starts[order] + lengths[order]
        # sweep on the line, then fold the wrap-around
        run_end = np.maximum.accumulate(e)
        new = np.r_[True, s[1:] > run_end[:-1]]
        idx = np.flatnonzero(new)
        ms = s[idx]
        me = np.r_[run_end[idx[1:] - 1], run_end[-1]]
        if me[-1] - TWO_PI >= ms[0]:
            # the last run wraps past 2pi: absorb leading runs it reaches
            tail = me[-1] - TWO_PI
            k = 0
            while k < ms.size - 1 and ms[k] <= tail:
                tail = max(tail, me[k])
                k += 1
            if tail >= ms[-1]:
                return full_circle()
            ms = ms[k:]
            me = me[k:].copy()
            me[-1] = tail + TWO_PI
        return cls(ms, me - ms)

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())

    def __len__(self) -> int:
        return int(self.starts.size)


def full_circle() -> IntervalUnion:
    return IntervalUnion(np.array([0.0]), np.array([TWO_PI]))


@dataclass(frozen=True)
class CircleMeasure:
    """Finite measure on [0, 2pi).

    ``kind`` is ``piecewise`` (density ``weights[i]`` on arc ``i`` of
    ``union``), ``atomic`` (``positions`` with complex ``weights``) or
    ``empirical`` (sample ``positions`` with positive ``weights``).
    """

    kind: Literal["piecewise", "atomic", "empirical"]
    union: IntervalUnion | None = None
    positions: np.ndarray | None = None
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    complex_ok: bool = False
    declared_mass: float | None = None

    def __post_init__(self):
        w = np.asarray(self.weights)
        w = w.astype(complex) if np.iscomplexobj(w) else w.astype(float)
        object.__setattr__(self, "weights", w)
        if self.kind == "piecewise":
            if self.union is None or len(self.union) != w.size:
                raise ValueError("piecewise measure needs one density per interval")
            if not self.complex_ok and (np.iscomplexobj(w) or np.any(w < 0)):
                raise ValueError("piecewise densities must be >= 0 unless complex_ok")
        elif self.kind in ("atomic", "empirical"):
            pos = np.mod(np.asarray(self.positions, dtype=float), TWO_PI)
            if pos.shape != w.shape:
                raise ValueError("positions and weights differ in shape")
            object.__setattr__(self, "positions", pos)
            if self.kind == "empirical":
                if np.iscomplexobj(w) or np.any(w <= 0):
                    raise ValueError("empirical weights must be positive")
                if self.declared_mass is not None and not math.isclose(
                        w.sum(), self.declared_mass, rel_tol=1e-9):
                    raise ValueError("empirical weights do not sum to the declared mass")
        else:
            raise ValueError(f"unknown measure kind {self.kind!r}")

    @classmethod
    def piecewise(cls, union: IntervalUnion, densities, complex_ok=False) -> "CircleMeasure":
        return cls("piecewise", union=union, weights=np.asarray(densities), complex_ok=complex_ok)

    @classmethod
    def atoms(cls, positions, masses) -> "CircleMeasure":
        return cls("atomic", positions=np.atleast_1d(positions), weights=np.atleast_1d(masses))

    @classmethod
    def empirical(cls, samples, weights=None, total_mass: float = 1.0) -> "CircleMeasure":
        samples = np.asarray(samples, dtype=float)
        if weights is None:
            weights = np.full(samples.size, total_mass / max(samples.size, 1))
        return cls("empirical", positions=samples, weights=np.asarray(weights),
                   declared_mass=total_mass)

    @classmethod
    def lebesgue(cls) -> "CircleMeasure":
        """Uniform probability measure."""
        return cls.piecewise(full_circle(), [1.0 / TWO_PI])

    def total_variation(self) -> float:
        if self.kind == "piecewise":
            return float(np.sum(np.abs(self.weights) * self.union.lengths))
        return float(np.sum(np.abs(self.weights)))

    def is_empty(self) -> bool:
        return self.total_variation() == 0.0

    def to_json(self) -> dict:
        d: dict = {"kind": self.kind}
        w = self.weights
        if self.kind == "piecewise":
            d["starts"] = self.union.starts.tolist()
            d["lengths"] = self.union.lengths.tolist()
        else:
            d["positions"] = self.positions.tolist()
        d["re"] = np.real(w).tolist()
        d["im"] = np.imag(w).tolist() if np.iscomplexobj(w) else [0.0] * w.size
        return d

    @classmethod
    def from_json(cls, d: dict) -> "CircleMeasure":
        w = np.asarray(d["re"], dtype=float)
        im = np.asarray(d.get("im", np.zeros_like(w)), dtype=float)
        if np.any(im != 0):
            w = w + 1j * im
        if d["kind"] == "piecewise":
            return cls("piecewise", union=IntervalUnion(np.asarray(d["starts"]), np.asarray(d["lengths"])),
                       weights=w, complex_ok=np.iscomplexobj(w))
        if d["kind"] == "empirical":
            return cls("empirical", positions=np.asarray(d["positions"]), weights=w,
                       declared_mass=float(np.sum(w)))
        return cls(d["kind"], positions=np.asarray(d["positions"]), weights=w)


@dataclass(frozen=True)
class CoeffWindow:
    """Contiguous window ``lo..hi`` of Fourier coefficients."""

    lo: int
    hi: int
    values: np.ndarray
    convention: str = CONVENTION

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if self.convention != CONVENTION:
            raise ValueError(f"unsupported coefficient convention {self.convention!r}")
        if v.ndim != 1 or v.size != self.hi - self.lo + 1:
            raise ValueError("values must cover lo..hi exactly")
        v.setflags(write=False)
        object.__setattr__(self, "lo", int(self.lo))
        object.__setattr__(self, "hi", int(self.hi))
        object.__setattr__(self, "values", v)

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def covers(self, a: int, b: int) -> bool:
        return self.lo <= a and b <= self.hi

    def get(self, a: int, b: int | None = None) -> np.ndarray | complex:
        """Coefficients at ``a`` (or on ``a..b``); out-of-window is an error."""
        if b is None:
            if not self.lo <= a <= self.hi:
                raise WindowError(f"index {a} outside window [{self.lo}, {self.hi}]")
            return complex(self.values[a - self.lo])
        if not self.covers(a, b):
            raise WindowError(f"range [{a}, {b}] outside window [{self.lo}, {self.hi}]")
        return self.values[a - self.lo:b - self.lo + 1]

    def at(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        if idx.size and (idx.min() < self.lo or idx.max() > self.hi):
            raise WindowError("indices outside window")
        return self.values[idx - self.lo]

    def restrict(self, a: int, b: int) -> "CoeffWindow":
        return CoeffWindow(a, b, self.get(a, b))

    def __add__(self, other: "CoeffWindow") -> "CoeffWindow":
        if (self.lo, self.hi) != (other.lo, other.hi):
            raise WindowError("windows differ")
        return CoeffWindow(self.lo, self.hi, self.values + other.values)

    def scaled(self, c: complex) -> "CoeffWindow":
        return CoeffWindow(self.lo, self.hi, self.values * c)

    def to_json(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "re": self.values.real.tolist(),
                "im": self.values.imag.tolist(), "convention": self.convention}

    @classmethod
    def from_json(cls, d: dict) -> "CoeffWindow":
        vals = np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)
        return cls(int(d["lo"]), int(d["hi"]), vals, d.get("convention", CONVENTION))

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, s: str) -> "CoeffWindow":
        return cls.from_json(json.loads(s))

    @classmethod
    def from_function(cls, fn, lo: int, hi: int) -> "CoeffWindow":
        return cls(lo, hi, np.asarray(fn(np.arange(lo, hi + 1)), dtype=complex))


@dataclass(frozen=True)
class SmoothBump:
    """Raised-cosine bump ``cos^(2q)(pi (t - center) / (2 eps))`` on ``|t - center| <= eps``.

    ``order=0`` with ``half_width=pi`` is the constant function 1.
    """

    center: float
    half_width: float
    order: int = 6

    def __post_init__(self):
        if self.order == 0:
            if not math.isclose(self.half_width, math.pi):
                raise ValueError("order 0 is only the degenerate constant bump (half_width=pi)")
        elif self.order < 2:
            raise ValueError("bump order must be >= 2")
        if not 0 < self.half_width <= math.pi:
            raise ValueError("half width must lie in (0, pi]")

    @classmethod
    def constant(cls) -> "SmoothBump":
        return cls(math.pi, math.pi, 0)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        d = np.mod(t - self.center + math.pi, TWO_PI) - math.pi
        inside = np.abs(d) <= self.half_width
        val = np.cos(0.5 * math.pi * d / self.half_width) ** (2 * self.order)
        return np.where(inside, val, 0.0)

    def coeffs(self, m) -> np.ndarray:
        """Closed-form ``psi_hat(m)`` from the binomial expansion of ``cos^(2q)``."""
        m = np.asarray(m, dtype=float)
        q, eps = self.order, self.half_width
        k = np.arange(-q, q + 1)
        binom = comb(2 * q, q + k, exact=False) / 4.0 ** q
        # integral over [-eps, eps] of exp(i (k pi/eps - m) s) ds = 2 eps sinc(k - m eps/pi)
        terms = np.sinc(k[None, :] - (m.reshape(-1, 1) * eps / math.pi)) @ binom
        out = 2.0 * eps * terms * np.exp(-1j * m.ravel() * self.center)
        return out.reshape(m.shape)

    def window(self, M: int) -> CoeffWindow:
        return CoeffWindow(-M, M, self.coeffs(np.arange(-M, M + 1)))

    def decay_bound(self, M: int) -> float:
        """Upper bound for ``sum_{|m| > M} |psi_hat(m)|``.

        ``cos^(2q)`` of the scaled argument has ``2q`` continuous derivatives
        in the sense that its ``(2q)``-th derivative is bounded, giving
        ``|psi_hat(m)| <= V / |m|^(2q)`` with ``V`` the total variation of
        the ``(2q - 1)``-th derivative.
        """
        if self.order == 0:
            return 0.0
        q2 = 2 * self.order
        # sup of the 2q-th derivative of cos^{2q}(a s) is at most (2q a)^{2q}, a = pi/(2 eps)
        a = 0.5 * math.pi / self.half_width
        # logs keep narrow bumps from overflowing; the bound is then just inf
        logb = (math.log(4.0 * self.half_width) + q2 * math.log(q2 * a)
                - math.log(q2 - 1) - (q2 - 1) * math.log(M))
        return math.exp(logb) if logb < 700 else math.inf


# ---------------------------------------------------------------------------
# operations

def _check_window_bounds(lo: int, hi: int):
    if hi < lo:
        raise ValueError("hi must be >= lo")
    if abs(lo) > INT_LIMIT or abs(hi) > INT_LIMIT:
        raise OverflowError("coefficient index arithmetic overflow")


def fourier_coeffs(mu: CircleMeasure, lo: int, hi: int) -> CoeffWindow:
    """Exact coefficients of ``mu`` on ``lo..hi``."""
    _check_window_bounds(lo, hi)
    if mu.is_empty():
        raise ValueError("zero measure")
    if mu.kind == "piecewise":
        u = mu.union
        half = 0.5 * u.lengths
        vals = kernels.interval_sum(u.starts + half, half, mu.weights.astype(complex), lo, hi)
    else:
        vals = kernels.exp_sum(mu.positions, mu.weights.astype(complex), lo, hi)
    return CoeffWindow(lo, hi, vals)


Side = Literal["negatives", "positives", "full"]


def _side_range(w: CoeffWindow, side) -> tuple[int, int]:
    if side == "negatives":
        return w.lo, -1
    if side == "positives":
        return 1, w.hi
    if side == "full":
        return w.lo, w.hi
    if isinstance(side, tuple) and len(side) == 2:
        a, b = int(side[0]), int(side[1])
        if b < a:
            raise ValueError("empty index range")
        if not w.covers(a, b):
            raise WindowError("window insufficient")
        return a, b
    raise ValueError(f"unknown side {side!r}")


def lp_norm(w: CoeffWindow, p: float, side="full") -> float:
    """``(sum |values|^p)^(1/p)`` over ``side``.

    ``side`` is 'negatives' (n < 0), 'positives' (n > 0), 'full', or an
    explicit ``(a, b)`` index range which must lie inside the window.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    a, b = _side_range(w, side)
    if b < a:
        return 0.0
    v = np.abs(w.get(a, b))
    if math.isinf(p):
        return float(v.max(initial=0.0))
    vmax = v.max(initial=0.0)
    if vmax == 0:
        return 0.0
    return float(vmax * np.sum((v / vmax) ** p) ** (1.0 / p))


def weighted_energy(w: CoeffWindow, alpha: float, side: str = "two_sided") -> np.ndarray:
    """Partial sums of a weighted energy.

    two_sided
        ``S[N] = sum_{|n| <= N} |c_n|^2 / (|n|^(1-alpha) + 1)`` for
        ``N = 0 .. min(-lo, hi)``.
    anti_analytic
        ``S[N] = sum_{-N <= n < 0} |c_n|^2 / |n|^(1-alpha)`` for
        ``N = 0 .. -lo`` (``S[0] = 0``).
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if side == "two_sided":
        top = min(-w.lo, w.hi)
        if top < 0:
            raise WindowError("window does not contain index 0")
        n = np.arange(0, top + 1)
        pos = np.abs(w.at(n)) ** 2 / (n ** (1 - alpha) + 1.0)
        neg = np.abs(w.at(-n[1:])) ** 2 / (n[1:] ** (1 - alpha) + 1.0)
        terms = pos.copy()
        terms[1:] += neg
        return np.cumsum(terms)
    if side == "anti_analytic":
        top = -w.lo
        if top < 1:
            return np.zeros(1)
        n = np.arange(1, top + 1)
        terms = np.abs(w.at(-n)) ** 2 / n ** (1 - alpha)
        return np.r_[0.0, np.cumsum(terms)]
    raise ValueError(f"unknown energy side {side!r}")


def wiener_average(w: CoeffWindow, N: int) -> float:
    """``(2N+1)^-1 sum_{|n| <= N} |c_n|^2``."""
    if not w.covers(-N, N):
        raise WindowError("window insufficient")
    return float(np.mean(np.abs(w.get(-N, N)) ** 2))


def pair(s: CoeffWindow, psi: SmoothBump | CoeffWindow, M: int) -> np.ndarray:
    """Partial sums ``P[M'] = (2pi)^-1 sum_{|m| <= M'} S_hat(m) psi_hat(-m)``, ``M' = 0..M``.

    With the measure convention this converges to ``<S, psi>``; for a unit
    atom at ``x`` it converges to ``psi(x)``.
    """
    if not s.covers(-M, M):
        raise WindowError("distribution window does not reach M")
    if isinstance(psi, SmoothBump):
        pc = psi.coeffs(np.arange(-M, M + 1))
    else:
        if not psi.covers(-M, M):
            raise WindowError("test-function coefficients unavailable to order M")
        pc = psi.get(-M, M)
    terms = s.get(-M, M) * pc[::-1] / TWO_PI
    mid = M
    out = np.empty(M + 1, dtype=complex)
    out[0] = terms[mid]
    if M:
        sym = terms[mid + 1:] + terms[mid - 1::-1]
        out[1:] = terms[mid] + np.cumsum(sym)
    return out


# ---------------------------------------------------------------------------
# finite-data convergence verdicts

CONVERGE_RATIO = 0.95


def dyadic_blocks(terms: np.ndarray, start: int = 1) -> np.ndarray:
    """Sum nonnegative ``terms`` (indexed from ``start``) over blocks ``[2^j, 2^(j+1))``.

    Only complete blocks are returned.
    """
    terms = np.asarray(terms, dtype=float)
    out = []
    j = 0
    while True:
        a, b = 1 << j, 1 << (j + 1)
        if b - 1 > start + terms.size - 1:
            break
        if a >= start:
            out.append(terms[a - start:b - start].sum())
        j += 1
    return np.asarray(out)


def block_verdict(blocks: np.ndarray, ratio: float = CONVERGE_RATIO, last: int = 3,
                  min_blocks: int = 5) -> str:
    """'converging' when each of the last ``last`` blocks is at most ``ratio`` times its predecessor.

    Returns 'insufficient' with fewer than ``min_blocks`` blocks. All-zero
    trailing blocks count as converging.
    """
    blocks = np.asarray(blocks, dtype=float)
    if blocks.size < max(min_blocks, last + 1):
        return "insufficient"
    tail = blocks[-(last + 1):]
    ok = all(tail[i + 1] <= ratio * tail[i] or tail[i + 1] == 0.0 for i in range(last))
    return "converging" if ok else "diverging"


def partial_sum_blocks(partial: np.ndarray) -> np.ndarray:
    """Dyadic-block increments of a partial-sum sequence ``partial[N]``, N = 0..."""
    partial = np.asarray(partial, dtype=float)
    return dyadic_blocks(np.diff(partial), start=1)
