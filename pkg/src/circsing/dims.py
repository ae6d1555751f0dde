"""Covering numbers, dimension fits and energy verdicts."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (ANGLE_TOL, CONVERGE_RATIO, TWO_PI, CoeffWindow, IntervalUnion, WindowError,
                   block_verdict, dyadic_blocks, partial_sum_blocks, weighted_energy)
from .hardy import weighted_slope

MAX_LOCKSTEP_STARTS = 4096


# ---------------------------------------------------------------------------
# covering numbers

def _components(obj) -> tuple[np.ndarray, np.ndarray]:
    """(starts, lengths) sorted by start; point clouds become zero-length pieces."""
    if isinstance(obj, IntervalUnion):
        s, ln = obj.starts.astype(float), obj.lengths.astype(float)
    else:
        s = np.sort(np.mod(np.asarray(obj, dtype=float).ravel(), TWO_PI))
        ln = np.zeros_like(s)
    if s.size == 0:
        raise ValueError("empty set")
    o = np.argsort(s, kind="stable")
    return s[o], ln[o]


def _sweep(s2: np.ndarray, e2: np.ndarray, starts: np.ndarray, eps: float) -> np.ndarray:
    """Greedy arc counts for all start indices at once on the doubled component list."""
    n = starts.size
    pos = s2[starts].copy()
    stop = pos + TWO_PI - ANGLE_TOL
    count = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    while active.any():
        idx = np.flatnonzero(active)
        q = pos[idx] + eps
        count[idx] += 1
        # first component not finished by this arc
        j = np.searchsorted(e2, q + ANGLE_TOL, side="right")
        j = np.minimum(j, s2.size - 1)
        partial = s2[j] < q - ANGLE_TOL
        nxt = np.where(partial, q, s2[j])
        done = (nxt >= stop[idx]) | (j >= s2.size - 1) & ~partial & (e2[j] <= q + ANGLE_TOL)
        pos[idx] = nxt
        active[idx[done]] = False
    return count


def cover_detail(obj, eps: float) -> tuple[int, bool]:
    """Minimal number of closed arcs of length ``eps`` covering ``obj``, and whether it is exact."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    s, ln = _components(obj)
    if ln.max() >= TWO_PI - ANGLE_TOL:
        return math.ceil(TWO_PI / eps - 1e-9), True
    e = s + ln
    # merge overlapping pieces so the end array is sorted
    keep = np.r_[True, s[1:] > np.maximum.accumulate(e)[:-1]]
    s = s[keep]
    e = np.maximum.reduceat(e, np.flatnonzero(keep))
    s2 = np.r_[s, s + TWO_PI, s[:1] + 2 * TWO_PI]
    e2 = np.r_[e, e + TWO_PI, e[:1] + 2 * TWO_PI]
    gaps = np.r_[s[1:], s[0] + TWO_PI] - e
    big = int(np.argmax(gaps))
    if gaps[big] > eps + ANGLE_TOL or s.size == 1:
        # no arc can profitably straddle this gap: start right after it
        first = (big + 1) % s.size
        return int(_sweep(s2, e2, np.array([first]), eps)[0]), True
    if s.size <= MAX_LOCKSTEP_STARTS:
        return int(_sweep(s2, e2, np.arange(s.size), eps).min()), True
    cand = np.unique(np.linspace(0, s.size - 1, MAX_LOCKSTEP_STARTS).astype(np.int64))
    return int(_sweep(s2, e2, cand, eps).min()), False


def cover_count(obj, eps: float) -> int:
    """``Cov(obj; [0, eps])`` for an IntervalUnion or a point cloud on the circle."""
    return cover_detail(obj, eps)[0]


# ---------------------------------------------------------------------------
# dimension fits

@dataclass
class CoverTable:
    eps: np.ndarray
    counts: np.ndarray
    source: str = ""

    def __post_init__(self):
        self.eps = np.asarray(self.eps, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        o = np.argsort(-self.eps)
        self.eps, self.counts = self.eps[o], self.counts[o]
        if np.any(self.counts < 1):
            raise ValueError("counts must be >= 1")
        if np.any(np.diff(self.counts) < 0):
            raise ValueError("counts must be nonincreasing in eps")

    def rows(self):
        for e, c in zip(self.eps, self.counts):
            yield [float(e), int(c)]


def cover_table(obj, eps_list, source: str = "") -> CoverTable:
    eps = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    return CoverTable(eps, [cover_count(obj, e) for e in eps], source)


@dataclass
class DimensionVerdict:
    estimate: float
    stderr: float
    method: str
    scales: list
    raw: float
    clamped: bool = False
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "method": self.method,
                "scales": list(self.scales), "raw": self.raw, "clamped": self.clamped,
                **self.extra}


def _clamp(x: float) -> tuple[float, bool]:
    y = min(1.0, max(0.0, x))
    return y, y != x


def minkowski_fit(table: CoverTable) -> DimensionVerdict:
    """Least-squares slope of ``log count`` on ``log(1/eps)``, plus the largest two-point slope."""
    if table.eps.size < 5:
        raise ValueError("need >= 5 scales")
    x = np.log(1.0 / table.eps)
    if np.ptp(x) == 0:
        raise ValueError("degenerate scales")
    y = np.log(table.counts.astype(float))
    b, se, _ = weighted_slope(x, y)
    two = np.diff(y) / np.diff(x)
    est, cl = _clamp(b)
    return DimensionVerdict(est, se, "minkowski-ls", table.eps.tolist(), b, cl,
                            {"max_two_point": float(two.max())})


def _block_max_two_sided(w: CoeffWindow):
    """Max of ``|c_m|`` over ``2^j <= |m| < 2^(j+1)`` for every complete block."""
    top = max(w.hi, -w.lo)
    starts, vals = [], []
    j = 0
    while (1 << (j + 1)) - 1 <= top:
        a, b = 1 << j, (1 << (j + 1)) - 1
        parts = []
        if w.hi >= b:
            parts.append(np.abs(w.get(a, b)))
        if -w.lo >= b:
            parts.append(np.abs(w.get(-b, -a)))
        if parts:
            starts.append(a)
            vals.append(float(max(p.max() for p in parts)))
        j += 1
    return np.asarray(starts), np.asarray(vals)


def fourier_dim_fit(w: CoeffWindow, floor: float = 0.0, cut: float = 3.0,
                    min_m: int = 256) -> DimensionVerdict:
    """Envelope exponent ``a`` in ``|c_m|^2 <= C |m|^-a``.

    Regresses ``log`` of the dyadic-block maxima of ``|c|^2`` on ``log m``
    over the upper half of the available octaves (the asymptotic range),
    ignoring blocks whose maximum sits below ``cut`` times ``floor``.
    """
    if max(w.hi, -w.lo) < min_m:
        raise WindowError(f"window must reach |m| >= {min_m}")
    starts, mx = _block_max_two_sided(w)
    if np.all(mx == 0):
        return DimensionVerdict(1.0, 0.0, "fourier-envelope", [], float("inf"), True,
                                {"status": "degenerate: all zero beyond 0"})
    keep = mx > max(cut * floor, 0.0)
    half = starts >= math.sqrt(starts.max())
    use = keep & half
    if use.sum() < 2:
        raise ValueError("too few blocks above the noise floor")
    b, se, _ = weighted_slope(np.log(starts[use]), 2.0 * np.log(mx[use]))
    est, cl = _clamp(-b)
    return DimensionVerdict(est, se, "fourier-envelope", starts[use].tolist(), -b, cl,
                            {"status": "ok"})


# ---------------------------------------------------------------------------
# series verdicts

def _two_sided_terms(w: CoeffWindow, fn) -> np.ndarray:
    """``fn(|c_m|) + fn(|c_-m|)`` for ``m = 1..min(-lo, hi)``."""
    top = min(-w.lo, w.hi)
    m = np.arange(1, top + 1)
    return fn(np.abs(w.at(m))) + fn(np.abs(w.at(-m)))


@dataclass
class ScanRow:
    q: float
    blocks: np.ndarray
    verdict: str


@dataclass
class LpScan:
    rows: list[ScanRow]
    estimate: float


def lpdim_scan(w: CoeffWindow, q_grid: Sequence[float], ratio: float = CONVERGE_RATIO) -> LpScan:
    """``l^q`` block trends; estimate ``sup{2/q : converging}`` capped at 1."""
    rows = []
    best = 0.0
    for q in sorted(q_grid):
        if not q > 2:
            raise ValueError("q must exceed 2")
        terms = _two_sided_terms(w, lambda a: a ** q)
        blocks = dyadic_blocks(terms, start=1)
        v = block_verdict(blocks, ratio)
        rows.append(ScanRow(float(q), blocks, v))
        if v == "converging":
            best = max(best, min(1.0, 2.0 / q))
    return LpScan(rows, best)


@dataclass
class EnergyRow:
    alpha: float
    side: str
    partial: np.ndarray
    blocks: np.ndarray
    verdict: str


@dataclass
class FrostmanReport:
    rows: list[EnergyRow]
    headline_two_sided: float | None
    headline_anti_analytic: float | None


def frostman_report(w: CoeffWindow, alpha_grid: Sequence[float],
                    ratio: float = CONVERGE_RATIO) -> FrostmanReport:
    rows = []
    best = {"two_sided": None, "anti_analytic": None}
    for a in sorted(alpha_grid):
        for side in ("two_sided", "anti_analytic"):
            part = weighted_energy(w, a, side)
            blocks = partial_sum_blocks(part)
            v = block_verdict(blocks, ratio)
            rows.append(EnergyRow(float(a), side, part, blocks, v))
            if v == "converging":
                best[side] = a if best[side] is None else max(best[side], a)
    return FrostmanReport(rows, best["two_sided"], best["anti_analytic"])


# ---------------------------------------------------------------------------
# sumset covers

def _as_pieces(obj) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(obj, IntervalUnion):
        return obj.starts.astype(float), obj.lengths.astype(float)
    p = np.mod(np.atleast_1d(np.asarray(obj, dtype=float)), TWO_PI)
    return p, np.zeros_like(p)


def sumset(A, B):
    """``A + B`` as an IntervalUnion, or as a point array when both inputs are points."""
    sa, la = _as_pieces(A)
    sb, lb = _as_pieces(B)
    if sa.size == 0 or sb.size == 0:
        raise ValueError("empty set")
    s = (sa[:, None] + sb[None, :]).ravel()
    ln = (la[:, None] + lb[None, :]).ravel()
    if np.all(ln == 0):
        return np.unique(np.mod(s, TWO_PI))
    pos = ln > 0
    u = IntervalUnion.merged(s[pos], ln[pos])
    if np.all(pos):
        return u
    # points not already inside an interval stay as points
    pts = np.mod(s[~pos], TWO_PI)
    inside = np.zeros(pts.size, dtype=bool)
    for a, l in zip(u.starts, u.lengths):
        inside |= np.mod(pts - a, TWO_PI) <= l
    extra = np.unique(pts[~inside])
    if extra.size == 0:
        return u
    ss = np.r_[u.starts, extra]
    ll = np.r_[u.lengths, np.zeros(extra.size)]
    return _Pieces(ss, ll)


@dataclass
class _Pieces:
    """Mixed interval and point pieces (only used for cover counts)."""

    starts: np.ndarray
    lengths: np.ndarray


def _cover_any(obj, eps: float) -> tuple[int, bool]:
    if isinstance(obj, _Pieces):
        o = np.argsort(obj.starts)
        return cover_detail(_RawUnion(obj.starts[o], obj.lengths[o]), eps)
    return cover_detail(obj, eps)


class _RawUnion(IntervalUnion):
    """IntervalUnion without the positivity checks, for mixed pieces."""

    def __init__(self, starts, lengths):
        object.__setattr__(self, "starts", np.asarray(starts, dtype=float))
        object.__setattr__(self, "lengths", np.asarray(lengths, dtype=float))


@dataclass
class SumsetCheck:
    eps: float
    covA: int
    covB: int
    covAB: int
    passed: bool
    exact: bool


def sumset_cover(A, B, eps: float) -> SumsetCheck:
    """``Cov(A + B; 2 eps) <= Cov(A; eps) Cov(B; eps)``."""
    ab = sumset(A, B)
    ca, xa = _cover_any(A if isinstance(A, IntervalUnion) else np.asarray(A), eps)
    cb, xb = _cover_any(B if isinstance(B, IntervalUnion) else np.asarray(B), eps)
    cab, xab = _cover_any(ab, 2 * eps)
    return SumsetCheck(eps, ca, cb, cab, cab <= ca * cb, xa and xb and xab)
