"""Endpoint-graded Gauss-Kronrod rules.

An interval of length ``sigma`` is split at its midpoint; each half is cut
into geometric panels shrinking by 1/2 toward the outer endpoint, and every
panel carries a 7-point Kronrod rule with its embedded 3-point Gauss rule.

Nodes are described relative to an endpoint rather than as absolute angles
so that points a few ulps from a singular endpoint keep full precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# 7-point Kronrod extension of 3-point Gauss-Legendre on [-1, 1]
_XK = np.array([-0.960491268708020283423507092629080, -0.774596669241483377035853079956480,
                -0.434243749346802558002071502844628, 0.0,
                0.434243749346802558002071502844628, 0.774596669241483377035853079956480,
                0.960491268708020283423507092629080])
_WK = np.array([0.104656226026467265193823857192073, 0.268488089868333440728569280666710,
                0.401397414775962222905051818618432, 0.450916538658474142345110087045571,
                0.401397414775962222905051818618432, 0.268488089868333440728569280666710,
                0.104656226026467265193823857192073])
_WG = np.array([0.0, 5.0 / 9.0, 0.0, 8.0 / 9.0, 0.0, 5.0 / 9.0, 0.0])


def kronrod7() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return _XK.copy(), _WK.copy(), _WG.copy()


def grading_depth(tol: float) -> int:
    return max(1, math.ceil(math.log2(1.0 / tol)))


@dataclass(frozen=True)
class GradedRule:
    """Nodes for one interval ``[a, a + sigma]``.

    ``side[q]`` is 0 for nodes measured from the left end (``t = a + off``)
    and 1 for nodes measured from the right end (``t = b + off``, ``off < 0``).
    ``rel`` is ``t - center``. ``wk``/``wg`` are Kronrod and Gauss weights.
    """

    sigma: float
    depth: int
    side: np.ndarray
    off: np.ndarray
    rel: np.ndarray
    wk: np.ndarray
    wg: np.ndarray

    @property
    def size(self) -> int:
        return int(self.off.size)


def _half_panels(h: float, depth: int) -> list[tuple[float, float]]:
    # panels on [0, h] graded toward 0
    edges = [h * 0.5 ** j for j in range(depth + 1)] + [0.0]
    return [(edges[j + 1], edges[j]) for j in range(depth + 1)]


def graded_rule(sigma: float, tol: float = 1e-9, depth: int | None = None) -> GradedRule:
    depth = grading_depth(tol) if depth is None else depth
    h = 0.5 * sigma
    side, off, wk, wg = [], [], [], []
    for lo, hi in _half_panels(h, depth):
        mid, rad = 0.5 * (lo + hi), 0.5 * (hi - lo)
        d = mid + rad * _XK
        for sd, sgn in ((0, 1.0), (1, -1.0)):
            side.append(np.full(7, sd))
            off.append(sgn * d)
            wk.append(rad * _WK)
            wg.append(rad * _WG)
    side = np.concatenate(side).astype(np.int64)
    off = np.concatenate(off)
    rel = np.where(side == 0, off - h, off + h)
    return GradedRule(sigma, depth, side, off, rel, np.concatenate(wk), np.concatenate(wg))


def integrate(fn, a: float, b: float, tol: float = 1e-9) -> tuple[complex, float]:
    """Graded rule for ``int_a^b fn(t) dt``; returns (Kronrod value, |K - G|)."""
    r = graded_rule(b - a, tol)
    t = np.where(r.side == 0, a + r.off, b + r.off)
    f = np.asarray(fn(t))
    return complex(np.dot(r.wk, f)), float(abs(np.dot(r.wk - r.wg, f)))


def segment_nodes(left, right, tol: float = 1e-9, hmax: float = math.inf, split: int = 1):
    """Graded nodes for many segments ``[left_i, right_i]`` at once.

    Panels longer than ``hmax`` are split evenly (to resolve oscillating
    weights such as ``exp(-i m t)``); ``split`` further halves (2) or
    thirds (3) every panel, for refinement comparisons. Returns ``(seg, base, off, wk, wg)``
    where node position is ``base + off``, ``base`` being the nearer end.
    """
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    half = 0.5 * (right - left)
    depth = grading_depth(tol)
    S = left.size
    parts = []
    for j in range(depth + 1):
        hi = half * 0.5 ** j
        lo = half * 0.5 ** (j + 1) if j < depth else np.zeros(S)
        plen = hi - lo
        nsub = np.maximum(1, np.ceil(plen / hmax)).astype(np.int64) * split
        seg = np.repeat(np.arange(S), nsub)
        first = np.repeat(np.cumsum(nsub) - nsub, nsub)
        sub = np.arange(seg.size) - first
        sl = plen[seg] / nsub[seg]
        s0 = lo[seg] + sub * sl
        d = s0[:, None] + sl[:, None] * (0.5 * (_XK + 1.0))[None, :]
        wk = (0.5 * sl)[:, None] * _WK[None, :]
        wg = (0.5 * sl)[:, None] * _WG[None, :]
        segs = np.repeat(seg, 7)
        parts.append((segs, left[segs], d.ravel(), wk.ravel(), wg.ravel()))
        parts.append((segs, right[segs], -d.ravel(), wk.ravel(), wg.ravel()))
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(5))
