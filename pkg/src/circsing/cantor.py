"""Random nested-interval construction on the circle.

Rank ``n`` carries ``2**n`` closed-open intervals ``[a(n,k), a(n,k) + sigma_n)``
with ``sigma_n = 2 pi / (n 2**n)``. Each interval places two children, one in
each half, shifted right by ``tau_{n+1} (1 + s)`` where ``s`` is a uniform
offset drawn from a counter-based stream keyed by ``(seed, n)`` and indexed by
``k``.

Endpoints of every rank are stored in one flat array, rank ``n`` occupying
positions ``2**n - 1 .. 2**(n+1) - 2``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import TWO_PI, ANGLE_TOL, CircleMeasure, IntervalUnion

N_MAX_CAP = 24
Mode = Literal["random", "zero"]


class ConstructionError(RuntimeError):
    """An invariant of a built system failed; always a bug, never data."""


@dataclass(frozen=True)
class Schedule:
    n_max: int
    sigma: np.ndarray
    tau: np.ndarray

    def ratio(self, n: int) -> float:
        return float(self.tau[n] / self.sigma[n])

    def to_json(self) -> dict:
        return {"n_max": self.n_max, "sigma": self.sigma.tolist(), "tau": self.tau.tolist()}


def schedule(n_max: int) -> Schedule:
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    n = np.arange(1, n_max + 1, dtype=float)
    sigma = np.empty(n_max + 1)
    sigma[0] = TWO_PI
    sigma[1:] = TWO_PI / (n * np.exp2(n))
    tau = np.zeros(n_max + 1)
    tau[1:] = (sigma[:-1] - 2.0 * sigma[1:]) / 6.0
    # tau_1 is exactly zero; rounding must not leave a tiny residue
    tau[1] = 0.0
    for a in (sigma, tau):
        a.setflags(write=False)
    return Schedule(n_max, sigma, tau)


def offset_stream(seed: int, n: int, count: int | None = None) -> np.ndarray:
    """Offsets ``s(n, 0..count-1)``: uniform on [0, 1] from Philox keyed by ``(seed, n)``.

    Entry ``k`` depends only on ``(seed, n, k)``, so any prefix is stable.
    """
    count = (1 << n) if count is None else count
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, n], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.random(count)


def offset_at(seed: int, n: int, k: int) -> float:
    """Single offset ``s(n, k)`` without drawing its predecessors."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, n], dtype=np.uint64)
    bg = np.random.Philox(key=key)
    # Philox emits four 64-bit words per counter step; random() uses one word each
    bg.advance(k // 4)
    return float(np.random.Generator(bg).random(k % 4 + 1)[-1])


@dataclass(frozen=True)
class OffsetTable:
    seed: int
    mode: Mode
    values: np.ndarray  # flat, rank n at 2**n - 1 + k (rank 0 slot unused)

    def s(self, n: int, k: int) -> float:
        return float(self.values[(1 << n) - 1 + k])

    def rank(self, n: int) -> np.ndarray:
        return self.values[(1 << n) - 1:(1 << (n + 1)) - 1]


@dataclass(frozen=True)
class RankedIntervalSystem:
    schedule: Schedule
    offsets: OffsetTable
    a_flat: np.ndarray

    @property
    def n_max(self) -> int:
        return self.schedule.n_max

    @property
    def seed(self) -> int:
        return self.offsets.seed

    @property
    def mode(self) -> Mode:
        return self.offsets.mode

    def _check_rank(self, n: int):
        if not 0 <= n <= self.n_max:
            raise ValueError(f"rank {n} outside 0..{self.n_max}")

    def left(self, n: int) -> np.ndarray:
        self._check_rank(n)
        return self.a_flat[(1 << n) - 1:(1 << (n + 1)) - 1]

    def a(self, n: int, k: int) -> float:
        return float(self.left(n)[k])

    def sigma(self, n: int) -> float:
        return float(self.schedule.sigma[n])

    def union(self, n: int) -> IntervalUnion:
        a = self.left(n)
        return IntervalUnion.merged(a, np.full(a.size, self.sigma(n)))

    def total_length(self, n: int) -> float:
        return math.fsum(np.full(1 << n, self.sigma(n)))

    def gaps(self, n: int) -> np.ndarray:
        """Gap after each rank-n interval; the last one wraps past 2 pi."""
        a = self.left(n)
        nxt = np.r_[a[1:], a[0] + TWO_PI]
        return nxt - (a + self.sigma(n))

    def to_json(self) -> dict:
        return {"seed": int(self.seed), "mode": self.mode, "n_max": self.n_max,
                "schedule": self.schedule.to_json()}

    @classmethod
    def from_json(cls, d: dict) -> "RankedIntervalSystem":
        return build(int(d["seed"]), int(d["n_max"]), d["mode"])

    def endpoints_csv(self, n: int) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "k", "a", "sigma"])
        sig = "%.17g" % self.sigma(n)
        for k, a in enumerate(self.left(n)):
            w.writerow([n, k, "%.17g" % a, sig])
        return buf.getvalue()

    def memory_bytes(self) -> int:
        return self.a_flat.nbytes + self.offsets.values.nbytes


def memory_estimate(n_max: int) -> int:
    """Bytes held by endpoints and offsets of a system of depth ``n_max``."""
    return 2 * 8 * ((1 << (n_max + 1)) - 1)


def build(seed: int, n_max: int, mode: Mode = "random", check: bool = True) -> RankedIntervalSystem:
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if n_max > N_MAX_CAP:
        raise ValueError(f"n_max {n_max} above cap {N_MAX_CAP} "
                         f"(needs ~{memory_estimate(n_max) / 2**30:.1f} GiB)")
    if mode not in ("random", "zero"):
        raise ValueError(f"unknown mode {mode!r}")
    sch = schedule(n_max)
    size = (1 << (n_max + 1)) - 1
    a = np.zeros(size)
    s = np.zeros(size)
    for n in range(1, n_max + 1):
        lo, hi = (1 << n) - 1, (1 << (n + 1)) - 1
        if mode == "random":
            s[lo:hi] = offset_stream(seed, n)
        parent = a[(1 << (n - 1)) - 1:lo]
        shift = sch.tau[n] * (1.0 + s[lo:hi])
        child = a[lo:hi]
        child[0::2] = parent + shift[0::2]
        child[1::2] = parent + 0.5 * sch.sigma[n - 1] + shift[1::2]
    a.setflags(write=False)
    s.setflags(write=False)
    sys = RankedIntervalSystem(sch, OffsetTable(int(seed), mode, s), a)
    if check:
        failures = check_invariants(sys)
        if failures:
            raise ConstructionError("; ".join(failures[:5]))
    return sys


def check_invariants(sys: RankedIntervalSystem, tol: float = ANGLE_TOL) -> list[str]:
    """Nesting, margin, ordering and measure checks over every node."""
    sch = sys.schedule
    out: list[str] = []
    for n in range(1, sys.n_max + 1):
        parent = sys.left(n - 1)
        child = sys.left(n)
        tau, sp, sc = sch.tau[n], sch.sigma[n - 1], sch.sigma[n]
        for half, kids in ((0, child[0::2]), (1, child[1::2])):
            h0 = parent + 0.5 * sp * half
            margin = kids - h0
            slack = h0 + 0.5 * sp - (kids + sc)
            if np.any(margin < tau - tol) or np.any(margin > 2 * tau + tol):
                out.append(f"rank {n}: left margin outside [tau, 2 tau]")
            if np.any(slack < tau - tol):
                out.append(f"rank {n}: right slack below tau")
        if np.any(np.diff(child) <= 0):
            out.append(f"rank {n}: endpoints not increasing")
        if child[0] < -tol or child[-1] + sc > TWO_PI + tol:
            out.append(f"rank {n}: leaves [0, 2pi)")
        if abs(sys.total_length(n) - TWO_PI / n) > tol:
            out.append(f"rank {n}: total length != 2pi/n")
    return out


def stage_density(sys: RankedIntervalSystem, n: int) -> CircleMeasure:
    """Probability measure with density ``n / (2 pi)`` on the rank-n intervals."""
    if not 1 <= n <= sys.n_max:
        raise ValueError(f"stage {n} outside 1..{sys.n_max}")
    u = sys.union(n)
    return CircleMeasure.piecewise(u, np.full(len(u), n / TWO_PI))


def gauge(name: str, alpha: float | None = None):
    if name == "t_log_1_over_t":
        def h(t):
            if not 0 < t < 1:
                raise ValueError("t log(1/t) gauge needs 0 < t < 1")
            return t * math.log(1.0 / t)
        return h
    if name == "t_pow":
        if alpha is None or not 0 < alpha <= 1:
            raise ValueError("t_pow gauge needs alpha in (0, 1]")
        return lambda t: t ** alpha
    raise ValueError(f"unknown gauge {name!r}")


def gauge_cover_sum(sys: RankedIntervalSystem, n: int, gauge_name: str = "t_log_1_over_t",
                    alpha: float | None = None) -> float:
    """``2**n h(sigma_n)`` for the natural rank-n cover."""
    if not 1 <= n <= sys.n_max:
        raise ValueError(f"rank {n} outside 1..{sys.n_max}")
    return (1 << n) * gauge(gauge_name, alpha)(sys.sigma(n))


def _cdf(a: np.ndarray, length: float, dens: float, t: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(a, t, side="right") - 1
    inside = np.clip(t - a[np.maximum(idx, 0)], 0.0, length)
    return dens * np.where(idx >= 0, idx * length + inside, 0.0)


def cdf_gap(a1, len1, dens1, a2, len2, dens2, points=None) -> float:
    """``max_t |int_0^t (h2 - h1)|`` for two piecewise-constant densities.

    The difference of the distribution functions is piecewise linear, so its
    extremes sit at interval endpoints; ``points`` adds extra probe locations.
    """
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    t = np.concatenate([a1, a1 + len1, a2, a2 + len2])
    if points is not None:
        t = np.concatenate([t, np.asarray(points, dtype=float)])
    return float(np.max(np.abs(_cdf(a2, len2, dens2, t) - _cdf(a1, len1, dens1, t))))


def partial_mass_delta(sys: RankedIntervalSystem, n: int, t_grid=None) -> float:
    """``max_t |int_0^t (g_{n+1} - g_n)|`` evaluated at every endpoint (plus ``t_grid``)."""
    if not 1 <= n or n + 1 > sys.n_max:
        raise ValueError(f"need 1 <= n and n + 1 <= n_max ({sys.n_max})")
    return cdf_gap(sys.left(n), sys.sigma(n), n / TWO_PI,
                   sys.left(n + 1), sys.sigma(n + 1), (n + 1) / TWO_PI, t_grid)


def leaf_arrays(sys: RankedIntervalSystem, n: int) -> tuple[np.ndarray, np.ndarray]:
    a = np.ascontiguousarray(sys.left(n))
    return a, a + sys.sigma(n)


def to_json_str(sys: RankedIntervalSystem) -> str:
    return json.dumps(sys.to_json())
