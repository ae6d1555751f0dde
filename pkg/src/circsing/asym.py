"""Measures whose coefficients are small on negative and large on positive frequencies.

Step ``k`` multiplies a base measure ``mu`` by the dilated trigonometric
polynomial ``g_k(l t) = 4^-k sum_j exp(i l q_j t)``, so that
``nu_k_hat(n) = 4^-k sum_j mu_hat(n - l q_j)``. Frequencies above the
threshold ``s_k`` keep the negative side small; disjoint windows ``I_k`` on
the positive side collect the mass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (CircleMeasure, CoeffWindow, WindowError, block_verdict, fourier_coeffs,
                   lp_norm, partial_sum_blocks, weighted_energy)

K_MAX = 4
MASS_FRACTION = 0.9


class CertificateError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# thresholds and frequencies

def _neg_tail_p(w: CoeffWindow, p: float) -> np.ndarray:
    """``T[s] = sum_{lo <= n <= -s} |c_n|^p`` for ``s = 1 .. -lo`` (index ``s - 1``)."""
    if w.lo > -1:
        return np.zeros(0)
    v = np.abs(w.get(w.lo, -1)) ** p           # n = lo .. -1
    return np.cumsum(v)[::-1]                  # s = 1 .. -lo


def terminal_block(w: CoeffWindow, p: float) -> float:
    """``l^p`` norm of the last complete negative dyadic block ``[-2^(j+1)+1, -2^j]``."""
    if w.lo > -1:
        return 0.0
    j = int(math.floor(math.log2(-w.lo + 1))) - 1
    if j < 0:
        return float(abs(w.get(-1)))
    return lp_norm(w, p, (-(1 << (j + 1)) + 1, -(1 << j)))


def tail_threshold(w: CoeffWindow, p: float, target: float) -> int:
    """Smallest ``s >= 1`` with ``(sum_{n <= -s} |c_n|^p)^(1/p) < target`` on the window."""
    if not target > 0:
        raise ValueError("target must be > 0")
    if terminal_block(w, p) >= target / 4.0:
        raise WindowError("extend window: terminal block carries too much of the tail")
    tail = _neg_tail_p(w, p) ** (1.0 / p)
    ok = np.flatnonzero(tail < target)
    if tail.size == 0 or ok.size == 0:
        return 1 if tail.size == 0 else tail.size + 1
    return int(ok[0]) + 1


def core_halfwidth(w: CoeffWindow, p: float, fraction: float = MASS_FRACTION) -> int:
    """Smallest ``W`` with ``sum_{|n| <= W} |c_n|^p >= fraction * sum |c_n|^p``."""
    top = min(-w.lo, w.hi)
    if top < 0:
        raise WindowError("window does not contain index 0")
    v = np.abs(w.get(-top, top)) ** p
    total = (np.abs(w.values) ** p).sum()
    if total == 0:
        raise ValueError("zero coefficients")
    ring = v[top:].copy()
    ring[1:] += v[:top][::-1]
    k = np.flatnonzero(np.cumsum(ring) >= fraction * total)
    if k.size == 0:
        raise WindowError("window holds less than the requested mass fraction")
    return int(k[0])


def translate_sum(w: CoeffWindow, shifts, weight: complex, lo: int, hi: int) -> CoeffWindow:
    """``weight * sum_j w(n - shift_j)`` on ``lo..hi``; indices outside ``w`` count as 0."""
    n = np.arange(lo, hi + 1)
    out = np.zeros(n.size, dtype=complex)
    for q in shifts:
        a, b = max(lo, w.lo + q), min(hi, w.hi + q)
        if a <= b:
            out[a - lo:b - lo + 1] += w.get(a - q, b - q)
    return CoeffWindow(lo, hi, weight * out)


@dataclass
class FrequencyChoice:
    q: np.ndarray
    certificate: float
    target: float
    interval: tuple[int, int]
    halfwidth: int
    strategy: str
    history: list = field(default_factory=list)


def _check_increasing(q):
    q = np.asarray(q, dtype=np.int64)
    if q.size and np.any(np.diff(q) <= 0):
        raise ValueError("frequencies must be strictly increasing")
    return q


def window_mass(w: CoeffWindow, q, k: int, p: float, interval: tuple[int, int]) -> float:
    """``|| (g_k mu)^ ||_{l^p(interval)}`` with ``g_k`` having frequencies ``q``."""
    q = _check_increasing(q)
    t = translate_sum(w, q, 4.0 ** (-k), interval[0], interval[1])
    return lp_norm(t, p)


def choose_frequencies(w: CoeffWindow, p: float, k: int, s_k: int, strategy: str = "paper_sparse",
                       start: int | None = None, fraction: float = MASS_FRACTION,
                       spacing: int | None = None) -> FrequencyChoice:
    """``4^k`` frequencies above ``s_k``, spread (paper_sparse) or packed greedily.

    ``start`` is the lowest admissible first frequency (defaults to ``s_k + 1``);
    ``spacing`` overrides the paper_sparse gap ``2W + 1``.
    The achieved ``l^p`` mass on ``I = [q_1 - W, q_last + W]`` is returned next
    to the target 1/2; the target is measured, never assumed.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    count = 4 ** k
    W = core_halfwidth(w, p, fraction)
    q1 = max(s_k + 1, W + 1) if start is None else max(start, s_k + 1)
    if strategy == "paper_sparse":
        gap = 2 * W + 1 if spacing is None else spacing
        if gap < 2 * W + 1:
            raise ValueError("spacing must keep the core windows disjoint")
        q = q1 + gap * np.arange(count, dtype=np.int64)
        hist = []
    elif strategy == "greedy":
        q = np.array([q1], dtype=np.int64)
        hist = [window_mass(w, q, k, p, (q1 - W, q1 + W))]
        for _ in range(count - 1):
            best, best_c = None, -1.0
            for cand in range(int(q[-1]) + 1, int(q[-1]) + 2 * W + 2):
                qq = np.r_[q, cand]
                c = window_mass(w, qq, k, p, (q1 - W, cand + W))
                if c > best_c:
                    best, best_c = cand, c
            q = np.r_[q, best]
            hist.append(best_c)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    interval = (int(q[0]) - W, int(q[-1]) + W)
    if not _fits(w, q, interval):
        raise WindowError(f"cannot fit {count} windows of half-width {W}")
    c = window_mass(w, q, k, p, interval)
    return FrequencyChoice(q, c, 0.5, interval, W, strategy, hist)


def _fits(w: CoeffWindow, q, interval) -> bool:
    # every translate's core must be inside the base window
    return w.lo + int(q[-1]) <= interval[0] and w.hi + int(q[0]) >= interval[1]


# ---------------------------------------------------------------------------
# dilation

def rajchman_evidence(w: CoeffWindow, ratio: float = 0.5) -> bool:
    """Dyadic block maxima of ``|c_m|`` drop to at most ``ratio`` times their first value."""
    top = min(-w.lo, w.hi)
    maxima = []
    j = 0
    while (1 << (j + 1)) - 1 <= top:
        a, b = 1 << j, (1 << (j + 1)) - 1
        maxima.append(max(np.abs(w.get(a, b)).max(), np.abs(w.get(-b, -a)).max()))
        j += 1
    if not maxima:
        return True
    c0 = abs(w.get(0)) if w.covers(0, 0) else maxima[0]
    # coefficients at rounding level count as vanished
    return maxima[-1] <= max(ratio * maxima[0], 1e-12 * c0)


@dataclass
class Dilation:
    l: int
    achieved: float
    tol: float
    method: str


def _dilation_sums(w: CoeffWindow, D: int, ls: np.ndarray) -> np.ndarray:
    n = np.arange(1, D + 1)
    idx = ls[:, None] * n[None, :]
    return (np.abs(w.at(idx)) + np.abs(w.at(-idx))).sum(axis=1)


def choose_dilation(mu, g_degree: int, delta_tol: float, method: str = "direct",
                    seed: int = 0, l_max: int | None = None) -> Dilation:
    """Smallest ``l`` with ``sum_{0<|n|<=g_degree} |mu_hat(l n)| < delta_tol``.

    ``mu`` is a :class:`CircleMeasure` or a coefficient window. ``method='wiener'``
    draws ``l`` uniformly in ``[N / (2 g_degree), N / g_degree]`` for doubling ``N``.
    """
    if g_degree < 1:
        raise ValueError("g_degree must be >= 1")
    if isinstance(mu, CircleMeasure):
        if mu.kind == "atomic":
            raise ValueError("atomic measure: not Rajchman, no dilation exists")
        top = g_degree * (l_max or 4096)
        w = fourier_coeffs(mu, -top, top)
    else:
        w = mu
    if not rajchman_evidence(w):
        raise ValueError("no Rajchman evidence: coefficients do not decay on the window")
    reach = min(-w.lo, w.hi) // g_degree
    if l_max is not None:
        reach = min(reach, l_max)
    if reach < 1:
        raise WindowError("extend window or raise delta_tol")
    if method == "direct":
        chunk = 4096
        for a in range(1, reach + 1, chunk):
            ls = np.arange(a, min(reach, a + chunk - 1) + 1)
            s = _dilation_sums(w, g_degree, ls)
            hit = np.flatnonzero(s < delta_tol)
            if hit.size:
                return Dilation(int(ls[hit[0]]), float(s[hit[0]]), delta_tol, "direct")
    elif method == "wiener":
        rng = np.random.default_rng(seed)
        N = 2 * g_degree
        while N // g_degree <= reach:
            lo, hi = max(1, N // (2 * g_degree)), N // g_degree
            ls = rng.integers(lo, hi + 1, size=8)
            s = _dilation_sums(w, g_degree, ls)
            i = int(np.argmin(s))
            if s[i] < delta_tol:
                return Dilation(int(ls[i]), float(s[i]), delta_tol, "wiener")
            N *= 2
    else:
        raise ValueError(f"unknown method {method!r}")
    raise WindowError("extend window or raise delta_tol")


# ---------------------------------------------------------------------------
# the pipeline

@dataclass
class AsymStep:
    k: int
    s_k: int
    q: np.ndarray
    l: int
    interval: tuple[int, int]
    certificates: dict

    def __post_init__(self):
        _check_increasing(self.q)

    def to_json(self) -> dict:
        return {"k": self.k, "s_k": self.s_k, "q": [int(x) for x in self.q], "l": self.l,
                "I_k": list(self.interval), "certificates": dict(self.certificates)}


@dataclass
class AsymMeasure:
    base: CoeffWindow
    steps: list[AsymStep]
    nu: CoeffWindow
    p: float

    def ledger(self) -> list[list]:
        """Rows ``(k, c_k, neg_tail_k, mass_bound_k)`` plus running sums of ``c^p`` and ``tail^p``."""
        rows, pos, neg = [], 0.0, 0.0
        for st in self.steps:
            c, t = st.certificates["window_mass"], st.certificates["neg_tail"]
            pos += c ** self.p
            neg += t ** self.p
            rows.append([st.k, c, t, st.certificates["measure_norm_bound"], pos, neg])
        return rows


LEDGER_COLUMNS = ["k", "c_k", "neg_tail_k", "mass_bound_k", "sum_c_p", "sum_neg_p"]


def g_norm2(k: int) -> float:
    """``||g_k||_2 = 4^-k sqrt(4^k)`` for distinct frequencies."""
    return 4.0 ** (-k) * math.sqrt(4.0 ** k)


def _norm_bound(w: CoeffWindow, q: np.ndarray, k: int, l: int) -> float:
    """``sqrt(mu(T) * int |g_k(l t)|^2 dmu)`` from the coefficients at dilated differences.

    Cauchy-Schwarz bound on ``||g_k(l .) mu||``; ``mu_hat(0)`` is the mass of
    the positive measure ``mu``.
    """
    d = (q[:, None] - q[None, :]).ravel() * l
    if not w.covers(int(d.min()), int(d.max())):
        raise WindowError("window does not reach the dilated frequency differences")
    mass = float(np.real(w.get(0)))
    sq = 4.0 ** (-2 * k) * float(np.real(np.sum(w.at(d))))
    return math.sqrt(max(mass, 0.0) * max(sq, 0.0))


def build_nu(mu: CoeffWindow, p: float, k_max: int, strategy: str = "paper_sparse",
             delta_tol: float = 0.1, dilation: str = "direct") -> tuple[AsymMeasure, list[dict]]:
    """Run steps ``1..k_max`` and assemble ``nu_hat`` on the largest window the data support.

    ``mu`` are the coefficients of a positive measure; they are rescaled to
    unit ``l^p`` norm on the window. Raises :class:`CertificateError` naming
    the step whose hard certificate fails.
    """
    if not 1 <= k_max <= K_MAX:
        raise ValueError(f"k_max must lie in 1..{K_MAX}")
    if not p > 1:
        raise ValueError("p must be > 1")
    norm = lp_norm(mu, p)
    if norm == 0:
        raise ValueError("zero base measure")
    w = mu.scaled(1.0 / norm)
    steps: list[AsymStep] = []
    reports: list[dict] = []
    prev_end = 0
    for k in range(1, k_max + 1):
        s_k = tail_threshold(w, p, 2.0 ** (-k))
        fc = choose_frequencies(w, p, k, s_k, strategy)
        rel = fc.q - fc.q[0]
        D = int(rel[-1]) if rel.size > 1 else 1
        dil = choose_dilation(w, D, delta_tol, method=dilation)
        l, W = dil.l, fc.halfwidth
        # shift the pattern so that the dilated window starts after the previous one
        q1 = max(int(fc.q[0]), s_k + 1, -(-(prev_end + W + 1) // l))
        q = q1 + rel
        shifts = l * q
        interval = (int(shifts[0]) - W, int(shifts[-1]) + W)
        lo, hi = mu.lo + int(shifts[-1]), mu.hi + int(shifts[0])
        if lo > -1 or hi < interval[1]:
            raise CertificateError(f"step {k}: base window too short for dilation l={l}")
        nu_k = translate_sum(w, shifts, 4.0 ** (-k), lo, hi)
        neg = lp_norm(nu_k, p, "negatives")
        tailp = _neg_tail_p(w, p)
        tail_bound = 4.0 ** (-k) * sum(
            float(tailp[t]) ** (1.0 / p) for t in shifts if t + 1 <= tailp.size)
        c = lp_norm(nu_k, p, interval)
        bound = _norm_bound(w, q, k, l)
        cert = {"neg_tail": neg, "neg_tail_bound": tail_bound, "window_mass": c,
                "window_mass_undilated": fc.certificate, "target": 0.5,
                "measure_norm_bound": bound, "g_norm2": g_norm2(k),
                "dilation_sum": dil.achieved, "halfwidth": W}
        checks = {"neg_tail": neg < 2.0 ** (-k),
                  "g_norm2": g_norm2(k) == 2.0 ** (-k),
                  "disjoint": interval[0] > prev_end,
                  "mass_bound": bound <= 2.0 ** (-k + 1)}
        st = AsymStep(k, s_k, q, l, interval, cert)
        steps.append(st)
        reports.append({"step": st.to_json(), "checks": checks})
        bad = [n for n, ok in checks.items() if not ok]
        if bad:
            raise CertificateError(f"step {k}: certificate {', '.join(bad)} failed")
        prev_end = interval[1]
    # nu_hat on the window every step covers
    lo = max(mu.lo + int(st.l * st.q[-1]) for st in steps)
    hi = min(mu.hi + int(st.l * st.q[0]) for st in steps)
    total = np.zeros(hi - lo + 1, dtype=complex)
    for st in steps:
        total += translate_sum(w, st.l * st.q, 4.0 ** (-st.k), lo, hi).values
    return AsymMeasure(w, steps, CoeffWindow(lo, hi, total), p), reports


# ---------------------------------------------------------------------------
# sharpness diagnostic

@dataclass
class SharpnessReport:
    p: float
    d: float
    alpha: float
    partial: np.ndarray
    blocks: np.ndarray
    verdict: str
    below_critical: bool


def sharpness_check(nu_hat: CoeffWindow, p: float, d: float,
                    alpha: float | None = None) -> SharpnessReport:
    """One-sided energy of ``nu_hat`` at ``alpha = 2/p`` and its block verdict."""
    a = 2.0 / p if alpha is None else alpha
    if not 0 < a <= 1:
        raise ValueError("alpha = 2/p must lie in (0, 1]; need p >= 2")
    part = weighted_energy(nu_hat, a, "anti_analytic")
    blocks = partial_sum_blocks(part)
    if np.all(part == 0):
        verdict = "converging"
    else:
        verdict = block_verdict(blocks)
    return SharpnessReport(p, d, a, part, blocks, verdict, p < 2.0 / d if d > 0 else False)
