"""Brownian-bridge images of a symmetric Cantor set.

The base set lives on the parameter interval [0, 2pi]: each interval keeps
two end pieces of relative length ``xi = 2**(-2/delta)``, so its dimension is
``delta / 2``. A bridge ``B`` on [0, 2pi] (``Var W(t) = t``) maps it to the
circle; the image measure is sampled by drawing Cantor points digit by digit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import TWO_PI, CoeffWindow
from .hardy import weighted_slope

MAX_LEVEL = 26
_CANTOR_STREAM = 1 << 40


@dataclass(frozen=True)
class BaseCantor:
    delta: float
    J: int

    def __post_init__(self):
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        if self.J < 1:
            raise ValueError("depth J must be >= 1")
        if self.ratio >= 0.5:
            raise ValueError("ratio must be < 1/2")

    @property
    def ratio(self) -> float:
        return 2.0 ** (-2.0 / self.delta)

    @property
    def dimension(self) -> float:
        return math.log(2.0) / math.log(1.0 / self.ratio)

    @property
    def digit_steps(self) -> np.ndarray:
        """Shift contributed by digit ``j`` (1-based): ``2pi (1 - xi) xi^(j-1)``."""
        xi = self.ratio
        return TWO_PI * (1.0 - xi) * xi ** np.arange(self.J)

    def level_length(self, j: int | None = None) -> float:
        j = self.J if j is None else j
        return TWO_PI * self.ratio ** j

    def left_endpoints(self, j: int | None = None) -> np.ndarray:
        """Left ends of the ``2**j`` level-j intervals, increasing."""
        j = self.J if j is None else j
        steps = TWO_PI * (1.0 - self.ratio) * self.ratio ** np.arange(j)
        out = np.zeros(1)
        for s in steps:
            out = np.concatenate([out, out + s])
        # xi < 1/2 makes every step exceed the sum of all later ones
        return np.sort(out)

    def intervals(self, j: int | None = None) -> tuple[np.ndarray, float]:
        return self.left_endpoints(j), self.level_length(j)

    def total_length(self, j: int | None = None) -> float:
        j = self.J if j is None else j
        return TWO_PI * (2.0 * self.ratio) ** j

    def sample(self, seed: int, N: int) -> np.ndarray:
        """``N`` i.i.d. points of the natural measure, from random binary digits."""
        gen = np.random.Generator(np.random.Philox(key=np.array([seed & (2**64 - 1), _CANTOR_STREAM],
                                                                 dtype=np.uint64)))
        out = np.zeros(N)
        steps = self.digit_steps
        chunk = 1 << 18
        for s in range(0, N, chunk):
            n = min(chunk, N - s)
            bits = gen.integers(0, 2, size=(n, self.J), dtype=np.uint8)
            out[s:s + n] = bits @ steps
        return out


def base_cantor(delta: float, J: int) -> BaseCantor:
    return BaseCantor(delta, J)


def min_level(delta: float, J: int) -> int:
    """Grid level that resolves level-J Cantor intervals: ``J * ceil(2 / delta)``."""
    return J * math.ceil(2.0 / delta)


@dataclass(frozen=True)
class BridgePath:
    seed: int
    L: int
    values: np.ndarray

    @property
    def grid(self) -> np.ndarray:
        return TWO_PI * np.arange((1 << self.L) + 1) / (1 << self.L)

    def __call__(self, t) -> np.ndarray:
        return np.interp(np.asarray(t, dtype=float), self.grid, self.values)

    def modulus(self) -> float:
        """Largest increment between neighbouring grid points."""
        return float(np.max(np.abs(np.diff(self.values))))


def _normals(seed: int, level: int, count: int) -> np.ndarray:
    key = np.array([seed & (2**64 - 1), level], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key)).standard_normal(count)


def bridge(seed: int, L: int) -> BridgePath:
    """Levy midpoint construction of ``W`` on a ``2**L`` grid, then ``B = W - (t / 2pi) W(2pi)``.

    The innovation for a midpoint at level ``l`` depends only on
    ``(seed, l, index)``, so coarser paths are exact restrictions of finer ones.
    """
    if not 0 <= L <= MAX_LEVEL:
        raise ValueError(f"level must lie in 0..{MAX_LEVEL}")
    W = np.array([0.0, math.sqrt(TWO_PI) * _normals(seed, 0, 1)[0]])
    for lev in range(1, L + 1):
        h = TWO_PI / (1 << (lev - 1))
        mid = 0.5 * (W[:-1] + W[1:]) + math.sqrt(h / 4.0) * _normals(seed, lev, W.size - 1)
        nxt = np.empty(2 * W.size - 1)
        nxt[0::2] = W
        nxt[1::2] = mid
        W = nxt
    t = TWO_PI * np.arange(W.size) / (W.size - 1)
    B = W - (t / TWO_PI) * W[-1]
    B[-1] = 0.0
    return BridgePath(int(seed), L, B)


@dataclass(frozen=True)
class PushforwardSample:
    N: int
    params: np.ndarray   # Cantor parameters t_i
    positions: np.ndarray  # B(t_i) mod 2pi


def pushforward(path: BridgePath, cantor: BaseCantor, N: int, seed: int | None = None) -> PushforwardSample:
    seed = path.seed if seed is None else seed
    t = cantor.sample(seed, N)
    return PushforwardSample(N, t, np.mod(path(t), TWO_PI))


def resolution_report(path: BridgePath, cantor: BaseCantor) -> dict:
    need = min_level(cantor.delta, cantor.J)
    return {"grid_level": path.L, "required_level": need, "resolved": path.L >= need,
            "cantor_interval": cantor.level_length(), "grid_step": TWO_PI / (1 << path.L)}


# ---------------------------------------------------------------------------
# coefficients of the image measure

@dataclass
class EnvelopeFit:
    slope: float
    stderr: float
    intercept: float
    blocks: np.ndarray        # dyadic block start m
    block_max: np.ndarray     # max |mu_hat| in each block
    used: np.ndarray          # mask of blocks above the noise cut
    noise_floor: float


def envelope_fit(w: CoeffWindow, noise_floor: float = 0.0, cut: float = 3.0,
                 m_lo: int = 1, m_hi: int | None = None) -> EnvelopeFit:
    """Regress ``log max_{block}|c_m|`` on ``log`` of the block start over dyadic blocks ``[2^j, 2^(j+1))``.

    Only complete blocks inside ``[m_lo, m_hi]`` enter.
    """
    top = w.hi if m_hi is None else min(w.hi, m_hi)
    starts, maxima = [], []
    j = max(0, int(math.floor(math.log2(max(m_lo, 1)))))
    while (1 << (j + 1)) - 1 <= top:
        a, b = 1 << j, (1 << (j + 1)) - 1
        if a >= m_lo:
            starts.append(a)
            maxima.append(float(np.abs(w.get(a, b)).max()))
        j += 1
    starts = np.asarray(starts)
    maxima = np.asarray(maxima)
    used = maxima > cut * noise_floor
    if used.sum() < 2:
        raise ValueError("all coefficients below noise floor; increase N")
    b, se, a = weighted_slope(np.log(starts[used]), np.log(maxima[used]))
    return EnvelopeFit(b, se, a, starts, maxima, used, noise_floor)


@dataclass
class ImageCoeffs:
    window: CoeffWindow
    noise_floor: float
    fit: EnvelopeFit


def image_coeffs(path: BridgePath, cantor: BaseCantor, m_lo: int, m_hi: int, N: int,
                 sample: PushforwardSample | None = None, fit_from: int = 1,
                 fit_to: int | None = None) -> ImageCoeffs:
    """``mu_hat(m) = N^-1 sum_i exp(-i m B(t_i))`` on ``m_lo..m_hi`` with the envelope fit.

    The fit uses blocks inside ``[fit_from, fit_to]``; pass
    ``resolved_frequency(path)`` as ``fit_to`` to stay above the grid scale.
    """
    if N < 10_000:
        raise ValueError("N must be >= 10^4")
    sample = pushforward(path, cantor, N) if sample is None else sample
    vals = kernels.exp_sum(sample.positions, np.full(sample.N, 1.0 / sample.N), m_lo, m_hi)
    if m_lo <= 0 <= m_hi:
        vals[-m_lo] = 1.0
    w = CoeffWindow(m_lo, m_hi, vals)
    floor = 1.0 / math.sqrt(sample.N)
    fit = envelope_fit(w, floor, 3.0, max(1, fit_from), fit_to)
    return ImageCoeffs(w, floor, fit)


# ---------------------------------------------------------------------------
# covers of the image

def image_cloud(path: BridgePath, cantor: BaseCantor, level: int | None = None) -> np.ndarray:
    """Images of both endpoints of every level-``level`` Cantor interval, mod 2pi."""
    a, ln = cantor.intervals(level)
    return np.mod(path(np.r_[a, a + ln]), TWO_PI)


def image_resolution(path: BridgePath, safety: float = 1.0) -> float:
    """Smallest spatial scale the interpolated path represents faithfully."""
    return safety * path.modulus()


def resolved_frequency(path: BridgePath, safety: float = 1.0) -> int:
    """Frequency dual to :func:`image_resolution`: ``floor(2pi / resolution)``."""
    return int(math.floor(TWO_PI / image_resolution(path, safety)))


@dataclass
class ImageCover:
    eps: np.ndarray
    counts: np.ndarray
    slope: float
    stderr: float
    resolution: float


def image_cover(path: BridgePath, cantor: BaseCantor, eps_list, safety: float = 1.0,
                level: int | None = None) -> ImageCover:
    from .dims import CoverTable, cover_count, minkowski_fit

    eps = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    res = image_resolution(path, safety)
    if np.any(eps < res):
        raise ValueError(f"eps below path resolution {res:.3g}")
    cloud = image_cloud(path, cantor, level)
    counts = np.array([cover_count(cloud, e) for e in eps])
    v = minkowski_fit(CoverTable(eps, counts, "bridge image"))
    return ImageCover(eps, counts, v.raw, v.stderr, res)


# ---------------------------------------------------------------------------
# convolution reduction

@dataclass
class Reduction:
    window: CoeffWindow
    shift: int
    energy: np.ndarray
    bound: np.ndarray = field(default_factory=lambda: np.zeros(0))


def frostman_reduction(s: CoeffWindow, mu: CoeffWindow, alpha: float = 0.5,
                       threshold: float = 1e-12) -> Reduction:
    """``T_hat(n) = S_hat(n) mu_hat(n - m*)`` with the smallest usable ``|m*|`` (positive first on ties).

    ``energy`` are the anti-analytic weighted-energy partial sums of ``T_hat``
    at ``alpha``; ``bound`` the matching partial sums of ``|S_hat(n)|^2 |n|^(alpha-1)``.
    """
    if not np.any(mu.values != 0):
        raise ValueError("mu vanishes on its window")
    budget = s.hi - s.lo + 1
    order = [0]
    for k in range(1, budget + 1):
        order += [k, -k]
    for m in order:
        lo = max(s.lo, mu.lo + m)
        hi = min(s.hi, mu.hi + m)
        if hi < lo:
            continue
        n = np.arange(lo, hi + 1)
        prod = s.get(lo, hi) * mu.at(n - m)
        if np.max(np.abs(prod)) > threshold:
            w = CoeffWindow(lo, hi, prod)
            # anti-analytic energy over the negative indices the overlap holds
            k = np.arange(max(1, -hi), -lo + 1) if lo < 0 else np.zeros(0, dtype=int)
            t2 = np.abs(w.at(-k)) ** 2 if k.size else np.zeros(0)
            s2 = np.abs(s.at(-k)) ** 2 if k.size else np.zeros(0)
            energy = np.r_[0.0, np.cumsum(t2 / k ** (1.0 - alpha))]
            bound = np.r_[0.0, np.cumsum(s2 * k ** (alpha - 1.0))]
            return Reduction(w, m, energy, bound)
    raise ValueError("convolution vanishes on window")
