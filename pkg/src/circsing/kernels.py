"""Kernel backend selection.

The compiled extension ``circsing._ckernels`` is used when it imports;
otherwise the numpy implementations in ``circsing._pykernels`` take over.
Set ``CIRCSING_BACKEND=python`` to force the fallback.

Large exponential sums additionally go through a type-1 NUFFT (finufft)
when it is installed and the problem is big enough to benefit.
"""
from __future__ import annotations

import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("CIRCSING_BACKEND", "").lower() == "python":
        raise ImportError("fallback forced")
    from . import _ckernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

try:
    import finufft as _finufft
except ImportError:  # pragma: no cover - finufft is a declared dependency
    _finufft = None

NUFFT_EPS = 1e-14
_NUFFT_MIN_WORK = 1 << 22

LogSumTree = _impl.LogSumTree


def backend_module(name: str | None = None):
    """Return the kernel module for ``name`` ('cython', 'python' or None)."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def exp_sum(t, c, lo: int, hi: int, *, exact: bool = False) -> np.ndarray:
    """Return ``sum_j c_j exp(-i m t_j)`` for ``m = lo..hi``.

    ``exact=True`` forces the direct sum (the NUFFT is accurate to about
    ``NUFFT_EPS * sum|c|``).
    """
    t = np.ascontiguousarray(t, dtype=float)
    c = np.ascontiguousarray(c, dtype=complex)
    if hi < lo:
        raise ValueError("hi < lo")
    nm = hi - lo + 1
    if t.size == 0:
        return np.zeros(nm, dtype=complex)
    if not exact and _finufft is not None and t.size * nm >= _NUFFT_MIN_WORK:
        return _nufft(t, c, lo, hi)
    return _impl.exp_sum(t, c, int(lo), int(hi))


def _nufft(t, c, lo, hi):
    # finufft returns modes -K..K-1 (even) or -K..K (odd) when modeord=0
    kmax = max(abs(lo), abs(hi))
    n_modes = 2 * kmax + 1
    x = np.mod(t, 2 * np.pi)
    x = np.where(x > np.pi, x - 2 * np.pi, x)
    full = _finufft.nufft1d1(x, c, n_modes, isign=-1, eps=NUFFT_EPS)
    return full[lo + kmax:hi + kmax + 1].copy()


def interval_sum(center, half, w, lo: int, hi: int) -> np.ndarray:
    center = np.ascontiguousarray(center, dtype=float)
    half = np.ascontiguousarray(half, dtype=float)
    w = np.ascontiguousarray(w, dtype=complex)
    if center.size == 0:
        return np.zeros(hi - lo + 1, dtype=complex)
    # equal lengths factor out of the sum; that path can use the NUFFT
    if np.all(half == half[0]):
        m = np.arange(lo, hi + 1)
        kern = 2.0 * half[0] * np.sinc(m * half[0] / np.pi)
        return kern * exp_sum(center, w, lo, hi)
    return _impl.interval_sum(center, half, w, int(lo), int(hi))


def logsum_direct(a, b, base, off, lr) -> np.ndarray:
    return _impl.logsum_direct(*(np.ascontiguousarray(v, dtype=float)
                                 for v in (a, b, base, off, lr)))


def interval_moments(tree, dens, delta, ktot, side, off, rel, wk, wg, pm, width, nc):
    mod = _pykernels if isinstance(tree, _pykernels.LogSumTree) else _impl
    return mod.interval_moments(
        tree, float(dens), float(delta), float(ktot),
        np.ascontiguousarray(side, dtype=np.int64),
        *(np.ascontiguousarray(v, dtype=float) for v in (off, rel, wk, wg)),
        int(pm), int(width), int(nc))
