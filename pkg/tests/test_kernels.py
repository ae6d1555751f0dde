"""Agreement between the compiled kernels and the numpy fallback."""
from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from circsing import kernels, _pykernels
from circsing.cantor import build
from circsing.core import TWO_PI
from circsing.quadrature import graded_rule

import oracles

cy = pytest.importorskip("circsing._ckernels")


def test_default_backend_is_compiled():
    assert kernels.BACKEND == "cython"
    assert kernels.backend_module("python") is _pykernels
    with pytest.raises(ValueError):
        kernels.backend_module("fortran")


def test_fallback_selected_by_environment():
    env = dict(os.environ, CIRCSING_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "from circsing import kernels; print(kernels.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"


def test_exp_sum_backends():
    rng = np.random.default_rng(0)
    t = rng.uniform(0, TWO_PI, 500)
    c = rng.normal(size=500) + 1j * rng.normal(size=500)
    ref = oracles.exp_sum_direct(t, c, range(-60, 61))
    for mod in (cy, _pykernels):
        assert np.allclose(mod.exp_sum(t, c, -60, 60), ref, atol=1e-10)


def test_exp_sum_nufft_path():
    rng = np.random.default_rng(1)
    t = rng.uniform(0, TWO_PI, 5000)
    c = np.full(5000, 1 / 5000 + 0j)
    fast = kernels.exp_sum(t, c, -1000, 1000)
    slow = kernels.exp_sum(t, c, -1000, 1000, exact=True)
    assert np.max(np.abs(fast - slow)) < 1e-12


def test_interval_sum_backends():
    rng = np.random.default_rng(2)
    cen = rng.uniform(0, TWO_PI, 40)
    half = rng.uniform(0.001, 0.05, 40)
    w = rng.uniform(0.5, 2, 40) + 0j
    ref = oracles.interval_coeffs(cen - half, 2 * half, w, range(-30, 31))
    for mod in (cy, _pykernels):
        assert np.allclose(mod.interval_sum(cen, half, w, -30, 30), ref, atol=1e-12)


def test_logsum_tree_matches_direct():
    sys_ = build(3, 10)
    sig = np.asarray(sys_.schedule.sigma)
    rng = np.random.default_rng(3)
    base = rng.uniform(0, TWO_PI, 200)
    off = np.zeros(200)
    lr = np.log(rng.uniform(0.5, 0.999, 200))
    a = sys_.left(10)
    direct = cy.logsum_direct(a, a + sys_.sigma(10), base, off, lr)
    assert np.allclose(_pykernels.logsum_direct(a, a + sys_.sigma(10), base, off, lr), direct, atol=1e-12)
    tree = cy.LogSumTree(sys_.a_flat, sig, 10)
    assert np.allclose(tree.eval(base, off, lr), direct, atol=1e-10)


def test_interval_moments_backends():
    sys_ = build(4, 7)
    N = 6
    sig = sys_.sigma(N)
    r = graded_rule(sig, 1e-9)
    args = (N / TWO_PI, 0.3, (1 << N) * sig, r.side, r.off, r.rel, r.wk, r.wg, 6, 1, 15)
    tc = cy.LogSumTree(sys_.a_flat, np.asarray(sys_.schedule.sigma), N)
    tp = _pykernels.LogSumTree(sys_.a_flat, np.asarray(sys_.schedule.sigma), N)
    mc, ec = kernels.interval_moments(tc, *args)
    mp, ep = kernels.interval_moments(tp, *args)
    assert np.allclose(mc, mp, atol=1e-11, rtol=1e-9)
    assert np.all(ec < 1e-8) and np.all(ep < 1e-8)
