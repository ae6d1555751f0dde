from __future__ import annotations

import math

import numpy as np
import pytest

from circsing import hardy
from circsing.cantor import build
from circsing.core import TWO_PI, CoeffWindow, SmoothBump, pair
from circsing.hardy import (AliasError, BumpNotInGap, EndpointSingularity, StageAnalytic,
                            StageDepthError, boundary_integral, contour_taylor, fhat, growth_fit,
                            herglotz_eval, herglotz_series, largest_gap_bump, moment_probe,
                            n_of_m, shat_window, stage_F, support_pairing, taylor_coeff,
                            taylor_table, weighted_slope)

import oracles

DELTA = hardy.SMALL_DELTA


@pytest.fixture(scope="module")
def sys8():
    return build(17, 9)


def random_disk(rng, n, rmax):
    r = rmax * np.sqrt(rng.uniform(0, 1, n))
    return r * np.exp(1j * rng.uniform(0, TWO_PI, n))


# --- Herglotz transform ---------------------------------------------------------

def test_h_at_origin(sys8):
    sa = StageAnalytic(sys8, 5, DELTA)
    assert herglotz_eval(sa, 0j) == pytest.approx(1 / TWO_PI, abs=1e-15)
    assert stage_F(sa, 0j) == pytest.approx(math.exp(DELTA / TWO_PI), rel=1e-14)


def test_herglotz_positivity(sys8):
    rng = np.random.default_rng(0)
    z = random_disk(rng, 1000, 0.999)
    for n in (3, 8):
        assert np.all(StageAnalytic(sys8, n, DELTA).H(z).real > 0)


def test_closed_form_vs_series(sys8):
    rng = np.random.default_rng(1)
    z = random_disk(rng, 100, 1 - 1e-3)
    sa = StageAnalytic(sys8, 6, DELTA)
    ser = StageAnalytic(sys8, 6, DELTA, strategy="truncated_series", tail_tol=1e-10)
    assert np.max(np.abs(sa.H(z) - ser.H(z))) < 1e-8


def test_closed_form_vs_quadrature(sys8):
    rng = np.random.default_rng(2)
    sa = StageAnalytic(sys8, 3, DELTA)
    for z in random_disk(rng, 10, 0.95):
        ref = oracles.herglotz_quad(sys8.left(3), sys8.sigma(3), 3, z)
        assert abs(sa.H(z) - ref) < 1e-9


def test_series_tail_error(sys8):
    sa = StageAnalytic(sys8, 4, DELTA)
    with pytest.raises(hardy.SeriesTailError, match="M'"):
        herglotz_series(sa, np.array([0.99 + 0j]), terms=10, tail_tol=1e-10)
    with pytest.raises(hardy.SeriesTailError):
        herglotz_series(sa, np.array([1.0 + 0j]))


def test_boundary_modulus(sys8):
    n = 6
    sa = StageAnalytic(sys8, n, DELTA)
    a, b = sys8.left(n), sys8.left(n) + sys8.sigma(n)
    gap_mid = 0.5 * (b + np.r_[a[1:], a[0] + TWO_PI])
    assert np.allclose(np.abs(sa.F(np.exp(1j * gap_mid))), 1.0, atol=1e-12)
    inside = a + 0.37 * sys8.sigma(n)
    assert np.allclose(np.abs(sa.F(np.exp(1j * inside))), math.exp(DELTA * n / TWO_PI), rtol=1e-12)
    rng = np.random.default_rng(3)
    z = random_disk(rng, 500, 0.99)
    assert np.all(np.abs(sa.F(z)) <= math.exp(DELTA * n / TWO_PI) * (1 + 1e-9))
    with pytest.raises(EndpointSingularity, match="endpoint singularity"):
        sa.H(np.exp(1j * a[3]))


def test_boundary_f_off_k(sys8):
    N = 7
    sa = StageAnalytic(sys8, N, DELTA)
    rng = np.random.default_rng(4)
    a, b = sys8.left(N), sys8.left(N) + sys8.sigma(N)
    nxt = np.r_[a[1:], a[0] + TWO_PI]
    k = rng.integers(0, a.size, 1000)
    t = b[k] + rng.uniform(0.01, 0.99, 1000) * (nxt[k] - b[k])
    assert np.allclose(np.abs(sa.boundary_f(t, np.zeros(t.size))), 1.0, atol=1e-12)


def test_stage_depth_error(sys8):
    with pytest.raises(StageDepthError):
        StageAnalytic(sys8, 10, DELTA)


# --- contour extraction ---------------------------------------------------------

@pytest.mark.parametrize("q", [1, 5, 17])
def test_monomial(q):
    for m in range(0, 25):
        v, ab, _, _ = contour_taylor(lambda z: z ** q, m, 1.0)
        assert abs(v - (1.0 if m == q else 0.0)) < 1e-9


def test_exponential_series():
    d = 0.8
    for m in range(1, 21):
        v, ab, _, _ = contour_taylor(lambda z: np.exp(d * z), m, math.exp(d))
        ref = d ** m / math.factorial(m)
        assert abs(v - ref) <= max(ab, 1e-14)


def test_alias_error():
    with pytest.raises(AliasError, match="fft_size"):
        contour_taylor(lambda z: np.exp(z), 40, math.e, fft_size=64)


def test_taylor_coeff_properties(sys8):
    assert taylor_coeff(sys8, DELTA, -3).value == 0
    with pytest.raises(StageDepthError, match="increase n_max"):
        taylor_coeff(sys8, DELTA, 200)
    r = taylor_coeff(sys8, DELTA, 20)
    assert r.params["stage_n"] == n_of_m(20)
    assert r.errors["alias"] <= 1e-9 * math.exp(DELTA * r.params["stage_n"] / TWO_PI)
    tab = taylor_table(sys8, 0.0, range(1, 30))
    assert all(abs(v[0]) < 1e-13 for v in tab.values())


def test_n_of_m():
    assert n_of_m(1) == 1
    assert n_of_m(64) == math.ceil(2 * math.log(64))
    assert n_of_m(-64) == n_of_m(64)


# --- boundary coefficients ----------------------------------------------------------

def test_fhat_delta_zero(sys8):
    assert fhat(sys8, 0.0, 5, 0).value == pytest.approx(TWO_PI, abs=1e-10)
    assert abs(fhat(sys8, 0.0, 5, 7).value) < 1e-10


def test_fhat_matches_taylor(sys8):
    N = 6
    rng = np.random.default_rng(5)
    for m in sorted(rng.choice(np.arange(0, 80), 5, replace=False)):
        fb = fhat(sys8, DELTA, N, int(m))
        tc = taylor_coeff(sys8, DELTA, int(m), stage=N)
        # Taylor coefficient a_m times 2 pi is the measure-convention coefficient
        budget = fb.error_budget + TWO_PI * tc.error_budget + 1e-9
        assert abs(fb.value - TWO_PI * tc.value) <= budget


def test_negative_side_of_boundary_values(sys8):
    N = 6
    v, e = boundary_integral(sys8, DELTA, N, [-1, -5, -30], "all")
    assert np.all(np.abs(v) <= e + 1e-9)


# --- S_hat ----------------------------------------------------------------------------

def test_shat_delta_zero(sys8):
    res = shat_window(sys8, 0.0, -20, 20, N_f=6)
    assert np.all(res.window.values == 0)


def test_shat_negative_equals_minus_gap_integral(sys8):
    N = 6
    res = shat_window(sys8, DELTA, -40, -1, N_f=N, stability=False)
    gaps, err = boundary_integral(sys8, DELTA, N, range(-40, 0), "gaps")
    assert np.allclose(res.window.values, -gaps, atol=1e-8)


def test_shat_negative_bessel(sys8):
    N = 7
    M = 128
    res = shat_window(sys8, DELTA, -M, 0, N_f=N, stability=False, clamp=True)
    part = np.cumsum(np.abs(res.window.get(-M, -1)[::-1]) ** 2)
    assert np.all(np.diff(part) >= 0)
    assert part[-1] <= TWO_PI * math.exp(2 * DELTA * N / TWO_PI)


def test_shat_depth_and_clamp(sys8):
    with pytest.raises(StageDepthError):
        shat_window(sys8, DELTA, 0, 5000, N_f=7, stability=False)
    res = shat_window(sys8, DELTA, 0, 300, N_f=7, stability=False, clamp=True)
    assert res.stage_n.max() == 7
    rep = hardy.shat(sys8, DELTA, -3, N_f=7)
    assert rep.extra["stability"] is not None
    assert list(next(res.rows()))[:1] == [0]


@pytest.fixture(scope="module")
def stability_runs():
    sys_ = build(7, 13)
    out = {}
    for N in (8, 9, 10, 11):
        r = shat_window(sys_, DELTA, -64, 64, N_f=N, clamp=True)
        out[N] = r.stability
    return out


@pytest.mark.slow
def test_stability_decreases(stability_runs):
    med = [np.median(stability_runs[N]) for N in (8, 9, 10, 11)]
    assert all(b < a for a, b in zip(med, med[1:]))


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="stage-to-stage change decays polynomially, not by 0.75 per stage")
def test_stability_ratio_three_quarters(stability_runs):
    for N in (8, 9, 10):
        ratio = np.median(stability_runs[N + 1] / stability_runs[N])
        assert ratio <= 0.75


# --- support pairing ---------------------------------------------------------------------

def test_pairing_delta_zero(sys8):
    res = shat_window(sys8, 0.0, -256, 256, N_f=6)
    psi = largest_gap_bump(sys8, 6)
    pr = support_pairing(res.window, sys8, psi, 256, N=6)
    assert np.all(pr.partial == 0)


def test_pairing_bump_inside_k(sys8):
    w = CoeffWindow(-8, 8, np.zeros(17))
    centre = sys8.a(6, 5) + 0.5 * sys8.sigma(6)
    with pytest.raises(BumpNotInGap, match="bump not in gap"):
        support_pairing(w, sys8, SmoothBump(centre, 0.01), 8, N=6)


@pytest.fixture(scope="module")
def pairing_runs():
    sys_ = build(23, 9)
    N, M = 8, 1024
    psi = largest_gap_bump(sys_, 3)
    mixed = shat_window(sys_, DELTA, -M, M, N_f=N, stability=False, clamp=True)
    single = shat_window(sys_, DELTA, -M, M, N_f=N, stability=False, single_stage=True)
    return sys_, psi, N, M, mixed, single


def test_pairing_single_stage_supported(pairing_runs):
    sys_, psi, N, M, _, single = pairing_runs
    pr = support_pairing(single.window, sys_, psi, M, N=N, numeric_error=single.error)
    assert pr.verdict == "supported-off-psi"


def test_pairing_mixed_stage_residual(pairing_runs):
    sys_, psi, N, M, mixed, single = pairing_runs
    pr = support_pairing(mixed.window, sys_, psi, M, N=N, numeric_error=mixed.error)
    # below 1e-3 of the bump's sup norm, and entirely due to low-m stage mixing
    assert abs(pr.partial[-1]) <= 1e-3
    diff = CoeffWindow(-M, M, mixed.window.values - single.window.values)
    assert np.count_nonzero(np.abs(diff.values) > 1e-12) <= 2 * n_of_m(M) ** 2
    assert abs(pair(diff, psi, M)[-1] - pr.partial[-1]) < 1e-12


@pytest.mark.xfail(strict=True, reason="mixed-stage surrogate leaves a fixed low-frequency residual")
def test_pairing_mixed_stage_within_decay_budget(pairing_runs):
    sys_, psi, N, M, mixed, _ = pairing_runs
    pr = support_pairing(mixed.window, sys_, psi, M, N=N, numeric_error=mixed.error)
    assert pr.verdict == "supported-off-psi"


# --- moment probe -------------------------------------------------------------------------------

def test_moment_probe_guards():
    with pytest.raises(ValueError, match="insufficient replication"):
        moment_probe(DELTA, [64], list(range(8)))
    with pytest.raises(ValueError):
        moment_probe(DELTA, [48], list(range(16)))


def test_moment_probe_delta_zero_closed_form():
    ms = [8, 16]
    seeds = list(range(16))
    mp = moment_probe(0.0, ms, seeds)
    for i, s in enumerate(seeds[:3]):
        for j, m in enumerate(ms):
            n = n_of_m(m)
            sys_ = build(s, n)
            ref = oracles.interval_coeffs(sys_.left(n), np.full(1 << n, sys_.sigma(n)),
                                          np.ones(1 << n), [m])[0]
            assert abs(mp.X[i, j] - ref) < 1e-12
    assert np.all(mp.fourth >= mp.second ** 2 * (1 - 1e-12))


def test_moment_probe_small_run():
    mp = moment_probe(DELTA, [16, 32, 64], hardy.derive_seeds(5, 16))
    assert np.all(mp.fourth >= 0)
    assert np.all(mp.fourth >= mp.second ** 2 * (1 - 1e-12))
    lo, hi = mp.band95
    assert lo < mp.slope < hi
    assert len(list(mp.rows())) == 3


def test_derive_seeds_and_slope():
    assert hardy.derive_seeds(3, 4) == hardy.derive_seeds(3, 4)
    assert len(set(hardy.derive_seeds(3, 32))) == 32
    x = np.arange(6.0)
    b, se, a = weighted_slope(x, 2 - 0.5 * x)
    assert b == pytest.approx(-0.5) and a == pytest.approx(2) and se < 1e-12


# --- growth fit ---------------------------------------------------------------------------------

def test_growth_fit_delta_zero(sys8):
    g = growth_fit(sys8, 0.0, [2, 4, 8, 16])
    assert g.status == "all zero" and g.slope is None


def test_growth_fit_large_delta_small_m():
    sys_ = build(2024, 12)
    g = growth_fit(sys_, hardy.LARGE_DELTA, [2 ** j for j in range(1, 8)])
    assert g.stage_bound_ok
    assert g.slope is not None and 0 < g.slope < 10
