from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from circsing.core import (TWO_PI, CircleMeasure, CoeffWindow, Interval, IntervalUnion,
                           SmoothBump, WindowError, block_verdict, dyadic_blocks, fourier_coeffs,
                           full_circle, lp_norm, pair, partial_sum_blocks, weighted_energy,
                           wiener_average)

import oracles


def atom_window(M, pos=0.0, mass=1.0):
    return fourier_coeffs(CircleMeasure.atoms([pos], [mass]), -M, M)


# --- types --------------------------------------------------------------------

def test_interval_validation():
    with pytest.raises(ValueError):
        Interval(0.0, 0.0)
    with pytest.raises(ValueError):
        Interval(0.0, 7.0)
    assert Interval(TWO_PI + 1.0, 0.5).start == pytest.approx(1.0)


def test_union_rejects_overlap_and_wrap():
    with pytest.raises(ValueError):
        IntervalUnion(np.array([0.0, 0.5]), np.array([1.0, 0.2]))
    with pytest.raises(ValueError):
        IntervalUnion(np.array([0.1, 6.0]), np.array([0.5, 0.5]))


def test_merged_joins_and_wraps():
    u = IntervalUnion.merged([0.0, 0.5, 2.0], [1.0, 1.0, 0.5])
    assert np.allclose(u.starts, [0.0, 2.0]) and np.allclose(u.lengths, [1.5, 0.5])
    # two arcs meeting across 2pi become one wrapping arc, not the full circle
    u = IntervalUnion.merged([0.0, TWO_PI - math.pi / 8], [math.pi / 8, math.pi / 8])
    assert len(u) == 1
    assert u.total_length == pytest.approx(math.pi / 4)
    assert IntervalUnion.merged([0.0, 3.0], [3.5, 3.5]).total_length == pytest.approx(TWO_PI)


def test_measure_validation():
    with pytest.raises(ValueError):
        CircleMeasure.piecewise(full_circle(), [-1.0])
    CircleMeasure.piecewise(full_circle(), [-1.0 + 0j], complex_ok=True)
    with pytest.raises(ValueError):
        CircleMeasure.empirical([0.0, 1.0], [0.2, 0.2], total_mass=1.0)


def test_measure_json_roundtrip():
    mu = CircleMeasure.piecewise(IntervalUnion(np.array([0.5, 2.0]), np.array([0.3, 0.4])), [1.0, 2.0])
    back = CircleMeasure.from_json(mu.to_json())
    assert np.array_equal(fourier_coeffs(mu, -5, 5).values, fourier_coeffs(back, -5, 5).values)


def test_window_json_and_errors():
    w = CoeffWindow(-2, 2, np.arange(5) + 1j)
    back = CoeffWindow.loads(w.dumps())
    assert (back.lo, back.hi) == (-2, 2) and np.array_equal(back.values, w.values)
    with pytest.raises(WindowError):
        w.get(3)
    with pytest.raises(WindowError):
        w.get(-3, 0)
    with pytest.raises(ValueError):
        CoeffWindow(0, 2, np.zeros(2))
    with pytest.raises(ValueError):
        CoeffWindow(0, 1, np.zeros(2), convention="function")


# --- fourier_coeffs -----------------------------------------------------------

def test_uniform_probability():
    w = fourier_coeffs(CircleMeasure.lebesgue(), -6, 6)
    assert w.get(0) == pytest.approx(1.0)
    assert np.max(np.abs(np.delete(w.values, 6))) < 1e-15


def test_unit_atom():
    assert np.allclose(atom_window(50).values, 1.0)


def test_half_circle_first_coefficient():
    mu = CircleMeasure.piecewise(IntervalUnion(np.array([0.0]), np.array([math.pi])), [1 / math.pi])
    c1 = fourier_coeffs(mu, 1, 1).get(1)
    ref = oracles.coeff_quad(lambda t: 1 / math.pi, 0.0, math.pi, 1)
    assert abs(c1) == pytest.approx(2 / math.pi, abs=1e-12)
    assert abs(c1 - ref) < 1e-10


def test_piecewise_matches_closed_form():
    rng = np.random.default_rng(3)
    s = np.sort(rng.uniform(0, 6, 5))
    s = s[np.r_[True, np.diff(s) > 0.3]]
    ln = np.full(s.size, 0.2)
    d = rng.uniform(0.1, 2.0, s.size)
    mu = CircleMeasure.piecewise(IntervalUnion(s, ln), d)
    ms = list(range(-40, 41))
    assert np.allclose(fourier_coeffs(mu, -40, 40).values, oracles.interval_coeffs(s, ln, d, ms),
                       atol=1e-13)


def test_empirical_matches_direct_sum():
    rng = np.random.default_rng(4)
    t = rng.uniform(0, TWO_PI, 300)
    mu = CircleMeasure.empirical(t)
    got = fourier_coeffs(mu, -30, 30).values
    assert np.allclose(got, oracles.exp_sum_direct(t, np.full(300, 1 / 300), range(-30, 31)), atol=1e-13)


def test_zero_measure_and_overflow():
    with pytest.raises(ValueError, match="zero measure"):
        fourier_coeffs(CircleMeasure.atoms([0.0], [0.0]), -1, 1)
    with pytest.raises(OverflowError):
        fourier_coeffs(CircleMeasure.lebesgue(), 0, 1 << 41)


def test_additivity_and_hermitian():
    a = CircleMeasure.atoms([0.3, 1.7], [0.5, 0.25])
    b = CircleMeasure.piecewise(IntervalUnion(np.array([2.0]), np.array([0.5])), [1.0])
    both = CircleMeasure.atoms([0.3, 1.7], [0.5, 0.25])
    wa, wb = fourier_coeffs(a, -20, 20), fourier_coeffs(b, -20, 20)
    s = (wa + wb).values
    assert np.allclose(s, wa.values + wb.values, rtol=0, atol=0)
    assert np.allclose(wb.values, np.conj(wb.values[::-1]), atol=1e-15)
    assert np.all(np.abs(wb.values) <= wb.get(0).real + 1e-15)
    assert np.array_equal(fourier_coeffs(both, -20, 20).values, wa.values)


# --- lp_norm ------------------------------------------------------------------

def test_lp_examples():
    assert lp_norm(atom_window(10), 2, (1, 4)) == pytest.approx(2.0)
    n = np.arange(-20, 21)
    w = CoeffWindow(-20, 20, 2.0 ** -np.abs(n))
    assert abs(lp_norm(w, 2) - math.sqrt(5 / 3)) < 1e-6
    assert lp_norm(fourier_coeffs(CircleMeasure.lebesgue(), -8, 8), 2, "negatives") == pytest.approx(0, abs=1e-15)


def test_lp_sides_and_zero_index():
    w = CoeffWindow(-2, 2, [1, 1, 5, 1, 1])
    assert lp_norm(w, 1, "negatives") == 2
    assert lp_norm(w, 1, "positives") == 2
    assert lp_norm(w, 1, "full") == 9
    assert lp_norm(w, math.inf) == 5
    with pytest.raises(WindowError, match="window insufficient"):
        lp_norm(w, 2, (0, 3))
    with pytest.raises(ValueError):
        lp_norm(w, 0.5)


@given(st.lists(st.floats(-5, 5), min_size=7, max_size=7),
       st.lists(st.floats(-5, 5), min_size=7, max_size=7), st.floats(1, 6))
@settings(max_examples=50, deadline=None)
def test_lp_triangle_and_monotone(a, b, p):
    wa, wb = CoeffWindow(-3, 3, a), CoeffWindow(-3, 3, b)
    assert lp_norm(wa + wb, p) <= lp_norm(wa, p) + lp_norm(wb, p) + 1e-9
    assert lp_norm(wa, p, (-1, 1)) <= lp_norm(wa, p) + 1e-12


# --- weighted_energy ----------------------------------------------------------

def test_energy_atom_half():
    N = 400
    part = weighted_energy(atom_window(N), 0.5, "two_sided")
    n = np.arange(1, N + 1)
    ref = 1 + 2 * np.cumsum(1 / (np.sqrt(n) + 1))
    assert np.allclose(part[1:], ref, rtol=1e-13)
    assert part[0] == 1.0
    # leading-order growth 4 sqrt(N); the log correction fades slowly
    big = weighted_energy(atom_window(10 ** 6), 0.5, "two_sided")
    assert big[-1] / (4 * math.sqrt(10 ** 6)) == pytest.approx(1, abs=0.01)


def test_energy_lebesgue_and_monotone():
    w = fourier_coeffs(CircleMeasure.lebesgue(), -64, 64)
    assert np.allclose(weighted_energy(w, 0.3, "anti_analytic"), 0, atol=1e-28)
    rng = np.random.default_rng(1)
    v = CoeffWindow(-50, 50, rng.normal(size=101) + 1j * rng.normal(size=101))
    for side in ("two_sided", "anti_analytic"):
        assert np.all(np.diff(weighted_energy(v, 0.7, side)) >= 0)
    assert weighted_energy(v, 0.7)[0] == pytest.approx(abs(v.get(0)) ** 2)
    with pytest.raises(ValueError):
        weighted_energy(v, 0.0)
    with pytest.raises(ValueError):
        weighted_energy(v, 1.2)


# --- wiener_average -----------------------------------------------------------

def test_wiener_examples():
    assert wiener_average(atom_window(30), 25) == pytest.approx(1.0)
    w = fourier_coeffs(CircleMeasure.lebesgue(), -10, 10)
    assert wiener_average(w, 10) == pytest.approx(1 / 21)
    two = fourier_coeffs(CircleMeasure.atoms([0.0, math.pi], [0.5, 0.5]), -1000, 1000)
    assert wiener_average(two, 1000) == pytest.approx(0.5, rel=0.01)
    with pytest.raises(WindowError):
        wiener_average(w, 11)


# --- pair ---------------------------------------------------------------------

def test_pair_atom_outside_bump():
    psi = SmoothBump(math.pi, 0.5)
    P = pair(atom_window(2048), psi, 2048)
    assert abs(P[-1]) < 1e-6


def test_pair_atom_at_centre():
    psi = SmoothBump(1.0, 0.7)
    P = pair(atom_window(512, pos=1.0), psi, 512)
    assert abs(P[-1] - psi(1.0)) < 1e-9
    assert psi(1.0) == pytest.approx(1.0)


def test_pair_zero_and_constant():
    psi = SmoothBump(2.0, 0.4)
    z = CoeffWindow(-64, 64, np.zeros(129))
    assert np.all(pair(z, psi, 64) == 0)
    rng = np.random.default_rng(2)
    s = CoeffWindow(-20, 20, rng.normal(size=41) + 0j)
    P = pair(s, SmoothBump.constant(), 20)
    assert np.allclose(P, s.get(0), atol=1e-12)


def test_pair_window_errors():
    psi = SmoothBump(2.0, 0.4)
    with pytest.raises(WindowError):
        pair(atom_window(10), psi, 11)
    with pytest.raises(WindowError):
        pair(atom_window(10), psi.window(5), 10)


# --- SmoothBump ---------------------------------------------------------------

def test_bump_coeffs_against_quadrature():
    psi = SmoothBump(1.3, 0.6, 3)
    for m in (0, 1, 5, -7, 20):
        ref = oracles.coeff_quad(psi, 1.3 - 0.6, 1.3 + 0.6, m)
        assert abs(psi.coeffs(np.array([m]))[0] - ref) < 1e-10


def test_bump_support_and_decay_bound():
    psi = SmoothBump(3.0, 0.5)
    t = np.linspace(0, TWO_PI, 2001)
    outside = np.abs(np.mod(t - 3.0 + math.pi, TWO_PI) - math.pi) > 0.5
    assert np.all(psi(t)[outside] == 0)
    M = 200
    tail = np.abs(psi.coeffs(np.arange(M + 1, 20000))).sum() * 2
    assert tail <= psi.decay_bound(M)
    with pytest.raises(ValueError):
        SmoothBump(0.0, 0.5, 1)


# --- verdicts -----------------------------------------------------------------

def test_dyadic_blocks():
    t = np.ones(15)
    assert dyadic_blocks(t).tolist() == [1, 2, 4, 8]
    assert dyadic_blocks(np.ones(14)).tolist() == [1, 2, 4]


def test_block_verdict_p_series():
    conv = partial_sum_blocks(np.r_[0.0, oracles.p_series(2.0, 4095)])
    div = partial_sum_blocks(np.r_[0.0, oracles.p_series(1.0, 4095)])
    assert block_verdict(conv) == "converging"
    assert block_verdict(div) == "diverging"
    assert block_verdict(conv[:3]) == "insufficient"
    assert block_verdict(np.array([1.0, 0.5, 0, 0, 0])) == "converging"
