#!/usr/bin/env python3
# coding=utf-8

import numpy as np
import pytest
import mpmath
from scipy.integrate import solve_bvp
from scipy.special import kv

from spikecrown.errors import DomainError
from spikecrown.ground_state import (classify_shot, decay_constant, eval_log_w,
                                     eval_log_w_prime, eval_w, eval_w_prime, load_profile,
                                     normalization_constants, save_profile, shoot, tail_values)
from spikecrown.nonlinearity import Nonlinearity


@pytest.fixture(scope="module")
def cubic_line():
    return shoot(Nonlinearity(3, 1))


@pytest.fixture(scope="module")
def quartic_line():
    return shoot(Nonlinearity(4, 1))


def sech(x):
    return 1.0 / np.cosh(x)


def test_cubic_line_closed_form(cubic_line):
    assert cubic_line.w0 == pytest.approx(1.5, abs=1e-9)
    r = np.linspace(0.0, 15.0, 3001)
    exact = 1.5 * sech(0.5 * r) ** 2
    assert np.max(np.abs(eval_w(cubic_line, r) - exact)) < 1e-6
    assert eval_w(cubic_line, 2.0) == pytest.approx(1.5 / np.cosh(1.0) ** 2, abs=1e-7)


def test_quartic_line_closed_form(quartic_line):
    assert quartic_line.w0 == pytest.approx(np.sqrt(2.0), abs=1e-9)
    r = np.linspace(0.0, 15.0, 3001)
    assert np.max(np.abs(eval_w(quartic_line, r) - np.sqrt(2.0) * sech(r))) < 1e-6


def test_profile_shape(cubic_plane):
    assert np.all(cubic_plane.w_values > 0)
    assert np.all(np.diff(cubic_plane.w_values) < 0)
    assert np.all(cubic_plane.w_prime_values <= 0)
    assert cubic_plane.w_prime_values[0] == 0.0
    assert abs(cubic_plane.w_values[-1]) < 1e-6
    assert cubic_plane.ode_residual() < 1e-6


def collocation_ground_state(p, dimension_n, r_max=20.0, nodes=4000):
    """
    Ground state as a boundary-value problem on [0, r_max]: w'(0) = 0 and the
    linear tail w'/w = -K_1/K_0 at r_max, solved by damped-Newton collocation.
    """
    singular = np.array([[0.0, 0.0], [0.0, -(dimension_n - 1.0)]])
    tail_slope = kv(1, r_max) / kv(0, r_max)

    def rhs(r, y):
        return np.vstack([y[1], y[0] - np.abs(y[0]) ** (p - 2) * y[0]])

    def bc(ya, yb):
        return np.array([ya[1], yb[1] + tail_slope * yb[0]])

    r = np.linspace(0.0, r_max, nodes)
    guess = np.vstack([2.2 / np.cosh(r), -2.2 * np.tanh(r) / np.cosh(r)])
    solution = solve_bvp(rhs, bc, r, guess, S=singular, tol=1e-8, max_nodes=200000)
    assert solution.status == 0, solution.message
    return solution.sol


def test_planar_quartic_matches_townes_amplitude(quartic_plane):
    # w'' + w'/r - w + w^3 = 0 has w(0) = 2.20620086...
    assert quartic_plane.w0 == pytest.approx(2.2062008, abs=1e-5)


def test_planar_quartic_collocation_oracle(quartic_plane):
    sol = collocation_ground_state(4, 2)
    assert quartic_plane.w0 == pytest.approx(float(sol(0.0)[0]), abs=1e-4)

    r = np.linspace(0.5, 11.0, 22)
    np.testing.assert_allclose(eval_w(quartic_plane, r), sol(r)[0], atol=1e-5)

    # w ~ A sqrt(2/pi) K_0(r) once w^3 is negligible
    amplitude = float(sol(10.0)[0]) / (np.sqrt(2.0 / np.pi) * kv(0, 10.0))
    assert decay_constant(quartic_plane) == pytest.approx(amplitude, rel=1e-3)
    assert quartic_plane.decay_A == pytest.approx(amplitude, rel=1e-3)


def test_origin_values(cubic_plane):
    assert eval_w(cubic_plane, 0.0) == cubic_plane.w0
    assert eval_w_prime(cubic_plane, 0.0) == 0.0


def test_decay_constant_closed_forms(cubic_line, quartic_line):
    assert decay_constant(cubic_line) == pytest.approx(6.0, rel=1e-5)
    assert decay_constant(quartic_line) == pytest.approx(2.0 * np.sqrt(2.0), rel=1e-5)
    assert cubic_line.decay_A == pytest.approx(6.0, rel=1e-6)


def test_decay_constant_agrees_with_polish(cubic_plane):
    assert decay_constant(cubic_plane) == pytest.approx(cubic_plane.decay_A, rel=1e-3)


def test_asymptotic_slope(cubic_line, cubic_plane):
    r = np.linspace(15.0, 20.0, 51)
    ratio = eval_w_prime(cubic_line, r) / eval_w(cubic_line, r)
    assert np.all(np.abs(ratio + 1.0) < 5e-3)

    far = eval_w_prime(cubic_plane, 30.0) / eval_w(cubic_plane, 30.0)
    assert -1.1 <= far <= -0.9


def test_tail_continuity(cubic_plane):
    r_tail = cubic_plane.r_tail
    below = eval_w(cubic_plane, r_tail)
    above = eval_w(cubic_plane, r_tail * (1 + 1e-12))
    assert above == pytest.approx(below, rel=1e-4)


def test_log_evaluation(cubic_plane):
    r = np.array([0.0, 1.0, 5.0, 11.0, 15.0, 19.0])
    np.testing.assert_allclose(eval_log_w(cubic_plane, r), np.log(eval_w(cubic_plane, r)), rtol=1e-12, atol=1e-12)
    # far beyond the double range of w itself
    far = eval_log_w(cubic_plane, 900.0)
    assert np.isfinite(far)
    assert far == pytest.approx(np.log(cubic_plane.decay_A) - 900.0 - 0.5 * np.log(900.0), rel=1e-6)


def test_log_slope(cubic_plane):
    r = np.array([0.5, 4.0, 11.0, 13.0, 18.0])
    expected = eval_w_prime(cubic_plane, r) / eval_w(cubic_plane, r)
    np.testing.assert_allclose(eval_log_w_prime(cubic_plane, r), expected, rtol=1e-8)
    assert eval_log_w_prime(cubic_plane, 600.0) == pytest.approx(-1.0 - 0.5 / 600.0, rel=1e-5)


def test_tail_formula_line_exact():
    # 6 e^-r - 12 e^-2r is 1.5 sech^2(r/2) to O(e^-3r)
    r = 14.0
    w, dw = tail_values(3.0, 1, 6.0, r)
    assert w == pytest.approx(1.5 * sech(0.5 * r) ** 2, rel=1e-10)
    assert dw == pytest.approx(-1.5 * sech(0.5 * r) ** 2 * np.tanh(0.5 * r), rel=1e-10)


def test_negative_radius(cubic_plane):
    with pytest.raises(DomainError):
        eval_w(cubic_plane, -0.1)
    with pytest.raises(DomainError):
        eval_w_prime(cubic_plane, [1.0, np.nan])


def test_shot_classes():
    nl = Nonlinearity(3, 1)
    assert classify_shot(nl, 3.0) == "crossing"
    assert classify_shot(nl, 0.5) == "diverging"


def test_normalization_line_oracle(cubic_line):
    mpmath.mp.dps = 30

    def w(z):
        return mpmath.mpf(1.5) * mpmath.sech(z / 2) ** 2

    def dw(z):
        return -mpmath.mpf(1.5) * mpmath.sech(z / 2) ** 2 * mpmath.tanh(z / 2)

    gamma_exact = mpmath.quad(lambda z: w(z) ** 2 * mpmath.exp(z), [-mpmath.inf, 0, mpmath.inf])
    e1_exact = mpmath.quad(lambda z: (dw(z) ** 2 + w(z) ** 2) / 2 - w(z) ** 3 / 3, [-mpmath.inf, 0, mpmath.inf])

    e1, gamma = normalization_constants(cubic_line)
    assert gamma == pytest.approx(float(gamma_exact), rel=1e-6)
    assert e1 == pytest.approx(float(e1_exact), rel=1e-6)
    assert gamma > 0


def test_normalization_positive(cubic_plane):
    e1, gamma = normalization_constants(cubic_plane)
    assert gamma > 0
    assert e1 > 0


@pytest.mark.slow
def test_normalization_self_convergence():
    coarse = shoot(Nonlinearity(4, 2))
    fine = shoot(Nonlinearity(4, 2), h_r=0.0025)
    np.testing.assert_allclose(normalization_constants(fine), normalization_constants(coarse), rtol=1e-5)
    assert fine.w0 == pytest.approx(coarse.w0, rel=1e-9)


def test_profile_round_trip(tmp_path, cubic_plane):
    stem = str(tmp_path / "profile")
    save_profile(cubic_plane, stem, config_hash="abc")
    loaded = load_profile(stem)

    assert loaded.w0 == cubic_plane.w0
    assert loaded.decay_A == cubic_plane.decay_A
    assert np.array_equal(loaded.r_grid, cubic_plane.r_grid)
    assert np.array_equal(loaded.w_values, cubic_plane.w_values)
    assert np.array_equal(loaded.w_prime_values, cubic_plane.w_prime_values)
    assert eval_w(loaded, 3.7) == eval_w(cubic_plane, 3.7)
