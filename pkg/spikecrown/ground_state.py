#!/usr/bin/env python3
# coding=utf-8

"""
ground_state.py
Purpose: The radial ground state w of  w'' + (N-1)/r w' - w + f(w) = 0,
found by shooting on w(0), tabulated on [0, 20] and continued beyond
r_tail by its exponential tail.
"""

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from asyncblink import signal
from scipy.integrate import solve_ivp, quad
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import root
from scipy.special import kve, ive, gammaln

from spikecrown.errors import NumericalError, DomainError
from spikecrown.export import write_csv, write_json, read_csv, read_json
from spikecrown.nonlinearity import Nonlinearity

log = logging.getLogger(__name__)

R_START = 1e-4
R_MATCH = 6.0
R_TAIL = 12.0
R_MAX = 20.0
H_R = 0.005
W0_BRACKET = (0.1, 10.0)
FIT_WINDOW = (12.0, 18.0)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


class GroundStateError(NumericalError):
    pass


class NoGroundStateError(GroundStateError):
    pass


class ShootingIterationError(GroundStateError):
    pass


class DecayFitError(GroundStateError):
    pass


class IntegrationError(GroundStateError):
    pass


# tail law


def _phi(dimension_n, r):
    """
    Decaying solution of the linearised radial equation, normalised so
    that r^((N-1)/2) e^r phi(r) -> 1.
    """
    nu = 0.5 * (dimension_n - 2)
    return np.sqrt(2.0 / np.pi) * r ** (-nu) * kve(nu, r) * np.exp(-r)


def _log_phi(dimension_n, r):
    nu = 0.5 * (dimension_n - 2)
    return 0.5 * np.log(2.0 / np.pi) - nu * np.log(r) + np.log(kve(nu, r)) - r


def _dphi(dimension_n, r):
    nu = 0.5 * (dimension_n - 2)
    return -np.sqrt(2.0 / np.pi) * r ** (-nu) * kve(nu + 1.0, r) * np.exp(-r)


def tail_values(p, dimension_n, amplitude, r):
    """
    A*phi(r) with its first nonlinear correction -(A phi)^(p-1) / (p (p-2)).
    Returns (w, w') at r.
    """
    c = 1.0 / (p * (p - 2.0))
    linear = amplitude * _phi(dimension_n, r)
    w = linear - c * linear ** (p - 1.0)
    dw = amplitude * _dphi(dimension_n, r) * (1.0 - c * (p - 1.0) * linear ** (p - 2.0))
    return w, dw


def tail_log(p, dimension_n, amplitude, r):
    c = 1.0 / (p * (p - 2.0))
    log_linear = np.log(amplitude) + _log_phi(dimension_n, r)
    return log_linear + np.log1p(-c * np.exp((p - 2.0) * log_linear))


# shooting


def _rhs(nl):
    bend = nl.dimension_n - 1

    def rhs(r, y):
        return [y[1], -bend / r * y[1] + y[0] - nl.f(y[0])]

    return rhs


def _series_start(nl, w0, r0=R_START):
    curvature = (w0 - nl.f(w0)) / nl.dimension_n
    return [w0 + 0.5 * curvature * r0 ** 2, curvature * r0]


def _crossing(r, y):
    return y[0]


_crossing.terminal = True
_crossing.direction = -1


def _turning(r, y):
    return y[1]


_turning.terminal = True
_turning.direction = 1


def classify_shot(nl, w0, r_max=R_MAX):
    """
    "crossing" if w reaches zero (w0 too large), "diverging" if w turns
    back up while positive (w0 too small), "decaying" otherwise.
    """
    y0 = _series_start(nl, w0)
    if y0[1] >= 0:
        return "diverging"

    sol = solve_ivp(_rhs(nl), (R_START, r_max), y0, method="DOP853",
                    rtol=1e-11, atol=1e-14, events=(_crossing, _turning))

    if sol.t_events[0].size:
        return "crossing"
    if sol.t_events[1].size:
        return "diverging"
    return "decaying"


def _outward(nl, w0, r_end):
    return solve_ivp(_rhs(nl), (R_START, r_end), _series_start(nl, w0), method="DOP853",
                     rtol=1e-12, atol=1e-15, dense_output=True)


def _inward(nl, amplitude, r_end, r_from=R_MAX):
    start = tail_values(nl.p, nl.dimension_n, amplitude, r_from)
    return solve_ivp(_rhs(nl), (r_from, r_end), list(start), method="DOP853",
                     rtol=1e-12, atol=1e-30, dense_output=True)


def _bisect(nl, tol, max_iter):
    lo, hi = W0_BRACKET

    if classify_shot(nl, lo) != "diverging" or classify_shot(nl, hi) != "crossing":
        raise NoGroundStateError("no ground state bracket in w(0) in [{}, {}] for p={}, N={}"
                                 .format(lo, hi, nl.p, nl.dimension_n))

    for iteration in range(max_iter):
        if hi - lo < tol:
            return lo, hi

        mid = 0.5 * (lo + hi)
        kind = classify_shot(nl, mid)
        signal("shot").send(nl, w0=mid, kind=kind, iteration=iteration)

        if kind == "crossing":
            hi = mid
        elif kind == "diverging":
            lo = mid
        else:
            return mid, mid

    raise ShootingIterationError("bisection on w(0) did not reach width {} in {} shots".format(tol, max_iter))


def _polish(nl, w0, r_match=R_MATCH):
    """
    Two-sided shooting: match the outward shot from the origin with the
    inward shot from R_MAX in (w, w') at r_match.
    """
    guess = _outward(nl, w0, r_match).y[0, -1] / _phi(nl.dimension_n, r_match)

    def mismatch(x):
        out = _outward(nl, x[0], r_match).y[:, -1]
        inward = _inward(nl, x[1], r_match).y[:, -1]
        scale = abs(out[0])
        return [(out[0] - inward[0]) / scale, (out[1] - inward[1]) / scale]

    result = root(mismatch, [w0, guess], method="hybr", options={"xtol": 1e-14})
    defect = np.max(np.abs(mismatch(result.x)))
    if not np.all(np.isfinite(result.x)) or defect > 1e-9:
        raise ShootingIterationError("two-sided match failed at r={} (defect {:.3e})".format(r_match, defect))

    return float(result.x[0]), float(result.x[1])


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """
    Tabulated ground state. Values beyond r_tail come from the tail law.
    """

    p: float
    dimension_n: int
    r_grid: np.ndarray
    w_values: np.ndarray
    w_prime_values: np.ndarray
    w0: float
    decay_A: float
    r_tail: float = R_TAIL

    @cached_property
    def nonlinearity(self):
        return Nonlinearity(self.p, self.dimension_n, strict=False)

    @cached_property
    def h_r(self):
        return float(self.r_grid[1] - self.r_grid[0])

    @cached_property
    def w_second_values(self):
        nl = self.nonlinearity
        r = self.r_grid
        second = np.empty_like(r)
        second[0] = (self.w0 - nl.f(self.w0)) / self.dimension_n
        second[1:] = (-(self.dimension_n - 1) / r[1:] * self.w_prime_values[1:]
                      + self.w_values[1:] - nl.f(self.w_values[1:]))
        return second

    @cached_property
    def _w_spline(self):
        return CubicHermiteSpline(self.r_grid, self.w_values, self.w_prime_values)

    @cached_property
    def _w_prime_spline(self):
        return CubicHermiteSpline(self.r_grid, self.w_prime_values, self.w_second_values)

    def tail(self, r):
        return tail_values(self.p, self.dimension_n, self.decay_A, r)

    def ode_residual(self):
        """
        Sup norm of the radial equation at the midpoints of the table.
        """
        r = 0.5 * (self.r_grid[1:] + self.r_grid[:-1])
        w = self._w_spline(r)
        dw = self._w_prime_spline(r)
        d2w = self._w_prime_spline.derivative()(r)
        residual = d2w + (self.dimension_n - 1) / r * dw - w + self.nonlinearity.f(w)
        return float(np.max(np.abs(residual)))

    def __str__(self):
        return "RadialProfile: p={}, N={}, w0={:.12g}, A={:.12g}".format(
            self.p, self.dimension_n, self.w0, self.decay_A)


def shoot(nl, tol=1e-10, h_r=H_R, max_iter=200):
    """
    Find the ground state of nl by bisection on w(0), polish the shot by
    two-sided matching and tabulate it on [0, 20] with spacing h_r.
    """
    lo, hi = _bisect(nl, tol, max_iter)
    w0_bisected = 0.5 * (lo + hi)
    log.debug("bisection bracket [{!r}, {!r}]".format(lo, hi))

    w0, amplitude = _polish(nl, w0_bisected)
    log.info("ground state p={}, N={}: w0={:.15g}, A={:.15g}".format(nl.p, nl.dimension_n, w0, amplitude))

    outward = _outward(nl, w0, R_MATCH)
    inward = _inward(nl, amplitude, R_MATCH)

    count = int(round(R_MAX / h_r))
    r_grid = np.linspace(0.0, R_MAX, count + 1)
    values = np.empty((2, r_grid.size))

    core = r_grid < R_START
    series = (w0 - nl.f(w0)) / nl.dimension_n
    values[0, core] = w0 + 0.5 * series * r_grid[core] ** 2
    values[1, core] = series * r_grid[core]

    middle = (r_grid >= R_START) & (r_grid <= R_MATCH)
    values[:, middle] = outward.sol(r_grid[middle])
    outer = r_grid > R_MATCH
    values[:, outer] = inward.sol(r_grid[outer])

    w_values, w_prime_values = values
    w_values[0] = w0
    w_prime_values[0] = 0.0

    if np.any(w_values <= 0) or np.any(np.diff(w_values) >= 0):
        raise ShootingIterationError("tabulated profile is not positive and strictly decreasing")
    if abs(w_values[-1]) >= 1e-6:
        raise ShootingIterationError("profile has not decayed at r={}: w={:.3e}".format(R_MAX, w_values[-1]))

    profile = RadialProfile(nl.p, nl.dimension_n, r_grid, w_values, w_prime_values, w0, amplitude)
    _check_tail_continuity(profile)
    return profile


def _check_tail_continuity(profile):
    table = float(profile._w_spline(profile.r_tail))
    tail, _ = profile.tail(profile.r_tail)
    defect = abs(table - tail) / table

    if defect > 1e-4:
        raise ShootingIterationError("table and tail law disagree at r_tail={} ({:.3e} relative)"
                                     .format(profile.r_tail, defect))
    if defect > 1e-6:
        log.warning("tail continuity defect {:.3e} at r_tail={} for p={}".format(defect, profile.r_tail, profile.p))
    return defect


# evaluation


def _radii(r):
    radii = np.asarray(r, dtype=float)
    if np.any(~np.isfinite(radii)) or np.any(radii < 0):
        raise DomainError("profile evaluated at a negative or non-finite radius")
    return radii


def _piecewise(profile, r, inner, outer):
    radii = _radii(r)
    flat = np.atleast_1d(radii)
    out = np.empty_like(flat)
    near = flat <= profile.r_tail
    out[near] = inner(flat[near])
    if np.any(~near):
        out[~near] = outer(flat[~near])
    if np.ndim(r) == 0:
        return float(out[0])
    return out.reshape(radii.shape)


def eval_w(profile, r):
    return _piecewise(profile, r, profile._w_spline, lambda x: profile.tail(x)[0])


def eval_w_prime(profile, r):
    return _piecewise(profile, r, profile._w_prime_spline, lambda x: profile.tail(x)[1])


def eval_log_w(profile, r):
    """
    log w(r) without underflow for any r >= 0.
    """
    return _piecewise(profile, r, lambda x: np.log(profile._w_spline(x)),
                      lambda x: tail_log(profile.p, profile.dimension_n, profile.decay_A, x))


def eval_log_w_prime(profile, r):
    """
    w'(r) / w(r), finite for any r >= 0.
    """
    def tail_slope(x):
        nu = 0.5 * (profile.dimension_n - 2)
        c = 1.0 / (profile.p * (profile.p - 2.0))
        power = np.exp((profile.p - 2.0) * (np.log(profile.decay_A) + _log_phi(profile.dimension_n, x)))
        return -kve(nu + 1.0, x) / kve(nu, x) * (1.0 - c * (profile.p - 1.0) * power) / (1.0 - c * power)

    return _piecewise(profile, r, lambda x: profile._w_prime_spline(x) / profile._w_spline(x), tail_slope)


def decay_constant(profile, window=FIT_WINDOW):
    """
    Least-squares plateau of w(r) r^((N-1)/2) e^r over the window, with the
    first nonlinear tail correction removed.
    """
    r = profile.r_grid
    mask = (r >= window[0]) & (r <= window[1])
    w = profile.w_values[mask]
    c = 1.0 / (profile.p * (profile.p - 2.0))

    plateau = (w + c * w ** (profile.p - 1.0)) / _phi(profile.dimension_n, r[mask])
    amplitude = float(np.mean(plateau))
    spread = float((plateau.max() - plateau.min()) / amplitude)

    if spread > 1e-2:
        raise DecayFitError("decay plateau spread {:.3e} over r in {}: unconverged shot".format(spread, window))
    if spread > 1e-3:
        log.warning("decay plateau spread {:.3e} exceeds 1e-3".format(spread))
    return amplitude


def _sphere_area(dimension_n):
    return float(2.0 * np.exp(0.5 * dimension_n * np.log(np.pi) - gammaln(0.5 * dimension_n)))


def _log_sphere_mean_exp(dimension_n, r):
    """
    log of the mean of e^(z_1) over the sphere |z| = r.
    """
    if dimension_n == 1:
        return r + np.log1p(np.exp(-2.0 * r)) - np.log(2.0)
    nu = 0.5 * dimension_n - 1.0
    small = r < 1e-12
    safe = np.where(small, 1.0, r)
    value = gammaln(0.5 * dimension_n) + nu * np.log(2.0 / safe) + np.log(ive(nu, safe)) + safe
    return np.where(small, 0.0, value)


def _core_integral(profile, integrand):
    """
    Four-point Gauss-Legendre on every table interval of [0, r_tail].
    """
    r = profile.r_grid[profile.r_grid <= profile.r_tail + 1e-12]
    left, right = r[:-1], r[1:]
    half = 0.5 * (right - left)
    nodes = (0.5 * (left + right))[:, None] + half[:, None] * _GL_NODES[None, :]
    return float(np.sum(half[:, None] * _GL_WEIGHTS[None, :] * integrand(nodes)))


def _tail_integral(profile, integrand):
    result = quad(integrand, profile.r_tail, np.inf, epsabs=0.0, epsrel=1e-11, limit=200, full_output=1)
    if len(result) == 4:
        raise IntegrationError("tail quadrature did not converge: {}".format(result[3]))
    return result[0]


def normalization_constants(profile):
    """
    Returns (e1, gamma): e1 = 1/2 int (|grad w|^2 + w^2) - int F(w) over R^N,
    the energy of one spike, and
    gamma = int f(w) e^(z_1) dz.
    """
    nl = profile.nonlinearity
    n = profile.dimension_n
    area = _sphere_area(n)

    def energy_density(r, w, dw):
        return (0.5 * (dw ** 2 + w ** 2) - nl.F(w)) * r ** (n - 1)

    def gamma_density_log(r, log_w):
        return (nl.p - 1.0) * log_w + _log_sphere_mean_exp(n, r) + (n - 1) * np.log(np.maximum(r, 1e-300))

    def core_energy(r):
        return energy_density(r, profile._w_spline(r), profile._w_prime_spline(r))

    def core_gamma(r):
        w = profile._w_spline(r)
        weight = np.exp(_log_sphere_mean_exp(n, r))
        return nl.f(w) * weight * r ** (n - 1)

    def tail_energy(r):
        w, dw = profile.tail(r)
        return energy_density(r, w, dw)

    def tail_gamma(r):
        log_w = tail_log(profile.p, n, profile.decay_A, r)
        return float(np.exp(gamma_density_log(r, log_w)))

    e1 = area * (_core_integral(profile, core_energy) + _tail_integral(profile, tail_energy))
    gamma = area * (_core_integral(profile, core_gamma) + _tail_integral(profile, tail_gamma))

    if not gamma > 0:
        raise IntegrationError("gamma={} is not positive".format(gamma))
    return e1, gamma


# profile files


def profile_header(profile):
    return {"p": profile.p, "N": profile.dimension_n, "w0": profile.w0, "A": profile.decay_A,
            "r_tail": profile.r_tail}


def save_profile(profile, stem, config_hash=None):
    """
    Write <stem>.csv (r, w, w_prime) and <stem>.json (header).
    """
    rows = zip(profile.r_grid, profile.w_values, profile.w_prime_values)
    write_csv(stem + ".csv", ["r", "w", "w_prime"], rows)
    write_json(stem + ".json", profile_header(profile), config_hash=config_hash)
    return stem + ".csv", stem + ".json"


def load_profile(stem):
    header = read_json(stem + ".json")
    _, data = read_csv(stem + ".csv")
    return RadialProfile(float(header["p"]), int(header["N"]), data[:, 0].copy(), data[:, 1].copy(),
                         data[:, 2].copy(), float(header["w0"]), float(header["A"]), float(header["r_tail"]))
