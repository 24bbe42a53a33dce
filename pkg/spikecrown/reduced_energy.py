#!/usr/bin/env python3
# coding=utf-8

"""
reduced_energy.py
Purpose: The reduced energy of a k-spike configuration,

    S = 1/2 sum_i e^(-psi(P_i)/eps) - sum_(i<j) (-1)^(i+j) w(|P_i - P_j|/eps),

evaluated in signed log space, its gradient, and its minimisation over the
configuration neighbourhood U_eta of a crown.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from asyncblink import signal
from scipy.special import logsumexp

from spikecrown.errors import ConfigError, NumericalError, DomainError
from spikecrown.export import write_csv
from spikecrown.geometry import Circle, NonUniqueProjectionError, inner_parallel_curve, project_to_curve, \
    reflected_distance
from spikecrown.ground_state import eval_log_w, eval_log_w_prime
from spikecrown.packing import Membership, SpikeConfiguration
from spikecrown.pde import solve_projection, interpolate_field

log = logging.getLogger(__name__)

FORMS = ("leading", "psi_numeric", "exponential")
CANCELLATION = 1e-12


class ProjectionAccuracyError(NumericalError):
    pass


class BoundaryTrappedError(NumericalError):
    pass


@dataclass(frozen=True, eq=False)
class ReducedEnergyModel:
    """
    Everything the reduced energy of one epsilon needs. grid is required
    for the psi_numeric form and must resolve eps/4.
    """

    dom: object
    profile: object
    epsilon: float
    delta: float
    eta: float
    form: str = "leading"
    grid: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.form not in FORMS:
            raise ConfigError("unknown energy form {!r}, expected one of {}".format(self.form, FORMS))
        if not self.epsilon > 0 or self.epsilon > self.delta / 5 * (1 + 1e-12):
            raise ConfigError("eps={} must lie in (0, delta/5={:.6g}]".format(self.epsilon, self.delta / 5))
        if not 0 < self.eta < self.delta / 2:
            raise ConfigError("eta={} must lie in (0, delta/2={:.6g})".format(self.eta, self.delta / 2))
        if self.form == "psi_numeric":
            if self.grid is None:
                raise ConfigError("psi_numeric needs a finite-difference grid")
            if self.grid.h > self.epsilon / 4 * (1 + 1e-12):
                raise ConfigError("grid spacing {} exceeds eps/4={}".format(self.grid.h, self.epsilon / 4))

    @cached_property
    def gamma_delta(self):
        return inner_parallel_curve(self.dom.boundary, self.delta)

    @property
    def scale_log(self):
        """
        log of the factor e^(2 delta/eps) that keeps the energy O(1).
        """
        return 2.0 * self.delta / self.epsilon


def _distance(model, points):
    return -np.atleast_1d(model.dom.signed_distance(np.atleast_2d(points)))


def psi_eps(model, P):
    """
    The boundary exponent psi_eps(P): 2 d(P) for the closed forms, and
    -eps log u(P) with u the boundary correction of the projected spike for
    psi_numeric.
    """
    P = np.asarray(P, dtype=float)
    d = float(_distance(model, P)[0])
    if d < model.eta:
        raise DomainError("spike at {} is {:.3g} from the boundary, closer than eta={}".format(P.tolist(), d, model.eta))

    if model.form != "psi_numeric":
        return 2.0 * d
    return psi_field(model, P, P)


def psi_field(model, P, x):
    """
    psi_{eps,P}(x) = -eps log(w(|x - P|/eps) - w_{eps,P}(x)) from the
    finite-difference projection; tends to the reflected distance.
    """
    if model.grid is None:
        raise ConfigError("psi_field needs a finite-difference grid")
    return psi_from_grid(model.grid, model.profile, model.epsilon, P, x)


def psi_from_grid(grid, profile, epsilon, P, x=None):
    """
    -eps log u(x) for the boundary correction u of the spike at P; x
    defaults to P.
    """
    x = P if x is None else x
    projected = solve_projection(grid, profile, epsilon, P)
    with np.errstate(invalid="ignore", divide="ignore"):
        value = interpolate_field(grid, projected.correction, x, log_space=True)
    if not value > 0:
        raise ProjectionAccuracyError("boundary correction near {} is not positive (grid too coarse for eps={})"
                                      .format(np.asarray(x).tolist(), epsilon))
    return -epsilon * float(np.log(value))


def psi_limit(model, P, x):
    return reflected_distance(model.dom, x, P)


def _pair_indices(k):
    i, j = np.triu_indices(k, 1)
    return i, j, np.where((i + j) % 2 == 0, 1.0, -1.0)


@dataclass
class EnergyBreakdown:
    """
    Signed log-space pieces of S. parity[n] = (-1)^(i+j) of pair n; pairs
    with parity -1 are the repulsive (adjacent-type) terms entering S with +.
    """

    log_boundary: np.ndarray
    pairs: np.ndarray
    parity: np.ndarray
    log_pairs: np.ndarray
    log_positive: float
    log_negative: float
    sign: int
    cancellation: bool = False

    @property
    def log_repulsive(self):
        return float(logsumexp(self.log_pairs[self.parity < 0])) if np.any(self.parity < 0) else -np.inf

    @property
    def log_attractive(self):
        return float(logsumexp(self.log_pairs[self.parity > 0])) if np.any(self.parity > 0) else -np.inf

    def to_data(self):
        return {"log_boundary": self.log_boundary.tolist(), "pairs": self.pairs.tolist(),
                "parity": self.parity.tolist(), "log_pairs": self.log_pairs.tolist(),
                "log_repulsive": self.log_repulsive, "log_attractive": self.log_attractive,
                "sign": self.sign, "cancellation": self.cancellation}


def _log_terms(model, points):
    eps = model.epsilon
    k = len(points)
    if model.form == "exponential":
        log_boundary = -2.0 * _distance(model, points) / eps
    else:
        psi = np.array([psi_eps(model, P) for P in points])
        log_boundary = np.log(0.5) - psi / eps

    i, j, parity = _pair_indices(k)
    r = np.hypot(*(points[i] - points[j]).T) / eps
    if model.form == "exponential":
        log_pairs = -r
    else:
        log_pairs = eval_log_w(model.profile, r) if r.size else np.zeros(0)
    return log_boundary, np.column_stack([i, j]), parity, np.atleast_1d(log_pairs)


def evaluate_M(model, config, check_membership=True):
    """
    Returns (log|S|, breakdown); breakdown.sign carries the sign of S.
    """
    if check_membership:
        membership = configuration_set_membership(model, config)
        if not membership:
            raise DomainError("configuration is outside U_eta: {}".format(membership.failures))

    log_boundary, pairs, parity, log_pairs = _log_terms(model, config.points)
    positive = np.concatenate([log_boundary, log_pairs[parity < 0]])
    negative = log_pairs[parity > 0]

    log_pos = float(logsumexp(positive))
    log_neg = float(logsumexp(negative)) if negative.size else -np.inf
    top = max(log_pos, log_neg)
    gap = abs(log_pos - log_neg)
    ratio = np.exp(-gap)
    cancellation = bool(1.0 - ratio < CANCELLATION)
    if cancellation:
        log.warning("positive and negative parts of the reduced energy agree to {:.1e}".format(1.0 - ratio))

    log_value = top + np.log1p(-ratio) if ratio < 1.0 else -np.inf
    sign = 1 if log_pos >= log_neg else -1
    breakdown = EnergyBreakdown(log_boundary, pairs, parity, log_pairs, log_pos, log_neg, sign, cancellation)
    return float(log_value), breakdown


def scaled_energy(model, config, check_membership=False):
    """
    e^(2 delta/eps) S.
    """
    log_value, breakdown = evaluate_M(model, config, check_membership)
    return breakdown.sign * float(np.exp(log_value + model.scale_log))


def _scaled_at(model, x):
    return scaled_energy(model, SpikeConfiguration(x.reshape(-1, 2), strict=False))


def _central(model, x, step):
    gradient = np.empty_like(x)
    for n in range(x.size):
        e = np.zeros_like(x)
        e[n] = step
        gradient[n] = (_scaled_at(model, x + e) - _scaled_at(model, x - e)) / (2.0 * step)
    return gradient


def _analytic(model, points):
    eps = model.epsilon
    k = len(points)
    curve = model.dom.boundary
    t = curve.project_points(points)
    grad_d = -np.atleast_2d(curve.normal(t))
    if isinstance(curve, Circle):
        offset = points - curve.center
        grad_d = -offset / np.hypot(*offset.T)[:, None]

    d = _distance(model, points)
    if model.form == "exponential":
        boundary = np.exp(-2.0 * d / eps + model.scale_log) * (-2.0 / eps)
    else:
        boundary = 0.5 * np.exp(-2.0 * d / eps + model.scale_log) * (-2.0 / eps)
    gradient = boundary[:, None] * grad_d

    i, j, parity = _pair_indices(k)
    diff = points[i] - points[j]
    r = np.hypot(*diff.T)
    rho = r / eps
    if model.form == "exponential":
        log_value, slope = -rho, -np.ones_like(rho)
    else:
        log_value, slope = eval_log_w(model.profile, rho), eval_log_w_prime(model.profile, rho)
    # d/dP_i of -parity * value(|P_i - P_j|/eps)
    pull = (-parity * np.exp(log_value + model.scale_log) * slope / eps)[:, None] * diff / r[:, None]
    np.add.at(gradient, i, pull)
    np.add.at(gradient, j, -pull)
    return gradient.ravel()


def gradient_M(model, config, method="central"):
    """
    Gradient of e^(2 delta/eps) S in the 2k coordinates (x_1, y_1, x_2, ...).
    method: central (step max(1e-7, 1e-5 eps)), richardson, or analytic
    (closed forms only; psi_numeric falls back to central).
    """
    x = config.points.ravel().astype(float)
    step = max(1e-7, 1e-5 * model.epsilon)

    if method == "analytic":
        if model.form == "psi_numeric":
            log.debug("no analytic gradient for psi_numeric, using central differences")
            return _central(model, x, step)
        return _analytic(model, config.points)
    if method == "richardson":
        coarse = _central(model, x, 2.0 * step)
        fine = _central(model, x, step)
        return (4.0 * fine - coarse) / 3.0
    if method == "central":
        return _central(model, x, step)
    raise ConfigError("unknown gradient method {!r}".format(method))


def configuration_set_membership(model, config):
    """
    U_eta: delta - eta < d(P_i) < delta + eta, projections onto gamma_delta
    in strictly increasing cyclic order, and |P_i - P_j| > 2 delta - eta.
    """
    d = _distance(model, config.points)
    failures = []
    if np.any(np.abs(d - model.delta) >= model.eta):
        failures.append("distance")

    k = config.k
    separation = np.inf
    if k > 1:
        i, j, _ = _pair_indices(k)
        separation = float(np.min(np.hypot(*(config.points[i] - config.points[j]).T)))
        if separation <= 2.0 * model.delta - model.eta:
            failures.append("chord")

    try:
        params = np.array([project_to_curve(model.gamma_delta, P)[0] for P in config.points])
    except NonUniqueProjectionError:
        params = np.full(k, np.nan)
        failures.append("order")
    else:
        steps = np.mod(np.diff(np.append(params, params[0])), 1.0)
        if k > 1 and (np.any(steps < 1e-12) or abs(np.sum(steps) - 1.0) > 1e-9):
            failures.append("order")

    return Membership(failures, min_distance=float(np.min(d)), max_distance=float(np.max(d)),
                      min_separation=separation, params=params.tolist())


# minimisation


TRACE_HEADER = ["iter", "log_M", "grad_norm", "min_chord", "min_dist"]


class DescentTrace:
    """
    Iterate history of minimize_in_U and the location checks on its result.
    """

    def __init__(self):
        self.rows = []
        self.stop_reason = None
        self.checks = {}

    def record(self, iteration, log_m, grad_norm, config, model):
        d = _distance(model, config.points)
        self.rows.append((iteration, log_m, grad_norm, float(np.min(config.chords())), float(np.min(d))))

    @property
    def iterations(self):
        return len(self.rows) - 1

    def to_rows(self):
        return TRACE_HEADER, list(self.rows)

    def write(self, path):
        return write_csv(path, TRACE_HEADER, self.rows)


def _inside(model, x):
    return bool(configuration_set_membership(model, SpikeConfiguration(x.reshape(-1, 2), strict=False)))


def minimize_in_U(model, init, gtol=1e-9, max_iter=500, gradient="analytic", max_halvings=30):
    """
    Quasi-Newton descent of e^(2 delta/eps) S from init, staying in U_eta by
    halving any step that leaves it. Returns (config, log M, trace).
    """
    if not configuration_set_membership(model, init):
        raise DomainError("initial configuration is outside U_eta")

    def grad(x):
        return gradient_M(model, SpikeConfiguration(x.reshape(-1, 2), strict=False), gradient)

    x = init.points.ravel().astype(float)
    energy = _scaled_at(model, x)
    g = grad(x)
    inverse_hessian = None
    trace = DescentTrace()
    trace.record(0, float(np.log(abs(energy))) - model.scale_log, float(np.linalg.norm(g)), init, model)

    for iteration in range(1, max_iter + 1):
        grad_norm = float(np.linalg.norm(g))
        if grad_norm < gtol:
            trace.stop_reason = "gradient"
            break

        if inverse_hessian is None:
            direction = -g * (0.1 * model.epsilon / grad_norm)
        else:
            direction = -inverse_hessian @ g
            if direction @ g >= 0:
                inverse_hessian = None
                direction = -g * (0.1 * model.epsilon / grad_norm)

        slope = float(direction @ g)
        alpha = 1.0
        accepted = False
        rejected = 0
        for _ in range(max_halvings):
            trial = x + alpha * direction
            if not _inside(model, trial):
                rejected += 1
                alpha *= 0.5
                continue
            trial_energy = _scaled_at(model, trial)
            if trial_energy <= energy + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5

        if not accepted:
            if rejected == max_halvings:
                raise BoundaryTrappedError("every step from iterate {} leaves U_eta".format(iteration))
            trace.stop_reason = "stagnation"
            break

        g_new = grad(trial)
        s, y = trial - x, g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if inverse_hessian is None:
                inverse_hessian = np.eye(x.size) * sy / float(y @ y)
            rho = 1.0 / sy
            left = np.eye(x.size) - rho * np.outer(s, y)
            inverse_hessian = left @ inverse_hessian @ left.T + rho * np.outer(s, s)

        x, energy, g = trial, trial_energy, g_new
        config = SpikeConfiguration(x.reshape(-1, 2), strict=False)
        log_m = float(np.log(abs(energy))) - model.scale_log
        trace.record(iteration, log_m, float(np.linalg.norm(g)), config, model)
        signal("descent-iteration").send(model, iteration=iteration, log_M=log_m, grad_norm=float(np.linalg.norm(g)))
    else:
        trace.stop_reason = "iterations"

    result = SpikeConfiguration(x.reshape(-1, 2), strict=init.strict)
    log_value, _ = evaluate_M(model, result)
    trace.checks = location_checks(model, result)
    if not trace.checks["passed"]:
        log.warning("minimiser drifts {:.3e} from the crown law (tolerance {:.3e})"
                    .format(trace.checks["max_drift"], trace.checks["tolerance"]))
    log.info("minimize_in_U: {} after {} iterations, log M = {:.12g}".format(trace.stop_reason, trace.iterations,
                                                                          log_value))
    return result, log_value, trace


def law_drift(dom, config, delta):
    """
    max over spikes of |d(P_i) - delta| and ||P_i - P_(i+1)| - 2 delta|; also returns d and the chords.
    """
    d = -np.atleast_1d(dom.signed_distance(config.points))
    chords = config.chords()
    return max(float(np.max(np.abs(d - delta))), float(np.max(np.abs(chords - 2.0 * delta)))), d, chords


def location_checks(model, config, factor=5.0):
    """
    Distances within factor*eps of delta and adjacent chords within factor*eps of 2 delta.
    """
    drift, d, chords = law_drift(model.dom, config, model.delta)
    tolerance = factor * model.epsilon
    return {"max_drift": drift, "tolerance": tolerance, "passed": drift <= tolerance,
            "distances": d.tolist(), "chords": chords.tolist()}


def regular_polygon_residual(config, center=(0.0, 0.0)):
    """
    RMS distance from the configuration to the best-fitting regular k-gon
    about center (common radius and phase).
    """
    offset = config.points - np.asarray(center, dtype=float)
    k = config.k
    radius = float(np.mean(np.hypot(*offset.T)))
    angles = np.arctan2(offset[:, 1], offset[:, 0])
    phase = np.angle(np.sum(np.exp(1j * (angles - 2 * np.pi * np.arange(k) / k))))
    target = radius * np.column_stack([np.cos(phase + 2 * np.pi * np.arange(k) / k),
                                       np.sin(phase + 2 * np.pi * np.arange(k) / k)])
    return float(np.sqrt(np.mean(np.sum((offset - target) ** 2, axis=1))))
