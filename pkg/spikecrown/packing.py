#!/usr/bin/env python3
# coding=utf-8

"""
packing.py
Purpose: The crown packing. For k even, find the critical offset delta* at
which a closed equal-chord k-gon on the inner parallel curve gamma_delta has
edge exactly 2 delta, and check that nothing on the boundary of the
configuration neighbourhood U_eta does as well.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.spatial.distance import pdist

from spikecrown.errors import ConfigError, NumericalError, DomainError, PropertyViolationError
from spikecrown.export import write_csv, write_json
from spikecrown.geometry import Circle, inner_parallel_curve, ParallelCurveDegeneracyError

log = logging.getLogger(__name__)

CHORD_XTOL = 1e-14
DELTA_XTOL = 1e-12
# smallest crown with a non-adjacent pair
MIN_CROWN = 4
PHASE_SCAN = 32


class PackingError(NumericalError):
    pass


class ChordInfeasibleError(PackingError):
    pass


class ClosureError(PackingError):
    pass


class NoCriticalDeltaError(PackingError):
    pass


class PackingConsistencyError(PackingError):
    pass


class OddCrownError(ConfigError):
    pass


@dataclass(frozen=True, eq=False)
class SpikeConfiguration:
    """
    Cyclically ordered spike centres P_1..P_k; spike i carries sign (-1)^i.
    params holds the curve parameters the points were built from, when known.
    strict=False admits odd k (polygons, single-spike diagnostics).
    """

    points: np.ndarray
    params: np.ndarray = None
    strict: bool = field(default=True, repr=False)

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", points)
        if points.shape[1] != 2 or not np.all(np.isfinite(points)):
            raise DomainError("configuration points must be finite (x, y) pairs")
        if self.strict and (len(points) < 2 or len(points) % 2):
            raise OddCrownError("a crown needs an even number k >= 2 of spikes, got {}".format(len(points)))

    @property
    def k(self):
        return len(self.points)

    @property
    def signs(self):
        return np.array([(-1) ** i for i in range(1, self.k + 1)], dtype=float)

    def chords(self):
        """
        |P_i - P_(i+1)|, cyclically.
        """
        return np.hypot(*(np.roll(self.points, -1, axis=0) - self.points).T)

    def with_points(self, points, params=None):
        return SpikeConfiguration(points, params, self.strict)

    def to_data(self):
        data = {"k": self.k, "points": self.points.tolist(), "signs": self.signs.tolist()}
        if self.params is not None:
            data["params"] = np.asarray(self.params).tolist()
        return data

    def __str__(self):
        return "SpikeConfiguration: k={}".format(self.k)


def _phi_points(dom, points):
    d = np.abs(dom.signed_distance(points))
    if len(points) < 2:
        return float(np.min(d))
    return float(min(np.min(d), 0.5 * np.min(pdist(points))))


def phi_k(dom, config):
    """
    min over i of d(P_i) and over pairs of |P_i - P_j| / 2.
    """
    return _phi_points(dom, config.points)


class Membership:
    """
    Outcome of a configuration-set test; falsy when any condition fails.
    """

    def __init__(self, failures=None, **measured):
        self.failures = failures or []
        self.measured = measured

    def __bool__(self):
        return not self.failures

    def to_data(self):
        return {"member": bool(self), "failures": list(self.failures), "measured": dict(self.measured)}

    def __repr__(self):
        return "Membership({}, failures={})".format(bool(self), self.failures)


def lambda_membership(dom, config, eta):
    """
    Lambda_eta: every d(P_i) > eta and every |P_i - P_j| > eta.
    """
    d = dom.signed_distance(config.points)
    min_pair = float(np.min(pdist(config.points))) if config.k > 1 else np.inf
    failures = []
    if np.max(d) >= -eta:
        failures.append("distance")
    if min_pair <= eta:
        failures.append("separation")
    return Membership(failures, min_distance=float(-np.max(d)), min_pair=min_pair)


# chord marching


def _unwrapped_arclength(curve, t):
    return curve.arclength_at(t % 1.0) + np.floor(t) * curve.total_length


def chord_step(curve, t, c):
    """
    The first parameter s > t (unwrapped) with |P(s) - P(t)| = c.
    """
    if isinstance(curve, Circle):
        if c >= 2.0 * curve.radius:
            raise ChordInfeasibleError("chord {} exceeds the diameter {}".format(c, 2.0 * curve.radius))
        return t + np.arcsin(0.5 * c / curve.radius) / np.pi

    n = curve.table_size
    p = curve.point(t)
    j0 = int(np.floor(t * n))
    offsets = np.arange(1, n + 1)
    nodes = curve.points[(j0 + offsets) % n]
    far = np.hypot(*(nodes - p).T) >= c
    if not far.any():
        raise ChordInfeasibleError("no point of the curve at chord {} from t={:.12g}".format(c, t))

    hi = (j0 + offsets[int(np.argmax(far))]) / n
    lo = max(t, hi - 1.0 / n)

    def gap(s):
        return np.hypot(*(curve.point(s) - p)) - c

    return brentq(gap, lo, hi, xtol=CHORD_XTOL)


def _march(curve, k, c, t0):
    params = [float(t0)]
    for _ in range(k):
        params.append(chord_step(curve, params[-1], c))
    return np.array(params)


def equal_chord_polygon(curve, k, c, t0=0.0):
    """
    March k chords of length c from t0. Returns the k vertices and the
    closure defect (arclength advanced minus the curve length).
    """
    if not c > 0:
        raise DomainError("chord must be positive, got {}".format(c))
    params = _march(curve, k, c, t0)
    defect = _unwrapped_arclength(curve, params[-1]) - _unwrapped_arclength(curve, params[0]) - curve.total_length
    config = SpikeConfiguration(curve.point(params[:-1]), np.mod(params[:-1], 1.0), strict=False)
    return config, float(defect)


def _defect(curve, k, c, t0):
    return equal_chord_polygon(curve, k, c, t0)[1]


def _min_far_distance(curve):
    if isinstance(curve, Circle):
        return 2.0 * curve.radius
    return curve.far_distance


def close_polygon(curve, k, t0=0.0, scan_points=9):
    """
    Chord c* closing the equal-chord k-gon started at t0. Returns (config, c*).
    """
    if k < 3:
        raise DomainError("closing a polygon needs k >= 3, got {}".format(k))

    hi = min(curve.total_length / k, 0.999 * _min_far_distance(curve))
    lo = 1e-6 * hi

    grid = np.linspace(lo, hi, scan_points)
    defects = np.array([_defect(curve, k, c, t0) for c in grid])
    if not (defects[0] < 0 < defects[-1]):
        raise ClosureError("closure defect has no sign change for chords in ({:.6g}, {:.6g})".format(lo, hi))

    if np.all(np.diff(defects) > 0):
        c_star = brentq(lambda c: _defect(curve, k, c, t0), lo, hi, xtol=CHORD_XTOL)
    else:
        log.warning("closure defect not monotone in the chord for k={}, t0={:.6g}; scanning".format(k, t0))
        fine = np.linspace(lo, hi, 40 * scan_points)
        values = np.array([_defect(curve, k, c, t0) for c in fine])
        first = int(np.argmax(values > 0))
        c_star = brentq(lambda c: _defect(curve, k, c, t0), fine[first - 1], fine[first], xtol=CHORD_XTOL)

    config, _ = equal_chord_polygon(curve, k, c_star, t0)
    return config, float(c_star)


def closure_shortfall(curve, k, c):
    """
    min over the start parameter t0 of the closure defect of the k-gon with
    chord c. Returns (defect, t0). Since the defect grows with the chord, it
    is <= 0 exactly when some start closes an equal-chord k-gon of edge >= c.
    """
    if isinstance(curve, Circle):
        return _defect(curve, k, c, 0.0), 0.0

    scan = np.linspace(0.0, 1.0, max(PHASE_SCAN, 4 * k), endpoint=False)
    defects = np.array([_defect(curve, k, c, t0) for t0 in scan])
    j = int(np.argmin(defects))
    step = scan[1] - scan[0]
    result = minimize_scalar(lambda t0: _defect(curve, k, c, t0), bounds=(scan[j] - step, scan[j] + step),
                             method="bounded", options={"xatol": 1e-11})
    if result.fun <= defects[j]:
        return float(result.fun), float(result.x % 1.0)
    return float(defects[j]), float(scan[j])


def choose_k(dom, delta0):
    """
    Smallest even k with k > l(Gamma) / (2 delta0).
    """
    if not 0 < delta0 < 0.9 * dom.inradius:
        raise DomainError("delta0={} outside (0, 0.9 * inradius={:.6g})".format(delta0, 0.9 * dom.inradius))
    ratio = dom.boundary.total_length / (2.0 * delta0)
    return int(2 * (np.floor(ratio / 2.0) + 1))


def optimal_delta(dom, k, delta0=None):
    """
    delta* solving c*(delta) = 2 delta, where c*(delta) is the best closed
    equal-chord length on gamma_delta. Bisects on the feasibility of an
    edge 2 delta (closure_shortfall <= 0), then closes the polygon at the
    best start. Returns (delta*, crown).
    """
    if k % 2:
        raise OddCrownError("k must be even, got {}".format(k))
    if k < MIN_CROWN:
        raise DomainError("a crown needs k >= {} spikes, got {}".format(MIN_CROWN, k))
    curve = dom.boundary
    if delta0 is not None and k <= curve.total_length / (2.0 * delta0):
        raise ConfigError("k={} does not exceed l/(2 delta0)={:.6g}".format(k, curve.total_length / (2.0 * delta0)))

    upper = 0.9 * min(dom.inradius, 1.0 / curve.kappa_max)
    phases = {}

    def shortfall(delta):
        gamma = inner_parallel_curve(curve, delta)
        try:
            defect, t0 = closure_shortfall(gamma, k, 2.0 * delta)
        except ChordInfeasibleError:
            # no chord of length 2 delta left on gamma_delta
            return gamma.total_length
        phases[delta] = t0
        return defect

    lo = 1e-3 * upper
    g_lo, g_hi = shortfall(lo), shortfall(upper)
    if not (g_lo < 0 < g_hi):
        raise NoCriticalDeltaError("closure defect at chord 2 delta has no sign change on ({:.6g}, {:.6g}) "
                                   "for k={}".format(lo, upper, k))

    delta_star = brentq(shortfall, lo, upper, xtol=DELTA_XTOL)
    gamma = inner_parallel_curve(curve, delta_star)
    t0 = phases.get(delta_star)
    if t0 is None:
        t0 = closure_shortfall(gamma, k, 2.0 * delta_star)[1]
    try:
        polygon, c_star = close_polygon(gamma, k, t0)
    except ClosureError as error:
        raise NoCriticalDeltaError("k={} cannot be closed on gamma_delta*: {}".format(k, error))
    log.debug("closed chord {:.15g} against 2 delta*={:.15g}".format(c_star, 2.0 * delta_star))
    crown = SpikeConfiguration(polygon.points, polygon.params)

    _verify_crown(dom, crown, delta_star)
    log.info("optimal delta for k={}: {:.15g}".format(k, delta_star))
    return float(delta_star), crown


def _verify_crown(dom, crown, delta_star, tol=1e-8):
    points = crown.points
    adjacent = np.zeros((crown.k, crown.k), dtype=bool)
    idx = np.arange(crown.k)
    adjacent[idx, (idx + 1) % crown.k] = True
    adjacent[(idx + 1) % crown.k, idx] = True

    separation = np.hypot(points[:, None, 0] - points[None, :, 0], points[:, None, 1] - points[None, :, 1])
    far_pairs = ~adjacent & ~np.eye(crown.k, dtype=bool)
    if np.any(far_pairs) and np.min(separation[far_pairs]) < 2.0 * delta_star - tol:
        raise PackingConsistencyError("non-adjacent spikes {:.12g} apart, closer than 2 delta*={:.12g}"
                                      .format(np.min(separation[far_pairs]), 2.0 * delta_star))

    phi = phi_k(dom, crown)
    if abs(phi - delta_star) > tol:
        raise PackingConsistencyError("phi_k(crown)={:.15g} differs from delta*={:.15g}".format(phi, delta_star))


def perturb_along_curve(curve, config, shifts):
    """
    Move each vertex of a configuration built on curve by the given
    arclength shifts (scalar or one per vertex).
    """
    if config.params is None:
        raise DomainError("configuration carries no curve parameters")
    shifts = np.broadcast_to(np.asarray(shifts, dtype=float), (config.k,))
    params = np.array([curve.advance(t, ds) for t, ds in zip(config.params, shifts)])
    return config.with_points(curve.point(params), params)


class TwoPointReport:
    def __init__(self, delta, counts, reason=None):
        self.delta = delta
        self.counts = counts
        self.reason = reason

    @property
    def passed(self):
        return self.reason is None and bool(np.all(self.counts == 2))

    def to_data(self):
        values, frequency = np.unique(self.counts, return_counts=True)
        return {"delta": self.delta, "passed": self.passed, "reason": self.reason,
                "root_counts": {str(int(v)): int(f) for v, f in zip(values, frequency)}}


def two_point_property_check(curve, delta, samples=256):
    """
    For sample points P on gamma_delta count the parameters t with
    |gamma_delta(t) - P| = 2 delta; the property holds when every count is 2.
    """
    try:
        gamma = inner_parallel_curve(curve, delta)
    except ParallelCurveDegeneracyError as error:
        return TwoPointReport(delta, np.zeros(0, dtype=int), reason=str(error))

    t = np.linspace(0.0, 1.0, samples, endpoint=False)
    centres = gamma.point(t)
    table = gamma.points
    gap = np.hypot(centres[:, None, 0] - table[None, :, 0], centres[:, None, 1] - table[None, :, 1]) - 2.0 * delta
    counts = np.sum(np.sign(gap) != np.sign(np.roll(gap, -1, axis=1)), axis=1)

    report = TwoPointReport(delta, counts)
    if not report.passed:
        log.warning("two-point property fails at delta={}: root counts {}".format(delta, np.unique(counts)))
    return report


# boundary of U_eta

STRATA = ("inner", "outer", "chord", "order")


class GapReport:
    def __init__(self, delta_star, eta, sup_boundary, per_stratum, used):
        self.delta_star = delta_star
        self.eta = eta
        self.sup_boundary = sup_boundary
        self.per_stratum = per_stratum
        self.used = used

    @property
    def gap(self):
        return self.delta_star - self.sup_boundary

    def to_data(self):
        return {"delta_star": self.delta_star, "eta": self.eta, "sup_boundary": self.sup_boundary,
                "gap": self.gap, "per_stratum": dict(self.per_stratum), "samples_used": self.used}


def _place(curve, tau, depth):
    flat_tau = tau.ravel()
    points = curve.point(flat_tau) - depth.ravel()[:, None] * curve.normal(flat_tau)
    return points.reshape(tau.shape + (2,))


def _closure_mask(curve, tau, depth, delta, eta, slack=1e-12):
    """
    Samples inside the closure of U_eta: depths within [delta - eta, delta + eta],
    projections in cyclic order and every pair at least 2 delta - eta apart.
    """
    points = _place(curve, tau, depth)
    ok = np.all(np.abs(depth - delta) <= eta + slack, axis=1)

    steps = np.diff(np.concatenate([tau, tau[:, :1] + 1.0], axis=1), axis=1)
    ok &= np.all(steps >= -slack, axis=1)

    diff = points[:, :, None, :] - points[:, None, :, :]
    separation = np.hypot(diff[..., 0], diff[..., 1])
    k = tau.shape[1]
    separation[:, np.arange(k), np.arange(k)] = np.inf
    ok &= np.min(separation, axis=(1, 2)) >= 2.0 * delta - eta - slack
    return ok, points, separation


def boundary_gap_samples(dom, crown, delta_star, eta, samples=10000, rng=None):
    """
    Sample configurations on the strata of the boundary of U_eta around the
    crown and record the largest phi_k found on each stratum.
    """
    if eta <= 0:
        return GapReport(delta_star, eta, 0.0, {}, 0)

    curve = dom.boundary
    rng = np.random.default_rng(rng)
    k = crown.k
    base_tau = np.mod(curve.project_points(crown.points), 1.0)
    base_tau = base_tau[0] + np.mod(base_tau - base_tau[0], 1.0)
    length = curve.total_length

    per_stratum = {}
    best = -np.inf
    used = 0
    rows = np.arange(samples // len(STRATA) + 1)

    for stratum in STRATA:
        m = rows.size
        tau = base_tau + rng.uniform(-eta, eta, (m, k)) / length
        depth = delta_star + rng.uniform(-eta, eta, (m, k))
        # the first sample of every stratum keeps all but one spike at the crown
        tau[0] = base_tau
        depth[0] = delta_star
        which = rng.integers(0, k, m)

        if stratum == "inner":
            depth[rows, which] = delta_star - eta
        elif stratum == "outer":
            depth[rows, which] = delta_star + eta
        elif stratum == "order":
            nxt = (which + 1) % k
            tau[rows, nxt] = tau[rows, which] - (nxt == 0)
            depth[rows, nxt] = depth[rows, which] + eta
        else:
            tau = _pull_chord(curve, tau, depth, which, 2.0 * delta_star - eta)

        ok, points, separation = _closure_mask(curve, tau, depth, delta_star, eta)
        if not np.any(ok):
            per_stratum[stratum] = None
            continue

        d = np.abs(dom.signed_distance(points[ok].reshape(-1, 2))).reshape(-1, k)
        phi = np.minimum(d.min(axis=1), 0.5 * np.min(separation[ok], axis=(1, 2)))
        per_stratum[stratum] = float(phi.max())
        best = max(best, float(phi.max()))
        used += int(np.sum(ok))

    return GapReport(delta_star, eta, best if used else 0.0, per_stratum, used)


def _pull_chord(curve, tau, depth, which, target, steps=60):
    """
    Slide spike which+1 back towards spike which along the curve until
    their distance equals target.
    """
    m, k = tau.shape
    rows = np.arange(m)
    nxt = (which + 1) % k
    start = tau[rows, which]
    end = tau[rows, nxt] + (nxt == 0)

    def chord(lam):
        moved = start + lam * (end - start)
        p = curve.point(start) - depth[rows, which][:, None] * curve.normal(start)
        q = curve.point(moved) - depth[rows, nxt][:, None] * curve.normal(moved)
        return np.hypot(*(q - p).T)

    lo = np.zeros(m)
    hi = np.ones(m)
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        short = chord(mid) < target
        lo = np.where(short, mid, lo)
        hi = np.where(short, hi, mid)

    out = tau.copy()
    out[rows, nxt] = start + hi * (end - start) - (nxt == 0)
    return out


def boundary_gap_check(dom, crown, delta_star, eta, samples=10000, rng=None, tol=1e-10):
    """
    Returns (sup of phi_k over sampled boundary configurations, gap).
    """
    report = boundary_gap_samples(dom, crown, delta_star, eta, samples, rng)
    if eta <= 0:
        return 0.0, float(delta_star)
    if report.gap <= tol:
        raise PropertyViolationError("boundary gap {:.3e} is not positive at eta={}".format(report.gap, eta),
                                     worst=report.to_data())
    return report.sup_boundary, report.gap


# output


CROWN_HEADER = ["i", "x", "y", "sign", "chord_to_next", "d_gamma"]


def crown_to_csv(dom, config):
    """
    Header and rows (i, x, y, sign, chord_to_next, d_Gamma), i from 1.
    """
    distances = np.abs(dom.signed_distance(config.points))
    rows = [(i + 1, x, y, sign, chord, d) for i, ((x, y), sign, chord, d)
            in enumerate(zip(config.points, config.signs, config.chords(), distances))]
    return CROWN_HEADER, rows


def write_crown(stem, dom, config, summary, config_hash=None):
    header, rows = crown_to_csv(dom, config)
    write_csv(stem + ".csv", header, rows)
    write_json(stem + ".json", summary, config_hash=config_hash)
    return stem + ".csv", stem + ".json"
