#!/usr/bin/env python3
# coding=utf-8

"""
geometry.py
Purpose: Strictly convex closed planar curves parametrised by t in [0, 1),
counter-clockwise, with a dense table of frames and arclength, projections,
signed distance, inner parallel curves and the convexity inequalities the
packing argument relies on.
"""

import os
import logging
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize, minimize_scalar
from scipy.spatial import cKDTree

from spikecrown.errors import ConfigError, NumericalError, DomainError, PropertyViolationError
from spikecrown.export import read_csv

log = logging.getLogger(__name__)

TABLE_SIZE = 4096
BISECTION_STEPS = 64
MAX_SAMPLING_ROUNDS = 200

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


class ConvexityError(ConfigError):
    pass


class NonUniqueProjectionError(NumericalError):
    pass


class ParallelCurveDegeneracyError(NumericalError):
    pass


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _unwrap(t, values):
    if np.ndim(t) == 0:
        return values[0]
    return values


class ConvexCurve:
    """
    Base class. Subclasses implement frame(t) returning (point, velocity,
    curvature) for an array of parameters; everything else is derived here.
    """

    kind = None

    def __init__(self, table_size=TABLE_SIZE):
        self.table_size = table_size

    def frame(self, t):
        raise NotImplementedError

    def to_data(self):
        raise NotImplementedError

    # pointwise evaluation

    def _frame(self, t):
        return self.frame(np.mod(np.atleast_1d(np.asarray(t, dtype=float)), 1.0))

    def point(self, t):
        return _unwrap(t, self._frame(t)[0])

    def speed(self, t):
        return _unwrap(t, np.hypot(*self._frame(t)[1].T))

    def tangent(self, t):
        velocity = self._frame(t)[1]
        return _unwrap(t, velocity / np.hypot(*velocity.T)[:, None])

    def normal(self, t):
        """
        Outward unit normal (T_y, -T_x).
        """
        tangent = np.atleast_2d(self.tangent(np.atleast_1d(t)))
        return _unwrap(t, np.column_stack([tangent[:, 1], -tangent[:, 0]]))

    def curvature(self, t):
        return _unwrap(t, self._frame(t)[2])

    # dense table

    @cached_property
    def t_table(self):
        return np.arange(self.table_size) / self.table_size

    @cached_property
    def _table(self):
        return self._frame(self.t_table)

    @property
    def points(self):
        return self._table[0]

    @cached_property
    def normals(self):
        velocity = self._table[1]
        tangent = velocity / np.hypot(*velocity.T)[:, None]
        return np.column_stack([tangent[:, 1], -tangent[:, 0]])

    @property
    def curvatures(self):
        return self._table[2]

    @cached_property
    def kappa_max(self):
        return float(np.max(self.curvatures))

    @cached_property
    def kappa_min(self):
        return float(np.min(self.curvatures))

    @cached_property
    def reach(self):
        return 0.9 / self.kappa_max

    def _segment_length(self, a, b):
        half = 0.5 * (b - a)
        nodes = (0.5 * (a + b))[:, None] + half[:, None] * _GL_NODES[None, :]
        speed = self.speed(nodes.ravel()).reshape(nodes.shape)
        return np.sum(half[:, None] * _GL_WEIGHTS[None, :] * speed, axis=1)

    @cached_property
    def s_table(self):
        t = np.append(self.t_table, 1.0)
        return np.concatenate([[0.0], np.cumsum(self._segment_length(t[:-1], t[1:]))])

    @property
    def total_length(self):
        return float(self.s_table[-1])

    @cached_property
    def centroid(self):
        p = self.points
        q = np.roll(p, -1, axis=0)
        cross = _cross(p, q)
        area = 0.5 * np.sum(cross)
        return np.sum((p + q) * cross[:, None], axis=0) / (6.0 * area)

    @cached_property
    def kdtree(self):
        return cKDTree(self.points)

    @cached_property
    def diameter(self):
        p = self.points
        best = 0.0
        for start in range(0, len(p), 512):
            block = p[start:start + 512]
            distances = np.hypot(block[:, None, 0] - p[None, :, 0], block[:, None, 1] - p[None, :, 1])
            best = max(best, float(distances.max()))
        return best

    @cached_property
    def far_distance(self):
        """
        min over P of max over Q of |P - Q|: the longest chord available
        from every point of the curve.
        """
        p = self.points[::4]
        worst = np.inf
        for start in range(0, len(p), 256):
            block = p[start:start + 256]
            far = np.hypot(block[:, None, 0] - self.points[None, :, 0], block[:, None, 1] - self.points[None, :, 1])
            worst = min(worst, float(far.max(axis=1).min()))
        return worst

    # arclength bookkeeping

    def arclength_at(self, t):
        """
        Arclength from t = 0 to t (t taken modulo 1).
        """
        tt = np.mod(np.atleast_1d(np.asarray(t, dtype=float)), 1.0)
        index = np.minimum((tt * self.table_size).astype(int), self.table_size - 1)
        s = self.s_table[index] + self._segment_length(self.t_table[index], tt)
        return _unwrap(t, s)

    def parameter_at(self, s):
        """
        Inverse of arclength_at, s taken modulo the total length.
        """
        ss = np.mod(np.atleast_1d(np.asarray(s, dtype=float)), self.total_length)
        index = np.clip(np.searchsorted(self.s_table, ss, side="right") - 1, 0, self.table_size - 1)
        out = np.empty_like(ss)
        for n, (target, j) in enumerate(zip(ss, index)):
            a, b = self.t_table[j], (j + 1) / self.table_size
            base = self.s_table[j]

            def gap(x):
                return base + self._segment_length(np.array([a]), np.array([x]))[0] - target

            if gap(b) <= 0:
                out[n] = b
            else:
                out[n] = brentq(gap, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return _unwrap(s, np.mod(out, 1.0))

    def advance(self, t, ds):
        return self.parameter_at(self.arclength_at(t) + ds)

    # projection

    def _stationarity(self, t, x):
        point, velocity, _ = self.frame(np.mod(t, 1.0))
        return np.sum((point - x) * velocity, axis=1)

    def _refine(self, x, lo, hi):
        """
        Vectorised bisection on (P(t) - x).P'(t) = 0 over brackets [lo, hi].
        """
        g_lo = self._stationarity(lo, x)
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            g_mid = self._stationarity(mid, x)
            left = np.sign(g_mid) == np.sign(g_lo)
            lo = np.where(left, mid, lo)
            g_lo = np.where(left, g_mid, g_lo)
            hi = np.where(left, hi, mid)
        return np.mod(0.5 * (lo + hi), 1.0)

    def _brackets(self, x, index):
        step = 1.0 / self.table_size
        centre = self.t_table[index]
        lo = centre - step
        hi = centre + step
        for _ in range(6):
            bad = np.sign(self._stationarity(lo, x)) == np.sign(self._stationarity(hi, x))
            if not np.any(bad):
                break
            lo = np.where(bad, lo - step, lo)
            hi = np.where(bad, hi + step, hi)
            step *= 2
        return lo, hi

    def project_points(self, x):
        """
        Nearest-point parameters for an (m, 2) array of points. No uniqueness
        check; use project_to_curve for that.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        _, index = self.kdtree.query(x)
        lo, hi = self._brackets(x, index)
        return self._refine(x, lo, hi)

    def local_minima(self, x):
        """
        Parameters and distances of every local minimum of |P(t) - x|.
        """
        x = np.asarray(x, dtype=float)
        distances = np.hypot(*(self.points - x).T)
        candidates = np.nonzero((distances <= np.roll(distances, 1)) & (distances <= np.roll(distances, -1)))[0]
        xs = np.broadcast_to(x, (candidates.size, 2))
        lo, hi = self._brackets(xs, candidates)
        t = self._refine(xs, lo, hi)
        return t, np.hypot(*(self.point(t) - xs).T)

    def __repr__(self):
        return "{}({})".format(type(self).__name__, self.to_data())


class Circle(ConvexCurve):
    kind = "circle"

    def __init__(self, radius, center=(0.0, 0.0), table_size=TABLE_SIZE):
        if not radius > 0:
            raise ConfigError("circle radius must be positive, got {}".format(radius))
        super().__init__(table_size)
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=float)

    def frame(self, t):
        theta = 2.0 * np.pi * t
        unit = np.column_stack([np.cos(theta), np.sin(theta)])
        velocity = 2.0 * np.pi * self.radius * np.column_stack([-unit[:, 1], unit[:, 0]])
        return self.center + self.radius * unit, velocity, np.full(t.shape, 1.0 / self.radius)

    def project_points(self, x):
        offset = np.atleast_2d(np.asarray(x, dtype=float)) - self.center
        return np.mod(np.arctan2(offset[:, 1], offset[:, 0]) / (2.0 * np.pi), 1.0)

    @property
    def total_length(self):
        return 2.0 * np.pi * self.radius

    def to_data(self):
        return {"kind": self.kind, "R": self.radius, "center": self.center.tolist()}


class Ellipse(ConvexCurve):
    kind = "ellipse"

    def __init__(self, a, b, center=(0.0, 0.0), table_size=TABLE_SIZE):
        if not (a > 0 and b > 0):
            raise ConfigError("ellipse semi-axes must be positive, got a={}, b={}".format(a, b))
        super().__init__(table_size)
        self.a = float(a)
        self.b = float(b)
        self.center = np.asarray(center, dtype=float)

    def frame(self, t):
        theta = 2.0 * np.pi * t
        c, s = np.cos(theta), np.sin(theta)
        point = self.center + np.column_stack([self.a * c, self.b * s])
        velocity = 2.0 * np.pi * np.column_stack([-self.a * s, self.b * c])
        curvature = self.a * self.b / (self.a ** 2 * s ** 2 + self.b ** 2 * c ** 2) ** 1.5
        return point, velocity, curvature

    def to_data(self):
        return {"kind": self.kind, "a": self.a, "b": self.b, "center": self.center.tolist()}


class Superellipse(ConvexCurve):
    """
    Polar form r(theta) = (|cos/a|^m + |sin/b|^m)^(-1/m), m >= 2.
    """

    kind = "superellipse"

    def __init__(self, a, b, m, table_size=TABLE_SIZE):
        if not (a > 0 and b > 0):
            raise ConfigError("superellipse semi-axes must be positive")
        if not m >= 2:
            raise ConvexityError("superellipse exponent m={} < 2 is not convex".format(m))
        super().__init__(table_size)
        self.a, self.b, self.m = float(a), float(b), float(m)

    def frame(self, t):
        m = self.m
        theta = 2.0 * np.pi * t
        c, s = np.cos(theta), np.sin(theta)
        big_c = np.abs(c) ** (m - 2) / self.a ** m
        big_s = np.abs(s) ** (m - 2) / self.b ** m

        u = np.abs(c / self.a) ** m + np.abs(s / self.b) ** m
        du = m * s * c * (big_s - big_c)
        d2u = m * ((c ** 2 - s ** 2) * (big_s - big_c) + (m - 2) * (c ** 2 * big_s + s ** 2 * big_c))

        r = u ** (-1.0 / m)
        dr = -u ** (-1.0 / m - 1) * du / m
        d2r = (1.0 / m) * (1.0 / m + 1) * u ** (-1.0 / m - 2) * du ** 2 - u ** (-1.0 / m - 1) * d2u / m

        radial = np.column_stack([c, s])
        angular = np.column_stack([-s, c])
        point = r[:, None] * radial
        d_point = dr[:, None] * radial + r[:, None] * angular
        d2_point = (d2r - r)[:, None] * radial + 2 * dr[:, None] * angular

        curvature = _cross(d_point, d2_point) / np.hypot(*d_point.T) ** 3
        return point, 2.0 * np.pi * d_point, curvature

    def to_data(self):
        return {"kind": self.kind, "a": self.a, "b": self.b, "m": self.m}


class SampledSpline(ConvexCurve):
    """
    Periodic cubic spline through control points, chord-length
    parametrised and reoriented counter-clockwise.
    """

    kind = "sampled-spline"

    def __init__(self, control_points, table_size=TABLE_SIZE):
        points = np.asarray(control_points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 2 or len(points) < 5:
            raise ConfigError("sampled-spline needs at least 5 control points (x, y)")
        if np.allclose(points[0], points[-1]):
            points = points[:-1]
        if _cross(points, np.roll(points, -1, axis=0)).sum() < 0:
            points = points[::-1]
        super().__init__(table_size)
        self.control_points = points

        closed = np.vstack([points, points[:1]])
        chords = np.hypot(*np.diff(closed, axis=0).T)
        knots = np.concatenate([[0.0], np.cumsum(chords)]) / chords.sum()
        self.spline = CubicSpline(knots, closed, axis=0, bc_type="periodic")

    def frame(self, t):
        d_point = self.spline(t, 1)
        curvature = _cross(d_point, self.spline(t, 2)) / np.hypot(*d_point.T) ** 3
        return self.spline(t), d_point, curvature

    def to_data(self):
        return {"kind": self.kind, "points": self.control_points.tolist()}


class ParallelCurve(ConvexCurve):
    """
    Inner parallel curve t -> P(t) - delta nu(t) of a base curve. Shares
    the base parameter, tangent and normal.
    """

    kind = "parallel"

    def __init__(self, base, delta, table_size=TABLE_SIZE):
        super().__init__(table_size)
        self.base = base
        self.delta = float(delta)

    def frame(self, t):
        point, velocity, curvature = self.base.frame(t)
        speed = np.hypot(*velocity.T)
        normal = np.column_stack([velocity[:, 1], -velocity[:, 0]]) / speed[:, None]
        shrink = 1.0 - self.delta * curvature
        return point - self.delta * normal, velocity * shrink[:, None], curvature / shrink

    def to_data(self):
        return {"kind": self.kind, "delta": self.delta, "base": self.base.to_data()}


class PlanarDomain:
    """
    The bounded convex region enclosed by a ConvexCurve.
    """

    def __init__(self, boundary):
        self.boundary = boundary
        self.logger = log

    @property
    def centroid(self):
        return self.boundary.centroid

    def signed_distance(self, x):
        """
        Negative inside, zero on the boundary, positive outside. Accepts a
        single point or an (m, 2) array.
        """
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        if not np.all(np.isfinite(pts)):
            raise DomainError("signed distance requested at a non-finite point")

        curve = self.boundary
        if isinstance(curve, Circle):
            values = np.hypot(*(pts - curve.center).T) - curve.radius
        else:
            t = curve.project_points(pts)
            offset = pts - curve.point(t)
            values = np.hypot(*offset.T) * np.sign(np.sum(offset * curve.normal(t), axis=1))

        if np.ndim(x) == 1:
            return float(values[0])
        return values

    def distance_to_boundary(self, x):
        return np.abs(self.signed_distance(x))

    def contains(self, x):
        return self.signed_distance(x) < 0

    @cached_property
    def inradius(self):
        result = minimize(lambda x: self.signed_distance(x), self.centroid, method="Nelder-Mead",
                          options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 2000})
        return float(-result.fun)

    @property
    def diameter(self):
        return self.boundary.diameter

    def to_data(self):
        return self.boundary.to_data()

    def __repr__(self):
        return "PlanarDomain({!r})".format(self.boundary)


# construction from config data


def curve_from_data(data, base_dir="."):
    """
    Build a curve from its config mapping, e.g. {"kind": "ellipse", "a": 2.0, "b": 1.0}.
    Sampled splines take "points" inline or "points_csv" (columns x, y).
    """
    kind = data.get("kind")
    try:
        if kind == "circle":
            return Circle(float(data.get("R", data.get("radius", 1.0))), data.get("center", (0.0, 0.0)))
        if kind == "ellipse":
            return Ellipse(float(data["a"]), float(data["b"]), data.get("center", (0.0, 0.0)))
        if kind == "superellipse":
            return Superellipse(float(data["a"]), float(data["b"]), float(data["m"]))
        if kind == "sampled-spline":
            if "points_csv" in data:
                _, points = read_csv(os.path.join(base_dir, data["points_csv"]))
            else:
                points = data["points"]
            curve = SampledSpline(points)
            _require_convex(curve)
            return curve
    except KeyError as error:
        raise ConfigError("domain of kind {} is missing {}".format(kind, error))

    raise ConfigError("unknown domain kind {!r}".format(kind))


def domain_from_data(data, base_dir="."):
    return PlanarDomain(curve_from_data(data, base_dir))


def _require_convex(curve):
    if curve.kappa_min <= 0:
        raise ConvexityError("curve has non-positive curvature {:.3e}".format(curve.kappa_min))
    margin = check_strict_convexity(curve, 0.05 * curve.diameter)
    if margin <= 0:
        raise ConvexityError("convexity margin {:.3e} is not positive".format(margin))


# operations


def signed_distance(dom, x):
    return dom.signed_distance(x)


def project_to_curve(curve, x, tol=1e-9):
    """
    Unique nearest point of the curve to x. Returns (t, point).
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("projection of a non-finite point")

    if isinstance(curve, Circle):
        offset = x - curve.center
        if np.hypot(*offset) < tol * curve.radius:
            raise NonUniqueProjectionError("{} is the centre of the circle".format(x.tolist()))
        t = float(curve.project_points(x)[0])
        return t, curve.point(t)

    t, distances = curve.local_minima(x)
    order = np.argsort(distances)
    best = order[0]
    for other in order[1:]:
        if distances[other] - distances[best] > tol * max(1.0, distances[best]):
            break
        if np.hypot(*(curve.point(t[other]) - curve.point(t[best]))) > tol:
            raise NonUniqueProjectionError("{} has two nearest points at distance {:.12g}"
                                           .format(x.tolist(), distances[best]))
    return float(t[best]), curve.point(t[best])


def inner_parallel_curve(curve, delta):
    if not delta > 0:
        raise DomainError("parallel offset must be positive, got {}".format(delta))
    if delta * curve.kappa_max >= 1.0:
        raise ParallelCurveDegeneracyError("offset {} reaches the focal distance 1/kappa_max={:.6g}"
                                           .format(delta, 1.0 / curve.kappa_max))
    if isinstance(curve, Circle):
        return Circle(curve.radius - delta, curve.center, curve.table_size)
    return ParallelCurve(curve, delta, curve.table_size)


def curve_length(curve):
    return curve.total_length


def reflected_distance(dom, x, P):
    """
    inf over boundary points z of |z - x| + |z - P|.
    """
    curve = dom.boundary
    x = np.asarray(x, dtype=float)
    P = np.asarray(P, dtype=float)

    def path(t):
        z = curve.point(t)
        return np.hypot(*(z - x)) + np.hypot(*(z - P))

    table = np.hypot(*(curve.points - x).T) + np.hypot(*(curve.points - P).T)
    j = int(np.argmin(table))
    step = 1.0 / curve.table_size
    t0 = curve.t_table[j]
    result = minimize_scalar(path, bounds=(t0 - step, t0 + step), method="bounded",
                             options={"xatol": 1e-13})
    return float(min(result.fun, table[j]))


def _chord_roots(curve, t_p, delta_sep):
    """
    For each t_p, the first parameters forward and backward at chord
    distance delta_sep. NaN where the curve never gets that far.
    """
    n = curve.table_size
    points = curve.points
    forward = np.full(t_p.shape, np.nan)
    backward = np.full(t_p.shape, np.nan)

    for start in range(0, t_p.size, 256):
        block = t_p[start:start + 256]
        base = curve.point(block)
        j0 = np.floor(block * n).astype(int)
        offsets = np.arange(1, n)
        idx = np.mod(j0[:, None] + offsets[None, :], n)
        dist = np.hypot(points[idx, 0] - base[:, None, 0], points[idx, 1] - base[:, None, 1])
        far = dist >= delta_sep
        has = far.any(axis=1)

        first = np.argmax(far, axis=1)
        last = n - 2 - np.argmax(far[:, ::-1], axis=1)

        for side, k, out in ((1, first, forward), (-1, last, backward)):
            for row in np.nonzero(has)[0]:
                tp = block[row]
                if side == 1:
                    hi = (j0[row] + offsets[k[row]]) / n
                    lo = hi - 1.0 / n if k[row] > 0 else tp
                    lo = max(lo, tp)
                else:
                    lo = (j0[row] + offsets[k[row]]) / n
                    hi = lo + 1.0 / n if k[row] < n - 2 else tp + 1.0

                def gap(t, p=base[row]):
                    return np.hypot(*(curve.point(t) - p)) - delta_sep

                g_lo, g_hi = gap(lo), gap(hi)
                if np.sign(g_lo) == np.sign(g_hi):
                    out[start + row] = lo if abs(g_lo) < abs(g_hi) else hi
                else:
                    out[start + row] = brentq(gap, lo, hi, xtol=1e-14)
    return forward, backward


def _height(curve, t_p, t_q):
    return np.sum(curve.normal(t_p) * (curve.point(t_p) - curve.point(t_q)), axis=-1)


def check_strict_convexity(curve, delta_sep):
    """
    min of nu_P.(P - Q) over pairs with |P - Q| >= delta_sep. On a convex
    curve the minimum sits on the chord circle |P - Q| = delta_sep.
    """
    if delta_sep <= 0:
        return 0.0

    t_p = curve.t_table
    forward, backward = _chord_roots(curve, t_p, delta_sep)
    valid = np.isfinite(forward)
    if not np.any(valid):
        log.warning("no chord of length {} on the curve".format(delta_sep))
        return np.inf

    heights = np.minimum(_height(curve, t_p[valid], forward[valid]), _height(curve, t_p[valid], backward[valid]))
    j = int(np.argmin(heights))
    coarse = float(heights[j])
    step = 1.0 / curve.table_size

    def margin_at(t):
        f, b = _chord_roots(curve, np.array([t % 1.0]), delta_sep)
        if not np.isfinite(f[0]):
            return np.inf
        return float(min(_height(curve, np.array([t]), f), _height(curve, np.array([t]), b)))

    t_best = t_p[valid][j]
    result = minimize_scalar(margin_at, bounds=(t_best - step, t_best + step), method="bounded",
                             options={"xatol": 1e-12})
    return float(min(coarse, result.fun))


class ContractionReport:
    """
    Outcome of a sampled contraction check.
    """

    def __init__(self, samples, violations, worst_slack, worst_sample):
        self.samples = samples
        self.violations = violations
        self.worst_slack = worst_slack
        self.worst_sample = worst_sample

    @property
    def passed(self):
        return self.violations == 0

    def to_data(self):
        return {"samples": self.samples, "violations": self.violations, "worst_slack": self.worst_slack,
                "worst_sample": self.worst_sample, "passed": self.passed}


def lemma_contraction_check(curve, delta_sep, eta_max, samples=10000, rng=None, raise_on_violation=True,
                            margin=None, max_rounds=MAX_SAMPLING_ROUNDS):
    """
    Sample P, Q on the curve with |P - Q| >= delta_sep and inward offsets
    eta1, eta2 in [0, eta_max] (not both zero), and require
    |P - eta1 nu_P - Q + eta2 nu_Q| < |P - Q|.

    The inequality is guaranteed for eta_max up to the convexity margin at
    delta_sep; pass margin when it is already known. Larger eta_max is
    sampled anyway and is expected to report violations.
    """
    if not np.isfinite(eta_max) or eta_max <= 0:
        raise DomainError("eta_max must be positive and finite, got {}".format(eta_max))
    if not np.isfinite(delta_sep) or delta_sep < 0:
        raise DomainError("delta_sep must be non-negative and finite, got {}".format(delta_sep))
    if delta_sep >= curve.diameter:
        raise DomainError("no pair of points is {} apart: the curve diameter is {:.12g}"
                          .format(delta_sep, curve.diameter))
    if samples < 1:
        raise DomainError("need at least one sample, got {}".format(samples))

    if margin is None:
        margin = check_strict_convexity(curve, delta_sep)
    if eta_max > margin:
        log.warning("eta_max={:.6g} exceeds the convexity margin {:.6g} at delta_sep={:.6g}"
                    .format(eta_max, margin, delta_sep))

    rng = np.random.default_rng(rng)
    t_p = np.empty(0)
    t_q = np.empty(0)
    for _ in range(max_rounds):
        if t_p.size >= samples:
            break
        a = rng.random(2 * samples)
        b = rng.random(2 * samples)
        keep = np.hypot(*(curve.point(a) - curve.point(b)).T) >= delta_sep
        t_p = np.concatenate([t_p, a[keep]])
        t_q = np.concatenate([t_q, b[keep]])
    if t_p.size < samples:
        raise NumericalError("only {} of {} pairs at least {} apart after {} sampling rounds"
                             .format(t_p.size, samples, delta_sep, max_rounds))
    t_p, t_q = t_p[:samples], t_q[:samples]

    eta = rng.random((samples, 2)) * eta_max
    both_zero = np.all(eta == 0, axis=1)
    eta[both_zero, 0] = eta_max

    p, q = curve.point(t_p), curve.point(t_q)
    moved = p - eta[:, :1] * curve.normal(t_p) - q + eta[:, 1:] * curve.normal(t_q)
    slack = np.hypot(*(p - q).T) - np.hypot(*moved.T)

    worst = int(np.argmin(slack))
    report = ContractionReport(samples, int(np.sum(slack <= 0)), float(slack[worst]),
                               {"t_p": float(t_p[worst]), "t_q": float(t_q[worst]),
                                "eta1": float(eta[worst, 0]), "eta2": float(eta[worst, 1])})
    if not report.passed:
        message = "contraction fails on {} of {} samples (worst slack {:.3e})".format(
            report.violations, samples, report.worst_slack)
        if raise_on_violation:
            error = PropertyViolationError(message, worst=report.worst_sample)
            error.report = report
            raise error
        log.warning(message)
    return report
