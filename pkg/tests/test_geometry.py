#!/usr/bin/env python3
# coding=utf-8

import numpy as np
import pytest
from scipy.optimize import brentq, minimize_scalar
from scipy.special import ellipe

from spikecrown.errors import ConfigError, DomainError, NumericalError, PropertyViolationError
from spikecrown.geometry import (Circle, ConvexityError, Ellipse, NonUniqueProjectionError, ParallelCurve,
                                 ParallelCurveDegeneracyError, PlanarDomain, SampledSpline, Superellipse,
                                 check_strict_convexity, curve_from_data, curve_length, domain_from_data,
                                 inner_parallel_curve, lemma_contraction_check, project_to_curve,
                                 reflected_distance, signed_distance)


@pytest.fixture(scope="module")
def disk():
    return PlanarDomain(Circle(1.0))


@pytest.fixture(scope="module")
def ellipse():
    return PlanarDomain(Ellipse(2.0, 1.0))


def test_disk_signed_distance(disk):
    assert signed_distance(disk, [0.0, 0.0]) == pytest.approx(-1.0)
    assert signed_distance(disk, [2.0, 0.0]) == pytest.approx(1.0)
    assert signed_distance(disk, [0.6, 0.8]) == pytest.approx(0.0, abs=1e-15)
    values = signed_distance(disk, np.array([[0.5, 0.0], [0.0, -3.0]]))
    np.testing.assert_allclose(values, [-0.5, 2.0])


def test_ellipse_signed_distance(ellipse):
    assert signed_distance(ellipse, [0.0, 0.0]) == pytest.approx(-1.0, abs=1e-10)
    assert signed_distance(ellipse, [0.0, 0.5]) == pytest.approx(-0.5, abs=1e-10)
    assert signed_distance(ellipse, [3.0, 0.0]) == pytest.approx(1.0, abs=1e-10)
    assert signed_distance(ellipse, [1.0, 0.0]) < 0
    assert ellipse.contains([1.9, 0.0])
    assert not ellipse.contains([0.0, 1.1])


def test_nonfinite_point(disk):
    with pytest.raises(ValueError):
        signed_distance(disk, [np.nan, 0.0])


def test_circle_projection(disk):
    t, point = project_to_curve(disk.boundary, [0.5, 0.5])
    assert t == pytest.approx(0.125)
    np.testing.assert_allclose(point, [np.sqrt(0.5), np.sqrt(0.5)])

    with pytest.raises(NonUniqueProjectionError):
        project_to_curve(disk.boundary, [0.0, 0.0])


def test_ellipse_projection(ellipse):
    t, point = project_to_curve(ellipse.boundary, [1.8, 0.0])
    np.testing.assert_allclose(point, [2.0, 0.0], atol=1e-9)
    assert t == pytest.approx(0.0, abs=1e-9) or t == pytest.approx(1.0, abs=1e-9)

    t, point = project_to_curve(ellipse.boundary, [0.3, 0.2])
    residual = np.dot(point - [0.3, 0.2], ellipse.boundary.tangent(t))
    assert abs(residual) < 1e-9

    with pytest.raises(NonUniqueProjectionError):
        project_to_curve(ellipse.boundary, [0.0, 0.0])


def test_frames(ellipse):
    curve = ellipse.boundary
    t = np.linspace(0.0, 1.0, 17, endpoint=False)
    normals = curve.normal(t)
    np.testing.assert_allclose(np.hypot(*normals.T), 1.0)
    # outward and counter-clockwise
    assert np.all(np.sum(normals * curve.point(t), axis=1) > 0)
    assert curve.curvature(0.0) == pytest.approx(2.0)
    assert curve.curvature(0.25) == pytest.approx(0.25)
    assert curve.kappa_max == pytest.approx(2.0)


def test_ellipse_length():
    curve = Ellipse(2.0, 1.0)
    assert curve_length(curve) == pytest.approx(8.0 * ellipe(0.75), rel=1e-10)
    assert curve_length(Circle(0.7)) == pytest.approx(1.4 * np.pi)


def test_arclength_round_trip():
    curve = Ellipse(2.0, 1.0)
    for t in (0.0, 0.13, 0.5, 0.91):
        assert curve.parameter_at(curve.arclength_at(t)) == pytest.approx(t, abs=1e-10)
    assert Circle(1.0).advance(0.0, 0.5 * np.pi) == pytest.approx(0.25, abs=1e-10)


def test_parallel_curves():
    inner = inner_parallel_curve(Circle(1.0, (0.5, -0.5)), 0.3)
    assert isinstance(inner, Circle)
    assert inner.radius == pytest.approx(0.7)
    np.testing.assert_allclose(inner.center, [0.5, -0.5])

    base = Ellipse(2.0, 1.0)
    parallel = inner_parallel_curve(base, 0.2)
    assert isinstance(parallel, ParallelCurve)
    # Steiner: the inner parallel curve is shorter by 2 pi delta
    assert curve_length(parallel) == pytest.approx(curve_length(base) - 0.4 * np.pi, rel=1e-9)
    dom = PlanarDomain(base)
    for t in (0.0, 0.2, 0.7):
        assert signed_distance(dom, parallel.point(t)) == pytest.approx(-0.2, abs=1e-9)


def test_parallel_degeneracy():
    with pytest.raises(ParallelCurveDegeneracyError):
        inner_parallel_curve(Circle(1.0), 1.1)
    with pytest.raises(ParallelCurveDegeneracyError):
        inner_parallel_curve(Ellipse(2.0, 1.0), 0.5)


def test_convexity_margin_circle():
    # nu_P.(P - Q) = |P - Q|^2 / (2R) on a circle
    assert check_strict_convexity(Circle(1.0), 1.0) == pytest.approx(0.5, abs=1e-8)
    assert check_strict_convexity(Circle(2.0), 1.0) == pytest.approx(0.25, abs=1e-8)
    assert check_strict_convexity(Circle(1.0), 0.0) == 0.0


def test_convexity_margin_ellipse():
    margin = check_strict_convexity(Ellipse(2.0, 1.0), 0.5)
    assert 0 < margin < 0.5 ** 2 / 2 * 2.0


def test_contraction_check():
    curve = Circle(1.0)
    margin = check_strict_convexity(curve, 0.5)
    report = lemma_contraction_check(curve, 0.5, 0.1, samples=2000, rng=3, margin=margin)
    assert report.passed
    assert report.worst_slack > 0
    assert report.to_data()["samples"] == 2000

    # moving one point inward by eta lengthens the chord once eta > |P - Q|^2
    with pytest.raises(PropertyViolationError):
        lemma_contraction_check(curve, 0.5, 0.9, samples=2000, rng=3, margin=margin)
    report = lemma_contraction_check(curve, 0.5, 0.9, samples=2000, rng=3, raise_on_violation=False,
                                     margin=margin)
    assert report.violations > 0


def test_contraction_check_rejections():
    curve = Circle(1.0)
    # no chord of the unit circle is 2.5 long
    with pytest.raises(DomainError):
        lemma_contraction_check(curve, 2.5, 0.1, samples=100, rng=0)
    with pytest.raises(DomainError):
        lemma_contraction_check(curve, 0.5, 0.0, samples=100, rng=0)
    with pytest.raises(DomainError):
        lemma_contraction_check(curve, 0.5, np.inf, samples=100, rng=0)
    with pytest.raises(DomainError):
        lemma_contraction_check(curve, -0.5, 0.1, samples=100, rng=0)


def test_contraction_check_gives_up_on_rare_pairs():
    curve = Circle(1.0)
    with pytest.raises(NumericalError):
        lemma_contraction_check(curve, 1.99999999, 1e-3, samples=100, rng=0, margin=1.0, max_rounds=3)


def ellipse_margin_oracle(a, b, delta_sep, samples=4000):
    """
    min of nu_P.(P - Q) over |P - Q| = delta_sep on the ellipse, from the
    angle parametrisation and a dense scan over P. Returns the margin and
    the minimising (P, Q, nu_P).
    """
    def point(theta):
        return np.array([a * np.cos(theta), b * np.sin(theta)])

    def pair(theta):
        p = point(theta)
        normal = np.array([b * np.cos(theta), a * np.sin(theta)])
        normal /= np.hypot(*normal)
        best = None
        for lo, hi in ((theta, theta + 0.5 * np.pi), (theta - 0.5 * np.pi, theta)):
            q = point(brentq(lambda s: np.hypot(*(point(s) - p)) - delta_sep, lo, hi, xtol=1e-15))
            if best is None or normal @ (p - q) < best[0]:
                best = (normal @ (p - q), p, q, normal)
        return best

    thetas = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    heights = np.array([pair(theta)[0] for theta in thetas])
    j = int(np.argmin(heights))
    step = thetas[1]
    result = minimize_scalar(lambda theta: pair(theta)[0], bounds=(thetas[j] - step, thetas[j] + step),
                             method="bounded", options={"xatol": 1e-12})
    return pair(result.x if result.fun < heights[j] else thetas[j])


def test_convexity_margin_ellipse_oracle():
    curve = Ellipse(2.0, 1.0)
    oracle, p, q, normal = ellipse_margin_oracle(2.0, 1.0, 0.5)
    margin = check_strict_convexity(curve, 0.5)
    assert margin == pytest.approx(oracle, abs=1e-6)

    report = lemma_contraction_check(curve, 0.5, 0.5 * margin, samples=5000, rng=11, margin=margin)
    assert report.passed

    # at the minimising pair the bound is sharp: an inward step on P alone
    # shortens the chord below 2 * margin and lengthens it beyond
    chord = np.hypot(*(p - q))
    assert np.hypot(*(p - 1.5 * oracle * normal - q)) < chord
    assert np.hypot(*(p - 3.0 * oracle * normal - q)) > chord


def eikonal_defect(dom, points, h=1e-4):
    grad = np.empty_like(points)
    for axis in range(2):
        step = np.zeros(2)
        step[axis] = h
        grad[:, axis] = (dom.signed_distance(points + step) - dom.signed_distance(points - step)) / (2.0 * h)
    return np.max(np.abs(np.hypot(*grad.T) - 1.0))


def test_eikonal(ellipse):
    rng = np.random.default_rng(5)
    curve = ellipse.boundary
    t = rng.random(200)
    depth = rng.uniform(0.05, 0.4, 200)
    points = curve.point(t) - depth[:, None] * curve.normal(t)
    np.testing.assert_allclose(ellipse.signed_distance(points), -depth, atol=1e-9)
    assert eikonal_defect(ellipse, points) < 1e-4


def test_eikonal_parallel_curve(ellipse):
    rng = np.random.default_rng(6)
    gamma = inner_parallel_curve(ellipse.boundary, 0.2)
    inner = PlanarDomain(gamma)
    t = rng.random(100)
    depth = rng.uniform(0.02, 0.25, 100)
    points = gamma.point(t) - depth[:, None] * gamma.normal(t)
    np.testing.assert_allclose(inner.signed_distance(points), -depth, atol=1e-9)
    assert eikonal_defect(inner, points) < 1e-4


def test_projection_onto_parallel_curve(ellipse):
    # inradius 1, so delta = 0.3 < inradius / 2
    gamma = inner_parallel_curve(ellipse.boundary, 0.3)
    for t in np.linspace(0.0, 1.0, 17, endpoint=False) + 0.013:
        x = gamma.point(t)
        assert signed_distance(ellipse, x) == pytest.approx(-0.3, abs=1e-9)
        _, nearest = project_to_curve(gamma, x)
        np.testing.assert_allclose(nearest, x, atol=1e-9)


def test_rotation_invariance():
    lying = PlanarDomain(Ellipse(2.0, 1.0))
    standing = PlanarDomain(Ellipse(1.0, 2.0, center=(0.3, -0.1)))
    assert curve_length(standing.boundary) == pytest.approx(curve_length(lying.boundary), rel=1e-10)
    assert standing.inradius == pytest.approx(lying.inradius, abs=1e-6)
    assert check_strict_convexity(standing.boundary, 0.5) == pytest.approx(
        check_strict_convexity(lying.boundary, 0.5), abs=1e-8)

    rng = np.random.default_rng(9)
    points = rng.uniform(-1.5, 1.5, (50, 2)) * [1.0, 0.6]
    turned = np.column_stack([-points[:, 1], points[:, 0]]) + [0.3, -0.1]
    np.testing.assert_allclose(standing.signed_distance(turned), lying.signed_distance(points), atol=1e-9)


def test_reflected_distance(disk):
    assert reflected_distance(disk, [0.3, 0.4], [0.3, 0.4]) == pytest.approx(1.0, abs=1e-9)
    assert reflected_distance(disk, [0.5, 0.0], [-0.5, 0.0]) == pytest.approx(2.0, abs=1e-9)


def test_inradius(ellipse, disk):
    assert ellipse.inradius == pytest.approx(1.0, abs=1e-6)
    assert disk.inradius == pytest.approx(1.0, abs=1e-6)


def test_superellipse():
    round_curve = Superellipse(1.0, 1.0, 2.0)
    t = np.linspace(0.0, 1.0, 9, endpoint=False)
    np.testing.assert_allclose(np.hypot(*round_curve.point(t).T), 1.0)
    np.testing.assert_allclose(round_curve.curvature(t), 1.0)

    square = Superellipse(1.0, 1.0, 4.0)
    assert square.point(0.0) == pytest.approx([1.0, 0.0])
    assert np.hypot(*square.point(0.125)) > 1.0

    with pytest.raises(ConvexityError):
        Superellipse(1.0, 1.0, 1.5)


def test_sampled_spline():
    theta = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
    clockwise = np.column_stack([np.cos(-theta), np.sin(-theta)])
    curve = SampledSpline(clockwise)

    assert curve_length(curve) == pytest.approx(2.0 * np.pi, rel=1e-4)
    assert curve.kappa_min > 0
    # reoriented counter-clockwise: the normal points out
    assert np.dot(curve.normal(0.1), curve.point(0.1)) > 0.99


def test_domains_from_data(tmp_path):
    dom = domain_from_data({"kind": "circle", "R": 2.0, "center": [1.0, 0.0]})
    assert signed_distance(dom, [1.0, 0.0]) == pytest.approx(-2.0)

    theta = np.linspace(0.0, 2.0 * np.pi, 40, endpoint=False)
    rows = "\n".join("{!r},{!r}".format(float(1.5 * np.cos(a)), float(np.sin(a))) for a in theta)
    (tmp_path / "shape.csv").write_text("x,y\n" + rows + "\n")
    dom = domain_from_data({"kind": "sampled-spline", "points_csv": "shape.csv"}, str(tmp_path))
    assert signed_distance(dom, [0.0, 0.0]) == pytest.approx(-1.0, abs=1e-3)

    with pytest.raises(ConfigError):
        curve_from_data({"kind": "ellipse", "a": 2.0})
    with pytest.raises(ConfigError):
        curve_from_data({"kind": "triangle"})
    with pytest.raises(ConfigError):
        curve_from_data({"kind": "circle", "R": -1.0})


def test_nonconvex_spline_rejected():
    theta = np.linspace(0.0, 2.0 * np.pi, 60, endpoint=False)
    radius = 1.0 + 0.4 * np.cos(5 * theta)
    with pytest.raises(ConvexityError):
        curve_from_data({"kind": "sampled-spline", "points": np.column_stack([radius * np.cos(theta),
                                                                            radius * np.sin(theta)]).tolist()})
