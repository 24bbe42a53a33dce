#!/usr/bin/env python3
# coding=utf-8

import mpmath
import numpy as np
import pytest

from spikecrown.errors import ConfigError, DomainError
from spikecrown.geometry import Circle, PlanarDomain, inner_parallel_curve
from spikecrown.ground_state import eval_log_w, eval_w
from spikecrown.packing import SpikeConfiguration, optimal_delta, perturb_along_curve
from spikecrown.pde import discretize
from spikecrown.reduced_energy import (DescentTrace, ReducedEnergyModel, configuration_set_membership,
                                       evaluate_M, gradient_M, law_drift, location_checks, minimize_in_U,
                                       psi_eps, psi_from_grid, psi_limit, regular_polygon_residual,
                                       scaled_energy)


@pytest.fixture(scope="module")
def disk():
    return PlanarDomain(Circle(1.0))


@pytest.fixture(scope="module")
def pair(disk, cubic_plane):
    """
    Two antipodal spikes 0.4 from the boundary of the unit disk.
    """
    model = ReducedEnergyModel(disk, cubic_plane, epsilon=0.1, delta=0.5, eta=0.2)
    return model, SpikeConfiguration([[0.6, 0.0], [-0.6, 0.0]])


@pytest.fixture(scope="module")
def square(disk, cubic_plane):
    model = ReducedEnergyModel(disk, cubic_plane, epsilon=0.06, delta=0.3, eta=0.1)
    config = SpikeConfiguration(0.7 * np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]))
    return model, config


@pytest.fixture(scope="module")
def disk_crown(disk):
    return optimal_delta(disk, 8)


def test_model_validation(disk, cubic_plane):
    with pytest.raises(ConfigError):
        ReducedEnergyModel(disk, cubic_plane, epsilon=0.2, delta=0.5, eta=0.1)
    with pytest.raises(ConfigError):
        ReducedEnergyModel(disk, cubic_plane, epsilon=0.1, delta=0.5, eta=0.25)
    with pytest.raises(ConfigError):
        ReducedEnergyModel(disk, cubic_plane, epsilon=0.1, delta=0.5, eta=0.1, form="quadratic")
    with pytest.raises(ConfigError):
        ReducedEnergyModel(disk, cubic_plane, epsilon=0.1, delta=0.5, eta=0.1, form="psi_numeric")


def test_pair_energy_leading(pair, cubic_plane):
    model, config = pair
    # S = 1/2 (e^-8 + e^-8) + w(12)
    expected = np.exp(-8.0) + eval_w(cubic_plane, 12.0)
    log_value, breakdown = evaluate_M(model, config)
    assert log_value == pytest.approx(np.log(expected), rel=1e-12)
    assert breakdown.sign == 1
    assert not breakdown.cancellation
    np.testing.assert_array_equal(breakdown.parity, [-1.0])
    assert breakdown.log_repulsive == pytest.approx(np.log(eval_w(cubic_plane, 12.0)), rel=1e-12)
    assert breakdown.log_attractive == -np.inf
    assert scaled_energy(model, config) == pytest.approx(np.exp(10.0) * expected, rel=1e-12)


def test_pair_energy_exponential(disk, cubic_plane, pair):
    _, config = pair
    model = ReducedEnergyModel(disk, cubic_plane, epsilon=0.1, delta=0.5, eta=0.2, form="exponential")
    log_value, _ = evaluate_M(model, config)
    assert log_value == pytest.approx(np.log(2.0 * np.exp(-8.0) + np.exp(-12.0)), rel=1e-12)


def test_square_signed_sum(disk, cubic_plane, square):
    _, config = square
    model = ReducedEnergyModel(disk, cubic_plane, epsilon=0.06, delta=0.3, eta=0.1, form="exponential")
    side = 0.7 * np.sqrt(2.0) / 0.06
    diagonal = 1.4 / 0.06
    expected = 4.0 * np.exp(-0.6 / 0.06) + 4.0 * np.exp(-side) - 2.0 * np.exp(-diagonal)

    log_value, breakdown = evaluate_M(model, config)
    assert breakdown.sign * np.exp(log_value) == pytest.approx(expected, rel=1e-12)
    assert np.sum(breakdown.parity < 0) == 4
    assert np.sum(breakdown.parity > 0) == 2


def test_energy_deep_in_log_space(disk, cubic_plane):
    model = ReducedEnergyModel(disk, cubic_plane, epsilon=5e-4, delta=0.5, eta=0.2)
    config = SpikeConfiguration([[0.5, 0.0], [-0.5, 0.0]])
    log_value, _ = evaluate_M(model, config)
    # e^-2000 underflows; its logarithm does not
    expected = np.logaddexp(-2000.0, eval_log_w(cubic_plane, 2000.0))
    assert log_value == pytest.approx(expected, rel=1e-12)
    assert np.isfinite(log_value)


def test_outside_configuration_set(pair):
    model, _ = pair
    with pytest.raises(DomainError):
        evaluate_M(model, SpikeConfiguration([[0.95, 0.0], [-0.6, 0.0]]))
    with pytest.raises(DomainError):
        psi_eps(model, [0.95, 0.0])


def test_membership(square):
    model, config = square
    assert configuration_set_membership(model, config)

    deep = configuration_set_membership(model, config.with_points(0.5 * config.points))
    assert "distance" in deep.failures

    reversed_order = configuration_set_membership(model, config.with_points(config.points[::-1]))
    assert reversed_order.failures == ["order"]

    crowded = config.with_points(0.7 * np.array([[1.0, 0.0], [np.cos(0.5), np.sin(0.5)], [-1.0, 0.0],
                                                 [0.0, -1.0]]))
    assert configuration_set_membership(model, crowded).failures == ["chord"]


def test_gradient_methods_agree(square):
    model, config = square
    analytic = gradient_M(model, config, "analytic")
    central = gradient_M(model, config, "central")
    richardson = gradient_M(model, config, "richardson")
    scale = np.linalg.norm(analytic)

    assert scale > 0
    assert np.linalg.norm(central - analytic) < 1e-5 * scale
    assert np.linalg.norm(richardson - analytic) < 1e-5 * scale
    with pytest.raises(ConfigError):
        gradient_M(model, config, "forward")


def test_gradient_of_symmetric_crown_is_radial(disk, cubic_plane, disk_crown):
    delta_star, crown = disk_crown
    model = ReducedEnergyModel(disk, cubic_plane, delta_star / 10.0, delta_star, delta_star / 10.0)
    gradient = gradient_M(model, crown, "analytic").reshape(-1, 2)
    radial = crown.points / np.hypot(*crown.points.T)[:, None]
    tangential = gradient[:, 0] * -radial[:, 1] + gradient[:, 1] * radial[:, 0]
    assert np.max(np.abs(tangential)) < 1e-6


def test_minimize_from_rotated_crown(disk, cubic_plane, disk_crown):
    delta_star, crown = disk_crown
    eta = delta_star / 10.0
    epsilon = delta_star / 10.0
    model = ReducedEnergyModel(disk, cubic_plane, epsilon, delta_star, eta)

    gamma = inner_parallel_curve(disk.boundary, delta_star)
    init = perturb_along_curve(gamma, crown, eta / 4.0 * np.array([1.0, -1.0, 0.5, 0.0, -0.5, 1.0, 0.0, -1.0]))
    result, log_value, trace = minimize_in_U(model, init)

    assert trace.stop_reason in ("gradient", "stagnation")
    assert trace.checks["passed"]
    assert trace.checks["max_drift"] <= 5.0 * epsilon
    assert regular_polygon_residual(result) < 1e-6
    assert log_value <= evaluate_M(model, init)[0]

    logs = [row[1] for row in trace.rows]
    assert all(later <= earlier for earlier, later in zip(logs, logs[1:]))


def test_minimize_from_exact_crown(disk, cubic_plane, disk_crown):
    delta_star, crown = disk_crown
    model = ReducedEnergyModel(disk, cubic_plane, delta_star / 8.0, delta_star, delta_star / 10.0)
    result, _, trace = minimize_in_U(model, crown)
    assert configuration_set_membership(model, result)
    assert regular_polygon_residual(result) < 1e-6


def test_minimize_rejects_outside_start(pair):
    model, _ = pair
    with pytest.raises(DomainError):
        minimize_in_U(model, SpikeConfiguration([[0.95, 0.0], [-0.6, 0.0]]))


def test_law_drift(disk, disk_crown):
    delta_star, crown = disk_crown
    drift, d, chords = law_drift(disk, crown, delta_star)
    assert drift < 1e-8
    np.testing.assert_allclose(d, delta_star, atol=1e-10)
    assert regular_polygon_residual(crown) < 1e-9


def test_location_checks(pair):
    model, config = pair
    checks = location_checks(model, config)
    # d = 0.4 and the chord is 1.2 against delta = 0.5
    assert checks["max_drift"] == pytest.approx(0.2)
    assert checks["tolerance"] == pytest.approx(0.5)
    assert checks["passed"]


def test_trace_file(tmp_path, pair):
    model, config = pair
    trace = DescentTrace()
    trace.record(0, -8.0, 1.0, config, model)
    trace.write(str(tmp_path / "trace.csv"))
    header, rows = trace.to_rows()
    assert header == ["iter", "log_M", "grad_norm", "min_chord", "min_dist"]
    assert rows[0][3] == pytest.approx(1.2)
    assert rows[0][4] == pytest.approx(0.4)
    assert trace.iterations == 0


def test_psi_limit(pair):
    model, _ = pair
    assert psi_limit(model, [0.6, 0.0], [0.6, 0.0]) == pytest.approx(0.8, abs=1e-9)


def test_crown_energy_scaling(disk, quartic_plane, disk_crown):
    delta_star, crown = disk_crown
    exponents = []
    for divisor in (8, 12, 16):
        epsilon = delta_star / divisor
        model = ReducedEnergyModel(disk, quartic_plane, epsilon, delta_star, delta_star / 10.0)
        exponents.append(-epsilon * evaluate_M(model, crown)[0])

    # -eps log M = 2 delta - eps log(k/2 + k w(2 delta/eps) e^(2 delta/eps))
    distances = [2.0 * delta_star - x for x in exponents]
    assert all(x > 0 for x in distances)
    assert distances[0] > distances[1] > distances[2]
    assert distances[-1] <= 0.1 * 2.0 * delta_star


def test_exponential_energy_against_mpmath(disk, cubic_plane, disk_crown):
    delta_star, crown = disk_crown
    epsilon = delta_star / 1000.0
    model = ReducedEnergyModel(disk, cubic_plane, epsilon, delta_star, delta_star / 10.0, form="exponential")
    depth = delta_star * (1.0 + 1e-3 * np.array([1.0, -1.0, 0.5, 0.0, -0.5, 1.0, 0.0, -1.0]))
    config = crown.with_points(crown.points / np.hypot(*crown.points.T)[:, None] * (1.0 - depth)[:, None])

    log_value, breakdown = evaluate_M(model, config, check_membership=False)

    with mpmath.workdps(50):
        eps = mpmath.mpf(epsilon)
        points = [(mpmath.mpf(x), mpmath.mpf(y)) for x, y in config.points]
        total = mpmath.fsum(mpmath.exp(-2 * (1 - mpmath.hypot(x, y)) / eps) for x, y in points)
        for i in range(len(points)):
            for j in range(i + 1, len(points)):
                chord = mpmath.hypot(points[i][0] - points[j][0], points[i][1] - points[j][1])
                total -= (-1) ** (i + j) * mpmath.exp(-chord / eps)
        expected = float(mpmath.log(abs(total)))
        expected_sign = 1 if total > 0 else -1

    assert log_value == pytest.approx(expected, abs=1e-9)
    assert breakdown.sign == expected_sign


@pytest.mark.slow
def test_psi_numeric_converges_to_twice_the_distance(disk, cubic_plane):
    errors = []
    grids = {}
    for epsilon in (0.1, 0.05, 0.025):
        grids[epsilon] = discretize(disk, epsilon / 4.0)
        errors.append(abs(psi_from_grid(grids[epsilon], cubic_plane, epsilon, [0.7, 0.0]) - 0.6))
    # psi = 2d + O(eps log(1/eps))
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 0.05

    model = ReducedEnergyModel(disk, cubic_plane, 0.05, 0.3, 0.1, form="psi_numeric", grid=grids[0.05])
    assert psi_eps(model, [0.7, 0.0]) == pytest.approx(psi_eps(model, [0.0, -0.7]), abs=1e-3)
