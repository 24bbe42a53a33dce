#!/usr/bin/env python3
# coding=utf-8

"""
pipeline.py
Purpose: One job of the toolkit: ground state, crown packing, reduced
energy minimisation and the nonlinear solve for every eps, and the
verdict over the acceptance criteria. Stages announce themselves through
asyncblink signals; results are cached on the pipeline so later stages
reuse earlier ones.
"""

import os
import logging
from dataclasses import dataclass

import numpy as np
from asyncblink import signal, ANY
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from spikecrown.errors import ConfigError, CrownError
from spikecrown.export import write_json
from spikecrown.geometry import Circle, inner_parallel_curve
from spikecrown.ground_state import load_profile, normalization_constants, save_profile, shoot
from spikecrown.packing import (SpikeConfiguration, boundary_gap_samples, choose_k, optimal_delta,
                                perturb_along_curve, phi_k, two_point_property_check, write_crown)
from spikecrown.pde import (assemble_ansatz, discrete_energy, discretize, extract_peaks, fit_lattice_ansatz,
                            lattice_spike, newton_solve, reflect_diagonal, reflect_x, reflect_y, residual_norm,
                            rotate90, symmetry_defect, symmetry_group, write_field, write_residuals)
from spikecrown.plugins import load_plugins
from spikecrown.reduced_energy import (ReducedEnergyModel, evaluate_M, law_drift, minimize_in_U, psi_from_grid,
                                       regular_polygon_residual)
from spikecrown.runner import run_jobs, run_sequential

log = logging.getLogger(__name__)

DEFAULT_PLUGINS = ("spikecrown.plugins.core", "spikecrown.plugins.tracking")

RESIDUAL_TOL = 1e-10
CHORD_TOL = 1e-8
SCALING_TOL = 0.10
POLYGON_FIT_TOL = 1e-6
SYMMETRY_TOL = 1e-8
# lattice spike disk radius and fit core radius, in units of delta*
LATTICE_RADIUS = 2.5
CORE_RADIUS = 0.5

GRID_SYMMETRIES = {"rotate90": (rotate90, lambda x, y: (-y, x)),
                   "reflect_x": (reflect_x, lambda x, y: (x, -y)),
                   "reflect_y": (reflect_y, lambda x, y: (-x, y)),
                   "reflect_diagonal": (reflect_diagonal, lambda x, y: (y, x))}


@dataclass
class Packing:
    dom: object
    k: int
    delta_star: float
    eta: float
    crown: SpikeConfiguration
    epsilons: list
    gap: object
    two_point: object


@dataclass
class Reduction:
    epsilon: float
    config: SpikeConfiguration
    summary: dict


@dataclass
class Solution:
    epsilon: float
    field: object
    peaks: list
    summary: dict


def criterion(name, passed, measured, threshold):
    return {"name": name, "passed": bool(passed), "measured": measured, "threshold": threshold}


def _decreasing(values):
    return all(b < a for a, b in zip(values, values[1:]))


def _crown_parity(config, point_map, tol=1e-8):
    """
    Parity of the signed crown under a point symmetry about the origin, or
    None when the map does not carry the crown onto itself.
    """
    mapped = np.column_stack(point_map(config.points[:, 0], config.points[:, 1]))
    distance = np.hypot(mapped[:, None, 0] - config.points[None, :, 0], mapped[:, None, 1] - config.points[None, :, 1])
    image = np.argmin(distance, axis=1)
    if np.max(distance[np.arange(config.k), image]) > tol:
        return None
    parity = config.signs[image] * config.signs
    if np.any(parity != parity[0]):
        return None
    return int(parity[0])


def _match_to(points, reference):
    """reference with its points replaced by the nearest of points, one to one."""
    points = np.asarray(points, dtype=float)
    rows, cols = linear_sum_assignment(cdist(reference.points, points))
    return reference.with_points(points[cols[np.argsort(rows)]])


def _align_to(config, reference):
    """
    config turned about the origin by the mean angular offset of its points
    from their angularly nearest reference points, listed in the reference
    order so the signs carry over.
    """
    angles = np.arctan2(config.points[:, 1], config.points[:, 0])
    reference_angles = np.arctan2(reference.points[:, 1], reference.points[:, 0])
    offsets = np.angle(np.exp(1j * (angles[:, None] - reference_angles[None, :])))
    nearest = offsets[np.arange(len(angles)), np.argmin(np.abs(offsets), axis=1)]
    turn = np.angle(np.sum(np.exp(1j * nearest)))
    c, s = np.cos(turn), np.sin(turn)
    return _match_to(config.points @ np.array([[c, -s], [s, c]]), reference)


class CrownPipeline:
    """
    Runs the stages of one job. Construct with a validated JobConfig;
    stage methods compute what they need on first use.
    """

    def __init__(self, config, workers=None, plugins=DEFAULT_PLUGINS):
        self.config = config
        self.out_dir = config.output_dir
        self.workers = workers
        self.logger = logging.getLogger(__name__)
        self.config_hash = config.config_hash
        self.job = self.config_hash[:12]
        self.tracking_registry = None
        self.ground_state_summary = None

        self._profile = None
        self._packing = None
        self._reductions = None
        self._solutions = None
        self._lattices = {}

        load_plugins(*plugins)
        os.makedirs(self.out_dir, exist_ok=True)
        signal("job-created").send(self, job=self.job)

    def on(self, event):

        def process(f):
            """
            Register a handler for a pipeline or solver signal.
            """
            self.logger.info("Registering function {} for event {}".format(f.__name__, event))

            signal(event).connect(f, sender=ANY, weak=False)

            return f

        return process

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def _run_stage(self, stage, fn):
        signal("stage-started").send(self, stage=stage, job=self.job)
        try:
            result = fn()
        except Exception as error:
            signal("stage-failed").send(self, stage=stage, job=self.job, error=error)
            raise
        signal("stage-complete").send(self, stage=stage, job=self.job)
        return result

    def _require_planar(self):
        if self.config.dimension != 2:
            raise ConfigError("domain stages need the planar ground state (dimension 2), got {}"
                              .format(self.config.dimension))

    # ground state

    def ground_state(self):
        if self._profile is None:
            self._profile = self._run_stage("ground-state", self._ground_state)
        return self._profile

    def _cached_profile(self, stem, nl):
        if not os.path.exists(stem + ".json") or not os.path.exists(stem + ".csv"):
            return None
        try:
            profile = load_profile(stem)
        except (OSError, ValueError, KeyError) as error:
            self.logger.warning("ignoring unreadable profile {}: {}".format(stem, error))
            return None
        if profile.p != nl.p or profile.dimension_n != nl.dimension_n:
            return None
        self.logger.info("reusing ground state from {}".format(stem))
        return profile

    def _ground_state(self):
        nl = self.config.nonlinearity()
        stem = self.path("profile")
        profile = self._cached_profile(stem, nl)
        if profile is None:
            profile = shoot(nl)
            save_profile(profile, stem, self.config_hash)

        e1, gamma = normalization_constants(profile)
        summary = {"p": profile.p, "N": profile.dimension_n, "w0": profile.w0, "A": profile.decay_A,
                   "e1": e1, "gamma": gamma}
        write_json(self.path("ground_state.json"), summary, self.config_hash)
        self.ground_state_summary = summary
        return profile

    # packing

    def pack(self):
        if self._packing is None:
            self._packing = self._run_stage("pack", self._pack)
        return self._packing

    def _pack(self):
        config = self.config
        dom = config.build_domain()
        k = int(config.k) if config.k is not None else choose_k(dom, config.delta0)
        delta_star, crown = optimal_delta(dom, k, config.delta0)
        eta = config.eta_for(delta_star)
        epsilons = config.epsilon_list(delta_star)

        two_point = two_point_property_check(dom.boundary, delta_star)
        rng = np.random.default_rng(int(config.seed))
        gap = boundary_gap_samples(dom, crown, delta_star, eta, int(config.samples), rng)

        summary = {"k": k, "delta_star": delta_star, "eta": eta, "epsilons": epsilons,
                   "phi_k": phi_k(dom, crown), "chord_error": float(np.max(np.abs(crown.chords() - 2 * delta_star))),
                   "crown": crown.to_data(), "two_point": two_point.to_data(), "boundary_gap": gap.to_data(),
                   "domain": dom.to_data()}
        write_crown(self.path("crown"), dom, crown, summary, self.config_hash)
        self.logger.info("k={} delta*={:.15g} eta={:.6g} gap={:.6g}".format(k, delta_star, eta, gap.gap))
        return Packing(dom, k, delta_star, eta, crown, epsilons, gap, two_point)

    # reduced energy

    def energy_model(self, epsilon, form=None):
        packing = self.pack()
        form = form or self.config.form
        grid = None
        if form == "psi_numeric":
            grid = discretize(packing.dom, self.config.h_factor * epsilon)
        return ReducedEnergyModel(packing.dom, self.ground_state(), epsilon, packing.delta_star, packing.eta,
                                  form, grid)

    def initial_configuration(self):
        """
        The crown moved by eta/4 of arclength along gamma_delta*.
        """
        packing = self.pack()
        gamma = inner_parallel_curve(packing.dom.boundary, packing.delta_star)
        return perturb_along_curve(gamma, packing.crown, packing.eta / 4.0)

    def reduce(self):
        if self._reductions is None:
            self._require_planar()
            self.ground_state()
            self.pack()
            self._reductions = self._run_stage("reduce", self._reduce)
        return self._reductions

    def _reduce(self):
        jobs = list(enumerate(self.pack().epsilons, 1))
        if self.config.continuation:
            reductions = run_sequential(self._reduce_one, jobs)
        else:
            reductions = run_jobs(lambda job: self._reduce_one(job, None), jobs, self.workers)
        write_json(self.path("reduce.json"), {"results": [r.summary for r in reductions]}, self.config_hash)
        return reductions

    def _reduce_one(self, job, previous):
        index, epsilon = job
        packing = self.pack()
        model = self.energy_model(epsilon)
        init = previous.config if previous is not None else self.initial_configuration()

        minimizer, log_m, trace = minimize_in_U(model, init)
        trace.write(self.path("reduce_eps{}.csv".format(index)))
        log_m_crown, breakdown = evaluate_M(model, packing.crown)

        summary = {"index": index, "epsilon": epsilon, "log_M": log_m, "log_M_crown": log_m_crown,
                   "crown_exponent": -epsilon * log_m_crown, "iterations": trace.iterations,
                   "stop_reason": trace.stop_reason, "checks": trace.checks, "points": minimizer.points,
                   "crown_breakdown": breakdown.to_data()}
        if isinstance(packing.dom.boundary, Circle):
            summary["polygon_residual"] = regular_polygon_residual(minimizer, packing.dom.boundary.center)
        return Reduction(epsilon, minimizer, summary)

    # nonlinear solve

    def _centred_disk(self):
        curve = self.pack().dom.boundary
        return isinstance(curve, Circle) and np.allclose(curve.center, 0.0)

    def crown_group(self):
        """
        The grid symmetries carrying the signed crown onto itself, closed
        into a group; None off centred disks or when no symmetry applies.
        """
        if not self._centred_disk():
            return None
        crown = self.pack().crown
        generators = []
        for transform, point_map in GRID_SYMMETRIES.values():
            parity = _crown_parity(crown, point_map)
            if parity is not None:
                generators.append((transform, parity))
        return symmetry_group(generators) if generators else None

    def _lattice(self, epsilon):
        if epsilon not in self._lattices:
            self._lattices[epsilon] = lattice_spike(self.config.nonlinearity(), self.ground_state(), epsilon,
                                                   self.config.h_factor * epsilon,
                                                   LATTICE_RADIUS * self.pack().delta_star)
        return self._lattices[epsilon]

    def solve(self):
        if self._solutions is None:
            reductions = self.reduce()
            self._solutions = self._run_stage("solve", lambda: self._solve(reductions))
        return self._solutions

    def _solve(self, reductions):
        jobs = list(enumerate(reductions, 1))
        if self.config.continuation:
            solutions = run_sequential(self._solve_one, jobs)
        else:
            solutions = run_jobs(lambda job: self._solve_one(job, None), jobs, self.workers)
        write_json(self.path("solve.json"), {"results": [s.summary for s in solutions]}, self.config_hash)
        return solutions

    def _solve_one(self, job, previous):
        index, reduction = job
        packing = self.pack()
        profile = self.ground_state()
        nl = self.config.nonlinearity()
        epsilon = reduction.epsilon
        group = self.crown_group()

        grid = discretize(packing.dom, self.config.h_factor * epsilon)
        start = reduction.config
        if previous is not None:
            start = _match_to(previous.summary["centres"], start)
        if group:
            start = _align_to(start, packing.crown)
        ansatz = assemble_ansatz(grid, profile, epsilon, start)

        field, history = newton_solve(grid, nl, epsilon, ansatz, group=group)
        write_field(self.path("field_eps{}.csv".format(index)), field)
        write_residuals(self.path("residuals_eps{}.csv".format(index)), history)

        peaks = extract_peaks(grid, field, profile.w0, expected=packing.k)
        signs = np.array([peak.sign for peak in peaks])
        fit = fit_lattice_ansatz(grid, field, self._lattice(epsilon), [peak.location for peak in peaks], signs,
                                 CORE_RADIUS * packing.delta_star)
        drift = law_drift(packing.dom, SpikeConfiguration(fit.points, strict=False), packing.delta_star)[0]
        sup, l2 = residual_norm(grid, nl, epsilon, field)

        energy = discrete_energy(grid, nl, epsilon, field)
        summary = {"index": index, "epsilon": epsilon, "h": grid.h, "unknowns": grid.size,
                   "newton_iterations": len(history) - 1, "residual_sup": sup, "residual_l2": l2,
                   "peaks": [{"location": p.location, "sign": p.sign, "amplitude": p.amplitude} for p in peaks],
                   "alternating": bool(np.all(signs * np.roll(signs, -1) == -1)),
                   "centres": fit.points,
                   "peak_drift": drift,
                   "ansatz_gap": float(np.max(np.abs(field.values - ansatz.values))),
                   "lattice_gap": fit.gap,
                   "lattice_full_gap": fit.full_gap,
                   "scaled_ansatz_gap": fit.gap * float(np.exp(packing.delta_star / (2.0 * epsilon))),
                   "energy": energy,
                   "energy_excess": energy / epsilon ** 2 - packing.k * self.ground_state_summary["e1"]}
        return Solution(epsilon, field, peaks, summary)

    # checks that need their own solves

    def symmetry_check(self):
        """
        Newton solve from the exact crown at the largest eps on a disk
        centred at the origin, kept in the subspace equivariant under the
        crown group; returns the dihedral defect for each grid symmetry that
        maps the signed crown onto itself.
        """
        packing = self.pack()
        group = self.crown_group()
        if group is None:
            return None

        epsilon = packing.epsilons[0]
        grid = discretize(packing.dom, self.config.h_factor * epsilon)
        init = assemble_ansatz(grid, self.ground_state(), epsilon, packing.crown)
        field, _ = newton_solve(grid, self.config.nonlinearity(), epsilon, init, group=group)

        defects = {}
        for name, (transform, point_map) in GRID_SYMMETRIES.items():
            parity = _crown_parity(packing.crown, point_map)
            if parity is not None:
                defects[name] = symmetry_defect(grid, field, transform, parity)
        return defects

    def psi_convergence(self):
        """
        |psi_eps(P) - 2d| along eps = d/3, d/6, d/12 for P on the inward
        normal at parameter 0, at depth d = min(0.3, inradius/2).
        """
        dom = self.pack().dom
        curve = dom.boundary
        depth = min(0.3, 0.5 * dom.inradius)
        P = np.asarray(curve.point(0.0)) - depth * np.asarray(curve.normal(0.0))
        errors = []
        for epsilon in (depth / 3.0, depth / 6.0, depth / 12.0):
            grid = discretize(dom, self.config.h_factor * epsilon)
            errors.append(abs(psi_from_grid(grid, self.ground_state(), epsilon, P) - 2.0 * depth))
        return P, errors

    # verdict

    def criteria(self):
        packing = self.pack()
        reductions = self.reduce()
        solutions = self.solve()
        delta = packing.delta_star
        results = []

        chord_error = float(np.max(np.abs(packing.crown.chords() - 2 * delta)))
        results.append(criterion("crown_equal_chords", chord_error <= CHORD_TOL, chord_error, CHORD_TOL))
        phi_error = abs(phi_k(packing.dom, packing.crown) - delta)
        results.append(criterion("crown_phi_k", phi_error <= CHORD_TOL, phi_error, CHORD_TOL))
        results.append(criterion("two_point_property", packing.two_point.passed, packing.two_point.to_data(), 2))
        results.append(criterion("boundary_gap", packing.gap.gap > 0, packing.gap.gap, 0.0))

        exponents = [r.summary["crown_exponent"] for r in reductions]
        distances = [abs(x - 2 * delta) for x in exponents]
        scaling_ok = _decreasing(distances) and distances[-1] <= SCALING_TOL * 2 * delta
        results.append(criterion("energy_scaling", scaling_ok, exponents, SCALING_TOL))

        drifts = [r.summary["checks"]["max_drift"] / r.epsilon for r in reductions]
        results.append(criterion("minimizer_location", all(r.summary["checks"]["passed"] for r in reductions),
                                 drifts, 5.0))
        if isinstance(packing.dom.boundary, Circle):
            fits = [r.summary["polygon_residual"] for r in reductions]
            results.append(criterion("regular_polygon_fit", max(fits) < POLYGON_FIT_TOL, fits, POLYGON_FIT_TOL))

        residuals = [s.summary["residual_sup"] for s in solutions]
        results.append(criterion("newton_residual", max(residuals) < RESIDUAL_TOL, residuals, RESIDUAL_TOL))
        results.append(criterion("peak_structure", all(s.summary["alternating"] for s in solutions),
                                 [len(s.peaks) for s in solutions], packing.k))
        peak_drift = [s.summary["peak_drift"] for s in solutions]
        results.append(criterion("peak_drift_decreasing", _decreasing(peak_drift), peak_drift, None))
        ansatz_gap = [s.summary["scaled_ansatz_gap"] for s in solutions]
        results.append(criterion("ansatz_gap_decreasing", _decreasing(ansatz_gap), ansatz_gap, None))

        defects = self.symmetry_check()
        if defects:
            worst = max(defects.values())
            results.append(criterion("dihedral_symmetry", worst < SYMMETRY_TOL, defects, SYMMETRY_TOL))

        if self.config.psi_check:
            _, errors = self.psi_convergence()
            results.append(criterion("psi_convergence", _decreasing(errors), errors, None))
        return results

    def verify(self):
        """
        Runs every stage and writes verdict.json. Stage failures are caught
        and named in the verdict; the error data is returned alongside.
        """
        results = []
        error_data = None
        try:
            results = self._run_stage("verify", self.criteria)
        except CrownError as error:
            error_data = error.to_data()
        except Exception as error:
            self.logger.exception("unexpected failure")
            error_data = {"error": type(error).__name__, "message": str(error), "exit_code": 3}

        failed = None
        if error_data is not None and self.tracking_registry is not None:
            failed = self.tracking_registry.failed_stage
        verdict = {"job": self.job, "passed": error_data is None and all(c["passed"] for c in results),
                   "criteria": results, "failed_stage": failed, "error": error_data}
        write_json(self.path("verdict.json"), verdict, self.config_hash)
        signal("job-complete").send(self, job=self.job, passed=verdict["passed"])
        return verdict
