#!/usr/bin/env python3
# coding=utf-8

"""
pde.py
Purpose: Finite differences for  eps^2 Lap v - v + f(v) = 0, v = 0 on the
boundary, on a uniform grid with Shortley-Weller cut cells: the linear
projection problem, the alternate-sign ansatz, damped Newton, energies and
peak extraction.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from asyncblink import signal
from scipy import ndimage, sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import least_squares
from scipy.sparse.linalg import splu
from scipy.spatial.distance import cdist

from spikecrown.errors import NumericalError, DomainError
from spikecrown.export import write_csv
from spikecrown.geometry import Circle, PlanarDomain
from spikecrown.ground_state import eval_w

log = logging.getLogger(__name__)

EXTERIOR, INTERIOR, BOUNDARY_ADJACENT = 0, 1, 2

# arm order: east, west, north, south
DIRECTIONS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])
CUT_STEPS = 50
DEGENERATE_CUT = 1e-8


class LinearSolveError(NumericalError):
    pass


class NewtonStallError(NumericalError):
    pass


class NewtonDivergenceError(NumericalError):
    pass


class PeakCountError(NumericalError):
    pass


class Grid2D:
    """
    Uniform grid of spacing h with nodes at integer multiples of h,
    symmetric about the origin. Unknowns live at the nodes inside the
    domain; arms[n] holds the distance from node n to its east, west, north
    and south neighbour or to the boundary crossing in between.
    """

    def __init__(self, dom, h):
        self.dom = dom
        self.h = float(h)
        self._factors = {}

        pts = dom.boundary.points
        mx = int(np.ceil(np.max(np.abs(pts[:, 0])) / h)) + 2
        my = int(np.ceil(np.max(np.abs(pts[:, 1])) / h)) + 2
        self.xs = np.arange(-mx, mx + 1) * self.h
        self.ys = np.arange(-my, my + 1) * self.h
        self.shape = (self.xs.size, self.ys.size)

        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        self.distance = dom.signed_distance(np.column_stack([X.ravel(), Y.ravel()])).reshape(self.shape)
        inside = self.distance < 0

        arms, degenerate = self._cut_arms(inside)
        if np.any(degenerate):
            log.warning("{} nodes within {:.0e} h of the boundary treated as exterior"
                        .format(int(degenerate.sum()), DEGENERATE_CUT))
            inside &= ~degenerate
            arms, _ = self._cut_arms(inside, degenerate)

        self.ij = np.argwhere(inside)
        self.index = np.full(self.shape, -1, dtype=int)
        self.index[tuple(self.ij.T)] = np.arange(len(self.ij))
        self.nodes = np.column_stack([self.xs[self.ij[:, 0]], self.ys[self.ij[:, 1]]])
        self.arms = arms[tuple(self.ij.T)]

        full = np.all(self.arms == self.h, axis=1) & np.all(self._neighbour_index() >= 0, axis=1)
        self.kind = np.full(self.shape, EXTERIOR, dtype=int)
        self.kind[tuple(self.ij.T)] = np.where(full, INTERIOR, BOUNDARY_ADJACENT)

        self.laplacian, self.boundary_rows, self.boundary_coeffs, self.boundary_points = self._assemble()
        log.debug("grid h={}: {} unknowns, {} boundary arms".format(self.h, self.size, len(self.boundary_rows)))

    @property
    def size(self):
        return len(self.ij)

    def _cut_arms(self, inside, degenerate=None):
        """
        Arm lengths for every node, cut where the neighbour lies outside.
        Returns (arms of shape grid + (4,), mask of degenerate nodes).
        """
        h = self.h
        arms = np.full(self.shape + (4,), h)
        nx, ny = self.shape
        bad = np.zeros(self.shape, dtype=bool)

        for d, (di, dj) in enumerate(DIRECTIONS):
            shifted = np.zeros(self.shape, dtype=bool)
            src = (slice(max(0, -di), nx - max(0, di)), slice(max(0, -dj), ny - max(0, dj)))
            dst = (slice(max(0, di), nx - max(0, -di)), slice(max(0, dj), ny - max(0, -dj)))
            shifted[src] = inside[dst]

            crossing = inside & ~shifted
            if degenerate is not None:
                neighbour_degenerate = np.zeros(self.shape, dtype=bool)
                neighbour_degenerate[src] = degenerate[dst]
                crossing &= ~neighbour_degenerate
            ii, jj = np.nonzero(crossing)
            if ii.size == 0:
                continue

            start = np.column_stack([self.xs[ii], self.ys[jj]])
            step = np.array([di, dj], dtype=float)
            lo = np.zeros(ii.size)
            hi = np.full(ii.size, h)
            for _ in range(CUT_STEPS):
                mid = 0.5 * (lo + hi)
                outside = self.dom.signed_distance(start + mid[:, None] * step) >= 0
                lo = np.where(outside, lo, mid)
                hi = np.where(outside, mid, hi)

            cut = 0.5 * (lo + hi)
            arms[ii, jj, d] = cut
            bad[ii, jj] |= cut < DEGENERATE_CUT * h

        return arms, bad

    def _neighbour_index(self):
        out = np.empty((self.size, 4), dtype=int)
        for d, (di, dj) in enumerate(DIRECTIONS):
            i = self.ij[:, 0] + di
            j = self.ij[:, 1] + dj
            valid = (i >= 0) & (i < self.shape[0]) & (j >= 0) & (j < self.shape[1])
            out[:, d] = -1
            out[valid, d] = self.index[i[valid], j[valid]]
        return out

    def _assemble(self):
        """
        Shortley-Weller five-point Laplacian on the unknowns, and the
        coefficients carrying Dirichlet data from the boundary crossings.
        """
        neighbours = self._neighbour_index()
        east, west, north, south = self.arms.T
        coeffs = np.column_stack([2.0 / (east * (east + west)), 2.0 / (west * (east + west)),
                                  2.0 / (north * (north + south)), 2.0 / (south * (north + south))])
        diagonal = -2.0 / (east * west) - 2.0 / (north * south)

        dirichlet = (neighbours < 0) | (self.arms < self.h)
        rows = np.arange(self.size)

        inner_r, inner_d = np.nonzero(~dirichlet)
        r = np.concatenate([rows, inner_r])
        c = np.concatenate([rows, neighbours[inner_r, inner_d]])
        v = np.concatenate([diagonal, coeffs[inner_r, inner_d]])
        laplacian = sparse.csc_matrix((v, (r, c)), shape=(self.size, self.size))

        cut_r, cut_d = np.nonzero(dirichlet)
        points = self.nodes[cut_r] + self.arms[cut_r, cut_d][:, None] * DIRECTIONS[cut_d]
        return laplacian, cut_r, coeffs[cut_r, cut_d], points

    def boundary_term(self, values):
        """
        Contribution of Dirichlet values (one per boundary crossing) to the Laplacian.
        """
        return np.bincount(self.boundary_rows, self.boundary_coeffs * values, minlength=self.size)

    def helmholtz_factor(self, epsilon):
        """
        Sparse LU of eps^2 L - I, cached per epsilon.
        """
        key = float(epsilon)
        if key not in self._factors:
            matrix = (key ** 2 * self.laplacian - sparse.identity(self.size, format="csc")).tocsc()
            self._factors[key] = (matrix, splu(matrix))
        return self._factors[key]

    def to_array(self, values, fill=np.nan):
        out = np.full(self.shape, fill, dtype=float)
        out[tuple(self.ij.T)] = values
        return out

    def __repr__(self):
        return "Grid2D(h={}, shape={}, unknowns={})".format(self.h, self.shape, self.size)


@dataclass(eq=False)
class DiscreteField:
    """
    Nodal values on the unknowns of a grid; zero on the boundary.
    """

    grid: Grid2D
    values: np.ndarray
    epsilon: float
    correction: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.size,) or not np.all(np.isfinite(self.values)):
            raise DomainError("field values must be finite, one per unknown")

    def as_array(self):
        return self.grid.to_array(self.values)


def discretize(dom, h):
    if not 0 < h < dom.inradius / 20:
        raise DomainError("grid spacing h={} must lie in (0, inradius/20={:.6g})".format(h, dom.inradius / 20))
    return Grid2D(dom, h)


def _require_resolution(grid, epsilon):
    if grid.h > epsilon / 4 * (1 + 1e-12):
        raise DomainError("grid spacing h={} exceeds eps/4={}".format(grid.h, epsilon / 4))


def _solve_checked(matrix, factor, rhs, tol):
    solution = factor.solve(rhs)
    scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    residual = np.linalg.norm(matrix @ solution - rhs) / scale
    if not np.all(np.isfinite(solution)) or residual > tol:
        raise LinearSolveError("sparse solve residual {:.3e} above {:.0e}".format(residual, tol))
    return solution


def spike(profile, epsilon, P, points):
    return eval_w(profile, np.hypot(*(points - np.asarray(P, dtype=float)).T) / epsilon)


def solve_projection(grid, profile, epsilon, P):
    """
    w_{eps,P} solving eps^2 Lap v - v + f(w(|x - P|/eps)) = 0 with v = 0 on
    the boundary, returned as w(|x - P|/eps) - u where u is the boundary
    correction: eps^2 Lap u - u = 0, u = w(|z - P|/eps) on the boundary.
    """
    _require_resolution(grid, epsilon)
    depth = -grid.dom.signed_distance(np.asarray(P, dtype=float))
    if depth < 2 * grid.h:
        raise DomainError("spike centre {} lies within 2h of the boundary".format(list(P)))

    data = spike(profile, epsilon, P, grid.boundary_points)
    matrix, factor = grid.helmholtz_factor(epsilon)
    correction = _solve_checked(matrix, factor, -epsilon ** 2 * grid.boundary_term(data), 1e-11)

    free = spike(profile, epsilon, P, grid.nodes)
    return DiscreteField(grid, free - correction, epsilon, correction)


def assemble_ansatz(grid, profile, epsilon, config):
    """
    sum over i of (-1)^i w(|x - P_i|/eps) at the unknowns.
    """
    _require_resolution(grid, epsilon)
    values = np.zeros(grid.size)
    for sign, P in zip(config.signs, config.points):
        values += sign * spike(profile, epsilon, P, grid.nodes)
    return DiscreteField(grid, values, epsilon)


def _operator(grid, nl, epsilon, v):
    return epsilon ** 2 * (grid.laplacian @ v) - v + nl.f(v)


def residual_norm(grid, nl, epsilon, field):
    """
    (sup, discrete L2) norms of eps^2 Lap v - v + f(v) over the unknowns.
    """
    residual = _operator(grid, nl, epsilon, field.values)
    return float(np.max(np.abs(residual), initial=0.0)), float(grid.h * np.linalg.norm(residual))


def newton_solve(grid, nl, epsilon, init, tol=1e-10, max_iter=50, max_halvings=20, group=None):
    """
    Damped Newton on the discrete problem. Returns (field, residual history)
    where history[i] is the sup-norm residual before step i. With a group
    from symmetry_group the iterates stay in its equivariant subspace.
    """
    _require_resolution(grid, epsilon)
    v = init.values.copy()
    if group:
        v = symmetrize(grid, v, group)
    residual = _operator(grid, nl, epsilon, v)
    norm = float(np.max(np.abs(residual), initial=0.0))
    history = [norm]
    identity = sparse.identity(grid.size, format="csc")
    base = (epsilon ** 2 * grid.laplacian - identity).tocsc()

    for iteration in range(max_iter):
        if norm < tol:
            break

        slope = np.where(np.abs(v) < 1e-14, 0.0, nl.fprime(v))
        jacobian = (base + sparse.diags(slope, format="csc")).tocsc()
        step = _solve_checked(jacobian, splu(jacobian), -residual, 1e-12)
        if group:
            step = symmetrize(grid, step, group)
        if not np.all(np.isfinite(step)):
            raise NewtonDivergenceError("Newton step is not finite at iteration {}".format(iteration))

        damping = 1.0
        for _ in range(max_halvings + 1):
            trial = v + damping * step
            trial_residual = _operator(grid, nl, epsilon, trial)
            trial_norm = float(np.max(np.abs(trial_residual)))
            if np.isfinite(trial_norm) and trial_norm < norm:
                break
            damping *= 0.5
        else:
            raise NewtonStallError("no decrease of the residual {:.3e} after {} halvings at iteration {}"
                                   .format(norm, max_halvings, iteration))

        v, residual, norm = trial, trial_residual, trial_norm
        history.append(norm)
        signal("newton-iteration").send(grid, iteration=iteration, residual=norm, damping=damping)

        if norm > 1e8 * max(history[0], 1.0):
            raise NewtonDivergenceError("residual grew to {:.3e}".format(norm))
    else:
        if norm >= tol:
            raise NewtonStallError("residual {:.3e} after {} Newton iterations".format(norm, max_iter))

    return DiscreteField(grid, v, epsilon), history


def discrete_energy(grid, nl, epsilon, field):
    """
    J_eps(v) = 1/2 int (eps^2 |grad v|^2 + v^2) - int F(v), gradients on
    grid edges; an edge cut by the boundary at fraction theta adds v^2/theta.
    """
    v = field.values
    h = grid.h
    neighbours = grid._neighbour_index()

    gradient = 0.0
    for d in (0, 2):
        inner = (neighbours[:, d] >= 0) & (grid.arms[:, d] == h)
        gradient += np.sum((v[inner] - v[neighbours[inner, d]]) ** 2)

    theta = grid.arms / h
    cut = (neighbours < 0) | (grid.arms < h)
    rows, dirs = np.nonzero(cut)
    gradient += np.sum(v[rows] ** 2 / theta[rows, dirs])

    return float(0.5 * epsilon ** 2 * gradient + h ** 2 * np.sum(0.5 * v ** 2 - nl.F(v)))


@dataclass
class Peak:
    location: np.ndarray
    sign: int
    amplitude: float


def extract_peaks(grid, field, w0, expected=None):
    """
    Strict 8-neighbour extrema with |v| > w0/2, refined by a quadratic fit
    on the 3x3 patch, in counter-clockwise order about the domain centroid.
    """
    values = grid.to_array(field.values, fill=0.0)
    nx, ny = grid.shape
    core = values[1:-1, 1:-1]
    magnitude = np.abs(values)

    strict = np.ones(core.shape, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                strict &= magnitude[1 + di:nx - 1 + di, 1 + dj:ny - 1 + dj] < np.abs(core)
    candidates = np.argwhere(strict & (np.abs(core) > 0.5 * w0)) + 1

    peaks = []
    for i, j in candidates:
        c = values[i, j]
        east, west, north, south = values[i + 1, j], values[i - 1, j], values[i, j + 1], values[i, j - 1]
        curvature_x = east - 2 * c + west
        curvature_y = north - 2 * c + south
        dx = 0.5 * (west - east) / curvature_x if curvature_x else 0.0
        dy = 0.5 * (south - north) / curvature_y if curvature_y else 0.0
        amplitude = c + 0.25 * (east - west) * dx + 0.25 * (north - south) * dy
        location = np.array([grid.xs[i] + dx * grid.h, grid.ys[j] + dy * grid.h])
        peaks.append(Peak(location, int(np.sign(c)), float(abs(amplitude))))

    centre = grid.dom.centroid
    peaks.sort(key=lambda p: np.mod(np.arctan2(*(p.location - centre)[::-1]), 2 * np.pi))

    if expected is not None and len(peaks) != expected:
        raise PeakCountError("found {} peaks, expected {}".format(len(peaks), expected))
    return peaks


# symmetry


def rotate90(i, j):
    return -j, i


def reflect_x(i, j):
    return i, -j


def reflect_y(i, j):
    return -i, j


def reflect_diagonal(i, j):
    return j, i


def _index_matrix(transform):
    return np.array(transform(np.array([1, 0]), np.array([0, 1])), dtype=int)


def symmetry_group(generators):
    """
    Closure under composition of (transform, parity) generators. Elements
    come back as (2x2 integer matrix on centred node indices, parity);
    raises DomainError when the parities do not define a character.
    """
    generators = [(_index_matrix(transform), int(parity)) for transform, parity in generators]
    elements = {(1, 0, 0, 1): 1}
    frontier = [np.eye(2, dtype=int)]
    while frontier:
        matrix = frontier.pop()
        parity = elements[tuple(matrix.ravel())]
        for generator, sign in generators:
            product = generator @ matrix
            key = tuple(product.ravel())
            if key in elements:
                if elements[key] != parity * sign:
                    raise DomainError("parities {} are inconsistent on the generated group"
                                      .format([sign for _, sign in generators]))
                continue
            elements[key] = parity * sign
            frontier.append(product)
    return [(np.array(key).reshape(2, 2), parity) for key, parity in elements.items()]


def symmetrize(grid, values, group):
    """
    Projection onto fields with v(g x) = parity(g) v(x) for every g in the
    group: the parity-weighted average over the group.
    """
    centre = np.array([(grid.xs.size - 1) // 2, (grid.ys.size - 1) // 2])
    offsets = grid.ij - centre
    total = np.zeros(grid.size)
    for matrix, parity in group:
        target = offsets @ matrix.T + centre
        valid = np.all((target >= 0) & (target < np.array(grid.shape)), axis=1)
        index = np.full(grid.size, -1)
        index[valid] = grid.index[target[valid, 0], target[valid, 1]]
        if np.any(index < 0):
            raise DomainError("grid unknowns are not invariant under {}".format(matrix.tolist()))
        total += parity * np.asarray(values)[index]
    return total / len(group)


def symmetry_defect(grid, field, transform, parity=1):
    """
    max |v(T x) - parity v(x)| over the unknowns x, for a grid symmetry T
    acting on centred node indices. Nodes mapped off the unknowns count as
    a defect of |v(x)|.
    """
    ci = (grid.xs.size - 1) // 2
    cj = (grid.ys.size - 1) // 2
    ti, tj = transform(grid.ij[:, 0] - ci, grid.ij[:, 1] - cj)
    ti, tj = ti + ci, tj + cj

    valid = (ti >= 0) & (ti < grid.shape[0]) & (tj >= 0) & (tj < grid.shape[1])
    target = np.full(grid.size, -1)
    target[valid] = grid.index[ti[valid], tj[valid]]

    mapped = np.where(target >= 0, field.values[np.maximum(target, 0)], 0.0)
    return float(np.max(np.abs(mapped - parity * field.values)))


# lattice ansatz


@dataclass(eq=False)
class LatticeSpike:
    """
    One spike of the discrete problem centred at a node; values[m, m] is
    the centre of the (2m + 1) x (2m + 1) block.
    """

    values: np.ndarray
    h: float
    epsilon: float
    spectrum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.spectrum = np.fft.fft2(self.values)

    @property
    def half_width(self):
        return (self.values.shape[0] - 1) // 2

    def shifted(self, fraction):
        """
        The block translated by fraction * h, fraction in [0, 1)^2, as a
        phase shift of its discrete Fourier transform.
        """
        return np.fft.ifft2(ndimage.fourier_shift(self.spectrum, fraction)).real


@dataclass
class LatticeFit:
    points: np.ndarray
    gap: float
    full_gap: float
    evaluations: int


def lattice_spike(nl, profile, epsilon, h, radius):
    """
    Newton solution for a single spike at the origin of a disk of the given
    radius, solved in the dihedral subspace of the grid.
    """
    grid = discretize(PlanarDomain(Circle(radius)), h)
    init = DiscreteField(grid, spike(profile, epsilon, [0.0, 0.0], grid.nodes), epsilon)
    solution, _ = newton_solve(grid, nl, epsilon, init, group=symmetry_group([(rotate90, 1), (reflect_x, 1)]))

    values = grid.to_array(solution.values, fill=0.0)
    cx, cy = (grid.xs.size - 1) // 2, (grid.ys.size - 1) // 2
    m = min(cx, cy)
    return LatticeSpike(values[cx - m:cx + m + 1, cy - m:cy + m + 1], grid.h, epsilon)


def _place(grid, lattice, centre, weight, out):
    position = np.asarray(centre, dtype=float) / grid.h
    base = np.floor(position)
    block = lattice.shifted(position - base)
    m = lattice.half_width

    corner = np.array([(grid.xs.size - 1) // 2, (grid.ys.size - 1) // 2]) + base.astype(int) - m
    lo = np.maximum(corner, 0)
    hi = np.minimum(corner + 2 * m + 1, grid.shape)
    if np.all(hi > lo):
        out[lo[0]:hi[0], lo[1]:hi[1]] += weight * block[lo[0] - corner[0]:hi[0] - corner[0],
                                                           lo[1] - corner[1]:hi[1] - corner[1]]


def lattice_ansatz(grid, lattice, points, signs):
    """
    sum over i of signs[i] times the lattice spike moved to points[i].
    """
    if not np.isclose(lattice.h, grid.h, rtol=1e-12, atol=0.0):
        raise DomainError("lattice spike spacing {} differs from the grid spacing {}".format(lattice.h, grid.h))
    out = np.zeros(grid.shape)
    for sign, P in zip(signs, np.atleast_2d(points)):
        _place(grid, lattice, P, sign, out)
    return DiscreteField(grid, out[tuple(grid.ij.T)], lattice.epsilon)


def fit_lattice_ansatz(grid, field, lattice, points, signs, core_radius, tol=1e-13):
    """
    Centres minimising the l2 distance between the field and the lattice
    ansatz, started from points. gap is the sup of |v - ansatz| over the
    unknowns farther than core_radius from every fitted centre; full_gap
    is the sup over all unknowns.
    """
    signs = np.asarray(signs, dtype=float)

    def difference(x):
        return field.values - lattice_ansatz(grid, lattice, x.reshape(-1, 2), signs).values

    result = least_squares(difference, np.asarray(points, dtype=float).ravel(), x_scale=grid.h,
                           xtol=tol, ftol=tol, gtol=tol)
    if result.status <= 0:
        raise NumericalError("lattice ansatz fit did not converge: {}".format(result.message))

    fitted = result.x.reshape(-1, 2)
    outside = cdist(grid.nodes, fitted).min(axis=1) > core_radius
    residual = np.abs(result.fun)
    fit = LatticeFit(fitted, float(np.max(residual[outside], initial=0.0)), float(np.max(residual)),
                     int(result.nfev))
    log.debug("lattice fit at eps={}: gap {:.3e}, full gap {:.3e}, {} evaluations"
              .format(field.epsilon, fit.gap, fit.full_gap, fit.evaluations))
    return fit


# interpolation and export


def interpolate_field(grid, values, point, log_space=False, width=3):
    """
    Tensor cubic interpolation of nodal values at a point from the
    surrounding (2 width) x (2 width) block of unknowns, optionally on log(values).
    """
    point = np.asarray(point, dtype=float)
    ci = (grid.xs.size - 1) // 2
    cj = (grid.ys.size - 1) // 2
    i0 = int(np.floor(point[0] / grid.h)) + ci - width + 1
    j0 = int(np.floor(point[1] / grid.h)) + cj - width + 1
    block = grid.index[i0:i0 + 2 * width, j0:j0 + 2 * width]
    if block.shape != (2 * width, 2 * width) or np.any(block < 0):
        raise DomainError("interpolation stencil at {} leaves the grid unknowns".format(point.tolist()))

    data = np.asarray(values)[block]
    if log_space:
        data = np.log(data)
    interpolator = RegularGridInterpolator((grid.xs[i0:i0 + 2 * width], grid.ys[j0:j0 + 2 * width]), data,
                                           method="cubic")
    value = float(interpolator(point[None, :])[0])
    return float(np.exp(value)) if log_space else value


FIELD_HEADER = ["x", "y", "value"]


def field_to_rows(field):
    return FIELD_HEADER, [(x, y, v) for (x, y), v in zip(field.grid.nodes, field.values)]


def write_field(path, field):
    header, rows = field_to_rows(field)
    return write_csv(path, header, rows)


def write_residuals(path, history):
    return write_csv(path, ["iter", "sup_residual"], enumerate(history))
