"""Homogenized tensor, flux residual ``M_k`` and antisymmetric potential ``B_k``.

Staggered layout (cell spacing h):

    w_k            nodes x
    M_k^i          faces x + h/2 e_i       M_k^i = A*_ik - a (delta_ik + D_i w_k)
    phi_k^i        faces x + h/2 e_i       Laplace(phi_k^i) = M_k^i
    B_k^ij         edges x + h/2 (e_i + e_j)   B_k^ij = D_j phi_k^i - D_i phi_k^j

With ``(div B)^i = sum_j D_j^- B^ij`` the discrete identity ``div B_k = M_k``
holds up to solver tolerance, because ``div phi_k`` is discretely harmonic on
the cell. On the truncation box the same construction is applied to the defect
part of ``M_k`` with zero Dirichlet data.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.homodefect.lib.config import ConfigError, SolverConfig
from src.homodefect.lib.elliptic_solver import (
    assemble,
    face_centers,
    face_divergence,
    face_gradient,
    face_shape,
    solve,
)
from src.homodefect.lib.grid_fields import Grid, GridField, gradient, interpolate
from src.homodefect.models import CorrectorSet, FluxResidual, HomogenizedTensor, PotentialField
from src.homodefect.services.coefficients import CoefficientSpec, evaluate, periodic_part
from src.homodefect.services.correctors import (
    DegenerateOscillation,
    _solver,
    ball_oscillation,
    build_corrector_set,
    check_radii,
    growth_fit,
    periodic_on,
    truncation_grid,
)

logger = logging.getLogger(__name__)

# Relative size of div M (against max|M| / h) above which solve_potential warns.
DIVERGENCE_WARN = 1e-6


def homogenized_tensor(spec: CoefficientSpec, w_per: Sequence[GridField],
                       cell_resolution: Optional[int] = None) -> HomogenizedTensor:
    """Cell average of the periodic flux, ``a*_ik = <a_per (delta_ik + D_i w_per_k)>``.

    The average is the midpoint rule on the staggered face points, where the
    flux is exactly the one the cell solver balances. The symmetric part is
    returned; the raw asymmetry is kept as a certificate.
    """
    d = spec.dim
    if len(w_per) != d:
        raise ConfigError(f"expected {d} periodic correctors, got {len(w_per)}")
    grid = w_per[0].grid
    if cell_resolution is not None and grid.extents[0] != cell_resolution:
        raise ConfigError("corrector grid does not match the requested cell resolution")
    A = np.empty((d, d))
    for i in range(d):
        a_face = periodic_part(spec, face_centers(grid, i))
        for k in range(d):
            A[i, k] = float(np.mean(a_face * (float(i == k) + face_gradient(grid, w_per[k].data, i))))
    asymmetry = float(np.max(np.abs(A - A.T)))
    A = 0.5 * (A + A.T)
    eigenvalues = np.linalg.eigvalsh(A)
    elliptic = bool(eigenvalues.min() >= 1.0 / spec.mu and eigenvalues.max() <= spec.mu)
    if not elliptic:
        logger.warning("Homogenized spectrum %s leaves [1/mu, mu]", eigenvalues)
    return HomogenizedTensor(A, grid.extents[0], spec.spec_hash(), asymmetry,
                             tuple(float(v) for v in eigenvalues), elliptic)


def _box_average(grid: Grid, values: np.ndarray, axis: int, radius: float) -> float:
    """Trapezoid-weighted mean of face values over faces inside ``[-radius, radius]^d``."""
    centers = face_centers(grid, axis)
    weight = np.ones(values.shape)
    slack = 1e-9 * grid.spacing[0]
    for m in range(grid.dim):
        x = np.abs(centers[..., m])
        weight = weight * np.where(x < radius - slack, 1.0, np.where(x <= radius + slack, 0.5, 0.0))
    return float(np.sum(weight * values) / np.sum(weight))


def _box_fluxes(spec: CoefficientSpec, cset: CorrectorSet, k: int, grid: Grid,
                with_defect: bool) -> List[np.ndarray]:
    w = periodic_on(cset.periodic[k], grid)
    if with_defect and cset.defect[k] is not None:
        w = w + cset.defect[k].data
    fluxes = []
    for i in range(spec.dim):
        y = face_centers(grid, i)
        a = evaluate(spec, y) if with_defect else periodic_part(spec, y)
        fluxes.append(a * (float(i == k) + face_gradient(grid, w, i)))
    return fluxes


def defect_invariance_gaps(spec: CoefficientSpec, radii: Sequence[float], cell_resolution: int = 32,
                            box_resolution: int = 16, oversampling: float = 2.0,
                            solver: Optional[SolverConfig] = None, threads: int = 1) -> List[float]:
    """Max-norm gap between oversampled tensors with and without the defect.

    For each R the correctors are solved on ``[-ceil(oversampling R), ...]^d``
    and the flux ``a (e_k + grad w_k)`` is averaged over ``[-R, R]^d``.
    """
    if len(radii) < 3:
        raise ConfigError(f"defect invariance check needs at least 3 radii, got {len(radii)}")
    discrepancies = []
    for R in radii:
        outer = max(4.0, float(math.ceil(oversampling * R)))
        cset = build_corrector_set(spec, cell_resolution, box_resolution, outer,
                                   solver=solver, threads=threads)
        grid = truncation_grid(spec.dim, outer, box_resolution)
        gap = 0.0
        for k in range(spec.dim):
            full = _box_fluxes(spec, cset, k, grid, with_defect=True)
            plain = _box_fluxes(spec, cset, k, grid, with_defect=False)
            for i in range(spec.dim):
                gap = max(gap, abs(_box_average(grid, full[i], i, R) - _box_average(grid, plain[i], i, R)))
        logger.info("Defect invariance R=%g (box %g): %.3e", R, outer, gap)
        discrepancies.append(gap)
    return discrepancies


def _face_grid(grid: Grid, axis: int) -> Grid:
    offset = [0.0] * grid.dim
    offset[axis] = 0.5 * grid.spacing[axis]
    return grid.shifted(offset, face_shape(grid, axis))


def _edge_grid(face_grid: Grid, j: int, extents: Tuple[int, ...]) -> Grid:
    offset = [0.0] * face_grid.dim
    offset[j] = 0.5 * face_grid.spacing[j]
    return face_grid.shifted(offset, extents)


def _nodal_divergence(grid: Grid, components: Sequence[np.ndarray]) -> np.ndarray:
    return sum(gradient(GridField(grid, c)).data[..., i] for i, c in enumerate(components))


def _interior(array: np.ndarray) -> np.ndarray:
    return array[tuple(slice(1, -1) for _ in range(array.ndim))]


def flux_residual(spec: CoefficientSpec, correctors: CorrectorSet, a_star: HomogenizedTensor,
                  k: int, staggered: bool = True) -> FluxResidual:
    """``M_k^i = A*_ik - a (delta_ik + d_i w_k)`` on the cell and, for the defect, on the box.

    Staggered residuals (default) sit on face grids and are discretely
    divergence-free up to solver tolerance; nodal ones use central gradients
    and are divergence-free to second order in h. The box part holds
    ``M_k(full) - M_k(periodic)``.
    """
    d = spec.dim
    A = a_star.matrix
    cell = correctors.periodic[k].grid
    w = correctors.periodic[k].data

    if staggered:
        periodic = []
        for i in range(d):
            a_face = periodic_part(spec, face_centers(cell, i))
            M = A[i, k] - a_face * (float(i == k) + face_gradient(cell, w, i))
            periodic.append(GridField(_face_grid(cell, i), M))
        divergence = face_divergence(cell, [m.data for m in periodic])
    else:
        a_node = periodic_part(spec, cell.mesh())
        grad = correctors.periodic_gradients[k].data
        periodic = [GridField(cell, A[i, k] - a_node * (float(i == k) + grad[..., i])) for i in range(d)]
        divergence = _nodal_divergence(cell, [m.data for m in periodic])
    divergence_max = float(np.max(np.abs(divergence)))

    defect = None
    if correctors.defect[k] is not None:
        box = correctors.defect[k].grid
        w_per = periodic_on(correctors.periodic[k], box)
        w_full = w_per + correctors.defect[k].data
        if staggered:
            defect = []
            for i in range(d):
                y = face_centers(box, i)
                full = evaluate(spec, y) * (float(i == k) + face_gradient(box, w_full, i))
                plain = periodic_part(spec, y) * (float(i == k) + face_gradient(box, w_per, i))
                defect.append(GridField(_face_grid(box, i), plain - full))
            box_div = face_divergence(box, [m.data for m in defect])
        else:
            y = box.mesh()
            g_full = gradient(GridField(box, w_full)).data
            g_per = gradient(GridField(box, w_per)).data
            defect = [
                GridField(box, periodic_part(spec, y) * (float(i == k) + g_per[..., i])
                          - evaluate(spec, y) * (float(i == k) + g_full[..., i]))
                for i in range(d)
            ]
            box_div = _nodal_divergence(box, [m.data for m in defect])
        divergence_max = max(divergence_max, float(np.max(np.abs(_interior(box_div)))))
        defect = tuple(defect)
    return FluxResidual(k, tuple(periodic), defect, staggered, divergence_max)


def _poisson(field: GridField, solver: Optional[SolverConfig]) -> np.ndarray:
    """``phi`` with discrete ``Laplace(phi) = field`` (zero mean or zero boundary)."""
    grid = field.grid
    ones = [np.ones(face_shape(grid, m)) for m in range(grid.dim)]
    phi, _ = solve(assemble(ones, grid, rhs_volume=-field.data), **_solver(solver))
    return phi.data


def _antisymmetrise(phis: Sequence[np.ndarray], grids: Sequence[Grid]) -> Dict[Tuple[int, int], GridField]:
    upper = {}
    d = len(phis)
    for i in range(d):
        for j in range(i + 1, d):
            value = face_gradient(grids[i], phis[i], j) - face_gradient(grids[j], phis[j], i)
            upper[(i, j)] = GridField(_edge_grid(grids[i], j, value.shape), value)
    return upper


def solve_potential(flux: FluxResidual, solver: Optional[SolverConfig] = None,
                    threads: int = 1) -> PotentialField:
    """Antisymmetric ``B_k`` with ``div B_k = M_k`` from ``Laplace(phi_k^i) = M_k^i``.

    Each component of ``M_k`` gets one Poisson solve on its face grid, zero
    mean on the cell and zero boundary values on the truncation box. The
    potential is ``B^ij = d_j phi^i - d_i phi^j``, so ``B^ji = -B^ij`` holds
    exactly and only the upper triangle is stored. In one dimension ``M_k``
    vanishes and the potential has no components.

    Args:
        flux: Staggered flux residual from ``flux_residual``.
        solver: Solver settings for the Poisson solves.
        threads: Worker threads over components.

    Returns:
        PotentialField with the periodic part and, when ``flux`` carries
        one, the box part.

    Raises:
        ConfigError: If the flux residual is not staggered.
        NoConvergence: Propagated from the Poisson solves.

    Examples:
        >>> flux = flux_residual(spec, cset, tensor, 0)
        >>> potential = solve_potential(flux)
        >>> potential_residual(potential, flux) < 1e-6
        True
    """
    if not flux.staggered:
        raise ConfigError("solve_potential needs the staggered flux residual")
    d = len(flux.periodic)
    if d == 1:
        return PotentialField(flux.direction, 1, {}, {} if flux.defect is not None else None)

    scale = max(float(np.max(np.abs(m.data))) for m in flux.periodic) / flux.periodic[0].grid.spacing[0]
    if flux.divergence_max > DIVERGENCE_WARN * max(scale, 1e-300):
        logger.warning("div M_%d = %.3e exceeds tolerance; potential will not match M",
                       flux.direction, flux.divergence_max)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        phis = list(pool.map(lambda m: _poisson(m, solver), flux.periodic))
        periodic = _antisymmetrise(phis, [m.grid for m in flux.periodic])
        defect = None
        if flux.defect is not None:
            phis_box = list(pool.map(lambda m: _poisson(m, solver), flux.defect))
            defect = _antisymmetrise(phis_box, [m.grid for m in flux.defect])
    return PotentialField(flux.direction, d, periodic, defect)


def potential_divergence(potential: PotentialField, part: str = "periodic") -> List[np.ndarray]:
    """``(div B)^i = sum_j D_j^- B^ij`` on the face-i grids.

    For the box part only interior entries are meaningful; the rest are 0.
    """
    d = potential.dim
    out = []
    for i in range(d):
        total = None
        for j in range(d):
            if j == i:
                continue
            B = potential.component(i, j, part)
            h = B.grid.spacing[j]
            if B.grid.periodic:
                term = (B.data - np.roll(B.data, 1, axis=j)) / h
            else:
                shape = list(B.data.shape)
                shape[j] += 1
                term = np.zeros(shape)
                index = [slice(None)] * d
                index[j] = slice(1, -1)
                term[tuple(index)] = np.diff(B.data, axis=j) / h
            total = term if total is None else total + term
        out.append(total)
    return out


def potential_residual(potential: PotentialField, flux: FluxResidual, part: str = "periodic") -> float:
    """Relative ``||div B - M||_2 / ||M||_2`` (box part: interior of the face grids)."""
    if potential.dim == 1:
        return 0.0
    fields = flux.periodic if part == "periodic" else flux.defect
    divergence = potential_divergence(potential, part)
    num = den = 0.0
    for div, M in zip(divergence, fields):
        diff = div - M.data
        data = M.data
        if part != "periodic":
            diff, data = _interior(diff), _interior(data)
        num += float(np.sum(diff ** 2))
        den += float(np.sum(data ** 2))
    return math.sqrt(num / den) if den > 0 else math.sqrt(num)


def potential_values(potential: PotentialField, i: int, j: int, points: np.ndarray,
                     mode: str = "full") -> np.ndarray:
    """``B_k^ij`` at points ``y`` (periodic part reduced mod 1, box part 0 outside).

    ``mode="periodic"`` drops the box part.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if i == j or potential.dim == 1:
        return np.zeros(points.shape[0])
    values = interpolate(potential.component(i, j), points)
    box = potential.component(i, j, "defect") if mode == "full" else None
    if box is not None:
        lo, hi = np.asarray(box.grid.lo), np.asarray(box.grid.hi)
        inside = np.all((points >= lo) & (points <= hi), axis=1)
        if inside.any():
            values[inside] += interpolate(box, points[inside])
    return values


def potential_sublinearity(potentials: Sequence[PotentialField], radii: Sequence[float],
                           correctors: CorrectorSet, seed: int = 0) -> float:
    """Largest growth exponent of ``osc(rho)`` over all components ``B_k^ij``.

    Raises:
        InsufficientRadii: As for the corrector growth fit.
        DegenerateOscillation: If every component vanishes.
    """
    radii = check_radii(radii, correctors.truncation_radius)
    grid = truncation_grid(correctors.dim, correctors.truncation_radius, correctors.box_resolution)
    points = grid.mesh().reshape(-1, grid.dim)
    center = np.zeros(grid.dim)
    slopes = []
    for potential in potentials:
        for i in range(potential.dim):
            for j in range(i + 1, potential.dim):
                values = potential_values(potential, i, j, points).reshape(grid.extents)
                oscillation = ball_oscillation(values, grid, center, radii, seed)
                if np.all(oscillation == 0):
                    continue
                slopes.append(growth_fit(radii, oscillation).slope)
    if not slopes:
        raise DegenerateOscillation("potential vanishes identically")
    logger.info("Potential growth exponent: %.4f", max(slopes))
    return max(slopes)
