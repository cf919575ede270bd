"""Periodic and defect correctors and their growth.

For every direction j (0-based) the corrector splits as
``w_j = w_per_j + w_def_j``:

    -div(a_per (e_j + grad w_per_j)) = 0           on the unit cell, zero mean
    -div(a grad w_def_j) = div(a_def (e_j + grad w_per_j))   on [-R, R]^d, w_def_j = 0 on the boundary

``w_def_j`` is extended by zero outside the truncation box.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.homodefect.lib.cache import CorrectorCache, cache_key
from src.homodefect.lib.config import ConfigError, SolverConfig
from src.homodefect.lib.elliptic_solver import (
    SolverReport,
    assemble,
    face_centers,
    face_divergence,
    face_gradient,
    solve,
)
from src.homodefect.lib.fitting import loglog_slope
from src.homodefect.lib.grid_fields import Box, Grid, GridField, box_grid, cell_grid, gradient, interpolate
from src.homodefect.models import CorrectorResidual, CorrectorSet, SlopeFit
from src.homodefect.services.coefficients import CoefficientSpec, defect_part, evaluate, periodic_part
from src.homodefect.services.oracle_1d import Corrector1D

logger = logging.getLogger(__name__)

MIN_CELL_RESOLUTION = 16
MIN_TRUNCATION_RADIUS = 4.0
# Ball oscillations above this many nodes use a seeded subsample.
MAX_OSCILLATION_NODES = 1 << 20


class DefectNotCentered(ValueError):
    """Raised when the defect centre is not well inside the truncation box."""


class InsufficientRadii(ValueError):
    """Raised when a growth fit gets too few or too narrow radii."""


class DegenerateOscillation(ValueError):
    """Raised when a field has no oscillation to fit."""


def _solver(config: Optional[SolverConfig]) -> dict:
    config = config or SolverConfig()
    return {"tol": config.tol, "max_iter": config.max_iter, "method": config.method}


def _check_direction(spec: CoefficientSpec, j: int) -> None:
    if not 0 <= j < spec.dim:
        raise ConfigError(f"direction {j} outside 0..{spec.dim - 1}")


def truncation_grid(dim: int, truncation_radius: float, box_resolution: int) -> Grid:
    return box_grid(Box.cube(dim, -truncation_radius, truncation_radius), 1.0 / box_resolution)


def _periodic_faces(spec: CoefficientSpec, grid: Grid) -> Tuple[np.ndarray, ...]:
    return tuple(periodic_part(spec, face_centers(grid, k)) for k in range(grid.dim))


def solve_periodic_corrector(spec: CoefficientSpec, cell_resolution: int, j: int,
                             solver: Optional[SolverConfig] = None) -> Tuple[GridField, SolverReport]:
    """Solve the cell problem ``-div(a_per grad w) = div(a_per e_j)`` with zero mean.

    Raises:
        ConfigError: On a bad direction or a resolution below 16.
        NoConvergence: Propagated from the solver.
    """
    _check_direction(spec, j)
    if cell_resolution < MIN_CELL_RESOLUTION:
        raise ConfigError(f"cell resolution must be >= {MIN_CELL_RESOLUTION}, got {cell_resolution}")
    grid = cell_grid(spec.dim, cell_resolution)
    faces = _periodic_faces(spec, grid)
    flux = [faces[k] if k == j else np.zeros_like(faces[k]) for k in range(spec.dim)]
    w, report = solve(assemble(faces, grid, rhs_flux=flux), **_solver(solver))
    logger.debug("Periodic corrector j=%d res=%d: %s", j, cell_resolution, report)
    return GridField(grid, w.data - w.data.mean()), report


def periodic_on(field: GridField, grid: Grid) -> np.ndarray:
    """Periodic cell field sampled at the nodes of another grid."""
    points = grid.mesh().reshape(-1, grid.dim)
    values = interpolate(field, points)
    return values.reshape(tuple(grid.extents) + field.component_shape)


def solve_defect_corrector(spec: CoefficientSpec, w_per: GridField, truncation_radius: float,
                           box_resolution: int, j: int,
                           solver: Optional[SolverConfig] = None) -> Tuple[GridField, SolverReport]:
    """Solve ``-div(a grad w) = div(a_def (e_j + grad w_per_j))`` on ``[-R, R]^d``, zero on the boundary.

    Args:
        spec: Coefficient specification.
        w_per: Periodic corrector of direction j.
        truncation_radius: Half-width R of the truncation box, at least 4 periods.
        box_resolution: Nodes per unit length on the box.
        j: Direction (0-based).
        solver: Solver settings.

    Raises:
        ConfigError: On a bad direction or a radius below 4.
        DefectNotCentered: If the defect centre lies outside the inner half of the box.
        NoConvergence: Propagated from the solver.
    """
    _check_direction(spec, j)
    R = float(truncation_radius)
    if R < MIN_TRUNCATION_RADIUS:
        raise ConfigError(f"truncation radius must be >= {MIN_TRUNCATION_RADIUS}, got {R}")
    if np.max(np.abs(spec.center)) > 0.5 * R:
        raise DefectNotCentered(f"defect centre {tuple(spec.center)} not inside [-R/2, R/2]^d for R={R}")
    grid = truncation_grid(spec.dim, R, box_resolution)
    w_nodes = periodic_on(w_per, grid)
    faces, flux = [], []
    for k in range(spec.dim):
        y = face_centers(grid, k)
        faces.append(evaluate(spec, y))
        flux.append(defect_part(spec, y) * (float(k == j) + face_gradient(grid, w_nodes, k)))
    w, report = solve(assemble(faces, grid, rhs_flux=flux), **_solver(solver))
    logger.debug("Defect corrector j=%d R=%g res=%d: %s", j, R, box_resolution, report)
    return w, report


def _cached(cache: Optional[CorrectorCache], key: dict, compute):
    if cache is None:
        return compute()[0]
    digest = cache_key(key)
    hit = cache.get(digest)
    if hit is not None:
        return hit
    field = compute()[0]
    cache.put(digest, field)
    return field


def _oracle_set(spec: CoefficientSpec, cell_resolution: int, box_resolution: int,
                truncation_radius: float, truncated: bool) -> CorrectorSet:
    exact = Corrector1D.build(spec, truncation_radius if truncated else None)
    cell = cell_grid(1, cell_resolution)
    y = cell.coords(0)
    periodic = GridField(cell, exact.periodic(y))
    periodic_grad = GridField(cell, exact.periodic_derivative(y)[:, None])
    defect = defect_grad = None
    if spec.has_defect:
        box = truncation_grid(1, truncation_radius, box_resolution)
        yb = box.coords(0)
        defect = GridField(box, exact.defect(yb))
        defect_grad = GridField(box, exact.defect_derivative(yb)[:, None])
    return CorrectorSet((periodic,), (defect,), (periodic_grad,), (defect_grad,),
                        float(truncation_radius), cell_resolution, box_resolution, "oracle",
                        spec.spec_hash())


def build_corrector_set(spec: CoefficientSpec, cell_resolution: int, box_resolution: int,
                        truncation_radius: float, method: str = "fd",
                        solver: Optional[SolverConfig] = None, threads: int = 1,
                        cache: Optional[CorrectorCache] = None,
                        oracle_truncated: bool = False) -> CorrectorSet:
    """Correctors for all directions.

    ``method="fd"`` solves the cell and box problems (directions in parallel,
    fields cached under content-addressed keys when a cache is given);
    ``method="oracle"`` fills the same grids from the one-dimensional closed
    forms, whole-line normalised unless ``oracle_truncated``.

    For each direction ``j`` the set holds:
        - w_per_j: zero-mean periodic solution of
          ``-div(a_per (e_j + grad w)) = 0`` on the unit cell
        - w_def_j: solution of ``-div(a grad w) = div(a_def (e_j + grad w_per_j))``
          on ``[-R, R]^d`` with zero boundary values, or None without a defect
        - nodal gradients of both

    Args:
        spec: Coefficient specification.
        cell_resolution: Cell nodes per axis, at least 16.
        box_resolution: Box nodes per unit length.
        truncation_radius: Half-width ``R`` of the defect box.
        method: ``"fd"`` or ``"oracle"`` (1D only).
        solver: Solver settings for the finite-difference solves.
        threads: Worker threads over directions.
        cache: Optional content-addressed corrector store.
        oracle_truncated: Truncate the closed-form defect part at ``R``.

    Returns:
        An immutable CorrectorSet; ``periodic_only()`` drops the defect parts.

    Raises:
        ConfigError: On an unknown method, an oracle request in d > 1 or a
            resolution below the floor.
        NoConvergence: Propagated from a cell or box solve.

    Examples:
        >>> spec = CoefficientSpec(dim=1, periodic=PeriodicProfile("sin_product", 2.0, 1.0), r=4.0)
        >>> cset = build_corrector_set(spec, 64, 16, 8.0)
        >>> cset.has_defect
        False
        >>> cset.periodic[0].grid.extents
        (64,)
    """
    if method == "oracle":
        if spec.dim != 1:
            raise ConfigError("oracle correctors exist in one dimension only")
        return _oracle_set(spec, cell_resolution, box_resolution, truncation_radius, oracle_truncated)
    if method != "fd":
        raise ConfigError(f"Unknown corrector method {method!r}")

    settings = _solver(solver)
    periodic_spec = spec.without_defect().spec_hash()

    def periodic(j: int) -> GridField:
        key = {"kind": "periodic", "spec": periodic_spec, "j": j, "res": cell_resolution, **settings}
        return _cached(cache, key, lambda: solve_periodic_corrector(spec, cell_resolution, j, solver))

    def defect(j: int, w_per: GridField) -> Optional[GridField]:
        if not spec.has_defect:
            return None
        key = {"kind": "defect", "spec": spec.spec_hash(), "j": j, "res": cell_resolution,
               "box_res": box_resolution, "R": float(truncation_radius), **settings}
        return _cached(cache, key, lambda: solve_defect_corrector(
            spec, w_per, truncation_radius, box_resolution, j, solver))

    directions = list(range(spec.dim))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        periodic_fields = list(pool.map(periodic, directions))
        defect_fields = list(pool.map(defect, directions, periodic_fields))
    logger.info("Built correctors: d=%d cell_res=%d box_res=%d R=%g defect=%s",
                spec.dim, cell_resolution, box_resolution, truncation_radius, spec.has_defect)
    return CorrectorSet(
        periodic=tuple(periodic_fields),
        defect=tuple(defect_fields),
        periodic_gradients=tuple(gradient(f) for f in periodic_fields),
        defect_gradients=tuple(gradient(f) if f is not None else None for f in defect_fields),
        truncation_radius=float(truncation_radius),
        cell_resolution=cell_resolution,
        box_resolution=box_resolution,
        method="fd",
        spec_hash=spec.spec_hash(),
    )


def _inside(field: GridField, points: np.ndarray) -> np.ndarray:
    lo = np.asarray(field.grid.lo)
    hi = np.asarray(field.grid.hi)
    return np.all((points >= lo) & (points <= hi), axis=1)


def corrector_values(cset: CorrectorSet, j: int, points: np.ndarray, mode: str = "full",
                     derivative: bool = False) -> np.ndarray:
    """``w_j`` (or ``grad w_j`` when ``derivative``) at points of shape ``(m, d)``.

    ``mode="periodic"`` drops the defect part.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    periodic = cset.periodic_gradients[j] if derivative else cset.periodic[j]
    values = interpolate(periodic, points)
    defect = (cset.defect_gradients if derivative else cset.defect)[j]
    if mode == "full" and defect is not None:
        inside = _inside(defect, points)
        if inside.any():
            values[inside] += interpolate(defect, points[inside])
    return values


def sample_corrector(cset: CorrectorSet, j: int, y: Sequence[float]) -> float:
    """``w_per_j(y mod 1) + w_def_j(y)``, the defect part being 0 outside the box."""
    return float(corrector_values(cset, j, np.asarray(y, dtype=float).reshape(1, -1))[0])


def corrector_residual(spec: CoefficientSpec, cset: CorrectorSet, j: int) -> CorrectorResidual:
    """Max-norm of the discrete ``-div(a(e_j + grad w_j))`` at interior nodes.

    Evaluated on the truncation box when a defect corrector exists, otherwise
    on the cell. ``rhs_norm`` sums the 2-norms of the cell and box right-hand
    sides, the scale the solver tolerance refers to.
    """
    cell = cset.periodic[j].grid
    cell_faces = _periodic_faces(spec, cell)
    cell_rhs = face_divergence(cell, [cell_faces[k] * float(k == j) for k in range(spec.dim)])
    rhs_norm = float(np.linalg.norm(cell_rhs))

    defect = cset.defect[j]
    if defect is None:
        grid = cell
        w = cset.periodic[j].data
        faces = cell_faces
    else:
        grid = defect.grid
        w_per = periodic_on(cset.periodic[j], grid)
        w = w_per + defect.data
        faces, box_flux = [], []
        for k in range(spec.dim):
            y = face_centers(grid, k)
            faces.append(evaluate(spec, y))
            box_flux.append(defect_part(spec, y) * (float(k == j) + face_gradient(grid, w_per, k)))
        rhs_norm += float(np.linalg.norm(face_divergence(grid, box_flux)))

    flux = [faces[k] * (float(k == j) + face_gradient(grid, w, k)) for k in range(spec.dim)]
    residual = face_divergence(grid, flux)
    return CorrectorResidual(j, float(np.max(np.abs(residual))), rhs_norm)


def ball_oscillation(values: np.ndarray, grid: Grid, center: Sequence[float], radii: Sequence[float],
                     seed: int = 0) -> np.ndarray:
    """``max - min`` of nodal values over the nodes of each ball ``B_rho(center)``.

    The range is the supremum of ``|v(x) - v(y)|`` over node pairs in the ball.
    """
    distance = np.linalg.norm(grid.mesh() - np.asarray(center, dtype=float), axis=-1)
    rng = np.random.default_rng(seed)
    flat_values = values.reshape(distance.shape + (-1,))
    out = []
    for rho in radii:
        selected = flat_values[distance <= rho]
        if selected.shape[0] > MAX_OSCILLATION_NODES:
            pick = rng.choice(selected.shape[0], MAX_OSCILLATION_NODES, replace=False)
            selected = selected[np.sort(pick)]
        if selected.shape[0] == 0:
            out.append(0.0)
            continue
        out.append(float(np.max(selected.max(axis=0) - selected.min(axis=0))))
    return np.asarray(out)


def check_radii(radii: Sequence[float], limit: float) -> List[float]:
    radii = [float(r) for r in radii]
    if len(radii) < 4:
        raise InsufficientRadii(f"need at least 4 radii, got {len(radii)}")
    if any(b <= a for a, b in zip(radii, radii[1:])) or radii[0] <= 0:
        raise InsufficientRadii("radii must be positive and strictly increasing")
    if radii[-1] < 8 * radii[0]:
        raise InsufficientRadii(f"radii must span a factor 8, got {radii[-1] / radii[0]:.3g}")
    if radii[-1] > limit:
        raise InsufficientRadii(f"largest radius {radii[-1]} exceeds the sampled box {limit}")
    return radii


def growth_fit(radii: Sequence[float], oscillation: np.ndarray) -> SlopeFit:
    if np.any(oscillation <= 0):
        raise DegenerateOscillation("field does not oscillate on every requested ball")
    slope, intercept, stderr = loglog_slope(np.asarray(radii), oscillation)
    return SlopeFit(slope, stderr, intercept, len(radii))


def corrector_box_values(cset: CorrectorSet, j: int) -> Tuple[Grid, np.ndarray]:
    """Full ``w_j`` at the nodes of the truncation box."""
    defect = cset.defect[j]
    grid = defect.grid if defect is not None else truncation_grid(
        cset.dim, cset.truncation_radius, cset.box_resolution)
    values = periodic_on(cset.periodic[j], grid)
    if defect is not None:
        values = values + defect.data
    return grid, values


def sublinearity_exponent(cset: CorrectorSet, j: int, radii: Sequence[float],
                          center: Optional[Sequence[float]] = None, seed: int = 0) -> float:
    """Growth exponent of ``osc(rho)`` of ``w_j`` over balls around the defect centre.

    Raises:
        InsufficientRadii: Fewer than 4 radii, a span below 8x, or a radius beyond the box.
        DegenerateOscillation: If some ball shows no oscillation.
    """
    radii = check_radii(radii, cset.truncation_radius)
    grid, values = corrector_box_values(cset, j)
    center = np.zeros(cset.dim) if center is None else center
    fit = growth_fit(radii, ball_oscillation(values, grid, center, radii, seed))
    logger.info("Corrector growth exponent j=%d: %.4f (stderr %.2g)", j, fit.slope, fit.stderr)
    return fit.slope
