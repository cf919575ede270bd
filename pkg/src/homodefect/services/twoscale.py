"""Oscillatory and homogenized solves, the remainder ``R`` and the flux term ``H``.

For ``u_eps`` solving ``-div(a(x/eps) grad u_eps) = f`` and ``u*`` solving
``-div(a* grad u*) = f`` on the same box (zero Dirichlet data),

    R = u_eps - u* - eps sum_j w_j(x/eps) d_j u*
    H_i = eps sum_k a w_k d_ik u* + eps sum_{j,k} B_k^ij d_jk u*      (a, w, B at x/eps)

and ``-div(a(x/eps) grad R) = div H``. The sign of the ``B`` term follows the
convention ``(div B)^i = sum_j d_j B^ij`` used by the potential solver.
"""

import logging
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.homodefect.lib.config import ConfigError, SolverConfig
from src.homodefect.lib.elliptic_solver import (
    assemble,
    assemble_constant,
    face_average,
    face_centers,
    face_divergence,
    face_gradient,
    solve,
)
from src.homodefect.lib.grid_fields import Box, Grid, GridField, covering_grid, gradient, norm
from src.homodefect.models import (
    CorrectorSet,
    HomogenizedTensor,
    IdentityCheck,
    NormsRecord,
    PotentialField,
    TwoScaleRun,
    lp_channel,
)
from src.homodefect.services.coefficients import CoefficientSpec, evaluate
from src.homodefect.services.correctors import _solver, corrector_values
from src.homodefect.services.homogenization import potential_values
from src.homodefect.services.sources import SourceSpec

logger = logging.getLogger(__name__)

MIN_NODES_PER_PERIOD = 16
MODES = ("full", "periodic")
# Right-hand sides of the identity check below this 2-norm count as vanishing.
DEGENERATE_RHS = 1e-14


class ResolutionTooCoarse(ValueError):
    """Raised when the fine grid resolves a period with fewer than 16 cells."""


class TruncationTooSmall(ValueError):
    """Raised when ``x/eps`` leaves the truncation box of the defect correctors."""


def fine_grid(domain: Box, eps: float, nodes_per_period: int = MIN_NODES_PER_PERIOD) -> Grid:
    """Dirichlet grid on ``domain`` with ``h_k <= eps / nodes_per_period`` on every axis.

    Sides are split into ``ceil(side * nodes_per_period / eps)`` cells, so any
    eps in (0, 1) is accepted. Fine nodes coincide with the cell nodes only
    when eps divides the sides.
    """
    if not 0 < eps < 1:
        raise ConfigError(f"eps must lie in (0, 1), got {eps!r}")
    if nodes_per_period < MIN_NODES_PER_PERIOD:
        raise ResolutionTooCoarse(
            f"{nodes_per_period} nodes per period; at least {MIN_NODES_PER_PERIOD} are required"
        )
    return covering_grid(domain, eps / nodes_per_period)


def _check_resolution(grid: Grid, eps: float) -> None:
    h = max(grid.spacing)
    if h > eps / MIN_NODES_PER_PERIOD * (1 + 1e-12):
        raise ResolutionTooCoarse(f"h = {h:.3g} exceeds eps/{MIN_NODES_PER_PERIOD} = "
                                  f"{eps / MIN_NODES_PER_PERIOD:.3g}")


def _fast_points(grid: Grid, eps: float, shift: Optional[Sequence[float]]) -> np.ndarray:
    y = grid.mesh().reshape(-1, grid.dim) / eps
    if shift is not None:
        y = y + np.asarray(shift, dtype=float)
    return y


def _check_truncation(correctors: CorrectorSet, y: np.ndarray, mode: str) -> None:
    if mode != "full" or not correctors.has_defect:
        return
    reach = float(np.max(np.abs(y)))
    if reach > correctors.truncation_radius * (1 + 1e-12):
        raise TruncationTooSmall(
            f"x/eps reaches {reach:.4g}, beyond the truncation radius {correctors.truncation_radius:g}"
        )


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ConfigError(f"Unknown corrector mode {mode!r}; expected one of {MODES}")


def solve_oscillatory(spec: CoefficientSpec, eps: float, source: SourceSpec, grid: Grid,
                      solver: Optional[SolverConfig] = None,
                      shift: Optional[Sequence[float]] = None) -> GridField:
    """Solve ``-div(a(x/eps + shift) grad u) = f`` with ``u = 0`` on the boundary.

    Args:
        spec: Coefficient specification.
        eps: Oscillation scale in (0, 1).
        source: Right-hand side.
        grid: Dirichlet grid with ``h <= eps / 16``.
        solver: Solver settings.
        shift: Optional lattice offset ``y0`` for translated coefficients.

    Returns:
        The discrete solution on ``grid``.

    Raises:
        ResolutionTooCoarse: If the grid is too coarse for ``eps``.
        NoConvergence: Propagated from the solver.
    """
    _check_resolution(grid, eps)
    problem = assemble(spec, grid, scale=eps, rhs_volume=source.evaluate(grid.mesh()), shift=shift)
    u, report = solve(problem, **_solver(solver))
    logger.debug("Oscillatory solve eps=%g: %s", eps, report)
    return u


def solve_homogenized(a_star: HomogenizedTensor, source: SourceSpec, grid: Grid,
                      solver: Optional[SolverConfig] = None) -> GridField:
    """Constant-coefficient Dirichlet solve ``-div(a* grad u*) = f``."""
    if not a_star.elliptic:
        raise ConfigError(f"homogenized tensor is not elliptic: eigenvalues {a_star.eigenvalues}")
    problem = assemble_constant(a_star.matrix, grid, rhs_volume=source.evaluate(grid.mesh()))
    u, report = solve(problem, **_solver(solver))
    logger.debug("Homogenized solve: %s", report)
    return u


def hessian(u: GridField) -> GridField:
    """Second differences ``[..., j, k] = d_k d_j u`` (gradient applied twice)."""
    return gradient(gradient(u))


def assemble_remainder(u_eps: GridField, u_star: GridField, correctors: Optional[CorrectorSet],
                       eps: float, mode: str = "full",
                       shift: Optional[Sequence[float]] = None) -> GridField:
    """``R = u_eps - u* - eps sum_j w_j(x/eps) d_j u*`` nodewise.

    ``mode="periodic"`` uses ``w_per_j`` in place of ``w_j``; without
    correctors the corrector term is dropped and ``R = u_eps - u*``.

    Raises:
        TruncationTooSmall: If a defect corrector is needed beyond its box.
    """
    _check_mode(mode)
    grid = u_eps.grid
    if u_star.grid != grid:
        raise ConfigError("u_eps and u* must share the fine grid")
    remainder = u_eps.data - u_star.data
    if correctors is None:
        return GridField(grid, remainder)
    y = _fast_points(grid, eps, shift)
    _check_truncation(correctors, y, mode)
    du = gradient(u_star).data
    for j in range(grid.dim):
        w = corrector_values(correctors, j, y, mode).reshape(grid.extents)
        remainder = remainder - eps * w * du[..., j]
    return GridField(grid, remainder)


def assemble_H(spec: CoefficientSpec, correctors: CorrectorSet,
               potentials: Optional[Sequence[PotentialField]], u_star: GridField, eps: float,
               mode: str = "full", shift: Optional[Sequence[float]] = None) -> GridField:
    """Flux term ``H`` with ``-div(a(x/eps) grad R) = div H``, shape ``extents + (d,)``.

    ``potentials`` may be omitted in one dimension, where ``B = 0``.
    """
    _check_mode(mode)
    grid = u_star.grid
    d = grid.dim
    if d > 1 and (potentials is None or len(potentials) != d):
        raise ConfigError(f"{d} potentials are required in dimension {d}")
    y = _fast_points(grid, eps, shift)
    _check_truncation(correctors, y, mode)
    second = hessian(u_star).data
    a = evaluate(spec, y).reshape(grid.extents)
    H = np.zeros(tuple(grid.extents) + (d,))
    for k in range(d):
        w = corrector_values(correctors, k, y, mode).reshape(grid.extents)
        for i in range(d):
            H[..., i] += eps * a * w * second[..., i, k]
            for j in range(d):
                if j == i:
                    continue
                B = potential_values(potentials[k], i, j, y, mode).reshape(grid.extents)
                H[..., i] += eps * B * second[..., j, k]
    return GridField(grid, H)


def _face_coefficients(spec: CoefficientSpec, grid: Grid, eps: float,
                       shift: Optional[Sequence[float]]) -> List[np.ndarray]:
    faces = []
    for k in range(grid.dim):
        y = face_centers(grid, k) / eps
        if shift is not None:
            y = y + np.asarray(shift, dtype=float)
        faces.append(evaluate(spec, y))
    return faces


def _flux_faces(H: GridField) -> List[np.ndarray]:
    return [face_average(H.grid, H.data[..., k], k) for k in range(H.grid.dim)]


def residual_identity_check(spec: CoefficientSpec, eps: float, remainder: GridField, H: GridField,
                            interior: Optional[Box] = None,
                            shift: Optional[Sequence[float]] = None) -> IdentityCheck:
    """Relative 2-norm over ``interior`` of ``-div(a grad R) - div H``.

    Both sides use the face-flux operators of the solver; ``H`` is averaged
    onto faces. A vanishing right-hand side is reported as degenerate with
    residual 0.
    """
    grid = remainder.grid
    faces = _face_coefficients(spec, grid, eps, shift)
    lhs = -face_divergence(grid, [faces[k] * face_gradient(grid, remainder.data, k)
                                  for k in range(grid.dim)])
    rhs = face_divergence(grid, _flux_faces(H))
    lhs_norm = norm(GridField(grid, lhs), 2.0, interior)
    rhs_norm = norm(GridField(grid, rhs), 2.0, interior)
    if rhs_norm <= DEGENERATE_RHS:
        logger.info("Identity check eps=%g: right-hand side vanishes (%.2e)", eps, rhs_norm)
        return IdentityCheck(0.0, lhs_norm, rhs_norm, True)
    relative = norm(GridField(grid, lhs - rhs), 2.0, interior) / rhs_norm
    return IdentityCheck(relative, lhs_norm, rhs_norm, False)


def split_remainder(spec: CoefficientSpec, eps: float, remainder: GridField, H: GridField,
                    solver: Optional[SolverConfig] = None,
                    shift: Optional[Sequence[float]] = None) -> Tuple[GridField, GridField]:
    """``R = R1 + R2`` with ``-div(a grad R2) = div H``, ``R2 = 0`` on the boundary.

    ``R1`` is then a-harmonic and carries the boundary values of ``R``.
    """
    grid = remainder.grid
    problem = assemble(spec, grid, scale=eps, rhs_flux=_flux_faces(H), shift=shift)
    R2, report = solve(problem, **_solver(solver))
    logger.debug("Remainder split eps=%g: %s", eps, report)
    return GridField(grid, remainder.data - R2.data), R2


def remainder_norms(run: TwoScaleRun, p_list: Sequence[float] = ()) -> NormsRecord:
    """All norm channels of a run.

    ``R`` and ``u_eps - u*`` are measured on the whole domain, ``grad R`` on
    the interior box only.
    """
    domain, interior = run.domain, run.interior
    grad_R = gradient(run.remainder)
    diff = GridField(run.grid, run.u_eps.data - run.u_star.data)
    values = {
        "R_L2": norm(run.remainder, 2.0, domain),
        "diff_L2": norm(diff, 2.0, domain),
        "diff_Linf": norm(diff, np.inf, domain),
        "gradR_L2_interior": norm(grad_R, 2.0, interior),
        "gradR_Linf_interior": norm(grad_R, np.inf, interior),
        "u_star_L2": norm(run.u_star, 2.0, domain),
        "hessian_L2": norm(hessian(run.u_star), 2.0, domain),
    }
    if run.flux_term is not None:
        values["H_L2"] = norm(run.flux_term, 2.0, domain)
        values["H_Linf"] = norm(run.flux_term, np.inf, domain)
    for p in p_list:
        values[lp_channel("R", p)] = norm(run.remainder, p, domain)
        values[lp_channel("gradR", p, interior=True)] = norm(grad_R, p, interior)
    return NormsRecord(values)


def run_two_scale(spec: CoefficientSpec, eps: float, source: SourceSpec, correctors: CorrectorSet,
                  a_star: HomogenizedTensor, potentials: Optional[Sequence[PotentialField]] = None,
                  interior: Optional[Box] = None, nodes_per_period: int = MIN_NODES_PER_PERIOD,
                  modes: Sequence[str] = MODES, p_list: Sequence[float] = (),
                  split: bool = False, shift: Optional[Sequence[float]] = None,
                  solver: Optional[SolverConfig] = None) -> Dict[str, TwoScaleRun]:
    """Solve both problems at scale ``eps`` and assemble one run per corrector mode.

    ``u_eps`` and ``u*`` are shared between modes. The identity check is
    made for every mode; it only holds for ``full`` (or without a defect).

    Per mode the run carries:
        - R = u_eps - u* - eps sum_j w_j(x/eps) d_j u*
        - the flux term H and the relative residual of
          ``-div(a grad R) = div H`` on the interior box
        - norms: R_L2, diff_L2, diff_Linf, gradR_L2_interior,
          gradR_Linf_interior, u_star_L2, hessian_L2, H_L2, H_Linf and the
          extra L^p channels of ``p_list``
        - R1_Linf and R2_Linf when ``split`` is set

    Args:
        spec: Coefficient specification.
        eps: Oscillation scale in (0, 1).
        source: Right-hand side and domain.
        correctors: Corrector set covering ``x/eps`` for the ``full`` mode.
        a_star: Homogenized tensor.
        potentials: Flux potentials ``B_k``; required when d > 1.
        interior: Subdomain of the interior gradient norms; defaults to the
            domain shrunk by 0.5.
        nodes_per_period: Fine-grid nodes per eps-period, at least 16.
        modes: Subset of ``("full", "periodic")``.
        p_list: Extra norm exponents.
        split: Also split R into the parts driven by H and by boundary data.
        shift: Lattice offset ``y0``.
        solver: Solver settings.

    Returns:
        Mapping from mode to TwoScaleRun.

    Raises:
        ConfigError: On an unknown mode or missing potentials in d > 1.
        ResolutionTooCoarse: If ``nodes_per_period`` is below 16.
        TruncationTooSmall: If ``x/eps`` leaves the defect box in ``full`` mode.
        NoConvergence: Propagated from the solves.

    Examples:
        >>> cset = build_corrector_set(spec, 16, 16, 10.0)
        >>> tensor = homogenized_tensor(spec, cset.periodic)
        >>> runs = run_two_scale(spec, 0.125, source, cset, tensor)
        >>> sorted(runs)
        ['full', 'periodic']
    """
    for mode in modes:
        _check_mode(mode)
    domain = source.domain
    if interior is None:
        interior = Box(tuple(a + 0.5 for a in domain.lo), tuple(b - 0.5 for b in domain.hi))
    grid = fine_grid(domain, eps, nodes_per_period)
    timings = {}

    start = time.perf_counter()
    u_eps = solve_oscillatory(spec, eps, source, grid, solver, shift)
    timings["oscillatory"] = time.perf_counter() - start
    start = time.perf_counter()
    u_star = solve_homogenized(a_star, source, grid, solver)
    timings["homogenized"] = time.perf_counter() - start

    runs = {}
    for mode in modes:
        start = time.perf_counter()
        remainder = assemble_remainder(u_eps, u_star, correctors, eps, mode, shift)
        H = assemble_H(spec, correctors, potentials, u_star, eps, mode, shift)
        run = TwoScaleRun(eps, mode, source.kind, domain, interior, grid, u_eps, u_star,
                          remainder, flux_term=H, shift=tuple(shift) if shift is not None else None)
        run.identity = residual_identity_check(spec, eps, remainder, H, interior, shift)
        run.norms = remainder_norms(run, p_list)
        if split:
            R1, R2 = split_remainder(spec, eps, remainder, H, solver, shift)
            run.norms.values["R1_Linf"] = norm(R1, np.inf)
            run.norms.values["R2_Linf"] = norm(R2, np.inf)
        run.timings = dict(timings, assemble=time.perf_counter() - start)
        logger.info("eps=%g mode=%s R_L2=%.4e gradR_Linf_interior=%.4e identity=%.2e",
                    eps, mode, run.norms["R_L2"], run.norms["gradR_Linf_interior"],
                    run.identity.relative_residual)
        runs[mode] = run
    return runs
