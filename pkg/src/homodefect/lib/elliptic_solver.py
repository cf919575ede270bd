"""Divergence-form elliptic problems on periodic cells and Dirichlet boxes.

Discretisation is the 2d+1 point face-flux stencil. With ``D_k`` the forward
difference from nodes to the faces normal to axis ``k``, the operator is

    A = sum_k D_k^T diag(a_k) D_k

where ``a_k`` holds the coefficient evaluated at face centres. A face field
``g_k`` enters the right-hand side as ``div g = -sum_k D_k^T g_k``. Dirichlet
problems keep the boundary layer at zero and solve for interior nodes only.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from src.homodefect.lib.config import ConfigError
from src.homodefect.lib.grid_fields import PERIODIC, Grid, GridField

logger = logging.getLogger(__name__)

# "auto" keeps the tridiagonal direct solve for 1D systems up to this many unknowns.
DIRECT_1D_LIMIT = 32_768

FaceArrays = Sequence[np.ndarray]
Coefficient = Union[Callable[[np.ndarray], np.ndarray], FaceArrays]


class NoConvergence(RuntimeError):
    """Raised when the iterative solver misses its tolerance."""

    def __init__(self, iterations: int, residual: float, tol: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"PCG stopped after {iterations} iterations at relative residual "
            f"{residual:.3e} (tol {tol:.1e})"
        )


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    residual: float  # final relative residual ||b - Au|| / ||b||
    wall_time: float  # seconds
    method: str  # pcg | direct

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "residual": self.residual,
            "wall_time": self.wall_time,
            "method": self.method,
        }


@dataclass(eq=False)
class DiscreteProblem:
    """Assembled linear system for one grid and boundary condition."""
    grid: Grid
    face_coefficients: Tuple[np.ndarray, ...]
    rhs_volume: np.ndarray
    rhs_flux: Optional[Tuple[np.ndarray, ...]]
    bc: str
    matrix: sp.csr_matrix = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    unknowns: np.ndarray = field(repr=False)  # flat node indices solved for

    @property
    def periodic(self) -> bool:
        return self.bc == PERIODIC


def face_shape(grid: Grid, axis: int) -> Tuple[int, ...]:
    shape = list(grid.extents)
    if not grid.periodic:
        shape[axis] -= 1
    return tuple(shape)


def face_centers(grid: Grid, axis: int) -> np.ndarray:
    """Coordinates of the centres of faces normal to ``axis``, shape ``face_shape + (d,)``."""
    axes = []
    for k in range(grid.dim):
        n = face_shape(grid, axis)[k]
        x = grid.origin[k] + grid.spacing[k] * np.arange(n, dtype=float)
        if k == axis:
            x = x + 0.5 * grid.spacing[k]
        axes.append(x)
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def face_gradient(grid: Grid, data: np.ndarray, axis: int) -> np.ndarray:
    """Forward difference ``D_axis`` of nodal data onto faces normal to ``axis``."""
    h = grid.spacing[axis]
    if grid.periodic:
        return (np.roll(data, -1, axis=axis) - data) / h
    return np.diff(data, axis=axis) / h


def face_divergence(grid: Grid, faces: Sequence[np.ndarray]) -> np.ndarray:
    """Nodal divergence ``sum_k (F_{k,+} - F_{k,-}) / h_k`` of face data.

    On Dirichlet grids the boundary layer has no outer face and is returned as 0.
    """
    out = np.zeros(tuple(grid.extents) + faces[0].shape[grid.dim:])
    for k, F in enumerate(faces):
        h = grid.spacing[k]
        if grid.periodic:
            out += (F - np.roll(F, 1, axis=k)) / h
        else:
            inner = [slice(None)] * out.ndim
            inner[k] = slice(1, -1)
            out[tuple(inner)] += np.diff(F, axis=k) / h
    if not grid.periodic:
        out[_boundary_mask(grid)] = 0.0
    return out


def face_average(grid: Grid, data: np.ndarray, axis: int) -> np.ndarray:
    """Average of nodal data across each face normal to ``axis``."""
    if grid.periodic:
        return 0.5 * (data + np.roll(data, -1, axis=axis))
    lower = [slice(None)] * data.ndim
    upper = [slice(None)] * data.ndim
    lower[axis] = slice(0, -1)
    upper[axis] = slice(1, None)
    return 0.5 * (data[tuple(lower)] + data[tuple(upper)])


def _boundary_mask(grid: Grid) -> np.ndarray:
    mask = np.zeros(grid.extents, dtype=bool)
    for k in range(grid.dim):
        index = [slice(None)] * grid.dim
        index[k] = 0
        mask[tuple(index)] = True
        index[k] = -1
        mask[tuple(index)] = True
    return mask


def interior_indices(grid: Grid) -> np.ndarray:
    if grid.periodic:
        return np.arange(grid.size)
    return np.flatnonzero(~_boundary_mask(grid).ravel())


def _difference_1d(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    if periodic:
        rows = np.arange(n)
        cols_plus = (rows + 1) % n
        return sp.csr_matrix(
            (np.concatenate([-np.ones(n), np.ones(n)]) / h,
             (np.concatenate([rows, rows]), np.concatenate([rows, cols_plus]))),
            shape=(n, n),
        )
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n)).tocsr() / h


def _central_1d(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    op = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], shape=(n, n)).tolil()
    if periodic:
        op[0, n - 1] = -1.0
        op[n - 1, 0] = 1.0
    return op.tocsr() / (2.0 * h)


def _kron_along(grid: Grid, axis: int, op: sp.spmatrix) -> sp.csr_matrix:
    out = None
    for k in range(grid.dim):
        factor = op if k == axis else sp.identity(grid.extents[k], format="csr")
        out = factor if out is None else sp.kron(out, factor, format="csr")
    return out.tocsr()


def difference_operator(grid: Grid, axis: int) -> sp.csr_matrix:
    """Sparse ``D_axis`` acting on all flattened nodes."""
    return _kron_along(
        grid, axis, _difference_1d(grid.extents[axis], grid.spacing[axis], grid.periodic)
    )


def _face_values(coefficient: Coefficient, grid: Grid, scale: Optional[float],
                 shift: Optional[Sequence[float]]) -> Tuple[np.ndarray, ...]:
    if callable(coefficient):
        values = []
        for k in range(grid.dim):
            y = face_centers(grid, k)
            if scale is not None:
                y = y / scale
            if shift is not None:
                y = y + np.asarray(shift, dtype=float)
            values.append(np.asarray(coefficient(y), dtype=float))
        return tuple(values)
    frozen = tuple(np.asarray(a, dtype=float) for a in coefficient)
    if len(frozen) != grid.dim:
        raise ConfigError(f"Expected {grid.dim} face coefficient arrays, got {len(frozen)}")
    for k, a in enumerate(frozen):
        if a.shape != face_shape(grid, k):
            raise ConfigError(f"Face coefficients on axis {k} have shape {a.shape}")
    return frozen


def _rhs_vector(grid: Grid, rhs_volume: np.ndarray,
                rhs_flux: Optional[Sequence[np.ndarray]]) -> np.ndarray:
    b = rhs_volume.ravel().astype(float)
    if rhs_flux is not None:
        b = b + face_divergence(grid, rhs_flux).ravel()
    return b


def assemble(coefficient: Coefficient, grid: Grid, scale: Optional[float] = None,
             rhs_volume: Optional[np.ndarray] = None,
             rhs_flux: Optional[Sequence[np.ndarray]] = None,
             bc: Optional[str] = None,
             shift: Optional[Sequence[float]] = None) -> DiscreteProblem:
    """Assemble ``-div(a grad u) = f + div g`` on ``grid``.

    Args:
        coefficient: Vectorised callable ``a(y)`` taking points of shape ``(..., d)``,
            evaluated at face centres divided by ``scale`` (plus ``shift``), or a
            frozen sequence of per-axis face coefficient arrays.
        grid: Periodic or Dirichlet grid.
        scale: Optional oscillation scale epsilon.
        rhs_volume: Nodal source ``f`` (zeros when omitted).
        rhs_flux: Optional per-axis face arrays of ``g`` (face-normal component).
        bc: Boundary tag; must match ``grid.bc`` when given.
        shift: Optional lattice offset added to the rescaled face coordinates.

    Raises:
        ConfigError: On bc/grid mismatch, bad shapes or non-positive coefficients.
    """
    if bc is not None and bc != grid.bc:
        raise ConfigError(f"Boundary condition {bc!r} does not match {grid.bc!r} grid")
    if scale is not None and not scale > 0:
        raise ConfigError(f"Scale must be positive, got {scale!r}")

    faces = _face_values(coefficient, grid, scale, shift)
    for k, a in enumerate(faces):
        if not np.all(np.isfinite(a)) or a.min() <= 0:
            raise ConfigError(f"Face coefficients on axis {k} must be finite and positive")

    if rhs_volume is None:
        rhs_volume = np.zeros(grid.extents)
    rhs_volume = np.asarray(rhs_volume, dtype=float)
    if rhs_volume.shape != tuple(grid.extents):
        raise ConfigError(f"Volume source shape {rhs_volume.shape} != {grid.extents}")
    flux = None
    if rhs_flux is not None:
        flux = tuple(np.asarray(g, dtype=float) for g in rhs_flux)
        for k, g in enumerate(flux):
            if g.shape != face_shape(grid, k):
                raise ConfigError(f"Flux source on axis {k} has shape {g.shape}")

    matrix = None
    for k in range(grid.dim):
        D = difference_operator(grid, k)
        term = D.T @ sp.diags(faces[k].ravel()) @ D
        matrix = term if matrix is None else matrix + term
    unknowns = interior_indices(grid)
    matrix = matrix.tocsr()
    if not grid.periodic:
        matrix = matrix[unknowns][:, unknowns].tocsr()
    rhs = _rhs_vector(grid, rhs_volume, flux)[unknowns]
    return DiscreteProblem(grid, faces, rhs_volume, flux, grid.bc, matrix, rhs, unknowns)


def assemble_constant(tensor: np.ndarray, grid: Grid, rhs_volume: Optional[np.ndarray] = None,
                      bc: Optional[str] = None) -> DiscreteProblem:
    """Assemble ``-div(A grad u) = f`` for a constant symmetric tensor ``A``.

    Diagonal entries use the face stencil; off-diagonal entries add the
    symmetric cross stencil ``-A_ik (C_i C_k + C_k C_i)`` built from central
    differences ``C``.
    """
    tensor = np.atleast_2d(np.asarray(tensor, dtype=float))
    d = grid.dim
    if tensor.shape != (d, d):
        raise ConfigError(f"Tensor shape {tensor.shape} does not match dimension {d}")
    faces = [np.full(face_shape(grid, k), tensor[k, k]) for k in range(d)]
    problem = assemble(faces, grid, rhs_volume=rhs_volume, bc=bc)

    cross = None
    for i in range(d):
        for k in range(i + 1, d):
            coupling = 0.5 * (tensor[i, k] + tensor[k, i])
            if coupling == 0.0:
                continue
            Ci = _kron_along(grid, i, _central_1d(grid.extents[i], grid.spacing[i], grid.periodic))
            Ck = _kron_along(grid, k, _central_1d(grid.extents[k], grid.spacing[k], grid.periodic))
            term = -coupling * (Ci @ Ck + Ck @ Ci)
            cross = term if cross is None else cross + term
    if cross is not None:
        cross = cross.tocsr()
        if not grid.periodic:
            cross = cross[problem.unknowns][:, problem.unknowns]
        problem.matrix = (problem.matrix + cross).tocsr()
    return problem


def apply_operator(problem: DiscreteProblem, u: np.ndarray) -> np.ndarray:
    """``A u`` for a vector over the problem's unknowns."""
    return problem.matrix @ u


def _project(v: np.ndarray) -> np.ndarray:
    return v - v.mean()


def _pcg(problem: DiscreteProblem, b: np.ndarray, tol: float,
         max_iter: int) -> Tuple[np.ndarray, int, float]:
    """Jacobi-preconditioned CG; periodic problems stay in the zero-mean subspace."""
    A = problem.matrix
    inv_diag = 1.0 / A.diagonal()
    periodic = problem.periodic
    b_norm = np.linalg.norm(b)

    x = np.zeros_like(b)
    r = b.copy()
    z = inv_diag * r
    if periodic:
        z = _project(z)
    p = z.copy()
    rz = r @ z
    residual = np.linalg.norm(r) / b_norm
    iterations = 0
    while residual > tol and iterations < max_iter:
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if periodic:
            r = _project(r)
        iterations += 1
        residual = np.linalg.norm(r) / b_norm
        if iterations % 1000 == 0:
            logger.debug("PCG iteration %d residual %.3e", iterations, residual)
        z = inv_diag * r
        if periodic:
            z = _project(z)
        rz_next = r @ z
        p = z + (rz_next / rz) * p
        rz = rz_next
    return x, iterations, residual


def _direct(problem: DiscreteProblem, b: np.ndarray) -> np.ndarray:
    A = problem.matrix
    if not problem.periodic:
        return np.asarray(spsolve(A.tocsc(), b), dtype=float)
    # Pin node 0; the compatible right-hand side makes the reduced solve exact.
    reduced = A[1:, 1:].tocsc()
    x = np.zeros_like(b)
    x[1:] = spsolve(reduced, b[1:])
    return x


def solve(problem: DiscreteProblem, tol: float = 1e-10, max_iter: int = 200_000,
          method: str = "auto") -> Tuple[GridField, SolverReport]:
    """Solve an assembled problem.

    Periodic right-hand sides are projected onto zero mean and the solution is
    returned with its mean subtracted. ``method`` is ``"pcg"``, ``"direct"`` or
    ``"auto"`` (PCG, except the direct solve for 1D systems of at most
    ``DIRECT_1D_LIMIT`` unknowns).

    Raises:
        NoConvergence: If PCG does not reach ``tol`` within ``max_iter`` iterations.
    """
    if not 0 < tol < 1:
        raise ConfigError(f"Solver tolerance must lie in (0, 1), got {tol!r}")
    if method not in ("auto", "pcg", "direct"):
        raise ConfigError(f"Unknown solver method {method!r}")
    grid = problem.grid
    start = time.perf_counter()
    b = problem.rhs.copy()
    if problem.periodic:
        b = _project(b)

    data = np.zeros(grid.size)
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        report = SolverReport(0, 0.0, time.perf_counter() - start, "none")
        return GridField(grid, data.reshape(grid.extents)), report

    if method == "auto":
        method = "direct" if grid.dim == 1 and b.size <= DIRECT_1D_LIMIT else "pcg"
    if method == "direct":
        x = _direct(problem, b)
        iterations = 1
    else:
        x, iterations, final = _pcg(problem, b, tol, max_iter)
        if final > tol:
            raise NoConvergence(iterations, final, tol)
    if problem.periodic:
        x = _project(x)
    residual_vec = b - problem.matrix @ x
    if problem.periodic:
        residual_vec = _project(residual_vec)
    residual = float(np.linalg.norm(residual_vec) / b_norm)
    if not np.isfinite(residual):
        raise NoConvergence(iterations, residual, tol)

    data[problem.unknowns] = x
    report = SolverReport(iterations, residual, time.perf_counter() - start, method)
    logger.debug("Solved %s system of %d unknowns with %s in %d iterations, residual %.2e",
                 problem.bc, b.size, method, iterations, residual)
    return GridField(grid, data.reshape(grid.extents)), report
