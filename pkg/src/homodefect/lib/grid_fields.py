"""Uniform tensor grids and the fields that live on them.

A ``Grid`` is an axis-aligned lattice in dimension 1, 2 or 3. Dirichlet grids
store every node including the two boundary layers; periodic grids store
``n_k`` nodes per axis and identify node ``n_k`` with node ``0``, so the period
along axis ``k`` is ``n_k * h_k``.

A ``GridField`` is a value object: a grid plus a numpy array whose leading
axes are the spatial axes and whose trailing axes are the components
(``()`` scalar, ``(d,)`` vector, ``(d, d)`` matrix). Storage is row-major with
the component index fastest, which is also the on-disk order of
``field_io``.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

logger = logging.getLogger(__name__)

PERIODIC = "periodic"
DIRICHLET = "dirichlet"
BC_TAGS = (PERIODIC, DIRICHLET)

# Snap interpolation coordinates within this many cells of a node onto it.
_NODE_SNAP = 1e-9


class GridError(ValueError):
    """Raised when grid metadata violates the grid invariants."""


class NonFiniteField(ValueError):
    """Raised when a field would hold NaN or Inf values."""


class EmptySubdomain(ValueError):
    """Raised when a norm subdomain contains no grid node."""

    def __init__(self, lo: Sequence[float], hi: Sequence[float]):
        self.lo = tuple(lo)
        self.hi = tuple(hi)
        super().__init__(f"No grid node inside subdomain lo={self.lo} hi={self.hi}")


class OutOfDomain(ValueError):
    """Raised when a point lies outside a Dirichlet grid box."""

    def __init__(self, axis: int, coordinate: float, lo: float, hi: float):
        self.axis = axis
        self.coordinate = coordinate
        super().__init__(
            f"Coordinate {coordinate!r} on axis {axis} outside [{lo!r}, {hi!r}]"
        )


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo, hi]`` used for domains and subdomains."""
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise GridError("Box lo/hi dimension mismatch")
        if any(b <= a for a, b in zip(self.lo, self.hi)):
            raise GridError(f"Degenerate box lo={self.lo} hi={self.hi}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @classmethod
    def cube(cls, dim: int, lo: float, hi: float) -> "Box":
        return cls(tuple([float(lo)] * dim), tuple([float(hi)] * dim))

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class Grid:
    """Uniform grid metadata.

    Attributes:
        extents: Node count per axis (stored nodes; periodic grids exclude the duplicate).
        origin: Coordinates of node ``(0, ..., 0)``.
        spacing: Node spacing ``h_k`` per axis.
        bc: ``"periodic"`` or ``"dirichlet"``.
    """
    extents: Tuple[int, ...]
    origin: Tuple[float, ...]
    spacing: Tuple[float, ...]
    bc: str

    def __post_init__(self):
        if not 1 <= len(self.extents) <= 3:
            raise GridError(f"Grid dimension must be 1, 2 or 3, got {len(self.extents)}")
        if len(self.origin) != len(self.extents) or len(self.spacing) != len(self.extents):
            raise GridError("Grid extents/origin/spacing dimension mismatch")
        if any(int(n) < 3 for n in self.extents):
            raise GridError(f"Grid needs at least 3 nodes per axis, got {self.extents}")
        if any(not np.isfinite(h) or h <= 0 for h in self.spacing):
            raise GridError(f"Grid spacing must be positive, got {self.spacing}")
        if self.bc not in BC_TAGS:
            raise GridError(f"Unknown boundary tag {self.bc!r}")

    @property
    def dim(self) -> int:
        return len(self.extents)

    @property
    def size(self) -> int:
        return int(np.prod(self.extents))

    @property
    def lo(self) -> Tuple[float, ...]:
        return self.origin

    @property
    def hi(self) -> Tuple[float, ...]:
        """Upper corner of the grid box (one period beyond ``lo`` when periodic)."""
        if self.bc == PERIODIC:
            return tuple(o + n * h for o, n, h in zip(self.origin, self.extents, self.spacing))
        return tuple(o + (n - 1) * h for o, n, h in zip(self.origin, self.extents, self.spacing))

    @property
    def periodic(self) -> bool:
        return self.bc == PERIODIC

    def coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing[axis] * np.arange(self.extents[axis], dtype=float)

    def mesh(self) -> np.ndarray:
        """Node coordinates, shape ``extents + (d,)``."""
        axes = np.meshgrid(*[self.coords(k) for k in range(self.dim)], indexing="ij")
        return np.stack(axes, axis=-1)

    def shifted(self, offset: Sequence[float], extents: Optional[Sequence[int]] = None) -> "Grid":
        """Same spacing and bc, origin moved by ``offset`` (in coordinates)."""
        return Grid(
            extents=tuple(int(n) for n in (extents if extents is not None else self.extents)),
            origin=tuple(o + float(s) for o, s in zip(self.origin, offset)),
            spacing=self.spacing,
            bc=self.bc,
        )

    def to_dict(self) -> dict:
        return {
            "extents": list(self.extents),
            "origin": list(self.origin),
            "spacing": list(self.spacing),
            "bc": self.bc,
        }


def cell_grid(dim: int, resolution: int) -> Grid:
    """Periodic grid on the unit cell ``[0, 1)^d``."""
    return Grid((resolution,) * dim, (0.0,) * dim, (1.0 / resolution,) * dim, PERIODIC)


def box_grid(box: Box, spacing: float) -> Grid:
    """Dirichlet grid whose boundary nodes sit on the faces of ``box``."""
    extents = []
    for a, b in zip(box.lo, box.hi):
        cells = (b - a) / spacing
        n = int(round(cells))
        if abs(cells - n) > 1e-9 * max(1.0, cells):
            raise GridError(f"Spacing {spacing!r} does not divide box side {b - a!r}")
        extents.append(n + 1)
    return Grid(tuple(extents), tuple(float(a) for a in box.lo), (float(spacing),) * box.dim, DIRICHLET)


def covering_grid(box: Box, max_spacing: float) -> Grid:
    """Dirichlet grid on ``box`` with the fewest cells per axis such that ``h_k <= max_spacing``.

    Each axis gets ``ceil(side / max_spacing)`` cells of width ``side / n``, so
    the boundary nodes always sit on the faces of ``box`` and ``max_spacing``
    need not divide the sides. When it does, the grid matches ``box_grid``.
    """
    if not max_spacing > 0:
        raise GridError(f"Spacing must be positive, got {max_spacing!r}")
    extents, spacing = [], []
    for a, b in zip(box.lo, box.hi):
        cells = (b - a) / max_spacing
        n = max(2, int(np.ceil(cells - 1e-9 * max(1.0, cells))))
        extents.append(n + 1)
        spacing.append((b - a) / n)
    return Grid(tuple(extents), tuple(float(a) for a in box.lo), tuple(spacing), DIRICHLET)


@dataclass(frozen=True, eq=False)
class GridField:
    """Scalar, vector or matrix field on a grid."""
    grid: Grid
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.shape[: self.grid.dim] != tuple(self.grid.extents):
            raise GridError(
                f"Field data shape {data.shape} does not match grid extents {self.grid.extents}"
            )
        if data.ndim - self.grid.dim > 2:
            raise GridError(f"Unsupported component shape {data.shape[self.grid.dim:]}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteField("Field contains NaN or Inf values")
        object.__setattr__(self, "data", data)

    @property
    def component_shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape[self.grid.dim:])

    @property
    def components(self) -> int:
        return int(np.prod(self.component_shape)) if self.component_shape else 1

    def with_data(self, data: np.ndarray) -> "GridField":
        return GridField(self.grid, data)

    def __neg__(self) -> "GridField":
        return GridField(self.grid, -self.data)


def _derivative(data: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    h = grid.spacing[axis]
    if grid.periodic:
        return (np.roll(data, -1, axis=axis) - np.roll(data, 1, axis=axis)) / (2.0 * h)
    return np.gradient(data, h, axis=axis, edge_order=2)


def gradient(f: GridField) -> GridField:
    """Second-order nodal gradient.

    Central differences in the interior and across the wrap of periodic grids,
    second-order one-sided differences on Dirichlet boundary layers. A vector
    input yields the matrix field ``[..., c, k] = d f_c / d x_k``.
    """
    if len(f.component_shape) > 1:
        raise GridError("gradient accepts scalar or vector fields")
    grid = f.grid
    parts = [_derivative(f.data, grid, k) for k in range(grid.dim)]
    return GridField(grid, np.stack(parts, axis=-1))


def magnitude(f: GridField) -> np.ndarray:
    """Pointwise Euclidean (Frobenius for matrices) magnitude."""
    if not f.component_shape:
        return np.abs(f.data)
    axes = tuple(range(f.grid.dim, f.data.ndim))
    return np.sqrt(np.sum(f.data * f.data, axis=axes))


def _axis_weights(grid: Grid, axis: int, subdomain: Optional[Box]) -> Tuple[np.ndarray, np.ndarray]:
    """Dual-cell lengths clipped to the grid box and the subdomain (0 outside)."""
    x = grid.coords(axis)
    h = grid.spacing[axis]
    left = x - 0.5 * h
    right = x + 0.5 * h
    if not grid.periodic:
        left = np.maximum(left, grid.lo[axis])
        right = np.minimum(right, grid.hi[axis])
    inside = np.ones_like(x, dtype=bool)
    if subdomain is not None:
        a, b = subdomain.lo[axis], subdomain.hi[axis]
        slack = 1e-12 * max(1.0, abs(a), abs(b))
        inside = (x >= a - slack) & (x <= b + slack)
        left = np.maximum(left, a)
        right = np.minimum(right, b)
    return np.where(inside, np.maximum(right - left, 0.0), 0.0), inside


def _check_subdomain(grid: Grid, subdomain: Box) -> None:
    if subdomain.dim != grid.dim:
        raise GridError("Subdomain dimension does not match grid")
    for k in range(grid.dim):
        slack = 1e-12 * max(1.0, abs(grid.lo[k]), abs(grid.hi[k]))
        if subdomain.lo[k] < grid.lo[k] - slack:
            raise OutOfDomain(k, subdomain.lo[k], grid.lo[k], grid.hi[k])
        if subdomain.hi[k] > grid.hi[k] + slack:
            raise OutOfDomain(k, subdomain.hi[k], grid.lo[k], grid.hi[k])


def norm(f: GridField, p: float = 2.0, subdomain: Optional[Box] = None) -> float:
    """L^p norm of a grid field over the grid box or a subdomain.

    Each node carries the measure of its dual cell ``[x - h/2, x + h/2]``
    clipped to the grid box and the subdomain, so the quadrature is exact for
    constants. ``p = inf`` is the maximum of ``|f|`` over nodes of the
    subdomain.

    Raises:
        EmptySubdomain: If no node lies inside ``subdomain``.
        OutOfDomain: If ``subdomain`` reaches outside the grid box.
    """
    grid = f.grid
    if p < 1:
        raise ValueError(f"Norm exponent must be >= 1, got {p!r}")
    if subdomain is not None:
        _check_subdomain(grid, subdomain)

    weights = []
    masks = []
    for k in range(grid.dim):
        w, inside = _axis_weights(grid, k, subdomain)
        weights.append(w)
        masks.append(inside)
    if not all(m.any() for m in masks):
        raise EmptySubdomain(
            subdomain.lo if subdomain else grid.lo, subdomain.hi if subdomain else grid.hi
        )

    values = magnitude(f)
    index = np.ix_(*[np.flatnonzero(m) for m in masks])
    values = values[index]
    if np.isinf(p):
        return float(values.max())

    weight = weights[0][masks[0]]
    for k in range(1, grid.dim):
        weight = np.multiply.outer(weight, weights[k][masks[k]])
    total = np.sum(weight * values ** p)
    return float(total ** (1.0 / p))


def _reduced_coordinates(grid: Grid, points: np.ndarray) -> np.ndarray:
    """Offsets from the grid origin, wrapped into one period or clipped to the box."""
    u = points - np.asarray(grid.origin)
    for k in range(grid.dim):
        n = grid.extents[k]
        h = grid.spacing[k]
        if grid.periodic:
            u[:, k] = np.mod(u[:, k], n * h)
        else:
            hi = (n - 1) * h
            slack = 1e-12 * max(1.0, abs(grid.lo[k]), abs(grid.hi[k]))
            bad = (u[:, k] < -slack) | (u[:, k] > hi + slack)
            if bad.any():
                first = int(np.flatnonzero(bad)[0])
                raise OutOfDomain(k, float(points[first, k]), grid.lo[k], grid.hi[k])
            u[:, k] = np.clip(u[:, k], 0.0, hi)
        t = u[:, k] / h
        nearest = np.rint(t)
        u[:, k] = np.where(np.abs(t - nearest) < _NODE_SNAP, nearest * h, u[:, k])
    return u


def interpolate(f: GridField, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of ``f`` at ``points`` (shape ``(m, d)``).

    Periodic grids reduce points modulo the period and append the wrapped
    node layer so that the last cell interpolates towards node ``0``.
    Returns shape ``(m,) + component_shape``.
    """
    grid = f.grid
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != grid.dim:
        raise GridError(f"Points of dimension {points.shape[1]} on a {grid.dim}-d grid")
    u = _reduced_coordinates(grid, points)
    data = f.data
    if grid.periodic:
        pad = [(0, 1)] * grid.dim + [(0, 0)] * len(f.component_shape)
        data = np.pad(data, pad, mode="wrap")
    axes = tuple(np.arange(data.shape[k]) * grid.spacing[k] for k in range(grid.dim))
    interpolator = RegularGridInterpolator(axes, data, method="linear", bounds_error=False, fill_value=None)
    return interpolator(u).reshape((points.shape[0],) + f.component_shape)


def sample(f: GridField, x: Sequence[float]):
    """Value of ``f`` at a single point by multilinear interpolation."""
    value = interpolate(f, np.asarray(x, dtype=float).reshape(1, -1))[0]
    return float(value) if not f.component_shape else value
