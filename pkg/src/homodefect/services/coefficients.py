"""Multiscale diffusion coefficients ``a(y) = a_per(y) + a_defect(y)``.

The coefficient library is a closed set of smooth analytic prototypes picked
by a ``kind`` tag:

Periodic parts (unit period in every axis, arguments period-reduced):
    - ``constant``: ``base``
    - ``sin_product``: ``base + amp * prod_k sin(2 pi y_k)``
    - ``laminate``: ``base + amp * sin(2 pi y_axis)``
    - ``checkerboard``: smoothed two-phase medium between ``low`` and ``high``,
      ``low + (high - low) * (1 + tanh(sharpness * s(y))) / 2`` with
      ``s = prod_k sin(2 pi y_k)``, or ``s = sin(2 pi y_axis)`` when ``axis`` is set
      (a smoothed laminate)

Defects, centred at ``center``:
    - ``none``
    - ``gaussian``: ``amplitude * exp(-|y - c|^2 / width^2)``
    - ``power``: ``amplitude * (1 + |y - c|)^(-s)``
    - ``bump``: ``amplitude * exp(1 - 1 / (1 - t^2))`` for ``t = |y - c| / radius < 1``
"""

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from src.homodefect.lib.config import CoefficientConfig, ConfigError
from src.homodefect.models import ValidationReport

logger = logging.getLogger(__name__)

PERIODIC_KINDS = ("constant", "sin_product", "laminate", "checkerboard")
DEFECT_KINDS = ("none", "gaussian", "power", "bump")

# Points per lattice chunk when scanning large sampling boxes.
_CHUNK_POINTS = 1 << 20


class CriticalExponent(ConfigError):
    """Raised for the critical integrability exponent ``r = d``."""

    def __init__(self, d: int, r: float):
        self.d = d
        self.r = r
        super().__init__(
            f"r = d = {d} is the critical case: corrector boundedness is not "
            f"guaranteed and no convergence rate is available; choose r != d"
        )


class ValidationFailed(ValueError):
    """Raised when a sampled coefficient leaves ``[1/mu, mu]``."""

    def __init__(self, point: Sequence[float], value: float, part: str, mu: float):
        self.point = tuple(float(v) for v in point)
        self.value = float(value)
        self.part = part
        super().__init__(
            f"{part} coefficient {self.value:.6g} at y={self.point} outside "
            f"[{1.0 / mu:.6g}, {mu:.6g}]"
        )


@dataclass(frozen=True)
class PeriodicProfile:
    kind: str = "constant"
    base: float = 2.0
    amp: float = 1.0
    axis: Optional[int] = None  # laminate / smoothed-laminate direction
    low: float = 1.0
    high: float = 4.0
    sharpness: float = 40.0

    def __post_init__(self):
        if self.kind not in PERIODIC_KINDS:
            raise ConfigError(f"Unknown periodic kind {self.kind!r}; expected one of {PERIODIC_KINDS}")
        if self.kind == "checkerboard" and not (self.low > 0 and self.high > 0):
            raise ConfigError("checkerboard phases must be positive")


@dataclass(frozen=True)
class DefectProfile:
    kind: str = "none"
    amplitude: float = 1.0
    width: float = 1.0  # gaussian
    s: float = 2.0  # power-law decay exponent
    radius: float = 0.5  # bump support radius
    center: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in DEFECT_KINDS:
            raise ConfigError(f"Unknown defect kind {self.kind!r}; expected one of {DEFECT_KINDS}")
        if self.kind == "gaussian" and not self.width > 0:
            raise ConfigError("gaussian defect width must be positive")
        if self.kind == "power" and not self.s > 0:
            raise ConfigError("power defect exponent s must be positive")
        if self.kind == "bump" and not self.radius > 0:
            raise ConfigError("bump defect radius must be positive")

    @property
    def present(self) -> bool:
        return self.kind != "none" and self.amplitude != 0.0


@dataclass(frozen=True)
class CoefficientSpec:
    """Immutable description of ``a = a_per + a_defect``.

    Attributes:
        dim: Space dimension d in {1, 2, 3}.
        periodic: Periodic prototype.
        defect: Localised defect prototype.
        r: Integrability exponent of the defect, in (1, inf), r != d.
        mu: Claimed ellipticity constant.
        alpha: Hoelder exponent, carried as metadata only.
        period: Cell period per axis; only the unit cell is supported.
    """
    dim: int
    periodic: PeriodicProfile
    defect: DefectProfile = field(default_factory=DefectProfile)
    r: float = 2.0
    mu: float = 4.0
    alpha: Optional[float] = None
    period: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ConfigError(f"dim must be 1, 2 or 3, got {self.dim!r}")
        if not (math.isfinite(self.r) and self.r > 1):
            raise ConfigError(f"r must lie in (1, inf), got {self.r!r}")
        if self.r == self.dim:
            raise CriticalExponent(self.dim, self.r)
        if not self.mu >= 1:
            raise ConfigError(f"mu must be >= 1, got {self.mu!r}")
        if self.period and any(p != 1.0 for p in self.period):
            raise ConfigError(f"Only the unit period is supported, got {self.period}")
        if self.periodic.axis is not None and not 0 <= self.periodic.axis < self.dim:
            raise ConfigError(f"Periodic axis {self.periodic.axis} outside dimension {self.dim}")
        if self.defect.center and len(self.defect.center) != self.dim:
            raise ConfigError("Defect center dimension does not match dim")
        if self.defect.kind == "power" and self.defect.s * self.r <= self.dim:
            raise ConfigError(
                f"power defect needs s*r > d for integrability (s={self.defect.s}, r={self.r}, d={self.dim})"
            )

    @property
    def center(self) -> np.ndarray:
        if self.defect.center:
            return np.asarray(self.defect.center, dtype=float)
        return np.zeros(self.dim)

    @property
    def has_defect(self) -> bool:
        return self.defect.present

    def without_defect(self) -> "CoefficientSpec":
        return replace(self, defect=DefectProfile())

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["defect"]["center"] = list(self.center)
        payload["period"] = [1.0] * self.dim
        return payload

    def spec_hash(self) -> str:
        """SHA-256 of the canonical JSON form."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def __call__(self, y: np.ndarray) -> np.ndarray:
        return evaluate(self, y)


def _reduced_sin(y: np.ndarray) -> np.ndarray:
    return np.sin(2.0 * np.pi * (y - np.floor(y)))


def periodic_part(spec: CoefficientSpec, y: np.ndarray) -> np.ndarray:
    """Vectorised ``a_per`` at points ``y`` of shape ``(..., d)``."""
    y = np.asarray(y, dtype=float)
    profile = spec.periodic
    if profile.kind == "constant":
        return np.full(y.shape[:-1], float(profile.base))
    if profile.kind == "laminate":
        axis = profile.axis or 0
        return profile.base + profile.amp * _reduced_sin(y[..., axis])
    if profile.axis is not None:
        s = _reduced_sin(y[..., profile.axis])
    else:
        s = np.prod(_reduced_sin(y), axis=-1)
    if profile.kind == "sin_product":
        return profile.base + profile.amp * s
    switch = 0.5 * (1.0 + np.tanh(profile.sharpness * s))
    return profile.low + (profile.high - profile.low) * switch


def defect_part(spec: CoefficientSpec, y: np.ndarray) -> np.ndarray:
    """Vectorised ``a_defect`` at points ``y`` of shape ``(..., d)``."""
    y = np.asarray(y, dtype=float)
    profile = spec.defect
    if profile.kind == "none":
        return np.zeros(y.shape[:-1])
    dist = np.sqrt(np.sum((y - spec.center) ** 2, axis=-1))
    if profile.kind == "gaussian":
        return profile.amplitude * np.exp(-(dist / profile.width) ** 2)
    if profile.kind == "power":
        return profile.amplitude * (1.0 + dist) ** (-profile.s)
    t = dist / profile.radius
    inside = t < 1.0
    safe = np.where(inside, t, 0.0)
    return np.where(inside, profile.amplitude * np.exp(1.0 - 1.0 / (1.0 - safe * safe)), 0.0)


def evaluate(spec: CoefficientSpec, y: np.ndarray) -> np.ndarray:
    """Vectorised ``a(y) = a_per(y) + a_defect(y)``."""
    return periodic_part(spec, y) + defect_part(spec, y)


def eval_coefficient(spec: CoefficientSpec, y: Sequence[float]) -> float:
    """Coefficient value at a single point.

    Examples:
        >>> spec = CoefficientSpec(dim=1, periodic=PeriodicProfile("sin_product", 2.0, 1.0))
        >>> eval_coefficient(spec, [0.25])
        3.0
    """
    point = np.asarray(y, dtype=float).reshape(1, spec.dim)
    return float(evaluate(spec, point)[0])


def _lattice_chunks(dim: int, axis_points: np.ndarray):
    """Yield point blocks of the tensor lattice, slab by slab along axis 0."""
    n = axis_points.size
    slab = max(1, _CHUNK_POINTS // max(1, n ** (dim - 1)))
    for start in range(0, n, slab):
        first = axis_points[start: start + slab]
        axes = [first] + [axis_points] * (dim - 1)
        mesh = np.meshgrid(*axes, indexing="ij")
        yield np.stack(mesh, axis=-1).reshape(-1, dim)


def validate_ellipticity(spec: CoefficientSpec, sample_resolution: int,
                         box_radius: float) -> ValidationReport:
    """Sample ``a_per`` and ``a`` on the lattice of ``[-R, R]^d`` and check ``[1/mu, mu]``.

    Args:
        spec: Coefficient specification.
        sample_resolution: Lattice points per unit length (>= 2).
        box_radius: Half-width R of the sampling box.

    Returns:
        ValidationReport with the sampled ranges.

    Raises:
        ConfigError: If ``sample_resolution < 2``.
        ValidationFailed: At the worst violating point, periodic part checked first.
    """
    if sample_resolution < 2:
        raise ConfigError(f"sample_resolution must be >= 2, got {sample_resolution}")
    steps = int(round(2 * box_radius * sample_resolution))
    axis_points = -box_radius + np.arange(steps + 1) / sample_resolution
    lower, upper = 1.0 / spec.mu, spec.mu

    extremes = {}
    for part, fn in (("periodic", periodic_part), ("full", evaluate)):
        lo_val, hi_val = np.inf, -np.inf
        lo_pt = hi_pt = None
        for points in _lattice_chunks(spec.dim, axis_points):
            values = fn(spec, points)
            i, j = int(np.argmin(values)), int(np.argmax(values))
            if values[i] < lo_val:
                lo_val, lo_pt = float(values[i]), points[i].copy()
            if values[j] > hi_val:
                hi_val, hi_pt = float(values[j]), points[j].copy()
        if lo_val < lower:
            raise ValidationFailed(lo_pt, lo_val, part, spec.mu)
        if hi_val > upper:
            raise ValidationFailed(hi_pt, hi_val, part, spec.mu)
        extremes[part] = (lo_val, hi_val)

    logger.info("Ellipticity check passed: a in [%.4g, %.4g], mu=%g",
                extremes["full"][0], extremes["full"][1], spec.mu)
    return ValidationReport(
        min=extremes["full"][0],
        max=extremes["full"][1],
        periodic_min=extremes["periodic"][0],
        periodic_max=extremes["periodic"][1],
        passed=True,
        samples=int(axis_points.size ** spec.dim),
    )


def lr_norm_estimate(spec: CoefficientSpec, box_radius: float, resolution: int) -> float:
    """Composite midpoint estimate of ``||a_defect||_{L^r([-R, R]^d)}``.

    Cells have width ``1/resolution`` and are anchored at the origin; only
    whole cells inside the box count, so the estimate is nondecreasing in R.
    """
    if resolution < 1:
        raise ConfigError(f"resolution must be >= 1, got {resolution}")
    if not spec.has_defect:
        return 0.0
    half = int(math.floor(box_radius * resolution + 1e-9))
    if half == 0:
        return 0.0
    midpoints = (np.arange(-half, half) + 0.5) / resolution
    cell = resolution ** (-spec.dim)
    total = 0.0
    for points in _lattice_chunks(spec.dim, midpoints):
        total += float(np.sum(np.abs(defect_part(spec, points)) ** spec.r))
    return (total * cell) ** (1.0 / spec.r)


def spec_from_config(config: CoefficientConfig) -> CoefficientSpec:
    """Build a validated specification from its JSON configuration fragment."""
    periodic = PeriodicProfile(**config.periodic.model_dump())
    defect_fields = config.defect.model_dump()
    defect_fields["center"] = tuple(defect_fields["center"] or ())
    return CoefficientSpec(
        dim=config.dim,
        periodic=periodic,
        defect=DefectProfile(**defect_fields),
        r=config.r,
        mu=config.mu,
        alpha=config.alpha,
        period=tuple(config.period or ()),
    )
