"""Core data models for homodefect."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.homodefect.lib.grid_fields import Box, Grid, GridField


@dataclass(frozen=True)
class ValidationReport:
    """Sampled coefficient ranges from an ellipticity check."""
    min: float
    max: float
    periodic_min: float
    periodic_max: float
    passed: bool
    samples: int  # lattice points per part


@dataclass(frozen=True, eq=False)
class CorrectorSet:
    """Correctors ``w_j = w_per_j + w_defect_j`` for every direction j (0-based)."""
    periodic: Tuple[GridField, ...]  # zero-mean fields on the unit cell
    defect: Tuple[Optional[GridField], ...]  # Dirichlet box fields, None when the defect is absent
    periodic_gradients: Tuple[GridField, ...]
    defect_gradients: Tuple[Optional[GridField], ...]
    truncation_radius: float
    cell_resolution: int
    box_resolution: int
    method: str  # fd | oracle
    spec_hash: str

    @property
    def dim(self) -> int:
        return len(self.periodic)

    @property
    def has_defect(self) -> bool:
        return any(f is not None for f in self.defect)

    def periodic_only(self) -> "CorrectorSet":
        return CorrectorSet(
            periodic=self.periodic,
            defect=(None,) * self.dim,
            periodic_gradients=self.periodic_gradients,
            defect_gradients=(None,) * self.dim,
            truncation_radius=self.truncation_radius,
            cell_resolution=self.cell_resolution,
            box_resolution=self.box_resolution,
            method=self.method,
            spec_hash=self.spec_hash,
        )


@dataclass(frozen=True)
class CorrectorResidual:
    """Max-norm residual of ``-div(a(e_j + grad w_j))`` and the right-hand-side scale."""
    direction: int
    max_residual: float
    rhs_norm: float  # sum of the 2-norms of the cell and box right-hand sides


@dataclass(frozen=True, eq=False)
class HomogenizedTensor:
    """Constant homogenized matrix with ellipticity and symmetry certificates."""
    matrix: np.ndarray
    cell_resolution: int
    spec_hash: str
    asymmetry: float  # max |A - A^T| before symmetrisation
    eigenvalues: Tuple[float, ...]
    elliptic: bool  # spectrum inside [1/mu, mu]

    def to_dict(self) -> dict:
        return {
            "a_star": self.matrix.tolist(),
            "cell_resolution": self.cell_resolution,
            "spec_hash": self.spec_hash,
            "asymmetry": self.asymmetry,
            "eigenvalues": list(self.eigenvalues),
            "elliptic": self.elliptic,
        }


@dataclass(frozen=True, eq=False)
class FluxResidual:
    """Flux residual ``M_k``; component i is a scalar field on its own grid.

    Staggered residuals live on the faces normal to i, nodal ones on the nodes.
    """
    direction: int
    periodic: Tuple[GridField, ...]
    defect: Optional[Tuple[GridField, ...]]
    staggered: bool
    divergence_max: float  # max |div M_k| over cell and box interior


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Antisymmetric potential ``B_k`` for one direction k.

    Only the upper triangle ``i < j`` is stored; ``component(j, i)`` returns the
    negated field. Component ``(i, j)`` lives at the edge centres ``x + h/2 (e_i + e_j)``.
    """
    direction: int
    dim: int
    periodic_upper: Dict[Tuple[int, int], GridField]
    defect_upper: Optional[Dict[Tuple[int, int], GridField]]
    gauge: str = "zero-mean periodic"

    def component(self, i: int, j: int, part: str = "periodic") -> Optional[GridField]:
        store = self.periodic_upper if part == "periodic" else self.defect_upper
        if store is None or i == j:
            return None
        if i < j:
            return store[(i, j)]
        return -store[(j, i)]


@dataclass(frozen=True)
class IdentityCheck:
    """Relative interior residual of ``-div(a grad R) - div H``."""
    relative_residual: float
    lhs_norm: float
    rhs_norm: float
    degenerate: bool  # right-hand side vanished; residual reported as 0


@dataclass
class NormsRecord:
    """Remainder norms of one run, keyed by channel name."""
    values: Dict[str, float] = field(default_factory=dict)

    def __getitem__(self, channel: str) -> float:
        return self.values[channel]

    def to_dict(self) -> Dict[str, float]:
        return dict(sorted(self.values.items()))


@dataclass(eq=False)
class TwoScaleRun:
    """Fields and diagnostics of one oscillatory/homogenized pair at scale eps."""
    eps: float
    mode: str  # full | periodic
    source: str
    domain: Box
    interior: Box
    grid: Grid
    u_eps: GridField
    u_star: GridField
    remainder: GridField
    flux_term: Optional[GridField] = None  # H
    norms: Optional[NormsRecord] = None
    identity: Optional[IdentityCheck] = None
    timings: Dict[str, float] = field(default_factory=dict)
    shift: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares fit of ``log value`` against ``log eps``."""
    slope: float
    stderr: float
    intercept: float  # log of the fitted constant
    points: int
    log_corrected: bool = False


@dataclass(frozen=True)
class QuadratureProfile:
    """Gauss-Legendre panel settings for the one-dimensional closed forms."""
    panels_per_period: int = 64
    order: int = 8
    tolerance: float = 1e-12

    def __post_init__(self):
        if self.panels_per_period < 32:
            raise ValueError("at least 32 panels per period are required")


@dataclass
class ChannelSlope:
    channel: str
    mode: str
    slope: Optional[float]
    stderr: Optional[float]
    target: float
    verdict: str  # PASS | FAIL | DEGENERATE | INSUFFICIENT
    log_corrected: bool = False


@dataclass
class RateStudyReport:
    """Outcome of an eps sweep."""
    dim: int
    nu_target: float
    eps: List[float]
    norms: Dict[str, Dict[str, Dict[str, float]]]  # mode -> eps key -> channel -> value
    slopes: List[ChannelSlope]
    verdict: str
    identity: Dict[str, dict] = field(default_factory=dict)  # eps key -> IdentityCheck fields
    labels: List[str] = field(default_factory=list)
    failures: Dict[str, str] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    environment: Dict[str, str] = field(default_factory=dict)


# Norm channels shared by the finite-difference and closed-form paths.
PRIMARY_CHANNELS = ("R_L2", "gradR_L2_interior", "gradR_Linf_interior")
REPORTED_CHANNELS = PRIMARY_CHANNELS + ("diff_L2", "diff_Linf")


def lp_channel(name: str, p: float, interior: bool = False) -> str:
    """Channel name for an L^p norm, e.g. ``R_L4`` or ``gradR_L4_interior``."""
    label = "inf" if p == float("inf") else f"{p:g}"
    return f"{name}_L{label}" + ("_interior" if interior else "")


@dataclass
class ComparisonReport:
    """Full versus periodic-only corrector remainders over an eps sweep."""
    eps: List[float]
    ratios: Dict[str, float]  # eps key -> rho = full / periodic-only interior W^{1,inf} remainder
    verdict: str  # PASS | FAIL | NOT_APPLICABLE
    periodic_slope: Optional[float]  # decay slope of the periodic-only channel
    full_slope: Optional[float]
    stalled: Optional[bool]  # periodic-only slope at most STALL_SLOPE
    study: RateStudyReport
