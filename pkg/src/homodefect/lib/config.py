"""Study configuration schemas and environment resolution.

Configuration is one JSON document validated by pydantic. Environment
variables come from the process or a ``.env`` file (python-dotenv):

    HOMODEFECT_CACHE       corrector cache directory (overrides the config file)
    HOMODEFECT_LOG_LEVEL   logging level for the CLI (default INFO)

Precedence for the cache directory: ``--cache-dir`` flag, then
``HOMODEFECT_CACHE``, then ``cache_dir`` in the config.
"""

import json
import os
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ConfigError(ValueError):
    """Raised on inconsistent configuration or problem setup."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PeriodicConfig(_Strict):
    kind: Literal["constant", "sin_product", "laminate", "checkerboard"] = "sin_product"
    base: float = 2.0
    amp: float = 1.0
    axis: Optional[int] = None
    low: float = 1.0
    high: float = 4.0
    sharpness: float = 40.0


class DefectConfig(_Strict):
    kind: Literal["none", "gaussian", "power", "bump"] = "none"
    amplitude: float = 1.0
    width: float = 1.0
    s: float = 2.0
    radius: float = 0.5
    center: Optional[List[float]] = None


class CoefficientConfig(_Strict):
    dim: int = Field(ge=1, le=3)
    periodic: PeriodicConfig = PeriodicConfig()
    defect: DefectConfig = DefectConfig()
    r: float = 2.0
    mu: float = 4.0
    alpha: Optional[float] = None
    period: Optional[List[float]] = None

    @field_validator("period")
    @classmethod
    def _unit_period(cls, value):
        if value is not None and any(p != 1.0 for p in value):
            raise ValueError("anisotropic or non-unit periods are not supported")
        return value


class SourceConfig(_Strict):
    kind: Literal["constant", "gaussian", "cosine_product", "bubble"] = "gaussian"
    amplitude: float = 1.0
    center: Optional[List[float]] = None
    width: float = 0.5


class BoxConfig(_Strict):
    lo: List[float]
    hi: List[float]

    @model_validator(mode="after")
    def _ordered(self):
        if len(self.lo) != len(self.hi) or any(b <= a for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"invalid box lo={self.lo} hi={self.hi}")
        return self


class SolverConfig(_Strict):
    tol: float = Field(default=1e-10, gt=0, lt=1)
    max_iter: int = Field(default=200_000, ge=1)
    method: Literal["auto", "pcg", "direct"] = "auto"


Mode = Literal["full", "periodic"]


class StudyConfig(_Strict):
    """Top-level study configuration."""
    coefficient: CoefficientConfig
    source: SourceConfig = SourceConfig()
    eps: Optional[List[float]] = None
    nodes_per_period: int = Field(default=16, ge=16)
    domain: Optional[BoxConfig] = None
    interior: Optional[BoxConfig] = None
    modes: List[Mode] = ["full", "periodic"]
    path: Literal["fd", "oracle"] = "fd"
    corrector_method: Literal["fd", "oracle"] = "fd"
    cell_resolution: Optional[int] = Field(default=None, ge=16)
    box_resolution: Optional[int] = Field(default=None, ge=2)
    truncation_radius: Optional[float] = Field(default=None, ge=4)
    corrector_direction: Optional[int] = None
    sublinearity_radii: Optional[List[float]] = None
    invariance_radii: Optional[List[float]] = None
    oversampling: float = Field(default=2.0, ge=1.0)
    p_list: List[float] = [2.0]
    split_remainder: bool = False
    shift: Optional[List[float]] = None
    slope_tolerance: float = Field(default=0.15, ge=0)
    threads: int = Field(default=1, ge=1)
    cache_dir: Optional[str] = None
    seed: int = 0
    solver: SolverConfig = SolverConfig()
    allow_large: bool = False
    memory_limit_gb: float = Field(default=4.0, gt=0)

    @field_validator("eps")
    @classmethod
    def _decreasing(cls, value):
        if value is None:
            return value
        if any(not 0 < e < 1 for e in value):
            raise ValueError("every eps must lie in (0, 1)")
        if any(b >= a for a, b in zip(value, value[1:])):
            raise ValueError("eps list must be strictly decreasing")
        return value

    @field_validator("p_list")
    @classmethod
    def _exponents(cls, value):
        if any(p < 1 for p in value):
            raise ValueError("norm exponents must be >= 1")
        return value

    @model_validator(mode="after")
    def _dimensions(self):
        d = self.coefficient.dim
        for name in ("domain", "interior"):
            box = getattr(self, name)
            if box is not None and len(box.lo) != d:
                raise ValueError(f"{name} dimension does not match coefficient dim {d}")
        if self.shift is not None and len(self.shift) != d:
            raise ValueError("shift dimension does not match coefficient dim")
        if self.path == "oracle" and d != 1:
            raise ValueError("the oracle path exists in one dimension only")
        if self.corrector_method == "oracle" and d != 1:
            raise ValueError("oracle correctors exist in one dimension only")
        return self

    def eps_list(self) -> List[float]:
        """Configured eps values, or the default geometric range for the dimension."""
        if self.eps is not None:
            return list(self.eps)
        lowest = 8 if self.coefficient.dim == 1 else 6
        return [2.0 ** -k for k in range(3, lowest + 1)]

    def domain_box(self) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
        d = self.coefficient.dim
        if self.domain is None:
            return (-1.0,) * d, (1.0,) * d
        return tuple(self.domain.lo), tuple(self.domain.hi)

    def interior_box(self) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
        """Interior subdomain; defaults to the domain shrunk by a margin of 0.5."""
        if self.interior is not None:
            return tuple(self.interior.lo), tuple(self.interior.hi)
        lo, hi = self.domain_box()
        return tuple(a + 0.5 for a in lo), tuple(b - 0.5 for b in hi)


def load_environment() -> None:
    """Load a ``.env`` file from the working directory if present."""
    load_dotenv(override=False)


def load_config(path: Union[str, Path]) -> StudyConfig:
    """Read and validate a study configuration file.

    Raises:
        ConfigError: If the file is missing or not valid JSON.
        pydantic.ValidationError: If the document violates the schema.
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
    return StudyConfig.model_validate(document)


def resolve_cache_dir(config: StudyConfig, cli_value: Optional[str] = None) -> Optional[Path]:
    value = cli_value or os.environ.get("HOMODEFECT_CACHE") or config.cache_dir
    return Path(value) if value else None


def log_level() -> str:
    return os.environ.get("HOMODEFECT_LOG_LEVEL", "INFO").upper()
