"""Smooth analytic right-hand sides ``f`` on a box domain."""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import erf

from src.homodefect.lib.config import ConfigError, SourceConfig
from src.homodefect.lib.grid_fields import Box

SOURCE_KINDS = ("constant", "gaussian", "cosine_product", "bubble")
DEFAULT_GAUSSIAN_CENTER = 0.3


@dataclass(frozen=True)
class SourceSpec:
    """Source ``f`` on ``domain``.

    Kinds:
        constant:       ``amplitude``
        gaussian:       ``amplitude * exp(-|x - c|^2 / width^2)``; c defaults to 0.3 per axis
                        so that ``grad u*`` does not vanish at the origin
        cosine_product: ``amplitude * prod_k cos(pi (x_k - m_k) / L_k)`` (m, L: box midpoint, side)
        bubble:         ``-laplace`` of ``amplitude * prod_k (x_k - lo_k)(hi_k - x_k)``
    """
    kind: str
    domain: Box
    amplitude: float = 1.0
    center: Optional[Tuple[float, ...]] = None
    width: float = 0.5

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ConfigError(f"Unknown source kind {self.kind!r}")
        if self.kind == "gaussian" and not self.width > 0:
            raise ConfigError("gaussian source width must be positive")
        if self.center is not None and len(self.center) != self.domain.dim:
            raise ConfigError("source center dimension does not match the domain")

    @classmethod
    def from_config(cls, config: SourceConfig, domain: Box) -> "SourceSpec":
        center = tuple(config.center) if config.center is not None else None
        return cls(config.kind, domain, config.amplitude, center, config.width)

    def scaled(self, factor: float) -> "SourceSpec":
        return SourceSpec(self.kind, self.domain, self.amplitude * factor, self.center, self.width)

    @property
    def gaussian_center(self) -> np.ndarray:
        if self.center is not None:
            return np.asarray(self.center, dtype=float)
        return np.full(self.domain.dim, DEFAULT_GAUSSIAN_CENTER)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Vectorised ``f`` at points of shape ``(..., d)``."""
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.domain.lo)
        hi = np.asarray(self.domain.hi)
        if self.kind == "constant":
            return np.full(x.shape[:-1], float(self.amplitude))
        if self.kind == "gaussian":
            r2 = np.sum((x - self.gaussian_center) ** 2, axis=-1)
            return self.amplitude * np.exp(-r2 / self.width ** 2)
        if self.kind == "cosine_product":
            mid, length = 0.5 * (lo + hi), hi - lo
            return self.amplitude * np.prod(np.cos(np.pi * (x - mid) / length), axis=-1)
        q = (x - lo) * (hi - x)
        total = np.zeros(x.shape[:-1])
        for k in range(x.shape[-1]):
            others = np.prod(np.delete(q, k, axis=-1), axis=-1) if x.shape[-1] > 1 else 1.0
            total = total + 2.0 * others
        return self.amplitude * total

    def antiderivative(self, x: np.ndarray) -> np.ndarray:
        """``F(x) = integral of f from the left end of a 1D domain``."""
        if self.domain.dim != 1:
            raise ConfigError("closed-form antiderivatives exist in one dimension only")
        x = np.asarray(x, dtype=float)
        lo, hi = self.domain.lo[0], self.domain.hi[0]
        if self.kind == "constant":
            return self.amplitude * (x - lo)
        if self.kind == "bubble":
            return 2.0 * self.amplitude * (x - lo)
        if self.kind == "gaussian":
            c, w = float(self.gaussian_center[0]), self.width
            return self.amplitude * w * np.sqrt(np.pi) / 2.0 * (erf((x - c) / w) - erf((lo - c) / w))
        mid, length = 0.5 * (lo + hi), hi - lo
        return self.amplitude * length / np.pi * (np.sin(np.pi * (x - mid) / length) + 1.0)
