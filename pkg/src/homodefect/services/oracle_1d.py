"""Closed-form one-dimensional homogenization by panel quadrature.

In one dimension every object of the two-scale expansion is an explicit
integral:

    a*        = (integral_0^1 dy / a_per)^-1
    w_per'    = a*/a_per - 1                (zero cell mean)
    w_def'    = a* (1/a - 1/a_per)          (w_def(0) = 0)
    u_eps'    = (c - F(x)) / a(x/eps)       (F antiderivative of f, c from u(hi) = 0)
    u*'       = (c* - F(x)) / a*

Integrals use composite Gauss-Legendre panels whose width resolves the
oscillation scale of the integrand.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from src.homodefect.lib.config import ConfigError
from src.homodefect.lib.grid_fields import Box
from src.homodefect.models import NormsRecord, QuadratureProfile, lp_channel
from src.homodefect.services.coefficients import CoefficientSpec, evaluate, periodic_part
from src.homodefect.services.sources import SourceSpec

logger = logging.getLogger(__name__)

DEFAULT_PROFILE = QuadratureProfile()
_MAX_PANELS = 1 << 16
# Cumulative integrals halve their panels at most this many times.
MAX_HALVINGS = 6
CUMULATIVE_TOLERANCE = 1e-10

Integrand = Callable[[np.ndarray], np.ndarray]


def _rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def _gap_integrals(func: Integrand, s: np.ndarray, gaps: np.ndarray, counts: np.ndarray,
                   order: int) -> np.ndarray:
    gap_id = np.repeat(np.arange(gaps.size), counts)
    first = np.repeat(np.cumsum(counts) - counts, counts)
    step = np.repeat(np.divide(gaps, np.maximum(counts, 1)), counts)
    start = s[gap_id] + (np.arange(gap_id.size) - first) * step

    nodes, weights = _rule(order)
    x = start[:, None] + nodes[None, :] * step[:, None]
    panel = (func(x.ravel()).reshape(x.shape) @ weights) * step
    return np.bincount(gap_id, weights=panel, minlength=gaps.size)


def cumulative_integral(func: Integrand, points: np.ndarray, panel_width: float,
                        order: int = 8, tolerance: float = CUMULATIVE_TOLERANCE,
                        breakpoints: Sequence[float] = ()) -> np.ndarray:
    """Integral of ``func`` from ``min(points)`` to each point.

    Every gap between consecutive sorted points is split into panels no wider
    than ``panel_width``. Panels are then split in two until the per-gap integrals
    of two successive widths agree to ``tolerance`` relative to the integral
    of ``|func|``, or ``MAX_HALVINGS`` is reached (logged as a warning).

    Args:
        func: Vectorised integrand.
        points: Upper limits, in any order.
        panel_width: Initial panel width; should resolve the oscillation scale.
        order: Gauss-Legendre nodes per panel.
        tolerance: Relative agreement required between successive widths.
        breakpoints: Kinks of ``func``; inserted as panel edges.

    Returns:
        Array shaped like ``points.ravel()``.
    """
    points = np.asarray(points, dtype=float).ravel()
    if points.size == 0:
        return points.copy()
    extra = np.asarray(breakpoints, dtype=float).ravel()
    extra = extra[(extra > points.min()) & (extra < points.max())]
    n_points = points.size
    points = np.concatenate([points, extra])
    order_idx = np.argsort(points, kind="stable")
    s = points[order_idx]
    gaps = np.diff(s)

    counts = np.maximum(1, np.ceil(gaps / panel_width - 1e-9).astype(np.int64))
    counts[gaps == 0] = 0
    per_gap = _gap_integrals(func, s, gaps, counts, order)
    for _ in range(MAX_HALVINGS):
        counts = 2 * counts
        refined = _gap_integrals(func, s, gaps, counts, order)
        error = float(np.max(np.abs(refined - per_gap), initial=0.0))
        scale = float(np.sum(np.abs(refined)))
        per_gap = refined
        if error <= tolerance * scale or scale == 0.0:
            break
    else:
        logger.warning("Panel quadrature stopped at %d panels with relative change %.2e (tol %.1e)",
                       int(counts.sum()), error / scale, tolerance)

    cumulative = np.concatenate([[0.0], np.cumsum(per_gap)])
    out = np.empty_like(cumulative)
    out[order_idx] = cumulative
    return out[:n_points]


def integral_from(func: Integrand, start: float, points: np.ndarray, panel_width: float,
                  order: int = 8, breakpoints: Sequence[float] = ()) -> np.ndarray:
    """``integral_start^p func`` for every p (negative when ``p < start``)."""
    points = np.asarray(points, dtype=float)
    values = cumulative_integral(func, np.concatenate([[start], points.ravel()]), panel_width, order,
                                 breakpoints=breakpoints)
    return (values[1:] - values[0]).reshape(points.shape)


def definite_integral(func: Integrand, a: float, b: float, panel_width: float,
                      order: int = 8, breakpoints: Sequence[float] = ()) -> float:
    return float(integral_from(func, a, np.array([b]), panel_width, order, breakpoints)[0])


def _defect_kinks(spec: CoefficientSpec) -> Tuple[float, ...]:
    """Defect centre on the fast scale; the power profile has a kink there."""
    return (float(spec.center[0]),) if spec.has_defect else ()


def _on_line(spec: CoefficientSpec, fn) -> Integrand:
    if spec.dim != 1:
        raise ConfigError("the one-dimensional oracle needs dim = 1")
    return lambda t: fn(spec, np.asarray(t, dtype=float)[..., None])


def exact_astar_1d(spec: CoefficientSpec, profile: QuadratureProfile = DEFAULT_PROFILE) -> float:
    """Harmonic mean of ``a_per`` over the unit cell, panels doubled to convergence."""
    inverse = _on_line(spec, lambda s, y: 1.0 / periodic_part(s, y))
    panels = profile.panels_per_period
    previous = definite_integral(inverse, 0.0, 1.0, 1.0 / panels, profile.order)
    while panels < _MAX_PANELS:
        panels *= 2
        current = definite_integral(inverse, 0.0, 1.0, 1.0 / panels, profile.order)
        if abs(current - previous) <= profile.tolerance * abs(current):
            previous = current
            break
        previous = current
    return 1.0 / previous


@dataclass(frozen=True, eq=False)
class Corrector1D:
    """Closed-form corrector pieces of a one-dimensional coefficient.

    With ``truncation_radius`` set, the defect part is the solution on
    ``[-R, R]`` with zero end values (extended by 0), whose flux constant is
    ``c_R = a* integral(1/a_per) / integral(1/a)``; otherwise it is the
    whole-line corrector normalised by ``w_def(0) = 0``.
    """
    spec: CoefficientSpec
    a_star: float
    cell_mean: float
    truncation_radius: Optional[float]
    flux_constant: float
    profile: QuadratureProfile

    @classmethod
    def build(cls, spec: CoefficientSpec, truncation_radius: Optional[float] = None,
              profile: QuadratureProfile = DEFAULT_PROFILE) -> "Corrector1D":
        a_star = exact_astar_1d(spec, profile)
        width = 1.0 / profile.panels_per_period
        slope = _on_line(spec, lambda s, y: a_star / periodic_part(s, y) - 1.0)
        mean = definite_integral(lambda t: (1.0 - t) * slope(t), 0.0, 1.0, width, profile.order)
        flux = a_star
        if truncation_radius is not None and spec.has_defect:
            R = float(truncation_radius)
            inv_per = _on_line(spec, lambda s, y: 1.0 / periodic_part(s, y))
            inv_full = _on_line(spec, lambda s, y: 1.0 / evaluate(s, y))
            flux = a_star * definite_integral(inv_per, -R, R, width, profile.order) \
                / definite_integral(inv_full, -R, R, width, profile.order, _defect_kinks(spec))
        return cls(spec, a_star, mean, truncation_radius, flux, profile)

    @property
    def _width(self) -> float:
        return 1.0 / self.profile.panels_per_period

    def periodic_derivative(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.a_star / periodic_part(self.spec, y[..., None]) - 1.0

    def defect_derivative(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if not self.spec.has_defect:
            return np.zeros_like(y)
        a = evaluate(self.spec, y[..., None])
        a_per = periodic_part(self.spec, y[..., None])
        if self.truncation_radius is None:
            return self.a_star * (1.0 / a - 1.0 / a_per)
        inside = np.abs(y) <= self.truncation_radius
        return np.where(inside, self.flux_constant / a - self.a_star / a_per, 0.0)

    def periodic(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        reduced = y - np.floor(y)
        return integral_from(self.periodic_derivative, 0.0, reduced, self._width,
                             self.profile.order) - self.cell_mean

    def defect(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if not self.spec.has_defect:
            return np.zeros_like(y)
        if self.truncation_radius is None:
            return integral_from(self.defect_derivative, 0.0, y, self._width, self.profile.order,
                                 _defect_kinks(self.spec))
        R = self.truncation_radius
        clipped = np.clip(y, -R, R)
        values = integral_from(self.defect_derivative, -R, clipped, self._width, self.profile.order,
                               _defect_kinks(self.spec))
        return np.where(np.abs(y) <= R, values, 0.0)

    def value(self, y: np.ndarray, mode: str = "full") -> np.ndarray:
        w = self.periodic(y)
        return w + self.defect(y) if mode == "full" else w

    def derivative(self, y: np.ndarray, mode: str = "full") -> np.ndarray:
        w = self.periodic_derivative(y)
        return w + self.defect_derivative(y) if mode == "full" else w


def exact_corrector_1d(spec: CoefficientSpec, y, truncation_radius: Optional[float] = None,
                       profile: QuadratureProfile = DEFAULT_PROFILE) -> Tuple[np.ndarray, np.ndarray]:
    """``(w_per(y), w_def(y))`` from the closed forms."""
    corrector = Corrector1D.build(spec, truncation_radius, profile)
    return corrector.periodic(y), corrector.defect(y)


@dataclass(frozen=True, eq=False)
class OracleSolution:
    """Exact ``u_eps`` and ``u*`` on a one-dimensional domain."""
    spec: CoefficientSpec
    eps: float
    source: SourceSpec
    shift: float
    flux_constant: float  # c in a u_eps' = c - F
    a_star: float
    homogenized_constant: float  # c* in a* u*' = c* - F
    panel_width: float
    order: int

    @property
    def lo(self) -> float:
        return self.source.domain.lo[0]

    @property
    def hi(self) -> float:
        return self.source.domain.hi[0]

    def coefficient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return evaluate(self.spec, (x / self.eps + self.shift)[..., None])

    def derivative(self, x: np.ndarray) -> np.ndarray:
        return (self.flux_constant - self.source.antiderivative(x)) / self.coefficient(x)

    @property
    def kinks(self) -> Tuple[float, ...]:
        return tuple(self.eps * (c - self.shift) for c in _defect_kinks(self.spec))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return integral_from(self.derivative, self.lo, x, self.panel_width, self.order, self.kinks)

    def homogenized(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        G = integral_from(self.source.antiderivative, self.lo, x, self.panel_width, self.order)
        return (self.homogenized_constant * (x - self.lo) - G) / self.a_star

    def homogenized_derivative(self, x: np.ndarray) -> np.ndarray:
        return (self.homogenized_constant - self.source.antiderivative(x)) / self.a_star

    def homogenized_second(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return -self.source.evaluate(x[..., None]) / self.a_star


def exact_solution_1d(spec: CoefficientSpec, eps: float, source: SourceSpec, shift: float = 0.0,
                      profile: QuadratureProfile = DEFAULT_PROFILE,
                      a_star: Optional[float] = None) -> OracleSolution:
    """Exact solution of ``-(a(x/eps) u')' = f`` with ``u = 0`` at both ends of the domain."""
    if spec.dim != 1 or source.domain.dim != 1:
        raise ConfigError("exact_solution_1d needs a one-dimensional spec and domain")
    if not 0 < eps < 1:
        raise ConfigError(f"eps must lie in (0, 1), got {eps!r}")
    lo, hi = source.domain.lo[0], source.domain.hi[0]
    width = eps / profile.panels_per_period
    F = source.antiderivative

    def a(x):
        return evaluate(spec, (np.asarray(x) / eps + shift)[..., None])

    kinks = tuple(eps * (c - shift) for c in _defect_kinks(spec))
    c = definite_integral(lambda x: F(x) / a(x), lo, hi, width, profile.order, kinks) \
        / definite_integral(lambda x: 1.0 / a(x), lo, hi, width, profile.order, kinks)
    G_hi = definite_integral(F, lo, hi, width, profile.order)
    a_star = exact_astar_1d(spec, profile) if a_star is None else a_star
    return OracleSolution(spec, eps, source, shift, c, a_star, G_hi / (hi - lo), width, profile.order)


def _lp(values: np.ndarray, weights: np.ndarray, p: float) -> float:
    if math.isinf(p):
        return float(np.max(np.abs(values)))
    return float(np.sum(weights * np.abs(values) ** p) ** (1.0 / p))


def _quadrature_points(lo: float, hi: float, width: float, order: int):
    panels = max(1, int(math.ceil((hi - lo) / width - 1e-9)))
    step = (hi - lo) / panels
    nodes, weights = _rule(order)
    starts = lo + step * np.arange(panels)
    x = (starts[:, None] + nodes[None, :] * step).ravel()
    w = np.tile(weights * step, panels)
    edges = lo + step * np.arange(panels + 1)
    return x, w, edges


def oracle_remainder_norms(spec: CoefficientSpec, eps: float, source: SourceSpec, mode: str = "full",
                           interior: Optional[Box] = None, p_list: Sequence[float] = (2.0,),
                           truncation_radius: Optional[float] = None, shift: float = 0.0,
                           profile: QuadratureProfile = DEFAULT_PROFILE) -> NormsRecord:
    """Remainder norms assembled from the exact pieces.

    Channels match the finite-difference path: ``R_L2``, ``diff_L2``,
    ``diff_Linf``, ``gradR_L2_interior``, ``gradR_Linf_interior``, ``u_star_L2``
    and, per p, ``R_L{p}`` and ``gradR_L{p}_interior``. Sup norms are taken
    over the quadrature nodes and panel edges.
    """
    if mode not in ("full", "periodic"):
        raise ConfigError(f"Unknown corrector mode {mode!r}")
    domain = source.domain
    lo, hi = domain.lo[0], domain.hi[0]
    if interior is None:
        interior = Box((lo + 0.5,), (hi - 0.5,))
    solution = exact_solution_1d(spec, eps, source, shift, profile)
    corrector = Corrector1D.build(spec, truncation_radius, profile)
    width = eps / max(16, profile.panels_per_period // 4)

    def pieces(x):
        y = x / eps + shift
        du_star = solution.homogenized_derivative(x)
        u_star = solution.homogenized(x)
        diff = solution(x) - u_star
        w = corrector.value(y, mode)
        R = diff - eps * w * du_star
        dR = (solution.derivative(x) - du_star - corrector.derivative(y, mode) * du_star
              - eps * w * solution.homogenized_second(x))
        return u_star, diff, R, dR

    x, w, edges = _quadrature_points(lo, hi, width, profile.order)
    u_star, diff, R, _ = pieces(x)
    _, diff_e, _, _ = pieces(edges)
    xi, wi, edges_i = _quadrature_points(interior.lo[0], interior.hi[0], width, profile.order)
    _, _, _, dR = pieces(xi)
    _, _, _, dR_e = pieces(edges_i)

    values = {
        "R_L2": _lp(R, w, 2.0),
        "diff_L2": _lp(diff, w, 2.0),
        "diff_Linf": max(_lp(diff, w, math.inf), _lp(diff_e, w, math.inf)),
        "gradR_L2_interior": _lp(dR, wi, 2.0),
        "gradR_Linf_interior": max(_lp(dR, wi, math.inf), _lp(dR_e, wi, math.inf)),
        "u_star_L2": _lp(u_star, w, 2.0),
    }
    for p in p_list:
        values[lp_channel("R", p)] = _lp(R, w, p)
        values[lp_channel("gradR", p, interior=True)] = _lp(dR, wi, p)
    return NormsRecord(values)
