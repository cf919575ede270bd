"""Epsilon sweeps, decay-slope fits and verdicts.

Verdict logic, per judged channel (``R_L2``, ``gradR_L2_interior`` and the
log-corrected ``gradR_Linf_interior`` of the ``full`` mode):

    DEGENERATE  every value is below 1e-9 * ||u*||_L2 (nothing to fit)
    PASS        fitted slope >= nu - slope_tolerance
    FAIL        otherwise

The study verdict is FAIL if any judged channel fails, DEGENERATE if all are
degenerate, PASS otherwise. The check is one-sided: decay faster than ``nu``
never fails. Other channels and modes are fitted and reported as INFO.
"""

import logging
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy

from src.homodefect.lib.cache import CorrectorCache
from src.homodefect.lib.config import ConfigError, StudyConfig
from src.homodefect.lib.fitting import loglog_slope
from src.homodefect.lib.grid_fields import Box
from src.homodefect.models import (
    PRIMARY_CHANNELS,
    REPORTED_CHANNELS,
    ChannelSlope,
    ComparisonReport,
    CorrectorSet,
    HomogenizedTensor,
    NormsRecord,
    PotentialField,
    RateStudyReport,
    SlopeFit,
    lp_channel,
)
from src.homodefect.services.coefficients import (
    CoefficientSpec,
    CriticalExponent,
    spec_from_config,
    validate_ellipticity,
)
from src.homodefect.services.correctors import build_corrector_set
from src.homodefect.services.homogenization import flux_residual, homogenized_tensor, solve_potential
from src.homodefect.services.oracle_1d import exact_astar_1d, oracle_remainder_norms
from src.homodefect.services.sources import SourceSpec
from src.homodefect.services.twoscale import run_two_scale

logger = logging.getLogger(__name__)

MIN_POINTS = 4
# Values below this fraction of ||u*||_L2 are treated as solver noise.
DEGENERATE_FLOOR = 1e-9
# compare_correctors: rho may grow by this factor between consecutive eps.
RATIO_NOISE = 1.2
RATIO_TARGET = 0.5
STALL_SLOPE = 0.1
# Rough storage per unknown: a (2d+1)-point CSR row plus a dozen work vectors.
_BYTES_PER_NONZERO = 12
_BYTES_PER_UNKNOWN = 160
_ELLIPTICITY_SAMPLE_RES = 8
_ELLIPTICITY_MAX_RADIUS = 32.0

LABEL_1D = "1D regime"
LABEL_2D = "outside theorem hypotheses (d=2 excluded)"
LABEL_3D = "3D (theorem regime)"
LABEL_PERIODIC = "periodic baseline (no defect)"
LABEL_DEFAULT_EPS = "default eps range"

Number = Union[int, float, Fraction]


class InsufficientPoints(ValueError):
    """Raised when fewer than four points are available for a slope fit."""


class NonPositiveValue(ValueError):
    """Raised when a slope fit meets a zero, negative or non-finite value."""


def _exact(value: Number) -> Fraction:
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    return Fraction(repr(float(value)))


def nu_r(d: int, r: Number) -> Fraction:
    """Rate exponent ``min(1, d/r)`` as an exact fraction.

    Examples:
        >>> nu_r(3, 6)
        Fraction(1, 2)
        >>> nu_r(1, 4)
        Fraction(1, 4)

    Raises:
        CriticalExponent: If ``r == d``.
        ConfigError: If ``r`` is not a finite number above 1.
    """
    if not (math.isfinite(float(r)) and float(r) > 1):
        raise ConfigError(f"r must lie in (1, inf), got {r!r}")
    exact = _exact(r)
    if exact == d:
        raise CriticalExponent(d, float(r))
    return min(Fraction(1), Fraction(d) / exact)


def fit_slope(eps: Sequence[float], values: Sequence[float], log_correction: bool = False) -> SlopeFit:
    """Least squares of ``log value`` (optionally minus ``log ln(2 + 1/eps)``) on ``log eps``.

    Raises:
        InsufficientPoints: Fewer than 4 points.
        NonPositiveValue: A value is zero, negative or not finite.
    """
    x = np.asarray(eps, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.size != y.size:
        raise ConfigError(f"{x.size} eps values but {y.size} norm values")
    if x.size < MIN_POINTS:
        raise InsufficientPoints(f"slope fit needs at least {MIN_POINTS} points, got {x.size}")
    if not np.all(np.isfinite(y)) or np.any(y <= 0):
        raise NonPositiveValue(f"slope fit needs positive finite values, got {y.tolist()}")
    if log_correction:
        y = y / np.log(2.0 + 1.0 / x)
    slope, intercept, stderr = loglog_slope(x, y)
    return SlopeFit(slope, stderr, intercept, int(x.size), log_correction)


def truncation_radius(config: StudyConfig) -> float:
    """Configured radius, or ``max|x| / eps_min + 2`` so that every ``x/eps`` is covered.

    ``max|x|`` over the domain is deliberately the tighter choice than
    ``diam(domain)``: defect correctors are only sampled at ``x/eps``, so it
    covers every sample while keeping the truncation box half as wide on a
    centred domain.
    """
    if config.truncation_radius is not None:
        return float(config.truncation_radius)
    lo, hi = config.domain_box()
    reach = max(max(abs(a), abs(b)) for a, b in zip(lo, hi))
    return reach / min(config.eps_list()) + 2.0


def estimate_memory_gb(config: StudyConfig) -> float:
    """Peak storage of the largest fine grid plus the truncation box, in GiB."""
    d = config.coefficient.dim
    lo, hi = config.domain_box()
    h = min(config.eps_list()) / config.nodes_per_period
    fine = float(np.prod([(b - a) / h + 1 for a, b in zip(lo, hi)]))
    box_res = config.box_resolution or config.nodes_per_period
    box = (2.0 * truncation_radius(config) * box_res + 1) ** d
    per_unknown = _BYTES_PER_NONZERO * (2 * d + 1) + _BYTES_PER_UNKNOWN
    return (fine + box) * per_unknown / 2 ** 30


def check_resources(config: StudyConfig) -> float:
    """Refuse 3D without ``allow_large`` and any run above ``memory_limit_gb``."""
    if config.path == "oracle":
        return 0.0
    estimate = estimate_memory_gb(config)
    if config.coefficient.dim == 3 and not config.allow_large:
        raise ConfigError(f"3D runs need --allow-large (estimated {estimate:.2f} GiB)")
    if estimate > config.memory_limit_gb:
        raise ConfigError(
            f"estimated memory {estimate:.2f} GiB exceeds the limit of {config.memory_limit_gb:g} GiB"
        )
    logger.info("Estimated peak memory %.2f GiB", estimate)
    return estimate


def study_labels(spec: CoefficientSpec, config: StudyConfig) -> List[str]:
    labels = [{1: LABEL_1D, 2: LABEL_2D, 3: LABEL_3D}[spec.dim]]
    if not spec.has_defect:
        labels.append(LABEL_PERIODIC)
    if config.eps is None:
        labels.append(LABEL_DEFAULT_EPS)
    return labels


def target_rate(spec: CoefficientSpec) -> Fraction:
    """``nu_r`` with a defect, the periodic rate 1 without one."""
    return nu_r(spec.dim, spec.r) if spec.has_defect else Fraction(1)


def eps_key(eps: float) -> str:
    return repr(float(eps))


def _environment() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }


def study_source(config: StudyConfig) -> SourceSpec:
    lo, hi = config.domain_box()
    return SourceSpec.from_config(config.source, Box(lo, hi))


class StudyContext:
    """Correctors, tensor and potentials shared read-only by every eps."""

    def __init__(self, spec: CoefficientSpec, config: StudyConfig, cache: Optional[CorrectorCache]):
        self.cell_resolution = config.cell_resolution or config.nodes_per_period
        self.box_resolution = config.box_resolution or config.nodes_per_period
        self.radius = truncation_radius(config)
        self.correctors: CorrectorSet = build_corrector_set(
            spec, self.cell_resolution, self.box_resolution, self.radius,
            method=config.corrector_method, solver=config.solver, threads=config.threads, cache=cache)
        self.a_star: HomogenizedTensor = homogenized_tensor(spec, self.correctors.periodic)
        self.potentials: Optional[List[PotentialField]] = None
        if spec.dim > 1:
            self.potentials = [
                solve_potential(flux_residual(spec, self.correctors, self.a_star, k),
                                config.solver, config.threads)
                for k in range(spec.dim)
            ]


def _sweep(spec: CoefficientSpec, config: StudyConfig, cache: Optional[CorrectorCache],
           report: RateStudyReport) -> None:
    source = study_source(config)
    interior = Box(*config.interior_box())
    shift = tuple(config.shift) if config.shift is not None else None
    modes = list(dict.fromkeys(config.modes))

    if config.path == "oracle":
        def measure(eps: float) -> Tuple[Dict[str, NormsRecord], Optional[dict], float]:
            start = time.perf_counter()
            norms = {
                mode: oracle_remainder_norms(spec, eps, source, mode, interior, config.p_list,
                                             config.truncation_radius,
                                             shift[0] if shift is not None else 0.0)
                for mode in modes
            }
            return norms, None, time.perf_counter() - start
    else:
        start = time.perf_counter()
        context = StudyContext(spec, config, cache)
        report.timings["correctors"] = time.perf_counter() - start
        report.extras["a_star"] = context.a_star.to_dict()
        report.extras["truncation_radius"] = context.radius
        report.extras["cell_resolution"] = context.cell_resolution
        report.extras["box_resolution"] = context.box_resolution
        report.extras["gauge"] = "zero-mean periodic"

        def measure(eps: float) -> Tuple[Dict[str, NormsRecord], Optional[dict], float]:
            start = time.perf_counter()
            runs = run_two_scale(spec, eps, source, context.correctors, context.a_star,
                                 context.potentials, interior, config.nodes_per_period, modes,
                                 config.p_list, config.split_remainder, shift, config.solver)
            identity = {mode: asdict(run.identity) for mode, run in runs.items()}
            return {mode: run.norms for mode, run in runs.items()}, identity, time.perf_counter() - start

    def guarded(eps: float):
        try:
            return measure(eps)
        except (ValueError, RuntimeError, MemoryError) as e:
            logger.warning("eps=%g failed: %s: %s", eps, type(e).__name__, e)
            return e

    with ThreadPoolExecutor(max_workers=max(1, config.threads)) as pool:
        outcomes = list(pool.map(guarded, report.eps))

    for eps, outcome in zip(report.eps, outcomes):
        key = eps_key(eps)
        if isinstance(outcome, Exception):
            report.failures[key] = f"{type(outcome).__name__}: {outcome}"
            continue
        norms, identity, elapsed = outcome
        for mode, record in norms.items():
            report.norms.setdefault(mode, {})[key] = record.to_dict()
        if identity is not None:
            report.identity[key] = identity
        report.timings[f"eps={key}"] = elapsed


def _judged_mode(modes: Sequence[str]) -> str:
    return "full" if "full" in modes else modes[0]


def _channel_slope(eps: List[float], values: List[float], floor: float, channel: str, mode: str,
                   target: float, tolerance: float, judged: bool, log_corrected: bool = False) -> ChannelSlope:
    if all(v <= floor for v in values):
        return ChannelSlope(channel, mode, None, None, target, "DEGENERATE", log_corrected)
    try:
        fit = fit_slope(eps, values, log_corrected)
    except (InsufficientPoints, NonPositiveValue) as e:
        logger.warning("No slope for %s/%s: %s", mode, channel, e)
        return ChannelSlope(channel, mode, None, None, target, "INSUFFICIENT", log_corrected)
    if not judged:
        verdict = "INFO"
    else:
        verdict = "PASS" if fit.slope >= target - tolerance else "FAIL"
    return ChannelSlope(channel, mode, fit.slope, fit.stderr, target, verdict, log_corrected)


def fit_report_slopes(report: RateStudyReport, modes: Sequence[str], p_list: Sequence[float],
                      tolerance: float) -> None:
    """Fill ``report.slopes`` and ``report.verdict`` from ``report.norms``."""
    judged_mode = _judged_mode(modes)
    channels = list(REPORTED_CHANNELS)
    for p in p_list:
        channels += [lp_channel("R", p), lp_channel("gradR", p, interior=True)]
    channels = list(dict.fromkeys(channels))
    target = report.nu_target

    slopes = []
    for mode in modes:
        table = report.norms.get(mode, {})
        keys = [eps_key(e) for e in report.eps if eps_key(e) in table]
        eps = [float(k) for k in keys]
        floor = DEGENERATE_FLOOR * max(table[k]["u_star_L2"] for k in keys) if keys else 0.0
        for channel in channels:
            values = [table[k][channel] for k in keys if channel in table[k]]
            if len(values) != len(keys):
                continue
            judged = mode == judged_mode and channel in PRIMARY_CHANNELS[:2]
            slopes.append(_channel_slope(eps, values, floor, channel, mode, target, tolerance, judged))
            if channel == "gradR_Linf_interior":
                slopes.append(_channel_slope(eps, values, floor, channel, mode, target, tolerance,
                                             mode == judged_mode, log_corrected=True))
    report.slopes = slopes

    judged = [s for s in slopes if s.mode == judged_mode and s.verdict in ("PASS", "FAIL", "DEGENERATE")
              and (s.channel in PRIMARY_CHANNELS[:2]
                   or (s.channel == "gradR_Linf_interior" and s.log_corrected))]
    if any(s.verdict == "FAIL" for s in judged):
        report.verdict = "FAIL"
    elif judged and all(s.verdict == "DEGENERATE" for s in judged):
        report.verdict = "DEGENERATE"
    else:
        report.verdict = "PASS"


def _flux_ratios(report: RateStudyReport) -> None:
    """``||H||_2 / (eps^nu ||hess u*||_2)`` per eps for the judged mode."""
    table = report.norms.get(_judged_mode(list(report.norms) or ["full"]), {})
    ratios = {}
    for key, values in table.items():
        if "H_L2" in values and values.get("hessian_L2", 0.0) > 0:
            ratios[key] = values["H_L2"] / (float(key) ** report.nu_target * values["hessian_L2"])
    if ratios:
        report.extras["H_ratio"] = ratios


def run_rate_study(config: StudyConfig, cache: Optional[CorrectorCache] = None) -> RateStudyReport:
    """Sweep eps, record remainder norms for each corrector mode, fit slopes.

    Per-eps failures are logged and recorded in ``report.failures``; the study
    continues and only fails when fewer than 4 eps values survive.

    Steps:
        1. Resolve the target rate ``nu = min(1, d/r)`` and check resources
        2. Validate ellipticity on the cell and the truncation box
        3. Build (or load) correctors, a* and, for d > 1, the potentials B_k
        4. Run every eps on the worker pool, finite-difference or closed-form path
        5. Fit log-log slopes per mode and channel and derive the verdict

    The verdict is judged on the ``full`` mode (or the only mode run):
    PASS when R_L2, gradR_L2_interior and the log-corrected
    gradR_Linf_interior all decay at least at ``nu - slope_tolerance``,
    DEGENERATE when every judged norm sits at the solver floor.

    Args:
        config: Validated study configuration.
        cache: Optional corrector cache shared between studies.

    Returns:
        RateStudyReport with norms per mode and eps, slopes, verdict, labels,
        failures, identity checks, timings and the environment.

    Raises:
        CriticalExponent: If ``r == d``.
        ConfigError: On resource-gate violations or an invalid setup.
        InsufficientPoints: If fewer than 4 eps values survive.
    """
    started = time.perf_counter()
    spec = spec_from_config(config.coefficient)
    eps = config.eps_list()
    if len(eps) < MIN_POINTS:
        raise InsufficientPoints(f"need at least {MIN_POINTS} eps values, got {len(eps)}")
    target = target_rate(spec)
    estimate = check_resources(config)
    validate_ellipticity(spec, _ELLIPTICITY_SAMPLE_RES,
                         min(truncation_radius(config), _ELLIPTICITY_MAX_RADIUS))

    report = RateStudyReport(
        dim=spec.dim,
        nu_target=float(target),
        eps=eps,
        norms={},
        slopes=[],
        verdict="PASS",
        labels=study_labels(spec, config),
        config=config.model_dump(mode="json"),
    )
    report.extras["memory_estimate_gb"] = estimate
    report.extras["nu_exact"] = str(target)
    report.extras["spec_hash"] = spec.spec_hash()
    if spec.dim == 1:
        report.oracle["a_star_exact"] = exact_astar_1d(spec)

    logger.info("Rate study: d=%d nu=%s path=%s eps=%s", spec.dim, target, config.path, eps)
    _sweep(spec, config, cache, report)
    survivors = len(eps) - len(report.failures)
    if survivors < MIN_POINTS:
        raise InsufficientPoints(
            f"only {survivors} eps values survived; failures: {sorted(report.failures.items())}"
        )
    fit_report_slopes(report, list(dict.fromkeys(config.modes)), config.p_list, config.slope_tolerance)
    _flux_ratios(report)
    report.timings["total"] = time.perf_counter() - started
    report.environment = _environment()
    logger.info("Rate study verdict: %s", report.verdict)
    return report


def compare_correctors(config: StudyConfig, cache: Optional[CorrectorCache] = None) -> ComparisonReport:
    """Ratio of interior W^{1,inf} remainders, full over periodic-only correctors.

    PASS needs ``rho(eps_min) <= 0.5`` and ``rho`` nonincreasing up to a 20%
    rise between consecutive eps. Without a defect both modes coincide and the
    verdict is NOT_APPLICABLE.
    """
    config = config.model_copy(update={"modes": ["full", "periodic"]})
    study = run_rate_study(config, cache)
    full = study.norms.get("full", {})
    periodic = study.norms.get("periodic", {})
    keys = [eps_key(e) for e in study.eps if eps_key(e) in full and eps_key(e) in periodic]
    ratios = {}
    for key in keys:
        denominator = periodic[key]["gradR_Linf_interior"]
        numerator = full[key]["gradR_Linf_interior"]
        ratios[key] = numerator / denominator if denominator > 0 else 1.0

    def slope_of(table) -> Optional[float]:
        try:
            return fit_slope([float(k) for k in keys], [table[k]["gradR_Linf_interior"] for k in keys]).slope
        except (InsufficientPoints, NonPositiveValue):
            return None

    periodic_slope = slope_of(periodic)
    full_slope = slope_of(full)
    stalled = periodic_slope <= STALL_SLOPE if periodic_slope is not None else None

    if not spec_from_config(config.coefficient).has_defect:
        verdict = "NOT_APPLICABLE"
    else:
        sequence = [ratios[k] for k in keys]
        monotone = all(b <= RATIO_NOISE * a for a, b in zip(sequence, sequence[1:]))
        verdict = "PASS" if sequence and sequence[-1] <= RATIO_TARGET and monotone else "FAIL"
    logger.info("Corrector comparison: rho=%s verdict=%s periodic slope=%s",
                [f"{ratios[k]:.3g}" for k in keys], verdict, periodic_slope)
    return ComparisonReport([float(k) for k in keys], ratios, verdict, periodic_slope, full_slope,
                            stalled, study)
