"""Single-shot computations behind the non-sweep CLI commands.

Each function returns ``(summary, fields)``: a JSON-ready summary dict and the
named grid fields to write next to it.
"""

import logging
from dataclasses import asdict
from typing import Dict, Optional, Tuple

import numpy as np

from src.homodefect.lib.cache import CorrectorCache
from src.homodefect.lib.config import ConfigError, StudyConfig
from src.homodefect.lib.grid_fields import Box, GridField
from src.homodefect.models import CorrectorSet
from src.homodefect.services.coefficients import (
    CoefficientSpec,
    lr_norm_estimate,
    spec_from_config,
    validate_ellipticity,
)
from src.homodefect.services.correctors import (
    DegenerateOscillation,
    build_corrector_set,
    corrector_residual,
    sublinearity_exponent,
)
from src.homodefect.services.homogenization import (
    defect_invariance_gaps,
    flux_residual,
    homogenized_tensor,
    potential_residual,
    potential_sublinearity,
    solve_potential,
)
from src.homodefect.services.oracle_1d import Corrector1D, exact_astar_1d, exact_solution_1d, oracle_remainder_norms
from src.homodefect.services.rate_study import StudyContext, eps_key, study_source, target_rate, truncation_radius
from src.homodefect.services.twoscale import run_two_scale

logger = logging.getLogger(__name__)

Fields = Dict[str, GridField]

# Standalone commands default to a finer cell than the sweep alignment rule.
DEFAULT_CELL_RESOLUTION = 64
_SAMPLE_RES = 8
_SAMPLE_MAX_RADIUS = 32.0


def _setup(config: StudyConfig) -> Tuple[CoefficientSpec, float]:
    spec = spec_from_config(config.coefficient)
    radius = truncation_radius(config)
    validate_ellipticity(spec, _SAMPLE_RES, min(radius, _SAMPLE_MAX_RADIUS))
    return spec, radius


def _correctors(spec: CoefficientSpec, config: StudyConfig, radius: float,
                cache: Optional[CorrectorCache]) -> CorrectorSet:
    return build_corrector_set(
        spec,
        config.cell_resolution or DEFAULT_CELL_RESOLUTION,
        config.box_resolution or config.nodes_per_period,
        radius,
        method=config.corrector_method,
        solver=config.solver,
        threads=config.threads,
        cache=cache,
    )


def _directions(spec: CoefficientSpec, config: StudyConfig):
    if config.corrector_direction is None:
        return list(range(spec.dim))
    if not 0 <= config.corrector_direction < spec.dim:
        raise ConfigError(f"corrector_direction {config.corrector_direction} outside 0..{spec.dim - 1}")
    return [config.corrector_direction]


def corrector_command(config: StudyConfig, cache: Optional[CorrectorCache] = None) -> Tuple[dict, Fields]:
    """Correctors with residuals, the defect L^r estimate and optional growth exponents."""
    spec, radius = _setup(config)
    cset = _correctors(spec, config, radius, cache)
    summary = {
        "spec": spec.to_dict(),
        "spec_hash": spec.spec_hash(),
        "nu": str(target_rate(spec)),
        "truncation_radius": radius,
        "cell_resolution": cset.cell_resolution,
        "box_resolution": cset.box_resolution,
        "defect_lr_norm": lr_norm_estimate(spec, radius, _SAMPLE_RES),
        "residuals": {},
        "sublinearity": {},
    }
    fields = {}
    for j in _directions(spec, config):
        residual = corrector_residual(spec, cset, j)
        summary["residuals"][str(j)] = {"max_residual": residual.max_residual,
                                        "rhs_norm": residual.rhs_norm}
        fields[f"w_per_{j}"] = cset.periodic[j]
        if cset.defect[j] is not None:
            fields[f"w_defect_{j}"] = cset.defect[j]
        if config.sublinearity_radii:
            summary["sublinearity"][str(j)] = sublinearity_exponent(
                cset, j, config.sublinearity_radii, seed=config.seed)
    return summary, fields


def tensor_command(config: StudyConfig, cache: Optional[CorrectorCache] = None) -> Tuple[dict, Fields]:
    """Homogenized tensor and, with ``invariance_radii``, the defect invariance gaps."""
    spec, radius = _setup(config)
    cset = _correctors(spec.without_defect(), config, radius, cache)
    tensor = homogenized_tensor(spec, cset.periodic)
    summary = {"spec_hash": spec.spec_hash(), **tensor.to_dict(), "residuals": {}}
    if spec.dim == 1:
        exact = exact_astar_1d(spec)
        summary["residuals"]["a_star_exact"] = exact
        summary["residuals"]["a_star_error"] = abs(float(tensor.matrix[0, 0]) - exact)
    if config.invariance_radii:
        summary["defect_invariance"] = {
            "radii": list(config.invariance_radii),
            "oversampling": config.oversampling,
            "discrepancy": defect_invariance_gaps(
                spec, config.invariance_radii, config.cell_resolution or DEFAULT_CELL_RESOLUTION,
                config.box_resolution or config.nodes_per_period, config.oversampling,
                config.solver, config.threads),
        }
    return summary, {}


def potential_command(config: StudyConfig, cache: Optional[CorrectorCache] = None) -> Tuple[dict, Fields]:
    """Flux residuals ``M_k`` and potentials ``B_k`` with their consistency residuals."""
    spec, radius = _setup(config)
    cset = _correctors(spec, config, radius, cache)
    tensor = homogenized_tensor(spec, cset.periodic)
    summary = {"spec_hash": spec.spec_hash(), "a_star": tensor.matrix.tolist(),
               "gauge": "zero-mean periodic", "directions": {}}
    fields = {}
    potentials = []
    for k in range(spec.dim):
        staggered = flux_residual(spec, cset, tensor, k)
        nodal = flux_residual(spec, cset, tensor, k, staggered=False)
        potential = solve_potential(staggered, config.solver, config.threads)
        potentials.append(potential)
        record = {
            "div_M_staggered": staggered.divergence_max,
            "div_M_nodal": nodal.divergence_max,
            "div_B_minus_M": potential_residual(potential, staggered),
        }
        if potential.defect_upper:
            record["div_B_minus_M_defect"] = potential_residual(potential, staggered, "defect")
        summary["directions"][str(k)] = record
        for (i, j), field in potential.periodic_upper.items():
            fields[f"B_{k}_{i}{j}"] = field
        for (i, j), field in (potential.defect_upper or {}).items():
            fields[f"B_defect_{k}_{i}{j}"] = field
    if config.sublinearity_radii and spec.dim > 1:
        try:
            summary["sublinearity"] = potential_sublinearity(
                potentials, config.sublinearity_radii, cset, config.seed)
        except DegenerateOscillation as e:
            logger.warning("Potential growth not measurable: %s", e)
            summary["sublinearity"] = None
    return summary, fields


def solve_command(config: StudyConfig, cache: Optional[CorrectorCache] = None) -> Tuple[dict, Fields]:
    """One two-scale run per eps and mode, with fields of the smallest eps."""
    spec, _ = _setup(config)
    context = StudyContext(spec, config, cache)
    source = study_source(config)
    interior = Box(*config.interior_box())
    shift = tuple(config.shift) if config.shift is not None else None
    records = []
    fields = {}
    for eps in config.eps_list():
        runs = run_two_scale(spec, eps, source, context.correctors, context.a_star, context.potentials,
                             interior, config.nodes_per_period, list(dict.fromkeys(config.modes)),
                             config.p_list, config.split_remainder, shift, config.solver)
        for mode, run in runs.items():
            records.append({
                "eps": eps,
                "mode": mode,
                "norms": run.norms.to_dict(),
                "residual_identity": asdict(run.identity),
                "grid": {"h": run.grid.spacing[0], "n": list(run.grid.extents)},
                "timings": run.timings,
            })
            fields[f"R_{mode}"] = run.remainder
            fields[f"H_{mode}"] = run.flux_term
        fields["u_eps"] = runs[next(iter(runs))].u_eps
        fields["u_star"] = runs[next(iter(runs))].u_star
    summary = {"spec_hash": spec.spec_hash(), "a_star": context.a_star.to_dict(),
               "truncation_radius": context.radius, "runs": records}
    return summary, fields


def oracle_check(config: StudyConfig, cache: Optional[CorrectorCache] = None) -> Tuple[dict, Fields]:
    """Cross-validate the finite-difference pipeline against the closed forms (1D)."""
    if config.coefficient.dim != 1:
        raise ConfigError("oracle-check needs a one-dimensional coefficient")
    spec, _ = _setup(config)
    fd_config = config.model_copy(update={"corrector_method": "fd", "path": "fd"})
    context = StudyContext(spec, fd_config, cache)
    cset = context.correctors
    exact = Corrector1D.build(spec, context.radius)
    source = study_source(config)
    interior = Box(*config.interior_box())
    shift = tuple(config.shift) if config.shift is not None else None

    y_cell = cset.periodic[0].grid.coords(0)
    summary = {
        "a_star_fd": float(context.a_star.matrix[0, 0]),
        "a_star_exact": exact.a_star,
        "a_star_error": abs(float(context.a_star.matrix[0, 0]) - exact.a_star),
        "w_per_error": float(np.max(np.abs(cset.periodic[0].data - exact.periodic(y_cell)))),
        "eps": {},
    }
    if cset.defect[0] is not None:
        y_box = cset.defect[0].grid.coords(0)
        summary["w_defect_error"] = float(np.max(np.abs(cset.defect[0].data - exact.defect(y_box))))

    modes = list(dict.fromkeys(config.modes))
    for eps in config.eps_list():
        runs = run_two_scale(spec, eps, source, cset, context.a_star, None, interior,
                             config.nodes_per_period, modes, config.p_list, False, shift, config.solver)
        grid = runs[modes[0]].grid
        solution = exact_solution_1d(spec, eps, source, shift[0] if shift else 0.0)
        entry = {"u_eps_error": float(np.max(np.abs(runs[modes[0]].u_eps.data - solution(grid.coords(0))))),
                 "norms": {}}
        for mode in modes:
            oracle = oracle_remainder_norms(spec, eps, source, mode, interior, config.p_list,
                                            context.radius, shift[0] if shift else 0.0)
            fd = runs[mode].norms
            entry["norms"][mode] = {
                channel: {"fd": fd[channel], "oracle": value,
                          "relative": abs(fd[channel] - value) / value if value > 0 else abs(fd[channel])}
                for channel, value in oracle.to_dict().items()
            }
        summary["eps"][eps_key(eps)] = entry
    return summary, {}
