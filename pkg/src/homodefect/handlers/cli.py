"""
Command-line entry point for homodefect.

Subcommands:
    corrector     periodic and defect correctors, residuals, growth exponents
    tensor        homogenized tensor, optional defect invariance check
    potential     flux residuals M_k and antisymmetric potentials B_k
    solve         two-scale runs (u_eps, u*, R, H) for every configured eps
    rate-study    eps sweep with slope fits and verdicts
    compare       full versus periodic-only correctors over an eps sweep
    oracle-check  finite differences against the 1D closed forms

Exit codes:
    0  success
    2  configuration or input/output error
    3  solver failure
    4  verdict FAIL (rate-study and compare only)

Errors are printed to stderr as ``{"error": {"code", "message", "details"}}``.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from src.homodefect.lib.cache import CorrectorCache
from src.homodefect.lib.config import StudyConfig, load_config, load_environment, log_level, resolve_cache_dir
from src.homodefect.lib.elliptic_solver import NoConvergence
from src.homodefect.services.coefficients import CriticalExponent
from src.homodefect.services.commands import (
    corrector_command,
    oracle_check,
    potential_command,
    solve_command,
    tensor_command,
)
from src.homodefect.services.rate_study import compare_correctors, run_rate_study
from src.homodefect.services.reporting import emit_comparison, emit_outputs, write_fields, write_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VERDICT = 4

SINGLE_SHOT = {
    "corrector": corrector_command,
    "tensor": tensor_command,
    "potential": potential_command,
    "solve": solve_command,
    "oracle-check": oracle_check,
}
COMMANDS = tuple(SINGLE_SHOT) + ("rate-study", "compare")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="homodefect",
        description="Correctors, homogenized tensors and convergence-rate studies "
                    "for periodic coefficients with a localized defect.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="study configuration (JSON)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--cache-dir", default=None, help="corrector cache directory")
    parser.add_argument("--threads", type=int, default=None, help="worker threads")
    parser.add_argument("--allow-large", action="store_true", help="permit 3D runs")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    return parser


def _apply_overrides(config: StudyConfig, args: argparse.Namespace) -> StudyConfig:
    update: Dict[str, Any] = {}
    if args.threads is not None:
        update["threads"] = args.threads
    if args.allow_large:
        update["allow_large"] = True
    if not update:
        return config
    # Re-validate so that overrides obey the same bounds as the file.
    return StudyConfig.model_validate({**config.model_dump(), **update})


def _error(code: str, message: str, details: Optional[Dict[str, Any]] = None) -> None:
    body: Dict[str, Any] = {"error": {"code": code, "message": message}}
    if details:
        body["error"]["details"] = details
    print(json.dumps(body, sort_keys=True, default=str), file=sys.stderr)


def run(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    cache_dir = resolve_cache_dir(config, args.cache_dir)
    cache = CorrectorCache(cache_dir) if cache_dir is not None else None
    out = Path(args.out)

    if args.command == "rate-study":
        report = run_rate_study(config, cache)
        emit_outputs(report, out)
        return EXIT_VERDICT if report.verdict == "FAIL" else EXIT_OK
    if args.command == "compare":
        comparison = compare_correctors(config, cache)
        emit_comparison(comparison, out)
        return EXIT_VERDICT if comparison.verdict == "FAIL" else EXIT_OK

    summary, fields = SINGLE_SHOT[args.command](config, cache)
    name = args.command.replace("-", "_")
    write_json(summary, out / f"{name}.json")
    if fields:
        write_fields(fields, out / "fields")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    load_environment()
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else log_level(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return run(args)
    except ValidationError as e:
        _error("INVALID_CONFIG", "Configuration does not match the schema.",
               {"errors": e.errors(include_url=False)})
        return EXIT_CONFIG
    except CriticalExponent as e:
        _error("CRITICAL_EXPONENT", str(e), {"d": e.d, "r": e.r})
        return EXIT_CONFIG
    except ValueError as e:
        _error("CONFIG_ERROR", str(e), {"error_type": type(e).__name__})
        return EXIT_CONFIG
    except OSError as e:
        _error("IO_ERROR", str(e), {"error_type": type(e).__name__})
        return EXIT_CONFIG
    except NoConvergence as e:
        _error("SOLVER_FAILURE", str(e), {"iterations": e.iterations, "residual": e.residual})
        return EXIT_SOLVER
    except RuntimeError as e:
        logger.exception("Solver failure")
        _error("SOLVER_FAILURE", str(e), {"error_type": type(e).__name__})
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
