"""Report files for rate studies and single-shot commands.

Given the same report, every file is byte-identical between emissions:
JSON is written with sorted keys, floats with ``repr`` and rows in a fixed
order (modes and channels sorted, eps in study order).
"""

import csv
import json
import logging
import math
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Union

from src.homodefect.lib.field_io import save_field
from src.homodefect.lib.grid_fields import GridField
from src.homodefect.models import ComparisonReport, RateStudyReport

logger = logging.getLogger(__name__)

RATES_HEADER = ["eps", "channel", "mode", "value"]
SLOPES_HEADER = ["channel", "mode", "log_corrected", "slope", "stderr", "target", "verdict"]
RATIOS_HEADER = ["eps", "ratio"]


class ReportWriteError(OSError):
    """Raised when an output directory or file cannot be written."""


def _number(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def _prepare(out_dir: Union[str, Path]) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ReportWriteError(f"Cannot create output directory {out}: {e}") from e
    return out


def _write_text(path: Path, text: str) -> Path:
    try:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    except OSError as e:
        raise ReportWriteError(f"Cannot write {path}: {e}") from e
    return path


def _write_rows(path: Path, header: List[str], rows: List[List[str]]) -> Path:
    try:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise ReportWriteError(f"Cannot write {path}: {e}") from e
    return path


def to_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_json(payload: dict, path: Union[str, Path]) -> Path:
    path = Path(path)
    _prepare(path.parent)
    return _write_text(path, to_json(payload))


def write_fields(fields: Dict[str, GridField], out_dir: Union[str, Path]) -> List[Path]:
    """Save every named field as ``<name>.hdf1`` (sorted by name)."""
    out = _prepare(out_dir)
    return [save_field(fields[name], out / f"{name}.hdf1") for name in sorted(fields)]


def rate_rows(report: RateStudyReport) -> List[List[str]]:
    rows = []
    for mode in sorted(report.norms):
        table = report.norms[mode]
        for eps in report.eps:
            values = table.get(repr(float(eps)))
            if values is None:
                continue
            for channel in sorted(values):
                rows.append([_number(eps), channel, mode, _number(values[channel])])
    return rows


def slope_rows(report: RateStudyReport) -> List[List[str]]:
    ordered = sorted(report.slopes, key=lambda s: (s.mode, s.channel, s.log_corrected))
    return [
        [s.channel, s.mode, str(s.log_corrected).lower(), _number(s.slope), _number(s.stderr),
         _number(s.target), s.verdict]
        for s in ordered
    ]


def _plot_data(report: RateStudyReport) -> Dict[str, str]:
    """Two-column ``log10(eps) log10(value)`` text per (mode, channel)."""
    files = {}
    for mode in sorted(report.norms):
        table = report.norms[mode]
        channels = sorted({c for values in table.values() for c in values})
        for channel in channels:
            lines = ["# log10(eps) log10(value)"]
            for eps in report.eps:
                value = table.get(repr(float(eps)), {}).get(channel)
                if value is None or value <= 0:
                    continue
                lines.append(f"{math.log10(eps)!r} {math.log10(value)!r}")
            files[f"{mode}_{channel}.dat"] = "\n".join(lines) + "\n"
    return files


def summary_text(report: RateStudyReport) -> str:
    lines = [
        f"dimension: {report.dim}",
        f"target rate nu: {report.nu_target!r}",
        f"labels: {', '.join(report.labels) if report.labels else '-'}",
        f"eps: {' '.join(_number(e) for e in report.eps)}",
        f"verdict: {report.verdict}",
        "",
        "channel                      mode      corrected  slope       stderr      verdict",
    ]
    for row in slope_rows(report):
        channel, mode, corrected, slope, stderr, _, verdict = row
        lines.append(f"{channel:<28} {mode:<9} {corrected:<10} {slope or '-':<11.11} "
                     f"{stderr or '-':<11.11} {verdict}")
    if report.failures:
        lines.append("")
        lines.append("failures:")
        for key in sorted(report.failures):
            lines.append(f"  eps={key}: {report.failures[key]}")
    return "\n".join(lines) + "\n"


def emit_outputs(report: RateStudyReport, out_dir: Union[str, Path]) -> List[Path]:
    """Write ``report.json``, ``rates.csv``, ``slopes.csv``, ``*.dat`` and ``summary.txt``.

    Raises:
        ReportWriteError: If ``out_dir`` or a file in it cannot be written.
    """
    out = _prepare(out_dir)
    written = [
        _write_text(out / "report.json", to_json(asdict(report))),
        _write_rows(out / "rates.csv", RATES_HEADER, rate_rows(report)),
        _write_rows(out / "slopes.csv", SLOPES_HEADER, slope_rows(report)),
    ]
    for name, text in sorted(_plot_data(report).items()):
        written.append(_write_text(out / name, text))
    written.append(_write_text(out / "summary.txt", summary_text(report)))
    logger.info("Wrote %d report files to %s", len(written), out)
    return written


def emit_comparison(comparison: ComparisonReport, out_dir: Union[str, Path]) -> List[Path]:
    """Rate-study outputs of both modes plus ``comparison.json`` and ``ratios.csv``."""
    out = _prepare(out_dir)
    written = emit_outputs(comparison.study, out)
    payload = {
        "eps": comparison.eps,
        "ratios": comparison.ratios,
        "verdict": comparison.verdict,
        "periodic_slope": comparison.periodic_slope,
        "full_slope": comparison.full_slope,
        "stalled": comparison.stalled,
    }
    written.append(_write_text(out / "comparison.json", to_json(payload)))
    rows = [[_number(eps), _number(comparison.ratios[repr(float(eps))])] for eps in comparison.eps]
    written.append(_write_rows(out / "ratios.csv", RATIOS_HEADER, rows))
    return written
