"""Unit tests for report files."""

import json
import math

import numpy as np
import pytest

from src.homodefect.lib.field_io import load_field
from src.homodefect.lib.grid_fields import GridField, cell_grid
from src.homodefect.models import ChannelSlope, ComparisonReport, RateStudyReport
from src.homodefect.services.reporting import (
    RATES_HEADER,
    ReportWriteError,
    emit_comparison,
    emit_outputs,
    rate_rows,
    summary_text,
    write_fields,
    write_json,
)

EPS = [0.5, 0.25, 0.125, 0.0625]


@pytest.fixture
def report():
    norms = {
        mode: {repr(e): {"R_L2": e * scale, "gradR_L2_interior": e ** 0.5 * scale} for e in EPS}
        for mode, scale in (("full", 1.0), ("periodic", 2.0))
    }
    slopes = [
        ChannelSlope("R_L2", "full", 1.0, 0.0, 0.5, "PASS"),
        ChannelSlope("gradR_L2_interior", "full", 0.5, 0.0, 0.5, "PASS"),
        ChannelSlope("R_L2", "periodic", 1.0, 0.0, 0.5, "INFO"),
    ]
    return RateStudyReport(dim=1, nu_target=0.5, eps=list(EPS), norms=norms, slopes=slopes,
                           verdict="PASS", labels=["1D regime"])


class TestRateOutputs:
    """Tests for rate-study report files."""

    def test_empty_report(self, tmp_path):
        """Test that a report without norms still yields headers and a summary."""
        empty = RateStudyReport(dim=1, nu_target=1.0, eps=[], norms={}, slopes=[], verdict="DEGENERATE")
        written = emit_outputs(empty, tmp_path)
        assert sorted(p.name for p in written) == ["rates.csv", "report.json", "slopes.csv", "summary.txt"]
        assert (tmp_path / "rates.csv").read_text() == ",".join(RATES_HEADER) + "\n"

    def test_one_row_per_eps_channel_and_mode(self, report):
        rows = rate_rows(report)
        assert len(rows) == 2 * 4 * 2
        assert rows[0] == ["0.5", "R_L2", "full", "0.5"]
        assert [row[2] for row in rows] == ["full"] * 8 + ["periodic"] * 8

    def test_report_json(self, report, tmp_path):
        emit_outputs(report, tmp_path)
        payload = json.loads((tmp_path / "report.json").read_text())
        assert payload["verdict"] == "PASS"
        assert payload["norms"]["periodic"]["0.125"]["R_L2"] == 0.25
        assert payload["slopes"][0]["channel"] == "R_L2"

    def test_reemission_is_byte_identical(self, report, tmp_path):
        first = emit_outputs(report, tmp_path / "a")
        second = emit_outputs(report, tmp_path / "b")
        assert [p.name for p in first] == [p.name for p in second]
        for a, b in zip(first, second):
            assert a.read_bytes() == b.read_bytes()

    def test_plot_data(self, report, tmp_path):
        emit_outputs(report, tmp_path)
        lines = (tmp_path / "full_R_L2.dat").read_text().splitlines()
        assert lines[0] == "# log10(eps) log10(value)"
        assert lines[1] == f"{math.log10(0.5)!r} {math.log10(0.5)!r}"
        assert len(lines) == 5

    def test_plot_data_skips_non_positive_values(self, report, tmp_path):
        report.norms["full"]["0.125"]["R_L2"] = 0.0
        emit_outputs(report, tmp_path)
        assert len((tmp_path / "full_R_L2.dat").read_text().splitlines()) == 4

    def test_summary_lists_failures(self, report):
        report.failures["0.03125"] = "ResolutionTooCoarse: h too large"
        text = summary_text(report)
        assert "verdict: PASS" in text
        assert "eps=0.03125: ResolutionTooCoarse" in text

    def test_unwritable_directory(self, report, tmp_path):
        """Test that an output path below a regular file raises ReportWriteError."""
        blocker = tmp_path / "blocker"
        blocker.write_text("x")
        with pytest.raises(ReportWriteError):
            emit_outputs(report, blocker / "out")


class TestOtherOutputs:
    """Tests for comparison files, JSON summaries and fields."""

    def test_comparison_files(self, report, tmp_path):
        ratios = {repr(e): 0.5 for e in EPS}
        comparison = ComparisonReport(list(EPS), ratios, "PASS", 0.0, 1.0, True, report)
        names = [p.name for p in emit_comparison(comparison, tmp_path)]
        assert "comparison.json" in names and "ratios.csv" in names
        assert json.loads((tmp_path / "comparison.json").read_text())["stalled"] is True
        assert (tmp_path / "ratios.csv").read_text().splitlines()[1] == "0.5,0.5"

    def test_write_json_sorts_keys(self, tmp_path):
        path = write_json({"b": 1, "a": [1.5]}, tmp_path / "nested" / "summary.json")
        assert path.read_text().index('"a"') < path.read_text().index('"b"')

    def test_write_fields(self, tmp_path):
        grid = cell_grid(1, 16)
        fields = {"w_per_0": GridField(grid, np.linspace(0.0, 1.0, 16)), "B": GridField(grid, np.ones(16))}
        paths = write_fields(fields, tmp_path)
        assert [p.name for p in paths] == ["B.hdf1", "w_per_0.hdf1"]
        assert np.array_equal(load_field(paths[1]).data, fields["w_per_0"].data)
