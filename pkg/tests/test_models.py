"""Unit tests for core data models."""

import numpy as np
import pytest

from src.homodefect.lib.grid_fields import GridField, cell_grid
from src.homodefect.models import (
    ChannelSlope,
    ComparisonReport,
    CorrectorSet,
    HomogenizedTensor,
    NormsRecord,
    PotentialField,
    QuadratureProfile,
    RateStudyReport,
    ValidationReport,
    lp_channel,
)


def _cell_field(value):
    return GridField(cell_grid(2, 4), np.full((4, 4), value))


def _corrector_set(with_defect):
    periodic = (_cell_field(0.1), _cell_field(0.2))
    gradients = tuple(GridField(cell_grid(2, 4), np.zeros((4, 4, 2))) for _ in range(2))
    defect = (_cell_field(1.0), None) if with_defect else (None, None)
    return CorrectorSet(
        periodic=periodic,
        defect=defect,
        periodic_gradients=gradients,
        defect_gradients=(gradients[0], None) if with_defect else (None, None),
        truncation_radius=8.0,
        cell_resolution=4,
        box_resolution=4,
        method="fd",
        spec_hash="abc123",
    )


def test_validation_report_creation():
    """Test ValidationReport data class instantiation."""
    report = ValidationReport(min=1.0, max=3.0, periodic_min=1.0, periodic_max=3.0, passed=True, samples=512)

    assert report.passed
    assert report.min <= report.periodic_max <= report.max
    with pytest.raises(AttributeError):
        report.passed = False


def test_corrector_set_defect_flags():
    """Test CorrectorSet dimension and defect detection."""
    full = _corrector_set(with_defect=True)

    assert full.dim == 2
    assert full.has_defect
    assert not _corrector_set(with_defect=False).has_defect


def test_corrector_set_periodic_only():
    """Test that periodic_only drops the defect parts and keeps the rest."""
    full = _corrector_set(with_defect=True)
    periodic = full.periodic_only()

    assert periodic.defect == (None, None)
    assert periodic.defect_gradients == (None, None)
    assert periodic.periodic is full.periodic
    assert periodic.truncation_radius == full.truncation_radius
    assert periodic.spec_hash == full.spec_hash


def test_homogenized_tensor_to_dict():
    """Test HomogenizedTensor serialization."""
    tensor = HomogenizedTensor(np.diag([1.5, 2.0]), 32, "abc123", 0.0, (1.5, 2.0), True)
    payload = tensor.to_dict()

    assert payload["a_star"] == [[1.5, 0.0], [0.0, 2.0]]
    assert payload["eigenvalues"] == [1.5, 2.0]
    assert payload["elliptic"] is True
    assert set(payload) == {"a_star", "cell_resolution", "spec_hash", "asymmetry", "eigenvalues", "elliptic"}


def test_potential_field_components():
    """Test that PotentialField exposes an antisymmetric matrix from its upper triangle."""
    upper = _cell_field(0.5)
    potential = PotentialField(direction=0, dim=2, periodic_upper={(0, 1): upper}, defect_upper=None)

    assert potential.component(0, 1) is upper
    assert np.array_equal(potential.component(1, 0).data, -upper.data)
    assert potential.component(1, 1) is None
    assert potential.component(0, 1, "defect") is None
    assert potential.gauge == "zero-mean periodic"


def test_norms_record_sorted():
    """Test NormsRecord lookup and sorted serialization."""
    norms = NormsRecord({"diff_L2": 0.2, "R_L2": 0.1})

    assert norms["R_L2"] == 0.1
    assert list(norms.to_dict()) == ["R_L2", "diff_L2"]
    with pytest.raises(KeyError):
        norms["H_L2"]


def test_quadrature_profile_defaults():
    """Test QuadratureProfile defaults and the panel floor."""
    profile = QuadratureProfile()

    assert profile.panels_per_period == 64
    assert profile.order == 8
    with pytest.raises(ValueError):
        QuadratureProfile(panels_per_period=16)


def test_lp_channel_names():
    """Test L^p channel naming."""
    assert lp_channel("R", 4.0) == "R_L4"
    assert lp_channel("gradR", 2.5, interior=True) == "gradR_L2.5_interior"
    assert lp_channel("R", float("inf")) == "R_Linf"


def test_rate_study_report_defaults():
    """Test RateStudyReport default collections are independent."""
    slope = ChannelSlope("R_L2", "full", 0.98, 0.01, 1.0, "PASS")
    first = RateStudyReport(dim=1, nu_target=1.0, eps=[0.125], norms={}, slopes=[slope], verdict="PASS")
    second = RateStudyReport(dim=1, nu_target=1.0, eps=[0.125], norms={}, slopes=[], verdict="PASS")
    first.labels.append("periodic baseline (no defect)")

    assert second.labels == []
    assert first.failures == {}
    assert first.slopes[0].log_corrected is False


def test_comparison_report_creation():
    """Test ComparisonReport data class instantiation."""
    study = RateStudyReport(dim=1, nu_target=0.5, eps=[0.125], norms={}, slopes=[], verdict="PASS")
    comparison = ComparisonReport(
        eps=[0.125], ratios={"0.125": 0.4}, verdict="PASS",
        periodic_slope=0.02, full_slope=0.6, stalled=True, study=study,
    )

    assert comparison.study is study
    assert comparison.ratios["0.125"] < 0.5
