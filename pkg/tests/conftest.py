"""Pytest configuration and shared fixtures."""

import pytest

from src.homodefect.lib.grid_fields import Box
from src.homodefect.services.coefficients import CoefficientSpec, DefectProfile, PeriodicProfile
from src.homodefect.services.sources import SourceSpec


@pytest.fixture
def sin_1d():
    """``a = 2 + sin(2 pi y)`` without a defect (a* = sqrt(3))."""
    return CoefficientSpec(dim=1, periodic=PeriodicProfile("sin_product", 2.0, 1.0), r=4.0)


@pytest.fixture
def gaussian_1d():
    """``2 + sin(2 pi y)`` plus a unit Gaussian bump at the origin."""
    return CoefficientSpec(
        dim=1,
        periodic=PeriodicProfile("sin_product", 2.0, 1.0),
        defect=DefectProfile("gaussian", amplitude=1.0, width=1.0),
        r=4.0,
    )


@pytest.fixture
def power_1d():
    """Slowly decaying defect ``(1 + |y|)^-0.55`` with r = 2, nu = 1/2."""
    return CoefficientSpec(
        dim=1,
        periodic=PeriodicProfile("sin_product", 2.0, 1.0),
        defect=DefectProfile("power", amplitude=1.0, s=0.55),
        r=2.0,
    )


@pytest.fixture
def constant_1d():
    return CoefficientSpec(dim=1, periodic=PeriodicProfile("constant", 3.0), r=4.0)


@pytest.fixture
def constant_2d():
    return CoefficientSpec(dim=2, periodic=PeriodicProfile("constant", 3.0), r=4.0)


@pytest.fixture
def laminate_2d():
    """Layers along axis 0: a* = diag(sqrt(3), 2)."""
    return CoefficientSpec(dim=2, periodic=PeriodicProfile("laminate", 2.0, 1.0, axis=0), r=4.0)


@pytest.fixture
def sin_2d():
    """``2 + sin(2 pi y1) sin(2 pi y2)`` without a defect."""
    return CoefficientSpec(dim=2, periodic=PeriodicProfile("sin_product", 2.0, 1.0), r=4.0)


@pytest.fixture
def gaussian_2d():
    return CoefficientSpec(
        dim=2,
        periodic=PeriodicProfile("sin_product", 2.0, 1.0),
        defect=DefectProfile("gaussian", amplitude=0.5, width=1.0),
        r=4.0,
    )


@pytest.fixture
def unit_interval():
    return Box((-1.0,), (1.0,))


@pytest.fixture
def gaussian_source_1d(unit_interval):
    """Default Gaussian source, centred at 0.3."""
    return SourceSpec("gaussian", unit_interval)


@pytest.fixture
def study_document():
    """Minimal one-dimensional study configuration as a JSON-ready dict."""
    return {
        "coefficient": {
            "dim": 1,
            "periodic": {"kind": "constant", "base": 3.0},
            "r": 4.0,
        },
        "eps": [0.125, 0.0625, 0.03125, 0.015625],
        "nodes_per_period": 16,
    }
