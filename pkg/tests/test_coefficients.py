"""Property-based and unit tests for coefficients module.

This module tests coefficient evaluation, periodicity, CoefficientSpec
validation, ellipticity sampling and the defect L^r estimate.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.homodefect.lib.config import CoefficientConfig, ConfigError
from src.homodefect.services.coefficients import (
    CoefficientSpec,
    CriticalExponent,
    DefectProfile,
    PeriodicProfile,
    ValidationFailed,
    defect_part,
    eval_coefficient,
    evaluate,
    lr_norm_estimate,
    periodic_part,
    spec_from_config,
    validate_ellipticity,
)


def _spec(kind: str, dim: int = 2, **periodic) -> CoefficientSpec:
    return CoefficientSpec(dim=dim, periodic=PeriodicProfile(kind, **periodic), r=4.0)


# Property 1: Periodic part is invariant under integer shifts
@settings(max_examples=100)
@given(
    y=st.lists(st.integers(min_value=-4096, max_value=4096).map(lambda m: m / 1024.0),
               min_size=2, max_size=2),
    shift=st.lists(st.integers(min_value=-50, max_value=50), min_size=2, max_size=2),
    kind=st.sampled_from(["constant", "sin_product", "laminate", "checkerboard"]),
)
def test_property_periodicity(y, shift, kind):
    """
    Property 1: Periodicity

    For dyadic points y and integer shifts n, a_per(y + n) is bit-identical
    to a_per(y).
    """
    spec = _spec(kind, axis=0 if kind == "laminate" else None)
    point = np.array([y], dtype=float)
    moved = point + np.array([shift], dtype=float)
    assert periodic_part(spec, moved)[0] == periodic_part(spec, point)[0]


# Property 2: Defect decays away from its centre
@settings(max_examples=100)
@given(
    near=st.floats(min_value=0.0, max_value=10.0, allow_nan=False),
    step=st.floats(min_value=0.01, max_value=10.0, allow_nan=False),
    kind=st.sampled_from(["gaussian", "power", "bump"]),
)
def test_property_defect_radially_nonincreasing(near, step, kind):
    """
    Property 2: Radial decay

    All defect prototypes are nonincreasing functions of |y - c|.
    """
    spec = CoefficientSpec(dim=1, periodic=PeriodicProfile("constant"),
                           defect=DefectProfile(kind, s=2.0), r=4.0)
    inner = defect_part(spec, np.array([[near]]))[0]
    outer = defect_part(spec, np.array([[near + step]]))[0]
    assert outer <= inner + 1e-15


class TestEvaluate:
    """Tests for coefficient evaluation."""

    def test_doc_example(self, sin_1d):
        assert eval_coefficient(sin_1d, [0.25]) == 3.0

    def test_sum_of_parts(self, gaussian_1d):
        y = np.linspace(-3.0, 3.0, 41)[:, None]
        assert np.array_equal(evaluate(gaussian_1d, y), periodic_part(gaussian_1d, y) + defect_part(gaussian_1d, y))

    def test_gaussian_peak(self, gaussian_1d):
        assert defect_part(gaussian_1d, np.array([[0.0]]))[0] == 1.0

    def test_power_profile(self, power_1d):
        value = defect_part(power_1d, np.array([[3.0]]))[0]
        assert value == pytest.approx(4.0 ** -0.55)

    def test_bump_has_compact_support(self):
        spec = CoefficientSpec(dim=2, periodic=PeriodicProfile("constant"),
                               defect=DefectProfile("bump", radius=0.5), r=4.0)
        assert defect_part(spec, np.array([[0.6, 0.0]]))[0] == 0.0
        assert defect_part(spec, np.array([[0.0, 0.0]]))[0] == pytest.approx(1.0)

    def test_off_centre_defect(self):
        spec = CoefficientSpec(dim=1, periodic=PeriodicProfile("constant"),
                               defect=DefectProfile("gaussian", center=(1.5,)), r=4.0)
        assert defect_part(spec, np.array([[1.5]]))[0] == 1.0

    def test_laminate_depends_on_one_axis(self, laminate_2d):
        a = periodic_part(laminate_2d, np.array([[0.25, 0.0], [0.25, 0.7]]))
        assert a[0] == a[1] == 3.0

    def test_checkerboard_phases(self):
        spec = _spec("checkerboard", low=1.0, high=4.0, sharpness=40.0)
        values = periodic_part(spec, np.array([[0.25, 0.25], [0.75, 0.25]]))
        assert values[0] == pytest.approx(4.0, abs=1e-6)
        assert values[1] == pytest.approx(1.0, abs=1e-6)


class TestSpecValidation:
    """Tests for CoefficientSpec validation."""

    def test_critical_exponent(self):
        with pytest.raises(CriticalExponent):
            CoefficientSpec(dim=2, periodic=PeriodicProfile("constant"), r=2.0)

    def test_critical_exponent_message(self):
        with pytest.raises(CriticalExponent, match="critical"):
            CoefficientSpec(dim=3, periodic=PeriodicProfile("constant"), r=3.0)

    @pytest.mark.parametrize("r", [1.0, 0.5, math.inf, math.nan])
    def test_exponent_out_of_range(self, r):
        with pytest.raises(ConfigError):
            CoefficientSpec(dim=1, periodic=PeriodicProfile("constant"), r=r)

    def test_power_defect_must_be_integrable(self):
        with pytest.raises(ConfigError, match="integrability"):
            CoefficientSpec(dim=1, periodic=PeriodicProfile("constant"),
                            defect=DefectProfile("power", s=0.2), r=4.0)

    def test_non_unit_period(self):
        with pytest.raises(ConfigError):
            CoefficientSpec(dim=1, periodic=PeriodicProfile("constant"), r=4.0, period=(2.0,))

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            PeriodicProfile("hexagonal")

    def test_laminate_axis_outside_dimension(self):
        with pytest.raises(ConfigError):
            CoefficientSpec(dim=1, periodic=PeriodicProfile("laminate", axis=1), r=4.0)


class TestEllipticity:
    """Tests for sampled ellipticity checks."""

    def test_passes_with_report(self, gaussian_1d):
        report = validate_ellipticity(gaussian_1d, 8, 8.0)
        assert report.passed
        assert report.periodic_min == pytest.approx(1.0)
        assert report.periodic_max == pytest.approx(3.0)
        assert report.max > report.periodic_max
        assert report.samples == 129

    def test_periodic_part_checked_first(self, sin_1d):
        spec = CoefficientSpec(dim=1, periodic=sin_1d.periodic, r=4.0, mu=2.0)
        with pytest.raises(ValidationFailed) as excinfo:
            validate_ellipticity(spec, 8, 4.0)
        assert excinfo.value.part == "periodic"
        assert excinfo.value.value == pytest.approx(3.0)

    def test_defect_pushes_above_mu(self):
        spec = CoefficientSpec(dim=1, periodic=PeriodicProfile("sin_product", 2.0, 1.0),
                               defect=DefectProfile("gaussian", amplitude=2.0), r=4.0)
        with pytest.raises(ValidationFailed) as excinfo:
            validate_ellipticity(spec, 8, 4.0)
        assert excinfo.value.part == "full"

    def test_sample_resolution_floor(self, sin_1d):
        with pytest.raises(ConfigError):
            validate_ellipticity(sin_1d, 1, 4.0)


class TestLrNorm:
    """Tests for the defect L^r estimate."""

    def test_zero_without_defect(self, sin_1d):
        assert lr_norm_estimate(sin_1d, 8.0, 16) == 0.0

    def test_nondecreasing_in_radius(self, gaussian_1d):
        values = [lr_norm_estimate(gaussian_1d, R, 16) for R in (2.0, 4.0, 8.0, 16.0)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_gaussian_value(self, gaussian_1d):
        # integral of exp(-4 y^2) over the line is sqrt(pi) / 2
        expected = (math.sqrt(math.pi) / 2.0) ** 0.25
        assert lr_norm_estimate(gaussian_1d, 8.0, 64) == pytest.approx(expected, rel=1e-6)


class TestSpecIdentity:
    """Tests for hashing and configuration mapping."""

    def test_hash_is_stable(self, gaussian_1d):
        assert gaussian_1d.spec_hash() == CoefficientSpec(
            dim=1, periodic=PeriodicProfile("sin_product", 2.0, 1.0),
            defect=DefectProfile("gaussian", amplitude=1.0, width=1.0), r=4.0).spec_hash()

    def test_hash_changes_with_defect(self, gaussian_1d, sin_1d):
        assert gaussian_1d.spec_hash() != sin_1d.spec_hash()

    def test_without_defect(self, gaussian_1d, sin_1d):
        assert gaussian_1d.without_defect().spec_hash() == sin_1d.spec_hash()

    def test_spec_from_config(self):
        config = CoefficientConfig.model_validate({
            "dim": 1,
            "periodic": {"kind": "sin_product", "base": 2.0, "amp": 1.0},
            "defect": {"kind": "power", "s": 0.55},
            "r": 2.0,
        })
        spec = spec_from_config(config)
        assert spec.defect.kind == "power"
        assert spec.has_defect
        assert np.array_equal(spec.center, [0.0])
