"""Unit tests for the one-dimensional closed forms."""

import math

import numpy as np
import pytest

from src.homodefect.lib.config import ConfigError
from src.homodefect.lib.grid_fields import Box
from src.homodefect.models import QuadratureProfile
from src.homodefect.services.oracle_1d import (
    Corrector1D,
    cumulative_integral,
    definite_integral,
    exact_astar_1d,
    exact_corrector_1d,
    exact_solution_1d,
    oracle_remainder_norms,
)
from src.homodefect.services.rate_study import fit_slope
from src.homodefect.services.sources import SourceSpec

SQRT3 = math.sqrt(3.0)


class TestQuadrature:
    """Tests for composite Gauss-Legendre integration."""

    def test_polynomial_exact(self):
        assert definite_integral(lambda t: t ** 5, 0.0, 2.0, 0.5) == pytest.approx(64.0 / 6.0, rel=1e-14)

    def test_cumulative_in_input_order(self):
        points = np.array([1.0, 0.0, 0.5])
        values = cumulative_integral(lambda t: np.ones_like(t), points, 0.1)
        assert values == pytest.approx([1.0, 0.0, 0.5], abs=1e-14)

    def test_coarse_panels_are_refined(self):
        points = np.linspace(0.0, 1.0, 5)
        values = cumulative_integral(lambda t: np.cos(40.0 * t), points, 1.0)
        assert values == pytest.approx(np.sin(40.0 * points) / 40.0, abs=1e-11)

    def test_breakpoint_restores_accuracy_at_a_kink(self):
        value = definite_integral(lambda t: np.abs(t - 0.3), 0.0, 1.0, 1.0, breakpoints=(0.3,))
        assert value == pytest.approx(0.29, rel=1e-13)

    def test_unresolved_kink_is_reported(self, caplog):
        with caplog.at_level("WARNING", logger="src.homodefect.services.oracle_1d"):
            value = definite_integral(lambda t: np.abs(t - 0.3), 0.0, 1.0, 1.0)
        assert value == pytest.approx(0.29, rel=1e-4)
        assert "Panel quadrature stopped" in caplog.text

    def test_profile_floor(self):
        with pytest.raises(ValueError):
            QuadratureProfile(panels_per_period=16)


class TestHomogenizedCoefficient:
    """Tests for the harmonic mean."""

    def test_sine_coefficient(self, sin_1d):
        assert exact_astar_1d(sin_1d) == pytest.approx(SQRT3, abs=1e-12)

    def test_constant_coefficient(self, constant_1d):
        assert exact_astar_1d(constant_1d) == pytest.approx(3.0, abs=1e-14)

    def test_defect_does_not_change_a_star(self, sin_1d, gaussian_1d):
        assert exact_astar_1d(gaussian_1d) == exact_astar_1d(sin_1d)

    def test_needs_one_dimension(self, sin_2d):
        with pytest.raises(ConfigError):
            exact_astar_1d(sin_2d)


class TestCorrector1D:
    """Tests for closed-form correctors."""

    def test_periodic_zero_mean(self, sin_1d):
        corrector = Corrector1D.build(sin_1d)
        mean = definite_integral(corrector.periodic, 0.0, 1.0, 1.0 / 64)
        assert abs(mean) < 1e-10

    def test_periodic_is_periodic(self, sin_1d):
        corrector = Corrector1D.build(sin_1d)
        y = np.array([0.1, 0.37, 0.8])
        assert corrector.periodic(y + 3.0) == pytest.approx(corrector.periodic(y), abs=1e-12)

    def test_periodic_derivative(self, sin_1d):
        corrector = Corrector1D.build(sin_1d)
        assert corrector.periodic_derivative(np.array([0.25]))[0] == pytest.approx(SQRT3 / 3.0 - 1.0)

    def test_whole_line_defect_normalised_at_origin(self, gaussian_1d):
        corrector = Corrector1D.build(gaussian_1d)
        assert corrector.defect(np.array([0.0]))[0] == 0.0

    def test_truncated_defect_vanishes_at_ends(self, gaussian_1d):
        corrector = Corrector1D.build(gaussian_1d, 8.0)
        values = corrector.defect(np.array([-8.0, 8.0, 9.5]))
        assert abs(values[0]) < 1e-14
        assert abs(values[1]) < 1e-10
        assert values[2] == 0.0

    def test_truncation_self_convergence(self, gaussian_1d):
        """Truncated derivatives approach the whole-line ones like 1/R."""
        whole = Corrector1D.build(gaussian_1d)
        y = np.linspace(-4.0, 4.0, 801)
        errors = []
        for R in (16.0, 32.0, 64.0):
            truncated = Corrector1D.build(gaussian_1d, R)
            errors.append(np.max(np.abs(truncated.defect_derivative(y) - whole.defect_derivative(y))))
        assert errors[0] / errors[1] >= 1.6
        assert errors[1] / errors[2] >= 1.6

    def test_no_defect(self, sin_1d):
        corrector = Corrector1D.build(sin_1d, 8.0)
        assert np.all(corrector.defect(np.array([0.3, 2.0])) == 0.0)


class TestExactCorrector:
    """Tests for the public closed-form corrector pair."""

    def test_constant_coefficient_has_zero_corrector(self, constant_1d):
        y = np.linspace(-5.0, 5.0, 41)
        periodic, defect = exact_corrector_1d(constant_1d, y)
        assert np.max(np.abs(periodic)) < 1e-12
        assert np.all(defect == 0.0)

    def test_matches_corrector_pieces(self, gaussian_1d):
        y = np.array([-3.2, 0.0, 0.7, 5.5])
        periodic, defect = exact_corrector_1d(gaussian_1d, y, truncation_radius=8.0)
        corrector = Corrector1D.build(gaussian_1d, 8.0)
        assert periodic == pytest.approx(corrector.periodic(y), abs=1e-14)
        assert defect == pytest.approx(corrector.defect(y), abs=1e-14)

    @pytest.mark.slow
    def test_power_defect_grows_like_power_law(self, power_1d):
        """The whole-line defect corrector grows like |y|^(1 - s) for s < 1."""
        y = 2.0 ** np.arange(7, 11)
        _, defect = exact_corrector_1d(power_1d, np.concatenate([y, 4.0 * y]))
        growth = np.abs(defect[4:] - defect[:4])
        slope = np.polyfit(np.log(y), np.log(growth), 1)[0]
        assert slope == pytest.approx(1.0 - 0.55, abs=0.05)


class TestExactSolution:
    """Tests for the exact two-point boundary value solutions."""

    def test_boundary_values(self, gaussian_1d, gaussian_source_1d):
        solution = exact_solution_1d(gaussian_1d, 0.125, gaussian_source_1d)
        assert solution(np.array([-1.0]))[0] == 0.0
        assert abs(solution(np.array([1.0]))[0]) < 1e-10

    def test_homogenized_parabola(self, sin_1d, unit_interval):
        source = SourceSpec("constant", unit_interval)
        solution = exact_solution_1d(sin_1d, 0.125, source)
        x = np.array([-0.5, 0.0, 0.25])
        assert solution.homogenized(x) == pytest.approx((1.0 - x ** 2) / (2.0 * SQRT3), abs=1e-12)

    def test_constant_coefficient_matches_homogenized(self, constant_1d, gaussian_source_1d):
        solution = exact_solution_1d(constant_1d, 0.125, gaussian_source_1d)
        x = np.linspace(-1.0, 1.0, 9)
        assert solution(x) == pytest.approx(solution.homogenized(x), abs=1e-12)

    def test_eps_range(self, sin_1d, gaussian_source_1d):
        with pytest.raises(ConfigError):
            exact_solution_1d(sin_1d, 1.5, gaussian_source_1d)


class TestOracleNorms:
    """Tests for remainder norms from the closed forms."""

    def test_channels(self, gaussian_1d, gaussian_source_1d):
        norms = oracle_remainder_norms(gaussian_1d, 0.125, gaussian_source_1d, p_list=(4.0,))
        assert {"R_L2", "diff_L2", "diff_Linf", "gradR_L2_interior", "gradR_Linf_interior",
                "u_star_L2", "R_L4", "gradR_L4_interior"} <= set(norms.values)

    def test_modes_coincide_without_defect(self, sin_1d, gaussian_source_1d):
        full = oracle_remainder_norms(sin_1d, 0.125, gaussian_source_1d, "full")
        periodic = oracle_remainder_norms(sin_1d, 0.125, gaussian_source_1d, "periodic")
        assert full.to_dict() == periodic.to_dict()

    def test_unknown_mode(self, sin_1d, gaussian_source_1d):
        with pytest.raises(ConfigError):
            oracle_remainder_norms(sin_1d, 0.125, gaussian_source_1d, "none")

    def test_periodic_baseline_rate(self, sin_1d, gaussian_source_1d):
        eps = [2.0 ** -k for k in range(3, 8)]
        values = [oracle_remainder_norms(sin_1d, e, gaussian_source_1d)["R_L2"] for e in eps]
        assert fit_slope(eps, values).slope >= 0.9

    def test_interior_box(self, sin_1d, gaussian_source_1d):
        narrow = oracle_remainder_norms(sin_1d, 0.125, gaussian_source_1d,
                                        interior=Box((-0.25,), (0.25,)))
        wide = oracle_remainder_norms(sin_1d, 0.125, gaussian_source_1d,
                                      interior=Box((-0.75,), (0.75,)))
        assert narrow["gradR_L2_interior"] <= wide["gradR_L2_interior"]
        assert narrow["R_L2"] == wide["R_L2"]
