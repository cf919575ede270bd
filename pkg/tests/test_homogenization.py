"""Property-based and unit tests for homogenization module.

This module tests the homogenized tensor against closed forms, the defect
invariance check, the flux residual M_k and the antisymmetric potential B_k.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.homodefect.lib.config import ConfigError
from src.homodefect.services.coefficients import CoefficientSpec, PeriodicProfile
from src.homodefect.services.correctors import DegenerateOscillation, build_corrector_set
from src.homodefect.services.homogenization import (
    defect_invariance_gaps,
    flux_residual,
    homogenized_tensor,
    potential_residual,
    potential_sublinearity,
    potential_values,
    solve_potential,
)

SQRT3 = math.sqrt(3.0)


def _tensor(spec, resolution):
    cset = build_corrector_set(spec, resolution, 16, 8.0)
    return cset, homogenized_tensor(spec, cset.periodic)


@pytest.fixture(scope="module")
def sin_2d_setup():
    spec = CoefficientSpec(dim=2, periodic=PeriodicProfile("sin_product", 2.0, 1.0), r=4.0)
    cset, tensor = _tensor(spec, 32)
    return spec, cset, tensor


# Property 1: The homogenized tensor is coercive with constant 1/mu
@settings(max_examples=100, deadline=None)
@given(xi=st.lists(st.floats(min_value=-10.0, max_value=10.0, allow_nan=False), min_size=2, max_size=2))
def test_property_tensor_coercive(sin_2d_setup, xi):
    """
    Property 1: Coercivity

    For any direction xi, <a* xi, xi> >= |xi|^2 / mu.
    """
    spec, _, tensor = sin_2d_setup
    xi = np.asarray(xi)
    assert xi @ tensor.matrix @ xi >= (xi @ xi) / spec.mu - 1e-12


class TestHomogenizedTensor:
    """Tests for a* and its certificates."""

    def test_constant_coefficient(self, constant_2d):
        _, tensor = _tensor(constant_2d, 16)
        assert np.allclose(tensor.matrix, 3.0 * np.eye(2), atol=1e-12)

    def test_harmonic_mean_in_one_dimension(self, sin_1d):
        _, tensor = _tensor(sin_1d, 256)
        assert tensor.matrix[0, 0] == pytest.approx(SQRT3, abs=1e-4)

    def test_laminate_closed_form(self, laminate_2d):
        _, tensor = _tensor(laminate_2d, 64)
        assert np.allclose(tensor.matrix, np.diag([SQRT3, 2.0]), atol=1e-3)

    def test_symmetry_certificate(self, sin_2d_setup):
        _, _, tensor = sin_2d_setup
        assert tensor.asymmetry < 1e-8
        assert np.array_equal(tensor.matrix, tensor.matrix.T)

    def test_spectrum_inside_ellipticity_range(self, sin_2d_setup):
        spec, _, tensor = sin_2d_setup
        assert tensor.elliptic
        assert 1.0 / spec.mu <= min(tensor.eigenvalues) <= max(tensor.eigenvalues) <= spec.mu

    def test_resolution_refinement(self, sin_2d):
        _, coarse = _tensor(sin_2d, 16)
        _, fine = _tensor(sin_2d, 32)
        assert np.max(np.abs(coarse.matrix - fine.matrix)) < 2e-2

    def test_wrong_number_of_correctors(self, sin_2d_setup):
        spec, cset, _ = sin_2d_setup
        with pytest.raises(ConfigError):
            homogenized_tensor(spec, cset.periodic[:1])

    def test_to_dict(self, sin_2d_setup):
        _, _, tensor = sin_2d_setup
        payload = tensor.to_dict()
        assert payload["cell_resolution"] == 32
        assert len(payload["a_star"]) == 2


class TestDefectInvarianceGaps:
    """Tests for the oversampled defect invariance check."""

    def test_discrepancy_decays(self, gaussian_1d):
        gaps = defect_invariance_gaps(gaussian_1d, [8.0, 16.0, 32.0], cell_resolution=32, box_resolution=16)
        assert all(b <= 1.1 * a for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] <= 0.02

    def test_no_defect_gives_zero(self, sin_1d):
        assert defect_invariance_gaps(sin_1d, [4.0, 8.0, 16.0], cell_resolution=32, box_resolution=8) == [0.0] * 3

    def test_needs_three_radii(self, gaussian_1d):
        with pytest.raises(ConfigError):
            defect_invariance_gaps(gaussian_1d, [8.0, 16.0])


class TestFluxResidual:
    """Tests for M_k."""

    def test_one_dimensional_flux_is_constant(self, sin_1d):
        cset, tensor = _tensor(sin_1d, 64)
        flux = flux_residual(sin_1d, cset, tensor, 0)
        assert np.max(np.abs(flux.periodic[0].data)) < 1e-9

    def test_constant_coefficient_vanishes(self, constant_2d):
        cset, tensor = _tensor(constant_2d, 16)
        for k in range(2):
            flux = flux_residual(constant_2d, cset, tensor, k)
            assert all(np.all(m.data == 0.0) for m in flux.periodic)

    def test_staggered_residual_is_divergence_free(self, sin_2d_setup):
        spec, cset, tensor = sin_2d_setup
        for k in range(2):
            assert flux_residual(spec, cset, tensor, k).divergence_max < 1e-7

    def test_staggered_fields_sit_on_faces(self, sin_2d_setup):
        spec, cset, tensor = sin_2d_setup
        flux = flux_residual(spec, cset, tensor, 0)
        assert flux.periodic[0].grid.origin == (0.5 / 32, 0.0)
        assert flux.periodic[1].grid.origin == (0.0, 0.5 / 32)

    def test_nodal_divergence_second_order(self, sin_2d):
        errors = []
        for resolution in (32, 64):
            cset, tensor = _tensor(sin_2d, resolution)
            errors.append(flux_residual(sin_2d, cset, tensor, 0, staggered=False).divergence_max)
        assert errors[0] / errors[1] >= 1.8

    def test_defect_part_on_box(self, gaussian_2d):
        cset = build_corrector_set(gaussian_2d, 16, 16, 4.0)
        tensor = homogenized_tensor(gaussian_2d, cset.periodic)
        flux = flux_residual(gaussian_2d, cset, tensor, 0)
        assert flux.defect is not None
        assert flux.defect[0].grid.extents == (128, 129)
        assert flux.divergence_max < 1e-7


class TestPotential:
    """Tests for the antisymmetric potential B_k."""

    def test_divergence_reproduces_flux_residual(self, sin_2d_setup):
        spec, cset, tensor = sin_2d_setup
        for k in range(2):
            flux = flux_residual(spec, cset, tensor, k)
            potential = solve_potential(flux)
            assert potential_residual(potential, flux) < 1e-6

    @pytest.mark.slow
    def test_fine_cell_potential(self, sin_2d):
        cset, tensor = _tensor(sin_2d, 256)
        for k in range(2):
            flux = flux_residual(sin_2d, cset, tensor, k)
            assert potential_residual(solve_potential(flux), flux) < 1e-6

    def test_antisymmetry(self, sin_2d_setup):
        spec, cset, tensor = sin_2d_setup
        potential = solve_potential(flux_residual(spec, cset, tensor, 0))
        assert np.array_equal(potential.component(1, 0).data, -potential.component(0, 1).data)
        assert potential.component(0, 0) is None

    def test_values_are_periodic(self, sin_2d_setup):
        spec, cset, tensor = sin_2d_setup
        potential = solve_potential(flux_residual(spec, cset, tensor, 1))
        points = np.array([[0.3, 0.1], [2.3, -0.9]])
        values = potential_values(potential, 0, 1, points)
        assert values[0] == pytest.approx(values[1], abs=1e-12)
        assert potential_values(potential, 1, 1, points).tolist() == [0.0, 0.0]

    def test_one_dimension_has_no_components(self, sin_1d):
        cset, tensor = _tensor(sin_1d, 32)
        flux = flux_residual(sin_1d, cset, tensor, 0)
        potential = solve_potential(flux)
        assert potential.periodic_upper == {}
        assert potential_residual(potential, flux) == 0.0

    def test_nodal_flux_rejected(self, sin_2d_setup):
        spec, cset, tensor = sin_2d_setup
        with pytest.raises(ConfigError):
            solve_potential(flux_residual(spec, cset, tensor, 0, staggered=False))

    def test_defect_potential_is_built(self, gaussian_2d):
        cset = build_corrector_set(gaussian_2d, 16, 16, 4.0)
        tensor = homogenized_tensor(gaussian_2d, cset.periodic)
        flux = flux_residual(gaussian_2d, cset, tensor, 0)
        potential = solve_potential(flux)
        box = potential.component(0, 1, "defect")
        assert box.grid.extents == (128, 128)
        assert np.isfinite(potential_residual(potential, flux, "defect"))

    def test_periodic_potential_does_not_grow(self, sin_2d):
        cset = build_corrector_set(sin_2d, 32, 8, 8.0)
        tensor = homogenized_tensor(sin_2d, cset.periodic)
        potentials = [solve_potential(flux_residual(sin_2d, cset, tensor, k)) for k in range(2)]
        assert potential_sublinearity(potentials, [1.0, 2.0, 4.0, 8.0], cset) <= 0.05

    def test_constant_coefficient_potential_is_degenerate(self, constant_2d):
        cset = build_corrector_set(constant_2d, 16, 8, 8.0)
        tensor = homogenized_tensor(constant_2d, cset.periodic)
        potentials = [solve_potential(flux_residual(constant_2d, cset, tensor, k)) for k in range(2)]
        with pytest.raises(DegenerateOscillation):
            potential_sublinearity(potentials, [1.0, 2.0, 4.0, 8.0], cset)
