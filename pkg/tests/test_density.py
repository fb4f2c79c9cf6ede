import numpy as np
import pytest

from dyson_lab import (ProfileError, fluctuation_scale, log_potential,
                       make_profile, scale_table, sigma_radial, solve_dyson)


@pytest.fixture(scope="module")
def flat_density(flat64):
    # the flat equation is scalar, so any dimension gives the same curve
    return sigma_radial(make_profile("flat", 32))


@pytest.fixture(scope="module")
def two_block_density(two_block64):
    return sigma_radial(two_block64)


def test_outside_potential_difference():
    # outside the support L is the potential of total mass one at the
    # origin: L(3) - L(2) = log(3/2) / (2 pi)
    prof = make_profile("flat", 16)
    diff = log_potential(prof, 3.0) - log_potential(prof, 2.0)
    assert abs(diff - np.log(1.5) / (2 * np.pi)) <= 2e-3


def test_potential_against_density_quadrature(flat_density):
    # independent oracle: from the radial density itself, the angular
    # average of log|z - w| is log(max(|z|, |w|)), so
    # L(R) = integral of sigma(rho) * log(max(rho, R)) * 2 pi rho d rho / (2 pi)
    prof = make_profile("flat", 16)
    for R in (0.5, 1.25, 2.0):
        r = flat_density.radii
        integrand = flat_density.sigma_values * r * np.log(np.maximum(r, R))
        oracle = float(np.trapezoid(integrand, r))
        assert abs(log_potential(prof, R) - oracle) <= 2e-3


def test_potential_finite_at_origin():
    prof = make_profile("flat", 16)
    value = log_potential(prof, 0.0)
    assert np.isfinite(value)
    # closed form for the uniform unit disk: -1/(4 pi)
    assert value == pytest.approx(-1.0 / (4.0 * np.pi), abs=2e-4)


def test_rotational_symmetry_of_solution(flat8):
    # the potential depends on z only through |z|: the underlying solver
    # output is invariant under rotation at machine precision
    sol_a = solve_dyson(flat8, 1.3, 1e-4)
    sol_b = solve_dyson(flat8, 1.3 * np.exp(1j), 1e-4)
    assert np.abs(sol_a.v1 - sol_b.v1).max() <= 1e-10


def test_flat_density_values(flat_density):
    prof = flat_density
    assert prof.sigma_values[0] == pytest.approx(1.0 / np.pi, abs=2e-3)
    assert abs(prof.total_mass - 1.0) <= 5e-3
    outside = prof.radii >= 1.05
    assert prof.sigma_values[outside].max() <= 1e-4
    assert prof.sigma_min_unclipped >= -1e-6
    assert prof.support_radius_estimate == pytest.approx(1.0, abs=0.02)


def test_density_floor_on_disk(flat_density, two_block_density):
    for prof in (flat_density, two_block_density):
        inside = prof.radii <= 0.9
        assert prof.sigma_values[inside].min() >= 0.05
        assert abs(prof.total_mass - 1.0) <= 5e-3


def test_potential_slope_outside(flat_density):
    # unit total mass: d L / d r times 2 pi r tends to one
    r = flat_density.radii
    h = r[1] - r[0]
    i = int(np.searchsorted(r, 1.4))
    slope = (flat_density.L_values[i + 1] - flat_density.L_values[i - 1]) / (2 * h)
    assert slope * 2 * np.pi * r[i] == pytest.approx(1.0, rel=0.1)
    # and L increases monotonically beyond the support edge
    tail = flat_density.L_values[r >= 1.05]
    assert np.all(np.diff(tail) > 0)


def test_density_requires_normalized_profile():
    with pytest.raises(ProfileError):
        sigma_radial(make_profile("flat", 8, {"scale": 2.0}))


def test_density_grid_validation(flat64):
    with pytest.raises(ValueError):
        sigma_radial(flat64, grid=np.linspace(0.0, 1.5, 26))  # spacing 0.06
    with pytest.raises(ValueError):
        sigma_radial(flat64, grid=np.linspace(0.1, 1.5, 200))


def test_fluctuation_scale_reference_points():
    assert fluctuation_scale(0.5, 10**4) == pytest.approx(np.sqrt(2.0) * 1e-4, rel=1e-12)
    assert fluctuation_scale(1.0, 10**4) == pytest.approx(1e-3, rel=1e-12)
    assert fluctuation_scale(3.0, 10**6) == pytest.approx(1e-4, rel=1e-12)


def test_fluctuation_scale_branch_continuity():
    for n in (10**3, 10**4, 10**6):
        w = n ** (-0.5)
        for z2 in (1.0 - w, 1.0 + w, 2.0):
            below = fluctuation_scale(z2 * (1 - 1e-9), n)
            above = fluctuation_scale(z2 * (1 + 1e-9), n)
            assert 0.5 <= below / above <= 2.0


def test_scale_table_defaults():
    table = scale_table(0.5, 10**4)
    assert table.eta_f == fluctuation_scale(0.5, 10**4)
    assert table.xi1_tilde == pytest.approx(table.xi2_tilde**2, rel=1e-12)
