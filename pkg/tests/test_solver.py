import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyson_lab import (RegimeError, SolverOptions, assemble_matrices,
                       eta_derivative_check, make_profile, mde_residual,
                       solve_dyson, solve_dyson_path, solve_mean_imag_grid)
from dyson_lab.solver import scaling_envelope_reference

from conftest import flat_v_oracle, operator_norm

GOLDEN_BULK_V = (np.sqrt(5.0) - 1.0) / 2.0  # root of v^2 + v - 1 at z = 0, eta = 1


def test_flat_bulk_golden_value(flat8):
    sol = solve_dyson(flat8, 0.0, 1.0)
    assert np.allclose(sol.v1, GOLDEN_BULK_V, atol=1e-11)
    assert np.allclose(sol.v2, GOLDEN_BULK_V, atol=1e-11)


def test_flat_edge_cubic_oracle(flat8):
    sol = solve_dyson(flat8, 1.0, 1e-6)
    v_ref = flat_v_oracle(1.0, 1e-6)
    assert v_ref == pytest.approx(9.9997e-3, rel=1e-4)
    assert np.abs(sol.v1 - v_ref).max() <= 1e-10


def test_flat_outside_cubic_oracle(flat8):
    sol = solve_dyson(flat8, np.sqrt(2.0), 1e-6)
    v_ref = flat_v_oracle(2.0, 1e-6)
    assert v_ref == pytest.approx(1.0e-6, rel=1e-4)
    assert np.abs(sol.v1 - v_ref).max() <= 1e-10


def test_unitarity_identity(flat64, two_block64):
    # u = v1 v2 + |z|^2 u^2 componentwise
    for prof in (flat64, two_block64):
        for z2, eta in ((0.5, 1e-4), (1.0, 1e-6), (1.5, 1e-3)):
            sol = solve_dyson(prof, np.sqrt(z2), eta)
            defect = np.abs(sol.u - sol.v1 * sol.v2 - z2 * sol.u**2).max()
            assert defect <= 1e-8


@settings(max_examples=8, deadline=None)
@given(r=st.floats(0.2, 1.4), eta=st.sampled_from([1e-2, 1e-5]))
def test_rotation_invariance_random(r, eta):
    prof = make_profile("two_block", 16, {"a": 0.5, "b": 1.5, "c": 1.0})
    base = solve_dyson(prof, r, eta)
    for theta in (np.pi / 3, 1.7):
        rot = solve_dyson(prof, r * np.exp(1j * theta), eta)
        assert np.abs(rot.v1 - base.v1).max() <= 1e-12
        assert np.abs(rot.v2 - base.v2).max() <= 1e-12
        assert np.abs(rot.u - base.u).max() <= 1e-12


def test_scaling_envelope_grid(flat8):
    for z2 in (0.5, 0.9, 1.0, 1.1, 2.0):
        for eta in (1e-2, 1e-4, 1e-6):
            sol = solve_dyson(flat8, np.sqrt(z2), eta)
            ref = scaling_envelope_reference(np.sqrt(z2), eta)
            ratio = sol.rho / ref
            assert 1 / 20 <= ratio <= 20, (z2, eta, ratio)
            for vec in (sol.v1, sol.v2):
                comp = vec / sol.rho
                assert comp.min() >= 1 / 20 and comp.max() <= 20
            assert sol.u.min() >= 1 / 20 and sol.u.max() <= 20


def test_continuation_continuity(flat8):
    etas = [1.0 * 0.7**k for k in range(20)]
    sols = solve_dyson_path(flat8, 1.0, etas)
    means = np.array([s.mean_imag for s in sols])
    for sol in sols:
        assert sol.residual <= 1e-12
    jumps = np.abs(np.diff(means)) / means[:-1]
    assert jumps.max() <= 0.5


def test_eta_domain_rejected(flat8):
    with pytest.raises(RegimeError):
        solve_dyson(flat8, 0.0, 0.0)
    with pytest.raises(RegimeError):
        solve_dyson(flat8, 0.0, -1.0)
    with pytest.raises(RegimeError):
        solve_dyson(flat8, 0.0, 1e-13)


def test_matrix_structure(two_block64):
    sol = solve_dyson(two_block64, 0.7 + 0.2j, 1e-3)
    mm = assemble_matrices(sol)
    n = sol.n
    imag_part = (mm.M - mm.M.conj().T) / 2j
    real_part = (mm.M + mm.M.conj().T) / 2.0
    # the matrix imaginary part is the positive diagonal (v1, v2)
    expected = np.diag(np.concatenate([sol.v1, sol.v2]))
    assert np.abs(imag_part - expected).max() <= 1e-14
    # the matrix real part is supported on the off-diagonal blocks
    assert np.abs(real_part[:n, :n]).max() <= 1e-14
    assert np.abs(real_part[n:, n:]).max() <= 1e-14
    # trace against diag(I, -I) cancels between the two blocks
    em = np.concatenate([np.ones(n), -np.ones(n)])
    assert abs((em * np.diagonal(mm.M)).sum() / (2 * n)) <= 1e-10


def test_balanced_factorization(flat64, two_block64):
    for prof in (flat64, two_block64):
        sol = solve_dyson(prof, 0.9, 1e-5)
        mm = assemble_matrices(sol)
        assert np.abs(mm.M - mm.Q @ mm.U @ mm.Q).max() <= 1e-8
        eye = np.eye(2 * sol.n)
        assert operator_norm(mm.U @ mm.U.conj().T - eye) <= 1e-8


def test_flat_bulk_matrix_is_scalar(flat8):
    sol = solve_dyson(flat8, 0.0, 1.0)
    mm = assemble_matrices(sol)
    assert np.abs(mm.M - 1j * GOLDEN_BULK_V * np.eye(16)).max() <= 1e-11


def test_mde_residual_bulk(flat8):
    sol = solve_dyson(flat8, 0.0, 1.0)
    assert mde_residual(assemble_matrices(sol), flat8, 0.0, 1.0) <= 1e-10


def test_mde_residual_sensitivity(flat8):
    sol = solve_dyson(flat8, 0.0, 1.0)
    rng = np.random.default_rng(0)
    bumped = sol.v1 * (1.0 + 1e-3 * rng.uniform(0.5, 1.0, sol.n))
    perturbed = type(sol)(z=sol.z, eta=sol.eta, v1=bumped, v2=sol.v2, u=sol.u,
                          rho=sol.rho, iterations=sol.iterations,
                          residual=sol.residual)
    res = mde_residual(assemble_matrices(perturbed), flat8, 0.0, 1.0)
    assert res >= 1e-4


def test_mde_residual_edge(flat8):
    sol = solve_dyson(flat8, 1.0, 1e-6)
    assert mde_residual(assemble_matrices(sol), flat8, 1.0, 1e-6) <= 1e-8


def test_eta_derivative_edge_bound(flat64):
    z = np.sqrt(0.99)
    check = eta_derivative_check(flat64, z, 1e-8)
    assert check.fd_norm <= check.bound
    check2 = eta_derivative_check(flat64, 1.0, 1e-6)
    assert 1e-3 <= check2.ratio <= 1.0


def test_eta_derivative_regime_gate(flat8):
    with pytest.raises(RegimeError):
        eta_derivative_check(flat8, 0.0, 1.0)
    with pytest.raises(RegimeError):
        eta_derivative_check(flat8, 1.0, 5e-13)


def test_mean_imag_grid_matches_pointwise(two_block64):
    etas = np.geomspace(10.0, 1e-6, 25)
    radii = np.array([0.0, 0.8, 1.0, 1.3])
    grid = solve_mean_imag_grid(two_block64, radii, etas)
    for i, r in enumerate(radii):
        sols = solve_dyson_path(two_block64, complex(r), etas)
        direct = np.array([s.mean_imag for s in sols])
        assert np.abs(grid[i] - direct).max() <= 1e-9


def test_solver_options_tolerance(flat8):
    loose = solve_dyson(flat8, 1.0, 1e-4, SolverOptions(tol=1e-8))
    assert loose.residual <= 1e-8
    tight = solve_dyson(flat8, 1.0, 1e-4, SolverOptions(tol=1e-13))
    assert tight.residual <= 1e-13
