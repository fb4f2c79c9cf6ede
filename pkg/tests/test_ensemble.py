import numpy as np
import pytest

from dyson_lab import (RadialBump, SampleSpec, assemble_matrices,
                       eigenvalue_count_near_zero, error_matrix_D, hermitize,
                       make_profile, resolvent, resolvent_error, sample_matrix,
                       solve_dyson)
from dyson_lab.ensemble import (chiral_pairing_defect, e_minus_trace,
                                ward_residual)


def test_sampling_deterministic(flat64):
    spec = SampleSpec(flat64, "complex_gaussian", seed=77, trial_index=3)
    X1 = sample_matrix(spec)
    X2 = sample_matrix(SampleSpec(flat64, "complex_gaussian", 77, 3))
    assert np.array_equal(X1, X2)
    X3 = sample_matrix(SampleSpec(flat64, "complex_gaussian", 77, 4))
    assert not np.array_equal(X1, X3)


def test_sampling_grand_mean():
    prof = make_profile("flat", 1000)
    total = 0.0 + 0.0j
    trials = 50
    for t in range(trials):
        X = sample_matrix(SampleSpec(prof, "complex_gaussian", 5, t))
        total += X.mean()
    assert abs(total / trials) <= 1e-3


def test_sampling_entry_variance():
    prof = make_profile("flat", 16)
    trials = 10**4
    samples = np.empty(trials, dtype=complex)
    for t in range(trials):
        samples[t] = sample_matrix(SampleSpec(prof, "complex_gaussian", 9, t))[0, 0]
    var = float(np.mean(np.abs(samples) ** 2))
    assert abs(var - 1.0 / 16) <= 0.1 / 16
    # vanishing pseudo-variance distinguishes the complex kind
    pseudo = abs(np.mean(samples**2))
    assert pseudo <= 5.0 / np.sqrt(trials) / 16


def test_sampling_other_kinds(flat64):
    X = sample_matrix(SampleSpec(flat64, "real_gaussian", 3, 0))
    assert np.abs(X.imag).max() == 0.0
    X = sample_matrix(SampleSpec(flat64, "rademacher", 3, 0))
    assert np.allclose(np.abs(X), 1.0 / 8.0)  # |x| = sqrt(1/n) exactly


def test_hermitize_zero_matrix():
    sys = hermitize(np.zeros((8, 8), dtype=complex), 1.0)
    assert np.allclose(np.abs(sys.eigenvalues), 1.0, atol=1e-12)


def test_hermitize_chiral_symmetry(flat64):
    X = sample_matrix(SampleSpec(flat64, "complex_gaussian", 1, 0))
    sys = hermitize(X, 0.7 + 0.3j)
    assert chiral_pairing_defect(sys.eigenvalues) <= 1e-10
    n = sys.n
    em = np.concatenate([np.ones(n), -np.ones(n)])
    assert np.abs(em[:, None] * sys.H * em[None, :] + sys.H).max() == 0.0


def test_hermitize_singular_value_oracle():
    prof = make_profile("flat", 32)
    X = sample_matrix(SampleSpec(prof, "complex_gaussian", 4, 0))
    z = 0.9
    sys = hermitize(X, z)
    smallest = np.abs(sys.eigenvalues).min()
    svd_oracle = np.linalg.svd(X - z * np.eye(32), compute_uv=False).min()
    assert smallest == pytest.approx(svd_oracle, abs=1e-10)


def test_exact_resolvent_identities(flat64):
    X = sample_matrix(SampleSpec(flat64, "complex_gaussian", 2, 0))
    sys = hermitize(X, 1.0)
    G = resolvent(sys, 0.05)
    assert e_minus_trace(G) <= 1e-12
    assert ward_residual(G, 0.05) <= 1e-10


def test_determinant_identity():
    # |det H_z| = |det(X - z)|^2
    prof = make_profile("flat", 64)
    X = sample_matrix(SampleSpec(prof, "complex_gaussian", 6, 0))
    z = 0.4 + 0.2j
    sys = hermitize(X, z)
    _, logdet_h = np.linalg.slogdet(sys.H)
    _, logdet_x = np.linalg.slogdet(X - z * np.eye(64))
    assert logdet_h == pytest.approx(2.0 * logdet_x, rel=1e-8)


def test_resolvent_error_bound(flat256):
    n = 256
    eta = n ** (-0.65)
    sol = solve_dyson(flat256, 1.0, eta)
    mm = assemble_matrices(sol)
    bound = 20.0 / (n * eta)
    hits = 0
    trials = 20
    for t in range(trials):
        X = sample_matrix(SampleSpec(flat256, "complex_gaussian", 8, t))
        rec = resolvent_error(hermitize(X, 1.0), mm, eta)
        assert rec.e_minus_trace <= 1e-12
        if rec.avg_max <= bound:
            hits += 1
    assert hits >= 0.9 * trials


def test_error_matrix_deterministic_hook(flat64):
    # X = 0 makes the defect deterministic: D = SE[G] G, finite entries
    sys = hermitize(np.zeros((64, 64), dtype=complex), 1.0)
    rec = error_matrix_D(sys, np.zeros((64, 64), dtype=complex), 1.0, 0.1, flat64)
    assert np.isfinite(rec.generic_values).all()
    assert np.isfinite(rec.offdiag_gain)


def test_error_matrix_trend_and_gain():
    # averaged defect shrinks with n; off-diagonal averaging gains at the edge
    medians = []
    for n in (128, 256, 512):
        prof = make_profile("flat", n)
        eta = float(n) ** (-0.6)
        vals = []
        for t in range(4):
            X = sample_matrix(SampleSpec(prof, "complex_gaussian", 10, (n << 32) | t))
            rec = error_matrix_D(hermitize(X, 1.0), X, 1.0, eta, prof)
            vals.append(np.median(rec.generic_values))
        medians.append(np.median(vals))
    assert medians[2] < medians[0]

    prof = make_profile("flat", 128)
    eta = 128.0 ** (-0.6)
    gains = []
    for t in range(20):
        X = sample_matrix(SampleSpec(prof, "complex_gaussian", 11, t))
        rec = error_matrix_D(hermitize(X, 1.0), X, 1.0, eta, prof)
        gains.append(rec.offdiag_gain)
    assert np.mean(np.array(gains) < 1.0) >= 0.7


def test_eigenvalue_count_trivial():
    sys = hermitize(np.zeros((16, 16), dtype=complex), 1.0)
    assert eigenvalue_count_near_zero(sys, 0.5) == 0


def test_eigenvalue_count_gap_and_bulk(flat256):
    n = 256
    gap_counts, bulk_counts = [], []
    eta_gap = n ** (-2.0 / 3.0) * n**0.1
    for t in range(5):
        X = sample_matrix(SampleSpec(flat256, "complex_gaussian", 12, t))
        gap_counts.append(eigenvalue_count_near_zero(hermitize(X, np.sqrt(1.5)), eta_gap))
        bulk_counts.append(eigenvalue_count_near_zero(hermitize(X, 0.0), 0.1))
    assert np.median(gap_counts) <= 20
    rho_bulk = solve_dyson(flat256, 0.0, 0.1).rho
    target = 2 * n * 0.1 * rho_bulk
    med = np.median(bulk_counts)
    assert target / 20 <= med <= 20 * target


def test_eigenvalue_count_regime_gate(flat64):
    X = sample_matrix(SampleSpec(flat64, "complex_gaussian", 13, 0))
    sys = hermitize(X, 1.0)
    with pytest.raises(ValueError):
        eigenvalue_count_near_zero(sys, 1e-9)


def test_bump_laplacian_closed_form():
    f = RadialBump(0.3 + 0.2j, 0.7, 2.0)
    xs = np.linspace(-0.6, 1.2, 901)
    Z = xs[None, :] + 1j * xs[:, None]
    h = xs[1] - xs[0]
    F = f(Z)
    fd = (np.roll(F, 1, 0) + np.roll(F, -1, 0) + np.roll(F, 1, 1)
          + np.roll(F, -1, 1) - 4 * F) / h**2
    inner = (np.abs(Z - f.center) < 0.9 * f.radius) | \
            (np.abs(Z - f.center) > 1.1 * f.radius)
    inner[:3, :] = inner[-3:, :] = inner[:, :3] = inner[:, -3:] = False
    assert np.abs((fd - f.laplacian(Z))[inner]).max() <= 1e-2
    # quadrature of |Laplacian| against the closed-form norm
    quad = np.abs(f.laplacian(Z)).sum() * h * h
    assert quad == pytest.approx(f.laplacian_l1(), rel=1e-3)


def test_bump_rescaling():
    f = RadialBump()
    g = f.rescaled(0.5 + 0.5j, 0.25, 256)
    assert g.center == 0.5 + 0.5j
    assert g.radius == pytest.approx(256 ** (-0.25))
    assert g.amplitude == pytest.approx(256 ** 0.5)
    assert g.laplacian_l1() == pytest.approx(f.laplacian_l1() * 256**0.5)
