"""Spectral analysis of the linear stability map of the matrix equation.

The stability map sends a 2n-by-2n matrix R to R - M SE[R] M, where SE is
the self-energy map (it reads only the diagonal of R).  Because SE factors
through the diagonal, every eigenvalue of the stability map other than 1
is determined by a plain 2n-by-2n eigenproblem: with W the entrywise
product W_ab = M_ab * M_ba and S_blk = [[0, S], [S^T, 0]],

    beta != 1 is an eigenvalue of the stability map
        iff  1 - beta is an eigenvalue of A = W S_blk,

and the right eigen-matrix is recovered from the A-eigenvector d as
B = M diag(S_blk d) M / (1 - beta).  Left eigen-matrices are exactly
diagonal, diag(dhat) with A^* dhat = conj(1 - beta) dhat, because the
self-energy map is self-adjoint for the normalized trace pairing.

Near the spectral edge the map has exactly two small eigenvalues.  The
one whose eigen-matrix projects strongly onto E_- = diag(I, -I) is
labeled beta_star; the other, beta, is the direction that controls the
resolvent fluctuation analysis.  Both eigen-matrices are rescaled by the
least-squares scalar that aligns them with their leading-order
expressions in M, which fixes the otherwise arbitrary normalization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .calibration import CALIBRATION
from .errors import NumericalError, RegimeError
from .profiles import VarianceProfile
from .solver import (DysonSolution, MdeMatrices, block_variance_matrix,
                     imag_inverse_diagonal, self_energy_diagonal)

#: Degeneracy guard: |beta - beta_star| below this multiple of rho^2
#: makes the two unstable directions numerically indistinguishable.
DEGENERACY_FACTOR = 1e-3

#: Condition number beyond which the reduced linear solve is reported.
ILL_CONDITION_LIMIT = 1e12


def trace_pair(x: np.ndarray, y: np.ndarray) -> complex:
    """Normalized Hilbert-Schmidt pairing Tr(x^* y) / (2n)."""
    return complex(np.vdot(x, y) / x.shape[0])


def e_minus(n: int) -> np.ndarray:
    return np.diag(np.concatenate([np.ones(n), -np.ones(n)])).astype(complex)


def e_minus_vector(n: int) -> np.ndarray:
    return np.concatenate([np.ones(n), -np.ones(n)])


def apply_stability(M: np.ndarray, S: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Apply R -> R - M SE[R] M."""
    e = self_energy_diagonal(S, R)
    return R - (M * e[None, :]) @ M


def apply_stability_adjoint(M: np.ndarray, S: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Apply the adjoint map R -> R - SE[M^* R M^*]."""
    Mh = M.conj().T
    inner = Mh @ R @ Mh
    out = R.copy().astype(complex)
    idx = np.arange(R.shape[0])
    out[idx, idx] -= self_energy_diagonal(S, inner)
    return out


def reduce_operator(matrices: MdeMatrices, profile: VarianceProfile) -> np.ndarray:
    """Reduced 2n-by-2n matrix A = W S_blk carrying the nontrivial spectrum.

    Built blockwise from the diagonals of M: W has -v1^2, -v2^2 on its
    diagonal blocks and |z|^2 u^2 on the off-diagonal ones.
    """
    M = matrices.M
    n = matrices.n
    idx = np.arange(n)
    v1 = M[idx, idx].imag
    v2 = M[n + idx, n + idx].imag
    w_off = (M[idx, n + idx] * M[n + idx, idx]).real
    S = profile.entries
    A = np.empty((2 * n, 2 * n))
    A[:n, :n] = w_off[:, None] * S.T
    A[:n, n:] = -(v1**2)[:, None] * S
    A[n:, :n] = -(v2**2)[:, None] * S.T
    A[n:, n:] = w_off[:, None] * S
    return A


def right_matrix_from_vector(M: np.ndarray, S: np.ndarray, d: np.ndarray,
                             mu: complex) -> np.ndarray:
    """Reconstruct the right eigen-matrix of the stability map from an
    A-eigenvector d with A d = mu d."""
    e = block_variance_matrix(S) @ d
    return (M * e[None, :]) @ M / mu


@dataclass(frozen=True)
class _Reduction:
    """Top-two eigendata of the reduced matrix, kept for resolvent solves."""

    mu: np.ndarray            # the two eigenvalues of A closest to 1
    right: np.ndarray         # (2n, 2) right eigenvectors
    left: np.ndarray          # (2n, 2) left eigenvectors
    all_mu: np.ndarray        # full spectrum of A


@dataclass(frozen=True)
class StabilitySpectrum:
    """The two small eigenvalues of the stability map with eigen-matrices.

    Eigen-matrices are aligned against their displayed expansions in M:
    B ~ Im(M)/rho - (2i/rho) Im(M) Im(M^{-1}) Re(M),
    B_star ~ E_- Im(M)/rho, B_hat ~ -Im(M^{-1})/rho and
    B_hat_star ~ -E_- Im(M^{-1})/rho (see `leading_forms`).
    """

    beta: complex
    beta_star: complex
    B: np.ndarray
    B_star: np.ndarray
    B_hat: np.ndarray
    B_hat_star: np.ndarray
    overlap_B: complex
    overlap_B_star: complex
    psi: float
    e_minus_B: complex
    e_minus_B_star: complex
    gap_third: float
    regime: bool
    degenerate: bool
    rho: float
    eta: float
    z: complex
    reduction: _Reduction = field(repr=False)


def _align(candidate: np.ndarray, target: np.ndarray) -> np.ndarray:
    scale = trace_pair(candidate, target) / trace_pair(candidate, candidate)
    return scale * candidate


def stability_spectrum(matrices: MdeMatrices, sol: DysonSolution,
                       profile: VarianceProfile,
                       rho_star: float | None = None) -> StabilitySpectrum:
    """Eigenvalues and eigen-matrices of the two unstable directions.

    Outside the edge regime (rho + eta/rho > rho_star) the eigendata is
    still returned, flagged with ``regime=False``; the asymptotic
    envelopes are only meaningful when the flag is set.
    """
    rho_star = CALIBRATION.rho_star if rho_star is None else rho_star
    M = matrices.M
    S = profile.entries
    n = matrices.n
    rho = sol.rho
    A = reduce_operator(matrices, profile)
    mu, vl, vr = scipy.linalg.eig(A, left=True, right=True)
    order = np.argsort(np.abs(1.0 - mu))
    top = order[:2]
    gap_third = float(np.abs(1.0 - mu[order[2]]))

    em = e_minus_vector(n)
    candidates = []
    for k in top:
        d = vr[:, k]
        B = right_matrix_from_vector(M, S, d, mu[k])
        B /= np.sqrt(trace_pair(B, B).real)
        dhat = vl[:, k]
        Bhat = np.diag(dhat).astype(complex)
        Bhat /= np.sqrt(trace_pair(Bhat, Bhat).real)
        e_proj = abs(complex((em * np.diagonal(B)).sum() / (2 * n)))
        candidates.append({"mu": mu[k], "B": B, "Bhat": Bhat, "e_proj": e_proj})

    star = int(candidates[1]["e_proj"] > candidates[0]["e_proj"])
    plain = 1 - star
    beta = 1.0 - candidates[plain]["mu"]
    beta_star = 1.0 - candidates[star]["mu"]
    degenerate = bool(abs(beta - beta_star) < DEGENERACY_FACTOR * rho**2)

    em_mat = e_minus(n)
    lead = leading_forms(sol)
    B = _align(candidates[plain]["B"], lead["B"])
    B_star = _align(candidates[star]["B"], lead["B_star"])
    B_hat = _align(candidates[plain]["Bhat"], lead["B_hat"])
    B_hat_star = _align(candidates[star]["Bhat"], lead["B_hat_star"])

    psi = float(np.mean((sol.v1 * sol.v2 / sol.u) ** 2) / rho**4)
    reduction = _Reduction(
        mu=np.array([candidates[plain]["mu"], candidates[star]["mu"]]),
        right=np.column_stack([vr[:, top[plain]], vr[:, top[star]]]),
        left=np.column_stack([vl[:, top[plain]], vl[:, top[star]]]),
        all_mu=mu,
    )
    return StabilitySpectrum(
        beta=complex(beta), beta_star=complex(beta_star),
        B=B, B_star=B_star, B_hat=B_hat, B_hat_star=B_hat_star,
        overlap_B=trace_pair(B_hat, B),
        overlap_B_star=trace_pair(B_hat_star, B_star),
        psi=psi,
        e_minus_B=trace_pair(em_mat, B),
        e_minus_B_star=trace_pair(em_mat, B_star),
        gap_third=gap_third,
        regime=bool(rho + sol.eta / rho <= rho_star),
        degenerate=degenerate,
        rho=rho, eta=sol.eta, z=sol.z,
        reduction=reduction,
    )


@dataclass(frozen=True)
class FGapRecord:
    top: float
    gap_rel: float
    symmetric: bool
    eigenvalues: np.ndarray = field(repr=False)


def f_operator_gap(sol: DysonSolution, profile: VarianceProfile) -> FGapRecord:
    """Spectrum of the saturated self-energy restricted to diagonals.

    The restriction is the symmetric matrix [[0, F], [F^T, 0]] with
    F = diag(sqrt(u v1 / v2)) S diag(sqrt(u v2 / v1)).  Its top eigenvalue
    sits below 1 by a relative gap comparable to eta/rho, and the
    spectrum is symmetric about zero by the block structure.
    """
    left = np.sqrt(sol.u * sol.v1 / sol.v2)
    right = np.sqrt(sol.u * sol.v2 / sol.v1)
    F = left[:, None] * profile.entries * right[None, :]
    n = sol.n
    big = np.zeros((2 * n, 2 * n))
    big[:n, n:] = F
    big[n:, :n] = F.T
    eigs = np.linalg.eigvalsh(big)
    top = float(eigs[-1])
    symmetric = bool(np.abs(eigs + eigs[::-1]).max() <= 1e-10)
    return FGapRecord(top=top, gap_rel=1.0 - top, symmetric=symmetric,
                      eigenvalues=eigs)


def _project_off_top(reduction: _Reduction, d: np.ndarray) -> np.ndarray:
    out = d.astype(complex).copy()
    for k in range(2):
        r = reduction.right[:, k]
        l = reduction.left[:, k]
        out -= (np.vdot(l, out) / np.vdot(l, r)) * r
    return out


def project_off_unstable(spectrum: StabilitySpectrum, T: np.ndarray) -> np.ndarray:
    """Spectral projection of T onto the complement of the two unstable
    directions."""
    coeff = trace_pair(spectrum.B_hat, T) / spectrum.overlap_B
    coeff_star = trace_pair(spectrum.B_hat_star, T) / spectrum.overlap_B_star
    return T - coeff * spectrum.B - coeff_star * spectrum.B_star


def apply_Binv_Q(spectrum: StabilitySpectrum, matrices: MdeMatrices,
                 profile: VarianceProfile, T: np.ndarray,
                 defect_tol: float = 1e-8) -> np.ndarray:
    """Solve the stability map on the stable subspace: X with map(X) = Q[T].

    Q projects off the two unstable directions.  The solve reduces to the
    diagonal vector representative: project diag(Q[T]) off the two top
    eigenvectors of the reduced matrix, solve (I - A) d = rhs there, and
    assemble X = Q[T] + M diag(S_blk d) M.  The defect of the assembled
    solution is verified against ``defect_tol * ||T||``.
    """
    M = matrices.M
    S = profile.entries
    n = matrices.n
    red = spectrum.reduction
    Tq = project_off_unstable(spectrum, T)
    rhs = _project_off_top(red, np.diagonal(Tq).copy())
    A = reduce_operator(matrices, profile)
    moduli = np.abs(1.0 - red.all_mu)
    others = np.sort(moduli)[2:]
    if others.size and others[0] > 0 and others[-1] / others[0] > ILL_CONDITION_LIMIT:
        warnings.warn(f"stable-subspace solve condition {others[-1]/others[0]:.2e} "
                      f"exceeds {ILL_CONDITION_LIMIT:.0e}", RuntimeWarning)
    try:
        d = np.linalg.solve(np.eye(2 * n) - A, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("stable-subspace solve failed") from exc
    d = _project_off_top(red, d)
    e = block_variance_matrix(S) @ d
    X = Tq + (M * e[None, :]) @ M
    defect = np.linalg.norm(apply_stability(M, S, X) - Tq, 2)
    scale = max(np.linalg.norm(T, 2), 1e-300)
    if defect > defect_tol * scale:
        raise NumericalError(
            f"stable-subspace solve defect {defect:.2e} exceeds "
            f"{defect_tol:.0e} * ||T|| = {defect_tol * scale:.2e}")
    return X


def quadratic_coupling(M: np.ndarray, S: np.ndarray, R: np.ndarray,
                       T: np.ndarray) -> np.ndarray:
    """Symmetrized quadratic term (M/2) (SE[R] T + SE[T] R)."""
    er = self_energy_diagonal(S, R)
    et = self_energy_diagonal(S, T)
    return 0.5 * (M @ (er[:, None] * T) + M @ (et[:, None] * R))


@dataclass(frozen=True)
class CubicCoefficients:
    """Coefficients of the scalar cubic satisfied by the projection of the
    resolvent fluctuation onto the unstable direction.

    mu1 and mu0 carry only their perturbation-independent parts here; the
    corrections for a concrete error matrix are available through
    `cubic_error_terms`.  xi1 and xi2 are the normalized linear and
    quadratic coefficients, and xi1_tilde, xi2_tilde their explicit
    comparators built from |z| and eta alone.
    """

    mu3: complex
    mu2: complex
    mu1: complex
    mu0: complex
    xi1: complex
    xi2: complex
    xi1_tilde: float
    xi2_tilde: float
    regime: bool


def comparator_scales(z: complex, eta: float) -> tuple[float, float]:
    """Explicit comparators: xi2_tilde = |1-|z|^2|^(1/2) + eta^(1/3) and
    xi1_tilde = xi2_tilde^2."""
    xi2t = float(np.sqrt(abs(1.0 - abs(complex(z)) ** 2)) + eta ** (1.0 / 3.0))
    return xi2t * xi2t, xi2t


def cubic_coefficients(spectrum: StabilitySpectrum, matrices: MdeMatrices,
                       profile: VarianceProfile, sol: DysonSolution,
                       strict: bool = True) -> CubicCoefficients:
    """Evaluate the cubic's coefficients from the spectral data.

    With A2[R, T] the symmetrized quadratic coupling and Binv_Q the
    stable-subspace inverse:

        mu3 = 2 <Bhat, A2[B, Binv_Q A2[B, B]]>
              - 2 <Bhat, A2[B, B_star]> <E_-, Binv_Q A2[B, B]> / <E_-, B_star>
        mu2 = <Bhat, A2[B, B]>
        mu1 = -beta <Bhat, B>        (perturbation-independent part)

    and xi2 = mu2/mu3, xi1 = mu1/mu3.  Outside the edge regime the
    formulas are still evaluated when ``strict`` is off, flagged
    ``regime=False``.
    """
    if strict and not spectrum.regime:
        raise RegimeError(
            f"cubic coefficients requested outside the edge regime "
            f"(rho + eta/rho = {spectrum.rho + spectrum.eta / spectrum.rho:.3f})")
    M = matrices.M
    S = profile.entries
    n = matrices.n
    B, B_star, B_hat = spectrum.B, spectrum.B_star, spectrum.B_hat
    em = e_minus(n)
    a_bb = quadratic_coupling(M, S, B, B)
    h = apply_Binv_Q(spectrum, matrices, profile, a_bb)
    mu2 = trace_pair(B_hat, a_bb)
    term1 = 2.0 * trace_pair(B_hat, quadratic_coupling(M, S, B, h))
    cross = trace_pair(B_hat, quadratic_coupling(M, S, B, B_star))
    term2 = 2.0 * cross * trace_pair(em, h) / trace_pair(em, B_star)
    mu3 = term1 - term2
    mu1 = -spectrum.beta * spectrum.overlap_B
    xi1_tilde, xi2_tilde = comparator_scales(sol.z, sol.eta)
    # mu3 vanishes identically at z = 0, where the quadratic structure is
    # symmetric; the normalized coefficients are undefined there.
    if mu3 == 0:
        xi1 = xi2 = complex("nan")
    else:
        xi1, xi2 = mu1 / mu3, mu2 / mu3
    return CubicCoefficients(
        mu3=mu3, mu2=mu2, mu1=mu1, mu0=0.0j,
        xi1=xi1, xi2=xi2,
        xi1_tilde=xi1_tilde, xi2_tilde=xi2_tilde,
        regime=spectrum.regime,
    )


@dataclass(frozen=True)
class CubicErrorTerms:
    mu0: complex
    mu1_correction: complex


def cubic_error_terms(spectrum: StabilitySpectrum, matrices: MdeMatrices,
                      profile: VarianceProfile, D: np.ndarray) -> CubicErrorTerms:
    """Perturbation-dependent parts of the cubic for an error matrix D.

    mu0 = <Bhat, A2[Binv_Q[M D], Binv_Q[M D]] - M D> and the linear
    correction -2 <Bhat, A2[B, Binv_Q[M D]]>
    + 2 (<E_-, B>/<E_-, B_star>) <Bhat, A2[Binv_Q[M D], B_star]>.
    """
    M = matrices.M
    S = profile.entries
    n = matrices.n
    em = e_minus(n)
    X = M @ D
    k = apply_Binv_Q(spectrum, matrices, profile, X)
    mu0 = trace_pair(spectrum.B_hat, quadratic_coupling(M, S, k, k) - X)
    corr = (-2.0 * trace_pair(spectrum.B_hat, quadratic_coupling(M, S, spectrum.B, k))
            + 2.0 * (trace_pair(em, spectrum.B) / trace_pair(em, spectrum.B_star))
            * trace_pair(spectrum.B_hat, quadratic_coupling(M, S, k, spectrum.B_star)))
    return CubicErrorTerms(mu0=mu0, mu1_correction=corr)


def materialize_stability_matrix(matrices: MdeMatrices,
                                 profile: VarianceProfile) -> np.ndarray:
    """Dense (2n)^2-by-(2n)^2 matrix of the stability map on vec(R).

    Exponentially sized; intended only for brute-force cross-checks at
    tiny n.
    """
    M = matrices.M
    S = profile.entries
    n = matrices.n
    dim = (2 * n) ** 2
    out = np.eye(dim, dtype=complex)
    blk = block_variance_matrix(S)
    for c in range(2 * n):
        e = blk[:, c]
        correction = (M * e[None, :]) @ M
        col = c * (2 * n) + c
        out[:, col] -= correction.reshape(-1)
    return out


@dataclass(frozen=True)
class PerturbationCheck:
    residuals: np.ndarray
    deltas: np.ndarray
    slope: float


def _isolated_eig_data(K: np.ndarray, target: complex | None):
    w, vl, vr = scipy.linalg.eig(K, left=True, right=True)
    if target is None:
        idx = int(np.argmax(np.abs(w)))
    else:
        idx = int(np.argmin(np.abs(w - target)))
    return w, vl, vr, idx


def perturbation_second_order_check(K: np.ndarray, D: np.ndarray,
                                    deltas: Sequence[float],
                                    target: complex | None = None) -> PerturbationCheck:
    """Validate the second-order eigenvalue expansion under K -> K + delta D.

    For an isolated simple eigenvalue kappa of K with spectral projector
    P and complement Q, the perturbed eigenvalue lambda and its unit
    eigenvectors L, Lhat satisfy

      lambda <Lhat, L> = kappa <Khat, K> + <Khat, dD K>
                         + <Khat, dD Q (2 kappa - K)(K - kappa)^{-2} Q dD K>
                         + O(delta^3),

    where K = P[L] and Khat = P^*[Lhat].  The returned slope is the
    log-log regression of the residual against delta; residuals below
    1e-14 are excluded as numerically exact, and the slope is NaN when
    fewer than two measurable residuals remain.
    """
    K = np.asarray(K, dtype=complex)
    D = np.asarray(D, dtype=complex)
    w, vl, vr, idx = _isolated_eig_data(K, target)
    kappa = w[idx]
    r = vr[:, idx]
    l = vl[:, idx]
    try:
        V = vr
        Vinv = np.linalg.inv(V)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("defective eigenbasis in perturbation check") from exc
    g = np.zeros_like(w)
    mask = np.arange(w.size) != idx
    g[mask] = (2.0 * kappa - w[mask]) / (w[mask] - kappa) ** 2
    middle = (V * g[None, :]) @ Vinv
    proj_scale = np.vdot(l, r)
    first_order = np.vdot(l, D @ r) / proj_scale

    residuals = []
    deltas = np.asarray(list(deltas), dtype=float)
    for delta in deltas:
        w2, vl2, vr2 = scipy.linalg.eig(K + delta * D, left=True, right=True)
        predicted = kappa + delta * first_order
        pick = int(np.argmin(np.abs(w2 - predicted)))
        lam = w2[pick]
        L = vr2[:, pick] / np.linalg.norm(vr2[:, pick])
        Lhat = vl2[:, pick] / np.linalg.norm(vl2[:, pick])
        Kp = r * (np.vdot(l, L) / proj_scale)
        Khat = l * (np.vdot(r, Lhat) / np.conj(proj_scale))
        dDK = delta * (D @ Kp)
        lhs = lam * np.vdot(Lhat, L)
        rhs = (kappa * np.vdot(Khat, Kp)
               + np.vdot(Khat, dDK)
               + np.vdot(Khat, delta * (D @ (middle @ dDK))))
        residuals.append(abs(lhs - rhs))
    residuals = np.asarray(residuals)
    measurable = residuals > 1e-14
    if measurable.sum() >= 2:
        slope = float(np.polyfit(np.log(deltas[measurable]),
                                 np.log(residuals[measurable]), 1)[0])
    else:
        slope = float("nan")
    return PerturbationCheck(residuals=residuals, deltas=deltas, slope=slope)


def stability_defect(M: np.ndarray, S: np.ndarray, B: np.ndarray,
                     beta: complex) -> float:
    """Relative defect ||map(B) - beta B|| / ||B|| in the spectral norm."""
    num = np.linalg.norm(apply_stability(M, S, B) - beta * B, 2)
    return float(num / np.linalg.norm(B, 2))


def stability_adjoint_defect(M: np.ndarray, S: np.ndarray, Bhat: np.ndarray,
                             beta: complex) -> float:
    num = np.linalg.norm(apply_stability_adjoint(M, S, Bhat)
                         - np.conj(beta) * Bhat, 2)
    return float(num / np.linalg.norm(Bhat, 2))


LeadingForms = Callable[[DysonSolution], dict]


def leading_forms(sol: DysonSolution) -> dict:
    """Leading-order expressions the aligned eigen-matrices approximate."""
    n = sol.n
    rho = sol.rho
    im_m = np.diag(np.concatenate([sol.v1, sol.v2])).astype(complex)
    im_minv = np.diag(imag_inverse_diagonal(sol)).astype(complex)
    em = e_minus(n)
    idx = np.arange(n)
    re_m = np.zeros((2 * n, 2 * n), dtype=complex)
    re_m[idx, n + idx] = -sol.z * sol.u
    re_m[n + idx, idx] = -np.conj(sol.z) * sol.u
    return {
        "B": im_m / rho - 2j / rho * (im_m @ im_minv @ re_m),
        "B_star": em @ im_m / rho,
        "B_hat": -im_minv / rho,
        "B_hat_star": -(em @ im_minv) / rho,
    }
