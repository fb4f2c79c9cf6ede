"""Self-consistent solver for the two-vector Dyson equation.

For a variance profile S, spectral location z and spectral parameter
eta > 0 on the imaginary axis, the pair of positive vectors (v1, v2)
solves

    1/v1 = eta + S v2  + |z|^2 / (eta + S^T v1),
    1/v2 = eta + S^T v1 + |z|^2 / (eta + S v2),

componentwise.  The derived vector u = v1/(eta + S^T v1) and the scalar
rho = (sum v1 + sum v2) / (2 n pi) feed the 2n-by-2n matrix assembly: the
self-consistent resolvent approximation M, its unitary factor U and the
positive diagonal balance Q with M = Q U Q.

The solver runs a continuation in eta from eta = 10 downward (geometric
grid), warm-starting each stage.  Within a stage it first applies the
damped fixed-point map, which is cheap and globally attracting, and
switches to a Newton iteration when the fixed-point contraction becomes
too slow, which happens near the spectral edge where the linearization
develops a small gap.  Convergence requires both the scaled equation
defect (sup-norm of 1 - v * rhs, which stays resolvable in double
precision even where v itself decays) and the damped-update norm to fall
below the tolerance, so a stalled iteration can never masquerade as a
converged one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, RegimeError
from .calibration import CALIBRATION
from .profiles import VarianceProfile

#: Smallest supported spectral parameter; the equation degenerates at eta = 0.
MIN_ETA = 1e-12


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-12
    damping: float = 0.5
    eta_start: float = 10.0
    continuation_ratio: float = 0.7
    max_fp_iterations: int = 80
    max_newton_iterations: int = 50
    fp_stall_window: int = 15


@dataclass(frozen=True)
class DysonSolution:
    """Solution of the two-vector equation at one (z, eta) point."""

    z: complex
    eta: float
    v1: np.ndarray
    v2: np.ndarray
    u: np.ndarray
    rho: float
    iterations: int
    residual: float

    @property
    def n(self) -> int:
        return self.v1.shape[0]

    @property
    def mean_imag(self) -> float:
        """Average of the imaginary diagonal, equal to pi * rho."""
        return float(0.5 * (self.v1.mean() + self.v2.mean()))


@dataclass(frozen=True)
class MdeMatrices:
    """Assembled 2n-by-2n matrices M = Q U Q for one solution."""

    M: np.ndarray
    U: np.ndarray
    Q: np.ndarray
    z: complex
    eta: float

    @property
    def n(self) -> int:
        return self.M.shape[0] // 2


def _defect(S: np.ndarray, z2: float, eta: float, v1: np.ndarray, v2: np.ndarray):
    """Componentwise equation defect (F1, F2)."""
    a = eta + S.T @ v1
    b = eta + S @ v2
    f1 = 1.0 / v1 - b - z2 / a
    f2 = 1.0 / v2 - a - z2 / b
    return f1, f2


def _defect_norm(S, z2, eta, v1, v2) -> float:
    """Scaled sup-norm defect, max over components of |1 - v * rhs|.

    The scaling by v makes the measure dimensionless: outside the
    spectrum v decays like eta and the raw defect 1/v - rhs cannot be
    evaluated below eps/v, while the scaled form stays resolvable at
    machine precision everywhere.
    """
    f1, f2 = _defect(S, z2, eta, v1, v2)
    return max(float(np.abs(v1 * f1).max()), float(np.abs(v2 * f2).max()))


def _fixed_point_map(S, z2, eta, v1, v2):
    a = eta + S.T @ v1
    b = eta + S @ v2
    return 1.0 / (b + z2 / a), 1.0 / (a + z2 / b)


def _newton_step(S, z2, eta, v1, v2):
    """One Newton step on the stacked defect, with positivity backtracking.

    Prefers the longest fractional step that decreases the scaled defect;
    if no fraction does (the iterate may cross a curved valley before the
    quadratic regime), the longest positivity-preserving step is taken
    anyway and the caller's stall guard decides whether to abort.
    """
    n = v1.shape[0]
    a = eta + S.T @ v1
    b = eta + S @ v2
    f = np.concatenate([1.0 / v1 - b - z2 / a, 1.0 / v2 - a - z2 / b])
    jac = np.empty((2 * n, 2 * n))
    jac[:n, :n] = z2 * (S.T / a[:, None] ** 2)
    jac[:n, :n] -= np.diag(1.0 / v1**2)
    jac[:n, n:] = -S
    jac[n:, :n] = -S.T
    jac[n:, n:] = z2 * (S / b[:, None] ** 2)
    jac[n:, n:] -= np.diag(1.0 / v2**2)
    try:
        delta = np.linalg.solve(jac, -f)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular Jacobian in Newton step") from exc
    base = _defect_norm(S, z2, eta, v1, v2)
    fallback = None
    step = 1.0
    for _ in range(60):
        w1 = v1 + step * delta[:n]
        w2 = v2 + step * delta[n:]
        if (w1 > 0).all() and (w2 > 0).all():
            if fallback is None:
                fallback = (w1, w2)
            if _defect_norm(S, z2, eta, w1, w2) < base:
                return w1, w2
        step *= 0.5
    if fallback is None:
        raise NumericalError("Newton step cannot preserve positivity")
    return fallback


def _solve_stage(S, z2, eta, v1, v2, opts: SolverOptions, tol: float):
    """Drive (v1, v2) to the given tolerance at a single eta."""
    lam = opts.damping
    iterations = 0
    best = _defect_norm(S, z2, eta, v1, v2)
    stalled = 0
    for _ in range(opts.max_fp_iterations):
        p1, p2 = _fixed_point_map(S, z2, eta, v1, v2)
        w1 = (1.0 - lam) * v1 + lam * p1
        w2 = (1.0 - lam) * v2 + lam * p2
        update = max(float(np.abs(w1 - v1).max() / np.abs(v1).max()),
                     float(np.abs(w2 - v2).max() / np.abs(v2).max()))
        v1, v2 = w1, w2
        iterations += 1
        defect = _defect_norm(S, z2, eta, v1, v2)
        if defect <= tol and update <= tol:
            return v1, v2, iterations, defect
        if defect >= best * (1.0 - 1e-3):
            stalled += 1
            if stalled >= opts.fp_stall_window:
                break
        else:
            stalled = 0
            best = defect
    # Fixed-point progress has slowed; finish with Newton.
    defect = _defect_norm(S, z2, eta, v1, v2)
    best = defect
    no_progress = 0
    for _ in range(opts.max_newton_iterations):
        if defect <= tol:
            break
        w1, w2 = _newton_step(S, z2, eta, v1, v2)
        new_defect = _defect_norm(S, z2, eta, w1, w2)
        iterations += 1
        if new_defect < best:
            best = new_defect
            no_progress = 0
        else:
            no_progress += 1
            if no_progress >= 8:
                raise NumericalError(
                    f"Dyson iteration diverged at eta={eta:.3e} "
                    f"(defect stuck at {best:.3e}); adjust damping or tolerance")
        v1, v2, defect = w1, w2, new_defect
    if defect > tol:
        raise NumericalError(
            f"Dyson solver failed to reach tol={tol:.1e} at eta={eta:.3e}; "
            f"final defect {defect:.3e}")
    # One damped sweep measures the update norm at the converged point.
    p1, p2 = _fixed_point_map(S, z2, eta, v1, v2)
    update = max(float(np.abs(lam * (p1 - v1)).max() / np.abs(v1).max()),
                 float(np.abs(lam * (p2 - v2)).max() / np.abs(v2).max()))
    if update > tol:
        raise NumericalError(
            f"converged defect but update norm {update:.3e} exceeds tol at eta={eta:.3e}")
    return v1, v2, iterations, defect


def _continuation_grid(eta: float, opts: SolverOptions):
    if eta >= opts.eta_start:
        return [eta]
    grid = []
    current = opts.eta_start
    while current > eta:
        grid.append(current)
        current *= opts.continuation_ratio
    grid.append(eta)
    return grid


def _validate_eta(eta: float):
    if not eta > 0:
        raise RegimeError(f"eta must be positive, got {eta}")
    if eta < MIN_ETA:
        raise RegimeError(f"eta={eta} below the supported minimum {MIN_ETA}")


def _finalize(S, z, eta, v1, v2, iterations, residual) -> DysonSolution:
    n = v1.shape[0]
    u = v1 / (eta + S.T @ v1)
    rho = float((v1.sum() + v2.sum()) / (2.0 * n * np.pi))
    return DysonSolution(z=complex(z), eta=float(eta), v1=v1, v2=v2, u=u,
                         rho=rho, iterations=iterations, residual=residual)


def solve_dyson(profile: VarianceProfile, z: complex, eta: float,
                opts: SolverOptions | None = None) -> DysonSolution:
    """Solve the two-vector equation at a single (z, eta)."""
    opts = opts or SolverOptions()
    _validate_eta(eta)
    S = profile.entries
    z2 = abs(complex(z)) ** 2
    grid = _continuation_grid(eta, opts)
    warm_tol = max(opts.tol, 1e-8)
    v1 = np.full(profile.n, 1.0 / (grid[0] + 1.0))
    v2 = v1.copy()
    total = 0
    residual = np.inf
    for stage_eta in grid[:-1]:
        v1, v2, its, _ = _solve_stage(S, z2, stage_eta, v1, v2, opts, warm_tol)
        total += its
    v1, v2, its, residual = _solve_stage(S, z2, grid[-1], v1, v2, opts, opts.tol)
    total += its
    return _finalize(S, z, eta, v1, v2, total, residual)


def solve_dyson_path(profile: VarianceProfile, z: complex, etas,
                     opts: SolverOptions | None = None) -> list[DysonSolution]:
    """Solve along a descending eta grid with warm starts.

    The grid must be strictly decreasing; each point is solved to full
    tolerance starting from the previous solution, which is how sweeps
    for quadratures and derivative stencils avoid re-running the whole
    continuation per point.
    """
    opts = opts or SolverOptions()
    etas = [float(e) for e in etas]
    if any(b >= a for a, b in zip(etas, etas[1:])):
        raise ValueError("eta grid must be strictly decreasing")
    for eta in etas:
        _validate_eta(eta)
    S = profile.entries
    z2 = abs(complex(z)) ** 2
    warm_tol = max(opts.tol, 1e-8)
    head = [e for e in _continuation_grid(etas[0], opts)[:-1] if e > etas[0]]
    v1 = np.full(profile.n, 1.0 / ((head[0] if head else etas[0]) + 1.0))
    v2 = v1.copy()
    for stage_eta in head:
        v1, v2, _, _ = _solve_stage(S, z2, stage_eta, v1, v2, opts, warm_tol)
    out = []
    for eta in etas:
        v1, v2, its, residual = _solve_stage(S, z2, eta, v1, v2, opts, opts.tol)
        out.append(_finalize(S, z, eta, v1, v2, its, residual))
    return out


def solve_mean_imag_grid(profile: VarianceProfile, radii, etas,
                         opts: SolverOptions | None = None) -> np.ndarray:
    """Mean imaginary diagonal on a (radius, eta) product grid.

    Returns an array of shape (len(radii), len(etas)) whose entry (i, k)
    is the average of (v1, v2) at |z| = radii[i], eta = etas[k].  The eta
    grid must be strictly decreasing and is swept with warm starts; all
    radii advance together, so the damped sweeps run as matrix products
    over the whole batch with converged rows masked out.  Rows that the
    damped map leaves unconverged fall back to the per-point stage solver
    and meet the same tolerance contract.  This is the workhorse for the
    radial quadratures, which need only the mean and would otherwise pay
    the sweep cost once per radius.
    """
    opts = opts or SolverOptions()
    radii = np.asarray(radii, dtype=float)
    etas = [float(e) for e in etas]
    if any(b >= a for a, b in zip(etas, etas[1:])):
        raise ValueError("eta grid must be strictly decreasing")
    for eta in etas:
        _validate_eta(eta)
    S = profile.entries
    n = profile.n
    z2 = radii**2
    head = [e for e in _continuation_grid(etas[0], opts)[:-1] if e > etas[0]]
    first = head[0] if head else etas[0]
    V1 = np.full((radii.size, n), 1.0 / (first + 1.0))
    V2 = V1.copy()
    out = np.empty((radii.size, len(etas)))

    def sweep(eta, tol):
        nonlocal V1, V2
        lam = opts.damping
        active = np.ones(radii.size, dtype=bool)
        for _ in range(opts.max_fp_iterations):
            if not active.any():
                return
            v1, v2 = V1[active], V2[active]
            zz = z2[active][:, None]
            a = eta + v1 @ S
            b = eta + v2 @ S.T
            p1 = 1.0 / (b + zz / a)
            p2 = 1.0 / (a + zz / b)
            w1 = (1.0 - lam) * v1 + lam * p1
            w2 = (1.0 - lam) * v2 + lam * p2
            upd = np.maximum(np.abs(w1 - v1).max(axis=1) / np.abs(v1).max(axis=1),
                             np.abs(w2 - v2).max(axis=1) / np.abs(v2).max(axis=1))
            V1[active], V2[active] = w1, w2
            a = eta + w1 @ S
            b = eta + w2 @ S.T
            d1 = np.abs(1.0 - w1 * (b + zz / a)).max(axis=1)
            d2 = np.abs(1.0 - w2 * (a + zz / b)).max(axis=1)
            done = (np.maximum(d1, d2) <= tol) & (upd <= tol)
            idx = np.flatnonzero(active)
            active[idx[done]] = False
        for i in np.flatnonzero(active):
            v1, v2, _, _ = _solve_stage(S, z2[i], eta, V1[i], V2[i], opts, tol)
            V1[i], V2[i] = v1, v2

    warm_tol = max(opts.tol, 1e-8)
    for eta in head:
        sweep(eta, warm_tol)
    for k, eta in enumerate(etas):
        sweep(eta, opts.tol)
        out[:, k] = 0.5 * (V1.mean(axis=1) + V2.mean(axis=1))
    return out


def self_energy_diagonal(S: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Diagonal vector of the self-energy map applied to a 2n matrix.

    The map sends R to diag(S r2, S^T r1) where r1, r2 are the first and
    second halves of the diagonal of R; only the diagonal of R enters.
    """
    n = S.shape[0]
    d = np.diagonal(R)
    return np.concatenate([S @ d[n:], S.T @ d[:n]])


def block_variance_matrix(S: np.ndarray) -> np.ndarray:
    """The 2n-by-2n block matrix [[0, S], [S^T, 0]] acting on diagonals."""
    n = S.shape[0]
    blk = np.zeros((2 * n, 2 * n))
    blk[:n, n:] = S
    blk[n:, :n] = S.T
    return blk


def assemble_matrices(sol: DysonSolution) -> MdeMatrices:
    """Assemble M, its unitary factor U and the diagonal balance Q.

    M carries i*diag(v1), i*diag(v2) on the diagonal blocks and -z*u,
    -conj(z)*u on the off-diagonal ones.  U replaces v1, v2, u by
    sqrt(v1 v2 / u) and sqrt(u); Q is diagonal with entries
    (u v1/v2)^(1/4) and (u v2/v1)^(1/4).  The factorization M = Q U Q
    holds entrywise and U is unitary because u = v1 v2 + |z|^2 u^2.
    """
    n = sol.n
    z = sol.z
    idx = np.arange(n)
    M = np.zeros((2 * n, 2 * n), dtype=complex)
    M[idx, idx] = 1j * sol.v1
    M[n + idx, n + idx] = 1j * sol.v2
    M[idx, n + idx] = -z * sol.u
    M[n + idx, idx] = -np.conj(z) * sol.u
    U = np.zeros_like(M)
    gu = np.sqrt(sol.v1 * sol.v2 / sol.u)
    su = np.sqrt(sol.u)
    U[idx, idx] = 1j * gu
    U[n + idx, n + idx] = 1j * gu
    U[idx, n + idx] = -z * su
    U[n + idx, idx] = -np.conj(z) * su
    q = np.concatenate([(sol.u * sol.v1 / sol.v2) ** 0.25,
                        (sol.u * sol.v2 / sol.v1) ** 0.25])
    Q = np.diag(q).astype(complex)
    return MdeMatrices(M=M, U=U, Q=Q, z=z, eta=sol.eta)


def imag_inverse_diagonal(sol: DysonSolution) -> np.ndarray:
    """Diagonal of Im(M^{-1}), which is -(v2/u, v1/u) componentwise."""
    return -np.concatenate([sol.v2 / sol.u, sol.v1 / sol.u])


def mde_residual(matrices: MdeMatrices, profile: VarianceProfile,
                 z: complex, eta: float) -> float:
    """Max-norm defect of M in the matrix equation.

    Evaluates || M^{-1} + [[i eta, z], [conj(z), i eta]] + SE[M] ||_max
    with a numerically computed inverse, so the check is independent of
    the identities used during assembly.
    """
    M = matrices.M
    n = profile.n
    try:
        Minv = np.linalg.inv(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("assembled M is singular") from exc
    R = Minv.copy()
    idx = np.arange(2 * n)
    R[idx, idx] += 1j * eta + self_energy_diagonal(profile.entries, M)
    R[np.arange(n), np.arange(n, 2 * n)] += z
    R[np.arange(n, 2 * n), np.arange(n)] += np.conj(z)
    return float(np.abs(R).max())


@dataclass(frozen=True)
class DerivativeCheck:
    fd_norm: float
    bound: float

    @property
    def ratio(self) -> float:
        return self.fd_norm / self.bound


def eta_derivative_check(profile: VarianceProfile, z: complex, eta: float,
                         opts: SolverOptions | None = None,
                         constant: float | None = None,
                         rho_star: float | None = None) -> DerivativeCheck:
    """Finite-difference estimate of ||dM/d eta|| against its edge bound.

    Valid only in the edge regime rho + eta/rho <= rho_star; the bound is
    C / (rho^2 + eta/rho) with the calibration constant C.  The centered
    stencil uses step eta/100, so eta must stay two orders of magnitude
    above the smallest supported spectral parameter.
    """
    opts = opts or SolverOptions()
    constant = CALIBRATION.derivative_constant if constant is None else constant
    rho_star = CALIBRATION.rho_star if rho_star is None else rho_star
    step = eta / 100.0
    if eta - step < MIN_ETA:
        raise RegimeError(f"eta={eta} too small for a centered step of eta/100")
    sols = solve_dyson_path(profile, z, [eta + step, eta, eta - step], opts)
    sol = sols[1]
    rho = sol.rho
    if rho + eta / rho > rho_star:
        raise RegimeError(
            f"derivative bound requires rho + eta/rho <= {rho_star}, "
            f"got {rho + eta / rho:.3f}")
    M_plus = assemble_matrices(sols[0]).M
    M_minus = assemble_matrices(sols[2]).M
    fd = (M_plus - M_minus) / (2.0 * step)
    fd_norm = float(np.linalg.norm(fd, 2))
    bound = constant / (rho**2 + eta / rho)
    return DerivativeCheck(fd_norm=fd_norm, bound=bound)


def scaling_envelope_reference(z: complex, eta: float) -> float:
    """Reference magnitude for rho near the normalized edge.

    eta^(1/3) + (1 - |z|^2)^(1/2) inside the disk and
    eta / (|z|^2 - 1 + eta^(2/3)) outside; rho is comparable to this
    within a calibration factor for profiles with Perron radius 1.
    """
    z2 = abs(complex(z)) ** 2
    if z2 <= 1.0:
        return eta ** (1.0 / 3.0) + np.sqrt(1.0 - z2)
    return eta / (z2 - 1.0 + eta ** (2.0 / 3.0))


def solution_as_dict(sol: DysonSolution) -> dict:
    return {
        "z": {"re": sol.z.real, "im": sol.z.imag},
        "eta": sol.eta,
        "v1": sol.v1.tolist(),
        "v2": sol.v2.tolist(),
        "u": sol.u.tolist(),
        "rho": sol.rho,
        "residual": sol.residual,
        "iterations": sol.iterations,
    }
