"""Sampling of profiled random matrices and per-sample resolvent measurements.

Sampling is driven by a counter-based generator keyed by (seed, trial), so
any trial of any experiment can be regenerated in isolation and results
do not depend on scheduling order.  The Hermitization of a sample X at
location z is the 2n-by-2n Hermitian matrix [[0, X - z], [(X - z)^*, 0]];
its spectrum is symmetric about zero and its kernel detects eigenvalues
of X at z.  Resolvents are taken from the full eigendecomposition, which
amortizes over the many spectral parameters each experiment sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .density import fluctuation_scale
from .profiles import VarianceProfile
from .solver import MdeMatrices, self_energy_diagonal

DISTRIBUTIONS = ("complex_gaussian", "real_gaussian", "rademacher")


@dataclass(frozen=True)
class SampleSpec:
    profile: VarianceProfile
    dist: str = "complex_gaussian"
    seed: int = 0
    trial_index: int = 0


def _generator(seed: int, trial_index: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(trial_index & 0xFFFFFFFFFFFFFFFF)])
    return np.random.Generator(np.random.Philox(key=key))


def sample_matrix(spec: SampleSpec) -> np.ndarray:
    """Draw one matrix with independent centered entries matching the profile.

    Entry (i, j) has variance profile.entries[i, j].  The complex Gaussian
    kind has vanishing pseudo-variance (E x^2 = 0); rademacher entries are
    +-sqrt(variance) and carry no absolutely continuous density, so they
    are excluded from measurements sensitive to the smallest singular
    value.  Identical specs reproduce the matrix bit for bit.
    """
    if spec.dist not in DISTRIBUTIONS:
        raise ValueError(f"unknown entry distribution {spec.dist!r}")
    n = spec.profile.n
    sd = np.sqrt(spec.profile.entries)
    rng = _generator(spec.seed, spec.trial_index)
    if spec.dist == "complex_gaussian":
        g1 = rng.standard_normal((n, n))
        g2 = rng.standard_normal((n, n))
        return sd * (g1 + 1j * g2) / np.sqrt(2.0)
    if spec.dist == "real_gaussian":
        return (sd * rng.standard_normal((n, n))).astype(complex)
    signs = 2.0 * rng.integers(0, 2, size=(n, n)) - 1.0
    return (sd * signs).astype(complex)


@dataclass(frozen=True)
class HermitizedSystem:
    z: complex
    H: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.H.shape[0] // 2


def hermitize(X: np.ndarray, z: complex) -> HermitizedSystem:
    """Hermitization of X at z with its full eigendecomposition."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError(f"X must be square, got shape {X.shape}")
    n = X.shape[0]
    B = X - z * np.eye(n)
    H = np.zeros((2 * n, 2 * n), dtype=complex)
    H[:n, n:] = B
    H[n:, :n] = B.conj().T
    try:
        eigenvalues, eigenvectors = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("Hermitian eigendecomposition failed") from exc
    return HermitizedSystem(z=complex(z), H=H, eigenvalues=eigenvalues,
                            eigenvectors=eigenvectors)


def resolvent(sys: HermitizedSystem, eta: float) -> np.ndarray:
    """G = (H - i eta)^{-1} from the cached eigendecomposition."""
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    weights = 1.0 / (sys.eigenvalues - 1j * eta)
    V = sys.eigenvectors
    return (V * weights[None, :]) @ V.conj().T


def e_minus_trace(G: np.ndarray) -> float:
    """|normalized trace of E_- G|, exactly zero for a Hermitization."""
    n = G.shape[0] // 2
    d = np.diagonal(G)
    return float(abs((d[:n].sum() - d[n:].sum()) / (2 * n)))


def ward_residual(G: np.ndarray, eta: float) -> float:
    """Worst relative defect of sum_b |G_ab|^2 = Im G_aa / eta."""
    lhs = (np.abs(G) ** 2).sum(axis=1)
    rhs = np.diagonal(G).imag / eta
    return float(np.max(np.abs(lhs - rhs) / np.abs(rhs)))


def chiral_pairing_defect(eigenvalues: np.ndarray) -> float:
    """Max |lambda_k + lambda_{2n+1-k}| over the sorted spectrum."""
    lam = np.sort(eigenvalues)
    return float(np.abs(lam + lam[::-1]).max())


def _default_probe_vectors(n: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    vecs = [np.eye(2 * n)[:, 0], np.eye(2 * n)[:, n],
            np.full(2 * n, 1.0 / np.sqrt(2 * n)).astype(complex)]
    for _ in range(2):
        v = rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n)
        vecs.append(v / np.linalg.norm(v))
    return [v.astype(complex) for v in vecs]


def _default_probe_matrices(n: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed + 1)
    eye = np.eye(2 * n, dtype=complex)
    em = eye.copy()
    em[n:, n:] *= -1.0
    mats = [eye, em]
    R = rng.standard_normal((2 * n, 2 * n)) + 1j * rng.standard_normal((2 * n, 2 * n))
    mats.append(R / np.linalg.norm(R, 2))
    Rh = rng.standard_normal((2 * n, 2 * n))
    Rh = Rh + Rh.T
    mats.append((Rh / np.linalg.norm(Rh, 2)).astype(complex))
    return mats


@dataclass(frozen=True)
class ResolventErrorRecord:
    iso_max: float
    avg_max: float
    e_minus_trace: float
    avg_identity: float  # |<G - M>| with the plain normalized trace


def resolvent_error(sys: HermitizedSystem, matrices: MdeMatrices, eta: float,
                    probe_vectors=None, probe_matrices=None,
                    seed: int = 0) -> ResolventErrorRecord:
    """Isotropic and averaged distance between the resolvent and M.

    iso_max maximizes |x^* (G - M) y| over unit probe vectors, avg_max
    maximizes the normalized trace |<R (G - M)>| over probe matrices of
    operator norm at most 1.  The E_- trace of G itself is reported as
    well; it vanishes identically for a Hermitization, so anything above
    rounding noise indicates corruption.
    """
    n = sys.n
    G = resolvent(sys, eta)
    diff = G - matrices.M
    vecs = probe_vectors if probe_vectors is not None else _default_probe_vectors(n, seed)
    mats = probe_matrices if probe_matrices is not None else _default_probe_matrices(n, seed)
    iso = 0.0
    for x in vecs:
        for y in vecs:
            iso = max(iso, abs(complex(x.conj() @ diff @ y)))
    avg = 0.0
    for R in mats:
        avg = max(avg, abs(np.trace(R @ diff)) / (2 * n))
    return ResolventErrorRecord(
        iso_max=iso, avg_max=avg,
        e_minus_trace=e_minus_trace(G),
        avg_identity=float(abs(np.trace(diff)) / (2 * n)),
    )


@dataclass(frozen=True)
class ErrorMatrixRecord:
    generic_values: np.ndarray
    offdiag_values: np.ndarray
    offdiag_gain: float


def error_matrix_D(sys: HermitizedSystem, X: np.ndarray, z: complex, eta: float,
                   profile: VarianceProfile, n_probes: int = 8,
                   seed: int = 0) -> ErrorMatrixRecord:
    """Averaged traces of the defect by which G fails the matrix equation.

    D = W G + SE[G] G with W the centered Hermitization [[0, X], [X^*, 0]].
    |<R D>| is recorded for a panel of generic unit-norm matrices and for
    a panel supported on the off-diagonal blocks; their median ratio is
    the off-diagonal gain, which drops below one at the spectral edge
    where the block structure averages the fluctuations.
    """
    n = sys.n
    G = resolvent(sys, eta)
    W = np.zeros((2 * n, 2 * n), dtype=complex)
    W[:n, n:] = X
    W[n:, :n] = X.conj().T
    e = self_energy_diagonal(profile.entries, G)
    D = W @ G + e[:, None] * G
    rng = np.random.default_rng(seed)
    generic, offdiag = [], []
    for _ in range(n_probes):
        R = rng.standard_normal((2 * n, 2 * n)) + 1j * rng.standard_normal((2 * n, 2 * n))
        R /= np.linalg.norm(R, 2)
        generic.append(abs(np.trace(R @ D)) / (2 * n))
        R2 = np.zeros_like(R)
        R2[:n, n:] = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        R2[n:, :n] = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        R2 /= np.linalg.norm(R2, 2)
        offdiag.append(abs(np.trace(R2 @ D)) / (2 * n))
    generic = np.array(generic)
    offdiag = np.array(offdiag)
    return ErrorMatrixRecord(
        generic_values=generic, offdiag_values=offdiag,
        offdiag_gain=float(np.median(offdiag) / np.median(generic)),
    )


def eigenvalue_count_near_zero(sys: HermitizedSystem, eta: float) -> int:
    """Number of Hermitization eigenvalues within [-eta, eta].

    Meaningful for eta at or above the fluctuation scale, below which the
    count measures single-eigenvalue noise.
    """
    if eta < fluctuation_scale(abs(sys.z) ** 2, sys.n):
        raise ValueError(
            f"eta={eta:.3e} below the fluctuation scale at |z|^2={abs(sys.z)**2:.3f}")
    return int((np.abs(sys.eigenvalues) <= eta).sum())


@dataclass(frozen=True)
class RadialBump:
    """Compactly supported C^2 test function (1 - |w|^2)^3 on a disk.

    w = (z - center) / radius; the function vanishes with two continuous
    derivatives at the boundary.  The Laplacian has the closed form
    12 (1 - t)(3t - 1) * amplitude / radius^2 at t = |w|^2 < 1, and the
    L1 norm of the Laplacian is amplitude * 32 pi / 9 independently of
    the radius.
    """

    center: complex = 0.0j
    radius: float = 1.0
    amplitude: float = 1.0

    def __call__(self, z):
        t = (np.abs(np.asarray(z) - self.center) / self.radius) ** 2
        return np.where(t < 1.0, self.amplitude * (1.0 - t) ** 3, 0.0)

    def laplacian(self, z):
        t = (np.abs(np.asarray(z) - self.center) / self.radius) ** 2
        val = 12.0 * (1.0 - t) * (3.0 * t - 1.0) * self.amplitude / self.radius**2
        return np.where(t < 1.0, val, 0.0)

    def laplacian_l1(self) -> float:
        return self.amplitude * 32.0 * np.pi / 9.0

    def rescaled(self, z0: complex, a: float, n: int) -> "RadialBump":
        """Zoomed copy n^{2a} f(n^a (z - z0)) centered at z0."""
        return RadialBump(center=complex(z0), radius=self.radius * n ** (-a),
                          amplitude=self.amplitude * n ** (2 * a))
