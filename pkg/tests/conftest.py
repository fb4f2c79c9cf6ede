import numpy as np
import mpmath
import pytest

from dyson_lab import make_profile, normalize


def flat_v_oracle(z2: float, eta: float) -> float:
    """Independent scalar oracle for the flat profile.

    On the flat profile the two-vector equation collapses by symmetry to
    one scalar unknown.  With w = eta + v the scalar satisfies the cubic

        w^3 - eta w^2 + (z2 - 1) w - eta z2 = 0,

    and v = w / (w^2 + z2) (equivalently v = w - eta).  The cubic is
    solved in 50-digit arithmetic and the unique admissible root (real,
    above eta, consistent with both expressions for v) is returned.
    """
    mpmath.mp.dps = 50
    z2m = mpmath.mpf(repr(float(z2)))
    etam = mpmath.mpf(repr(float(eta)))
    roots = mpmath.polyroots([1, -etam, z2m - 1, -etam * z2m], extraprec=80)
    for root in roots:
        if abs(mpmath.im(root)) > mpmath.mpf("1e-35"):
            continue
        w = mpmath.re(root)
        if w <= etam:
            continue
        v_rational = w / (w * w + z2m) if z2m > 0 else 1 / w
        v_linear = w - etam
        if abs(v_rational - v_linear) <= mpmath.mpf("1e-30") * max(1, abs(v_linear)):
            return float(v_rational)
    raise AssertionError(f"no admissible cubic root at z2={z2}, eta={eta}")


@pytest.fixture(scope="session")
def flat8():
    return make_profile("flat", 8)


@pytest.fixture(scope="session")
def flat64():
    return make_profile("flat", 64)


@pytest.fixture(scope="session")
def flat256():
    return make_profile("flat", 256)


@pytest.fixture(scope="session")
def two_block64():
    return normalize(make_profile("two_block", 64, {"a": 0.5, "b": 1.5, "c": 1.0}))


@pytest.fixture(scope="session")
def two_block256():
    return normalize(make_profile("two_block", 256, {"a": 0.5, "b": 1.5, "c": 1.0}))


def operator_norm(matrix) -> float:
    return float(np.linalg.norm(matrix, 2))
