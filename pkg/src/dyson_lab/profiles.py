"""Variance profiles: construction, validation, Perron spectral radius.

A variance profile is an n-by-n matrix S of nonnegative reals whose entry
(i, j) is the variance of the (i, j) entry of the random matrix under
study.  All profiles built here are *flat*: every entry lies between
s_low/n and s_high/n for positive constants s_low <= s_high, so S is
entrywise positive and Perron-Frobenius theory applies to it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import NumericalError, ProfileError

PROFILE_KINDS = ("flat", "two_block", "smooth_kernel", "custom")

#: Dimension cap; profiles are stored dense, so memory grows as n^2.
MAX_DIMENSION = 4096

_POWER_TOL = 1e-12
_POWER_MAXITER = 100_000


@dataclass(frozen=True)
class VarianceProfile:
    """Validated dense variance profile with cached Perron radius.

    Immutable after construction; `entries` is a read-only array, so a
    profile can be shared freely across threads.
    """

    n: int
    entries: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)
    s_low: float = 0.0
    s_high: float = 0.0
    perron_radius: float = 0.0

    def __post_init__(self):
        self.entries.setflags(write=False)

    def to_json_dict(self, include_entries: bool = False) -> dict:
        doc = {"n": self.n, "kind": self.kind, "params": dict(self.params)}
        if include_entries or self.kind == "custom":
            doc["entries"] = self.entries.tolist()
        return doc

    def to_json(self, include_entries: bool = False) -> str:
        return json.dumps(self.to_json_dict(include_entries), sort_keys=True)


def _base_entries(kind: str, n: int, params: Mapping) -> np.ndarray:
    if kind == "flat":
        return np.full((n, n), 1.0 / n)
    if kind == "two_block":
        try:
            a, b, c = float(params["a"]), float(params["b"]), float(params["c"])
        except KeyError as exc:
            raise ProfileError(f"two_block profile requires parameter {exc}") from exc
        half = n // 2
        entries = np.empty((n, n))
        entries[:half, :half] = a / n
        entries[:half, half:] = b / n
        entries[half:, :half] = b / n
        entries[half:, half:] = c / n
        return entries
    if kind == "smooth_kernel":
        amplitude = float(params.get("amplitude", 0.5))
        x = np.arange(n) / n
        phase = 2.0 * np.pi * np.add.outer(x, x)
        return (1.0 + amplitude * np.sin(phase)) / n
    raise ProfileError(f"unknown profile kind {kind!r}")


def make_profile(kind: str, n: int, params: Mapping | None = None) -> VarianceProfile:
    """Construct a validated profile of the given kind and dimension.

    Supported kinds:

    * ``flat``: every entry equals ``scale/n`` (scale defaults to 1).
    * ``two_block``: the index set is split into two halves and the entry
      depends only on the block, with per-block values ``a``, ``b``, ``c``
      (diagonal blocks a and c, off-diagonal blocks b), all divided by n.
    * ``smooth_kernel``: entry (i, j) is ``f(i/n, j/n)/n`` for the bounded
      positive kernel ``f(x, y) = 1 + amplitude*sin(2*pi*(x+y))``.

    A ``scale`` parameter multiplies all entries and is how `normalize`
    records its rescaling.  Parameters that would produce a zero or
    negative entry are rejected.
    """
    params = dict(params or {})
    if n < 2:
        raise ProfileError(f"profile dimension must be at least 2, got {n}")
    if n > MAX_DIMENSION:
        raise ProfileError(f"profile dimension {n} exceeds cap {MAX_DIMENSION}")
    if kind not in PROFILE_KINDS or kind == "custom":
        raise ProfileError(f"unknown profile kind {kind!r}")
    scale = float(params.get("scale", 1.0))
    entries = _base_entries(kind, n, params) * scale
    return profile_from_entries(entries, kind=kind, params=params)


def profile_from_entries(entries: np.ndarray, kind: str = "custom",
                         params: Mapping | None = None) -> VarianceProfile:
    """Wrap an explicit entry matrix as a validated profile."""
    entries = np.ascontiguousarray(entries, dtype=float)
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise ProfileError(f"profile entries must be square, got shape {entries.shape}")
    n = entries.shape[0]
    lo = float(entries.min())
    hi = float(entries.max())
    if lo <= 0.0:
        raise ProfileError(f"profile entries must be strictly positive, min is {lo}")
    radius = spectral_radius(entries)
    return VarianceProfile(n=n, entries=entries, kind=kind, params=dict(params or {}),
                           s_low=lo * n, s_high=hi * n, perron_radius=radius)


def profile_from_json_dict(doc: Mapping) -> VarianceProfile:
    known = {"n", "kind", "params", "entries"}
    unknown = set(doc) - known
    if unknown:
        raise ProfileError(f"unknown profile keys: {sorted(unknown)}")
    kind = doc.get("kind", "custom")
    n = int(doc["n"])
    params = dict(doc.get("params", {}))
    if "entries" in doc:
        entries = np.asarray(doc["entries"], dtype=float)
        if entries.shape != (n, n):
            raise ProfileError(f"entries shape {entries.shape} does not match n={n}")
        return profile_from_entries(entries, kind=kind, params=params)
    return make_profile(kind, n, params)


def profile_from_json(text: str) -> VarianceProfile:
    return profile_from_json_dict(json.loads(text))


def spectral_radius(profile) -> float:
    """Perron spectral radius of an entrywise-positive matrix.

    Power iteration from the all-ones vector, which has a nonzero
    component along the Perron direction for any positive matrix, so
    convergence is guaranteed.  Successive Rayleigh quotients must agree
    to a relative 1e-12 before the iteration stops.
    """
    matrix = profile.entries if isinstance(profile, VarianceProfile) else np.asarray(profile, dtype=float)
    n = matrix.shape[0]
    x = np.full(n, 1.0 / np.sqrt(n))
    rayleigh = float("inf")
    for _ in range(_POWER_MAXITER):
        y = matrix @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            raise NumericalError("power iteration collapsed to the zero vector")
        new = float(x @ y)
        if abs(new - rayleigh) <= _POWER_TOL * max(abs(new), 1e-300):
            return new
        rayleigh = new
        x = y / norm
    raise NumericalError("power iteration did not converge; "
                         "this indicates a corrupted profile matrix")


def normalize(profile: VarianceProfile) -> VarianceProfile:
    """Rescale a profile so that its Perron radius is 1.

    For the built-in kinds the rescaling is folded into the ``scale``
    parameter and the entries are regenerated, which keeps the JSON
    round trip exact; custom profiles are divided entrywise.
    """
    radius = spectral_radius(profile)
    if profile.kind == "custom":
        return profile_from_entries(profile.entries / radius, kind="custom",
                                    params=profile.params)
    params = dict(profile.params)
    params["scale"] = float(params.get("scale", 1.0)) / radius
    return make_profile(profile.kind, profile.n, params)
