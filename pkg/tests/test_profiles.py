import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyson_lab import (ProfileError, make_profile, normalize,
                       profile_from_entries, profile_from_json, spectral_radius)


def test_flat_entries_quarter():
    prof = make_profile("flat", 4)
    assert np.array_equal(prof.entries, np.full((4, 4), 0.25))


def test_two_block_entries():
    prof = make_profile("two_block", 4, {"a": 0.5, "b": 1.5, "c": 1.0})
    expected = np.array([[0.5, 0.5, 1.5, 1.5],
                         [0.5, 0.5, 1.5, 1.5],
                         [1.5, 1.5, 1.0, 1.0],
                         [1.5, 1.5, 1.0, 1.0]]) / 4
    assert np.array_equal(prof.entries, expected)


def test_smooth_kernel_range():
    # dense evaluation of f(x, y) = 1 + 0.5 sin(2 pi (x + y)) over the grid
    prof = make_profile("smooth_kernel", 128)
    assert prof.entries.min() >= 0.5 / 128 - 1e-15
    assert prof.entries.max() <= 1.5 / 128 + 1e-15
    x = np.arange(128) / 128
    dense = (1 + 0.5 * np.sin(2 * np.pi * np.add.outer(x, x))) / 128
    assert np.array_equal(prof.entries, dense)


def test_rejects_nonpositive_entries():
    with pytest.raises(ProfileError):
        make_profile("smooth_kernel", 128, {"amplitude": 1.0})
    with pytest.raises(ProfileError):
        make_profile("two_block", 4, {"a": 0.0, "b": 1.0, "c": 1.0})
    with pytest.raises(ProfileError):
        make_profile("two_block", 4, {"a": -0.5, "b": 1.0, "c": 1.0})


def test_rejects_bad_dimensions():
    with pytest.raises(ProfileError):
        make_profile("flat", 1)
    with pytest.raises(ProfileError):
        make_profile("flat", 5000)


def test_flat_radius_is_one():
    # constant row sums 1, Perron vector constant
    assert spectral_radius(make_profile("flat", 37)) == pytest.approx(1.0, abs=1e-12)


def test_scaled_flat_radius():
    for c in (0.5, 2.0, 10.0):
        prof = make_profile("flat", 16, {"scale": c})
        assert spectral_radius(prof) == pytest.approx(c, rel=1e-10)


def test_two_block_radius_against_dense_eigensolve():
    prof = make_profile("two_block", 256, {"a": 0.5, "b": 1.5, "c": 1.0})
    dense = np.abs(np.linalg.eigvals(prof.entries)).max()
    assert spectral_radius(prof) == pytest.approx(dense, rel=1e-10)


def test_radius_transpose_invariance():
    prof = make_profile("smooth_kernel", 64, {"amplitude": 0.7})
    assert spectral_radius(prof.entries.T) == pytest.approx(
        spectral_radius(prof), rel=1e-10)


@settings(max_examples=15, deadline=None)
@given(a=st.floats(0.1, 3.0), b=st.floats(0.1, 3.0), c=st.floats(0.1, 3.0),
       scale=st.sampled_from([0.5, 2.0, 10.0]))
def test_radius_scaling_property(a, b, c, scale):
    base = make_profile("two_block", 32, {"a": a, "b": b, "c": c})
    scaled = make_profile("two_block", 32, {"a": a, "b": b, "c": c, "scale": scale})
    assert spectral_radius(scaled) == pytest.approx(
        scale * spectral_radius(base), rel=1e-10)


def test_cached_radius_matches_recompute():
    prof = make_profile("smooth_kernel", 96, {"amplitude": 0.3})
    assert prof.perron_radius == pytest.approx(spectral_radius(prof), rel=1e-10)


def test_normalize_flat_unchanged():
    prof = normalize(make_profile("flat", 12))
    assert np.allclose(prof.entries, 1.0 / 12, atol=1e-14)


def test_normalize_scaled_flat():
    prof = normalize(make_profile("flat", 12, {"scale": 2.0}))
    assert np.allclose(prof.entries, 1.0 / 12, atol=1e-12)


def test_normalize_idempotent():
    prof = normalize(make_profile("smooth_kernel", 128))
    again = normalize(prof)
    assert abs(again.perron_radius - 1.0) <= 1e-10
    assert np.allclose(prof.entries, again.entries, rtol=1e-12)
    assert abs(prof.perron_radius - 1.0) <= 1e-10


def test_flatness_metadata():
    prof = make_profile("two_block", 8, {"a": 0.5, "b": 1.5, "c": 1.0})
    assert prof.s_low == pytest.approx(0.5)
    assert prof.s_high == pytest.approx(1.5)
    assert prof.entries.min() >= prof.s_low / prof.n - 1e-15
    assert prof.entries.max() <= prof.s_high / prof.n + 1e-15


def test_json_round_trip_params_bit_exact():
    prof = make_profile("two_block", 16, {"a": 0.1 + 0.2, "b": 1.5, "c": 1.0})
    back = profile_from_json(prof.to_json())
    assert back.params == prof.params
    assert np.array_equal(back.entries, prof.entries)
    # normalization folds into the scale parameter and survives the trip
    norm = normalize(prof)
    back2 = profile_from_json(norm.to_json())
    assert back2.params["scale"] == norm.params["scale"]
    assert np.array_equal(back2.entries, norm.entries)


def test_json_with_entries_and_unknown_keys():
    prof = profile_from_entries(np.full((3, 3), 0.2))
    back = profile_from_json(prof.to_json())
    assert np.array_equal(back.entries, prof.entries)
    with pytest.raises(ProfileError):
        profile_from_json(json.dumps({"n": 4, "kind": "flat", "spurious": 1}))


def test_entries_read_only():
    prof = make_profile("flat", 4)
    with pytest.raises(ValueError):
        prof.entries[0, 0] = 99.0
