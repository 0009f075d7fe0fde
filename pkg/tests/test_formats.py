from __future__ import annotations

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parahom import formats


@settings(max_examples=15, deadline=None)
@given(d=st.sampled_from([1, 2]), m=st.sampled_from([1, 2]), seed=st.integers(0, 1000))
def test_coefficient_roundtrip(tmp_path_factory, d, m, seed):
    path = tmp_path_factory.mktemp("c") / "a.phcf"
    shape = (d, d, m, m) + (8,) * d + (4,)
    vals = np.random.default_rng(seed).standard_normal(shape)
    formats.write_coefficient(path, vals)
    np.testing.assert_array_equal(formats.read_coefficient(path), vals)


def test_coefficient_header_layout(tmp_path):
    path = tmp_path / "a.phcf"
    vals = np.arange(1 * 1 * 1 * 1 * 8 * 4, dtype=float).reshape(1, 1, 1, 1, 8, 4)
    formats.write_coefficient(path, vals)
    raw = path.read_bytes()
    assert raw[:4] == b"PHCF"
    assert struct.unpack("<4I", raw[4:20]) == (1, 1, 8, 4)
    assert struct.unpack("<2d", raw[20:36]) == (0.0, 1.0)


def test_dual_roundtrip(tmp_path):
    path = tmp_path / "phi.phdc"
    vals = np.random.default_rng(1).standard_normal((2, 2, 1, 1, 1, 8, 8))
    formats.write_dual(path, vals)
    assert path.read_bytes()[:4] == b"PHDC"
    np.testing.assert_array_equal(formats.read_dual(path), vals)


def test_grid_function_roundtrip(tmp_path):
    path = tmp_path / "u.phgf"
    vals = np.random.default_rng(2).standard_normal((5, 9, 1))
    formats.write_grid_function(path, vals, 0.125, 0.01)
    got, h, tau = formats.read_grid_function(path)
    np.testing.assert_array_equal(got, vals)
    assert (h, tau) == (0.125, 0.01)


@pytest.mark.parametrize("cut", [3, 10, -8])
def test_truncated_or_bad_files_rejected(tmp_path, cut):
    path = tmp_path / "a.phcf"
    formats.write_coefficient(path, np.ones((1, 1, 1, 1, 8, 4)))
    raw = path.read_bytes()
    path.write_bytes(raw[:cut] if cut > 0 else raw[:cut])
    with pytest.raises(ValueError):
        formats.read_coefficient(path)


def test_wrong_magic_rejected(tmp_path):
    path = tmp_path / "a.phcf"
    formats.write_dual(path, np.ones((2, 2, 1, 1, 1, 8, 8)))
    with pytest.raises(ValueError):
        formats.read_coefficient(path)
