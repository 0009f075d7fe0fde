from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parahom import spectral as sp
from parahom.spectral import CellGrid, TrigInterpolant


@pytest.mark.parametrize("n_space,n_time", [(7, 8), (6, 8), (8, 7), (8, 0)])
def test_grid_rejects_bad_sizes(n_space, n_time):
    with pytest.raises(ValueError):
        CellGrid(1, n_space, n_time)


@pytest.mark.parametrize("d,n_space,n_time,size", [(1, 8, 8, 64), (2, 8, 16, 1024), (1, 16, 1, 16)])
def test_grid_size(d, n_space, n_time, size):
    grid = CellGrid(d, n_space, n_time)
    assert grid.size == size
    assert grid.elliptic == (n_time == 1)


@pytest.mark.parametrize("axis,k", [(0, 1), (0, 3), (1, 2)])
def test_derivative_of_single_mode(axis, k):
    grid = CellGrid(1, 16, 16)
    y, s = grid.mesh()
    coord = (y, s)[axis]
    f = np.sin(2 * np.pi * k * coord) + 0 * (y + s)
    expected = 2 * np.pi * k * np.cos(2 * np.pi * k * coord) + 0 * (y + s)
    np.testing.assert_allclose(sp.derivative(f, grid, axis), expected, atol=1e-11)


def test_laplacian_symbol_matches_isotropic_off_nyquist():
    grid = CellGrid(1, 16, 8)
    k2 = sum(k.astype(float) ** 2 for k in grid.wavenumbers)
    off = ~grid.nyquist_mask
    np.testing.assert_allclose(grid.laplacian_symbol[off], -4 * np.pi**2 * np.broadcast_to(k2, grid.shape)[off])


def test_solution_mask_excludes_mean():
    grid = CellGrid(2, 8, 8)
    assert not grid.solution_mask[0, 0, 0]
    assert not grid.solution_mask[4, 4, 4]
    assert grid.solution_mask[1, 0, 0]


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_interpolant_reproduces_grid_values(seed):
    rng = np.random.default_rng(seed)
    grid = CellGrid(1, 8, 8)
    field = rng.standard_normal((2,) + grid.shape)
    interp = TrigInterpolant(field, grid)
    np.testing.assert_allclose(interp.evaluate_tensor(grid.coordinates()), field, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=-3.0, max_value=3.0), st.floats(min_value=-3.0, max_value=3.0))
def test_interpolant_is_exact_for_band_limited(y0, s0):
    grid = CellGrid(1, 8, 8)
    fn = lambda y, s: np.cos(2 * np.pi * (2 * y - s)) + np.sin(2 * np.pi * 3 * s)
    y, s = grid.mesh()
    interp = TrigInterpolant(fn(y, s), grid)
    got = interp.evaluate_tensor([np.array([y0]), np.array([s0])])[0, 0]
    assert got == pytest.approx(fn(y0, s0), abs=1e-11)


def test_compressed_evaluation_matches_tensor():
    grid = CellGrid(1, 8, 8)
    field = np.random.default_rng(3).standard_normal(grid.shape)
    interp = TrigInterpolant(field, grid)
    x = np.linspace(0, 3, 13)
    t = np.linspace(0, 2, 9)
    values, idx = interp.evaluate_compressed([x, t])
    full = sp.gather(values, idx, time_first=True)
    direct = interp.evaluate_tensor([x, t]).T
    np.testing.assert_allclose(full, direct, atol=1e-12)


def test_project_removes_mean():
    grid = CellGrid(1, 8, 8)
    field = np.random.default_rng(0).standard_normal(grid.shape) + 4.0
    assert abs(sp.grid_mean(sp.project(field, grid), grid)) < 1e-14
