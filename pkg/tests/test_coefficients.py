from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parahom.coefficients import (check_ellipticity, constant, estimate_mu, from_samples,
                                  laminate_1d, spacetime_sin)
from parahom.errors import EllipticityViolation
from parahom.spectral import CellGrid

BUILT = [
    lambda: constant(1.5),
    lambda: constant([[2.0, 0.5], [0.5, 1.0]], d=2),
    lambda: laminate_1d(0.5),
    lambda: spacetime_sin(2.0, 1.0),
]


@pytest.mark.parametrize("make", BUILT)
@settings(max_examples=20, deadline=None)
@given(y=st.floats(-2, 2), s=st.floats(-2, 2), shift=st.integers(-3, 3))
def test_integer_periodicity(make, y, s, shift):
    A = make()
    pts = [np.array(y)] * A.d
    shifted = [np.array(y + shift)] * A.d
    np.testing.assert_allclose(A(pts, np.array(s)), A(shifted, np.array(s + shift)),
                               rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("make", BUILT)
def test_ellipticity_probe_passes(make):
    A = make()
    grid = CellGrid(A.d, 16, 1 if A.time_independent else 16)
    A.check_ellipticity(grid)


def test_ellipticity_violation_detected():
    samples = np.full((1, 1, 1, 1, 8, 8), 1.0)
    samples[..., 3, 4] = -0.5
    with pytest.raises(EllipticityViolation):
        check_ellipticity(samples, mu=0.5)


@pytest.mark.parametrize("amp,mu", [(0.5, 0.5), (0.25, 0.75)])
def test_laminate_mu(amp, mu):
    assert laminate_1d(amp).mu == pytest.approx(mu)


def test_spacetime_mu():
    assert spacetime_sin(2.0, 1.0).mu == pytest.approx(1 / 3)


def test_constant_tensor_layout():
    A = constant([[2.0, 0.5], [0.3, 1.0]], d=2)
    vals = A([np.zeros(1), np.zeros(1)], np.zeros(1))[..., 0]
    assert vals[0, 1, 0, 0] == 0.5 and vals[1, 0, 0, 0] == 0.3
    assert A.constant and A.time_independent


def test_from_samples_is_nearest_sample():
    grid = CellGrid(1, 16, 8)
    A = spacetime_sin(2.0, 1.0)
    samples = A.sample(grid)
    G = from_samples(samples)
    assert not G.time_independent
    y, s = grid.mesh()
    np.testing.assert_array_equal(G([y], s), samples)
    # off-grid points snap to the nearest collocation value
    off = G([np.array([1 / 16 + 0.01])], np.array([0.0]))[..., 0]
    np.testing.assert_array_equal(off, samples[..., 1, 0])


def test_from_samples_flags_constant():
    G = from_samples(np.full((1, 1, 1, 1, 8, 8), 3.0))
    assert G.constant and G.time_independent
    assert estimate_mu(np.full((1, 1, 1, 1, 8, 8), 3.0)) == pytest.approx(1 / 3)
