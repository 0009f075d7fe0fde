from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parahom.cell import solve_cell_problem
from parahom.coefficients import constant
from parahom.dual import solve_dual
from parahom.errors import BadLayerWidth, GridMismatch, TestFieldSupportViolation
from parahom.gridfn import DomainSpec, GridFunction
from parahom.solver import GridPolicy, IBVPProblem, solve_ibvp
from parahom.spectral import CellGrid
from parahom.twoscale import (TestField, build_w_eps, grad_w_norm, random_test_fields,
                              verify_error_identity)

EPS = 0.125
DOMAIN = DomainSpec((1.0,), 0.25)


def _source(x, t):
    return 1.0 + 0 * x


def _pair(A, corr, refine=1):
    h, tau = GridPolicy().steps(EPS)
    h, tau = h / refine, tau / refine**2
    osc = IBVPProblem(DOMAIN, source=_source, coefficient=A, eps=EPS)
    hom = IBVPProblem(DOMAIN, source=_source, a_hat=corr.a_hat)
    return osc, solve_ibvp(osc, h, tau), solve_ibvp(hom, h, tau)


@pytest.fixture(scope="module")
def spacetime_bundle(spacetime, spacetime_corr, spacetime_dual):
    prob, ue, u0 = _pair(spacetime, spacetime_corr)
    return prob, build_w_eps(ue, u0, spacetime_corr, spacetime_dual, spacetime, DOMAIN, EPS)


def test_constant_coefficient_gives_zero_w():
    A = constant(1.5)
    corr = solve_cell_problem(A, CellGrid(1, 8, 8))
    _, ue, u0 = _pair(A, corr)
    bundle = build_w_eps(ue, u0, corr, solve_dual(corr), A, DOMAIN, EPS)
    assert not bundle.w_eps.values.any()
    assert grad_w_norm(bundle) == 0.0


def test_dirichlet_trace_vanishes(spacetime_bundle):
    _, bundle = spacetime_bundle
    assert not bundle.w_eps.values[:, [0, -1]].any()


def test_w_differs_from_plain_error_in_the_interior(spacetime_bundle):
    _, bundle = spacetime_bundle
    e = bundle.u_eps.values - bundle.u0.values
    assert np.max(np.abs(bundle.w_eps.values - e)) > 1e-4


@pytest.mark.parametrize("chunk", [50_000, 5_000, 1])
def test_chunked_gradient_norm_is_exact(spacetime_bundle, chunk):
    _, bundle = spacetime_bundle
    assert grad_w_norm(bundle, chunk_points=chunk) == grad_w_norm(bundle, chunk_points=10**12)


def test_grid_mismatch(spacetime, spacetime_corr, spacetime_dual):
    _, ue, u0 = _pair(spacetime, spacetime_corr)
    shifted = GridFunction(u0.values, u0.h, u0.tau / 2)
    with pytest.raises(GridMismatch):
        build_w_eps(ue, shifted, spacetime_corr, spacetime_dual, spacetime, DOMAIN, EPS)
    cropped = GridFunction(u0.values[:, :-1], u0.h, u0.tau)
    with pytest.raises(GridMismatch):
        build_w_eps(cropped, cropped, spacetime_corr, spacetime_dual, spacetime, DOMAIN, EPS)


@pytest.mark.parametrize("factor", [2.0, 20.0])
def test_bad_layer_width(spacetime_bundle, spacetime, spacetime_corr, spacetime_dual, factor):
    _, bundle = spacetime_bundle
    with pytest.raises(BadLayerWidth):
        build_w_eps(bundle.u_eps, bundle.u0, spacetime_corr, spacetime_dual, spacetime, DOMAIN,
                    EPS, delta=factor * EPS)


# ---------------------------------------------------------------- test fields

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 8))
def test_random_fields_are_admissible_and_seeded(seed, n):
    h, tau = GridPolicy().steps(EPS)
    fields = random_test_fields(DOMAIN, n, seed)
    assert fields == random_test_fields(DOMAIN, n, seed)
    for f in fields:
        f.check_support(DOMAIN, h, tau)


@pytest.mark.parametrize("centers,radii", [
    ((0.05, 0.5), (0.06, 0.2)),      # reaches t = 0
    ((0.2, 0.5), (0.06, 0.2)),       # reaches t = T
    ((0.1, 0.9), (0.05, 0.2)),       # reaches x = 1
])
def test_support_violation(spacetime_bundle, centers, radii):
    prob, bundle = spacetime_bundle
    with pytest.raises(TestFieldSupportViolation):
        verify_error_identity(bundle, prob, [TestField(centers, radii, (1.0,))])


def test_bump_gradient_matches_difference_quotient():
    f = TestField((0.1, 0.5), (0.05, 0.2), (1.3,))
    t = np.linspace(0.06, 0.14, 9)
    x = np.linspace(0.35, 0.65, 11)
    d = 1e-6
    p, dtp, (gx,) = f.evaluate(t, [x])
    p_t, _, _ = f.evaluate(t + d, [x])
    p_x, _, _ = f.evaluate(t, [x + d])
    np.testing.assert_allclose((p_t - p) / d, dtp, rtol=1e-4, atol=1e-4 * np.abs(dtp).max())
    np.testing.assert_allclose((p_x - p) / d, gx, rtol=1e-4, atol=1e-4 * np.abs(gx).max())


# ---------------------------------------------------------------- identity

def test_identity_holds(spacetime_bundle):
    prob, bundle = spacetime_bundle
    results = verify_error_identity(bundle, prob, random_test_fields(DOMAIN, 5, 0))
    assert max(r.rel_residual for r in results) <= 1e-2


def test_identity_residual_shrinks_under_refinement(spacetime, spacetime_corr, spacetime_dual,
                                                    spacetime_bundle):
    prob, coarse = spacetime_bundle
    _, ue, u0 = _pair(spacetime, spacetime_corr, refine=2)
    fine = build_w_eps(ue, u0, spacetime_corr, spacetime_dual, spacetime, DOMAIN, EPS,
                       assemble=False)
    fields = random_test_fields(DOMAIN, 3, 1)
    r1 = max(r.abs_residual for r in verify_error_identity(coarse, prob, fields))
    r2 = max(r.abs_residual for r in verify_error_identity(fine, prob, fields))
    assert r2 <= r1 / 2


def test_flipped_corrector_time_terms_break_the_identity(spacetime_bundle):
    prob, bundle = spacetime_bundle
    for r in verify_error_identity(bundle, prob, random_test_fields(DOMAIN, 5, 0)):
        flipped = r.rhs - 2 * (r.terms["T5"] + r.terms["T6"])
        assert abs(r.lhs - flipped) > 100 * r.abs_residual


def test_identity_trivial_for_constant_coefficient():
    A = constant(1.5)
    corr = solve_cell_problem(A, CellGrid(1, 8, 8))
    prob, ue, u0 = _pair(A, corr)
    bundle = build_w_eps(ue, u0, corr, solve_dual(corr), A, DOMAIN, EPS, assemble=False)
    for r in verify_error_identity(bundle, prob, random_test_fields(DOMAIN, 3, 2)):
        assert r.lhs == 0.0 and r.rhs == 0.0
