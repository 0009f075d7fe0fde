"""Two-scale discrepancy ``w_eps`` and the weak-form error identity.

``w_eps = u_eps - u0 - V`` with the corrector part

    V^a = eps chi_j^{ab}(x/eps, t/eps^2) K_j^b
          + eps^2 phi_{(d+1)ij}^{ab}(x/eps, t/eps^2) d_i K_j^b,     K_j = K_eps(d_j u0).

Correctors are evaluated by exact trigonometric interpolation of their
collocation data; derivatives of ``V`` are formed analytically (chain rule
on the corrector factors, kernel derivatives on ``K``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .cell import CorrectorSet
from .coefficients import CoefficientField
from .dual import DualCorrectorSet
from .errors import GridMismatch, TestFieldSupportViolation
from .gridfn import DomainSpec, GridFunction, _trapezoid
from .smooth import KOperator, default_delta, stencil_radii
from .solver import FVGrid, IBVPProblem, spatial_gradient

CHUNK_POINTS = 2_000_000


class _Sampler:
    """Gathers periodic torus fields at ``(x / eps, t / eps^2)`` on a target grid."""

    def __init__(self, eps: float, times: np.ndarray, coords: list[np.ndarray]):
        self.eps = eps
        self.coords = [c / eps for c in coords] + [times / eps**2]

    def __call__(self, interp: sp.TrigInterpolant) -> np.ndarray:
        values, idx = interp.evaluate_compressed(self.coords)
        return sp.gather(values, idx, time_first=True)

    def coefficient(self, A: CoefficientField) -> np.ndarray:
        """``a_ij^{ab}(x/eps, t/eps^2)`` with shape ``(d, d, m, m, n_t) + spatial``."""
        mesh = np.meshgrid(*([self.coords[-1]] + self.coords[:-1]), indexing="ij", sparse=True)
        return np.ascontiguousarray(A(mesh[1:], mesh[0]))


@dataclass(frozen=True)
class CorrectorInterpolants:
    """Trigonometric interpolants of every corrector-derived field the expansion needs."""

    chi: sp.TrigInterpolant            # [j, a, b]
    dchi: sp.TrigInterpolant           # [l, j, a, b]  = d_{y_l} chi_j
    phi: sp.TrigInterpolant            # [k, i, j, a, b], k, i = 1..d+1
    phi_t: sp.TrigInterpolant          # [i, j, a, b]  = phi_{(d+1) i j}
    dphi_t: sp.TrigInterpolant         # [l, i, j, a, b] = d_{y_l} phi_{(d+1) i j}

    @classmethod
    def build(cls, corr: CorrectorSet, dual: DualCorrectorSet) -> CorrectorInterpolants:
        grid = corr.grid
        d = corr.d
        phi_t = np.asarray(dual.phi[d, :d])
        return cls(
            chi=sp.TrigInterpolant(corr.chi, grid),
            dchi=sp.TrigInterpolant(sp.gradient(corr.chi, grid), grid),
            phi=sp.TrigInterpolant(np.asarray(dual.phi), grid),
            phi_t=sp.TrigInterpolant(phi_t, grid),
            dphi_t=sp.TrigInterpolant(sp.gradient(phi_t, grid), grid),
        )


@dataclass
class ExpansionBundle:
    """Solved fields on one grid together with the corrector data."""

    u_eps: GridFunction
    u0: GridFunction
    corr: CorrectorSet
    dual: DualCorrectorSet
    coefficient: CoefficientField
    domain: DomainSpec
    eps: float
    delta: float
    w_eps: GridFunction | None = None
    interp: CorrectorInterpolants | None = field(default=None, repr=False)

    @property
    def kop(self) -> KOperator:
        return KOperator(self.eps, self.delta, self.domain.lengths, self.domain.T)

    @property
    def d(self) -> int:
        return self.u0.d

    @property
    def m(self) -> int:
        return self.u0.m

    def gradient_data(self) -> GridFunction:
        """Nodal ``d_j u0`` stacked as components ``(j, b)`` flattened to ``j * m + b``."""
        g = spatial_gradient(self.u0)            # (d, n_t, X..., m)
        vals = np.moveaxis(g, 0, -2).reshape(g.shape[1:-1] + (self.d * self.m,))
        return self.u0.like(vals)


@dataclass(frozen=True)
class _KFields:
    """``K_j^b`` and its derivatives on one target grid, component-first layouts."""

    K: np.ndarray        # [j, b, t, X]
    dK: np.ndarray       # [i, j, b, t, X]
    d2K: np.ndarray      # [l, i, j, b, t, X]
    dtK: np.ndarray | None


def _k_fields(bundle: ExpansionBundle, face_axis: int | None, with_dt: bool) -> _KFields:
    d, m = bundle.d, bundle.m
    data = bundle.gradient_data()
    kop = bundle.kop

    def split(arr, n_lead):
        # arr: lead (n_lead axes) + (t, X..., d*m) -> lead + (j, b, t, X...)
        grid_shape = arr.shape[n_lead:-1]
        arr = arr.reshape(arr.shape[:n_lead] + grid_shape + (d, m))
        return np.moveaxis(arr, (-2, -1), (n_lead, n_lead + 1))

    K = split(kop.apply(data, face_axis), 0)
    dK = split(kop.grad(data, face_axis), 1)
    d2K = split(kop.hess(data, face_axis), 2)
    dtK = split(kop.dt(data, face_axis), 0) if with_dt else None
    return _KFields(K, dK, d2K, dtK)


def _target(u: GridFunction, face_axis: int | None) -> tuple[np.ndarray, list[np.ndarray]]:
    coords = []
    for a in range(u.d):
        x = u.axis_coordinates(a)
        if a == face_axis:
            x = 0.5 * (x[1:] + x[:-1])
        coords.append(x)
    return u.times(), coords


def _expansion_terms(bundle: ExpansionBundle, face_axis: int | None, with_dt: bool = False):
    if bundle.interp is None:
        bundle.interp = CorrectorInterpolants.build(bundle.corr, bundle.dual)
    times, coords = _target(bundle.u0, face_axis)
    sampler = _Sampler(bundle.eps, times, coords)
    kf = _k_fields(bundle, face_axis, with_dt)
    return sampler, kf


def corrector_part(bundle: ExpansionBundle) -> np.ndarray:
    """``V`` at the nodes, shape ``(m, n_t) + X``."""
    sampler, kf = _expansion_terms(bundle, None)
    it = bundle.interp
    eps = bundle.eps
    chi = sampler(it.chi)
    V = eps * np.einsum("jab...,jb...->a...", chi, kf.K)
    del chi
    phi_t = sampler(it.phi_t)
    V += eps**2 * np.einsum("ijab...,ijb...->a...", phi_t, kf.dK)
    return V


def corrector_gradient(bundle: ExpansionBundle, sampler: _Sampler, kf: _KFields) -> np.ndarray:
    """``d_l V^a`` on the sampler grid, shape ``(l, a, t, X...)``."""
    it = bundle.interp
    eps = bundle.eps
    out = np.einsum("ljab...,jb...->la...", sampler(it.dchi), kf.K)
    out += eps * np.einsum("jab...,ljb...->la...", sampler(it.chi), kf.dK)
    out += eps * np.einsum("lijab...,ijb...->la...", sampler(it.dphi_t), kf.dK)
    out += eps**2 * np.einsum("ijab...,lijb...->la...", sampler(it.phi_t), kf.d2K)
    return out


def _check_grids(u_eps: GridFunction, u0: GridFunction) -> None:
    try:
        u_eps.check_aligned(u0)
    except GridMismatch as exc:
        raise GridMismatch(f"u_eps and u0 must share one grid: {exc}") from None


def build_w_eps(u_eps: GridFunction, u0: GridFunction, corr: CorrectorSet,
                dual: DualCorrectorSet, coefficient: CoefficientField, domain: DomainSpec,
                eps: float, delta: float | None = None,
                assemble: bool = True) -> ExpansionBundle:
    """Assemble ``w_eps`` at the nodes and return the full bundle.

    With ``assemble=False`` the bundle is returned without the nodal
    ``w_eps`` (enough for :func:`grad_w_norm`).

    Raises
    ------
    GridMismatch
        If the two solutions are not on the same grid.
    BadLayerWidth
        If ``delta`` lies outside ``(2 eps, 20 eps)``.
    """
    _check_grids(u_eps, u0)
    if u0.spatial_shape != domain.node_counts(u0.h):
        raise GridMismatch("solutions do not cover the domain nodes")
    delta = default_delta(eps) if delta is None else delta
    bundle = ExpansionBundle(u_eps, u0, corr, dual, coefficient, domain, eps, delta)
    bundle.kop  # validates delta
    if not assemble:
        return bundle
    V = corrector_part(bundle)
    w = u_eps.values - u0.values - np.moveaxis(V, 0, -1)
    bundle.w_eps = u0.like(w)
    return bundle


def grad_w_faces(bundle: ExpansionBundle) -> list[GridFunction]:
    """``d_i w_eps`` on the ``i``-faces at every time level.

    The ``u_eps - u0`` part uses the forward difference across the face
    (the flux difference of the scheme); the corrector part is analytic.
    """
    out = []
    e = bundle.u_eps.values - bundle.u0.values
    for i in range(bundle.d):
        sampler, kf = _expansion_terms(bundle, i)
        dV = corrector_gradient(bundle, sampler, kf)[i]
        De = np.diff(e, axis=1 + i) / bundle.u0.h
        vals = De - np.moveaxis(dV, 0, -1)
        centering = tuple("cell" if a == i else "node" for a in range(bundle.d))
        out.append(GridFunction(vals, bundle.u0.h, bundle.u0.tau, centering))
    return out


def _window(bundle: ExpansionBundle, lo: int, hi: int) -> ExpansionBundle:
    """The bundle restricted to time levels ``lo:hi`` (shares the interpolants)."""
    def cut(u: GridFunction) -> GridFunction:
        return GridFunction(u.values[lo:hi], u.h, u.tau, u.centering, u.t0 + lo * u.tau)

    if bundle.interp is None:
        bundle.interp = CorrectorInterpolants.build(bundle.corr, bundle.dual)
    return ExpansionBundle(cut(bundle.u_eps), cut(bundle.u0), bundle.corr, bundle.dual,
                           bundle.coefficient, bundle.domain, bundle.eps, bundle.delta,
                           interp=bundle.interp)


def grad_w_norm(bundle: ExpansionBundle, chunk_points: int = CHUNK_POINTS) -> float:
    """``||grad w_eps||_{L2(Omega_T)}`` from the face gradients.

    Time levels are processed in windows of about ``chunk_points`` space-time
    points.  Each window carries a halo of the kernel's time radius, so the
    smoothed fields on its core coincide with the global ones.
    """
    u0 = bundle.u0
    n_levels = u0.n_levels
    halo = stencil_radii(bundle.eps, u0.h, u0.tau)[0] + 1
    per_level = max(1, int(np.prod(u0.spatial_shape)))
    core = max(4 * halo, chunk_points // per_level)
    w_time = _trapezoid(n_levels, u0.tau)
    total = 0.0
    for start in range(0, n_levels, core):
        stop = min(start + core, n_levels)
        lo, hi = max(0, start - halo), min(n_levels, stop + halo)
        for g in grad_w_faces(_window(bundle, lo, hi)):
            w = g.quadrature_weights()
            w = w / _trapezoid(g.n_levels, g.tau).reshape((-1,) + (1,) * g.d)
            w = w[start - lo: stop - lo] * w_time[start:stop].reshape((-1,) + (1,) * g.d)
            total += float(np.sum(w * np.sum(g.values[start - lo: stop - lo] ** 2, axis=-1)))
    return float(np.sqrt(total))


# ---------------------------------------------------------------- test fields

def _bump(z: np.ndarray):
    inside = np.abs(z) < 1.0
    q = np.where(inside, 1.0 - z * z, 1.0)
    val = np.where(inside, np.exp(-1.0 / q), 0.0)
    return val, val * (-2.0 * z / q**2)


@dataclass(frozen=True)
class TestField:
    """Tensor-product bump ``psi^a(x, t) = c_a b((t - c_t)/r_t) prod_k b((x_k - c_k)/r_k)``."""

    __test__ = False

    centers: tuple[float, ...]      # (t, x_1, ..., x_d)
    radii: tuple[float, ...]
    weights: tuple[float, ...]      # one per component

    def check_support(self, domain: DomainSpec, h: float, tau: float) -> None:
        bounds = [(0.0, domain.T, tau)] + [(0.0, L, h) for L in domain.lengths]
        for c, r, (lo, hi, step) in zip(self.centers, self.radii, bounds):
            if c - r < lo + step or c + r > hi - step:
                raise TestFieldSupportViolation(
                    f"test field support [{c - r:.4g}, {c + r:.4g}] reaches the boundary of "
                    f"[{lo}, {hi}]")

    def evaluate(self, times: np.ndarray, coords: list[np.ndarray]):
        """Returns ``(psi, dt_psi, grad_psi)`` with shapes ``(m, t, X)``, ``(m, t, X)``, ``(d, m, t, X)``."""
        axes = [times] + list(coords)
        vals, ders = [], []
        for k, (x, c, r) in enumerate(zip(axes, self.centers, self.radii)):
            v, dv = _bump((x - c) / r)
            shape = [1] * len(axes)
            shape[k] = -1
            vals.append(v.reshape(shape))
            ders.append((dv / r).reshape(shape))
        full_shape = tuple(len(a) for a in axes)
        w = np.asarray(self.weights).reshape((-1,) + (1,) * len(axes))

        def product(replace: int | None):
            out = np.ones(full_shape)
            for k in range(len(axes)):
                out = out * (ders[k] if k == replace else vals[k])
            return w * out

        grad = np.stack([product(k + 1) for k in range(len(coords))])
        return product(None), product(0), grad


def random_test_fields(domain: DomainSpec, n: int, seed: int, m: int = 1) -> list[TestField]:
    """``n`` seeded bumps well inside ``Omega_T`` (radii 15-30 % of each extent)."""
    rng = np.random.default_rng(seed)
    extents = (domain.T,) + domain.lengths
    fields = []
    for _ in range(n):
        radii = tuple(float(rng.uniform(0.15, 0.3) * L) for L in extents)
        centers = tuple(float(rng.uniform(1.1 * r, L - 1.1 * r)) for r, L in zip(radii, extents))
        weights = tuple(float(v) for v in rng.uniform(0.5, 1.5, size=m))
        fields.append(TestField(centers, radii, weights))
    return fields


# ---------------------------------------------------------------- identity

@dataclass(frozen=True)
class IdentityResult:
    lhs: float
    rhs: float
    terms: dict

    @property
    def abs_residual(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def rel_residual(self) -> float:
        scale = max(abs(self.lhs), abs(self.rhs))
        return self.abs_residual / scale if scale > 0 else 0.0

    def as_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "abs_residual": self.abs_residual,
                "rel_residual": self.rel_residual, "terms": dict(self.terms)}


def _scheme_pairings(bundle: ExpansionBundle, problem: IBVPProblem, a_hat: np.ndarray,
                     psi: TestField, theta: float) -> tuple[float, float]:
    """Discrete pairings of ``e = u_eps - u0`` and of ``(a_hat - a) grad u0`` with ``psi``.

    Both use exactly the scheme's quadrature (lumped mass, face fluxes at
    ``t_n + theta tau``), so the first equals the second up to the linear
    solver precision.
    """
    u0, ue = bundle.u0, bundle.u_eps
    d, m = u0.d, u0.m
    grid = FVGrid(bundle.domain, u0.h)
    tau = u0.tau
    n_steps = u0.n_levels - 1
    t_mid = (np.arange(n_steps) + theta) * tau
    coords = [u0.axis_coordinates(a) for a in range(d)]
    psi_mid, _, _ = psi.evaluate(t_mid, coords)                      # (m, n, X)
    vol = grid.node_volumes()
    e = np.moveaxis(ue.values - u0.values, -1, 0)                    # (m, t, X)
    u0v = np.moveaxis(u0.values, -1, 0)
    time_term = float(np.sum(psi_mid * vol * (e[:, 1:] - e[:, :-1])))
    e_bar = theta * e[:, 1:] + (1 - theta) * e[:, :-1]
    u_bar = theta * u0v[:, 1:] + (1 - theta) * u0v[:, :-1]

    def apply(G, field):
        flat = field.reshape(-1, field.shape[-1] if d == 1 else int(np.prod(field.shape[2:])))
        out = (G @ flat.T).T
        return out.reshape(field.shape[:2] + (G.shape[0],))

    flux_e = 0.0
    flux_u0 = 0.0
    a_hat = np.asarray(a_hat)
    for i in range(d):
        Gii = grid.difference(i, i)
        gpsi = apply(Gii, psi_mid)                                   # (m, n, faces)
        vol_i = grid.face_volumes(i).ravel()
        coeff = np.stack([np.stack([np.asarray(problem.face_coefficients(grid, t)[i])
                                    .reshape(d, m, m, -1)[j] for j in range(d)])
                          for t in t_mid])                           # (n, j, a, b, faces)
        for j in range(d):
            Gij = grid.difference(i, j)
            ge = apply(Gij, e_bar)                                   # (b, n, faces)
            gu = apply(Gij, u_bar)
            a_ij = coeff[:, j]                                       # (n, a, b, faces)
            flux_e += tau * float(np.einsum("nabf,bnf,anf,f->", a_ij, ge, gpsi, vol_i))
            diff = a_hat[i, j][None, :, :, None] - a_ij
            flux_u0 += tau * float(np.einsum("nabf,bnf,anf,f->", diff, gu, gpsi, vol_i))
    return time_term + flux_e, flux_u0


def verify_error_identity(bundle: ExpansionBundle, problem: IBVPProblem,
                          test_fields: list[TestField], theta: float = 0.5) -> list[IdentityResult]:
    """Evaluate both sides of the weak error identity for each test field.

    The ``u_eps - u0`` contributions are paired through the scheme's own
    discrete weak form; every term involving ``K_eps`` or the correctors is
    integrated by quadrature on the node/level grid, where all integrands
    are smooth and compactly supported.

    Raises
    ------
    TestFieldSupportViolation
        If some ``psi`` reaches the lateral boundary or the initial/final time.
    """
    u0 = bundle.u0
    for psi in test_fields:
        psi.check_support(bundle.domain, u0.h, u0.tau)
    d, m, eps = bundle.d, bundle.m, bundle.eps
    a_hat = np.asarray(bundle.corr.a_hat)
    sampler, kf = _expansion_terms(bundle, None, with_dt=True)
    it = bundle.interp
    times, coords = _target(u0, None)
    a = sampler.coefficient(bundle.coefficient)                      # (i, j, a, b, t, X)
    chi = sampler(it.chi)
    phi = sampler(it.phi)
    phi_t = sampler(it.phi_t)
    dphi_t = sampler(it.dphi_t)
    V = eps * np.einsum("jab...,jb...->a...", chi, kf.K)
    V += eps**2 * np.einsum("ijab...,ijb...->a...", phi_t, kf.dK)
    dV = corrector_gradient(bundle, sampler, kf)                     # (l, a, t, X)
    weights = u0.quadrature_weights()

    # fields contracted against grad psi^a, indexed (i, a, t, X)
    flux_V = np.einsum("ijag...,jg...->ia...", a, dV)
    t1b = np.einsum("ijab...,jb...->ia...", a_hat.reshape(a_hat.shape + (1,) * (d + 1)) - a, kf.K)
    t2 = -eps * np.einsum("ijag...,kgb...,jkb...->ia...", a, chi, kf.dK)
    t3 = -eps * np.einsum("kijab...,ijb...->ka...", phi[:d, :d], kf.dK)
    t4 = -eps**2 * np.einsum("kjab...,jb...->ka...", phi[:d, d], kf.dtK)
    t5 = -eps * np.einsum("ijag...,jlkgb...,lkb...->ia...", a, dphi_t, kf.dK)
    t6 = -eps**2 * np.einsum("ijag...,lkgb...,jlkb...->ia...", a, phi_t, kf.d2K)

    results = []
    for psi in test_fields:
        p, dtp, gp = psi.evaluate(times, coords)

        def pair(field_ia):
            return float(np.sum(weights * np.einsum("ia...,ia...->...", field_ia, gp)))

        lhs_e, t1a = _scheme_pairings(bundle, problem, a_hat, psi, theta)
        lhs_v = float(np.sum(weights * np.einsum("a...,a...->...", -V, dtp))) + pair(flux_V)
        terms = {"T1": t1a - pair(t1b), "T2": pair(t2), "T3": pair(t3), "T4": pair(t4),
                 "T5": pair(t5), "T6": pair(t6)}
        results.append(IdentityResult(lhs=lhs_e - lhs_v, rhs=float(sum(terms.values())),
                                      terms=terms))
    return results
