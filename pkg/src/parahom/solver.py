"""Finite-volume theta-scheme for ``(d_t - div(A grad)) u = F`` on boxes.

Unknowns live on the nodes ``x = i h`` of ``Omega = prod (0, L_a)``.  Fluxes
are formed on cell faces with the coefficient sampled at face midpoints and
at the intermediate time ``t_n + theta tau``; node control volumes carry a
lumped mass (halved at walls).  Dirichlet-zero nodes are eliminated,
Neumann-zero walls simply carry no flux (half-cell closure).

Per step::

    M (u^{n+1} - u^n) / tau + K^{n+theta} (theta u^{n+1} + (1 - theta) u^n) = M F(t_n + theta tau)

with ``K = sum_ij G_ii^T diag(vol_i a_ij) G_ij`` (block-wise over components).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .coefficients import CoefficientField
from .errors import PolicyViolation, StepSolveFailure, WindowTooCoarse
from .gridfn import DomainSpec, GridFunction, _trapezoid

log = logging.getLogger(__name__)

BoundaryCondition = Literal["dirichlet", "neumann"]
SPACE_FACTOR = 16
TIME_FACTOR = 8


@dataclass(frozen=True)
class GridPolicy:
    """``h = eps / space``, ``tau = eps^2 / time``; both factors at least 8."""

    space: int = SPACE_FACTOR
    time: int = TIME_FACTOR
    theta: float = 0.5

    def __post_init__(self):
        if self.space < 8 or self.time < 8:
            raise ValueError("grid policy multipliers must be >= 8")
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [1/2, 1]")

    def steps(self, eps: float) -> tuple[float, float]:
        return eps / self.space, eps**2 / self.time


@dataclass(frozen=True)
class IBVPProblem:
    """Initial-boundary value problem with zero lateral data.

    Exactly one of ``coefficient`` (with ``eps``) or ``a_hat`` is given.
    ``source(x_1, ..., x_d, t)`` and ``initial(x_1, ..., x_d)`` broadcast
    over their arguments and return either scalars/arrays (``m = 1``) or
    arrays with a trailing component axis.
    """

    domain: DomainSpec
    source: Callable | None = None
    initial: Callable | None = None
    bc: BoundaryCondition = "dirichlet"
    coefficient: CoefficientField | None = None
    eps: float | None = None
    a_hat: np.ndarray | None = None

    def __post_init__(self):
        if (self.coefficient is None) == (self.a_hat is None):
            raise ValueError("give either an oscillating coefficient or a constant a_hat")
        if self.coefficient is not None and not (self.eps and self.eps > 0):
            raise ValueError("oscillating problems need eps > 0")
        if self.bc not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown boundary condition {self.bc!r}")

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def m(self) -> int:
        if self.coefficient is not None:
            return self.coefficient.m
        return self.a_hat.shape[2]

    @property
    def time_independent(self) -> bool:
        return self.coefficient is None or self.coefficient.time_independent

    def face_coefficients(self, grid: FVGrid, t: float) -> list[np.ndarray]:
        """``a_ij^{ab}`` on the ``i``-faces, each of shape ``(d, m, m) + face_shape_i``."""
        out = []
        for i in range(self.d):
            shape = grid.face_shape(i)
            if self.coefficient is None:
                tensor = np.asarray(self.a_hat, dtype=float)[i]
                out.append(np.broadcast_to(tensor.reshape(tensor.shape + (1,) * self.d),
                                           tensor.shape + shape))
            else:
                coords = grid.face_mesh(i)
                y = [c / self.eps for c in coords]
                vals = self.coefficient(y, np.full((1,) * self.d, t / self.eps**2))
                out.append(vals[i])
        return out


class FVGrid:
    """Node grid with the derived face geometry and difference matrices."""

    def __init__(self, domain: DomainSpec, h: float):
        self.domain = domain
        self.h = h
        self.shape = domain.node_counts(h)
        self.d = len(self.shape)
        self.size = int(np.prod(self.shape))

    def face_shape(self, i: int) -> tuple[int, ...]:
        return tuple(n - 1 if a == i else n for a, n in enumerate(self.shape))

    def face_mesh(self, i: int) -> list[np.ndarray]:
        coords = [(np.arange(n) + (0.5 if a == i else 0.0)) * self.h
                  for a, n in enumerate(self.face_shape(i))]
        return np.meshgrid(*coords, indexing="ij", sparse=True)

    def node_volumes(self) -> np.ndarray:
        vol = np.ones(())
        for n in self.shape:
            vol = np.multiply.outer(vol, _trapezoid(n, self.h))
        return vol

    def face_volumes(self, i: int) -> np.ndarray:
        """Dual volume per ``i``-face: ``h`` across, trapezoid weights along the face."""
        vol = np.ones(())
        for a, n in enumerate(self.face_shape(i)):
            vol = np.multiply.outer(vol, np.full(n, self.h) if a == i else _trapezoid(n, self.h))
        return vol

    def _kron(self, factors: list[sparse.spmatrix]) -> sparse.csr_matrix:
        out = factors[0]
        for f in factors[1:]:
            out = sparse.kron(out, f, format="csr")
        return sparse.csr_matrix(out)

    def forward_difference(self, i: int) -> sparse.csr_matrix:
        """``G_ii``: nodes -> ``i``-faces, ``(u_{k+1} - u_k) / h``."""
        factors = []
        for a, n in enumerate(self.shape):
            if a == i:
                factors.append(sparse.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1],
                                            shape=(n - 1, n)) / self.h)
            else:
                factors.append(sparse.identity(n))
        return self._kron(factors)

    def cross_difference(self, i: int, j: int) -> sparse.csr_matrix:
        """``G_ij``: ``d/dx_j`` at ``i``-faces (centered, one-sided at walls, averaged across the face)."""
        factors = []
        for a, n in enumerate(self.shape):
            if a == i:
                factors.append(sparse.diags([0.5 * np.ones(n - 1), 0.5 * np.ones(n - 1)], [0, 1],
                                            shape=(n - 1, n)))
            elif a == j:
                D = sparse.lil_matrix((n, n))
                for k in range(1, n - 1):
                    D[k, k - 1], D[k, k + 1] = -0.5, 0.5
                D[0, 0], D[0, 1] = -1.0, 1.0
                D[n - 1, n - 2], D[n - 1, n - 1] = -1.0, 1.0
                factors.append(sparse.csr_matrix(D) / self.h)
            else:
                factors.append(sparse.identity(n))
        return self._kron(factors)

    def difference(self, i: int, j: int) -> sparse.csr_matrix:
        return self.forward_difference(i) if i == j else self.cross_difference(i, j)


class _Assembler:
    """Builds the per-step matrices on the free nodes."""

    def __init__(self, problem: IBVPProblem, grid: FVGrid):
        self.problem = problem
        self.grid = grid
        d, m = problem.d, problem.m
        self.G = [[grid.difference(i, j) for j in range(d)] for i in range(d)]
        self.GT = [self.G[i][i].T.tocsr() for i in range(d)]
        self.face_vol = [grid.face_volumes(i).ravel() for i in range(d)]
        vol = grid.node_volumes()
        free = np.ones(grid.shape, dtype=bool)
        if problem.bc == "dirichlet":
            for a in range(d):
                idx = [slice(None)] * d
                idx[a] = 0
                free[tuple(idx)] = False
                idx[a] = -1
                free[tuple(idx)] = False
        self.free_mask = free
        free_flat = np.flatnonzero(free.ravel())
        self.free = np.concatenate([free_flat + c * grid.size for c in range(m)])
        self.mass_full = np.tile(vol.ravel(), m)
        self.mass = self.mass_full[self.free]

    def stiffness(self, t: float) -> sparse.csr_matrix:
        """Full stiffness (all nodes, component-major ordering)."""
        d, m = self.problem.d, self.problem.m
        coeffs = self.problem.face_coefficients(self.grid, t)
        blocks = [[None] * m for _ in range(m)]
        for al in range(m):
            for be in range(m):
                K = None
                for i in range(d):
                    for j in range(d):
                        w = self.face_vol[i] * np.asarray(coeffs[i][j, al, be]).ravel()
                        if not np.any(w):
                            continue
                        term = self.GT[i] @ sparse.diags(w) @ self.G[i][j]
                        K = term if K is None else K + term
                blocks[al][be] = K if K is not None else sparse.csr_matrix(
                    (self.grid.size, self.grid.size))
        return sparse.bmat(blocks, format="csr")

    def restricted(self, K: sparse.csr_matrix) -> sparse.csr_matrix:
        return K[self.free][:, self.free]


def _to_flat(values: np.ndarray) -> np.ndarray:
    # (..., m) node values -> component-major flat vector
    return np.moveaxis(values, -1, 0).ravel()


def _from_flat(vec: np.ndarray, shape: tuple[int, ...], m: int) -> np.ndarray:
    return np.moveaxis(vec.reshape((m,) + shape), 0, -1)


def _evaluate(fn: Callable | None, mesh: list[np.ndarray], extra: tuple, shape: tuple[int, ...],
              m: int) -> np.ndarray:
    if fn is None:
        return np.zeros(shape + (m,))
    vals = np.asarray(fn(*mesh, *extra), dtype=float)
    if vals.ndim == len(shape) + 1 and vals.shape[-1] == m and vals.shape[:-1] != shape[:-1]:
        return np.broadcast_to(vals, shape + (m,)).copy()
    if vals.shape == shape + (m,):
        return vals.copy()
    return np.broadcast_to(np.broadcast_to(vals, shape)[..., None], shape + (m,)).copy()


def solve_ibvp(problem: IBVPProblem, h: float, tau: float, theta: float = 0.5,
               policy: GridPolicy | None = None) -> GridFunction:
    """March the theta-scheme from ``t = 0`` to ``T``.

    Parameters
    ----------
    h, tau
        Spatial and temporal steps; ``L_a / h`` and ``T / tau`` must be integers.
    theta
        1/2 for Crank-Nicolson, 1 for backward Euler.
    policy
        When given, oscillating problems are rejected unless ``h <= eps / policy.space``
        and ``tau <= eps^2 / policy.time``.

    Returns
    -------
    GridFunction
        Node values at every time level, shape ``(n_steps + 1,) + nodes + (m,)``.
    """
    if problem.coefficient is not None and policy is not None:
        h_max, tau_max = policy.steps(problem.eps)
        if h > h_max * (1 + 1e-12) or tau > tau_max * (1 + 1e-12):
            raise PolicyViolation(f"grid (h={h:.3e}, tau={tau:.3e}) does not resolve eps={problem.eps} "
                                  f"(need h <= {h_max:.3e}, tau <= {tau_max:.3e})")
    grid = FVGrid(problem.domain, h)
    n_steps = problem.domain.steps(tau)
    m = problem.m
    asm = _Assembler(problem, grid)
    coords = [np.arange(n) * h for n in grid.shape]
    mesh = np.meshgrid(*coords, indexing="ij", sparse=True)

    out = np.zeros((n_steps + 1,) + grid.shape + (m,))
    u = _to_flat(_evaluate(problem.initial, mesh, (), grid.shape, m))
    u[np.setdiff1d(np.arange(u.size), asm.free)] = 0.0
    out[0] = _from_flat(u, grid.shape, m)

    mass_tau = asm.mass / tau
    lu = None
    K = None
    for n in range(n_steps):
        t_mid = (n + theta) * tau
        if K is None or not problem.time_independent:
            K = asm.restricted(asm.stiffness(t_mid))
            lhs = sparse.diags(mass_tau) + theta * K
            try:
                lu = splu(lhs.tocsc())
            except RuntimeError as exc:
                raise StepSolveFailure(f"step {n}: singular step matrix ({exc})") from exc
        F = _to_flat(_evaluate(problem.source, mesh, (t_mid,), grid.shape, m))[asm.free]
        uf = u[asm.free]
        rhs = mass_tau * uf - (1.0 - theta) * (K @ uf) + asm.mass * F
        new = lu.solve(rhs)
        if not np.all(np.isfinite(new)):
            raise StepSolveFailure(f"step {n}: non-finite solution")
        u = np.zeros_like(u)
        u[asm.free] = new
        out[n + 1] = _from_flat(u, grid.shape, m)
    return GridFunction(out, h, tau)


# ---------------------------------------------------------------- norms

def _component_density(values: np.ndarray) -> np.ndarray:
    return np.sum(values**2, axis=-1)


def spatial_gradient(u: GridFunction) -> np.ndarray:
    """Centered differences (second-order one-sided at walls), shape ``(d,) + u.values.shape``."""
    return np.stack([np.gradient(u.values, u.h, axis=1 + a, edge_order=2) for a in range(u.d)])


def _second_difference(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h**2
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h**2
    out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h**2
    return np.moveaxis(out, 0, axis)


def spatial_hessian(u: GridFunction) -> np.ndarray:
    d = u.d
    out = np.empty((d, d) + u.values.shape)
    for a in range(d):
        out[a, a] = _second_difference(u.values, u.h, 1 + a)
        for b in range(a + 1, d):
            out[a, b] = np.gradient(np.gradient(u.values, u.h, axis=1 + a, edge_order=2),
                                    u.h, axis=1 + b, edge_order=2)
            out[b, a] = out[a, b]
    return out


CHUNK_POINTS = 2_000_000


def _level_chunks(u: GridFunction, chunk_points: int = CHUNK_POINTS):
    """Slices of time levels holding about ``chunk_points`` space-time points each."""
    per_level = max(1, int(np.prod(u.spatial_shape)))
    size = max(1, chunk_points // per_level)
    for start in range(0, u.n_levels, size):
        yield slice(start, min(start + size, u.n_levels))


def _spatial_weights(u: GridFunction) -> np.ndarray:
    w = np.ones(())
    for a, n in enumerate(u.spatial_shape):
        w = np.multiply.outer(w, np.full(n, u.h) if u.centering[a] == "cell" else _trapezoid(n, u.h))
    return w


def _per_level(u: GridFunction, density) -> np.ndarray:
    """``int_Omega density(values)`` at every level; ``density`` acts level-wise in space."""
    w = _spatial_weights(u)
    out = np.empty(u.n_levels)
    axes = tuple(range(1, u.d + 1))
    for sl in _level_chunks(u):
        out[sl] = np.sum(density(u.like(u.values[sl])) * w, axis=axes)
    return out


def _time_integral(u: GridFunction, density) -> float:
    return float(np.dot(_trapezoid(u.n_levels, u.tau), _per_level(u, density)))


def _value_density(u: GridFunction) -> np.ndarray:
    return _component_density(u.values)


def _gradient_density(u: GridFunction) -> np.ndarray:
    return np.sum(spatial_gradient(u) ** 2, axis=(0, -1))


def _hessian_density(u: GridFunction) -> np.ndarray:
    return np.sum(spatial_hessian(u) ** 2, axis=(0, 1, -1))


def norm_l2_spacetime(u: GridFunction) -> float:
    """``||u||_{L2(Omega_T)}`` by tensor trapezoid quadrature."""
    return float(np.sqrt(_time_integral(u, _value_density)))


def norm_grad_l2(u: GridFunction) -> float:
    """``||grad u||_{L2(Omega_T)}``."""
    return float(np.sqrt(_time_integral(u, _gradient_density)))


def norm_l2_h1(u: GridFunction) -> float:
    """``||u||_{L2(0,T; H1(Omega))}``."""
    return float(np.hypot(norm_l2_spacetime(u), norm_grad_l2(u)))


def norm_l2_h2(u: GridFunction) -> float:
    """``||u||_{L2(0,T; H2(Omega))}`` including lower-order terms."""
    second = _time_integral(u, _hessian_density)
    return float(np.sqrt(norm_l2_h1(u) ** 2 + second))


def boundary_layer_sup(u0: GridFunction, eps: float) -> float:
    """``sup_t (eps^-1 int_{t-eps^2}^t int_Omega |grad u0|^2)^(1/2)`` over levels ``t >= eps^2``."""
    window = eps**2
    if window / u0.tau < 2.0 - 1e-12:
        raise WindowTooCoarse(f"eps^2 window holds {window / u0.tau:.2f} steps; need >= 2")
    t = u0.times()
    if t[-1] < window - 1e-15:
        raise WindowTooCoarse("time horizon shorter than one eps^2 window")
    per_level = _per_level(u0, _gradient_density)
    cumulative = np.concatenate([[0.0], np.cumsum(0.5 * u0.tau * (per_level[1:] + per_level[:-1]))])
    admissible = t >= window * (1 - 1e-12)
    start = np.interp(t[admissible] - window, t, cumulative)
    vals = (cumulative[admissible] - start) / eps
    return float(np.sqrt(max(vals.max(), 0.0)))


@dataclass(frozen=True)
class BoundaryLayerRegion:
    """``{dist(x, dOmega) <= delta} x (0,T)`` together with the slabs ``t < delta^2`` and ``t > T - delta^2``."""

    delta: float
    domain: DomainSpec

    def mask(self, u: GridFunction) -> np.ndarray:
        t = u.times()
        sel = np.zeros((u.n_levels,) + u.spatial_shape, dtype=bool)
        slab = (t <= self.delta**2) | (t >= self.domain.T - self.delta**2)
        sel |= slab.reshape((-1,) + (1,) * u.d)
        for a, L in enumerate(self.domain.lengths):
            x = u.axis_coordinates(a)
            near = np.minimum(x, L - x) <= self.delta
            shape = [1] * (u.d + 1)
            shape[a + 1] = -1
            sel |= near.reshape(shape)
        return sel


def layer_norm(u: GridFunction, region: BoundaryLayerRegion) -> float:
    """L2 norm of ``u`` restricted to the boundary layer region."""
    dens = _component_density(u.values) * region.mask(u)
    return float(np.sqrt(u.integrate(dens)))
