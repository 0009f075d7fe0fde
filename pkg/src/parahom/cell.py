"""Space-time periodic cell problem, homogenized matrix and flux discrepancy.

For every macroscopic direction ``(j, beta)`` the corrector solves

    d_s chi_j^beta - div_y (A grad_y chi_j^beta) = div_y (A e_j e^beta)

on the torus ``Y = [0, 1)^(d+1)``, with zero mean.  The discretization is
Fourier collocation: derivatives act on Fourier coefficients, products with
``A`` are formed pointwise on the grid.

Array layouts (trailing axes are always the grid ``(y_1, ..., y_d, s)``):

* coefficient samples ``a[i, j, alpha, beta]``
* correctors ``chi[j, alpha, beta]``
* homogenized matrix ``a_hat[i, j, alpha, beta]``
* discrepancy ``b[i, j, alpha, beta]`` with ``i`` running over ``d + 1`` rows,
  the last one being ``-chi_j``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import spectral as sp
from .coefficients import CoefficientField, check_ellipticity
from .errors import IterationLimitExceeded
from .spectral import CellGrid

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
MAX_ITER = 10_000
RESTART = 50


@dataclass(frozen=True)
class CorrectorSet:
    """Solved correctors with derived homogenized data.

    Attributes
    ----------
    chi
        Correctors, shape ``(d, m, m) + grid.shape`` indexed ``[j, alpha, beta]``.
    a_hat
        Homogenized tensor ``(d, d, m, m)``; ``None`` until computed.
    b
        Flux discrepancy ``(d + 1, d, m, m) + grid.shape``; ``None`` until computed.
    residual
        Largest discrete L2(Y) residual over all ``(j, beta)`` problems.
    """

    grid: CellGrid
    chi: np.ndarray = field(repr=False)
    residual: float
    tol: float
    iterations: int = 0
    a_hat: np.ndarray | None = None
    b: np.ndarray | None = field(default=None, repr=False)
    mu: float | None = None

    @property
    def d(self) -> int:
        return self.chi.shape[0]

    @property
    def m(self) -> int:
        return self.chi.shape[1]

    def a_hat_matrix(self) -> np.ndarray:
        """``a_hat`` as a ``(d*m, d*m)`` matrix indexed ``(i*m + alpha, j*m + beta)``."""
        d, m = self.d, self.m
        return self.a_hat.transpose(0, 2, 1, 3).reshape(d * m, d * m)


def _flux(a: np.ndarray, grad: np.ndarray) -> np.ndarray:
    # (A grad u)_i^alpha = a_ik^{alpha gamma} d_k u^gamma
    return np.einsum("ikag...,kg...->ia...", a, grad)


def _divergence(flux: np.ndarray, grid: CellGrid) -> np.ndarray:
    coeffs = sp.fft(flux, grid)
    total = np.zeros(flux.shape[1:], dtype=complex)
    for i in range(grid.d):
        total += coeffs[i] * grid.derivative_symbol(i)
    return sp.ifft(total, grid)


def cell_operator(u: np.ndarray, a: np.ndarray, grid: CellGrid) -> np.ndarray:
    """Apply ``d_s u - div(A grad u)`` to ``u`` of shape ``(m,) + grid.shape``."""
    coeffs = sp.fft(u, grid)
    grad = np.stack([sp.ifft(coeffs * grid.derivative_symbol(k), grid) for k in range(grid.d)])
    out = -_divergence(_flux(a, grad), grid)
    if not grid.elliptic:
        out += sp.ifft(coeffs * grid.derivative_symbol(grid.d), grid)
    return out


def cell_rhs(a: np.ndarray, grid: CellGrid, j: int, beta: int) -> np.ndarray:
    """``-L_1 P_j^beta = div_y(a_{. j}^{. beta})``, shape ``(m,) + grid.shape``."""
    return _divergence(a[:, j, :, beta], grid)


def cell_residual(chi_jb: np.ndarray, a: np.ndarray, grid: CellGrid, j: int, beta: int) -> float:
    """Discrete L2(Y) norm of ``(d_s + L_1)(chi_j^beta + P_j^beta)``."""
    r = cell_operator(chi_jb, a, grid) - cell_rhs(a, grid, j, beta)
    return sp.l2_norm(r, grid)


def _preconditioner(a: np.ndarray, grid: CellGrid, shape: tuple[int, ...]) -> LinearOperator:
    d, m = grid.d, a.shape[2]
    c = float(np.mean(np.einsum("iiaa...->...", a))) / (d * m)
    symbol = -c * grid.laplacian_symbol
    if not grid.elliptic:
        symbol = symbol + grid.derivative_symbol(grid.d)
    inv = np.zeros(grid.shape, dtype=complex)
    mask = grid.solution_mask
    inv[mask] = 1.0 / symbol[mask]
    n = int(np.prod(shape))

    def apply(v):
        return sp.ifft(sp.fft(v.reshape(shape), grid) * inv, grid).ravel()

    return LinearOperator((n, n), matvec=apply, dtype=float)


def _solve_one(a, grid, j, beta, tol, max_iter):
    m = a.shape[2]
    shape = (m,) + grid.shape
    n = int(np.prod(shape))
    rhs = sp.project(cell_rhs(a, grid, j, beta), grid)
    rhs_norm = sp.l2_norm(rhs, grid)
    if rhs_norm == 0.0:
        return np.zeros(shape), 0.0, 0

    precond = _preconditioner(a, grid, shape)

    # right preconditioning: GMRES then monitors the true residual of A M z = rhs
    def matvec(v):
        u = sp.project(precond.matvec(v).reshape(shape), grid)
        return sp.project(cell_operator(u, a, grid), grid).ravel()

    op = LinearOperator((n, n), matvec=matvec, dtype=float)
    # tighter of relative and absolute targets so both readings of tol hold
    rtol = tol * min(1.0, 1.0 / rhs_norm) * 0.5
    z = np.zeros(n)
    used = 0
    residual = np.inf
    while used < max_iter:
        counter = _Counter()
        budget = max(1, (max_iter - used) // RESTART)
        z, _ = gmres(op, rhs.ravel(), x0=z, rtol=rtol, atol=0.0, restart=RESTART,
                     maxiter=budget, callback=counter, callback_type="pr_norm")
        used += max(counter.count, 1)
        chi = sp.project(precond.matvec(z).reshape(shape), grid)
        residual = cell_residual(chi, a, grid, j, beta)
        if residual <= tol * min(1.0, rhs_norm):
            return chi, residual, used
        if counter.count == 0:
            break
    raise IterationLimitExceeded(
        f"cell problem (j={j}, beta={beta}) stalled at residual {residual:.3e} "
        f"after {used} iterations (target {tol:.1e})")


class _Counter:
    def __init__(self):
        self.count = 0

    def __call__(self, _):
        self.count += 1


def solve_cell_problem(A: CoefficientField, grid: CellGrid, tol: float = DEFAULT_TOL,
                       max_iter: int = MAX_ITER, check: bool = True) -> CorrectorSet:
    """Solve all ``d * m`` cell problems for the correctors ``chi_j^beta``.

    Parameters
    ----------
    A
        Coefficient field; must satisfy its ellipticity bound on the grid.
    grid
        Collocation grid; ``n_time == 1`` solves the elliptic problem.
    tol
        Residual tolerance.  The solve stops once the discrete L2(Y) residual
        is below ``tol`` both in absolute terms and relative to the
        right-hand side.

    Returns
    -------
    CorrectorSet
        With ``chi`` populated and ``a_hat``/``b`` filled in as well.

    Raises
    ------
    EllipticityViolation, IterationLimitExceeded
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = A.sample(grid)
    if check:
        check_ellipticity(a, A.mu)
    d, m = A.d, A.m
    chi = np.zeros((d, m, m) + grid.shape)
    worst, total_iters = 0.0, 0
    if not (A.constant or np.ptp(a.reshape(d, d, m, m, -1), axis=-1).max() == 0.0):
        for j in range(d):
            for beta in range(m):
                chi[j, :, beta], res, its = _solve_one(a, grid, j, beta, tol, max_iter)
                worst = max(worst, res)
                total_iters += its
        log.debug("cell solve: %d iterations, residual %.3e", total_iters, worst)
    chi.setflags(write=False)
    corr = CorrectorSet(grid=grid, chi=chi, residual=worst, tol=tol,
                        iterations=total_iters, mu=A.mu)
    a_hat = homogenized_matrix(A, corr, grid, samples=a)
    corr = replace(corr, a_hat=a_hat)
    return replace(corr, b=b_field(A, corr, grid, samples=a))


def _corrector_flux(a: np.ndarray, chi: np.ndarray, grid: CellGrid) -> np.ndarray:
    """``a_ij + a_ik d_k chi_j`` on the grid, shape ``(d, d, m, m) + grid``."""
    grad = np.stack([sp.gradient(chi[j], grid) for j in range(chi.shape[0])], axis=1)
    # grad[k, j, gamma, beta]
    return a + np.einsum("ikag...,kjgb...->ijab...", a, grad)


def homogenized_matrix(A: CoefficientField, corr: CorrectorSet, grid: CellGrid,
                       samples: np.ndarray | None = None) -> np.ndarray:
    """Grid average of ``A + A grad chi``, shape ``(d, d, m, m)``."""
    a = A.sample(grid) if samples is None else samples
    flat = a.reshape(a.shape[:4] + (-1,))
    if not np.any(corr.chi) and np.ptp(flat, axis=-1).max() == 0.0:
        a_hat = flat[..., 0].copy()
    else:
        a_hat = sp.grid_mean(_corrector_flux(a, corr.chi, grid), grid)
    check_ellipticity(a_hat[..., None], A.mu, upper=False, rtol=1e-8)
    a_hat.setflags(write=False)
    return a_hat


def b_field(A: CoefficientField, corr: CorrectorSet, grid: CellGrid,
            samples: np.ndarray | None = None) -> np.ndarray:
    """Flux discrepancy with the extra time row ``b_{(d+1) j} = -chi_j``."""
    if corr.a_hat is None:
        raise ValueError("a_hat must be computed before b")
    a = A.sample(grid) if samples is None else samples
    d, m = corr.d, corr.m
    b = np.empty((d + 1, d, m, m) + grid.shape)
    if np.any(corr.chi):
        b[:d] = _corrector_flux(a, corr.chi, grid)
    else:
        b[:d] = a
    b[:d] -= corr.a_hat.reshape(corr.a_hat.shape + (1,) * grid.ndim)
    b[d] = -corr.chi
    b.setflags(write=False)
    return b


def divergence_defect(corr: CorrectorSet) -> np.ndarray:
    """``sum_i d_i b_ij - d_s chi_j`` per ``(j, alpha, beta)`` as a field."""
    grid = corr.grid
    d = corr.d
    out = np.zeros(corr.chi.shape)
    for i in range(d):
        out += sp.derivative(corr.b[i], grid, i)
    out -= sp.derivative(corr.chi, grid, d)
    return out
