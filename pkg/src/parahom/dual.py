"""Dual (flux) correctors from periodic Poisson potentials.

Each discrepancy component ``b_ij`` is inverted through the isotropic
Laplacian in all ``d + 1`` torus variables, ``Lap f_ij = b_ij``, and the dual
correctors are the antisymmetrized potential derivatives

    phi_kij = d_k f_ij - d_i f_kj,     k, i = 1..d+1.

Layouts: ``f[i, j, alpha, beta]`` and ``phi[k, i, j, alpha, beta]``, grid last.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .cell import CorrectorSet
from .errors import NonZeroMean
from .spectral import CellGrid

MEAN_TOL = 1e-8


@dataclass(frozen=True)
class DualCorrectorSet:
    grid: CellGrid
    f: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return self.f.shape[1]

    def time_row(self) -> np.ndarray:
        """``phi_{(d+1) i j}`` for ``i = 1..d``: the terms entering the expansion."""
        return self.phi[self.d, : self.d]


def solve_potentials(b: np.ndarray, grid: CellGrid, mean_tol: float = MEAN_TOL) -> np.ndarray:
    """Periodic solution of ``Lap_{d+1} f = b`` with zero mean.

    Raises
    ------
    NonZeroMean
        If some component of ``b`` has mean above ``mean_tol`` in absolute value.
    """
    means = np.abs(sp.grid_mean(b, grid))
    if np.any(means > mean_tol):
        raise NonZeroMean(f"discrepancy mean {means.max():.3e} exceeds {mean_tol:.1e}; "
                          "the upstream cell solve is not converged")
    lap = grid.laplacian_symbol
    inv = np.zeros(grid.shape)
    nz = lap != 0
    inv[nz] = 1.0 / lap[nz]
    f = sp.ifft(sp.fft(b, grid) * inv, grid)
    f.setflags(write=False)
    return f


def dual_correctors(f: np.ndarray, grid: CellGrid) -> np.ndarray:
    """``phi_kij = d_k f_ij - d_i f_kj``; skew in ``(k, i)`` bitwise."""
    n_rows = f.shape[0]
    coeffs = sp.fft(f, grid)
    # D[k, i] = d_k f_i, over all d+1 torus directions
    D = np.stack([sp.ifft(coeffs * grid.derivative_symbol(k), grid) if grid.shape[k] > 1
                  else np.zeros(f.shape) for k in range(n_rows)])
    phi = D - D.swapaxes(0, 1)
    phi.setflags(write=False)
    return phi


def solve_dual(corr: CorrectorSet) -> DualCorrectorSet:
    """Potentials and dual correctors for a solved :class:`CorrectorSet`."""
    if corr.b is None:
        raise ValueError("corrector set carries no discrepancy field")
    f = solve_potentials(corr.b, corr.grid)
    return DualCorrectorSet(grid=corr.grid, f=f, phi=dual_correctors(f, corr.grid))


def phi_divergence(phi: np.ndarray, grid: CellGrid) -> np.ndarray:
    """``sum_k d_k phi_kij`` over all ``d + 1`` directions."""
    out = np.zeros(phi.shape[1:])
    for k in range(phi.shape[0]):
        out += sp.derivative(phi[k], grid, k)
    return out


def divergence_error(dual: DualCorrectorSet, b: np.ndarray) -> np.ndarray:
    """Relative L2(Y) error of ``d_k phi_kij`` against ``b_ij``, one value per ``(j, alpha, beta)``.

    Rows ``i`` are pooled per column, because single rows may vanish
    identically (e.g. ``b_11`` for a laminate).
    """
    grid = dual.grid
    diff = phi_divergence(dual.phi, grid) - b
    axes = (0,) + tuple(range(-grid.ndim, 0))
    num = np.sqrt(np.sum(diff**2, axis=axes))
    den = np.sqrt(np.sum(b**2, axis=axes))
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), num)


def harmonic_defect(dual: DualCorrectorSet) -> np.ndarray:
    """``|| g_j - mean g_j ||`` for ``g_j = sum_i d_i f_ij``, per ``(j, alpha, beta)``."""
    grid = dual.grid
    g = np.zeros(dual.f.shape[1:])
    for i in range(dual.f.shape[0]):
        g += sp.derivative(dual.f[i], grid, i)
    g -= sp.grid_mean(g, grid)[(...,) + (None,) * grid.ndim]
    return np.sqrt(np.sum(g**2, axis=tuple(range(-grid.ndim, 0))) / grid.size)
