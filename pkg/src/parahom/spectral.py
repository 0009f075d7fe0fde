"""Fourier collocation on the unit space-time torus Y = [0, 1)^(d+1).

Fields on the torus are arrays whose trailing ``d + 1`` axes are the
collocation grid, ordered ``(y_1, ..., y_d, s)``.  Leading axes are free
(tensor indices such as ``(j, alpha, beta)``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class CellGrid:
    """Uniform periodic collocation grid on ``[0, 1)^(d+1)``.

    ``n_time == 1`` selects the elliptic (time-independent) path, in which
    the ``s`` direction carries a single point and ``d/ds`` vanishes.
    """

    d: int
    n_space: int
    n_time: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"spatial dimension must be >= 1, got {self.d}")
        if self.n_space < 8 or self.n_space % 2:
            raise ValueError(f"n_space must be even and >= 8, got {self.n_space}")
        if self.n_time != 1 and (self.n_time < 8 or self.n_time % 2):
            raise ValueError(f"n_time must be 1 or even and >= 8, got {self.n_time}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_space,) * self.d + (self.n_time,)

    @property
    def ndim(self) -> int:
        return self.d + 1

    @property
    def size(self) -> int:
        return self.n_space**self.d * self.n_time

    @property
    def elliptic(self) -> bool:
        return self.n_time == 1

    def axes(self) -> tuple[int, ...]:
        """Array axes (negative indices) occupied by the grid."""
        return tuple(range(-self.ndim, 0))

    def coordinates(self) -> list[np.ndarray]:
        """1D collocation coordinates per axis, ``j / n``."""
        return [np.arange(n) / n for n in self.shape]

    def mesh(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays ``(y_1, ..., y_d, s)``."""
        return np.meshgrid(*self.coordinates(), indexing="ij", sparse=True)

    @cached_property
    def wavenumbers(self) -> list[np.ndarray]:
        """Integer wavenumbers per axis, shaped to broadcast over the grid."""
        out = []
        for ax, n in enumerate(self.shape):
            k = np.fft.fftfreq(n, d=1.0 / n)
            shape = [1] * self.ndim
            shape[ax] = n
            out.append(k.reshape(shape))
        return out

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """Boolean mask of modes carrying a Nyquist index in any axis."""
        mask = np.zeros(self.shape, dtype=bool)
        for k, n in zip(self.wavenumbers, self.shape):
            if n > 1 and n % 2 == 0:
                mask = mask | (np.abs(k) == n // 2)
        return mask

    @cached_property
    def solution_mask(self) -> np.ndarray:
        """Modes on which some derivative symbol is nonzero.

        This excludes the mean and the modes that are Nyquist along every
        resolved axis, i.e. exactly the kernel of the discrete gradient.
        """
        keep = np.zeros(self.shape, dtype=bool)
        for ax in range(self.ndim):
            keep = keep | (self.derivative_symbol(ax) != 0)
        return keep

    def derivative_symbol(self, axis: int) -> np.ndarray:
        """Symbol ``2 pi i k`` along ``axis`` with the Nyquist mode zeroed."""
        k = self.wavenumbers[axis].astype(complex)
        n = self.shape[axis]
        if n % 2 == 0:
            k = np.where(np.abs(k) == n // 2, 0.0, k)
        return 1j * TWO_PI * k

    @cached_property
    def laplacian_symbol(self) -> np.ndarray:
        """Symbol of the (d+1)-dimensional Laplacian built from first derivatives.

        Equals ``-4 pi^2 |k|^2`` off the Nyquist planes; composing two
        collocation derivatives gives the same operator, so divergences of
        gradients are consistent.
        """
        total = np.zeros(self.shape)
        for ax in range(self.ndim):
            total = total + (self.derivative_symbol(ax) ** 2).real
        return total


def fft(field: np.ndarray, grid: CellGrid) -> np.ndarray:
    return np.fft.fftn(field, axes=grid.axes())


def ifft(coeffs: np.ndarray, grid: CellGrid) -> np.ndarray:
    return np.fft.ifftn(coeffs, axes=grid.axes()).real


def derivative(field: np.ndarray, grid: CellGrid, axis: int) -> np.ndarray:
    """Spectral derivative of ``field`` along grid ``axis`` (0..d, d is s)."""
    if grid.shape[axis] == 1:
        return np.zeros_like(field)
    return ifft(fft(field, grid) * grid.derivative_symbol(axis), grid)


def gradient(field: np.ndarray, grid: CellGrid, axes=None) -> np.ndarray:
    """Stack of spectral derivatives; the new leading axis indexes ``axes``."""
    if axes is None:
        axes = range(grid.d)
    coeffs = fft(field, grid)
    out = []
    for ax in axes:
        if grid.shape[ax] == 1:
            out.append(np.zeros_like(field))
        else:
            out.append(ifft(coeffs * grid.derivative_symbol(ax), grid))
    return np.stack(out)


def grid_mean(field: np.ndarray, grid: CellGrid) -> np.ndarray:
    return field.mean(axis=grid.axes())


def l2_norm(field: np.ndarray, grid: CellGrid) -> float:
    """Discrete L2(Y) norm (root mean square over the grid, summed over leading indices)."""
    return float(np.sqrt(np.sum(field**2) / grid.size))


def project(field: np.ndarray, grid: CellGrid) -> np.ndarray:
    """Project onto the range of the discrete gradient (zero mean, no pure-Nyquist modes)."""
    return ifft(fft(field, grid) * grid.solution_mask, grid)


class TrigInterpolant:
    """Exact trigonometric interpolation of periodic grid fields.

    The Nyquist coefficient (when present) is split symmetrically between
    ``+n/2`` and ``-n/2`` so that real data interpolates to real values.
    Evaluation is separable: coordinates are reduced modulo one, duplicate
    coordinates are collapsed, and the tensor-product sum is done on the
    (typically tiny) set of distinct values.
    """

    def __init__(self, fields: np.ndarray, grid: CellGrid):
        self.grid = grid
        self.lead_shape = fields.shape[: fields.ndim - grid.ndim]
        coeffs = fft(fields, grid) / grid.size
        self.coeffs = coeffs.reshape((-1,) + grid.shape)

    def _basis(self, axis: int, coords: np.ndarray) -> np.ndarray:
        n = self.grid.shape[axis]
        k = np.fft.fftfreq(n, d=1.0 / n)
        basis = np.exp(1j * TWO_PI * np.outer(coords, k))
        if n % 2 == 0 and n > 1:
            nyq = n // 2
            basis[:, nyq] = np.cos(TWO_PI * nyq * coords)
        return basis

    def evaluate_tensor(self, coords: list[np.ndarray]) -> np.ndarray:
        """Values on the tensor grid ``coords[0] x ... x coords[d]``.

        Returns an array of shape ``lead_shape + tuple(len(c) for c in coords)``.
        """
        vals = self.coeffs
        for axis, c in enumerate(coords):
            basis = self._basis(axis, np.asarray(c, dtype=float))
            vals = np.moveaxis(np.tensordot(vals, basis, axes=([1 + axis], [1])), -1, 1 + axis)
        out = vals.real
        return out.reshape(self.lead_shape + out.shape[1:])

    def evaluate_compressed(self, coords: list[np.ndarray], decimals: int = 12):
        """Evaluate on distinct reduced coordinates.

        Returns ``(values, indices)``: ``values`` lives on the tensor grid of
        distinct coordinates, and ``indices[a]`` maps each requested
        coordinate along axis ``a`` to its distinct slot.
        """
        uniq, idx = [], []
        for c in coords:
            red = np.round(np.mod(np.asarray(c, dtype=float), 1.0), decimals) % 1.0
            u, inv = np.unique(red, return_inverse=True)
            uniq.append(u)
            idx.append(inv.reshape(np.shape(c)))
        return self.evaluate_tensor(uniq), idx


def gather(values: np.ndarray, indices: list[np.ndarray], time_first: bool = True) -> np.ndarray:
    """Expand compressed tensor values onto a full space-time grid.

    ``values`` has trailing axes ``(y_1, ..., y_d, s)``; the result has
    trailing axes ``(t, x_1, ..., x_d)`` when ``time_first`` is set.
    """
    d = len(indices) - 1
    lead = values.ndim - (d + 1)
    if time_first:
        values = np.moveaxis(values, -1, lead)
        indices = [indices[-1]] + list(indices[:-1])
    grids = np.ix_(*indices)
    return values[(Ellipsis,) + grids]
