"""Parabolic smoothing ``S_eps``, boundary cutoffs and ``K_eps = S_eps(eta1 eta2 .)``.

The kernel is the radial bump ``theta(p) = c exp(-1 / (1 - |p|^2))`` on the
unit ball of ``R^(d+1)``, rescaled anisotropically: radius ``eps`` in space
and ``eps^2`` in time.  Convolutions are discrete sums over the kernel
stencil with the input extended by zero outside its grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import integrate, signal, special

from .errors import BadLayerWidth, UnderResolvedKernel
from .gridfn import GridFunction

MIN_CELLS = 4


@lru_cache(maxsize=None)
def _normalization(dim: int) -> float:
    sphere = 2.0 * np.pi ** (dim / 2) / special.gamma(dim / 2)
    radial, _ = integrate.quad(lambda r: np.exp(-1.0 / (1.0 - r * r)) * r ** (dim - 1), 0.0, 1.0,
                               epsabs=0.0, epsrel=1e-13, limit=200)
    return 1.0 / (sphere * radial)


@dataclass(frozen=True)
class SmoothingKernel:
    """Unit-mass radial bump on ``R^(d+1)``; coordinates ordered ``(t, x_1, ..., x_d)``."""

    d: int

    @cached_property
    def c(self) -> float:
        return _normalization(self.d + 1)

    def _core(self, p: np.ndarray):
        r2 = np.sum(p**2, axis=0)
        inside = r2 < 1.0
        q = np.where(inside, 1.0 - r2, 1.0)
        val = np.where(inside, self.c * np.exp(-1.0 / q), 0.0)
        return val, q

    def theta(self, p: np.ndarray) -> np.ndarray:
        """Kernel values at points ``p`` of shape ``(d+1, ...)``."""
        return self._core(p)[0]

    def gradient(self, p: np.ndarray) -> np.ndarray:
        """``d theta / d p_a = theta * (-2 p_a / q^2)`` with ``q = 1 - |p|^2``."""
        val, q = self._core(p)
        return val * (-2.0 * p / q**2)

    def hessian(self, p: np.ndarray) -> np.ndarray:
        val, q = self._core(p)
        outer = p[:, None] * p[None, :]
        eye = np.eye(p.shape[0]).reshape((p.shape[0],) * 2 + (1,) * (p.ndim - 1))
        return val * (4.0 * outer / q**4 - 2.0 * eye / q**2 - 8.0 * outer / q**3)

    def stencil(self, eps: float, h: float, tau: float, deriv: tuple[int, ...] = (),
                shift: tuple[float, ...] | None = None) -> tuple[np.ndarray, tuple[int, ...]]:
        """Convolution weights of the scaled kernel or one of its derivatives.

        The smoothed field is the function ``x -> sum_m Z theta_eps(x - x_m) f_m``
        with ``Z`` fixing unit discrete mass on the grid itself; derivative
        stencils differentiate that same function exactly.

        Parameters
        ----------
        deriv
            Differentiated axes (0 = t, 1..d = x); at most two.
        shift
            Evaluation offset per axis ``(t, x_1, ..., x_d)`` in grid steps
            (e.g. 0.5 to evaluate on cell faces).

        Returns
        -------
        weights, origin
            ``weights[k]`` multiplies ``f[i - (k - origin)]``.
        """
        rt, rx = stencil_radii(eps, h, tau)
        radii = [rt] + [rx] * self.d
        steps = [tau] + [h] * self.d
        scales = [eps**2] + [eps] * self.d
        shift = tuple(shift) if shift is not None else (0.0,) * (self.d + 1)
        z = _mass_constant(self, eps, h, tau)
        offsets, origin = [], []
        for r, st, sh in zip(radii, steps, shift):
            lo = -r - int(np.ceil(sh))
            hi = r + int(np.ceil(-sh)) if sh < 0 else r
            k = np.arange(lo, hi + 1)
            offsets.append((k + sh) * st)
            origin.append(-lo)
        mesh = np.meshgrid(*offsets, indexing="ij")
        p = np.stack([m / sc for m, sc in zip(mesh, scales)])
        if not deriv:
            w = self.theta(p)
        elif len(deriv) == 1:
            a = deriv[0]
            w = self.gradient(p)[a] / scales[a]
        else:
            a, b = deriv
            w = self.hessian(p)[a, b] / (scales[a] * scales[b])
        return z * w, tuple(origin)


@lru_cache(maxsize=64)
def _mass_constant(kernel: SmoothingKernel, eps: float, h: float, tau: float) -> float:
    rt, rx = stencil_radii(eps, h, tau)
    offsets = [np.arange(-rt, rt + 1) * tau / eps**2] + [np.arange(-rx, rx + 1) * h / eps] * kernel.d
    p = np.stack(np.meshgrid(*offsets, indexing="ij"))
    return 1.0 / float(np.sum(kernel.theta(p)))


def stencil_radii(eps: float, h: float, tau: float) -> tuple[int, int]:
    """Stencil half-widths ``(floor(eps^2 / tau), floor(eps / h))``; both must be >= 4."""
    rt = int(np.floor(eps**2 / tau * (1 + 1e-9)))
    rx = int(np.floor(eps / h * (1 + 1e-9)))
    if rt < MIN_CELLS or rx < MIN_CELLS:
        raise UnderResolvedKernel(
            f"kernel spans {rx} space and {rt} time cells (need >= {MIN_CELLS}); refine the grid")
    return rt, rx


def _convolve(values: np.ndarray, stencil: tuple[np.ndarray, tuple[int, ...]],
              out_shape: tuple[int, ...] | None = None) -> np.ndarray:
    weights, origin = stencil
    nd = weights.ndim
    out_shape = values.shape[:nd] if out_shape is None else tuple(out_shape)
    out = np.zeros(out_shape + values.shape[nd:])
    # convolve only the bounding box of the nonzero input: outside its
    # stencil-dilated image the result is exactly zero
    nonzero = np.any(values != 0, axis=tuple(range(nd, values.ndim)))
    if not nonzero.any():
        return out
    box = []
    for ax in range(nd):
        hit = np.flatnonzero(np.any(nonzero, axis=tuple(a for a in range(nd) if a != ax)))
        box.append((int(hit[0]), int(hit[-1]) + 1))
    crop = values[tuple(slice(lo, hi) for lo, hi in box)]
    full = signal.oaconvolve(crop, weights[..., None], mode="full", axes=tuple(range(nd)))
    src, dst = [], []
    for (lo, _), o, n, nf in zip(box, origin, out_shape, full.shape):
        # out[i] = full[i + o - lo] wherever that index exists
        i0, i1 = max(0, lo - o), min(n, nf + lo - o)
        if i1 <= i0:
            return out
        dst.append(slice(i0, i1))
        src.append(slice(i0 + o - lo, i1 + o - lo))
    out[tuple(dst)] = full[tuple(src)]
    return out


def _shift_and_shape(f: GridFunction, face_axis: int | None):
    """Stencil shift and output shape for evaluation at nodes or on ``face_axis`` faces."""
    shift = [0.0] * (f.d + 1)
    shape = list(f.values.shape[:-1])
    if face_axis is not None:
        shift[face_axis + 1] = 0.5
        shape[face_axis + 1] -= 1
    return tuple(shift), tuple(shape)


def s_eps(f: GridFunction, eps: float, kernel: SmoothingKernel | None = None,
          face_axis: int | None = None) -> np.ndarray:
    """``S_eps f`` with ``f`` extended by zero, at the grid points (or on faces of ``face_axis``)."""
    kernel = kernel or SmoothingKernel(f.d)
    shift, shape = _shift_and_shape(f, face_axis)
    return _convolve(f.values, kernel.stencil(eps, f.h, f.tau, (), shift), shape)


def grad_s_eps(f: GridFunction, eps: float, kernel: SmoothingKernel | None = None,
               face_axis: int | None = None) -> np.ndarray:
    """``grad_x S_eps f``, shape ``(d,) + output shape + (m,)``."""
    kernel = kernel or SmoothingKernel(f.d)
    shift, shape = _shift_and_shape(f, face_axis)
    return np.stack([_convolve(f.values, kernel.stencil(eps, f.h, f.tau, (a + 1,), shift), shape)
                     for a in range(f.d)])


def dt_s_eps(f: GridFunction, eps: float, kernel: SmoothingKernel | None = None,
             face_axis: int | None = None) -> np.ndarray:
    kernel = kernel or SmoothingKernel(f.d)
    shift, shape = _shift_and_shape(f, face_axis)
    return _convolve(f.values, kernel.stencil(eps, f.h, f.tau, (0,), shift), shape)


def hess_s_eps(f: GridFunction, eps: float, kernel: SmoothingKernel | None = None,
               face_axis: int | None = None) -> np.ndarray:
    """Spatial Hessian of ``S_eps f``, shape ``(d, d) + output shape + (m,)``."""
    kernel = kernel or SmoothingKernel(f.d)
    shift, shape = _shift_and_shape(f, face_axis)
    d = f.d
    out = np.empty((d, d) + shape + (f.m,))
    for a in range(d):
        for b in range(a, d):
            out[a, b] = _convolve(f.values, kernel.stencil(eps, f.h, f.tau, (a + 1, b + 1), shift),
                                  shape)
            out[b, a] = out[a, b]
    return out


@lru_cache(maxsize=4)
def _ramp_table(n: int = 20001) -> tuple[np.ndarray, np.ndarray]:
    # unit layer: linear ramp on [9/8, 15/8] mollified by a bump of half-width 1/8
    z = np.linspace(1.0, 2.0, n)
    u = np.linspace(-0.125, 0.125, 4001)
    rho = np.zeros_like(u)
    inner = np.abs(u) < 0.125
    rho[inner] = np.exp(-1.0 / (1.0 - (u[inner] / 0.125) ** 2))
    rho /= integrate.trapezoid(rho, u)
    vals = np.empty(n)
    for lo in range(0, n, 1024):  # row blocks keep the work array small
        ramp = np.clip((z[lo:lo + 1024, None] - u[None, :] - 9 / 8) * 4 / 3, 0.0, 1.0)
        vals[lo:lo + 1024] = integrate.trapezoid(ramp * rho, u, axis=1)
    vals[0], vals[-1] = 0.0, 1.0
    return z, vals


def ramp(z: np.ndarray) -> np.ndarray:
    """Smooth ramp: 0 for ``z <= 1``, 1 for ``z >= 2``, slope at most 4/3."""
    table_z, table_v = _ramp_table()
    return np.interp(z, table_z, table_v, left=0.0, right=1.0)


@dataclass(frozen=True)
class CutoffPair:
    """Spatial cutoff ``eta1`` (box ``prod (0, L_a)``) and temporal cutoff ``eta2`` on ``(0, T)``."""

    delta: float
    lengths: tuple[float, ...]
    T: float

    def eta1(self, *x: np.ndarray) -> np.ndarray:
        out = 1.0
        for xa, L in zip(x, self.lengths):
            dist = np.minimum(xa, L - xa)
            out = out * ramp(dist / self.delta)
        return out

    def eta2(self, t: np.ndarray) -> np.ndarray:
        d2 = self.delta**2
        return ramp(t / d2) * ramp((self.T - t) / d2)

    def on_grid(self, f: GridFunction) -> np.ndarray:
        """``eta1 * eta2`` sampled on the grid of ``f`` (shape without the component axis)."""
        coords = [f.times()] + [f.axis_coordinates(a) for a in range(f.d)]
        mesh = np.meshgrid(*coords, indexing="ij", sparse=True)
        return self.eta2(mesh[0]) * self.eta1(*mesh[1:])


def default_delta(eps: float) -> float:
    return 2.0 * eps * (1.0 + 1e-6)


def check_delta(eps: float, delta: float) -> None:
    if not 2.0 * eps < delta < 20.0 * eps:
        raise BadLayerWidth(f"delta = {delta} must lie in (2 eps, 20 eps) = ({2 * eps}, {20 * eps})")


@dataclass(frozen=True)
class KOperator:
    """``K_eps f = S_eps(eta1 eta2 f)`` on a fixed geometry.

    Parameters
    ----------
    eps, delta
        Smoothing scale and cutoff layer width, ``2 eps < delta < 20 eps``.
    lengths, T
        Box side lengths and final time of ``Omega_T``.
    """

    eps: float
    delta: float
    lengths: tuple[float, ...]
    T: float

    def __post_init__(self):
        check_delta(self.eps, self.delta)

    @cached_property
    def kernel(self) -> SmoothingKernel:
        return SmoothingKernel(len(self.lengths))

    @cached_property
    def cutoffs(self) -> CutoffPair:
        return CutoffPair(self.delta, tuple(self.lengths), self.T)

    def truncate(self, f: GridFunction) -> GridFunction:
        return f.like(f.values * self.cutoffs.on_grid(f)[..., None])

    def apply(self, f: GridFunction, face_axis: int | None = None) -> np.ndarray:
        return s_eps(self.truncate(f), self.eps, self.kernel, face_axis)

    def grad(self, f: GridFunction, face_axis: int | None = None) -> np.ndarray:
        return grad_s_eps(self.truncate(f), self.eps, self.kernel, face_axis)

    def dt(self, f: GridFunction, face_axis: int | None = None) -> np.ndarray:
        return dt_s_eps(self.truncate(f), self.eps, self.kernel, face_axis)

    def hess(self, f: GridFunction, face_axis: int | None = None) -> np.ndarray:
        return hess_s_eps(self.truncate(f), self.eps, self.kernel, face_axis)


def k_eps(f: GridFunction, eps: float, delta: float, lengths, T: float) -> np.ndarray:
    """``K_eps f = S_eps(eta1 eta2 f)`` at the grid points of ``f``."""
    return KOperator(eps, delta, tuple(lengths), T).apply(f)


def grad_k_eps(f: GridFunction, eps: float, delta: float, lengths, T: float) -> np.ndarray:
    return KOperator(eps, delta, tuple(lengths), T).grad(f)


def dt_k_eps(f: GridFunction, eps: float, delta: float, lengths, T: float) -> np.ndarray:
    return KOperator(eps, delta, tuple(lengths), T).dt(f)
