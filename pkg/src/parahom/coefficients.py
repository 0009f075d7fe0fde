"""Periodic coefficient tensors ``a_ij^{alpha beta}(y, s)``.

A :class:`CoefficientField` is evaluated with spatial coordinates ``y`` (a
sequence of ``d`` broadcastable arrays) and a time coordinate ``s``; it
returns an array of shape ``(d, d, m, m) + broadcast_shape``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import EllipticityViolation
from .spectral import CellGrid

TWO_PI = 2.0 * np.pi

Evaluator = Callable[[Sequence[np.ndarray], np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CoefficientField:
    """A 1-periodic, uniformly elliptic coefficient tensor.

    Parameters
    ----------
    d, m
        Spatial dimension and system size.
    evaluator
        Callable ``(y, s) -> array(d, d, m, m, ...)``; must be 1-periodic
        in every argument.
    mu
        Ellipticity constant: ``mu |xi|^2 <= a xi.xi <= |xi|^2 / mu``.
    time_independent
        True when the evaluator ignores ``s``.
    constant
        Set for spatially and temporally constant tensors; lets downstream
        code short-circuit to exact zero correctors.
    """

    d: int
    m: int
    evaluator: Evaluator = field(repr=False)
    mu: float
    name: str = "custom"
    params: dict = field(default_factory=dict)
    time_independent: bool = False
    constant: bool = False

    def __call__(self, y: Sequence[np.ndarray], s) -> np.ndarray:
        y = [np.asarray(c, dtype=float) for c in y]
        s = np.asarray(s, dtype=float)
        shape = np.broadcast_shapes(*(c.shape for c in y), s.shape)
        out = np.asarray(self.evaluator(y, s), dtype=float)
        return np.broadcast_to(out, (self.d, self.d, self.m, self.m) + shape)

    def sample(self, grid: CellGrid) -> np.ndarray:
        """Samples on the cell grid, shape ``(d, d, m, m) + grid.shape``."""
        if grid.d != self.d:
            raise ValueError(f"grid dimension {grid.d} != coefficient dimension {self.d}")
        mesh = grid.mesh()
        return np.ascontiguousarray(self(mesh[:-1], mesh[-1]))

    def check_ellipticity(self, grid: CellGrid, n_probes: int = 16, seed: int = 0) -> None:
        """Probe the ellipticity bounds at every sample point.

        Raises :class:`EllipticityViolation` if any probe ``xi`` violates
        ``mu |xi|^2 <= a xi.xi <= |xi|^2 / mu``.
        """
        check_ellipticity(self.sample(grid), self.mu, n_probes=n_probes, seed=seed)


def check_ellipticity(samples: np.ndarray, mu: float, n_probes: int = 16, seed: int = 0,
                      upper: bool = True, rtol: float = 1e-10) -> None:
    if not np.all(np.isfinite(samples)):
        raise EllipticityViolation("coefficient samples are not finite")
    d, _, m, _ = samples.shape[:4]
    flat = samples.reshape(d, d, m, m, -1)
    rng = np.random.default_rng(seed)
    probes = rng.standard_normal((n_probes, d, m))
    # a_ij^{ab} xi_i^a xi_j^b for every probe and sample point
    quad = np.einsum("pia,ijabx,pjb->px", probes, flat, probes)
    norms = np.einsum("pia,pia->p", probes, probes)[:, None]
    low = quad - mu * norms
    if np.min(low) < -rtol * np.max(norms):
        raise EllipticityViolation(f"lower ellipticity bound mu={mu} violated "
                                   f"(min excess {np.min(low):.3e})")
    if upper and np.max(quad - norms / mu) > rtol * np.max(norms) / mu:
        raise EllipticityViolation(f"upper ellipticity bound 1/mu={1 / mu} violated")


def _identity_tensor(d: int, m: int) -> np.ndarray:
    return np.einsum("ij,ab->ijab", np.eye(d), np.eye(m))


def _expand(values: np.ndarray, base: np.ndarray) -> np.ndarray:
    return base.reshape(base.shape + (1,) * values.ndim) * values


def constant(value, d: int = 1, m: int = 1, mu: float | None = None) -> CoefficientField:
    """Constant coefficient: a scalar times the identity, or a full tensor.

    ``value`` may be a scalar, a ``(d*m, d*m)`` matrix indexed by
    ``(i*m + alpha, j*m + beta)``, or a ``(d, d, m, m)`` tensor.
    """
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        tensor = float(arr) * _identity_tensor(d, m)
    elif arr.shape == (d * m, d * m):
        tensor = arr.reshape(d, m, d, m).transpose(0, 2, 1, 3).copy()
    elif arr.shape == (d, d, m, m):
        tensor = arr.copy()
    else:
        raise ValueError(f"cannot interpret constant coefficient of shape {arr.shape}")
    if mu is None:
        mat = tensor.transpose(0, 2, 1, 3).reshape(d * m, d * m)
        sym_eigs = np.linalg.eigvalsh(0.5 * (mat + mat.T))
        upper = np.linalg.norm(mat, 2)
        mu = float(min(sym_eigs.min(), 1.0 / upper))
    tensor.setflags(write=False)

    def evaluator(y, s):
        shape = np.broadcast_shapes(*(np.shape(c) for c in y), np.shape(s))
        return np.broadcast_to(tensor.reshape(tensor.shape + (1,) * len(shape)),
                               tensor.shape + shape)

    return CoefficientField(d=d, m=m, evaluator=evaluator, mu=mu, name="constant",
                            params={"value": arr.tolist()}, time_independent=True,
                            constant=True)


def laminate_1d(amplitude: float = 0.5, d: int = 1, m: int = 1) -> CoefficientField:
    """Laminate ``a(y) = (1 + amplitude * sin(2 pi y_1))^-1`` times the identity.

    The harmonic mean of ``a`` over a period is exactly 1.
    """
    if not 0 <= amplitude < 1:
        raise ValueError("laminate amplitude must lie in [0, 1)")
    base = _identity_tensor(d, m)
    lo, hi = 1.0 / (1.0 + amplitude), 1.0 / (1.0 - amplitude)
    mu = min(lo, 1.0 / hi)

    def evaluator(y, s):
        vals = 1.0 / (1.0 + amplitude * np.sin(TWO_PI * y[0]))
        shape = np.broadcast_shapes(*(np.shape(c) for c in y), np.shape(s))
        return _expand(np.broadcast_to(vals, shape), base)

    return CoefficientField(d=d, m=m, evaluator=evaluator, mu=mu, name="laminate_1d",
                            params={"amplitude": amplitude}, time_independent=True)


def spacetime_sin(base_value: float = 2.0, amplitude: float = 1.0, d: int = 1,
                  m: int = 1) -> CoefficientField:
    """``a(y, s) = base + amplitude * sin(2 pi y_1) * sin(2 pi s)`` times the identity."""
    if abs(amplitude) >= base_value:
        raise ValueError("spacetime_sin requires |amplitude| < base")
    base = _identity_tensor(d, m)
    lo, hi = base_value - abs(amplitude), base_value + abs(amplitude)
    mu = min(lo, 1.0 / hi)

    def evaluator(y, s):
        vals = base_value + amplitude * np.sin(TWO_PI * y[0]) * np.sin(TWO_PI * s)
        shape = np.broadcast_shapes(*(np.shape(c) for c in y), np.shape(s))
        return _expand(np.broadcast_to(vals, shape), base)

    return CoefficientField(d=d, m=m, evaluator=evaluator, mu=mu, name="spacetime_sin",
                            params={"base": base_value, "amplitude": amplitude})


def from_samples(samples: np.ndarray, mu: float | None = None,
                 name: str = "gridded") -> CoefficientField:
    """Coefficient defined by gridded samples on ``[0, 1)^(d+1)``.

    Evaluation at arbitrary points picks the nearest collocation value
    (periodic wrap); no smoothing is applied.  ``samples`` has shape
    ``(d, d, m, m, n_space, ..., n_space, n_time)``.
    """
    samples = np.array(samples, dtype=float)
    d, d2, m, m2 = samples.shape[:4]
    if d != d2 or m != m2 or samples.ndim != 4 + d + 1:
        raise ValueError(f"bad gridded coefficient shape {samples.shape}")
    if mu is None:
        mu = estimate_mu(samples)
    samples.setflags(write=False)
    dims = samples.shape[4:]

    def evaluator(y, s):
        idx = [np.rint(np.asarray(c) * n).astype(np.int64) % n for c, n in zip(list(y) + [s], dims)]
        idx = np.broadcast_arrays(*idx)
        return samples[(Ellipsis,) + tuple(idx)]

    time_independent = bool(np.all(samples == samples[..., :1]))
    const = bool(np.all(samples == samples.reshape(d, d, m, m, -1)[..., :1].reshape(
        (d, d, m, m) + (1,) * len(dims))))
    return CoefficientField(d=d, m=m, evaluator=evaluator, mu=mu, name=name,
                            params={"grid": list(dims)}, time_independent=time_independent,
                            constant=const)


def estimate_mu(samples: np.ndarray) -> float:
    """Largest mu compatible with the samples (symmetric-part eigenvalues and norm)."""
    d, _, m, _ = samples.shape[:4]
    mats = samples.reshape(d, d, m, m, -1).transpose(4, 0, 2, 1, 3).reshape(-1, d * m, d * m)
    sym = 0.5 * (mats + mats.transpose(0, 2, 1))
    low = np.linalg.eigvalsh(sym).min()
    high = np.linalg.norm(mats, ord=2, axis=(1, 2)).max()
    return float(min(low, 1.0 / high))


BUILTINS = {
    "constant": constant,
    "laminate_1d": laminate_1d,
    "spacetime_sin": spacetime_sin,
}
