"""Space-time grid functions on ``Omega x [0, T]`` and their quadrature."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch


@dataclass(frozen=True)
class DomainSpec:
    """Interval ``(0, L)`` or rectangle ``(0, L1) x (0, L2)`` over time ``(0, T)``."""

    lengths: tuple[float, ...]
    T: float

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))
        if not self.lengths or any(v <= 0 for v in self.lengths):
            raise ValueError(f"side lengths must be positive, got {self.lengths}")
        if not self.T > 0:
            raise ValueError(f"final time must be positive, got {self.T}")

    @property
    def d(self) -> int:
        return len(self.lengths)

    def node_counts(self, h: float) -> tuple[int, ...]:
        """Nodes per axis for spacing ``h`` (lengths must be multiples of ``h``)."""
        counts = []
        for L in self.lengths:
            n = L / h
            if abs(n - round(n)) > 1e-8 * max(1.0, n):
                raise ValueError(f"length {L} is not a multiple of h = {h}")
            counts.append(int(round(n)) + 1)
        return tuple(counts)

    def steps(self, tau: float) -> int:
        n = self.T / tau
        if abs(n - round(n)) > 1e-8 * max(1.0, n):
            raise ValueError(f"T = {self.T} is not a multiple of tau = {tau}")
        return int(round(n))


@dataclass(frozen=True)
class GridFunction:
    """Values on a uniform tensor grid in space and time.

    ``values`` has shape ``(n_t, n_1, ..., n_d, m)``.  Spatial axes are
    ``"node"`` centred (``x = i h``) or ``"cell"`` centred (``x = (i + 1/2) h``,
    used for face quantities); time levels sit at ``t0 + n tau``.
    """

    values: np.ndarray = field(repr=False)
    h: float
    tau: float
    centering: tuple[str, ...] = ()
    t0: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.ndim < 3:
            raise ValueError("values must have shape (n_t, n_1, ..., n_d, m)")
        if not self.centering:
            object.__setattr__(self, "centering", ("node",) * (vals.ndim - 2))
        if len(self.centering) != vals.ndim - 2:
            raise ValueError("one centering entry per spatial axis is required")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")

    @property
    def d(self) -> int:
        return self.values.ndim - 2

    @property
    def m(self) -> int:
        return self.values.shape[-1]

    @property
    def n_levels(self) -> int:
        return self.values.shape[0]

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return self.values.shape[1:-1]

    def axis_coordinates(self, axis: int) -> np.ndarray:
        n = self.spatial_shape[axis]
        shift = 0.5 if self.centering[axis] == "cell" else 0.0
        return (np.arange(n) + shift) * self.h

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_levels) * self.tau

    def like(self, values: np.ndarray) -> GridFunction:
        return GridFunction(values, self.h, self.tau, self.centering, self.t0)

    def check_aligned(self, other: GridFunction) -> None:
        if (self.values.shape != other.values.shape or self.h != other.h
                or self.tau != other.tau or self.centering != other.centering
                or self.t0 != other.t0):
            raise GridMismatch("grid functions live on different grids")

    def __sub__(self, other: GridFunction) -> GridFunction:
        self.check_aligned(other)
        return self.like(self.values - other.values)

    def __add__(self, other: GridFunction) -> GridFunction:
        self.check_aligned(other)
        return self.like(self.values + other.values)

    def quadrature_weights(self) -> np.ndarray:
        """Tensor product weights: trapezoid in time and on node axes, midpoint on cell axes."""
        w = _trapezoid(self.n_levels, self.tau)
        for ax, n in enumerate(self.spatial_shape):
            wa = np.full(n, self.h) if self.centering[ax] == "cell" else _trapezoid(n, self.h)
            w = np.multiply.outer(w, wa)
        return w

    def integrate(self, density: np.ndarray) -> float:
        """Quadrature of a scalar density living on this grid (no component axis)."""
        return float(np.sum(self.quadrature_weights() * density))


def _trapezoid(n: int, step: float) -> np.ndarray:
    if n == 1:
        return np.ones(1)
    w = np.full(n, step)
    w[0] = w[-1] = 0.5 * step
    return w


def node_grid(domain: DomainSpec, h: float, tau: float, m: int = 1) -> GridFunction:
    """Zero grid function on the nodes of ``domain`` with levels ``0..T``."""
    shape = (domain.steps(tau) + 1,) + domain.node_counts(h) + (m,)
    return GridFunction(np.zeros(shape), h, tau)


def sample(fn, domain: DomainSpec, h: float, tau: float, m: int = 1) -> GridFunction:
    """Sample ``fn(x_1, ..., x_d, t)`` (broadcasting) on the node grid."""
    base = node_grid(domain, h, tau, m)
    coords = [base.times()] + [base.axis_coordinates(a) for a in range(domain.d)]
    mesh = np.meshgrid(*coords, indexing="ij", sparse=True)
    vals = np.asarray(fn(*mesh[1:], mesh[0]), dtype=float)
    target = base.values.shape
    if vals.shape == target[:-1] or vals.ndim == len(target) - 1:
        vals = np.broadcast_to(vals, target[:-1])[..., None]
    return base.like(np.broadcast_to(vals, target).copy())
