"""Little-endian binary containers for gridded fields.

``PHCF``  coefficient samples: u32 d, m, n_space, n_time; f64 (i, j, a, b, grid).
``PHDC``  dual correctors: u32 d, m, n_space, n_time; f64 (k, i, j, a, b, grid).
``PHGF``  space-time grid function: u32 d, m, per-axis counts (time, then
          space); f64 h, tau; f64 values time-major with components last.
"""

from __future__ import annotations

import os
import struct

import numpy as np

_U32 = "<u4"
_F64 = "<f8"


def _write(path, magic: bytes, header: list[int], floats: list[float], values: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(np.asarray(header, dtype=_U32).tobytes())
        if floats:
            fh.write(np.asarray(floats, dtype=_F64).tobytes())
        fh.write(np.ascontiguousarray(values, dtype=_F64).tobytes())


def _read_header(fh, magic: bytes, count: int) -> list[int]:
    got = fh.read(4)
    if got != magic:
        raise ValueError(f"bad magic {got!r}, expected {magic!r}")
    raw = fh.read(4 * count)
    if len(raw) != 4 * count:
        raise ValueError("truncated header")
    return [int(v) for v in np.frombuffer(raw, dtype=_U32)]


def _read_values(fh, shape: tuple[int, ...]) -> np.ndarray:
    n = int(np.prod(shape))
    raw = fh.read(8 * n)
    if len(raw) != 8 * n or fh.read(1):
        raise ValueError(f"payload size mismatch for shape {shape}")
    return np.frombuffer(raw, dtype=_F64).reshape(shape).astype(float)


def write_coefficient(path: str | os.PathLike, samples: np.ndarray) -> None:
    """Write ``(d, d, m, m, n, ..., n, n_t)`` samples as ``PHCF``."""
    d, _, m = samples.shape[:3]
    n_space, n_time = samples.shape[4], samples.shape[-1]
    _write(path, b"PHCF", [d, m, n_space, n_time], [], samples)


def read_coefficient(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        d, m, n_space, n_time = _read_header(fh, b"PHCF", 4)
        return _read_values(fh, (d, d, m, m) + (n_space,) * d + (n_time,))


def write_dual(path: str | os.PathLike, phi: np.ndarray) -> None:
    """Write ``(d+1, d+1, d, m, m, grid...)`` dual correctors as ``PHDC``."""
    d, m = phi.shape[2], phi.shape[3]
    _write(path, b"PHDC", [d, m, phi.shape[5], phi.shape[-1]], [], phi)


def read_dual(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        d, m, n_space, n_time = _read_header(fh, b"PHDC", 4)
        return _read_values(fh, (d + 1, d + 1, d, m, m) + (n_space,) * d + (n_time,))


def write_grid_function(path: str | os.PathLike, values: np.ndarray, h: float, tau: float) -> None:
    """Write ``(n_t, n_1, ..., n_d, m)`` values as ``PHGF``."""
    d = values.ndim - 2
    m = values.shape[-1]
    _write(path, b"PHGF", [d, m, *values.shape[:-1]], [h, tau], values)


def read_grid_function(path: str | os.PathLike) -> tuple[np.ndarray, float, float]:
    with open(path, "rb") as fh:
        d, m = _read_header(fh, b"PHGF", 2)
        counts = [int(v) for v in np.frombuffer(fh.read(4 * (d + 1)), dtype=_U32)]
        h, tau = struct.unpack("<2d", fh.read(16))
        return _read_values(fh, tuple(counts) + (m,)), h, tau
