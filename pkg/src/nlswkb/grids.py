"""Uniform periodic grids on centered boxes.

A grid covers the box [-L_i/2, L_i/2) along each axis with N_i equispaced
nodes, N_i a power of two.  Nodes sit at x_j = -L/2 + j*h with h = L/N, so
the left edge is a node and the right edge wraps around.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridError


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class PeriodicGrid:
    lengths: tuple[float, ...]
    sizes: tuple[int, ...]

    def __post_init__(self):
        if not 1 <= len(self.lengths) <= 2:
            raise GridError(f"dimension must be 1 or 2, got {len(self.lengths)}")
        if len(self.lengths) != len(self.sizes):
            raise GridError("lengths and sizes must have equal dimension")
        for L in self.lengths:
            if not (np.isfinite(L) and L > 0):
                raise GridError(f"box length must be positive and finite, got {L}")
        for n in self.sizes:
            if not (_is_power_of_two(n) and n >= 8):
                raise GridError(f"grid size must be a power of two >= 8, got {n}")
        object.__setattr__(self, "lengths", tuple(float(L) for L in self.lengths))
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))

    @classmethod
    def line(cls, length: float, size: int) -> "PeriodicGrid":
        return cls((length,), (size,))

    @classmethod
    def box(cls, lengths, sizes) -> "PeriodicGrid":
        return cls(tuple(lengths), tuple(sizes))

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.sizes

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.sizes))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def axis_nodes(self, axis: int) -> np.ndarray:
        """Node coordinates along one axis: -L/2 + j*h."""
        L, n = self.lengths[axis], self.sizes[axis]
        return -L / 2 + (L / n) * np.arange(n)

    @cached_property
    def nodes(self) -> tuple[np.ndarray, ...]:
        """Meshgrid node coordinates, one array of shape `self.shape` per axis."""
        axes = [self.axis_nodes(a) for a in range(self.dim)]
        if self.dim == 1:
            return (axes[0],)
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def axis_wavenumbers(self, axis: int) -> np.ndarray:
        """Angular wavenumbers 2*pi*fftfreq in FFT ordering."""
        L, n = self.lengths[axis], self.sizes[axis]
        return 2 * np.pi * np.fft.fftfreq(n, d=L / n)

    @cached_property
    def wavenumber_mesh(self) -> tuple[np.ndarray, ...]:
        axes = [self.axis_wavenumbers(a) for a in range(self.dim)]
        if self.dim == 1:
            return (axes[0],)
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def wavenumber_sq(self) -> np.ndarray:
        """|k|^2 on the FFT-ordered spectral grid."""
        out = np.zeros(self.shape)
        for karr in self.wavenumber_mesh:
            out = out + karr**2
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule mask: keep |k_i| <= (2/3) * k_i,max per axis."""
        mask = np.ones(self.shape, dtype=bool)
        for a in range(self.dim):
            k = self.axis_wavenumbers(a)
            kmax = np.abs(k).max()
            keep = np.abs(k) <= (2.0 / 3.0) * kmax
            shape = [1] * self.dim
            shape[a] = self.sizes[a]
            mask &= keep.reshape(shape)
        return mask

    def contains(self, points: np.ndarray) -> np.ndarray:
        """True for points inside the closed box [-L/2, L/2] per axis."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.ones(pts.shape[0], dtype=bool)
        for a in range(self.dim):
            half = self.lengths[a] / 2
            ok &= (pts[:, a] >= -half) & (pts[:, a] <= half)
        return ok

    def wrap(self, points: np.ndarray) -> np.ndarray:
        """Map arbitrary coordinates into the box by periodicity."""
        pts = np.asarray(points, dtype=float)
        out = np.array(pts, copy=True)
        flat = out.reshape(-1, self.dim) if self.dim > 1 else out.reshape(-1, 1)
        for a in range(self.dim):
            L = self.lengths[a]
            flat[:, a] = np.mod(flat[:, a] + L / 2, L) - L / 2
        return out
