"""Periodic square lattice and spectral transform conventions.

Units: the domain is 2*pi x 2*pi, so wave-numbers are integers and the
lattice spacing in k is 1. Arrays are stored in FFT order; index ``i`` of
an axis carries wave-number ``grid.k_axis_fft[i]``.

Transform convention (no prefactor forward, 1/N^2 inverse)::

    fhat(k) = sum_x f(x) exp(-i k.x)
    f(x)    = N^-2 sum_k fhat(k) exp(+i k.x)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

MIN_POINTS = 8


@dataclass(frozen=True)
class Grid:
    n_points: int
    workers: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if not isinstance(self.n_points, (int, np.integer)) or self.n_points < MIN_POINTS:
            raise ValueError(f"n_points must be an integer >= {MIN_POINTS}, got {self.n_points!r}")

    @property
    def spacing(self) -> float:
        return 2 * np.pi / self.n_points

    @property
    def kmin(self) -> int:
        return -(self.n_points // 2)

    @property
    def kmax(self) -> int:
        return (self.n_points - 1) // 2

    @property
    def k_axis(self) -> np.ndarray:
        """Integer wave-numbers, ascending."""
        return np.arange(self.kmin, self.kmax + 1)

    @cached_property
    def k_axis_fft(self) -> np.ndarray:
        return np.rint(np.fft.fftfreq(self.n_points, 1.0 / self.n_points)).astype(int)

    @cached_property
    def kx(self) -> np.ndarray:
        return np.broadcast_to(self.k_axis_fft[:, None], (self.n_points,) * 2)

    @cached_property
    def ky(self) -> np.ndarray:
        return np.broadcast_to(self.k_axis_fft[None, :], (self.n_points,) * 2)

    @cached_property
    def k2(self) -> np.ndarray:
        return (self.kx**2 + self.ky**2).astype(float)

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def x_axis(self) -> np.ndarray:
        return self.spacing * np.arange(self.n_points)

    def contains(self, kvec) -> bool:
        kx, ky = kvec
        return self.kmin <= kx <= self.kmax and self.kmin <= ky <= self.kmax

    def index_of(self, kvec) -> tuple[int, int]:
        """Array index (FFT order) of an integer wave-vector."""
        if not self.contains(kvec):
            raise IndexError(f"wave-vector {tuple(kvec)} outside lattice of size {self.n_points}")
        return int(kvec[0]) % self.n_points, int(kvec[1]) % self.n_points

    def wavevector(self, index) -> tuple[int, int]:
        i, j = index
        n = self.n_points
        if not (0 <= i < n and 0 <= j < n):
            raise IndexError(f"array index {tuple(index)} outside 0..{n - 1}")
        return int(self.k_axis_fft[i]), int(self.k_axis_fft[j])

    def forward(self, f: np.ndarray) -> np.ndarray:
        return sfft.fft2(f, axes=(-2, -1), workers=self.workers)

    def inverse(self, fhat: np.ndarray) -> np.ndarray:
        return sfft.ifft2(fhat, axes=(-2, -1), workers=self.workers)


def make_grid(n_points: int, workers: int | None = None) -> Grid:
    return Grid(n_points, workers)


def kmag(grid: Grid, index) -> float:
    """Magnitude of an integer lattice wave-vector ``index = (kx, ky)``."""
    if not grid.contains(index):
        raise IndexError(f"wave-vector {tuple(index)} outside lattice of size {grid.n_points}")
    return float(np.hypot(index[0], index[1]))
