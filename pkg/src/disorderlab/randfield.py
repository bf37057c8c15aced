"""Gaussian random potentials with a Gaussian covariance spectrum.

Realizations are synthesized in k-space,

    V(x) = N^2 Re F^-1[ sqrt(C_k) (X_k + i Y_k) ],

with X, Y i.i.d. standard normal (numpy's ziggurat sampler). The spectrum
C_k = C_C exp(-zeta^2 |k|^2 / 2) is normalized on the lattice so that
sum_k C_k = 1, which makes <V(x)^2> = 1.

Each realization draws from its own Philox stream keyed by
``(seed, index)``, so ensembles do not depend on scheduling order.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Grid

log = logging.getLogger(__name__)

DUMP_MAGIC = b"DLVF"
DUMP_VERSION = 1
_DUMP_HEADER = struct.Struct("<4sIIqd")  # magic, version, N, seed, zeta


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    zeta: float
    spectrum: np.ndarray  # FFT order, sums to one
    norm_const: float

    @property
    def amplitude(self) -> np.ndarray:
        return np.sqrt(self.spectrum)


@dataclass(frozen=True, eq=False)
class PotentialField:
    values: np.ndarray  # real, shape (..., N, N)
    source_seed: int
    index: int | Sequence[int] = 0


def normalize_spectrum(grid: Grid, zeta: float) -> CovarianceSpec:
    if not zeta > 0:
        raise ValueError(f"zeta must be positive, got {zeta!r}")
    if zeta * grid.n_points < 1e-3:
        log.warning("zeta*N = %.3g: covariance spectrum is essentially flat", zeta * grid.n_points)
    weights = np.exp(-0.5 * zeta**2 * grid.k2)
    total = weights.sum()
    spectrum = weights / total
    return CovarianceSpec(zeta=float(zeta), spectrum=spectrum, norm_const=float(1.0 / total))


def lattice_covariance(spec: CovarianceSpec, grid: Grid, lag) -> float:
    """Closed form <V(x) V(x+d)> = sum_k C_k cos(k.d) for a lattice lag (in points)."""
    dx, dy = (l * grid.spacing for l in lag)
    return float(np.sum(spec.spectrum * np.cos(grid.kx * dx + grid.ky * dy)))


def realization_rng(seed: int, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def _draw(grid: Grid, spec: CovarianceSpec, seed: int, index: int) -> np.ndarray:
    rng = realization_rng(seed, index)
    n = grid.n_points
    noise = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return n * n * np.real(grid.inverse(spec.amplitude * noise))


def sample_potential(grid: Grid, spec: CovarianceSpec, seed: int, index: int = 0) -> PotentialField:
    return PotentialField(_draw(grid, spec, seed, index), int(seed), int(index))


def sample_potentials(grid: Grid, spec: CovarianceSpec, seed: int, indices: Iterable[int]) -> PotentialField:
    """Stack of realizations, shape (len(indices), N, N)."""
    indices = [int(i) for i in indices]
    values = np.stack([_draw(grid, spec, seed, i) for i in indices])
    return PotentialField(values, int(seed), tuple(indices))


def empirical_covariance(fields) -> np.ndarray:
    """Estimate C_k as the realization mean of |V_k|^2 = |F V|^2 / N^4."""
    stack = _as_stack(fields)
    if stack.shape[0] == 0:
        raise ValueError("no realizations given")
    n = stack.shape[-1]
    vk = np.fft.fft2(stack, axes=(-2, -1)) / n**2
    return np.mean(np.abs(vk) ** 2, axis=0)


def fourier_coefficients(fields) -> np.ndarray:
    """V_k = F V / N^2 for each realization, shape (R, N, N)."""
    stack = _as_stack(fields)
    n = stack.shape[-1]
    return np.fft.fft2(stack, axes=(-2, -1)) / n**2


def _as_stack(fields) -> np.ndarray:
    if isinstance(fields, (PotentialField, np.ndarray)):
        fields = [fields]
    arrays = []
    for f in fields:
        v = f.values if isinstance(f, PotentialField) else np.asarray(f)
        arrays.append(v.reshape(-1, *v.shape[-2:]))
    if not arrays:
        return np.empty((0, 0, 0))
    return np.concatenate(arrays)


def dump_field(path, field: PotentialField, zeta: float) -> None:
    """Write one realization: 28-byte little-endian header then N*N float64, row-major."""
    values = np.ascontiguousarray(field.values, dtype="<f8")
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError("dump_field expects a single square realization")
    header = _DUMP_HEADER.pack(DUMP_MAGIC, DUMP_VERSION, values.shape[0], field.source_seed, float(zeta))
    Path(path).write_bytes(header + values.tobytes())


def load_field(path) -> tuple[PotentialField, float]:
    raw = Path(path).read_bytes()
    magic, version, n, seed, zeta = _DUMP_HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC:
        raise ValueError(f"{path}: not a field dump")
    if version != DUMP_VERSION:
        raise ValueError(f"{path}: unsupported dump version {version}")
    values = np.frombuffer(raw, dtype="<f8", offset=_DUMP_HEADER.size).reshape(n, n).copy()
    return PotentialField(values, seed), zeta
