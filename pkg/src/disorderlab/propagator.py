"""Strang-split propagation of i d/dt psi = -1/2 lap psi + eps V psi.

A momentum-space field stores Fourier coefficients ``psi_k`` with
``psi(x) = sum_k psi_k exp(i k.x)``, so ``n_k = |psi_k|^2`` sums to the norm.
One step is

    psi_k <- exp(-i tau K/2) F exp(-i tau eps V) F^-1 exp(-i tau K/2) psi_k,

K(k) = |k|^2 / 2, one transform pair per step. All leading array axes are
treated as independent realizations.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
import scipy.fft as sfft

from .core import Grid
from .randfield import PotentialField

MOMENTUM = "momentum"
POSITION = "position"


@dataclass(frozen=True, eq=False)
class WaveField:
    amplitudes: np.ndarray
    representation: str = MOMENTUM
    time: float = 0.0

    def __post_init__(self):
        if self.representation not in (MOMENTUM, POSITION):
            raise ValueError(f"unknown representation {self.representation!r}")

    @property
    def n_points(self) -> int:
        return self.amplitudes.shape[-1]

    def norm(self) -> np.ndarray:
        """sum_k |psi_k|^2, equivalently the spatial mean of |psi(x)|^2."""
        a2 = np.abs(self.amplitudes) ** 2
        if self.representation == MOMENTUM:
            return a2.sum(axis=(-2, -1))
        return a2.mean(axis=(-2, -1))

    def density(self) -> np.ndarray:
        _require_momentum(self)
        return np.abs(self.amplitudes) ** 2

    def to_position(self) -> "WaveField":
        if self.representation == POSITION:
            return self
        n = self.n_points
        return replace(self, amplitudes=n * n * sfft.ifft2(self.amplitudes, axes=(-2, -1)), representation=POSITION)

    def to_momentum(self) -> "WaveField":
        if self.representation == MOMENTUM:
            return self
        n = self.n_points
        return replace(self, amplitudes=sfft.fft2(self.amplitudes, axes=(-2, -1)) / (n * n), representation=MOMENTUM)


@dataclass(frozen=True)
class EvolveConfig:
    epsilon: float
    tau: float
    n_steps: int = 1
    record_every: int = 1

    def __post_init__(self):
        if self.tau == 0:
            raise ValueError("tau must be nonzero")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    @classmethod
    def for_peak(cls, epsilon: float, kp: float, **kw) -> "EvolveConfig":
        """Default step tau = 1/kp^2."""
        return cls(epsilon=epsilon, tau=1.0 / kp**2, **kw)


def _require_momentum(field: WaveField) -> None:
    if field.representation != MOMENTUM:
        raise ValueError("field must be in momentum representation")


def init_plane_wave(grid: Grid, kp, batch: int | None = None) -> WaveField:
    """All amplitude on lattice mode ``kp`` (integer 2-vector), unit norm."""
    i, j = grid.index_of(kp)
    shape = (grid.n_points,) * 2 if batch is None else (batch, grid.n_points, grid.n_points)
    amps = np.zeros(shape, dtype=complex)
    amps[..., i, j] = 1.0
    return WaveField(amps, MOMENTUM, 0.0)


class StrangStepper:
    """Phase tables and workspace for one (potential, config) pair."""

    def __init__(self, grid: Grid, potential: PotentialField, cfg: EvolveConfig):
        self.grid = grid
        self.tau = cfg.tau
        self.half_kinetic = np.exp(-0.25j * cfg.tau * grid.k2)
        self.potential_phase = np.exp(-1j * cfg.tau * cfg.epsilon * np.asarray(potential.values))

    def step(self, amps: np.ndarray) -> np.ndarray:
        w = self.grid.workers
        amps = amps * self.half_kinetic
        amps = sfft.ifft2(amps, axes=(-2, -1), overwrite_x=True, workers=w)
        amps *= self.potential_phase
        amps = sfft.fft2(amps, axes=(-2, -1), overwrite_x=True, workers=w)
        amps *= self.half_kinetic
        return amps


def strang_step(field: WaveField, potential: PotentialField, cfg: EvolveConfig, grid: Optional[Grid] = None) -> WaveField:
    _require_momentum(field)
    grid = grid or Grid(field.n_points)
    stepper = StrangStepper(grid, potential, cfg)
    return WaveField(stepper.step(field.amplitudes), MOMENTUM, field.time + cfg.tau)


Sink = Callable[[int, float, np.ndarray], None]


def evolve(field: WaveField, potential: PotentialField, cfg: EvolveConfig,
           sink: Optional[Sink] = None, grid: Optional[Grid] = None) -> WaveField:
    """Apply ``cfg.n_steps`` Strang steps.

    ``sink(step, time, density)`` is called after every ``record_every``-th
    step with the momentum density ``|psi_k|^2``.
    """
    _require_momentum(field)
    grid = grid or Grid(field.n_points)
    stepper = StrangStepper(grid, potential, cfg)
    amps = field.amplitudes
    t0 = field.time
    for step in range(1, cfg.n_steps + 1):
        amps = stepper.step(amps)
        if sink is not None and step % cfg.record_every == 0:
            sink(step, t0 + step * cfg.tau, np.abs(amps) ** 2)
    return WaveField(amps, MOMENTUM, t0 + cfg.n_steps * cfg.tau)


def to_interaction_picture(field: WaveField, t: Optional[float] = None, grid: Optional[Grid] = None) -> WaveField:
    """phi_k = psi_k exp(+i |k|^2 t / 2), with ``t`` defaulting to ``field.time``."""
    _require_momentum(field)
    grid = grid or Grid(field.n_points)
    t = field.time if t is None else t
    return replace(field, amplitudes=field.amplitudes * np.exp(0.5j * t * grid.k2))
