"""Kinetic equations solved independently of the wave simulation.

* ``memory_evolve``: the time-nonlocal equation
  d/dt n_k = sum_q 2 eps^2 C_{k-q} int_0^t cos(T_kq (t-t')) (n_q - n_k)(t') dt'
  on a finite set of lattice modes, T_kq = (|k|^2 - |q|^2)/2.
* ``ring_evolve``: the Markovian equation on one energy shell,
  d/dt n(theta) = 2 pi eps^2 int C(k, theta-theta') (n(theta') - n(theta)) dtheta'.
* ``jump_process_simulate`` / ``green_kubo_diffusion``: the same ring
  dynamics as a compound Poisson process for the velocity direction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ive

from .core import Grid
from .randfield import CovarianceSpec

COUPLING_CUTOFF = 1e-8
MAX_PHASE_STEP = 0.2


# --- memory equation ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MemoryKernel:
    """Pairs (i < j) of active modes with coupling 2 eps^2 C_{k_i - k_j} and phase T_ij."""
    modes: np.ndarray  # (M, 2) integer wave-vectors
    i: np.ndarray
    j: np.ndarray
    coupling: np.ndarray
    phase: np.ndarray

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def max_phase(self) -> float:
        return float(np.abs(self.phase).max()) if self.phase.size else 0.0

    def index_of(self, kvec) -> int:
        hit = np.nonzero((self.modes[:, 0] == kvec[0]) & (self.modes[:, 1] == kvec[1]))[0]
        if hit.size == 0:
            raise KeyError(f"mode {tuple(kvec)} not in active set")
        return int(hit[0])


def disk_modes(grid: Grid, center, radius: float) -> np.ndarray:
    """Lattice wave-vectors within ``radius`` of ``center`` (and inside the grid)."""
    r = int(math.ceil(radius))
    cx, cy = int(round(center[0])), int(round(center[1]))
    ax = np.arange(-r, r + 1)
    dx, dy = np.meshgrid(ax, ax, indexing="ij")
    keep = dx**2 + dy**2 <= radius**2
    kx, ky = dx[keep] + cx, dy[keep] + cy
    inside = (kx >= grid.kmin) & (kx <= grid.kmax) & (ky >= grid.kmin) & (ky <= grid.kmax)
    return np.column_stack([kx[inside], ky[inside]])


def build_memory_kernel(grid: Grid, spec: CovarianceSpec, epsilon: float, modes,
                        cutoff: float = COUPLING_CUTOFF) -> MemoryKernel:
    """Keep the pairs whose C_{k-q} exceeds ``cutoff`` times the largest C."""
    modes = np.asarray(modes, dtype=int)
    if modes.ndim != 2 or modes.shape[0] == 0:
        raise ValueError("active set is empty")
    cmax = spec.spectrum.max()
    # C_{k-q} depends on |k-q|^2 only; find the cutoff radius once
    r2_max = 2 * math.log(1.0 / cutoff) / spec.zeta**2
    n = grid.n_points
    ii, jj = [], []
    for a in range(len(modes) - 1):
        d = modes[a + 1:] - modes[a]
        close = np.nonzero((d**2).sum(axis=1) <= r2_max)[0]
        ii.append(np.full(close.size, a))
        jj.append(close + a + 1)
    i = np.concatenate(ii) if ii else np.empty(0, int)
    j = np.concatenate(jj) if jj else np.empty(0, int)
    d = modes[i] - modes[j]
    c = spec.spectrum[d[:, 0] % n, d[:, 1] % n]
    keep = c > cutoff * cmax
    i, j, c = i[keep], j[keep], c[keep]
    w = 0.5 * (modes**2).sum(axis=1).astype(float)
    return MemoryKernel(modes, i, j, 2 * epsilon**2 * c, w[i] - w[j])


@dataclass
class MemoryRun:
    times: np.ndarray
    densities: np.ndarray  # (n_records, M)
    kernel: MemoryKernel

    def mode_series(self, kvec) -> np.ndarray:
        return self.densities[:, self.kernel.index_of(kvec)]


def memory_evolve(initial, kernel: MemoryKernel, dt: float, n_steps: int, record_every: int = 1) -> MemoryRun:
    """Explicit midpoint in time, trapezoidal quadrature of the memory integral.

    Because cos(T (t - t')) = Re[exp(i T t) exp(-i T t')], the memory
    integral of each pair is carried as the running trapezoidal sum
    A_ij(t) = int_0^t exp(-i T_ij t') (n_j - n_i)(t') dt' and the flux is
    c_ij Re[exp(i T_ij t) A_ij(t)]: full history at O(pairs) cost per step.
    Pair fluxes enter modes i and j with opposite signs, so sum_k n_k is
    conserved to rounding.
    """
    n = np.array(initial, dtype=float)
    if n.shape != (kernel.n_modes,):
        raise ValueError(f"initial density must have shape ({kernel.n_modes},)")
    if kernel.n_modes == 0:
        raise ValueError("active set is empty")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt * kernel.max_phase > MAX_PHASE_STEP:
        raise ValueError(f"dt={dt:.3g} too large: dt*max|T| = {dt * kernel.max_phase:.3g} > {MAX_PHASE_STEP}")
    i, j, c, T = kernel.i, kernel.j, kernel.coupling, kernel.phase
    M = kernel.n_modes
    acc = np.zeros(T.size, dtype=complex)
    rot_half = np.exp(-0.5j * T * dt)
    phase = np.ones(T.size, dtype=complex)  # exp(-i T t)

    def rhs(dens, ph, a):
        flux = c * np.real(a / ph)  # Re[exp(iTt) A]; |ph| = 1
        return np.bincount(i, weights=flux, minlength=M) - np.bincount(j, weights=flux, minlength=M)

    times = [0.0]
    out = [n.copy()]
    g_prev = phase * (n[j] - n[i])
    t = 0.0
    for step in range(1, n_steps + 1):
        k1 = rhs(n, phase, acc)
        n_mid = n + 0.5 * dt * k1
        phase_mid = phase * rot_half
        g_mid = phase_mid * (n_mid[j] - n_mid[i])
        acc_mid = acc + 0.25 * dt * (g_prev + g_mid)
        k2 = rhs(n_mid, phase_mid, acc_mid)
        n = n + dt * k2
        phase = phase_mid * rot_half
        g_new = phase * (n[j] - n[i])
        acc += 0.5 * dt * (g_prev + g_new)
        g_prev = g_new
        t = step * dt
        if step % record_every == 0:
            times.append(t)
            out.append(n.copy())
    return MemoryRun(np.array(times), np.array(out), kernel)


def peak_memory_run(grid: Grid, spec: CovarianceSpec, epsilon: float, kp, t_end: float,
                    radius: float | None = None, phase_step: float = MAX_PHASE_STEP) -> MemoryRun:
    """Memory equation from a single occupied mode ``kp`` on a disk of modes around it.

    The default disk radius is twice the coupling range.
    """
    if radius is None:
        radius = 2 * math.sqrt(2 * math.log(1.0 / COUPLING_CUTOFF)) / spec.zeta
    modes = disk_modes(grid, kp, radius)
    kernel = build_memory_kernel(grid, spec, epsilon, modes)
    n0 = np.zeros(kernel.n_modes)
    n0[kernel.index_of(kp)] = 1.0
    n_steps = max(1, math.ceil(t_end * kernel.max_phase / phase_step))
    return memory_evolve(n0, kernel, t_end / n_steps, n_steps)


# --- ring (Markovian) equation --------------------------------------------------------

@dataclass
class RingState:
    k: float
    theta: np.ndarray
    density: np.ndarray
    time: float = 0.0

    @property
    def dtheta(self) -> float:
        return 2 * np.pi / self.theta.size

    @property
    def mass(self) -> float:
        return float(self.density.sum() * self.dtheta)


def ring_grid(m_points: int) -> np.ndarray:
    if m_points < 16:
        raise ValueError("need at least 16 angular points")
    return 2 * np.pi * np.arange(m_points) / m_points


def _kernel_values(cov_angular, theta: np.ndarray) -> np.ndarray:
    vals = np.asarray(cov_angular(theta) if callable(cov_angular) else cov_angular, dtype=float)
    if vals.shape != theta.shape:
        raise ValueError("covariance samples must match the angular grid")
    if np.any(vals < 0):
        raise ValueError("angular covariance must be nonnegative")
    return vals


def ring_rates(cov_angular, theta: np.ndarray, epsilon: float) -> np.ndarray:
    """Mode rates 2 pi eps^2 (C_m - C_0) with discrete C_m = dtheta sum_j C(theta_j) exp(-i m theta_j)."""
    vals = _kernel_values(cov_angular, theta)
    cm = (2 * np.pi / theta.size) * np.fft.fft(vals)
    return 2 * np.pi * epsilon**2 * (cm - cm[0])


def ring_evolve(state: RingState, cov_angular, epsilon: float, dt: float, n_steps: int) -> list[RingState]:
    """Exact exponentiation in angular Fourier space; returns states at every step (including t=0)."""
    rates = ring_rates(cov_angular, state.theta, epsilon)
    nm0 = np.fft.fft(state.density)
    out = [state]
    for step in range(1, n_steps + 1):
        t = step * dt
        dens = np.fft.ifft(nm0 * np.exp(rates * t))
        out.append(RingState(state.k, state.theta, np.real(dens), state.time + t))
    return out


def ring_evolve_rk4(state: RingState, cov_angular, epsilon: float, dt: float, n_steps: int,
                    substeps: int = 1) -> list[RingState]:
    """Real-space reference integrator: classical RK4 on the angular grid."""
    theta = state.theta
    vals = _kernel_values(cov_angular, theta)
    m = theta.size
    idx = (np.arange(m)[:, None] - np.arange(m)[None, :]) % m
    kern = 2 * np.pi * epsilon**2 * (2 * np.pi / m) * vals[idx]  # C(theta_i - theta_j)
    rowsum = kern.sum(axis=1)
    f = lambda n: kern @ n - rowsum * n
    h = dt / substeps
    n = state.density.astype(float).copy()
    out = [state]
    for step in range(1, n_steps + 1):
        for _ in range(substeps):
            k1 = f(n)
            k2 = f(n + 0.5 * h * k1)
            k3 = f(n + 0.5 * h * k2)
            k4 = f(n + h * k3)
            n = n + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(RingState(state.k, theta, n.copy(), state.time + step * dt))
    return out


def angular_mode(state: RingState, m: int) -> complex:
    """n_m = int exp(-i m theta) n(theta) dtheta on the discrete ring."""
    return complex(state.dtheta * np.sum(np.exp(-1j * m * state.theta) * state.density))


# --- jump process ---------------------------------------------------------------

class GaussianRingKernel:
    """Angular kernel of the Gaussian covariance on the shell |q| = k.

    C(k, theta) = zeta^2/(2 pi) exp(-(zeta k)^2 (1 - cos theta)); the
    normalized jump density is the von Mises law with concentration (zeta k)^2.
    """

    def __init__(self, k: float, zeta: float):
        self.k = float(k)
        self.zeta = float(zeta)
        self.kappa = (zeta * k) ** 2

    def __call__(self, theta):
        return self.zeta**2 / (2 * np.pi) * np.exp(-self.kappa * (1 - np.cos(theta)))

    def c_m(self, m: int) -> float:
        return self.zeta**2 * float(ive(m, self.kappa))

    @property
    def c0(self) -> float:
        return self.c_m(0)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.vonmises(0.0, self.kappa, size)


class TabulatedRingKernel:
    """Arbitrary nonnegative angular kernel given on a uniform grid over [0, 2 pi)."""

    def __init__(self, values: Sequence[float]):
        vals = np.asarray(values, dtype=float)
        if vals.ndim != 1 or vals.size < 16:
            raise ValueError("need at least 16 kernel samples")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValueError("kernel must be finite and nonnegative")
        if vals.sum() <= 0:
            raise ValueError("kernel is not normalizable")
        self.values = vals
        self.theta = ring_grid(vals.size)
        self.dtheta = 2 * np.pi / vals.size
        self._cdf = np.cumsum(vals) / vals.sum()

    def __call__(self, theta):
        idx = np.rint(np.mod(theta, 2 * np.pi) / self.dtheta).astype(int) % self.values.size
        return self.values[idx]

    def c_m(self, m: int) -> float:
        return float(np.real(self.dtheta * np.sum(self.values * np.exp(-1j * m * self.theta))))

    @property
    def c0(self) -> float:
        return self.c_m(0)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        # each sample sits on a grid angle, uniformly spread within its cell
        u = rng.random(size)
        cell = np.searchsorted(self._cdf, u, side="right").clip(max=self.values.size - 1)
        return self.theta[cell] + (rng.random(size) - 0.5) * self.dtheta


def _as_ring_kernel(cov_angular):
    if hasattr(cov_angular, "sample") and hasattr(cov_angular, "c0"):
        if not cov_angular.c0 > 0 or not math.isfinite(cov_angular.c0):
            raise ValueError("kernel is not normalizable")
        return cov_angular
    return TabulatedRingKernel(cov_angular)


@dataclass
class JumpTrajectory:
    """Piecewise-constant direction: angle ``angles[i]`` holds on [times[i], times[i+1])."""
    times: np.ndarray  # starts with 0
    angles: np.ndarray
    t_max: float

    def angle_at(self, t) -> np.ndarray:
        idx = np.searchsorted(self.times, t, side="right") - 1
        return self.angles[idx]

    def cos_integral(self, t_cut: float) -> float:
        """int_0^t_cut cos(theta(t) - theta(0)) dt, exact for the jump path."""
        t_cut = min(t_cut, self.t_max)
        edges = np.append(self.times, self.t_max)
        dwell = np.clip(np.minimum(edges[1:], t_cut) - edges[:-1], 0.0, None)
        return float(np.sum(dwell * np.cos(self.angles - self.angles[0])))


def jump_process_simulate(k: float, cov_angular, epsilon: float, t_max: float, seed,
                          theta0: float | None = None) -> JumpTrajectory:
    """Direction of a particle on the shell |k|: exponential waits at rate
    lambda = 2 pi eps^2 C_0(k), increments drawn from C(k, theta)/C_0(k)."""
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    kernel = _as_ring_kernel(cov_angular)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rate = 2 * np.pi * epsilon**2 * kernel.c0
    start = rng.uniform(-np.pi, np.pi) if theta0 is None else float(theta0)
    chunk = max(16, int(rate * t_max + 6 * math.sqrt(rate * t_max) + 10))
    times, angles = [np.zeros(1)], [np.array([start])]
    t_last, a_last = 0.0, start
    while True:
        waits = rng.exponential(1.0 / rate, chunk)
        jt = t_last + np.cumsum(waits)
        jumps = kernel.sample(rng, chunk)
        ja = a_last + np.cumsum(jumps)
        keep = jt < t_max
        times.append(jt[keep])
        angles.append(ja[keep])
        if not keep.all():
            break
        t_last, a_last = jt[-1], ja[-1]
    return JumpTrajectory(np.concatenate(times), np.concatenate(angles), float(t_max))


def jump_ensemble(k: float, cov_angular, epsilon: float, t_max: float, n_traj: int, seed: int) -> list[JumpTrajectory]:
    """Independent trajectories, trajectory ``i`` keyed by (seed, i)."""
    out = []
    for idx in range(n_traj):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(idx,))))
        out.append(jump_process_simulate(k, cov_angular, epsilon, t_max, rng))
    return out


def cos_autocorrelation(trajectories: Sequence[JumpTrajectory], times) -> np.ndarray:
    """Ensemble mean of cos(theta(t) - theta(0)) on the given times."""
    times = np.asarray(times, dtype=float)
    acc = np.zeros_like(times)
    for tr in trajectories:
        acc += np.cos(tr.angle_at(times) - tr.angles[0])
    return acc / len(trajectories)


@dataclass
class DiffusionEstimate:
    value: float
    stderr: float
    t_cut: float
    n_trajectories: int


def green_kubo_diffusion(trajectories: Sequence[JumpTrajectory], k: float, threshold: float = 1e-3,
                         n_grid: int = 4000, min_trajectories: int = 100) -> DiffusionEstimate:
    """D = (k^2/2) int_0^t_cut <cos(theta(t) - theta(0))> dt.

    t_cut is the first time on a uniform grid where the ensemble mean
    drops below ``threshold`` (its initial value is 1). Each trajectory's
    integral is exact; the spread of those integrals gives the error bar.
    """
    n = len(trajectories)
    if n < min_trajectories:
        raise ValueError(f"need at least {min_trajectories} trajectories, got {n}")
    t_max = min(tr.t_max for tr in trajectories)
    grid = np.linspace(0.0, t_max, n_grid)
    corr = cos_autocorrelation(trajectories, grid)
    below = np.nonzero(corr < threshold * corr[0])[0]
    t_cut = float(grid[below[0]]) if below.size else t_max
    integrals = np.array([tr.cos_integral(t_cut) for tr in trajectories])
    scale = k**2 / 2
    return DiffusionEstimate(scale * integrals.mean(), scale * integrals.std(ddof=1) / math.sqrt(n), t_cut, n)


def diffusion_from_kernel(k: float, cov_angular, epsilon: float) -> float:
    """-k^2 / (2 L_1) = k^2 / (4 pi eps^2 (C_0 - C_1))."""
    kernel = _as_ring_kernel(cov_angular)
    return k**2 / (4 * np.pi * epsilon**2 * (kernel.c0 - kernel.c_m(1)))
