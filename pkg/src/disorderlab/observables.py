"""Ensemble/time averaged momentum statistics and the fits made on them."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Grid
from .propagator import MOMENTUM, WaveField

DEFAULT_X0 = 0.5
DEFAULT_EVAL_POINTS = 300
DEFAULT_FIT_STEPS = 100
DEFAULT_AVERAGING_FRACTION = 0.5


class MomentumDistribution:
    """Running sum of |psi_k|^2 samples; ``mean`` is the averaged n_k."""

    def __init__(self, n_points: int, total: np.ndarray | None = None, weight: int = 0):
        self.n_points = n_points
        self.total = np.zeros((n_points, n_points)) if total is None else np.array(total, dtype=float)
        self.weight = int(weight)

    def add(self, density: np.ndarray) -> "MomentumDistribution":
        density = np.asarray(density, dtype=float)
        if density.shape[-2:] != (self.n_points, self.n_points):
            raise ValueError(f"density shape {density.shape} does not match grid {self.n_points}")
        flat = density.reshape(-1, self.n_points, self.n_points)
        self.total += flat.sum(axis=0)
        self.weight += flat.shape[0]
        return self

    def merge(self, other: "MomentumDistribution") -> "MomentumDistribution":
        if other.n_points != self.n_points:
            raise ValueError("cannot merge distributions on different grids")
        return MomentumDistribution(self.n_points, self.total + other.total, self.weight + other.weight)

    @property
    def density(self) -> np.ndarray:
        if self.weight == 0:
            raise ValueError("empty distribution")
        return self.total / self.weight

    def normalized(self) -> np.ndarray:
        d = self.density
        return d / d.sum()

    def save(self, path, config_hash: str | None = None) -> None:
        extra = {"config_hash": config_hash} if config_hash else {}
        np.savez(path, total=self.total, weight=self.weight, **extra)

    @classmethod
    def load(cls, path) -> "MomentumDistribution":
        with np.load(path) as data:
            total = data["total"]
            return cls(total.shape[-1], total, int(data["weight"]))


def accumulate(dist: MomentumDistribution, field: WaveField) -> MomentumDistribution:
    """Add |psi_k|^2 of every realization in ``field`` with unit weight each."""
    if field.representation != MOMENTUM:
        raise ValueError("field must be in momentum representation")
    return dist.add(np.abs(field.amplitudes) ** 2)


@dataclass
class RadialProfile:
    eval_points: np.ndarray
    values: np.ndarray
    kernel_width: float

    def to_csv(self, path, config_hash: str | None = None) -> None:
        """Columns ``k,n_bar``; an optional leading ``# config_hash=...`` comment line."""
        with open(path, "w", newline="") as fh:
            if config_hash:
                fh.write(f"# config_hash={config_hash}\n")
            w = csv.writer(fh)
            w.writerow(["k", "n_bar"])
            for k, v in zip(self.eval_points, self.values):
                w.writerow([repr(float(k)), repr(float(v))])

    @classmethod
    def from_csv(cls, path, kernel_width: float = DEFAULT_X0) -> "RadialProfile":
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
        if not lines or lines[0].replace(" ", "") != "k,n_bar":
            raise ValueError(f"{path}: expected a 'k,n_bar' header")
        data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
        return cls(data[:, 0], data[:, 1], kernel_width)


def eval_points_around(kp: float, k_lo: float, k_hi: float, n: int = DEFAULT_EVAL_POINTS,
                       clustering: float = 3.0) -> np.ndarray:
    """Uneven evaluation points on [k_lo, k_hi], densest at ``kp``.

    x(u) = kp + s(u) sinh(c u)/sinh(c) for u uniform on [-1, 1], where
    s = kp - k_lo for u < 0 and k_hi - kp for u >= 0, c = ``clustering``.
    """
    if not k_lo < kp < k_hi:
        raise ValueError("need k_lo < kp < k_hi")
    u = np.linspace(-1.0, 1.0, n)
    span = np.where(u < 0, kp - k_lo, k_hi - kp)
    return kp + span * np.sinh(clustering * u) / np.sinh(clustering)


def radial_profile(dist: MomentumDistribution | np.ndarray, eval_points: Sequence[float],
                   x0: float = DEFAULT_X0, grid: Grid | None = None) -> RadialProfile:
    """Angle average with the kernel g(x, k) ~ exp(-(|k|-x)^2 / 2 x0^2) / |k|.

    g is normalized so that sum_k g(x, k) = 1 at every x; k = 0 is excluded.
    The result is scaled to sum_j (x_{j+1} - x_j) n(x_j) = 1.
    """
    density = dist.density if isinstance(dist, MomentumDistribution) else np.asarray(dist, dtype=float)
    if not x0 > 0:
        raise ValueError("x0 must be positive")
    x = np.asarray(eval_points, dtype=float)
    if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0):
        raise ValueError("eval_points must be strictly increasing with at least two entries")
    if not np.any(density):
        raise ValueError("density is identically zero")
    grid = grid or Grid(density.shape[-1])
    kabs = grid.kabs.ravel()
    n = density.ravel()
    keep = kabs > 0
    # only modes within ~12 kernel widths of the evaluation range matter
    keep &= (kabs > x[0] - 12 * x0) & (kabs < x[-1] + 12 * x0)
    kabs, n = kabs[keep], n[keep]
    values = np.empty_like(x)
    for j, xj in enumerate(x):
        w = np.exp(-0.5 * ((kabs - xj) / x0) ** 2) / kabs
        s = w.sum()
        values[j] = (w @ n) / s if s > 0 else 0.0
    total = np.sum(np.diff(x) * values[:-1])
    if total <= 0:
        raise ValueError("profile has no weight on the evaluation range")
    return RadialProfile(x, values / total, float(x0))


def shell_mask(grid: Grid, k_shell: float, shell_width: float = 1.0) -> np.ndarray:
    return np.abs(grid.kabs - k_shell) <= shell_width / 2


def angular_modes(dist: MomentumDistribution | np.ndarray, k_shell: float, shell_width: float = 1.0,
                  m_max: int = 4, grid: Grid | None = None) -> np.ndarray:
    """n_m = (2 pi / M) sum_{k in shell} exp(-i m theta_k) n_k for m = 0..m_max.

    M is the number of lattice modes in the annulus |k| in k_shell +- width/2.
    """
    density = dist.density if isinstance(dist, MomentumDistribution) else np.asarray(dist, dtype=float)
    grid = grid or Grid(density.shape[-1])
    mask = shell_mask(grid, k_shell, shell_width)
    count = int(mask.sum())
    if count == 0:
        raise ValueError(f"no lattice modes in shell |k| = {k_shell} +- {shell_width / 2}")
    if count < 8:
        raise ValueError(f"shell holds only {count} modes; need at least 8")
    theta = np.arctan2(grid.ky[mask], grid.kx[mask])
    n = density[..., mask]
    m = np.arange(m_max + 1)
    phases = np.exp(-1j * np.outer(theta, m))
    return (2 * np.pi / count) * (n @ phases)


def anisotropy(dist, k_shell: float, shell_width: float = 1.0, grid: Grid | None = None) -> float:
    """|n_1 / n_0| on the shell."""
    modes = angular_modes(dist, k_shell, shell_width, 1, grid)
    return float(np.abs(modes[..., 1] / modes[..., 0]))


def ring_fraction(density: np.ndarray, kp: float, grid: Grid | None = None, rel_width: float = 0.1) -> float:
    grid = grid or Grid(density.shape[-1])
    mask = np.abs(grid.kabs - kp) <= rel_width * kp
    return float(density[..., mask].sum() / density.sum())


@dataclass
class DecayFit:
    rate: float
    slope: float
    intercept: float
    residual_norm: float
    n_samples: int


def peak_decay_fit(t: Sequence[float], n: Sequence[float], window: slice | tuple[int, int] | None = None) -> DecayFit:
    """Least-squares line through (t, log n); the decay rate is minus its slope."""
    t = np.asarray(t, dtype=float)
    n = np.asarray(n, dtype=float)
    if t.shape != n.shape:
        raise ValueError("t and n must have equal length")
    if window is None:
        window = slice(0, DEFAULT_FIT_STEPS + 1)
    elif isinstance(window, tuple):
        window = slice(*window)
    t, n = t[window], n[window]
    if t.size < 3:
        raise ValueError("need at least 3 samples in the fit window")
    if np.any(n <= 0):
        raise ValueError("densities in the fit window must be positive")
    tc = t - t.mean()
    denom = np.dot(tc, tc)
    if denom == 0:
        raise ValueError("degenerate fit: all times equal")
    y = np.log(n)
    yc = y - y.mean()
    slope = float(np.dot(tc, yc) / denom)
    intercept = float(y.mean() - slope * t.mean())
    resid = y - (intercept + slope * t)
    return DecayFit(-slope, slope, intercept, float(np.linalg.norm(resid)), int(t.size))


def fit_prefactor(x: Sequence[float], rates: Sequence[float], power: int = 1) -> float:
    """Least-squares C in rate = C x^power (line through the origin)."""
    xp = np.asarray(x, dtype=float) ** power
    r = np.asarray(rates, dtype=float)
    return float(np.dot(xp, r) / np.dot(xp, xp))


def read_config_hash(path) -> str | None:
    """Config hash stored in the header of a CSV or NDJSON output, if any."""
    with open(path) as fh:
        first = fh.readline().strip()
    if first.startswith("# config_hash="):
        return first.split("=", 1)[1].strip()
    if first.startswith("{"):
        head = json.loads(first)
        if "t" not in head:
            return head.get("config_hash")
    return None


def write_timeseries(path, records: Iterable[dict], config_hash: str | None = None) -> None:
    """NDJSON, one object per line with keys t, n_kp, norm.

    Records may carry ``n_kp_coherent`` = |<psi_kp>|^2 as an optional fourth
    key. With ``config_hash`` the first line is a header object
    ``{"schema": "timeseries/1", "config_hash": ...}`` that readers skip.
    """
    with open(path, "w") as fh:
        if config_hash:
            fh.write(json.dumps({"schema": "timeseries/1", "config_hash": config_hash}) + "\n")
        for rec in records:
            out = {"t": float(rec["t"]), "n_kp": float(rec["n_kp"]), "norm": float(rec["norm"])}
            if "n_kp_coherent" in rec:
                out["n_kp_coherent"] = float(rec["n_kp_coherent"])
            fh.write(json.dumps(out) + "\n")


def read_timeseries(path) -> list[dict]:
    records = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
    return [r for r in records if "t" in r]
