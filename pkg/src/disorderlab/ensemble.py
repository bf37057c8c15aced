"""Disorder-ensemble runs of the wave simulation, in fixed chunks of realizations.

The chunking depends only on the config (``batch``), never on the number of
worker processes, and chunks are merged in realization-index order, so the
merged outputs do not depend on how the work was scheduled.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import ExperimentConfig
from .core import Grid
from .observables import MomentumDistribution
from .propagator import EvolveConfig, StrangStepper, init_plane_wave
from .randfield import normalize_spectrum, sample_potentials

log = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-6


class NumericalError(RuntimeError):
    """NaN or loss of norm during an evolution."""


@dataclass
class ChunkResult:
    indices: tuple[int, ...]
    steps: np.ndarray  # recorded step numbers, starting with 0
    amp_kp: np.ndarray  # (R, n_records) complex amplitude psi at kp
    norm: np.ndarray  # (R, n_records)
    total: np.ndarray  # (N, N) sum of averaged snapshots over realizations
    weight: int  # number of (realization, snapshot) pairs in ``total``

    def save(self, path, config_hash: str) -> None:
        tmp = Path(path).with_suffix(".tmp.npz")
        np.savez(tmp, indices=np.array(self.indices), steps=self.steps, amp_kp=self.amp_kp, norm=self.norm,
                 total=self.total, weight=self.weight, config_hash=config_hash)
        tmp.replace(path)

    @classmethod
    def load(cls, path) -> tuple["ChunkResult", str]:
        with np.load(path) as z:
            res = cls(tuple(int(i) for i in z["indices"]), z["steps"], z["amp_kp"], z["norm"], z["total"],
                      int(z["weight"]))
            return res, str(z["config_hash"])

    @property
    def n_kp(self) -> np.ndarray:
        return np.abs(self.amp_kp) ** 2


def chunk_plan(realizations: int, batch: int) -> list[tuple[int, ...]]:
    return [tuple(range(a, min(a + batch, realizations))) for a in range(0, realizations, batch)]


def record_steps(cfg: ExperimentConfig) -> np.ndarray:
    return np.arange(0, cfg.n_steps + 1, cfg.record_every)


def averaging_start(cfg: ExperimentConfig) -> int:
    """First step included in the time average (the last ``averaging_fraction`` of the run)."""
    return max(1, cfg.n_steps - math.floor(cfg.averaging_fraction * cfg.n_steps))


def run_chunk(cfg: ExperimentConfig, indices: Sequence[int], workers: int | None = None) -> ChunkResult:
    grid = Grid(cfg.grid_n, workers=workers)
    spec = normalize_spectrum(grid, cfg.zeta)
    pots = sample_potentials(grid, spec, cfg.master_seed, indices)
    ecfg = EvolveConfig(cfg.epsilon, cfg.tau, cfg.n_steps, cfg.record_every)
    stepper = StrangStepper(grid, pots, ecfg)
    amps = init_plane_wave(grid, (cfg.kp, 0), batch=len(indices)).amplitudes
    ip, jp = grid.index_of((cfg.kp, 0))
    steps = record_steps(cfg)
    amp_kp = np.empty((len(indices), steps.size), dtype=complex)
    norm = np.empty((len(indices), steps.size))
    amp_kp[:, 0] = norm[:, 0] = 1.0
    total = np.zeros((grid.n_points,) * 2)
    weight = 0
    start = averaging_start(cfg)
    rec = 1
    for step in range(1, cfg.n_steps + 1):
        amps = stepper.step(amps)
        if step % cfg.record_every:
            continue
        dens = np.abs(amps) ** 2
        nrm = dens.sum(axis=(-2, -1))
        if not np.all(np.isfinite(nrm)) or np.max(np.abs(nrm - 1)) > NORM_TOLERANCE:
            raise NumericalError(f"norm lost at step {step} (realizations {indices[0]}..{indices[-1]})")
        amp_kp[:, rec] = amps[:, ip, jp]
        norm[:, rec] = nrm
        rec += 1
        if step >= start:
            total += dens.sum(axis=0)
            weight += len(indices)
    return ChunkResult(tuple(int(i) for i in indices), steps, amp_kp, norm, total, weight)


def merge_chunks(results: Sequence[ChunkResult]) -> tuple[ChunkResult, MomentumDistribution]:
    """Concatenate chunk results in realization-index order."""
    if not results:
        raise ValueError("nothing to merge")
    results = sorted(results, key=lambda r: r.indices[0])
    total = np.zeros_like(results[0].total)
    weight = 0
    for r in results:
        total += r.total
        weight += r.weight
    merged = ChunkResult(tuple(i for r in results for i in r.indices), results[0].steps,
                         np.concatenate([r.amp_kp for r in results]), np.concatenate([r.norm for r in results]),
                         total, weight)
    return merged, MomentumDistribution(total.shape[0], total.copy(), weight)


def _run_chunk_single_thread(args):
    cfg, indices = args
    return run_chunk(cfg, indices, workers=1)


def run_ensemble(cfg: ExperimentConfig, threads: int = 1, chunk_dir: Path | None = None,
                 on_chunk: Callable[[ChunkResult], None] | None = None) -> list[ChunkResult]:
    """Run every chunk of the config, reusing saved chunks from ``chunk_dir``.

    A chunk file is reused only when its stored config hash matches.
    """
    h = cfg.config_hash()
    plan = chunk_plan(cfg.realizations, cfg.batch)
    done: dict[int, ChunkResult] = {}
    todo = []
    for c, idx in enumerate(plan):
        path = chunk_dir / f"chunk_{c:05d}.npz" if chunk_dir is not None else None
        if path is not None and path.exists():
            res, stored = ChunkResult.load(path)
            if stored == h and res.indices == idx:
                done[c] = res
                continue
            log.warning("ignoring %s: written by a different config", path)
        todo.append(c)
    if done:
        log.info("resuming: %d of %d chunks already complete", len(done), len(plan))

    def finish(c, res):
        if chunk_dir is not None:
            res.save(chunk_dir / f"chunk_{c:05d}.npz", h)
        if on_chunk is not None:
            on_chunk(res)
        done[c] = res

    if threads > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for c, res in zip(todo, pool.map(_run_chunk_single_thread, [(cfg, plan[c]) for c in todo])):
                finish(c, res)
    else:
        for c in todo:
            finish(c, run_chunk(cfg, plan[c], workers=threads))
    return [done[c] for c in range(len(plan))]


def peak_series(cfg: ExperimentConfig, threads: int = 1, estimator: str = "intensity") -> tuple[np.ndarray, np.ndarray]:
    """Times and the ensemble peak weight at kp at every recorded step.

    ``intensity`` is n(t, kp) = <|psi_kp|^2>, the occupation of the lattice
    mode, which also counts mass scattered back into kp. ``coherent`` is
    |<psi_kp>|^2, the weight of the unscattered plane wave alone; in the
    continuum it is the weight of the delta peak at kp.
    """
    merged, _ = merge_chunks(run_ensemble(cfg, threads))
    return merged.steps * cfg.tau, peak_weight(merged.amp_kp, estimator)


def peak_weight(amp_kp: np.ndarray, estimator: str = "intensity") -> np.ndarray:
    """Ensemble peak weight from amplitudes of shape (realizations, times)."""
    if estimator == "intensity":
        return np.mean(np.abs(amp_kp) ** 2, axis=0)
    if estimator == "coherent":
        return np.abs(np.mean(amp_kp, axis=0)) ** 2
    raise ValueError(f"unknown estimator {estimator!r}")
