"""Command-line front end: ``disorderlab simulate | kinetic | predict | compare``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(NaN or loss of norm), 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig
from .core import Grid
from .ensemble import NumericalError, merge_chunks, peak_weight, run_ensemble
from .kinetic import GaussianRingKernel, RingState, angular_mode, peak_memory_run, ring_evolve, ring_grid
from .observables import (RadialProfile, eval_points_around, fit_prefactor, peak_decay_fit, radial_profile,
                          read_config_hash, read_timeseries, write_timeseries)
from .randfield import normalize_spectrum
from .theory import TheoryParams, collision_rate, prediction_table

log = logging.getLogger("disorderlab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

PREDICTION_COLUMNS = ["epsilon", "zeta", "kp", "k", "n_bar", "n_bar_full", "t_c", "t_c_approx", "t_d",
                      "t_d_approx", "D", "D_approx", "log_xi_loc", "log_xi_loc_approx"]


# --- run directories -----------------------------------------------------------------

def _prepare_run_dir(cfg: ExperimentConfig, kind: str) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.json"
    if manifest.exists():
        old = json.loads(manifest.read_text())
        if old.get("config_hash") != cfg.config_hash():
            raise ConfigError("output_dir", f"{out} holds a run with a different config hash; choose another --out")
    cfg.save(out / "config.txt")
    _write_manifest(out, cfg, kind, completed=False)
    return out


def _write_manifest(out: Path, cfg: ExperimentConfig, kind: str, completed: bool, **extra) -> None:
    manifest = {"kind": kind, "config_hash": cfg.config_hash(), "code_version": __version__,
                "config": asdict(cfg), "completed": completed, **extra}
    tmp = out / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    tmp.replace(out / "manifest.json")


def load_run(run_dir) -> tuple[ExperimentConfig, dict]:
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    cfg = ExperimentConfig.load(run_dir / "config.txt")
    if cfg.config_hash() != manifest["config_hash"]:
        raise ConfigError("config_hash", f"{run_dir}: config.txt does not match the manifest")
    return cfg, manifest


def profile_window(cfg: ExperimentConfig) -> tuple[float, float]:
    """k range of the recorded radial profile: about twelve decay lengths eps/kp each side."""
    span = max(3.0, 12.0 * cfg.epsilon / cfg.kp)
    grid = Grid(cfg.grid_n)
    return max(0.5, cfg.kp - span), min(float(grid.kmax), cfg.kp + span)


# --- verbs ---------------------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig, threads: int = 1) -> Path:
    out = _prepare_run_dir(cfg, "simulate")
    h = cfg.config_hash()
    chunk_dir = out / "chunks"
    chunk_dir.mkdir(exist_ok=True)
    results = run_ensemble(cfg, threads=threads, chunk_dir=chunk_dir)
    merged, dist = merge_chunks(results)
    dist.save(out / "distribution.npz", config_hash=h)
    times = merged.steps * cfg.tau
    write_timeseries(out / "timeseries.ndjson",
                     ({"t": t, "n_kp": n, "norm": m, "n_kp_coherent": c}
                      for t, n, m, c in zip(times, peak_weight(merged.amp_kp), merged.norm.mean(axis=0),
                                            peak_weight(merged.amp_kp, "coherent"))),
                     config_hash=h)
    k_lo, k_hi = profile_window(cfg)
    x = eval_points_around(cfg.kp, k_lo, k_hi)
    radial_profile(dist, x).to_csv(out / "radial_profile.csv", config_hash=h)
    _write_manifest(out, cfg, "simulate", completed=True, chunks=len(results),
                    outputs=["distribution.npz", "timeseries.ndjson", "radial_profile.csv"])
    return out


def cmd_kinetic(cfg: ExperimentConfig, solver: str | None = None) -> Path:
    if solver is not None:
        cfg = cfg.with_overrides(solver=solver)
    out = _prepare_run_dir(cfg, "kinetic")
    h = cfg.config_hash()
    t_end = cfg.n_steps * cfg.tau
    if cfg.solver == "memory":
        grid = Grid(cfg.grid_n)
        run = peak_memory_run(grid, normalize_spectrum(grid, cfg.zeta), cfg.epsilon, (cfg.kp, 0), t_end)
        n_kp = run.mode_series((cfg.kp, 0))
        mass = run.densities.sum(axis=1)
        if not np.all(np.isfinite(run.densities)):
            raise NumericalError("memory equation produced non-finite densities")
        write_timeseries(out / "timeseries.ndjson",
                         ({"t": t, "n_kp": n, "norm": m} for t, n, m in zip(run.times, n_kp, mass)), config_hash=h)
        np.savez(out / "modes.npz", modes=run.kernel.modes, times=run.times, densities=run.densities,
                 config_hash=h)
        outputs = ["timeseries.ndjson", "modes.npz"]
    else:
        theta = ring_grid(cfg.ring_points)
        dens = np.zeros_like(theta)
        dens[0] = 1.0 / (theta[1] - theta[0])
        state = RingState(float(cfg.kp), theta, dens, 0.0)
        n_rec = max(1, cfg.n_steps // cfg.record_every)
        states = ring_evolve(state, GaussianRingKernel(cfg.kp, cfg.zeta), cfg.epsilon,
                             cfg.record_every * cfg.tau, n_rec)
        with open(out / "ring_modes.ndjson", "w") as fh:
            fh.write(json.dumps({"schema": "ring_modes/1", "config_hash": h}) + "\n")
            for s in states:
                if not np.all(np.isfinite(s.density)):
                    raise NumericalError("ring solver produced non-finite densities")
                fh.write(json.dumps({"t": float(s.time), "mass": float(s.mass),
                                     "n_m": [float(np.real(angular_mode(s, m))) for m in range(5)]}) + "\n")
        np.savez(out / "ring.npz", theta=theta, times=np.array([s.time for s in states]),
                 densities=np.array([s.density for s in states]), config_hash=h)
        outputs = ["ring_modes.ndjson", "ring.npz"]
    _write_manifest(out, cfg, "kinetic", completed=True, outputs=outputs)
    return out


def cmd_predict(epsilon: float, zeta: float, kp: float, k_min: float, k_max: float, n_points: int,
                out: Path) -> Path:
    params = TheoryParams(epsilon, zeta, kp)
    if not 0 <= k_min < k_max:
        raise ConfigError("k-range", "need 0 <= k_min < k_max")
    if n_points < 2:
        raise ConfigError("k-points", "need at least 2 points")
    if k_min < kp < k_max:
        ks = eval_points_around(kp, k_min, k_max, n_points)
    else:
        ks = np.linspace(k_min, k_max, n_points)
    ks = ks[ks > 0]
    out.mkdir(parents=True, exist_ok=True)
    path = out / "predictions.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, PREDICTION_COLUMNS)
        w.writeheader()
        for row in prediction_table(params, ks):
            w.writerow({key: repr(float(row[key])) for key in PREDICTION_COLUMNS})
    return path


def _load_reference(path: Path) -> dict:
    if path.suffix.lower() != ".csv":
        raise ConfigError("reference", f"{path}: expected a prediction table or radial profile CSV")
    h = read_config_hash(path)
    if h is not None:
        prof = RadialProfile.from_csv(path)
        return {"kind": "profile", "path": str(path), "config_hash": h, "k": prof.eval_points, "n_bar": prof.values}
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"epsilon", "zeta", "kp", "k", "n_bar_full"} <= set(rows[0]):
        raise ConfigError("reference", f"{path} is neither a run profile nor a prediction table")
    table = {key: np.array([float(r[key]) for r in rows]) for key in rows[0]}
    return {"kind": "prediction", "path": str(path), **table}


def _profile_error(k_run, n_run, k_ref, n_ref) -> float:
    """Relative L1 distance between two profiles on the run's points inside the reference range."""
    inside = (k_run >= k_ref.min()) & (k_run <= k_ref.max())
    if inside.sum() < 2:
        raise ConfigError("reference", "reference k-range does not overlap the run profile")
    x = k_run[inside]
    a = n_run[inside]
    b = np.interp(x, k_ref, n_ref)
    w = np.gradient(x)
    return float(np.sum(w * np.abs(a - b)) / np.sum(w * np.abs(b)))


def cmd_compare(run_dirs, references, tolerance: float = 0.15, out: Path | None = None,
                estimator: str = "intensity") -> dict:
    """Decay-rate and profile comparison; ``estimator`` picks n_kp or n_kp_coherent for the rate fit."""
    key = {"intensity": "n_kp", "coherent": "n_kp_coherent"}.get(estimator)
    if key is None:
        raise ConfigError("estimator", "must be 'intensity' or 'coherent'")
    runs = []
    for d in run_dirs:
        cfg, manifest = load_run(d)
        for name in ("radial_profile.csv", "timeseries.ndjson"):
            path = Path(d) / name
            if path.exists() and read_config_hash(path) not in (None, cfg.config_hash()):
                raise ConfigError("config_hash", f"{path} was written by a different config")
        runs.append((Path(d), cfg))
    if len({(c.grid_n, c.kp, c.tau) for _, c in runs}) > 1:
        raise ConfigError("grid", "runs differ in grid_n, kp or tau and cannot be compared together")
    refs = [_load_reference(Path(p)) for p in references]
    for ref in refs:
        if ref["kind"] == "profile" and ref["config_hash"] not in {c.config_hash() for _, c in runs}:
            raise ConfigError("config_hash", f"{ref['path']} belongs to none of the given runs")

    rows = []
    for d, cfg in runs:
        h = cfg.config_hash()
        row = {"run": str(d), "config_hash": h, "epsilon": cfg.epsilon, "zeta": cfg.zeta, "kp": cfg.kp}
        ts = read_timeseries(d / "timeseries.ndjson")
        t = np.array([r["t"] for r in ts])
        if any(key not in r for r in ts):
            raise ConfigError("estimator", f"{d} has no {key} series")
        n = np.array([r[key] for r in ts])
        window = int(np.searchsorted(t, cfg.fit_steps * cfg.tau * (1 + 1e-9), side="right"))
        fit = peak_decay_fit(t, n, slice(0, window))
        theory = collision_rate(TheoryParams(cfg.epsilon, cfg.zeta, cfg.kp))
        row.update(rate_fit=fit.rate, rate_theory=theory.approx, rate_theory_exact=theory.exact,
                   rate_rel_error=abs(fit.rate / theory.approx - 1))
        profile_path = d / "radial_profile.csv"
        if profile_path.exists():
            prof = RadialProfile.from_csv(profile_path)
            for ref in refs:
                if ref["kind"] == "profile" and ref["config_hash"] == h:
                    row["profile_rel_error"] = _profile_error(prof.eval_points, prof.values, ref["k"], ref["n_bar"])
                    row["profile_reference"] = ref["path"]
                elif ref["kind"] == "prediction":
                    sel = (np.isclose(ref["epsilon"], cfg.epsilon, rtol=1e-9) & np.isclose(ref["zeta"], cfg.zeta, rtol=1e-9)
                           & np.isclose(ref["kp"], cfg.kp, rtol=1e-9))
                    if not sel.any():
                        continue
                    k_ref, n_ref = ref["k"][sel], ref["n_bar_full"][sel]
                    order = np.argsort(k_ref)
                    k_ref, n_ref = k_ref[order], n_ref[order]
                    # both profiles are compared as densities in k with unit mass on the window
                    n_ref = n_ref / np.sum(np.diff(k_ref) * n_ref[:-1])
                    row["profile_rel_error"] = _profile_error(prof.eval_points, prof.values, k_ref, n_ref)
                    row["profile_reference"] = ref["path"]
            if refs and "profile_rel_error" not in row:
                raise ConfigError("reference", f"no reference matches run {d} (epsilon={cfg.epsilon}, zeta={cfg.zeta})")
        row["pass"] = bool(row["rate_rel_error"] <= tolerance and row.get("profile_rel_error", 0.0) <= tolerance)
        rows.append(row)

    report = {"tolerance": tolerance, "estimator": estimator, "runs": rows}
    if len(runs) > 1:
        prefactor = fit_prefactor([r["rate_theory"] for r in rows], [r["rate_fit"] for r in rows])
        eps_vary = len({r["epsilon"] for r in rows}) > 1
        zeta_vary = len({r["zeta"] for r in rows}) > 1
        name = "C_epsilon" if eps_vary and not zeta_vary else "C_zeta" if zeta_vary and not eps_vary else "C"
        report["prefactor"] = {"name": name, "value": prefactor, "pass": abs(prefactor - 1) <= tolerance}
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
        cols = ["run", "config_hash", "epsilon", "zeta", "kp", "rate_fit", "rate_theory", "rate_rel_error",
                "profile_rel_error", "pass"]
        with open(out / "report.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, cols, extrasaction="ignore")
            w.writeheader()
            w.writerows(rows)
    return report


# --- argument handling -----------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="disorderlab", description="Waves in weak Gaussian random potentials.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    def run_flags(p):
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--realizations", type=int)
        p.add_argument("--out", type=Path, help="override output_dir")
        p.add_argument("--threads", type=int, default=1)

    run_flags(sub.add_parser("simulate", help="ensemble of wave simulations"))
    kin = sub.add_parser("kinetic", help="memory-equation or ring-equation run")
    run_flags(kin)
    kin.add_argument("--solver", choices=("memory", "ring"))

    pred = sub.add_parser("predict", help="table of closed-form predictions")
    pred.add_argument("--config", type=Path, help="take epsilon, zeta, kp from a config file")
    pred.add_argument("--epsilon", type=float)
    pred.add_argument("--zeta", type=float)
    pred.add_argument("--kp", type=float)
    pred.add_argument("--k-min", type=float)
    pred.add_argument("--k-max", type=float)
    pred.add_argument("--k-points", type=int, default=300)
    pred.add_argument("--out", type=Path, default=Path("."))

    cmp_ = sub.add_parser("compare", help="compare runs with predictions or recorded profiles")
    cmp_.add_argument("runs", nargs="+", type=Path)
    cmp_.add_argument("--reference", action="append", default=[], type=Path,
                      help="prediction CSV or radial_profile.csv (repeatable)")
    cmp_.add_argument("--tolerance", type=float, default=0.15)
    cmp_.add_argument("--out", type=Path)
    cmp_.add_argument("--estimator", choices=("intensity", "coherent"), default="intensity",
                      help="peak weight used for the decay fit")
    return parser


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    return cfg.with_overrides(master_seed=args.seed, realizations=args.realizations,
                              output_dir=str(args.out) if args.out is not None else None)


def _predict_args(args) -> tuple[float, float, float, float, float]:
    eps, zeta, kp = args.epsilon, args.zeta, args.kp
    if args.config is not None:
        cfg = ExperimentConfig.load(args.config)
        eps = cfg.epsilon if eps is None else eps
        zeta = cfg.zeta if zeta is None else zeta
        kp = cfg.kp if kp is None else kp
    for name, value in (("epsilon", eps), ("zeta", zeta), ("kp", kp)):
        if value is None:
            raise ConfigError(name, "required")
        if not math.isfinite(value) or value <= 0:
            raise ConfigError(name, f"must be positive, got {value!r}")
    span = max(3.0, 12.0 * eps / kp)
    k_min = args.k_min if args.k_min is not None else max(0.5, kp - span)
    k_max = args.k_max if args.k_max is not None else kp + span
    return eps, zeta, kp, k_min, k_max


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "simulate":
            print(cmd_simulate(_load_config(args), threads=args.threads))
        elif args.verb == "kinetic":
            print(cmd_kinetic(_load_config(args), solver=args.solver))
        elif args.verb == "predict":
            print(cmd_predict(*_predict_args(args), args.k_points, args.out))
        else:
            report = cmd_compare(args.runs, args.reference, args.tolerance, args.out, args.estimator)
            for row in report["runs"]:
                prof = row.get("profile_rel_error")
                prof_txt = "" if prof is None else f" profile_err={prof:.4f}"
                print(f"{'PASS' if row['pass'] else 'FAIL'} {row['run']} rate_fit={row['rate_fit']:.6g} "
                      f"rate_theory={row['rate_theory']:.6g} rate_err={row['rate_rel_error']:.4f}{prof_txt}")
            if "prefactor" in report:
                pf = report["prefactor"]
                print(f"{'PASS' if pf['pass'] else 'FAIL'} {pf['name']} = {pf['value']:.4f}")
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
