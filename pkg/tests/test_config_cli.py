import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from disorderlab import cli
from disorderlab.config import ConfigError, ExperimentConfig
from disorderlab.ensemble import ChunkResult, chunk_plan, run_chunk, run_ensemble
from disorderlab.observables import RadialProfile, read_config_hash, read_timeseries

SMALL = dict(epsilon=4.0, zeta=0.75, kp=8, grid_n=32, n_steps=40, record_every=5, realizations=4, batch=2,
             master_seed=3, fit_steps=20)


def small_cfg(tmp_path, name="run", **kw):
    args = dict(SMALL, output_dir=str(tmp_path / name))
    args.update(kw)
    return ExperimentConfig(**args)


def write_cfg(tmp_path, cfg, name="cfg.txt"):
    path = tmp_path / name
    cfg.save(path)
    return path


# --- config ---------------------------------------------------------------

@given(eps=st.floats(0.0, 1e3, allow_nan=False), zeta=st.floats(1e-3, 10.0), kp=st.integers(1, 15),
       steps=st.integers(1, 10**6), seed=st.integers(0, 2**40), frac=st.floats(0.01, 1.0))
@settings(max_examples=60, deadline=None)
def test_text_roundtrip(eps, zeta, kp, steps, seed, frac):
    cfg = ExperimentConfig(epsilon=eps, zeta=zeta, kp=kp, grid_n=32, n_steps=steps, master_seed=seed,
                           averaging_fraction=frac)
    back = ExperimentConfig.from_text(cfg.to_text())
    assert back == cfg
    assert back.config_hash() == cfg.config_hash()


def test_defaults_and_comments():
    cfg = ExperimentConfig.from_text("""
# a small run
epsilon = 2.5   # eps
zeta = 0.5
kp = 8
grid_n = 32
n_steps = 10
""")
    assert cfg.tau == pytest.approx(1 / 64)
    assert cfg.averaging_fraction == 0.5 and cfg.fit_steps == 100 and cfg.solver == "memory"


@pytest.mark.parametrize("text, field", [
    ("epsilon = 1\nzeta = 1\nkp = 4\ngrid_n = 16\n", "n_steps"),
    ("epsilon = 1\nzeta = 1\nkp = 4\ngrid_n = 16\nn_steps = 5\nbogus = 3\n", "bogus"),
    ("epsilon = -1\nzeta = 1\nkp = 4\ngrid_n = 16\nn_steps = 5\n", "epsilon"),
    ("epsilon = 1\nzeta = 0\nkp = 4\ngrid_n = 16\nn_steps = 5\n", "zeta"),
    ("epsilon = 1\nzeta = 1\nkp = 40\ngrid_n = 16\nn_steps = 5\n", "kp"),
    ("epsilon = 1\nzeta = 1\nkp = 4\ngrid_n = 4\nn_steps = 5\n", "grid_n"),
    ("epsilon = 1\nzeta = 1\nkp = 4\ngrid_n = 16\nn_steps = 2.5\n", "n_steps"),
    ("epsilon = x\nzeta = 1\nkp = 4\ngrid_n = 16\nn_steps = 5\n", "epsilon"),
    ("epsilon = 1\nzeta = 1\nkp = 4\ngrid_n = 16\nn_steps = 5\nsolver = magic\n", "solver"),
    ("epsilon = 1\nzeta = 1\nkp = 4\ngrid_n = 16\nn_steps = 5\naveraging_fraction = 1.5\n", "averaging_fraction"),
])
def test_config_errors_name_field(text, field):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_text(text)
    assert info.value.field == field


def test_hash_ignores_output_dir_only():
    a = ExperimentConfig(**SMALL, output_dir="a")
    assert a.config_hash() == a.with_overrides(output_dir="b").config_hash()
    assert a.config_hash() != a.with_overrides(master_seed=4).config_hash()
    assert a.with_overrides(master_seed=None) == a


def test_from_relative():
    cfg = ExperimentConfig.from_relative(128, 32, 1 / 40, 12, n_steps=10)
    assert cfg.epsilon == pytest.approx(32**2 / 40) and cfg.zeta == pytest.approx(12 / 32)


# --- ensemble ---------------------------------------------------------------

def test_chunk_plan():
    assert chunk_plan(10, 4) == [(0, 1, 2, 3), (4, 5, 6, 7), (8, 9)]


def test_chunk_save_roundtrip(tmp_path):
    cfg = small_cfg(tmp_path)
    res = run_chunk(cfg, (0, 1))
    res.save(tmp_path / "c.npz", cfg.config_hash())
    back, h = ChunkResult.load(tmp_path / "c.npz")
    assert h == cfg.config_hash()
    assert np.array_equal(back.amp_kp, res.amp_kp) and np.array_equal(back.total, res.total)
    assert np.allclose(res.norm, 1.0, atol=1e-10)


def test_ensemble_independent_of_chunking(tmp_path):
    a = run_ensemble(small_cfg(tmp_path, batch=1))
    b = run_ensemble(small_cfg(tmp_path, batch=4))
    amp_a = np.concatenate([r.amp_kp for r in a])
    amp_b = np.concatenate([r.amp_kp for r in b])
    assert np.allclose(amp_a, amp_b, atol=1e-13)


# --- CLI ---------------------------------------------------------------

def test_simulate_outputs_and_determinism(tmp_path, capsys):
    cfg = small_cfg(tmp_path)
    path = write_cfg(tmp_path, cfg)
    assert cli.main(["simulate", "--config", str(path), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["simulate", "--config", str(path), "--out", str(tmp_path / "b")]) == 0
    for run in ("a", "b"):
        d = tmp_path / run
        manifest = json.loads((d / "manifest.json").read_text())
        assert manifest["completed"] and manifest["config_hash"] == cfg.config_hash()
        assert read_config_hash(d / "radial_profile.csv") == cfg.config_hash()
        assert read_config_hash(d / "timeseries.ndjson") == cfg.config_hash()
    ts_a = read_timeseries(tmp_path / "a" / "timeseries.ndjson")
    assert ts_a == read_timeseries(tmp_path / "b" / "timeseries.ndjson")
    assert len(ts_a) == 1 + cfg.n_steps // cfg.record_every
    assert ts_a[0]["t"] == 0.0 and ts_a[0]["n_kp"] == pytest.approx(1.0)
    assert all(abs(r["norm"] - 1) < 1e-10 for r in ts_a)
    prof = RadialProfile.from_csv(tmp_path / "a" / "radial_profile.csv")
    assert np.sum(np.diff(prof.eval_points) * prof.values[:-1]) == pytest.approx(1.0)


def test_simulate_resumes_from_chunks(tmp_path):
    cfg = small_cfg(tmp_path)
    out = cli.cmd_simulate(cfg)
    ref = (out / "timeseries.ndjson").read_text()
    chunks = sorted((out / "chunks").glob("*.npz"))
    assert len(chunks) == 2
    chunks[1].unlink()
    (out / "timeseries.ndjson").unlink()
    cli.cmd_simulate(cfg)
    assert (out / "timeseries.ndjson").read_text() == ref


def test_simulate_refuses_foreign_run_dir(tmp_path, capsys):
    cfg = small_cfg(tmp_path)
    cli.cmd_simulate(cfg)
    other = write_cfg(tmp_path, cfg.with_overrides(master_seed=99))
    assert cli.main(["simulate", "--config", str(other)]) == cli.EXIT_CONFIG
    assert "config hash" in capsys.readouterr().err


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.txt")]) == cli.EXIT_IO
    bad = tmp_path / "bad.txt"
    bad.write_text("epsilon = 1\n")
    assert cli.main(["kinetic", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert "zeta" in capsys.readouterr().err
    assert cli.main(["predict", "--epsilon", "-1", "--zeta", "1", "--kp", "4"]) == cli.EXIT_CONFIG
    assert "epsilon" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, monkeypatch, capsys):
    from disorderlab.ensemble import NumericalError

    def boom(*a, **k):
        raise NumericalError("norm drift")
    monkeypatch.setattr(cli, "run_ensemble", boom)
    path = write_cfg(tmp_path, small_cfg(tmp_path))
    assert cli.main(["simulate", "--config", str(path)]) == cli.EXIT_NUMERICAL


def test_kinetic_memory_and_ring(tmp_path):
    cfg = small_cfg(tmp_path, n_steps=20)
    out = cli.cmd_kinetic(cfg)
    ts = read_timeseries(out / "timeseries.ndjson")
    assert ts[0]["n_kp"] == 1.0 and ts[-1]["t"] == pytest.approx(20 * cfg.tau)
    assert all(abs(r["norm"] - 1) < 1e-12 for r in ts)
    ring = cli.cmd_kinetic(cfg.with_overrides(output_dir=str(tmp_path / "ring")), solver="ring")
    lines = [json.loads(x) for x in (ring / "ring_modes.ndjson").read_text().splitlines()]
    assert lines[0]["config_hash"] == cfg.with_overrides(solver="ring").config_hash()
    assert all(abs(r["mass"] - 1) < 1e-9 for r in lines[1:])


def test_predict_columns(tmp_path):
    path = cli.cmd_predict(2.0, 0.4, 30.0, 25.0, 35.0, 50, tmp_path)
    header = path.read_text().splitlines()[0].split(",")
    assert header == cli.PREDICTION_COLUMNS
    assert len(path.read_text().splitlines()) == 51


def test_compare_against_own_profile_is_zero(tmp_path, capsys):
    cfg = small_cfg(tmp_path)
    out = cli.cmd_simulate(cfg)
    rep = cli.cmd_compare([out], [out / "radial_profile.csv"], tolerance=10.0, out=tmp_path / "cmp")
    assert rep["runs"][0]["profile_rel_error"] == 0.0
    assert (tmp_path / "cmp" / "report.json").exists() and (tmp_path / "cmp" / "report.csv").exists()
    rc = cli.main(["compare", str(out), "--reference", str(out / "radial_profile.csv"), "--tolerance", "10"])
    assert rc == 0 and capsys.readouterr().out.startswith("PASS")


def test_compare_rejects_foreign_profile(tmp_path):
    a = cli.cmd_simulate(small_cfg(tmp_path, "a"))
    b = cli.cmd_simulate(small_cfg(tmp_path, "b", master_seed=7))
    with pytest.raises(ConfigError, match="none of the given runs"):
        cli.cmd_compare([a], [b / "radial_profile.csv"])


def test_compare_rejects_mixed_grids(tmp_path):
    a = cli.cmd_simulate(small_cfg(tmp_path, "a"))
    b = cli.cmd_simulate(small_cfg(tmp_path, "b", kp=6))
    with pytest.raises(ConfigError):
        cli.cmd_compare([a, b], [])


def test_compare_prefactor_over_scan(tmp_path):
    runs = [cli.cmd_simulate(small_cfg(tmp_path, f"e{i}", epsilon=e)) for i, e in enumerate((3.0, 4.0))]
    rep = cli.cmd_compare(runs, [], estimator="coherent")
    assert rep["prefactor"]["name"] == "C_epsilon"
    assert np.isfinite(rep["prefactor"]["value"])
