import numpy as np
import pytest

from disorderlab.core import make_grid
from disorderlab.propagator import (MOMENTUM, POSITION, EvolveConfig, StrangStepper, WaveField, evolve,
                                    init_plane_wave, strang_step, to_interaction_picture)
from disorderlab.randfield import PotentialField, normalize_spectrum, sample_potential


@pytest.fixture(scope="module")
def setup():
    g = make_grid(64)
    pot = sample_potential(g, normalize_spectrum(g, 12 / 16), seed=1)
    return g, pot


def test_plane_wave(setup):
    g, _ = setup
    f = init_plane_wave(g, (16, 0))
    dens = f.density()
    assert dens[g.index_of((16, 0))] == 1.0 and dens.sum() == 1.0
    assert f.norm() == 1.0


def test_plane_wave_off_lattice(setup):
    g, _ = setup
    with pytest.raises(IndexError):
        init_plane_wave(g, (40, 0))


def test_position_momentum_roundtrip(setup):
    g, _ = setup
    rng = np.random.default_rng(0)
    amps = rng.standard_normal((64, 64)) + 1j * rng.standard_normal((64, 64))
    f = WaveField(amps / np.sqrt(np.sum(np.abs(amps) ** 2)))
    pos = f.to_position()
    assert pos.representation == POSITION
    assert pos.norm() == pytest.approx(1.0, abs=1e-12)
    back = pos.to_momentum()
    assert back.representation == MOMENTUM
    assert np.allclose(back.amplitudes, f.amplitudes, atol=1e-14)


def test_plane_wave_in_position_space(setup):
    g, _ = setup
    psi = init_plane_wave(g, (5, -2)).to_position().amplitudes
    x = g.x_axis
    assert np.allclose(psi, np.exp(1j * (5 * x[:, None] - 2 * x[None, :])))


def test_free_step_is_pure_phase(setup):
    g, pot = setup
    rng = np.random.default_rng(1)
    amps = rng.standard_normal((64, 64)) + 1j * rng.standard_normal((64, 64))
    cfg = EvolveConfig(0.0, 1 / 256)
    out = strang_step(WaveField(amps), pot, cfg, g)
    assert np.allclose(out.amplitudes, amps * np.exp(-0.5j * cfg.tau * g.k2), atol=1e-12)
    assert out.time == cfg.tau


def test_constant_potential_is_global_phase(setup):
    g, _ = setup
    f = init_plane_wave(g, (3, 1))
    cfg = EvolveConfig(2.0, 0.01, n_steps=7)
    out = evolve(f, PotentialField(np.full((64, 64), 0.7), 0), cfg, grid=g)
    expected = np.exp(-1j * 7 * 0.01 * (0.5 * 10 + 2.0 * 0.7))
    assert out.amplitudes[g.index_of((3, 1))] == pytest.approx(expected, abs=1e-12)
    assert np.allclose(out.density(), f.density(), atol=1e-14)


def test_requires_momentum(setup):
    g, pot = setup
    with pytest.raises(ValueError):
        strang_step(init_plane_wave(g, (1, 0)).to_position(), pot, EvolveConfig(1.0, 0.1), g)


def test_one_step_norm_and_decay(setup):
    g, pot = setup
    kp = 16
    out = strang_step(init_plane_wave(g, (kp, 0)), pot, EvolveConfig.for_peak(kp**2 / 32, kp), g)
    assert out.norm() == pytest.approx(1.0, abs=1e-12)
    assert out.density()[g.index_of((kp, 0))] < 1.0


def test_zero_steps_is_identity(setup):
    g, pot = setup
    f = init_plane_wave(g, (2, 2))
    out = evolve(f, pot, EvolveConfig(1.0, 0.1, n_steps=0), grid=g)
    assert np.array_equal(out.amplitudes, f.amplitudes) and out.time == 0.0


def test_sink_cadence(setup):
    g, pot = setup
    calls = []
    evolve(init_plane_wave(g, (4, 0)), pot, EvolveConfig(1.0, 0.01, n_steps=50, record_every=10),
           sink=lambda step, t, dens: calls.append((step, t, dens.sum())), grid=g)
    assert [c[0] for c in calls] == [10, 20, 30, 40, 50]
    assert calls[-1][1] == pytest.approx(0.5)
    assert all(c[2] == pytest.approx(1.0) for c in calls)


def test_free_evolution_keeps_moduli(setup):
    g, pot = setup
    rng = np.random.default_rng(2)
    amps = rng.standard_normal((64, 64)) + 1j * rng.standard_normal((64, 64))
    out = evolve(WaveField(amps), pot, EvolveConfig(0.0, 0.003, n_steps=500), grid=g)
    assert np.allclose(np.abs(out.amplitudes), np.abs(amps), rtol=1e-12, atol=0)


def test_time_reversal(setup):
    g, pot = setup
    f = init_plane_wave(g, (16, 0))
    fwd = evolve(f, pot, EvolveConfig(8.0, 1 / 256, n_steps=200), grid=g)
    back = evolve(fwd, pot, EvolveConfig(8.0, -1 / 256, n_steps=200), grid=g)
    assert np.max(np.abs(back.amplitudes - f.amplitudes)) < 1e-10


def test_batched_realizations_match_single(setup):
    g, _ = setup
    spec = normalize_spectrum(g, 0.75)
    pots = [sample_potential(g, spec, 4, i) for i in range(3)]
    stack = PotentialField(np.stack([p.values for p in pots]), 4, (0, 1, 2))
    cfg = EvolveConfig(8.0, 1 / 256, n_steps=20)
    batched = evolve(init_plane_wave(g, (16, 0), batch=3), stack, cfg, grid=g)
    for r, p in enumerate(pots):
        single = evolve(init_plane_wave(g, (16, 0)), p, cfg, grid=g)
        assert np.allclose(batched.amplitudes[r], single.amplitudes, atol=1e-13)


def test_second_order_richardson():
    # smooth single-harmonic potential; error of one step of size h against a fine reference
    g = make_grid(32)
    x = g.x_axis
    pot = PotentialField(np.cos(x)[:, None] + 0.5 * np.sin(2 * x)[None, :], 0)
    rng = np.random.default_rng(3)
    amps = np.zeros((32, 32), complex)
    for k in [(0, 0), (1, 0), (0, 1), (-1, 1), (2, -1)]:
        amps[g.index_of(k)] = rng.standard_normal() + 1j * rng.standard_normal()
    f = WaveField(amps / np.sqrt(np.sum(np.abs(amps) ** 2)))

    def run(h, steps):
        return evolve(f, pot, EvolveConfig(1.0, h, n_steps=steps), grid=g).amplitudes

    t = 0.2
    ref = run(t / 4096, 4096)
    errs = [np.linalg.norm(run(t / n, n) - ref) for n in (8, 16, 32)]
    # global error is second order: halving the step divides the error by ~4
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(3.2 < r < 4.8 for r in ratios), ratios
    # local one-step error is third order: ratio ~8
    local = []
    for h in (0.02, 0.01):
        one = StrangStepper(g, pot, EvolveConfig(1.0, h)).step(f.amplitudes.copy())
        two_cfg = EvolveConfig(1.0, h / 2)
        st = StrangStepper(g, pot, two_cfg)
        two = st.step(st.step(f.amplitudes.copy()))
        local.append(np.linalg.norm(one - two))
    assert 8 * 0.8 < local[0] / local[1] < 8 * 1.2


def test_interaction_picture(setup):
    g, pot = setup
    f = evolve(init_plane_wave(g, (16, 0)), pot, EvolveConfig(8.0, 1 / 256, n_steps=5), grid=g)
    phi = to_interaction_picture(f, grid=g)
    assert np.allclose(np.abs(phi.amplitudes), np.abs(f.amplitudes), rtol=1e-13)
    assert np.array_equal(to_interaction_picture(f, t=0.0, grid=g).amplitudes, f.amplitudes)
    there = to_interaction_picture(f, t=0.3, grid=g)
    back = to_interaction_picture(there, t=-0.3, grid=g)
    assert np.allclose(back.amplitudes, f.amplitudes, atol=1e-13)


def test_interaction_picture_freezes_free_motion(setup):
    g, pot = setup
    rng = np.random.default_rng(5)
    amps = rng.standard_normal((64, 64)) + 1j * rng.standard_normal((64, 64))
    out = evolve(WaveField(amps), pot, EvolveConfig(0.0, 0.01, n_steps=30), grid=g)
    assert np.allclose(to_interaction_picture(out, grid=g).amplitudes, amps, atol=1e-11)


@pytest.mark.parametrize("kw", [dict(tau=0.0), dict(n_steps=-1), dict(record_every=0)])
def test_config_validation(kw):
    args = dict(epsilon=1.0, tau=0.1)
    args.update(kw)
    with pytest.raises(ValueError):
        EvolveConfig(**args)


def test_record_count_for_long_run():
    # 2e6 steps with output every 1e3 gives 2e3 records; checked on the cadence arithmetic
    cfg = EvolveConfig(1.0, 1.0, n_steps=2_000_000, record_every=1000)
    assert len(range(cfg.record_every, cfg.n_steps + 1, cfg.record_every)) == 2000
