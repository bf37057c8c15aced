import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from disorderlab.core import Grid, kmag, make_grid


@pytest.mark.parametrize("n, lo, hi", [(8, -4, 3), (9, -4, 4), (256, -128, 127)])
def test_k_axis_bounds(n, lo, hi):
    g = make_grid(n)
    assert g.k_axis[0] == lo and g.k_axis[-1] == hi
    assert g.k_axis.size == n
    assert sorted(g.k_axis_fft) == list(g.k_axis)


def test_spacing_256():
    assert make_grid(256).spacing == pytest.approx(2 * np.pi / 256, rel=0, abs=1e-15)


@pytest.mark.parametrize("bad", [0, -3, 7, 4.0])
def test_rejects_small_or_bad_sizes(bad):
    with pytest.raises(ValueError):
        make_grid(bad)


@pytest.mark.parametrize("n, kvec, expected", [(8, (0, 0), 0.0), (16, (3, 4), 5.0), (8, (-4, 0), 4.0)])
def test_kmag(n, kvec, expected):
    assert kmag(make_grid(n), kvec) == expected


@pytest.mark.parametrize("kvec", [(4, 0), (0, -5), (100, 1)])
def test_kmag_out_of_range(kvec):
    with pytest.raises(IndexError):
        kmag(make_grid(8), kvec)


@given(st.integers(8, 40), st.data())
@settings(max_examples=60, deadline=None)
def test_index_roundtrip(n, data):
    g = make_grid(n)
    kx = data.draw(st.integers(g.kmin, g.kmax))
    ky = data.draw(st.integers(g.kmin, g.kmax))
    assert g.wavevector(g.index_of((kx, ky))) == (kx, ky)


def test_k_arrays_match_index_map():
    g = make_grid(12)
    for i in range(12):
        for j in range(12):
            kx, ky = g.wavevector((i, j))
            assert g.kx[i, j] == kx and g.ky[i, j] == ky
            assert g.k2[i, j] == kx * kx + ky * ky


@pytest.mark.parametrize("n", [8, 64, 256])
def test_transform_roundtrip_and_parseval(n):
    rng = np.random.default_rng(n)
    g = make_grid(n)
    f = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    fhat = g.forward(f)
    back = g.inverse(fhat)
    assert np.linalg.norm(back - f) / np.linalg.norm(f) < 1e-12
    lhs = np.sum(np.abs(f) ** 2)
    rhs = np.sum(np.abs(fhat) ** 2) / n**2
    assert abs(lhs - rhs) / lhs < 1e-12


def test_forward_kernel_sign():
    # f = exp(i k0.x) transforms to N^2 at k0 and zero elsewhere
    g = make_grid(16)
    k0 = (3, -2)
    x = g.x_axis
    f = np.exp(1j * (k0[0] * x[:, None] + k0[1] * x[None, :]))
    fhat = g.forward(f)
    i, j = g.index_of(k0)
    assert fhat[i, j] == pytest.approx(16**2)
    fhat[i, j] = 0
    assert np.abs(fhat).max() < 1e-9


def test_grid_is_hashable_and_value_equal():
    assert Grid(16) == Grid(16, workers=2)
    assert len({Grid(16), Grid(16)}) == 1
