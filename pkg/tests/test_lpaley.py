import numpy as np
import pytest

from anisohardy import lpaley as L
from anisohardy.dilation import build_dilation
from anisohardy.errors import LambdaTooSmall
from anisohardy.gridfn import make_grid
from anisohardy.kernels import moment_exponents


@pytest.fixture(scope="module")
def dil():
    return build_dilation(np.array([[2.0, 1.0], [0.0, 2.0]]))


@pytest.fixture(scope="module")
def pair(dil):
    return L.make_wavelet_pair(dil, 2)


@pytest.fixture(scope="module")
def grid():
    return make_grid((64, 64), half_width=4)


def probe(grid, freq=1.5):
    x = grid.points()
    r2 = np.sum(x * x, axis=-1)
    return grid.with_values(np.exp(-r2) * np.cos(2 * np.pi * freq * x[..., 0]))


def test_phi_moments_and_support(dil, pair):
    phi = pair.phi
    x = phi.points()
    for gam in moment_exponents(2, 2):
        mom = np.sum(phi.values * np.prod(x ** np.array(gam), axis=-1)) * phi.cell_volume
        assert abs(mom) <= 1e-10 * np.sum(np.abs(phi.values)) * phi.cell_volume
    outside = dil.normalized_norm_sq(x, 0) > 1
    assert np.all(phi.values[outside] == 0)
    assert pair.annulus_lower_bound > 0


def test_make_phi_rejects_bad_input(dil):
    with pytest.raises(ValueError):
        L.make_phi(dil, -1)
    with pytest.raises(ValueError):
        L.make_phi(dil, 1, sigma=1.5)


def test_constant_is_annihilated(dil, pair, grid):
    f = grid.with_values(np.ones(grid.dims))
    out = L.dilate_convolve(f, pair, -1, dil).values
    assert np.max(np.abs(out[24:40, 24:40])) <= 1e-8


def test_zero_input(dil, pair, grid):
    f = grid.with_values(np.zeros(grid.dims))
    for op in (L.lusin_area, L.g_function):
        assert np.all(op(f, pair, (-2, 1), dil).values == 0)
    assert np.all(L.g_lambda_star(f, pair, 3.0, (-2, 1), dil).values == 0)
    assert np.all(L.peetre_maximal(f, pair, 0, 2.0, dil).values == 0)
    assert L.calderon_reconstruct(f, pair, (-4, 4), dil)[1] == 0.0


def test_g_function_parseval(dil, pair, grid):
    f = probe(grid)
    g = L.g_function(f, pair, (-3, 1), dil)
    resp = L.level_responses(f, pair, (-3, 1), dil)
    assert np.sum(g.values ** 2) == pytest.approx(sum(np.sum(r ** 2) for r in resp.values()), rel=1e-12)


def test_lusin_area_l2_identity(dil, pair, grid):
    # count-normalised ball averages preserve sums away from the edges
    f = probe(grid)
    s = L.lusin_area(f, pair, (-3, 0), dil)
    resp = L.level_responses(f, pair, (-3, 0), dil)
    total = sum(np.sum(r ** 2) for r in resp.values())
    assert np.sum(s.values ** 2) == pytest.approx(total, rel=1e-6)


def test_g_lambda_monotone_and_guard(dil, pair, grid):
    f = probe(grid)
    a = L.g_lambda_star(f, pair, 2.5, (-3, 0), dil).values
    b = L.g_lambda_star(f, pair, 6.0, (-3, 0), dil).values
    assert np.all(b <= a + 1e-12)
    with pytest.raises(LambdaTooSmall):
        L.g_lambda_star(f, pair, 2.0, (-3, 0), dil)
    with pytest.raises(LambdaTooSmall):
        L.g_lambda_star(f, pair, 3.0, (-3, 0), dil, r_plus=0.5)


def test_peetre_large_t_is_local(dil, pair, grid):
    f = probe(grid)
    local = np.abs(L.dilate_convolve(f, pair, -1, dil).values)
    big = L.peetre_maximal(f, pair, 1, 50.0, dil).values
    assert np.max(np.abs(big - local)) <= 1e-6 * max(local.max(), 1.0)
    small = L.peetre_maximal(f, pair, 1, 1.0, dil).values
    assert np.all(small >= local - 1e-15)


def test_reconstruction_improves_with_range(dil, pair, grid):
    f = probe(grid)
    errs = [L.calderon_reconstruct(f, pair, (-J, J), dil)[1] for J in (2, 4, 8)]
    assert errs[0] >= errs[1] - 1e-12 >= errs[2] - 2e-12
    assert errs[-1] <= 1e-2


def test_partition_identity(pair):
    assert L.partition_residual(pair, J=8) <= 1e-10


def test_one_dimensional_pair():
    d = build_dilation(np.array([[3.0]]))
    pair = L.make_wavelet_pair(d, 1)
    g = make_grid((256,), half_width=8)
    x = g.points()[..., 0]
    # odd probe: no mass at the zero frequency, which no finite range covers
    f = g.with_values(x * np.exp(-x ** 2))
    assert L.calderon_reconstruct(f, pair, (-8, 8), d)[1] <= 1e-2
