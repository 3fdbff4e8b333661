import numpy as np
import pytest

from anisohardy import campanato as C
from anisohardy import spaces as S
from anisohardy.dilation import DilatedBall, build_dilation
from anisohardy.errors import DegenerateFamily, ExponentTooSmall, RankDeficient, ZeroAverage
from anisohardy.gridfn import GridFunction, TestFamily, make_grid, synthesize


@pytest.fixture(scope="module")
def dil():
    return build_dilation(np.array([[2.0, 1.0], [0.0, 2.0]]))


@pytest.fixture(scope="module")
def grid():
    return make_grid((96, 96), half_width=4)


@pytest.fixture(scope="module")
def osc(grid):
    return synthesize(TestFamily("oscillatory", seed=4), grid)[0]


@pytest.fixture(scope="module")
def families(dil, grid):
    return C.sample_families(dil, grid, S.Lebesgue(2), levels=range(0, 3), seed=1)


def global_poly(grid, rng, degree):
    x = grid.points()
    from anisohardy.kernels import moment_exponents, monomials

    exps = moment_exponents(2, degree)
    coef = rng.normal(size=len(exps))
    vals = monomials(x.reshape(-1, 2), exps) @ coef
    return grid.with_values(vals.reshape(grid.dims)), coef


@pytest.mark.parametrize("degree", [0, 1, 2, 3])
def test_projection_properties(dil, grid, osc, degree):
    rng = np.random.default_rng(degree)
    poly, coef = global_poly(grid, rng, degree)
    for level in (0, 1, 2):
        ball = DilatedBall(tuple(rng.uniform(-1, 1, 2)), level)
        P = C.minimizing_polynomial(poly, ball, degree, dil)
        assert np.allclose(P.to_global(), coef, atol=1e-10)
        Pf = C.minimizing_polynomial(osc, ball, degree, dil)
        assert C.orthogonality_residual(osc, ball, Pf, dil) <= 1e-8
        # idempotence
        again = C.minimizing_polynomial(grid.with_values(Pf(grid.points())), ball, degree, dil)
        assert np.max(np.abs(again.coeffs - Pf.coeffs)) <= 1e-10 * max(1, np.max(np.abs(Pf.coeffs)))


def test_degree_zero_is_mean(dil, osc):
    ball = DilatedBall((0.3, -0.2), 1)
    idx, _ = C.ball_samples(osc, ball, dil)
    P = C.minimizing_polynomial(osc, ball, 0, dil)
    assert P.coeffs[0] == pytest.approx(np.mean(osc.values[idx]))


def test_rank_deficient(dil, grid, osc):
    with pytest.raises(RankDeficient):
        C.minimizing_polynomial(osc, DilatedBall((0.0, 0.0), -6), 2, dil)


def test_sup_bound(dil, grid, osc):
    ball = DilatedBall((0.0, 0.0), 1)
    c = grid.with_values(np.full(grid.dims, 2.0))
    assert C.sup_bound_constant(c, ball, 2, dil) == pytest.approx(1.0)
    # checkerboard has (nearly) zero projection
    idx = np.indices(grid.dims).sum(axis=0) % 2
    chk = grid.with_values(2.0 * idx - 1.0)
    assert C.sup_bound_constant(chk, ball, 0, dil) < 0.05
    with pytest.raises(ZeroAverage):
        C.sup_bound_constant(grid.with_values(np.zeros(grid.dims)), ball, 1, dil)
    assert C.sup_bound_constant(osc, ball, 2, dil) < 50


@pytest.mark.parametrize("X", [S.Lebesgue(2), S.Lorentz(2, 1)])
def test_polynomials_have_zero_norm(dil, grid, families, X):
    poly, _ = global_poly(grid, np.random.default_rng(9), 2)
    scale = C.family_scale(poly, X, families, dil, 0.5)
    assert C.campanato_norm(poly, X, 2, 2, 0.5, families, dil) <= 1e-8 * scale
    balls = [b for fam in families for b in fam.balls]
    assert C.simple_campanato_norm(poly, X, 2, 2, balls, dil) <= 1e-8 * scale
    phi = 1.1 * C.min_kernel_exponent(dil, X.theta0, 2)
    assert C.kernel_campanato_norm(poly, X, 2, X.theta0, phi, families, dil) <= 1e-8 * scale


def test_single_ball_family_matches_simple(dil, grid, osc):
    X = S.Lorentz(2, 1)
    ball = DilatedBall((0.2, 0.1), 1)
    lam = S.indicator_norm(X, ball, grid, dil)
    fam = C.BallFamily((((0.2, 0.1), 1, lam),))
    a = C.campanato_norm(osc, X, 2, 1, 0.5, [fam], dil)
    b = C.simple_campanato_norm(osc, X, 2, 1, [ball], dil)
    assert a == pytest.approx(b, rel=1e-12)
    # the normalization cancels: any positive weight gives the same value
    fam2 = C.BallFamily((((0.2, 0.1), 1, 7.0),))
    assert C.campanato_norm(osc, X, 2, 1, 0.5, [fam2], dil) == pytest.approx(b, rel=1e-12)


def test_halfspace_mean_deviation(dil):
    d1 = build_dilation(np.array([[2.0]]))
    g = make_grid((512,), half_width=4)
    x = g.points()[..., 0]
    h = g.with_values((x >= -1e-12).astype(float))
    ball = DilatedBall((0.0,), 1)
    val = C.simple_campanato_norm(h, S.Lebesgue(1), 1, 0, [ball], d1)
    assert val == pytest.approx(0.5, abs=0.01)


def test_monotone_in_family_pool(dil, osc, families):
    X = S.Lebesgue(2)
    vals = [C.campanato_norm(osc, X, 2, 1, 0.5, families[:m], dil) for m in range(1, len(families) + 1)]
    assert np.all(np.diff(vals) >= 0)


def test_prefix_convergence(dil, osc, families):
    X = S.Lebesgue(2)
    big = families[-1]
    prefixes = [C.campanato_norm(osc, X, 2, 1, 0.5, [big.prefix(m)], dil) for m in range(1, len(big) + 1)]
    full = C.campanato_norm(osc, X, 2, 1, 0.5, [big], dil)
    assert prefixes[-1] == pytest.approx(full, rel=1e-8)


def test_q_monotone(dil, osc, families):
    X = S.Lebesgue(2)
    for fam in families[:6]:
        v = [C.campanato_norm(osc, X, q, 1, 0.5, [fam], dil) for q in (1, 2, 4)]
        assert v[0] <= v[1] * (1 + 1e-12) and v[1] <= v[2] * (1 + 1e-12)


def test_shift_covariance(dil):
    g = make_grid((96, 96), half_width=4)
    x = g.points()
    f = g.with_values(np.sin(3 * x[..., 0]) * np.cos(2 * x[..., 1]))
    v = np.array([g.spacing[0] * 5, -g.spacing[1] * 3])
    fs = g.with_values(np.sin(3 * (x[..., 0] - v[0])) * np.cos(2 * (x[..., 1] - v[1])))
    fam = C.BallFamily((((0.1, 0.2), 1, 1.0), ((-0.5, 0.3), 0, 2.0)))
    X = S.Lebesgue(2)
    a = C.campanato_norm(f, X, 2, 1, 0.5, [fam], dil)
    b = C.campanato_norm(fs, X, 2, 1, 0.5, [fam.shifted(v)], dil)
    assert a == pytest.approx(b, rel=1e-8)


def test_errors(dil, osc):
    X = S.Lebesgue(2)
    zero = C.BallFamily((((0.0, 0.0), 1, 0.0),))
    with pytest.raises(DegenerateFamily):
        C.campanato_norm(osc, X, 2, 1, 0.5, [zero], dil)
    with pytest.raises(ExponentTooSmall):
        C.kernel_campanato_norm(osc, X, 1, X.theta0, 1.0, [], dil)
    with pytest.raises(ValueError):
        C.BallFamily((((0.0, 0.0), 1, -1.0),))


def test_kernel_dominates_interior(dil, grid, osc):
    X = S.Lebesgue(2)
    ball = DilatedBall((0.0, 0.0), 1)
    fam = C.BallFamily((((0.0, 0.0), 1, 1.0),))
    phi = 1.1 * C.min_kernel_exponent(dil, X.theta0, 1)
    kern, tail = C.kernel_campanato_norm(osc, X, 1, X.theta0, phi, [fam], dil, return_tail=True)
    inner = C.campanato_norm(osc, X, 1, 1, X.theta0, [fam], dil)
    # on the ball the kernel is at least half of b^{-l}
    assert kern >= 0.5 * inner
    assert np.isfinite(tail) and tail >= 0


def test_family_round_trip():
    fam = C.BallFamily((((0.0, 1.0), 2, 0.5),))
    assert C.BallFamily.from_list(fam.to_list()) == fam


def test_pairing_annihilates_polynomials(dil, grid):
    from anisohardy.atoms import make_atom

    X = S.Lebesgue(2)
    a = make_atom(DilatedBall((0.0, 0.0), 2), 4, 2, X, seed=1, grid=grid, dil=dil)
    poly, _ = global_poly(grid, np.random.default_rng(3), 2)
    assert abs(C.duality_pairing(a.values, poly)) <= 1e-8 * np.sum(np.abs(a.values.values)) * grid.cell_volume
    assert C.conjugate(4) == pytest.approx(4 / 3)
