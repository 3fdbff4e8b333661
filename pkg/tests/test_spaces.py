import math

import numpy as np
import pytest

from anisohardy.dilation import DilatedBall, build_dilation
from anisohardy.errors import NonConvergentBisection, NonPositiveWeight, UnsupportedSpace
from anisohardy.gridfn import GridFunction, TestFamily, indicator, make_grid, synthesize
from anisohardy import spaces as S


@pytest.fixture(scope="module")
def d2():
    return build_dilation(2 * np.eye(2))


@pytest.fixture(scope="module")
def grid():
    return make_grid((96, 96), half_width=4)


@pytest.fixture(scope="module")
def probes(grid):
    out = []
    for name in ("bump", "oscillatory", "piecewise"):
        out += synthesize(TestFamily(name, seed=3, count=2), grid)
    return out


def lp(f, p):
    return float((np.sum(np.abs(f.values) ** p) * f.cell_volume) ** (1 / p))


@pytest.mark.parametrize("p", [0.5, 1.0, 2.0, 3.5])
def test_oracles_match_lebesgue(probes, p):
    for f in probes:
        ref = lp(f, p)
        const = f.with_values(np.full(f.dims, p))
        for X in (S.Orlicz(S.power_orlicz(p)), S.Variable(const), S.Lorentz(p, p), S.Mixed((p, p))):
            assert abs(S.eval_norm(f, X) - ref) <= 1e-8 * ref


def test_morrey_pp_is_lebesgue(probes, d2):
    for f in probes[:3]:
        assert S.eval_norm(f, S.Morrey(2, 2, d2)) == pytest.approx(lp(f, 2), rel=1e-10)


@pytest.mark.parametrize("p,q", [(2, 1), (1.5, 4), (3, math.inf)])
def test_lorentz_indicator(p, q):
    vals = np.zeros(1000)
    vals[100:337] = 1.0
    f = GridFunction(vals, (0.01,))
    measure = 237 * 0.01
    assert abs(S.eval_norm(f, S.Lorentz(p, q)) - measure ** (1 / p)) <= 1e-6 * measure ** (1 / p)


def test_mixed_order_of_integration():
    # x1 (axis 0) is integrated first
    v = np.array([[1.0, 0.0], [1.0, 2.0]])
    f = GridFunction(v, (1.0, 1.0))
    inner = np.array([(1 + 1) ** 0.5, (0 + 2 ** 2) ** 0.5])
    ref = np.sum(inner ** 1)
    assert S.eval_norm(f, S.Mixed((2, 1))) == pytest.approx(ref)


@pytest.mark.parametrize("make", [
    lambda d: S.Lebesgue(1.5),
    lambda d: S.Lorentz(2, 1),
    lambda d: S.Morrey(2, 1, d),
    lambda d: S.Orlicz(S.log_orlicz(1.5)),
    lambda d: S.OrliczSlice(2, S.power_orlicz(1.5), 0, d),
    lambda d: S.Mixed((1, 3)),
    lambda d: S.Convexified(S.Lorentz(2, 1), 0.5),
])
def test_homogeneity_zero_and_lattice(make, d2, probes):
    X = make(d2)
    for f in probes[:3]:
        nf = S.eval_norm(f, X)
        assert nf > 0
        assert S.eval_norm(f * -3.0, X) == pytest.approx(3.0 * nf, rel=1e-10)
        smaller = f.with_values(np.abs(f.values) * 0.7 * (f.values > 0))
        assert S.eval_norm(smaller, X) <= nf * (1 + 1e-10)
    zero = probes[0].with_values(np.zeros(probes[0].dims))
    assert S.eval_norm(zero, X) == 0.0


def test_quasi_triangle_stable(probes, d2):
    X = S.Lorentz(2, 1)
    ratios = []
    for f in probes:
        for g in probes:
            ratios.append(S.eval_norm(f + g, X) / (S.eval_norm(f, X) + S.eval_norm(g, X)))
    assert max(ratios) < 2.0


def test_rearrangement(grid):
    f = synthesize(TestFamily("piecewise", seed=2), grid)[0]
    r = S.rearrangement(f)
    assert np.all(np.diff(r.heights) <= 0)
    assert np.sum(r.heights ** 3 * np.diff(r.t)) == pytest.approx(lp(f, 3) ** 3)
    ind = GridFunction(np.r_[np.zeros(5), np.ones(7), np.zeros(4)], (0.5,))
    ri = S.rearrangement(ind)
    assert np.allclose(ri(np.array([0.0, 3.4, 3.5, 5.0])), [1, 1, 0, 0])
    # distribution identity |{|f| > f*(t)}| <= t
    for t in (0.3, 1.0, 2.2):
        level = ri(np.array([t]))[0]
        assert np.sum(ind.values > level) * 0.5 <= t
    const = GridFunction(np.full(9, 2.0), (1.0,))
    assert np.all(S.rearrangement(const).heights == 2.0)


def test_luxemburg_bracket_failure():
    with pytest.raises(NonConvergentBisection):
        S.luxemburg_norm(lambda lam: 2.0, 1.0)


def test_unsupported_space(probes):
    with pytest.raises(UnsupportedSpace):
        S.eval_norm(probes[0], object())


def test_invalid_parameters(d2):
    with pytest.raises(ValueError):
        S.Morrey(1, 2, d2)
    with pytest.raises(ValueError):
        S.Lebesgue(-1)
    with pytest.raises(ValueError):
        S.Variable(GridFunction(np.array([1.0, 0.0]), (1.0,)))


def test_convexify_rules(probes, d2):
    f = probes[1]
    assert isinstance(S.convexify(S.Lebesgue(2), 1.5), S.Lebesgue)
    assert S.convexify(S.Lebesgue(2), 1.5).p == 3
    X = S.Orlicz(S.log_orlicz(1.2))
    assert S.convexify(X, 1) is X
    for s in (0.5, 2.0):
        Xs = S.convexify(X, s)
        ref = S.eval_norm(f.with_values(np.abs(f.values) ** s), X) ** (1 / s)
        assert S.eval_norm(f, Xs) == pytest.approx(ref, rel=1e-10)
    twice = S.convexify(S.convexify(X, 2.0), 1.5)
    assert S.eval_norm(f, twice) == pytest.approx(S.eval_norm(f, S.convexify(X, 3.0)), rel=1e-10)
    M = S.Morrey(2, 1, d2)
    ref = S.eval_norm(f.with_values(np.abs(f.values) ** 2), M) ** 0.5
    assert S.eval_norm(f, S.convexify(M, 2)) == pytest.approx(ref, rel=1e-10)


def test_indicator_norms(grid, d2):
    ball = DilatedBall((0.0, 0.0), 2)
    ind = indicator(grid, d2, ball)
    measure = ind.values.sum() * grid.cell_volume
    assert S.indicator_norm(S.Lebesgue(2), ball, grid, d2) == pytest.approx(measure ** 0.5)
    assert S.indicator_norm(S.Lorentz(3, 1), ball, grid, d2) == pytest.approx(measure ** (1 / 3), rel=1e-12)
    # discrete measure is close to b^k
    assert measure == pytest.approx(4.0 ** 2, rel=0.05)
    w = grid.with_values(1.0 + grid.points()[..., 0] ** 2)
    wE = np.sum(w.values * ind.values) * grid.cell_volume
    assert S.indicator_norm(S.Weighted(2, w), ball, grid, d2) == pytest.approx(wE ** 0.5)
    X = S.Lebesgue(2)
    assert S.indicator_norm(X, ball, grid, d2) is S.indicator_norm(X, ball, grid, d2)


def test_morrey_indicator_is_attained_at_ball(grid, d2):
    X = S.Morrey(2, 1, d2)
    for k in (0, 1, 2):
        ball = DilatedBall((0.0, 0.0), k)
        val = S.indicator_norm(X, ball, grid, d2)
        measure = indicator(grid, d2, ball).values.sum() * grid.cell_volume
        assert val == pytest.approx(measure ** 0.5, rel=0.15)


def test_muckenhoupt():
    d = build_dilation(np.array([[2.0]]))
    g = GridFunction(np.zeros(400), (0.02,), (-3.99,))
    balls = [DilatedBall((c,), k) for c in np.linspace(-3, 3, 13) for k in range(-2, 3)]
    assert S.muckenhoupt_constant(g.with_values(np.ones(400)), 2, d, balls) == pytest.approx(1.0)
    assert S.muckenhoupt_constant(g.with_values(np.ones(400)), 1, d, balls) == pytest.approx(1.0)
    pts = g.points()[..., 0]
    w = g.with_values(np.abs(pts) ** 0.3)
    val = S.muckenhoupt_constant(w, 2, d, balls)
    assert 1.0 <= val < 10.0
    alt = g.with_values((np.arange(400) % 2).astype(float))
    with pytest.raises(NonPositiveWeight):
        S.muckenhoupt_constant(alt, 2, d, balls)


def test_axioms(probes, grid, d2):
    balls = [DilatedBall((0.0, 0.0), k) for k in range(-1, 3)]
    rep = S.check_bqbfs_axioms(S.Lebesgue(2), probes[:2], d2, balls)
    assert rep.passed, rep.violations
    rep = S.check_bqbfs_axioms(S.Morrey(2, 1, d2), probes[:2], d2, balls)
    assert rep.passed, rep.violations


def test_orlicz_types():
    lo, hi = S.check_orlicz_types(S.log_orlicz(1.5))
    assert lo <= 1 + 1e-12 and hi <= 1 + 1e-12
    lo, hi = S.check_orlicz_types(S.power_orlicz(2))
    assert lo == pytest.approx(1) and hi == pytest.approx(1)


def test_exponents(d2, grid):
    assert S.Lebesgue(2).theta0 < 1
    assert S.Morrey(3, 1.5, d2).p_minus == 1.5
    for X in (S.Lebesgue(0.7), S.Lorentz(2, 1), S.Orlicz(S.log_orlicz(1)), S.Mixed((1, 2))):
        assert X.theta0 < min(X.p_minus, 1)
        assert X.p0 > X.theta0
    # 2I in the plane: d = floor((1/0.8 - 1) * ln 4 / ln 2) = 0
    assert S.moment_degree(S.Lebesgue(2), d2) == 0
    assert S.grand_order(S.Lebesgue(2), d2) == 2
    assert S.moment_degree(S.Lebesgue(0.5), d2) == 3


def test_morrey_witness():
    f, sets, X = S.morrey_witness(top=12)
    m0 = S.eval_norm(f, X)
    l0 = S.eval_norm(f, S.Lebesgue(2))
    for a, b in zip(sets[:-1], sets[1:]):
        assert np.all(a >= b)
    last = f.with_values(f.values * sets[-1])
    assert S.eval_norm(last, X) >= 0.5 * m0
    assert S.eval_norm(last, S.Lebesgue(2)) < 0.05 * l0
    # every other space in the list decays along the same sequence
    assert S.eval_norm(last, S.Lorentz(2, 1)) < 0.05 * S.eval_norm(f, S.Lorentz(2, 1))
