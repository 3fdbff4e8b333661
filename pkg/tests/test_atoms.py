import numpy as np
import pytest

from anisohardy import atoms as A
from anisohardy import maximal as M
from anisohardy import spaces as S
from anisohardy.dilation import DilatedBall, build_dilation
from anisohardy.errors import GridMismatch, RankDeficient
from anisohardy.gridfn import make_grid


@pytest.fixture(scope="module")
def dil():
    return build_dilation(2 * np.eye(2))


@pytest.fixture(scope="module")
def grid():
    return make_grid((96, 96), half_width=4)


X = S.Lebesgue(2)


def test_constructed_atom_passes(dil, grid):
    a = A.make_atom(DilatedBall((0.1, -0.2), 1), 4, 2, X, seed=3, grid=grid, dil=dil)
    rep = A.validate_atom(a)
    assert rep.passed
    assert rep.size_slack == pytest.approx(1.0, abs=1e-10)
    assert rep.moment_slack <= 1e-9


def test_seed_determinism(dil, grid):
    b = DilatedBall((0.0, 0.0), 1)
    a1 = A.make_atom(b, 4, 1, X, seed=7, grid=grid, dil=dil)
    a2 = A.make_atom(b, 4, 1, X, seed=7, grid=grid, dil=dil)
    assert np.array_equal(a1.values.values, a2.values.values)


def test_failures_detected(dil, grid):
    b = DilatedBall((0.0, 0.0), 1)
    a = A.make_atom(b, 4, 1, X, seed=1, grid=grid, dil=dil)
    big = A.Atom(a.values * 2.0, b, 4.0, 1, X, dil)
    assert not A.validate_atom(big).size
    bump = grid.with_values(np.maximum(0, 1 - np.sum(grid.points() ** 2, axis=-1)))
    assert not A.validate_atom(A.Atom(bump * 1e-3, DilatedBall((0.0, 0.0), 2), 4.0, 0, X, dil)).moments
    small_ball = DilatedBall((0.0, 0.0), -1)
    assert not A.validate_atom(A.Atom(a.values, small_ball, 4.0, 1, X, dil)).support
    with pytest.raises(RankDeficient):
        A.make_atom(DilatedBall((0.0, 0.0), -8), 4, 2, X, seed=1, grid=grid, dil=dil)


def test_finite_atomic_norm_single(dil, grid):
    b = DilatedBall((0.0, 0.0), 1)
    a = A.make_atom(b, 4, 1, X, seed=1, grid=grid, dil=dil)
    assert A.finite_atomic_norm(A.AtomicDecomposition([1.0], [a])) == pytest.approx(1.0)
    n1 = S.indicator_norm(X, b, grid, dil)
    assert A.finite_atomic_norm(A.AtomicDecomposition([n1], [a])) == pytest.approx(n1)
    assert A.finite_atomic_norm(A.AtomicDecomposition([0.0], [a])) == 0.0


def test_disjoint_growth(dil, grid):
    centres = [(-1.5, -1.5), (1.5, -1.5), (-1.5, 1.5), (1.5, 1.5)]
    atoms = [A.make_atom(DilatedBall(c, 0), 4, 1, X, seed=i, grid=grid, dil=dil) for i, c in enumerate(centres)]
    for K in range(1, 5):
        dec = A.AtomicDecomposition([1.0] * K, atoms[:K])
        # disjoint unit-weight atoms: the aggregate is (sum_i 1_B_i / ||1_B_i||_2^2)^{1/2} in L^2
        assert A.finite_atomic_norm(dec) == pytest.approx(K ** 0.5, rel=1e-10)


def test_assemble(dil, grid):
    b = DilatedBall((0.0, 0.0), 1)
    a = A.make_atom(b, 4, 1, X, seed=1, grid=grid, dil=dil)
    c = A.make_atom(DilatedBall((1.0, 1.0), 0), 4, 1, X, seed=2, grid=grid, dil=dil)
    assert np.array_equal(A.assemble(A.AtomicDecomposition([1.0], [a])).values, a.values.values)
    lin = A.assemble(A.AtomicDecomposition([2.0, 3.0], [a, c])).values
    assert np.allclose(lin, 2 * a.values.values + 3 * c.values.values)
    # moments of the sum vanish
    x = grid.points()
    for g in (np.ones(grid.dims), x[..., 0], x[..., 1]):
        assert abs(np.sum(lin * g)) <= 1e-9 * np.sum(np.abs(lin))
    other = make_grid((32, 32), half_width=4)
    d2 = A.make_atom(DilatedBall((0.0, 0.0), 1), 4, 0, X, seed=1, grid=other, dil=dil)
    with pytest.raises(GridMismatch):
        A.assemble(A.AtomicDecomposition([1.0, 1.0], [a, d2]))
    with pytest.raises(ValueError):
        A.AtomicDecomposition([], [])


def test_reconstruction_bound_stable(dil):
    grid = make_grid((64, 64), half_width=4)
    D = M.make_dictionary(dil, space=X)
    ratios = [A.reconstruction_ratio(A.random_decomposition(grid, dil, X, seed=s), D, dil) for s in range(6)]
    assert max(ratios) / min(ratios) < 10


def test_decay_ratio_finite(dil):
    grid = make_grid((64, 64), half_width=4)
    D = M.make_dictionary(dil, space=X)
    a = A.make_atom(DilatedBall((0.0, 0.0), 0), 4, 1, X, seed=2, grid=grid, dil=dil)
    r = A.atom_decay_ratio(a, D, dil)
    assert 0 < r < np.inf
    assert A.decay_exponent(dil, 1) == pytest.approx(2.0)
