import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisohardy.dilation import (
    DilatedBall,
    ball_membership,
    build_dilation,
    dilation_from_text,
    dilation_to_text,
    ellipsoid_volume,
    inclusion_chain_margin,
    quasi_triangle_constant,
    step_quasi_norm,
    annulus_level,
)
from anisohardy.errors import NotExpansive, Singular

MATRICES = [np.eye(2) * 2, np.diag([2.0, 3.0]), np.array([[2.0, 1.0], [0.0, 2.0]])]


def test_standard_case():
    d = build_dilation(2 * np.eye(2))
    assert d.b == pytest.approx(4.0, rel=1e-12)
    assert d.lambda_minus == d.lambda_plus == pytest.approx(2.0)
    # Euclidean disc of unit area
    radius = np.sqrt(d.level / d.ellipsoid_form[0, 0])
    assert np.pi * radius ** 2 == pytest.approx(1.0, rel=1e-12)
    assert d.ellipsoid_form[0, 1] == pytest.approx(0.0, abs=1e-14)


def test_diag_and_defective():
    assert build_dilation(np.diag([2.0, 3.0])).b == pytest.approx(6.0)
    d = build_dilation([[2.0, 1.0], [0.0, 2.0]])
    roots = np.abs(np.roots([1.0, -4.0, 4.0]))
    assert d.b == pytest.approx(4.0)
    assert d.lambda_minus == pytest.approx((1 - 1e-3) * roots.min(), rel=1e-6)
    assert d.lambda_plus == pytest.approx((1 + 1e-3) * roots.max(), rel=1e-6)


def test_errors():
    with pytest.raises(NotExpansive):
        build_dilation(np.diag([2.0, 1.0]))
    with pytest.raises(NotExpansive):
        build_dilation(np.diag([2.0, 0.5]))
    with pytest.raises(Singular):
        build_dilation(np.array([[2.0, 4.0], [1.0, 2.0]]))


@pytest.mark.parametrize("A", MATRICES + [np.array([[2.0]]), np.array([[0.0, 1.0], [-2.0, 0.0]])])
def test_invariants(A):
    d = build_dilation(A)
    assert d.b > 1
    assert d.b == pytest.approx(abs(np.linalg.det(A)), rel=1e-12)
    mods = np.abs(np.linalg.eigvals(A))
    assert 1 < d.lambda_minus <= mods.min() + 1e-12
    assert mods.max() - 1e-12 <= d.lambda_plus
    assert ellipsoid_volume(d) == pytest.approx(1.0, rel=1e-6)
    assert inclusion_chain_margin(d) <= 1 + 1e-12
    assert d.r ** d.tau >= 2 > d.r ** (d.tau - 1)
    # PSD form of the inclusion
    p = d.ellipsoid_form
    assert np.linalg.eigvalsh(p - d.r ** 2 * (p - np.eye(d.n))).min() > -1e-12


def test_lyapunov_equals_series():
    a = np.array([[2.0, 1.0], [0.0, 2.0]])
    d = build_dilation(a)
    inv = np.linalg.inv(a)
    series = sum(np.linalg.matrix_power(inv, j).T @ np.linalg.matrix_power(inv, j) for j in range(200))
    assert np.allclose(d.ellipsoid_form, series, rtol=1e-12)


def test_volume_qmc_3d():
    d = build_dilation(np.diag([2.0, 2.0, 3.0]))
    assert ellipsoid_volume(d) == pytest.approx(1.0, rel=2e-3)


def test_membership():
    d = build_dilation(2 * np.eye(2))
    radius = np.sqrt(d.level / d.ellipsoid_form[0, 0])
    for k in range(-3, 4):
        assert ball_membership(d, np.array([0.3, -0.1]), DilatedBall((0.3, -0.1), k))
    assert ball_membership(d, np.array([0.99 * radius, 0.0]), DilatedBall((0, 0), 0))
    assert not ball_membership(d, np.array([radius, 0.0]), DilatedBall((0, 0), 0))
    rng = np.random.default_rng(1)
    x = rng.normal(size=(500, 2)) * 0.5
    for k in (-1, 0, 2):
        inside = d.contains(x, np.zeros(2), k)
        assert np.all(d.contains(x[inside] @ d.matrix.T, np.zeros(2), k + 1))
        assert np.all(d.contains(x[inside], np.zeros(2), k + 1))


def test_symmetry():
    d = build_dilation([[2.0, 1.0], [0.0, 2.0]])
    x = np.random.default_rng(2).normal(size=(200, 2))
    assert np.array_equal(d.contains(x, np.zeros(2), 0), d.contains(-x, np.zeros(2), 0))


@pytest.mark.parametrize("A", MATRICES)
def test_rho_homogeneity(A):
    d = build_dilation(A)
    x = np.random.default_rng(3).normal(size=(1000, 2))
    assert np.array_equal(step_quasi_norm(d, x @ d.matrix.T), d.b * step_quasi_norm(d, x))


def test_rho_zero_and_overflow():
    d = build_dilation(2 * np.eye(2))
    assert step_quasi_norm(d, np.zeros(2)) == 0.0
    with pytest.raises(OverflowError):
        step_quasi_norm(d, np.array([1e80, 0.0]))


def test_rho_brute_force_annulus():
    d = build_dilation(np.diag([2.0, 3.0]))
    x = np.random.default_rng(4).normal(size=(50, 2)) * 3
    for xi, rho in zip(x, step_quasi_norm(d, x)):
        k = next(j for j in range(-60, 60) if d.contains(xi, np.zeros(2), j + 1))
        assert not d.contains(xi, np.zeros(2), k)
        assert rho == d.b ** k


@pytest.mark.parametrize("n", [1, 2, 3])
def test_rho_comparable_to_power_of_norm(n):
    d = build_dilation(2 * np.eye(n))
    x = np.random.default_rng(n).normal(size=(1000, n))
    ratio = step_quasi_norm(d, x) / np.linalg.norm(x, axis=1) ** n
    # unit-volume disc of radius R: rho = b^k with R 2^k <= |x| < R 2^{k+1}
    radius = np.sqrt(d.level / d.ellipsoid_form[0, 0])
    assert ratio.max() <= radius ** -n * 1.0000001
    assert ratio.min() >= radius ** -n / d.b * 0.9999999


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 20.0), st.floats(0.0, 1.0))
def test_annulus_monotone_along_rays(t, angle):
    d = build_dilation([[2.0, 1.0], [0.0, 2.0]])
    x = np.array([np.cos(2 * np.pi * angle), np.sin(2 * np.pi * angle)])
    assert annulus_level(d, t * x) >= annulus_level(d, x)


def test_quasi_triangle_1d_exhaustive():
    d = build_dilation([[2.0]])
    est = quasi_triangle_constant(d, 2000, seed=0)
    grid = np.linspace(-4, 4, 401)[:, None]
    xs, ys = np.meshgrid(grid[:, 0], grid[:, 0], indexing="ij")
    rx = step_quasi_norm(d, xs.reshape(-1, 1))
    ry = step_quasi_norm(d, ys.reshape(-1, 1))
    rxy = step_quasi_norm(d, (xs + ys).reshape(-1, 1))
    keep = rx + ry > 0
    exhaustive = np.max(rxy[keep] / (rx + ry)[keep])
    assert 1.0 <= est <= exhaustive + 1e-12
    assert exhaustive <= 2.0 + 1e-12


def test_serialization_round_trip():
    d = build_dilation([[2.0, 1.0], [0.0, 2.0]])
    e = dilation_from_text(dilation_to_text(d))
    assert np.array_equal(e.matrix, d.matrix)
    assert np.array_equal(e.ellipsoid_form, d.ellipsoid_form)
    for name in ("b", "lambda_minus", "lambda_plus", "level", "r", "tau"):
        assert getattr(e, name) == getattr(d, name)


def test_ball_volume():
    d = build_dilation(np.diag([2.0, 3.0]))
    assert DilatedBall((0, 0), 3).volume(d) == 216.0
