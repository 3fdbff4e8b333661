"""Expansive dilations and the anisotropic geometry they generate.

A :class:`Dilation` bundles an expansive matrix ``A`` with a unit-volume
ellipsoid ``Delta = {x : x^T P x < c}`` such that ``Delta ⊂ r Delta ⊂ A Delta``,
the dilated balls ``B_k = A^k Delta`` (``|B_k| = b^k`` with ``b = |det A|``)
and the step homogeneous quasi-norm ``rho``.

Points are always passed as arrays of shape ``(..., n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg, special

from .errors import EmptyFamily, NotExpansive, Singular

__all__ = [
    "Dilation",
    "DilatedBall",
    "build_dilation",
    "ball_membership",
    "step_quasi_norm",
    "annulus_level",
    "quasi_triangle_constant",
    "scaling_overlap_check",
    "ellipsoid_volume",
    "inclusion_chain_margin",
    "dilation_to_text",
    "dilation_from_text",
]

KMIN, KMAX = -200, 200
BOUNDARY_TOL = 1e-12


def unit_ball_volume(n):
    return math.pi ** (n / 2) / special.gamma(n / 2 + 1)


@dataclass(frozen=True, eq=False)
class Dilation:
    matrix: np.ndarray
    n: int
    b: float
    lambda_minus: float
    lambda_plus: float
    ellipsoid_form: np.ndarray
    level: float
    r: float
    tau: int
    _powers: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for arr in (self.matrix, self.ellipsoid_form):
            arr.flags.writeable = False

    # -- matrix powers ----------------------------------------------------
    def power(self, k):
        """``A^k`` for integer ``k`` (negative powers use ``A^{-1}``)."""
        k = int(k)
        cached = self._powers.get(k)
        if cached is None:
            base = self.matrix if k >= 0 else self.inverse
            cached = np.linalg.matrix_power(base, abs(k))
            cached.flags.writeable = False
            self._powers[k] = cached
        return cached

    @cached_property
    def inverse(self):
        return np.linalg.inv(self.matrix)

    @cached_property
    def frobenius_norm(self):
        return float(np.sqrt(np.sum(self.matrix ** 2)))

    @cached_property
    def normalizer(self):
        """Symmetric ``L`` with ``Delta = {x : |L x| < 1}``."""
        w, v = np.linalg.eigh(self.ellipsoid_form / self.level)
        return (v * np.sqrt(w)) @ v.T

    @cached_property
    def adjoint(self):
        """The dilation generated by the transpose ``A^*``."""
        return build_dilation(self.matrix.T)

    @cached_property
    def a0(self):
        return quasi_triangle_constant(self, 4000, seed=0)

    # -- geometry -----------------------------------------------------------
    def ball_form(self, k):
        """Quadratic form ``M_k`` with ``B_k = {x : x^T M_k x < 1}``."""
        inv = self.power(-k)
        lp = self.normalizer @ inv
        return lp.T @ lp

    def half_widths(self, k):
        """Per-axis half extent of the bounding box of ``B_k``."""
        m = self.ball_form(k)
        return np.sqrt(np.diag(np.linalg.inv(m)))

    def normalized_norm_sq(self, x, k=0):
        """``|L A^{-k} x|^2``; ``x`` lies in ``B_k`` iff this is ``< 1``."""
        x = np.asarray(x, dtype=float)
        y = x @ (self.normalizer @ self.power(-k)).T
        return np.einsum("...i,...i->...", y, y)

    def contains(self, x, center, k):
        x = np.asarray(x, dtype=float)
        q = self.normalized_norm_sq(x - np.asarray(center, dtype=float), k)
        return q < 1.0 - BOUNDARY_TOL

    def volume(self, k):
        return self.b ** k


@dataclass(frozen=True)
class DilatedBall:
    """The ball ``center + B_level``."""

    center: tuple
    level: int

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        object.__setattr__(self, "level", int(self.level))

    def volume(self, d):
        return d.b ** self.level


def _eig_moduli(a):
    ev, vecs = np.linalg.eig(a)
    return ev, vecs


def build_dilation(A):
    """Construct a :class:`Dilation` from an expansive matrix.

    Raises
    ------
    Singular
        If ``det A`` is numerically zero.
    NotExpansive
        If some eigenvalue has modulus ``<= 1 + 1e-9``.
    """
    a = np.atleast_2d(np.asarray(A, dtype=float))
    n = a.shape[0]
    if a.shape != (n, n) or n not in (1, 2, 3):
        raise ValueError(f"expected an n x n matrix with n in (1, 2, 3), got shape {a.shape}")
    det = np.linalg.det(a)
    if abs(det) < 1e-12 * max(1.0, np.abs(a).max() ** n):
        raise Singular(f"matrix is singular (det={det:g})")
    ev, vecs = _eig_moduli(a)
    mods = np.abs(ev)
    if mods.min() <= 1.0 + 1e-9:
        raise NotExpansive(f"eigenvalue modulus {mods.min():.6g} is not > 1")

    real_diag = np.all(np.abs(ev.imag) < 1e-12) and np.linalg.cond(vecs) < 1e8
    if real_diag:
        lam_minus, lam_plus = float(mods.min()), float(mods.max())
    else:
        lam_minus = max((1 - 1e-3) * mods.min(), 0.5 * (1 + mods.min()))
        lam_plus = (1 + 1e-3) * mods.max()

    ainv = np.linalg.inv(a)
    # P = sum_j (A^{-j})^T A^{-j}, i.e. P = A^{-T} P A^{-1} + I
    p = linalg.solve_discrete_lyapunov(ainv.T, np.eye(n))
    p = 0.5 * (p + p.T)
    mu_max = float(np.linalg.eigvalsh(p).max())
    r = math.sqrt(mu_max / (mu_max - 1.0))
    c = (math.sqrt(np.linalg.det(p)) / unit_ball_volume(n)) ** (2.0 / n)
    tau = math.ceil(math.log(2.0) / math.log(r) - 1e-12)
    return Dilation(
        matrix=a.copy(),
        n=n,
        b=float(abs(det)),
        lambda_minus=lam_minus,
        lambda_plus=lam_plus,
        ellipsoid_form=p,
        level=c,
        r=r,
        tau=tau,
    )


def ball_membership(d, x, ball):
    """True where ``x`` lies in the open ball ``ball.center + B_ball.level``."""
    return d.contains(x, ball.center, ball.level)


def annulus_level(d, x):
    """Integer ``k`` with ``x`` in ``B_{k+1} \\ B_k``; ``KMIN`` marks ``x = 0``.

    Raises ``OverflowError`` if some point is outside ``B_200``.
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    pts = x.reshape(-1, d.n)
    nrm = d.normalizer
    mats = np.stack([nrm @ d.power(-j) for j in range(KMIN, KMAX + 1)])

    def inside(j):
        m = mats[j - KMIN]
        y = np.einsum("pij,pj->pi", m, pts)
        return np.einsum("pi,pi->p", y, y) < 1.0 - BOUNDARY_TOL

    top = inside(np.full(len(pts), KMAX))
    if not np.all(top):
        raise OverflowError("point outside B_200; step quasi-norm overflows")
    lo = np.full(len(pts), KMIN)
    hi = np.full(len(pts), KMAX)
    while np.any(hi - lo > 1):
        mid = (lo + hi) // 2
        ins = inside(mid)
        hi = np.where(ins, mid, hi)
        lo = np.where(ins, lo, mid)
    level = hi - 1
    zero = np.all(pts == 0.0, axis=1)
    level = np.where(zero, KMIN, level)
    return level.reshape(shape)


def step_quasi_norm(d, x):
    """Step homogeneous quasi-norm: ``rho(x) = b^k`` for ``x in B_{k+1} \\ B_k``."""
    x = np.asarray(x, dtype=float)
    level = annulus_level(d, x)
    zero = np.all(x == 0.0, axis=-1)
    out = np.power(d.b, level.astype(float))
    return np.where(zero, 0.0, out)


def quasi_triangle_constant(d, samples, seed=0):
    """Empirical ``A0 = max rho(x+y) / (rho(x) + rho(y))`` over random pairs.

    Pairs are drawn at mixed scales ``A^k u`` with ``|k| <= 6``; a fixed
    fraction of pairs uses ``y = x`` so that the estimate is at least 1.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)

    def draw(m):
        u = rng.uniform(-1.0, 1.0, size=(m, d.n))
        ks = rng.integers(-6, 7, size=m)
        return np.stack([d.power(k) @ ui for k, ui in zip(ks, u)])

    x = draw(samples)
    y = draw(samples)
    y[: max(1, samples // 10)] = x[: max(1, samples // 10)]
    rx, ry, rxy = step_quasi_norm(d, x), step_quasi_norm(d, y), step_quasi_norm(d, x + y)
    denom = rx + ry
    keep = denom > 0
    return float(np.max(rxy[keep] / denom[keep]))


def ellipsoid_volume(d, nodes=64, seed=0):
    """Volume of ``Delta`` by deterministic quadrature (n <= 2) or QMC (n = 3)."""
    m = d.ellipsoid_form / d.level
    if d.n == 1:
        return float(2.0 / math.sqrt(m[0, 0]))
    if d.n == 2:
        # x1 = X sin(t); the chord in x2 has length 2 sqrt(disc) / m22
        big_x = math.sqrt(np.linalg.inv(m)[0, 0])
        t, w = np.polynomial.legendre.leggauss(nodes)
        t = 0.5 * math.pi * t
        w = 0.5 * math.pi * w
        x1 = big_x * np.sin(t)
        disc = (m[0, 1] * x1) ** 2 - m[1, 1] * (m[0, 0] * x1 ** 2 - 1.0)
        chord = 2.0 * np.sqrt(np.clip(disc, 0.0, None)) / m[1, 1]
        return float(np.sum(w * chord * big_x * np.cos(t)))
    from scipy.stats import qmc

    half = np.sqrt(np.diag(np.linalg.inv(m)))
    pts = qmc.Sobol(d.n, scramble=True, seed=seed).random_base2(20)
    pts = (2 * pts - 1) * half
    inside = np.einsum("pi,ij,pj->p", pts, m, pts) < 1.0
    return float(inside.mean() * np.prod(2 * half))


def inclusion_chain_margin(d, samples=10_000, seed=0):
    """Largest normalized size of ``r x / A`` over boundary points ``x`` of ``Delta``.

    ``Delta ⊂ r Delta ⊂ A Delta`` holds on the sample iff the returned value
    is ``<= 1`` (the first inclusion is automatic for ``r > 1``).
    """
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(samples, d.n))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    x = u @ np.linalg.inv(d.normalizer).T
    return float(np.sqrt(d.normalized_norm_sq(d.r * x, 1)).max())


def scaling_overlap_check(d, balls, ell, s, space, grid):
    """Ratio ``||sum 1_{x_j+B_{k_j+ell}}||_X / (b^{ell/s} ||sum 1_{x_j+B_{k_j}}||_X)``.

    ``balls`` is a list of ``(center, level)`` pairs (or :class:`DilatedBall`),
    evaluated on the geometry of ``grid`` (a :class:`~anisohardy.gridfn.GridFunction`).
    """
    from .gridfn import indicator
    from .spaces import eval_norm

    balls = [b if isinstance(b, DilatedBall) else DilatedBall(*b) for b in balls]
    if not balls:
        raise EmptyFamily("no balls given")
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    pminus = space.p_minus
    if not 0 < s < min(pminus, 1.0):
        raise ValueError(f"s must lie in (0, min(p_-, 1)) = (0, {min(pminus, 1.0)})")
    grown = sum(indicator(grid, d, DilatedBall(b.center, b.level + ell)).values for b in balls)
    base = sum(indicator(grid, d, b).values for b in balls)
    lhs = eval_norm(grid.with_values(grown), space)
    rhs = eval_norm(grid.with_values(base), space)
    return lhs / (d.b ** (ell / s) * rhs)


def dilation_to_text(d):
    """Text config block with matrix rows and derived constants (17 digits)."""
    fmt = lambda v: format(float(v), ".17g")
    lines = ["[dilation]", f"n = {d.n}"]
    rows = ", ".join("[" + ", ".join(fmt(v) for v in row) + "]" for row in d.matrix)
    lines.append(f"matrix = [{rows}]")
    for name in ("b", "lambda_minus", "lambda_plus", "level", "r"):
        lines.append(f"{name} = {fmt(getattr(d, name))}")
    lines.append(f"tau = {d.tau}")
    prow = ", ".join("[" + ", ".join(fmt(v) for v in row) + "]" for row in d.ellipsoid_form)
    lines.append(f"ellipsoid_form = [{prow}]")
    return "\n".join(lines) + "\n"


def dilation_from_text(text):
    """Inverse of :func:`dilation_to_text`; derived constants are restored verbatim."""
    from ._toml import loads

    block = loads(text)["dilation"]
    return Dilation(
        matrix=np.array(block["matrix"], dtype=float),
        n=int(block["n"]),
        b=float(block["b"]),
        lambda_minus=float(block["lambda_minus"]),
        lambda_plus=float(block["lambda_plus"]),
        ellipsoid_form=np.array(block["ellipsoid_form"], dtype=float),
        level=float(block["level"]),
        r=float(block["r"]),
        tau=int(block["tau"]),
    )
