"""Maximal operators over dilated balls.

All suprema over ``k`` run through a finite level window; by default it
spans from balls smaller than one grid cell up to balls covering the grid.
The grand maximal function is approximated from below by a finite
dictionary of normalized smooth profiles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .dilation import step_quasi_norm
from .errors import EmptyDictionary, GridMismatch, SupportOverflow
from .gridfn import ball_average, ball_max_filter
from .kernels import convolve_same, moment_exponents, radial_profile, sample_dilated
from .spaces import convexify, eval_norm, grand_order

__all__ = [
    "level_window",
    "hl_maximal",
    "powered_maximal",
    "SmoothKernel",
    "radial_maximal",
    "DictionaryMember",
    "SchwartzDictionary",
    "make_dictionary",
    "schwartz_seminorm",
    "grand_maximal",
    "fs_vector_check",
]


def level_window(d, f):
    """Levels from sub-cell balls up to a ball covering the grid of ``f``."""
    cell = f.cell_volume
    extent = float(np.prod([m * h for m, h in zip(f.dims, f.spacing)]))
    lo = int(math.floor(math.log(cell) / math.log(d.b))) - 1
    hi = int(math.ceil(math.log(extent) / math.log(d.b))) + 2 * d.n + 2
    return range(lo, hi + 1)


def _levels(d, f, krange):
    if krange is None:
        return list(level_window(d, f))
    if isinstance(krange, tuple) and len(krange) == 2:
        return list(range(int(krange[0]), int(krange[1]) + 1))
    return [int(k) for k in krange]


def hl_maximal(f, d, krange=None):
    """``M f(x) = sup_k sup_{y in x+B_k} avg_{y+B_k} |f|``.

    Uses ``B_k = -B_k``: the inner average is a ball convolution and the
    outer sup is a max filter over the same mask.
    """
    absf = np.abs(f.values)
    out = absf.copy()
    for k in _levels(d, f, krange):
        avg = ball_average(absf, d, k, f.spacing)
        np.maximum(out, ball_max_filter(avg, d, k, f.spacing), out=out)
    return f.with_values(out)


def powered_maximal(f, d, alpha, krange=None):
    """``M^(alpha) f = [M(|f|^alpha)]^{1/alpha}``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    g = f.with_values(np.abs(f.values) ** alpha)
    return f.with_values(hl_maximal(g, d, krange).values ** (1.0 / alpha))


@dataclass(frozen=True, eq=False)
class SmoothKernel:
    """A kernel ``fn`` on physical points supported in ``scale * Delta``.

    ``integral`` is used when a dilate is narrower than the grid and
    collapses to a point mass.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    scale: float = 1.0
    integral: float = 0.0
    name: str = "kernel"

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))

    def kernel(self, d, k, spacing, limit=None):
        kern = sample_dilated(self.fn, d, k, spacing, scale=self.scale, limit=limit,
                              unresolved="point", integral=self.integral)
        return _match_mass(kern, self.integral, spacing)


def _match_mass(kern, integral, spacing):
    # rescale so the discrete mass equals the exact integral
    cell = float(np.prod(spacing))
    mass = kern.sum() * cell
    if kern.size == 1 or abs(integral) < 1e-8 * np.abs(kern).sum() * cell:
        return kern
    return kern * (integral / mass)


def _as_kernel(phi):
    if isinstance(phi, SmoothKernel) or isinstance(phi, DictionaryMember):
        return phi
    if hasattr(phi, "kernel") and hasattr(phi, "dilation"):
        # a wavelet: zero integral, moment-corrected samples
        return phi
    return SmoothKernel(phi)


def _responses(f, phi, d, ks):
    if f.n != d.n:
        raise GridMismatch("grid dimension differs from the dilation dimension")
    phi = _as_kernel(phi)
    out = {}
    for k in ks:
        try:
            if isinstance(phi, (SmoothKernel, DictionaryMember)):
                kern = phi.kernel(d, k, f.spacing, limit=f.dims)
            else:
                kern = phi.kernel(k, f.spacing, limit=f.dims)
        except SupportOverflow:
            continue
        out[k] = np.abs(convolve_same(f.values, kern, f.cell_volume))
    return out


def radial_maximal(f, phi, d, krange=None):
    """``M_phi^0 f(x) = sup_k |f * phi_k(x)|``; levels beyond the grid are skipped."""
    ks = _levels(d, f, krange)
    out = np.zeros(f.dims)
    for resp in _responses(f, phi, d, ks).values():
        np.maximum(out, resp, out=out)
    return f.with_values(out)


def _nontangential(f, phi, d, ks):
    out = np.zeros(f.dims)
    for k, resp in _responses(f, phi, d, ks).items():
        np.maximum(out, ball_max_filter(resp, d, k, f.spacing), out=out)
    return out


# --------------------------------------------------------------------------
# Schwartz dictionary
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DictionaryMember:
    """``amp * y^beta * v(|y|^2)`` with ``y = L x / sigma`` and ``v`` the standard bump."""

    dilation: object
    beta: tuple
    sigma: float
    amp: float = 1.0

    def raw(self, x):
        y = np.asarray(x, dtype=float) @ self.dilation.normalizer.T / self.sigma
        t = np.sum(y * y, axis=-1)
        v = radial_profile(self.dilation.n, 0).bump(t)
        return v * np.prod(y ** np.array(self.beta), axis=-1)

    def __call__(self, x):
        return self.amp * self.raw(x)

    @cached_property
    def integral(self):
        pts, cell = _local_grid(self.dilation, self.sigma, 161 if self.dilation.n < 3 else 41)
        return float(np.sum(self(pts)) * cell)

    def kernel(self, d, k, spacing, limit=None):
        kern = sample_dilated(self, d, k, spacing, scale=self.sigma, limit=limit,
                              unresolved="point", integral=self.integral)
        return _match_mass(kern, self.integral, spacing)


def _local_grid(d, sigma, m):
    half = sigma * d.half_widths(0) * 1.02
    axes = [np.linspace(-w, w, m) for w in half]
    cell = float(np.prod([ax[1] - ax[0] for ax in axes]))
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return pts, cell


def schwartz_seminorm(fn, d, order, sigma=1.0, points=None):
    """``sup_{|alpha| <= N} sup_x max(1, rho(x)^N) |d^alpha fn(x)|`` by finite differences.

    ``fn`` must be supported in ``sigma * Delta``; derivatives are taken on a
    local grid of ``points`` samples per axis.
    """
    if points is None:
        points = 161 if d.n < 3 else 41
    pts, _ = _local_grid(d, sigma, points)
    axes_steps = []
    for ax in range(d.n):
        idx0 = [0] * d.n
        idx1 = [0] * d.n
        idx1[ax] = 1
        axes_steps.append(float(pts[tuple(idx1)][ax] - pts[tuple(idx0)][ax]))
    vals = fn(pts.reshape(-1, d.n)).reshape(pts.shape[:-1])
    weight = np.maximum(1.0, step_quasi_norm(d, pts) ** order)
    best = 0.0
    for alpha in moment_exponents(d.n, order):
        der = vals
        for ax, times in enumerate(alpha):
            for _ in range(times):
                der = np.gradient(der, axes_steps[ax], axis=ax)
        best = max(best, float(np.max(np.abs(der) * weight)))
    return best


@dataclass(frozen=True, eq=False)
class SchwartzDictionary:
    """Finite family of profiles with ``||phi||_{S_N} <= 1`` on the sampling grid."""

    members: tuple
    order: int

    def __len__(self):
        return len(self.members)


def make_dictionary(d, order=None, size=8, space=None, sigmas=(1.0, 0.6)):
    """Dictionary of ``size`` normalized polynomial-times-bump profiles.

    ``order`` defaults to ``N_{X,A}`` for ``space`` (or 2 without a space).
    Each member is divided by its finite-difference ``S_N`` seminorm.
    """
    if order is None:
        order = grand_order(space, d) if space is not None else 2
    per_sigma = max(1, int(math.ceil(size / len(sigmas))))
    exps = moment_exponents(d.n, 6)[:per_sigma]
    members = []
    for sigma in sigmas:
        for beta in exps:
            if len(members) == size:
                break
            raw = DictionaryMember(d, tuple(beta), float(sigma))
            norm = schwartz_seminorm(raw.raw, d, order, sigma)
            members.append(DictionaryMember(d, tuple(beta), float(sigma), 1.0 / norm))
    return SchwartzDictionary(tuple(members), int(order))


def grand_maximal(f, dictionary, d, krange=None, nontangential=False):
    """Lower proxy of ``M_N f``: max over dictionary members of ``M_phi f``.

    Raises
    ------
    EmptyDictionary
        If the dictionary has no members.
    """
    members = dictionary.members if isinstance(dictionary, SchwartzDictionary) else tuple(dictionary)
    if not members:
        raise EmptyDictionary("grand maximal needs at least one dictionary member")
    ks = _levels(d, f, krange)
    out = np.zeros(f.dims)
    for phi in members:
        if nontangential:
            np.maximum(out, _nontangential(f, phi, d, ks), out=out)
        else:
            np.maximum(out, radial_maximal(f, phi, d, ks).values, out=out)
    return f.with_values(out)


def fs_vector_check(family, u, X, p, d, krange=None):
    """``||(sum (M f_k)^u)^{1/u}||_{X^{1/p}} / ||(sum |f_k|^u)^{1/u}||_{X^{1/p}}``.

    Returns ``nan`` when the right side vanishes.
    """
    if u <= 1:
        raise ValueError("u must exceed 1")
    if p >= X.p_minus:
        raise ValueError("p must be below p_minus of the space")
    Y = convexify(X, 1.0 / p)
    lhs = np.zeros(family[0].dims)
    rhs = np.zeros(family[0].dims)
    for f in family:
        lhs += hl_maximal(f, d, krange).values ** u
        rhs += np.abs(f.values) ** u
    den = eval_norm(family[0].with_values(rhs ** (1.0 / u)), Y)
    if den == 0.0:
        return float("nan")
    return eval_norm(family[0].with_values(lhs ** (1.0 / u)), Y) / den
