"""Radial bump profiles and the two convolution engines.

Every kernel used by the toolkit is a function of the normalized variable
``y = L x / scale`` (``L = (P/c)^{1/2}``), so its support is the scaled
ellipsoid ``scale * Delta``.  Dilates ``b^{-k} K(A^{-k} x)`` are sampled on
grid offsets (spatial engine) or, for kernels with a known Fourier
transform, applied as multipliers ``K_hat((A^*)^k xi)`` on a padded FFT grid
(spectral engine).
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import sympy
from scipy import interpolate, signal, special

from .errors import SupportOverflow
from .gridfn import GridFunction, crop, pad

__all__ = [
    "RadialProfile",
    "radial_profile",
    "moment_exponents",
    "sample_dilated",
    "convolve_same",
    "spectral_apply",
    "frequency_points",
]


def moment_exponents(n, degree):
    """All multi-indices ``gamma`` with ``|gamma| <= degree``, graded order."""
    out = []
    for total in range(degree + 1):
        for gam in _compositions(total, n):
            out.append(gam)
    return out


def _compositions(total, n):
    if n == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, n - 1):
            yield (first,) + rest


def monomials(u, exps):
    """Columns ``u^gamma`` for the given exponents; ``u`` has shape ``(m, n)``."""
    return np.stack([np.prod(u ** np.array(g), axis=1) for g in exps], axis=1)


def _lambda_bessel(n, z):
    # normalized Bessel function Gamma(nu+1) (2/z)^nu J_nu(z), nu = n/2 - 1
    if n == 1:
        return np.cos(z)
    if n == 2:
        return special.j0(z)
    if n == 3:
        return np.sinc(z / np.pi)
    raise ValueError("dimension must be 1, 2 or 3")


class RadialProfile:
    """``g = (-Laplace)^m v`` for the bump ``v(y) = exp(-a / (1 - |y|^2))``.

    ``g`` is C-infinity, supported in the unit ball, and all its moments of
    order ``< 2m`` vanish.  Its Fourier transform is the radial function
    ``G(|eta|) = (2 pi |eta|)^{2m} v_hat(|eta|)``.
    """

    def __init__(self, n, m, sharpness=1.0, s_max=60.0, table_size=2401, nodes=1200):
        self.n, self.m, self.sharpness = int(n), int(m), float(sharpness)
        u = sympy.symbols("u", positive=True)
        expr = sympy.exp(-self.sharpness / (1 - u))
        base = sympy.lambdify(u, expr, "numpy")
        # radial Laplacian in u = |y|^2: 4 u h'' + 2 n h'
        for _ in range(self.m):
            expr = -(4 * u * sympy.diff(expr, u, 2) + 2 * self.n * sympy.diff(expr, u))
        self._g = sympy.lambdify(u, expr, "numpy")
        self._v = base

        r, w = np.polynomial.legendre.leggauss(nodes)
        r = 0.5 * (r + 1.0)
        w = 0.5 * w
        vr = self.bump(r ** 2)
        s = np.linspace(0.0, s_max, table_size)
        const = 2 * np.pi ** (self.n / 2) / special.gamma(self.n / 2)
        vhat = np.empty_like(s)
        for i0 in range(0, len(s), 500):
            z = 2 * np.pi * np.outer(s[i0:i0 + 500], r)
            vhat[i0:i0 + 500] = const * (_lambda_bessel(self.n, z) * (vr * r ** (self.n - 1))) @ w
        self.s_max = s_max
        self._vhat_table = (s, vhat)
        self._vhat = interpolate.CubicSpline(s, vhat)
        sign = np.flatnonzero(np.sign(vhat[1:]) != np.sign(vhat[:-1]))
        self.first_zero = float(s[sign[0]]) if sign.size else s_max

    @staticmethod
    def _safe(fn, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        inside = (t >= 0) & (t < 1.0 - 2e-3)
        if np.any(inside):
            out[inside] = fn(t[inside])
        return out

    def bump(self, t):
        """``v`` as a function of ``t = |y|^2``."""
        return self._safe(self._v, t)

    def value(self, t):
        """``g`` as a function of ``t = |y|^2``."""
        return self._safe(self._g, t)

    def vhat(self, s):
        s = np.abs(np.asarray(s, dtype=float))
        return np.where(s <= self.s_max, self._vhat(np.minimum(s, self.s_max)), 0.0)

    def hat(self, s):
        """``G(s)`` with ``s = |eta|``."""
        s = np.abs(np.asarray(s, dtype=float))
        return (2 * np.pi * s) ** (2 * self.m) * self.vhat(s)

    @property
    def bump_integral(self):
        return float(self._vhat_table[1][0])


@lru_cache(maxsize=32)
def radial_profile(n, m, sharpness=1.0):
    return RadialProfile(n, m, sharpness)


# --------------------------------------------------------------------------
# spatial engine
# --------------------------------------------------------------------------

def _moment_fix(vals, u, weight, degree):
    """Subtract ``weight * poly`` so that discrete moments up to ``degree`` vanish."""
    exps = moment_exponents(u.shape[1], degree)
    mon = monomials(u, exps)
    mom = mon.T @ vals
    gram = mon.T @ (weight[:, None] * mon)
    coef = np.linalg.solve(gram, mom)
    return vals - weight * (mon @ coef)


def sample_dilated(fn, d, k, spacing, scale=1.0, limit=None, moments=None,
                   min_reach=2, unresolved="zero", integral=0.0, weight_fn=None):
    """Sample ``b^{-k} fn(A^{-k} x)`` at grid offsets ``x = m * h``.

    Parameters
    ----------
    fn : callable
        Kernel evaluated at physical points of shape ``(m, n)``; supported in
        ``scale * Delta``.
    moments : int, optional
        If given, discrete moments up to this degree are removed with a
        bump-weighted polynomial correction (exact polynomial annihilation).
    unresolved : {"zero", "point"}
        What to return when the dilated support spans fewer than ``min_reach``
        samples per half-axis: a zero kernel, or a point mass with the
        integral ``integral``.
    weight_fn : callable, optional
        Weight used by the moment correction; defaults to the indicator of the
        support.

    Returns
    -------
    ndarray
        Odd-sized kernel array centred on the zero offset.

    Raises
    ------
    SupportOverflow
        If the support box exceeds ``limit`` samples per half-axis.
    """
    n = d.n
    spacing = np.asarray(spacing, float)
    half = scale * d.half_widths(k)
    reach = np.floor(half / spacing).astype(int) + 1
    if limit is not None and np.any(reach > np.asarray(limit)):
        raise SupportOverflow(f"level {k} kernel needs reach {tuple(reach)} > {tuple(limit)}")
    if np.min(half / spacing) < min_reach:
        if unresolved == "point":
            return np.full((1,) * n, integral / float(np.prod(spacing)))
        return np.zeros((1,) * n)
    axes = [np.arange(-r, r + 1) * h for r, h in zip(reach, spacing)]
    x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    u = x @ d.power(-k).T
    vals = fn(u) / d.b ** k
    if moments is not None and moments >= 0:
        y = u @ d.normalizer.T / scale
        t = np.sum(y * y, axis=1)
        if weight_fn is None:
            weight = (t < 1.0).astype(float)
        else:
            weight = weight_fn(t)
        weight = weight / d.b ** k
        vals = _moment_fix(vals, u, weight, moments)
    return vals.reshape([2 * r + 1 for r in reach])


def convolve_same(values, kernel, cell_volume):
    """Linear convolution ``sum_m values[i - m] kernel[m] * cell_volume`` (zero extension)."""
    if kernel.size == 1:
        return values * kernel.flat[0] * cell_volume
    return signal.fftconvolve(values, kernel, mode="same") * cell_volume


# --------------------------------------------------------------------------
# spectral engine
# --------------------------------------------------------------------------

def frequency_points(f):
    """FFT frequencies of ``f`` as points of shape ``dims + (n,)``."""
    freqs = [np.fft.fftfreq(m, d=h) for m, h in zip(f.dims, f.spacing)]
    return np.stack(np.meshgrid(*freqs, indexing="ij"), axis=-1)


def spectral_apply(f, multipliers, factor=2):
    """Apply Fourier multipliers to ``f`` on a ``factor``-times padded grid.

    ``multipliers`` is a callable mapping frequency points to values, or a
    list of such callables (one output per callable).  The grid origin only
    contributes a phase that cancels between the forward and inverse
    transforms.  Real input with a real (even) multiplier gives real output.
    """
    single = callable(multipliers)
    mults = [multipliers] if single else list(multipliers)
    big = pad(f, factor)
    xi = frequency_points(big)
    axes = tuple(range(f.n))
    spec = np.fft.fftn(big.values, axes=axes)
    real = not f.is_complex
    outs = []
    for mfn in mults:
        m = mfn(xi)
        out = np.fft.ifftn(spec * m, axes=axes)
        if real and not np.iscomplexobj(m):
            out = out.real
        outs.append(crop(GridFunction(out, big.spacing, big.origin), f))
    return outs[0] if single else outs

