"""Littlewood-Paley machinery for an expansive dilation.

The mother wavelet is ``phi(x) = g(L x / sigma)`` where ``g = (-Laplace)^m v``
is the m-fold Laplacian of a radial C-infinity bump and ``L = (P/c)^{1/2}``
maps the ellipsoid ``Delta`` onto the Euclidean unit ball.  Hence ``phi`` is
supported in ``sigma * Delta ⊂ B_0``, all moments of order ``< 2m`` vanish,
and ``phi_hat`` is known in closed form through a tabulated Hankel transform.
The scale ``sigma`` is chosen so that ``phi_hat`` has no zero on
``B*_1 \\ {0}`` (balls of the adjoint dilation ``A^*``).

The Calderon partner is defined on the Fourier side by
``psi_hat = gamma_hat / phi_hat`` with the telescoping bump
``gamma_hat(xi) = theta(xi) - theta(A^* xi)``, so the partition identity
``sum_j psi_hat phi_hat((A^*)^j xi) = 1`` holds exactly on the covered band.

Convolutions with the dilates ``phi_k(x) = b^{-k} phi(A^{-k} x)`` use either
the spatial engine (sampled, moment-corrected kernels; default) or the
spectral engine (analytic multipliers on a padded FFT grid).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import signal

from .dilation import annulus_level, step_quasi_norm
from .errors import AnnulusBoundViolated, DivideNearZero, LambdaTooSmall, SupportOverflow
from .gridfn import GridFunction, ball_average, ball_max_filter, ball_mask
from .kernels import convolve_same, radial_profile, sample_dilated, spectral_apply

__all__ = [
    "Wavelet",
    "CalderonPartner",
    "WaveletPair",
    "make_phi",
    "make_calderon_partner",
    "make_wavelet_pair",
    "dilate_convolve",
    "level_responses",
    "lusin_area",
    "g_function",
    "g_lambda_star",
    "peetre_maximal",
    "peetre_lemma_ratio",
    "calderon_reconstruct",
    "partition_residual",
    "smooth_step",
]


def smooth_step(x):
    """C-infinity step: 0 for ``x <= 0``, 1 for ``x >= 1``."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    out = np.zeros_like(x)
    out[x >= 1.0] = 1.0
    mid = (x > 0.0) & (x < 1.0)
    a = np.exp(-1.0 / x[mid])
    b = np.exp(-1.0 / (1.0 - x[mid]))
    out[mid] = a / (a + b)
    return out


def _svd_range(m):
    s = np.linalg.svd(m, compute_uv=False)
    return float(s.min()), float(s.max())


@dataclass(frozen=True, eq=False)
class Wavelet:
    """Radial wavelet ``phi(x) = g(L x / sigma)`` attached to a dilation."""

    dilation: object
    degree: int
    sigma: float
    sharpness: float = 1.0

    @cached_property
    def profile(self):
        m = max(1, math.ceil((self.degree + 1) / 2))
        return radial_profile(self.dilation.n, m, self.sharpness)

    @cached_property
    def _linv(self):
        return np.linalg.inv(self.dilation.normalizer)

    def __call__(self, x):
        y = np.asarray(x, dtype=float) @ self.dilation.normalizer.T / self.sigma
        return self.profile.value(np.sum(y * y, axis=-1))

    def hat(self, xi):
        """``phi_hat(xi)`` for frequency points of shape ``(..., n)``."""
        eta = np.asarray(xi, dtype=float) @ self._linv.T * self.sigma
        s = np.sqrt(np.sum(eta * eta, axis=-1))
        scale = self.sigma ** self.dilation.n / abs(np.linalg.det(self.dilation.normalizer))
        return scale * self.profile.hat(s)

    def hat_radial_min(self, s_lo, s_hi, samples=4000):
        """``min |phi_hat|`` over the radial range ``s in [s_lo, s_hi]``."""
        s = np.linspace(s_lo, s_hi, samples)
        scale = self.sigma ** self.dilation.n / abs(np.linalg.det(self.dilation.normalizer))
        return float(np.min(np.abs(scale * self.profile.hat(s))))

    def kernel(self, k, spacing, limit=None):
        """Moment-corrected samples of ``phi_k`` on grid offsets (zero if unresolved)."""
        return sample_dilated(
            self, self.dilation, k, spacing, scale=self.sigma, limit=limit,
            moments=self.degree, unresolved="zero", weight_fn=self.profile.bump,
        )

    def grid(self, points=65):
        """``phi`` sampled on a grid covering its support (moment-corrected)."""
        half = self.sigma * self.dilation.half_widths(0)
        spacing = tuple(2 * half / (points - 3))
        vals = self.kernel(0, spacing)
        return GridFunction(vals, spacing)


@dataclass(frozen=True, eq=False)
class CalderonPartner:
    """``psi_hat = gamma_hat / phi_hat`` with a telescoping partition bump."""

    wavelet: Wavelet

    @cached_property
    def adjoint(self):
        return self.wavelet.dilation.adjoint

    @property
    def upper(self):
        # theta vanishes once Q*(xi) >= r*^2, i.e. outside r* Delta* ⊂ B*_1
        return self.adjoint.r ** 2

    def theta(self, xi):
        lxi = np.asarray(xi, dtype=float) @ self.adjoint.normalizer.T
        q = np.sum(lxi * lxi, axis=-1)
        return smooth_step((self.upper - q) / (self.upper - 1.0))

    def gamma_hat(self, xi):
        xi = np.asarray(xi, dtype=float)
        return self.theta(xi) - self.theta(xi @ self.wavelet.dilation.matrix)

    def hat(self, xi):
        xi = np.asarray(xi, dtype=float)
        gam = self.gamma_hat(xi)
        out = np.zeros_like(gam)
        live = gam != 0.0
        out[live] = gam[live] / self.wavelet.hat(xi[live])
        return out

    def support_range(self):
        """Radial range ``sigma |L^{-1} xi|`` swept by ``supp gamma_hat``."""
        w = self.wavelet
        d = w.dilation
        linv = np.linalg.inv(d.normalizer)
        lsinv = np.linalg.inv(self.adjoint.normalizer)
        hi = w.sigma * math.sqrt(self.upper) * _svd_range(linv @ lsinv)[1]
        lo = w.sigma * _svd_range(linv @ np.linalg.inv(d.matrix.T) @ lsinv)[0]
        return lo, hi


@dataclass(frozen=True, eq=False)
class WaveletPair:
    """Mother wavelet, Calderon partner and their grid representations."""

    wavelet: Wavelet
    partner: CalderonPartner
    phi: GridFunction
    psi: GridFunction
    fourier_phi: GridFunction
    fourier_psi: GridFunction
    annulus_lower_bound: float

    @property
    def degree(self):
        return self.wavelet.degree

    @property
    def dilation(self):
        return self.wavelet.dilation


def annulus_range(d, sigma):
    """Radial range of ``sigma |L^{-1} xi|`` over ``(2||A||)^{-1} <= rho*(xi) <= 1``."""
    adj = d.adjoint
    k0 = math.ceil(math.log(1.0 / (2 * d.frobenius_norm)) / math.log(d.b) - 1e-12)
    linv = np.linalg.inv(d.normalizer)
    lsinv = np.linalg.inv(adj.normalizer)
    hi = sigma * _svd_range(linv @ d.matrix.T @ lsinv)[1]
    lo = sigma * _svd_range(linv @ np.linalg.matrix_power(d.matrix.T, k0) @ lsinv)[0]
    return lo, hi


def default_sigma(d, degree, sharpness=1.0, safety=0.9):
    m = max(1, math.ceil((degree + 1) / 2))
    prof = radial_profile(d.n, m, sharpness)
    _, hi = annulus_range(d, 1.0)
    return min(0.95, safety * prof.first_zero / hi)


def make_phi(d, dmax, sigma=None, sharpness=1.0):
    """Mother wavelet with vanishing moments up to ``dmax``, support in ``B_0``.

    Returns a :class:`Wavelet`; its ``grid()`` method gives the sampled
    function.  Raises :class:`AnnulusBoundViolated` when ``|phi_hat|`` drops
    to (numerically) zero somewhere on the annulus ``(2||A||)^{-1} <= rho*(xi) <= 1``.
    """
    if dmax < 0:
        raise ValueError("dmax must be nonnegative")
    if sigma is None:
        sigma = default_sigma(d, dmax, sharpness)
    if not 0 < sigma <= 1:
        raise ValueError("sigma must lie in (0, 1] so that supp phi ⊂ B_0")
    w = Wavelet(d, int(dmax), float(sigma), float(sharpness))
    lo, hi = annulus_range(d, w.sigma)
    c = w.hat_radial_min(lo, hi)
    peak = w.hat_radial_min(0.5 * (lo + hi), 0.5 * (lo + hi))
    if c <= 1e-6 * max(peak, 1e-300):
        raise AnnulusBoundViolated(f"|phi_hat| falls to {c:.3g} on the annulus", min_abs=c)
    object.__setattr__(w, "_annulus_bound", c)
    return w


def admissible_phi(d, dmax, sharpness=1.0, attempts=8):
    """``make_phi`` with geometric shrinking of ``sigma`` on failure."""
    sigma = default_sigma(d, dmax, sharpness)
    for _ in range(attempts):
        try:
            return make_phi(d, dmax, sigma=sigma, sharpness=sharpness)
        except AnnulusBoundViolated:
            sigma *= 0.8
    raise AnnulusBoundViolated("no admissible sigma found")


def make_calderon_partner(phi, d=None):
    """Calderon partner of ``phi``; raises :class:`DivideNearZero` if ``|phi_hat| < C/2`` on ``supp gamma_hat``."""
    w = phi.wavelet if isinstance(phi, WaveletPair) else phi
    partner = CalderonPartner(w)
    c = getattr(w, "_annulus_bound", None)
    if c is None:
        c = w.hat_radial_min(*annulus_range(w.dilation, w.sigma))
    lo, hi = partner.support_range()
    if w.hat_radial_min(lo, hi) < 0.5 * c:
        raise DivideNearZero("phi_hat is below C/2 on the support of gamma_hat")
    return partner


def _fourier_box(d, partner, points):
    adj = partner.adjoint
    half = 1.05 * adj.half_widths(1)
    spacing = 2 * half / points
    return GridFunction(np.zeros((points,) * d.n), spacing)


def make_wavelet_pair(d, dmax, sigma=None, sharpness=1.0, points=64):
    """Build ``phi``, its partner ``psi`` and their spatial/Fourier grids."""
    w = make_phi(d, dmax, sigma=sigma, sharpness=sharpness)
    partner = make_calderon_partner(w, d)
    box = _fourier_box(d, partner, points)
    xi = box.points()
    fphi = box.with_values(w.hat(xi).astype(complex))
    fpsi = box.with_values(partner.hat(xi).astype(complex))
    # psi(x) = int psi_hat(xi) e^{2 pi i x xi} dxi on the dual grid
    spec = np.fft.ifftshift(fpsi.values)
    vals = np.fft.fftshift(np.fft.ifftn(spec)).real * spec.size * box.cell_volume
    xspacing = tuple(1.0 / (m * h) for m, h in zip(box.dims, box.spacing))
    psi = GridFunction(vals, xspacing)
    return WaveletPair(w, partner, w.grid(), psi, fphi, fpsi, w._annulus_bound)


def _as_wavelet(phi):
    if isinstance(phi, WaveletPair):
        return phi.wavelet
    return phi


def dilate_convolve(f, phi, k, d=None, engine="spatial"):
    """``f * phi_k`` with ``phi_k(x) = b^{-k} phi(A^{-k} x)``.

    The spatial engine samples ``phi_k`` with exact discrete vanishing
    moments and raises :class:`SupportOverflow` once the kernel box exceeds
    the 2x padded grid.  The spectral engine multiplies by
    ``phi_hat((A^*)^k xi)``.
    """
    w = _as_wavelet(phi)
    d = w.dilation if d is None else d
    if engine == "spectral":
        ak = d.power(k)
        return spectral_apply(f, lambda xi: w.hat(xi @ ak))
    kern = w.kernel(k, f.spacing, limit=f.dims)
    return f.with_values(convolve_same(f.values, kern, f.cell_volume))


def level_responses(f, phi, krange, d=None, engine="spatial"):
    """``{k: f * phi_k}`` over ``krange``; levels beyond grid capacity are skipped."""
    out = {}
    for k in _krange(krange):
        try:
            out[k] = dilate_convolve(f, phi, k, d, engine).values
        except SupportOverflow:
            continue
    return out


def _krange(krange):
    if isinstance(krange, range):
        return list(krange)
    if isinstance(krange, tuple) and len(krange) == 2:
        return list(range(int(krange[0]), int(krange[1]) + 1))
    return [int(k) for k in krange]


def lusin_area(f, pair, krange, d=None, responses=None):
    """``S(f)(x) = [sum_k b^{-k} int_{x+B_k} |f * phi_k|^2]^{1/2}`` on the grid."""
    w = _as_wavelet(pair)
    d = w.dilation if d is None else d
    responses = level_responses(f, w, krange, d) if responses is None else responses
    total = np.zeros(f.dims)
    for k, resp in responses.items():
        total += ball_average(np.abs(resp) ** 2, d, k, f.spacing)
    return f.with_values(np.sqrt(np.maximum(total, 0.0)))


def g_function(f, pair, krange, d=None, responses=None):
    """``g(f)(x) = [sum_k |f * phi_k(x)|^2]^{1/2}``."""
    w = _as_wavelet(pair)
    d = w.dilation if d is None else d
    responses = level_responses(f, w, krange, d) if responses is None else responses
    total = np.zeros(f.dims)
    for resp in responses.values():
        total += np.abs(resp) ** 2
    return f.with_values(np.sqrt(total))


@lru_cache(maxsize=16)
def _offset_rho(d, spacing, dims):
    axes = [np.arange(-(m - 1), m) * h for m, h in zip(dims, spacing)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    rho = step_quasi_norm(d, pts)
    rho.flags.writeable = False
    return rho


def g_lambda_kernel(d, k, lam, spacing, dims):
    """Samples of ``b^{-k} [b^k / (b^k + rho(z))]^lam`` on all grid offsets.

    When ``B_k`` is smaller than a cell, the centre weight is set so that the
    discrete mass equals the exact mass
    ``c_lam = sum_j (b^{j+1} - b^j)(1 + b^j)^{-lam}``.
    """
    rho = _offset_rho(d, tuple(spacing), tuple(dims))
    bk = d.b ** k
    kern = (bk / (bk + rho)) ** lam / bk
    cell = float(np.prod(spacing))
    if bk < cell:
        j = np.arange(-400, 401)
        c_lam = float(np.sum((d.b ** (j + 1.0) - d.b ** j) * (1.0 + d.b ** j) ** (-lam)))
        centre = tuple(m - 1 for m in dims)
        off = kern.sum() - kern[centre]
        kern = kern.copy()
        kern[centre] = max(c_lam - off * cell, 0.0) / cell
    return kern


def g_lambda_star(f, pair, lam, krange, d=None, r_plus=1.0, responses=None):
    """``g*_lam(f)(x) = {sum_k b^{-k} int [b^k/(b^k + rho(x-y))]^lam |f*phi_k(y)|^2 dy}^{1/2}``.

    Raises :class:`LambdaTooSmall` unless ``lam > max(1, 2 / r_plus)``.
    """
    if lam <= max(1.0, 2.0 / r_plus):
        raise LambdaTooSmall(f"lambda={lam} must exceed max(1, 2/r_+) = {max(1.0, 2.0 / r_plus)}")
    w = _as_wavelet(pair)
    d = w.dilation if d is None else d
    responses = level_responses(f, w, krange, d) if responses is None else responses
    total = np.zeros(f.dims)
    for k, resp in responses.items():
        kern = g_lambda_kernel(d, k, lam, f.spacing, f.dims)
        total += signal.fftconvolve(np.abs(resp) ** 2, kern, mode="same") * f.cell_volume
    return f.with_values(np.sqrt(np.maximum(total, 0.0)))


def _level_window(d, spacing, dims):
    """Levels from the first non-trivial ball mask up to a ball covering the grid."""
    cell = float(np.prod(spacing))
    extent = float(np.prod([m * h for m, h in zip(dims, spacing)]))
    lo = int(math.floor(math.log(cell) / math.log(d.b))) - 2
    hi = int(math.ceil(math.log(extent) / math.log(d.b))) + 2 * d.n + 2
    return range(lo, hi + 1)


def peetre_maximal(f, phi, j, t, d=None, engine="spatial"):
    """``(phi_j^* f)_t(x) = sup_y |phi_{-j} * f(x+y)| / [1 + b^j rho(y)]^t``.

    The sup is taken over grid offsets.  Since the weight only depends on the
    annulus of ``y``, it equals ``max_l maxfilter_{B_{l+1}}|F| / (1 + b^{j+l})^t``
    together with the ``y = 0`` term.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    w = _as_wavelet(phi)
    d = w.dilation if d is None else d
    resp = np.abs(dilate_convolve(f, w, -j, d, engine).values)
    out = resp.copy()
    for level in _level_window(d, f.spacing, f.dims):
        mask = ball_mask(d, level + 1, f.spacing, tuple(m - 1 for m in f.dims))
        if mask.sum() == 1:
            continue
        weight = (1.0 + d.b ** (j + level)) ** (-t)
        np.maximum(out, ball_max_filter(resp, d, level + 1, f.spacing) * weight, out=out)
    return f.with_values(out)


def peetre_lemma_ratio(f, phi, l, t, gamma, n0, d=None, kmax=6):
    """Max over the grid of ``[(phi_l^* f)_t]^gamma`` divided by the Peetre-type bound.

    The right side is ``sum_{k=0}^{kmax} b^{-k N0 gamma} b^{k+l}
    int |phi_{-(k+l)} * f(y)|^gamma / [1 + b^l rho(x-y)]^{t gamma} dy``.
    """
    w = _as_wavelet(phi)
    d = w.dilation if d is None else d
    lhs = peetre_maximal(f, w, l, t, d).values ** gamma
    rho = _offset_rho(d, tuple(f.spacing), tuple(f.dims))
    weight = (1.0 + d.b ** l * rho) ** (-t * gamma)
    rhs = np.zeros(f.dims)
    for k in range(kmax + 1):
        try:
            resp = dilate_convolve(f, w, -(k + l), d).values
        except SupportOverflow:
            continue
        conv = signal.fftconvolve(np.abs(resp) ** gamma, weight, mode="same") * f.cell_volume
        rhs += d.b ** (-k * n0 * gamma) * d.b ** (k + l) * np.maximum(conv, 0.0)
    live = rhs > 1e-300
    if not np.any(live):
        return 0.0
    return float(np.max(lhs[live] / rhs[live]))


def calderon_reconstruct(f, pair, krange, d=None):
    """``f~ = sum_j f * psi_j * phi_j`` (spectral engine) and ``||f - f~||_2 / ||f||_2``."""
    if isinstance(pair, WaveletPair):
        w, partner = pair.wavelet, pair.partner
    else:
        w, partner = pair, make_calderon_partner(pair)
    d = w.dilation if d is None else d
    ks = _krange(krange)

    def multiplier(xi):
        total = np.zeros(xi.shape[:-1])
        for j in ks:
            eta = xi @ d.power(j)
            gam = partner.gamma_hat(eta)
            live = gam != 0.0
            if np.any(live):
                e = eta[live]
                total[live] += partner.hat(e) * w.hat(e)
        return total

    rec = spectral_apply(f, multiplier)
    norm = np.sqrt(np.sum(np.abs(f.values) ** 2))
    if norm == 0.0:
        return rec, 0.0
    err = np.sqrt(np.sum(np.abs(f.values - rec.values) ** 2)) / norm
    return rec, float(err)


def partition_residual(pair, J=8, samples=1000, seed=0):
    """Max ``|sum_{|j|<=J} psi_hat phi_hat((A^*)^j xi) - 1|`` over random covered frequencies."""
    w = pair.wavelet if isinstance(pair, WaveletPair) else pair
    partner = pair.partner if isinstance(pair, WaveletPair) else make_calderon_partner(pair)
    d = w.dilation
    adj = d.adjoint
    rng = np.random.default_rng(seed)
    # log-uniform radii between the inner and outer edges of the covered band
    dirs = rng.normal(size=(samples, d.n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    base = dirs @ np.linalg.inv(adj.normalizer).T
    levels = rng.uniform(-J + 1, J - 1, size=samples)
    scale = d.b ** (levels / d.n)
    xi = base * scale[:, None]
    covered = (partner.theta(xi @ np.linalg.matrix_power(d.inverse, J)) == 1.0) & (
        partner.theta(xi @ d.power(J + 1)) == 0.0
    )
    xi = xi[covered]
    total = np.zeros(len(xi))
    for j in range(-J, J + 1):
        eta = xi @ d.power(j)
        total += partner.hat(eta) * w.hat(eta)
    return float(np.max(np.abs(total - 1.0))) if len(xi) else 0.0
