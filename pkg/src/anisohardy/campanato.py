"""Minimizing polynomials and ball Campanato-type quasi-norms.

Polynomials attached to a ball ``x_B + B_l`` live in the ball-local frame
``u = A^{-l}(x - x_B)``, which keeps the Gram matrices well conditioned at
every level.  Ball measures ``|B|`` are the discrete measures (sample count
times cell volume) so that all ratios are consistent with the grid norms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .dilation import DilatedBall, step_quasi_norm
from .errors import DegenerateFamily, ExponentTooSmall, RankDeficient, ZeroAverage
from .gridfn import GridFunction
from .kernels import moment_exponents, monomials
from .spaces import eval_norm, indicator_norm

__all__ = [
    "BallFamily",
    "PolyCoeffs",
    "ball_samples",
    "minimizing_polynomial",
    "orthogonality_residual",
    "sup_bound_constant",
    "oscillation",
    "campanato_norm",
    "simple_campanato_norm",
    "kernel_campanato_norm",
    "min_kernel_exponent",
    "family_scale",
    "duality_pairing",
    "sample_families",
    "conjugate",
]


def conjugate(q):
    """Hölder conjugate ``q' = q / (q - 1)``."""
    if q == 1:
        return math.inf
    if math.isinf(q):
        return 1.0
    return q / (q - 1.0)


@dataclass(frozen=True)
class BallFamily:
    """Finite list of ``(center, level, weight)`` triples."""

    entries: Tuple[Tuple[Tuple[float, ...], int, float], ...]

    def __post_init__(self):
        clean = []
        for c, l, w in self.entries:
            if w < 0:
                raise ValueError("family weights must be nonnegative")
            clean.append((tuple(float(x) for x in np.atleast_1d(c)), int(l), float(w)))
        object.__setattr__(self, "entries", tuple(clean))

    @classmethod
    def from_list(cls, items):
        return cls(tuple((tuple(c), int(l), float(w)) for c, l, w in items))

    def to_list(self):
        return [[list(c), l, w] for c, l, w in self.entries]

    @property
    def balls(self):
        return [DilatedBall(c, l) for c, l, _ in self.entries]

    @property
    def weights(self):
        return np.array([w for _, _, w in self.entries])

    def __len__(self):
        return len(self.entries)

    def prefix(self, m):
        return BallFamily(self.entries[:m])

    def shifted(self, v):
        v = np.asarray(v, dtype=float)
        return BallFamily(tuple((tuple(np.add(c, v)), l, w) for c, l, w in self.entries))


@dataclass(frozen=True, eq=False)
class PolyCoeffs:
    """Polynomial of degree ``degree`` in the local frame of ``center + B_level``."""

    degree: int
    coeffs: np.ndarray
    center: Tuple[float, ...]
    level: int
    dilation: object

    @property
    def exponents(self):
        return moment_exponents(self.dilation.n, self.degree)

    def local(self, x):
        x = np.asarray(x, dtype=float)
        return (x - np.asarray(self.center)) @ self.dilation.power(-self.level).T

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.dilation.n)
        vals = monomials(self.local(flat), self.exponents) @ self.coeffs
        return vals.reshape(x.shape[:-1])

    def to_global(self):
        """Coefficients over the global monomials ``x^gamma`` (same graded order)."""
        n = self.dilation.n
        exps = self.exponents
        rng = np.random.default_rng(0)
        half = self.dilation.half_widths(self.level)
        pts = np.asarray(self.center) + rng.uniform(-1, 1, size=(4 * len(exps) + 8, n)) * half
        mon = monomials(pts, exps)
        coef, *_ = np.linalg.lstsq(mon, self(pts), rcond=None)
        return coef


def _ball_box(f, ball, dil):
    half = dil.half_widths(ball.level)
    sl = []
    for ax in range(f.n):
        lo = int(math.floor((ball.center[ax] - half[ax] - f.origin[ax]) / f.spacing[ax]))
        hi = int(math.ceil((ball.center[ax] + half[ax] - f.origin[ax]) / f.spacing[ax]))
        sl.append(slice(max(lo, 0), min(hi + 1, f.dims[ax])))
    return tuple(sl)


def ball_samples(f, ball, dil):
    """Grid indices and coordinates of the samples inside ``ball``.

    Returns ``(index, points)`` where ``index`` is a tuple of index arrays
    usable on ``f.values``.
    """
    if not isinstance(ball, DilatedBall):
        ball = DilatedBall(*ball)
    box = _ball_box(f, ball, dil)
    axes = [o + h * np.arange(s.start, s.stop) for o, h, s in zip(f.origin, f.spacing, box)]
    if any(len(a) == 0 for a in axes):
        return tuple(np.zeros(0, int) for _ in range(f.n)), np.zeros((0, f.n))
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    inside = dil.contains(pts, ball.center, ball.level)
    local = np.nonzero(inside)
    index = tuple(ix + s.start for ix, s in zip(local, box))
    return index, pts[inside]


def _design(points, ball, degree, dil):
    u = (points - np.asarray(ball.center)) @ dil.power(-ball.level).T
    return monomials(u, moment_exponents(dil.n, degree))


def minimizing_polynomial(f, ball, degree, dil):
    """``P^d_B f``: the ``L^2(B)`` projection of ``f`` onto polynomials of degree ``<= d``.

    Raises
    ------
    RankDeficient
        If the ball holds too few samples for a unique projection.
    """
    if not isinstance(ball, DilatedBall):
        ball = DilatedBall(*ball)
    index, pts = ball_samples(f, ball, dil)
    exps = moment_exponents(dil.n, degree)
    if len(pts) < len(exps):
        raise RankDeficient(f"ball holds {len(pts)} samples, need {len(exps)}")
    mon = _design(pts, ball, degree, dil)
    q, r = np.linalg.qr(mon)
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-10 * diag.max():
        raise RankDeficient("local Gram matrix is singular")
    coef = np.linalg.solve(r, q.T @ f.values[index])
    return PolyCoeffs(int(degree), coef, tuple(ball.center), ball.level, dil)


def orthogonality_residual(f, ball, poly, dil):
    """``max_gamma |<f - P, u^gamma>_B| / (||f||_B ||u^gamma||_B)``."""
    index, pts = ball_samples(f, ball, dil)
    mon = _design(pts, DilatedBall(poly.center, poly.level), poly.degree, dil)
    vals = f.values[index]
    res = vals - mon @ poly.coeffs
    fn = np.linalg.norm(vals)
    if fn == 0:
        return float(np.max(np.abs(mon.T @ res))) if res.size else 0.0
    return float(np.max(np.abs(mon.T @ res) / (fn * np.linalg.norm(mon, axis=0))))


def sup_bound_constant(f, ball, degree, dil):
    """``sup_B |P^d_B f| / avg_B |f|`` over the samples of ``B``.

    Raises
    ------
    ZeroAverage
        If ``f`` vanishes on the ball.
    """
    if not isinstance(ball, DilatedBall):
        ball = DilatedBall(*ball)
    poly = minimizing_polynomial(f, ball, degree, dil)
    index, pts = ball_samples(f, ball, dil)
    avg = np.mean(np.abs(f.values[index]))
    if avg == 0.0:
        raise ZeroAverage("f vanishes on the ball")
    return float(np.max(np.abs(poly(pts))) / avg)


def oscillation(f, ball, degree, q, dil):
    """``(avg_B |f - P^d_B f|^q)^{1/q}`` and the discrete measure of ``B``."""
    if not isinstance(ball, DilatedBall):
        ball = DilatedBall(*ball)
    poly = minimizing_polynomial(f, ball, degree, dil)
    index, pts = ball_samples(f, ball, dil)
    res = np.abs(f.values[index] - poly(pts))
    measure = len(pts) * f.cell_volume
    if math.isinf(q):
        return float(res.max()), measure
    return float(np.mean(res ** q) ** (1.0 / q)), measure


class _BallCache:
    """Per-call memo of indicator norms, measures and indicator arrays."""

    def __init__(self, f, X, dil):
        self.f, self.X, self.dil = f, X, dil
        self.norms, self.ind = {}, {}

    def key(self, ball):
        return (ball.center, ball.level)

    def norm(self, ball):
        k = self.key(ball)
        if k not in self.norms:
            self.norms[k] = indicator_norm(self.X, ball, self.f, self.dil)
        return self.norms[k]

    def indicator(self, ball):
        k = self.key(ball)
        if k not in self.ind:
            arr = np.zeros(self.f.dims)
            index, _ = ball_samples(self.f, ball, self.dil)
            arr[index] = 1.0
            self.ind[k] = arr
        return self.ind[k]

    def aggregate(self, family, s):
        """``|| {sum (lam_i / ||1_B_i||)^s 1_B_i}^{1/s} ||_X``."""
        total = np.zeros(self.f.dims)
        for ball, lam in zip(family.balls, family.weights):
            if lam > 0:
                total += (lam / self.norm(ball)) ** s * self.indicator(ball)
        return eval_norm(self.f.with_values(total ** (1.0 / s)), self.X)


def _family_value(f, family, cache, s, term):
    weights = family.weights
    if not np.any(weights > 0):
        raise DegenerateFamily("all family weights vanish")
    num = 0.0
    for ball, lam in zip(family.balls, weights):
        if lam > 0:
            num += lam * term(ball) / cache.norm(ball)
    return num / cache.aggregate(family, s)


def campanato_norm(f, X, q, degree, s, families, dil):
    """Sampled ball Campanato-type quasi-norm (lower bound of the true supremum).

    Each family contributes
    ``||{sum (lam_i/||1_B_i||_X)^s 1_B_i}^{1/s}||_X^{-1}
    sum_j lam_j |B_j| / ||1_B_j||_X (avg_B_j |f - P_B_j f|^q)^{1/q}``
    and the maximum over the families is returned.
    """
    cache = _BallCache(f, X, dil)
    osc = {}

    def term(ball):
        k = cache.key(ball)
        if k not in osc:
            val, measure = oscillation(f, ball, degree, q, dil)
            osc[k] = measure * val
        return osc[k]

    best = 0.0
    for fam in families:
        best = max(best, _family_value(f, fam, cache, s, term))
    return best


def simple_campanato_norm(f, X, q, degree, balls, dil):
    """``sup_B (|B| / ||1_B||_X)(avg_B |f - P_B f|^q)^{1/q}`` over the sampled balls."""
    best = 0.0
    for ball in balls:
        if not isinstance(ball, DilatedBall):
            ball = DilatedBall(*ball)
        val, measure = oscillation(f, ball, degree, q, dil)
        best = max(best, measure * val / indicator_norm(X, ball, f, dil))
    return best


def min_kernel_exponent(dil, theta0, degree):
    """Infimum of admissible kernel exponents, attained as ``s -> theta0``."""
    lb = math.log(dil.b)
    return lb / math.log(dil.lambda_minus) * (2.0 / theta0 + degree * math.log(dil.lambda_plus) / lb)


def kernel_campanato_norm(f, X, degree, theta0, phi_exp, families, dil, q=1, return_tail=False):
    """Kernel-weighted Campanato quasi-norm with ``q = 1``.

    Every ball ``x_j + B_l`` contributes
    ``int b^{e l} |f - P f| / (b^{l(1+e)} + rho(x - x_j)^{1+e}) dx`` with
    ``e = phi_exp ln(lambda_-) / ln b``.  The integral is truncated to the
    grid box; with ``return_tail`` an analytic bound of the omitted part
    (assuming ``f = 0`` off the box, so only ``|P f|`` remains) is returned too.

    Raises
    ------
    ExponentTooSmall
        If ``phi_exp`` is not above :func:`min_kernel_exponent`.
    """
    if q != 1:
        raise ValueError("the kernel characterization is stated for q = 1")
    threshold = min_kernel_exponent(dil, theta0, degree)
    if phi_exp <= threshold:
        raise ExponentTooSmall(f"exponent {phi_exp} must exceed {threshold:.6g}")
    e = phi_exp * math.log(dil.lambda_minus) / math.log(dil.b)
    cache = _BallCache(f, X, dil)
    pts = f.points()
    flat = pts.reshape(-1, f.n)
    vals = f.values.ravel()
    memo = {}
    tails = {}

    def term(ball):
        k = cache.key(ball)
        if k not in memo:
            poly = minimizing_polynomial(f, ball, degree, dil)
            rho = step_quasi_norm(dil, flat - np.asarray(ball.center))
            l = ball.level
            # divide through by b^{l(1+e)} to avoid overflow at large levels
            kern = dil.b ** (-l) / (1.0 + (rho / dil.b ** l) ** (1.0 + e))
            integral = float(np.sum(np.abs(vals - poly(flat)) * kern) * f.cell_volume)
            _, measure = oscillation(f, ball, 0, 1, dil)
            memo[k] = measure * integral
            tails[k] = measure * _kernel_tail(f, ball, poly, e, dil)
        return memo[k]

    best, best_tail = 0.0, 0.0
    for fam in families:
        val = _family_value(f, fam, cache, theta0, term)
        if val >= best:
            best = val
            tail_terms = sum(lam * tails[cache.key(b)] / cache.norm(b)
                             for b, lam in zip(fam.balls, fam.weights) if lam > 0)
            best_tail = tail_terms / cache.aggregate(fam, theta0)
    return (best, best_tail) if return_tail else best


def _kernel_tail(f, ball, poly, e, dil):
    """Bound of the kernel integral of ``|P|`` over annuli that leave the grid box."""
    lo = np.asarray(f.origin)
    hi = lo + np.asarray(f.spacing) * (np.asarray(f.dims) - 1)
    c = np.asarray(ball.center)
    coef = np.abs(poly.coeffs)
    degs = np.array([sum(g) for g in poly.exponents])
    total = 0.0
    linv = np.linalg.inv(dil.normalizer)
    for k in range(0, 200):
        half = dil.half_widths(ball.level + k + 1)
        if np.all(c - half >= lo) and np.all(c + half <= hi):
            continue
        radius = np.linalg.norm(dil.power(k + 1) @ linv, 2)
        term = np.sum(coef * radius ** degs) * dil.b ** (1.0 - k * e)
        total += term
        if term < 1e-16 * max(total, 1e-300):
            break
    return float(total)


def family_scale(f, X, families, dil, s):
    """The family functional with every oscillation replaced by ``sup|f|``.

    A natural magnitude against which vanishing Campanato values are judged.
    """
    cache = _BallCache(f, X, dil)
    top = float(np.max(np.abs(f.values)))
    return max(_family_value(f, fam, cache, s, lambda b: top * oscillation(f, b, 0, 1, dil)[1])
               for fam in families)


def duality_pairing(f, g):
    """``L_g(f) = int f g`` by midpoint quadrature."""
    if not f.same_geometry(g):
        from .errors import GridMismatch

        raise GridMismatch("pairing needs a common grid")
    return float(np.sum(f.values * g.values).real * f.cell_volume)


def sample_families(dil, grid, X, levels, seed=0, lattice=4, pairs=True, random_count=8,
                    max_size=16, margin=0.25, min_samples=10):
    """Family pool for sampled Campanato and Carleson suprema.

    Produces single balls on a lattice of centres for each level, sibling
    pairs at adjacent levels, and random families of up to ``max_size``
    balls with weights drawn from ``{||1_B||_X, 1, |B|}``.  Every ball keeps
    a ``margin`` fraction of the box free on each side and holds at least
    ``min_samples`` grid samples.
    """
    rng = np.random.default_rng(seed)
    lo = np.asarray(grid.origin) + margin * np.asarray(grid.spacing) * np.asarray(grid.dims)
    hi = np.asarray(grid.origin) + (1 - margin) * np.asarray(grid.spacing) * np.asarray(grid.dims)

    def fits(c, l):
        half = dil.half_widths(l)
        if np.any(c - half < lo) or np.any(c + half > hi):
            return False
        return dil.b ** l / grid.cell_volume >= min_samples

    singles = []
    for l in levels:
        axes = [np.linspace(a, b, lattice) for a, b in zip(lo, hi)]
        for c in np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, dil.n):
            if fits(c, l):
                singles.append((tuple(c), int(l)))
    if not singles:
        raise DegenerateFamily("no sampled ball fits the grid")
    families = []
    for c, l in singles:
        families.append(BallFamily(((c, l, indicator_norm(X, DilatedBall(c, l), grid, dil)),)))
    if pairs:
        for c, l in singles:
            sib = (tuple(np.asarray(c) + 0.5 * dil.half_widths(l)), l - 1)
            if fits(np.asarray(sib[0]), sib[1]):
                families.append(BallFamily(((c, l, 1.0), (sib[0], sib[1], 1.0))))
    for _ in range(random_count):
        size = int(rng.integers(2, max_size + 1))
        picks = rng.choice(len(singles), size=min(size, len(singles)), replace=False)
        entries = []
        for i in picks:
            c, l = singles[i]
            mode = rng.integers(3)
            ball = DilatedBall(c, l)
            if mode == 0:
                w = indicator_norm(X, ball, grid, dil)
            elif mode == 1:
                w = 1.0
            else:
                w = dil.b ** l
            entries.append((c, l, w))
        families.append(BallFamily(tuple(entries)))
    return families
