"""Quasi-norms of concrete ball quasi-Banach function spaces on grids.

Each space is an immutable descriptor carrying its parameters and the
exponents ``p_minus`` (Fefferman-Stein range), ``theta0`` and ``p0``
(powered-maximal range) recorded for it.  :func:`eval_norm` dispatches on the
descriptor type.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Tuple

import numpy as np
from scipy import optimize

from .dilation import DilatedBall
from .errors import NonConvergentBisection, NonPositiveWeight, UnsupportedSpace
from .gridfn import GridFunction, ball_mask, ball_sum, indicator

__all__ = [
    "OrliczFunction",
    "power_orlicz",
    "log_orlicz",
    "exp_orlicz",
    "SpaceSpec",
    "Lebesgue",
    "Weighted",
    "Lorentz",
    "Variable",
    "Mixed",
    "Morrey",
    "Orlicz",
    "OrliczSlice",
    "Convexified",
    "eval_norm",
    "rearrangement",
    "luxemburg_norm",
    "indicator_norm",
    "muckenhoupt_constant",
    "check_bqbfs_axioms",
    "convexify",
    "moment_degree",
    "grand_order",
    "check_orlicz_types",
    "morrey_witness",
]

THETA_FRACTION = 0.8


# --------------------------------------------------------------------------
# Orlicz functions
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OrliczFunction:
    """Orlicz function ``Phi`` with lower type ``lower`` and upper type ``upper``."""

    func: Callable[[np.ndarray], np.ndarray]
    lower: float
    upper: float
    name: str = "phi"

    def __call__(self, t):
        return self.func(np.asarray(t, dtype=float))


def power_orlicz(p):
    return OrliczFunction(lambda t: t ** p, float(p), float(p), f"t^{p:g}")


def log_orlicz(p):
    """``Phi(t) = t^p log(e + t)``: lower type ``p``, upper type ``p + 1``."""
    return OrliczFunction(lambda t: t ** p * np.log(np.e + t), float(p), float(p) + 1.0, f"t^{p:g}log(e+t)")


def exp_orlicz(p=1.0):
    """``Phi(t) = exp(t^p) - 1`` (no finite upper type)."""
    return OrliczFunction(lambda t: np.expm1(np.minimum(t ** p, 700.0)), float(p), math.inf, f"exp(t^{p:g})-1")


def check_orlicz_types(phi, samples=2000, seed=0):
    """Empirical constants ``sup Phi(st) / (s^q Phi(t))`` for the two type inequalities.

    Returns ``(C_lower, C_upper)``: lower type uses ``s in (0, 1]``, upper
    type ``s in [1, 100]``.  Also asserts the basic Orlicz axioms on the sample.
    """
    rng = np.random.default_rng(seed)
    t = np.exp(rng.uniform(-5, 5, samples))
    if phi(np.zeros(1))[0] != 0.0 or np.any(phi(t) <= 0):
        raise ValueError("Phi(0) must be 0 and Phi(t) > 0 for t > 0")
    ts = np.sort(t)
    if np.any(np.diff(phi(ts)) < 0):
        raise ValueError("Phi must be nondecreasing")
    s_lo = rng.uniform(1e-3, 1.0, samples)
    s_hi = rng.uniform(1.0, 100.0, samples)
    c_lo = np.max(phi(s_lo * t) / (s_lo ** phi.lower * phi(t)))
    c_hi = math.inf if math.isinf(phi.upper) else np.max(phi(s_hi * t) / (s_hi ** phi.upper * phi(t)))
    return float(c_lo), float(c_hi)


# --------------------------------------------------------------------------
# space descriptors
# --------------------------------------------------------------------------

class SpaceSpec:
    """Base class of space descriptors."""

    kind = "abstract"

    @property
    def p_minus(self) -> float:
        raise NotImplementedError

    @property
    def theta0(self) -> float:
        return THETA_FRACTION * min(self.p_minus, 1.0)

    @property
    def p0(self) -> float:
        raise NotImplementedError

    @property
    def r_plus(self) -> float:
        # supremum of admissible theta0
        return min(self.p_minus, 1.0)

    def describe(self):
        return self.kind


def _positive(*vals):
    for v in vals:
        if not (0 < v < math.inf):
            raise ValueError(f"exponent {v} must be positive and finite")


@dataclass(frozen=True, eq=False)
class Lebesgue(SpaceSpec):
    p: float
    kind = "lebesgue"

    def __post_init__(self):
        _positive(self.p)

    @property
    def p_minus(self):
        return self.p

    @property
    def p0(self):
        return 1.5 * self.p

    def describe(self):
        return f"L^{self.p:g}"


@dataclass(frozen=True, eq=False)
class Weighted(SpaceSpec):
    p: float
    w: GridFunction
    q_w: float = 1.0
    kind = "weighted"

    def __post_init__(self):
        _positive(self.p, self.q_w)
        if np.any(self.w.values <= 0):
            raise NonPositiveWeight("weight must be positive")

    @property
    def p_minus(self):
        return self.p / self.q_w

    @property
    def p0(self):
        return self.p

    def describe(self):
        return f"L^{self.p:g}_w"


@dataclass(frozen=True, eq=False)
class Lorentz(SpaceSpec):
    p: float
    q: float
    kind = "lorentz"

    def __post_init__(self):
        if not (0 < self.p < math.inf and 0 < self.q <= math.inf):
            raise ValueError("Lorentz needs 0 < p < inf and 0 < q <= inf")

    @property
    def p_minus(self):
        return self.p

    @property
    def p0(self):
        return 1.5 * self.p

    def describe(self):
        return f"L^({self.p:g},{self.q:g})"


@dataclass(frozen=True, eq=False)
class Variable(SpaceSpec):
    pfun: GridFunction
    kind = "variable"

    def __post_init__(self):
        v = self.pfun.values
        if not (np.all(np.isfinite(v)) and v.min() > 0):
            raise ValueError("variable exponent must satisfy 0 < ess inf p <= ess sup p < inf")

    @property
    def p_minus(self):
        return float(self.pfun.values.min())

    @property
    def p_plus(self):
        return float(self.pfun.values.max())

    @property
    def p0(self):
        return 1.5 * self.p_plus

    def describe(self):
        return f"L^p(.) [{self.p_minus:g},{self.p_plus:g}]"


@dataclass(frozen=True, eq=False)
class Mixed(SpaceSpec):
    p_vec: Tuple[float, ...]
    kind = "mixed"

    def __post_init__(self):
        object.__setattr__(self, "p_vec", tuple(float(p) for p in self.p_vec))
        _positive(*self.p_vec)

    @property
    def p_minus(self):
        return min(self.p_vec)

    @property
    def p0(self):
        return 1.5 * max(self.p_vec)

    def describe(self):
        return "L^(" + ",".join(f"{p:g}" for p in self.p_vec) + ")"


@dataclass(frozen=True, eq=False)
class Morrey(SpaceSpec):
    """Morrey space ``sup_B |B|^{1/p - 1/q} ||f||_{L^q(B)}`` with ``0 < q <= p``."""

    p: float
    q: float
    dilation: object
    kind = "morrey"

    def __post_init__(self):
        _positive(self.p, self.q)
        if self.q > self.p:
            raise ValueError("Morrey needs 0 < q <= p < inf")

    @property
    def p_minus(self):
        return self.q

    @property
    def p0(self):
        return 1.5 * self.p

    def describe(self):
        return f"M^{self.p:g}_{self.q:g}"


@dataclass(frozen=True, eq=False)
class Orlicz(SpaceSpec):
    phi: OrliczFunction
    kind = "orlicz"

    @property
    def p_minus(self):
        return self.phi.lower

    @property
    def p0(self):
        return 1.5 * max(self.phi.upper, 1.0)

    def describe(self):
        return f"L^Phi[{self.phi.name}]"


@dataclass(frozen=True, eq=False)
class OrliczSlice(SpaceSpec):
    q: float
    phi: OrliczFunction
    ell: int
    dilation: object
    coarsen: int = 4
    kind = "orlicz-slice"

    def __post_init__(self):
        _positive(self.q)

    @property
    def p_minus(self):
        return min(self.phi.lower, self.q)

    @property
    def p0(self):
        return 1.5 * max(self.phi.upper, self.q)

    def describe(self):
        return f"(E^{self.q:g}_Phi)_{self.ell}[{self.phi.name}]"


@dataclass(frozen=True, eq=False)
class Convexified(SpaceSpec):
    """``X^s`` with ``||f||_{X^s} = || |f|^s ||_X^{1/s}``."""

    base: SpaceSpec
    power: float
    kind = "convexified"

    def __post_init__(self):
        _positive(self.power)

    @property
    def p_minus(self):
        return self.power * self.base.p_minus

    @property
    def p0(self):
        return self.power * self.base.p0

    def describe(self):
        return f"({self.base.describe()})^{self.power:g}"


def moment_degree(space, d):
    """``d_{X,A} = floor((1/theta0 - 1) ln b / ln lambda_-)``."""
    return int(math.floor((1.0 / space.theta0 - 1.0) * math.log(d.b) / math.log(d.lambda_minus)))


def grand_order(space, d):
    """``N_{X,A} = d_{X,A} + 2``."""
    return moment_degree(space, d) + 2


# --------------------------------------------------------------------------
# norms
# --------------------------------------------------------------------------

class Rearrangement(NamedTuple):
    """Step function ``f*``: value ``heights[i]`` on ``[t[i], t[i+1])``."""

    heights: np.ndarray
    t: np.ndarray

    def __call__(self, s):
        idx = np.searchsorted(self.t, np.asarray(s, dtype=float), side="right") - 1
        idx = np.clip(idx, 0, len(self.heights))
        h = np.append(self.heights, 0.0)
        return np.where(np.asarray(s) < self.t[-1], h[np.minimum(idx, len(self.heights))], 0.0)


def rearrangement(f, weights=None):
    """Non-increasing rearrangement of ``|f|`` (each sample carries its cell measure)."""
    vals = np.abs(np.asarray(f.values)).ravel()
    cell = np.full(vals.shape, f.cell_volume) if weights is None else np.asarray(weights).ravel()
    order = np.argsort(-vals, kind="stable")
    heights = vals[order]
    t = np.concatenate([[0.0], np.cumsum(cell[order])])
    return Rearrangement(heights, t)


def _lorentz(f, p, q):
    r = rearrangement(f)
    a, t = r.heights, r.t
    if math.isinf(q):
        return float(np.max(a * t[1:] ** (1.0 / p))) if a.size else 0.0
    # (q/p) int (t^{1/p} f*)^q dt/t over each step, in closed form
    total = np.sum(a ** q * (t[1:] ** (q / p) - t[:-1] ** (q / p)))
    return float(total ** (1.0 / q))


def luxemburg_norm(modular, scale, maxiter=200, rtol=1e-10):
    """``inf{lam > 0 : modular(lam) <= 1}`` by root finding on ``log lam``.

    ``modular`` must be nonincreasing in ``lam``.  The bracket is
    ``[1e-12, 1e12] * scale``.

    Raises
    ------
    NonConvergentBisection
        If the bracket does not contain the root or the solver fails.
    """
    if scale <= 0:
        return 0.0
    lo, hi = math.log(scale) - 12 * math.log(10), math.log(scale) + 12 * math.log(10)
    g = lambda s: math.log(max(modular(math.exp(s)), 1e-300))
    glo, ghi = g(lo), g(hi)
    if glo < 0 or ghi > 0:
        raise NonConvergentBisection("Luxemburg modular does not cross 1 inside the bracket")
    try:
        root = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=max(rtol * 1e-3, 4.5e-16), maxiter=maxiter)
    except (RuntimeError, ValueError) as exc:
        raise NonConvergentBisection(str(exc)) from exc
    return math.exp(root)


def _luxemburg_vector(modular, scale, iters=200, rtol=1e-10):
    """Vectorized bisection in ``log lam`` for many independent modulars."""
    scale = np.asarray(scale, dtype=float)
    out = np.zeros_like(scale)
    # subnormal scales would underflow exp(log lam); treat them as zero
    live = scale > 1e-250
    if not np.any(live):
        return out
    lo = np.log(scale[live]) - 12 * math.log(10)
    hi = np.log(scale[live]) + 12 * math.log(10)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        small = modular(np.exp(mid), live) > 1.0
        lo = np.where(small, mid, lo)
        hi = np.where(small, hi, mid)
        if np.all(hi - lo < rtol):
            break
    else:
        raise NonConvergentBisection("vectorized Luxemburg bisection did not converge")
    out[live] = np.exp(0.5 * (lo + hi))
    return out


def _morrey(f, X):
    d = X.dilation
    vals = np.abs(f.values) ** X.q
    if not np.any(vals):
        return 0.0
    cell = f.cell_volume
    lo, hi = _morrey_levels(d, f)
    best = 0.0
    for k in range(lo, hi + 1):
        bk = d.b ** k
        sums = ball_sum(vals, d, k, f.spacing)
        if bk >= cell:
            weight = cell
        else:
            weight = bk / ball_mask(d, k, f.spacing).sum()
        peak = float(np.max(sums)) * weight
        best = max(best, bk ** (1.0 / X.p - 1.0 / X.q) * max(peak, 0.0) ** (1.0 / X.q))
    return best


def _morrey_levels(d, f):
    cell = f.cell_volume
    extent = float(np.prod([m * h for m, h in zip(f.dims, f.spacing)]))
    lo = int(math.floor(math.log(cell) / math.log(d.b) + 1e-9))
    # a ball covering the whole grid has volume at most b^{n+1} times the box
    hi = int(math.ceil(math.log(extent) / math.log(d.b))) + 2 * d.n + 2
    return lo, hi


def _orlicz_slice(f, X):
    d = X.dilation
    mask = ball_mask(d, X.ell, f.spacing, tuple(m - 1 for m in f.dims))
    reach = [s // 2 for s in mask.shape]
    offsets = np.argwhere(mask) - np.array(reach)
    step = max(1, int(X.coarsen))
    centres = np.stack(np.meshgrid(*[np.arange(0, m, step) for m in f.dims], indexing="ij"), -1).reshape(-1, f.n)
    absf = np.abs(f.values)
    padded = np.pad(absf, [(r, r) for r in reach])
    cell = f.cell_volume
    out = np.zeros(len(centres))
    phi = X.phi
    ind_norm = luxemburg_norm(lambda lam: len(offsets) * cell * float(phi(np.array([1.0 / lam]))[0]), 1.0)
    for start in range(0, len(centres), 512):
        c = centres[start:start + 512]
        idx = c[:, None, :] + offsets[None, :, :] + np.array(reach)
        local = padded[tuple(idx[..., i] for i in range(f.n))]
        scale = local.max(axis=1)
        modular = lambda lam, live: cell * phi(local[live] / lam[:, None]).sum(axis=1)
        out[start:start + 512] = _luxemburg_vector(modular, scale)
    weight = cell * step ** f.n
    return float((np.sum((out / ind_norm) ** X.q) * weight) ** (1.0 / X.q))


def _mixed(f, X):
    vals = np.abs(f.values)
    if len(X.p_vec) != f.n:
        raise UnsupportedSpace(f"mixed exponent has {len(X.p_vec)} entries for a {f.n}-D grid")
    # integrate x_1 first (axis 0), then x_2, ...
    for p, h in zip(X.p_vec, f.spacing):
        vals = (np.sum(vals ** p, axis=0) * h) ** (1.0 / p)
    return float(vals)


def eval_norm(f, X):
    """Quasi-norm ``||f||_X`` of a grid function.

    Raises
    ------
    UnsupportedSpace
        For an unknown descriptor.
    NonConvergentBisection
        If a Luxemburg-type norm cannot be bracketed.
    """
    if not np.all(np.isfinite(f.values)):
        raise ValueError("f must be finite-valued")
    absf = np.abs(f.values)
    cell = f.cell_volume
    if isinstance(X, Lebesgue):
        return float((np.sum(absf ** X.p) * cell) ** (1.0 / X.p))
    if isinstance(X, Weighted):
        if not X.w.same_geometry(f):
            from .errors import GridMismatch

            raise GridMismatch("weight lives on a different grid")
        return float((np.sum(absf ** X.p * X.w.values) * cell) ** (1.0 / X.p))
    if isinstance(X, Lorentz):
        return _lorentz(f, X.p, X.q)
    if isinstance(X, Variable):
        pv = X.pfun.values
        if not np.any(absf):
            return 0.0
        return luxemburg_norm(lambda lam: float(np.sum((absf / lam) ** pv) * cell), float(absf.max()))
    if isinstance(X, Mixed):
        return _mixed(f, X)
    if isinstance(X, Morrey):
        return _morrey(f, X)
    if isinstance(X, Orlicz):
        if not np.any(absf):
            return 0.0
        return luxemburg_norm(lambda lam: float(np.sum(X.phi(absf / lam)) * cell), float(absf.max()))
    if isinstance(X, OrliczSlice):
        return _orlicz_slice(f, X)
    if isinstance(X, Convexified):
        inner = eval_norm(f.with_values(absf ** X.power), X.base)
        return float(inner ** (1.0 / X.power))
    raise UnsupportedSpace(f"no norm for {type(X).__name__}")


def convexify(X, p):
    """The ``p``-convexification ``X^p``."""
    _positive(p)
    if p == 1:
        return X
    if isinstance(X, Lebesgue):
        return Lebesgue(X.p * p)
    if isinstance(X, Lorentz):
        return Lorentz(X.p * p, X.q * p)
    if isinstance(X, Morrey):
        return Morrey(X.p * p, X.q * p, X.dilation)
    if isinstance(X, Mixed):
        return Mixed(tuple(q * p for q in X.p_vec))
    if isinstance(X, Convexified):
        return convexify(X.base, X.power * p)
    return Convexified(X, float(p))


_INDICATOR_CACHE = {}


def indicator_norm(X, ball, grid, d):
    """``||1_B||_X`` evaluated on ``grid`` (memoized per space instance)."""
    if not isinstance(ball, DilatedBall):
        ball = DilatedBall(*ball)
    key = (id(X), id(d), ball.center, ball.level, grid.dims, grid.spacing, grid.origin)
    hit = _INDICATOR_CACHE.get(key)
    if hit is not None and hit[0] is X and hit[1] is d:
        return hit[2]
    val = eval_norm(indicator(grid, d, ball), X)
    if len(_INDICATOR_CACHE) > 20000:
        _INDICATOR_CACHE.clear()
    _INDICATOR_CACHE[key] = (X, d, val)
    return val


# --------------------------------------------------------------------------
# weights and axioms
# --------------------------------------------------------------------------

def muckenhoupt_constant(w, p, d, balls):
    """Largest sampled ``A_p`` product over the given balls.

    For ``p > 1`` this is ``(avg w)(avg w^{-1/(p-1)})^{p-1}``; for ``p = 1``
    it is ``avg w / ess inf_B w``.  Balls without samples are skipped.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    vals = np.asarray(w.values, dtype=float)
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise NonPositiveWeight("weight must be positive and finite on the grid")
    pts = w.points()
    best = 0.0
    for ball in balls:
        if not isinstance(ball, DilatedBall):
            ball = DilatedBall(*ball)
        inside = d.contains(pts, ball.center, ball.level)
        if not inside.any():
            continue
        local = vals[inside]
        if p == 1:
            val = local.mean() / local.min()
        else:
            val = local.mean() * np.mean(local ** (-1.0 / (p - 1))) ** (p - 1)
        best = max(best, float(val))
    return best


@dataclass
class AxiomReport:
    positivity: bool
    lattice: bool
    fatou: bool
    finite_indicators: bool
    violations: list = field(default_factory=list)

    @property
    def passed(self):
        return self.positivity and self.lattice and self.fatou and self.finite_indicators


def check_bqbfs_axioms(X, probes, d=None, balls=(), steps=8, rtol=1e-8):
    """Check the four ball quasi-Banach function space axioms on probe functions.

    (i) zero norm iff zero; (ii) lattice monotonicity under ``|g| <= |f|``;
    (iii) Fatou: norms of monotone truncations increase to the norm of the
    limit; (iv) finite norms of the indicators of the sampled balls.
    """
    viol = []
    pos = lat = fat = fin = True
    for i, f in enumerate(probes):
        zero = f.with_values(np.zeros(f.dims))
        if eval_norm(zero, X) != 0.0:
            pos = False
            viol.append(f"probe {i}: zero function has nonzero norm")
        nf = eval_norm(f, X)
        if np.any(f.values) and not nf > 0:
            pos = False
            viol.append(f"probe {i}: nonzero function has zero norm")
        g = f.with_values(0.5 * np.abs(f.values) * (np.arange(f.values.size).reshape(f.dims) % 2))
        if eval_norm(g, X) > nf * (1 + rtol):
            lat = False
            viol.append(f"probe {i}: lattice property fails")
        absf = np.abs(f.values)
        top = absf.max() if absf.size else 0.0
        prev = 0.0
        for j in range(1, steps + 1):
            trunc = f.with_values(np.minimum(absf, top * j / steps))
            cur = eval_norm(trunc, X)
            if cur < prev * (1 - rtol):
                fat = False
                viol.append(f"probe {i}: truncation norms decrease at step {j}")
            prev = cur
        if abs(prev - eval_norm(f.abs(), X)) > rtol * max(prev, 1e-300):
            fat = False
            viol.append(f"probe {i}: truncation limit misses the norm")
    if balls:
        grid = probes[0] if probes else None
        for ball in balls:
            val = indicator_norm(X, ball, grid, d)
            if not np.isfinite(val):
                fin = False
                viol.append(f"ball {ball}: infinite indicator norm")
    return AxiomReport(pos, lat, fat, fin, viol)


def morrey_witness(top=20, p=256.0, gap=0.5):
    """A sparse 1-D family showing that Morrey norms are not absolutely continuous.

    Uses ``A = [[2]]`` and unit spacing.  The function is a sum of plateaus
    ``b^{-k/p} 1_{D_k}`` on disjoint intervals ``D_k`` of length ``2^k``,
    ``k = top, ..., 0``, separated by gaps of relative size ``gap``.  Each
    plateau alone has Morrey(``p``, 1) norm one, so dropping the large
    plateaus barely moves the Morrey norm while the ``L^2`` norm collapses.

    Returns
    -------
    f : GridFunction
    sets : list of ndarray
        Nested boolean masks ``E_0 ⊃ E_1 ⊃ ...``; ``E_j`` keeps the plateaus
        of length at most ``2^{top - j}``.
    space : Morrey
    """
    from .dilation import build_dilation

    d = build_dilation(np.array([[2.0]]))
    sizes = [2 ** k for k in range(top, -1, -1)]
    gaps = [max(2, int(gap * s)) for s in sizes]
    total = sum(sizes) + sum(gaps) + gaps[0]
    vals = np.zeros(total)
    owner = np.full(total, -1)
    pos = gaps[0]
    for i, (s, g) in enumerate(zip(sizes, gaps)):
        vals[pos:pos + s] = float(s) ** (-1.0 / p)
        owner[pos:pos + s] = i
        pos += s + g
    f = GridFunction(vals, (1.0,), (0.0,))
    sets = [owner >= j for j in range(len(sizes))]
    return f, sets, Morrey(p, 1.0, d)
