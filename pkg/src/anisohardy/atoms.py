"""Anisotropic (X, q, d)-atoms and finite atomic combinations."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .campanato import BallFamily, ball_samples, campanato_norm, conjugate, duality_pairing, minimizing_polynomial
from .dilation import DilatedBall
from .errors import GridMismatch
from .gridfn import GridFunction
from .kernels import moment_exponents
from .spaces import eval_norm, indicator_norm

__all__ = [
    "DEFAULT_Q",
    "Atom",
    "AtomReport",
    "AtomicDecomposition",
    "make_atom",
    "validate_atom",
    "finite_atomic_norm",
    "assemble",
    "random_decomposition",
    "reconstruction_ratio",
    "decay_exponent",
    "atom_decay_ratio",
    "extremal_decomposition",
    "own_family",
    "duality_ratio",
]

# q must exceed max(p0, 1); p0 = 3 for L^2 with the recorded exponents
DEFAULT_Q = 4.0


@dataclass(frozen=True, eq=False)
class Atom:
    values: GridFunction
    ball: DilatedBall
    q: float
    d: int
    X: object
    dilation: object

    def size_bound(self):
        """``|B|^{1/q} ||1_B||_X^{-1}`` with the discrete measure of ``B``."""
        _, pts = ball_samples(self.values, self.ball, self.dilation)
        measure = len(pts) * self.values.cell_volume
        return measure ** (1.0 / self.q) / indicator_norm(self.X, self.ball, self.values, self.dilation)


def _lq(f, q):
    a = np.abs(f.values)
    if math.isinf(q):
        return float(a.max())
    return float((np.sum(a ** q) * f.cell_volume) ** (1.0 / q))


def make_atom(ball, q, d, X, seed=0, grid=None, dil=None, h=None):
    """Atom ``c (h - P^d_B h) 1_B`` saturating the size condition.

    ``h`` defaults to white noise on the ball samples (seeded).  Any grid
    function may be passed instead, e.g. the extremal
    ``sign(g - P g)|g - P g|^{q'-1}`` of a pairing.

    Raises
    ------
    RankDeficient
        If the ball is too small for the projection.
    """
    if not isinstance(ball, DilatedBall):
        ball = DilatedBall(*ball)
    index, pts = ball_samples(grid, ball, dil)
    if h is None:
        rng = np.random.default_rng(seed)
        vals = np.zeros(grid.dims)
        vals[index] = rng.normal(size=len(pts))
        h = grid.with_values(vals)
    poly = minimizing_polynomial(h, ball, d, dil)
    out = np.zeros(grid.dims)
    out[index] = h.values[index] - poly(pts)
    raw = grid.with_values(out)
    atom = Atom(raw, ball, float(q), int(d), X, dil)
    norm = _lq(raw, q)
    if norm == 0.0:
        return atom
    return Atom(raw * (atom.size_bound() / norm), ball, float(q), int(d), X, dil)


@dataclass
class AtomReport:
    support: bool
    size: bool
    moments: bool
    support_slack: float
    size_slack: float
    moment_slack: float

    @property
    def passed(self):
        return self.support and self.size and self.moments


def validate_atom(a, size_rtol=1e-10, moment_rtol=1e-9):
    """Check the support, size and moment conditions of an atom.

    Moments are taken about the ball centre and judged against
    ``||a||_1 diam(B)^{|gamma|}``.
    """
    f = a.values
    index, pts = ball_samples(f, a.ball, a.dilation)
    inside = np.zeros(f.dims, bool)
    inside[index] = True
    outside = float(np.max(np.abs(f.values[~inside]))) if np.any(~inside) else 0.0
    size = _lq(f, a.q)
    bound = a.size_bound()
    local = pts - np.asarray(a.ball.center)
    diam = 2.0 * float(np.max(a.dilation.half_widths(a.ball.level)))
    l1 = float(np.sum(np.abs(f.values)) * f.cell_volume)
    worst = 0.0
    for gam in moment_exponents(f.n, a.d):
        mom = abs(float(np.sum(f.values[index] * np.prod(local ** np.array(gam), axis=1)) * f.cell_volume))
        scale = l1 * diam ** sum(gam)
        worst = max(worst, mom / scale if scale > 0 else mom)
    return AtomReport(outside == 0.0, size <= bound * (1 + size_rtol), worst <= moment_rtol,
                      outside, size / bound if bound > 0 else math.inf, worst)


@dataclass
class AtomicDecomposition:
    weights: List[float]
    atoms: List[Atom] = field(default_factory=list)

    def __post_init__(self):
        if len(self.weights) != len(self.atoms) or not self.atoms:
            raise ValueError("a decomposition needs K >= 1 matching weights and atoms")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")

    def __len__(self):
        return len(self.atoms)


def finite_atomic_norm(dec, theta0=None):
    """``||{sum [lam_i 1_B_i / ||1_B_i||_X]^theta0}^{1/theta0}||_X`` for this decomposition.

    No infimum over other decompositions is taken, so this is an upper bound
    of the finite atomic quasi-norm.
    """
    first = dec.atoms[0]
    X = first.X
    theta0 = X.theta0 if theta0 is None else theta0
    grid = first.values
    total = np.zeros(grid.dims)
    for lam, a in zip(dec.weights, dec.atoms):
        if lam == 0:
            continue
        index, _ = ball_samples(grid, a.ball, a.dilation)
        total[index] += (lam / indicator_norm(X, a.ball, grid, a.dilation)) ** theta0
    if not np.any(total):
        return 0.0
    return eval_norm(grid.with_values(total ** (1.0 / theta0)), X)


def assemble(dec):
    """``f = sum lam_i a_i``."""
    first = dec.atoms[0].values
    out = np.zeros(first.dims)
    for lam, a in zip(dec.weights, dec.atoms):
        if not a.values.same_geometry(first):
            raise GridMismatch("atoms live on different grids")
        out += lam * a.values.values
    return first.with_values(out)


def random_decomposition(grid, dil, X, q=DEFAULT_Q, d=1, count=4, levels=(0, 1, 2), seed=0, margin=0.25):
    """Random atoms on balls kept ``margin`` away from the box edges, random weights."""
    rng = np.random.default_rng(seed)
    lo = np.asarray(grid.origin) + margin * np.asarray(grid.spacing) * np.asarray(grid.dims)
    hi = np.asarray(grid.origin) + (1 - margin) * np.asarray(grid.spacing) * np.asarray(grid.dims)
    weights, atoms = [], []
    while len(atoms) < count:
        level = int(rng.choice(levels))
        half = dil.half_widths(level)
        if np.any(hi - lo < 2 * half):
            continue
        c = tuple(rng.uniform(lo + half, hi - half))
        atoms.append(make_atom(DilatedBall(c, level), q, d, X, seed=int(rng.integers(1 << 31)), grid=grid, dil=dil))
        weights.append(float(rng.uniform(0.2, 2.0)))
    return AtomicDecomposition(weights, atoms)


def reconstruction_ratio(dec, dictionary, dil, krange=None):
    """``||M_N(f)||_X / finite_atomic_norm`` for ``f = assemble(dec)``."""
    from .maximal import grand_maximal

    f = assemble(dec)
    X = dec.atoms[0].X
    mn = eval_norm(grand_maximal(f, dictionary, dil, krange), X)
    return mn / finite_atomic_norm(dec)


def decay_exponent(dil, d):
    """``beta = (ln b / ln lambda_- + d + 1) ln lambda_- / ln b``."""
    lb, lm = math.log(dil.b), math.log(dil.lambda_minus)
    return (lb / lm + d + 1) * lm / lb


def atom_decay_ratio(a, dictionary, dil, krange=None):
    """``max M_N(a) / (||1_B||_X^{-1} [M(1_B)]^beta)`` outside ``A^tau B``."""
    from .maximal import grand_maximal, hl_maximal

    grid = a.values
    ind = np.zeros(grid.dims)
    index, _ = ball_samples(grid, a.ball, dil)
    ind[index] = 1.0
    big_index, _ = ball_samples(grid, DilatedBall(a.ball.center, a.ball.level + dil.tau), dil)
    far = np.ones(grid.dims, bool)
    far[big_index] = False
    if not np.any(far):
        return 0.0
    mn = grand_maximal(a.values, dictionary, dil, krange)
    m1 = hl_maximal(grid.with_values(ind), dil, krange).values
    bound = m1 ** decay_exponent(dil, a.d) / indicator_norm(a.X, a.ball, grid, dil)
    live = far & (bound > 0)
    return float(np.max(mn.values[live] / bound[live]))


def extremal_decomposition(g, dil, X, q=DEFAULT_Q, d=1, count=4, levels=(0, 1, 2), seed=0, margin=0.25):
    """Random balls carrying atoms built from ``sign(g - P g)|g - P g|^{q'-1}``.

    These atoms nearly attain Hoelder's inequality against ``g`` on their balls.
    """
    rng = np.random.default_rng(seed)
    grid = g
    qc = conjugate(q)
    lo = np.asarray(grid.origin) + margin * np.asarray(grid.spacing) * np.asarray(grid.dims)
    hi = np.asarray(grid.origin) + (1 - margin) * np.asarray(grid.spacing) * np.asarray(grid.dims)
    weights, atoms = [], []
    while len(atoms) < count:
        level = int(rng.choice(levels))
        half = dil.half_widths(level)
        if np.any(hi - lo < 2 * half):
            continue
        ball = DilatedBall(tuple(rng.uniform(lo + half, hi - half)), level)
        index, pts = ball_samples(grid, ball, dil)
        res = g.values[index] - minimizing_polynomial(g, ball, d, dil)(pts)
        vals = np.zeros(grid.dims)
        vals[index] = np.sign(res) * np.abs(res) ** (qc - 1)
        atoms.append(make_atom(ball, q, d, X, grid=grid, dil=dil, h=grid.with_values(vals)))
        weights.append(float(rng.uniform(0.2, 2.0)))
    return AtomicDecomposition(weights, atoms)


def own_family(dec):
    """The ball family ``{(B_i, lam_i)}`` of a decomposition."""
    return BallFamily(tuple((a.ball.center, a.ball.level, float(lam)) for lam, a in zip(dec.weights, dec.atoms)))


def duality_ratio(dec, g, families, dil):
    """``|int f g| / (finite_atomic_norm(f) * campanato_norm(g))`` for ``f = assemble(dec)``.

    The Campanato norm uses ``q' `` and ``s = theta0`` of the space, and
    the decomposition's own family is added to ``families``.
    """
    first = dec.atoms[0]
    X = first.X
    f = assemble(dec)
    camp = campanato_norm(g, X, conjugate(first.q), first.d, X.theta0, list(families) + [own_family(dec)], dil)
    den = finite_atomic_norm(dec) * camp
    if den == 0.0:
        return math.nan
    return abs(duality_pairing(f, g)) / den
