"""Tents, cones and Carleson measures over the upper space ``R^n x Z``.

A point ``(y, k)`` of the upper space lies in the tent of a ball ``B`` when
``y + B_k`` is contained in ``B``.  Functions on the upper space are stored
as :class:`LevelField` objects: one grid slice per level of a finite window,
with counting measure in ``k``.

On the grid, containment is decided sample-wise: ``y + B_k`` lies in a set
``E`` when every grid sample of ``y + B_k`` belongs to ``E``.  Samples of
``y + B_k`` that fall off the grid count as outside.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .campanato import _BallCache, _family_value, _ball_box, ball_samples, campanato_norm
from .dilation import DilatedBall
from .errors import CoverageFailure, GridMismatch
from .gridfn import _ball_count, ball_average, ball_max_filter, ball_sum, load, store
from .lpaley import level_responses
from .maximal import hl_maximal, level_window
from .spaces import eval_norm, indicator_norm

__all__ = [
    "LevelField",
    "TentAtom",
    "TentReport",
    "tent_membership",
    "grid_tent",
    "area_functional",
    "tent_norm",
    "tent_masses",
    "carleson_norm",
    "induced_measure",
    "validate_tent_atom",
    "TentDecomposition",
    "tent_atomic_decomposition",
    "aggregation_ratio",
    "CarlesonTable",
    "carleson_campanato_experiment",
]

INDEX_NAME = "index.txt"


# --------------------------------------------------------------------------
# level fields
# --------------------------------------------------------------------------

@dataclass
class LevelField:
    """Slices ``F(., k)`` for the levels ``k`` of a finite window."""

    slices: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.slices:
            raise ValueError("a level field needs at least one slice")
        self.slices = {int(k): v for k, v in sorted(self.slices.items())}
        first = self.grid
        for v in self.slices.values():
            if not v.same_geometry(first):
                raise GridMismatch("level slices live on different grids")

    @property
    def grid(self):
        return next(iter(self.slices.values()))

    @property
    def levels(self):
        return list(self.slices)

    def __getitem__(self, k):
        return self.slices[k]

    def items(self):
        return self.slices.items()

    def map(self, fn):
        return LevelField({k: v.with_values(fn(v.values)) for k, v in self.slices.items()})

    def mass(self):
        """``sum_k int |F(y, k)| dy``."""
        return float(sum(np.abs(v.values).sum() for v in self.slices.values()) * self.grid.cell_volume)

    def store(self, directory):
        """Write one AGF1 file per slice plus an index of ``level filename`` lines."""
        os.makedirs(directory, exist_ok=True)
        lines = []
        for k, v in self.slices.items():
            name = f"level_{k:+d}.agf"
            store(v, os.path.join(directory, name))
            lines.append(f"{k} {name}")
        with open(os.path.join(directory, INDEX_NAME), "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, directory):
        slices = {}
        with open(os.path.join(directory, INDEX_NAME)) as fh:
            for line in fh:
                if line.strip():
                    k, name = line.split()
                    slices[int(k)] = load(os.path.join(directory, name))
        return cls(slices)


# --------------------------------------------------------------------------
# tents
# --------------------------------------------------------------------------

def _sphere(n, count):
    if n == 2:
        t = np.linspace(0, 2 * np.pi, count, endpoint=False)
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    # Fibonacci points on S^2; higher dimensions use random directions
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        phi = np.pi * (1 + 5 ** 0.5) * i
        r = np.sqrt(1 - z * z)
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    v = np.random.default_rng(0).normal(size=(count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def tent_membership(d, B, y, k):
    """Whether ``y + B_k`` is contained in the ball ``B``.

    In the coordinates where ``B`` is the unit ball, ``y + B_k`` becomes an
    ellipsoid ``w + M(unit ball)``.  It sits inside the unit ball iff its
    support function ``theta . w + |M^T theta|`` stays below one.
    """
    if not isinstance(B, DilatedBall):
        B = DilatedBall(*B)
    k = int(k)
    if k > B.level:
        return False
    L = d.normalizer
    T = L @ d.power(-B.level)
    w = T @ (np.asarray(y, dtype=float) - np.asarray(B.center))
    M = T @ d.power(k) @ np.linalg.inv(L)
    tol = 1e-12
    if not np.any(w):
        return bool(np.linalg.norm(M, 2) <= 1 + tol)
    if d.n == 1:
        return bool(abs(w[0]) + abs(M[0, 0]) <= 1 + tol)

    def support(theta):
        return theta @ w + np.linalg.norm(theta @ M, axis=-1)

    dirs = _sphere(d.n, 2048)
    vals = support(dirs)
    best = int(np.argmax(vals))
    if d.n == 2:
        t0 = 2 * np.pi * best / len(dirs)
        step = 2 * np.pi / len(dirs)
        res = optimize.minimize_scalar(lambda t: -support(np.array([math.cos(t), math.sin(t)])),
                                       bounds=(t0 - step, t0 + step), method="bounded",
                                       options={"xatol": 1e-12})
        top = max(vals[best], -res.fun)
    else:
        res = optimize.minimize(lambda v: -support(v / np.linalg.norm(v)), dirs[best], method="Nelder-Mead",
                                options={"xatol": 1e-12, "fatol": 1e-14})
        top = max(vals[best], -res.fun)
    return bool(top <= 1 + tol)


def _erode(mask, d, k, spacing):
    """Samples ``y`` with every sample of ``y + B_k`` in ``mask``."""
    if not np.any(mask):
        return np.zeros(mask.shape, bool)
    count = _ball_count(d, k, spacing)
    if count > mask.sum():
        return np.zeros(mask.shape, bool)
    if count == 1:
        return mask.copy()
    hits = ball_sum(mask.astype(float), d, k, spacing)
    return mask & (hits >= count - 0.5)


def _dilate(mask, d, k, spacing):
    """Union of ``y + B_k`` over the samples ``y`` of ``mask``."""
    if not np.any(mask):
        return mask.copy()
    return ball_max_filter(mask.astype(float), d, k, spacing) > 0.5


def grid_tent(grid, ball, k, d):
    """Boolean array of samples ``y`` with ``(y, k)`` in the tent of ``ball``."""
    if not isinstance(ball, DilatedBall):
        ball = DilatedBall(*ball)
    out = np.zeros(grid.dims, bool)
    box = _ball_box(grid, ball, d)
    index, _ = ball_samples(grid, ball, d)
    if len(index[0]) == 0:
        return out
    local = np.zeros(tuple(s.stop - s.start for s in box), bool)
    local[tuple(ix - s.start for ix, s in zip(index, box))] = True
    out[box] = _erode(local, d, k, grid.spacing)
    return out


# --------------------------------------------------------------------------
# area functional and tent norms
# --------------------------------------------------------------------------

def area_functional(F, d):
    """``A(F)(x) = [sum_l b^{-l} int_{x+B_l} |F(y,l)|^2 dy]^{1/2}``.

    The ball integral is normalised by the sample count of ``B_l`` (like the
    Lusin area function), so ``||A(F)||_2^2 = sum_l ||F(., l)||_2^2`` holds
    exactly away from the grid edges.
    """
    g = F.grid
    total = np.zeros(g.dims)
    live = np.zeros(g.dims, bool)
    for k, v in F.items():
        sq = np.abs(v.values) ** 2
        if not np.any(sq):
            continue
        total += ball_average(sq, d, k, g.spacing)
        live |= _dilate(sq > 0, d, k, g.spacing)
    # fft round-off leaves tiny values off the exact support
    total = np.where(live, np.maximum(total, 0.0), 0.0)
    return g.with_values(np.sqrt(total))


def tent_norm(F, X, d):
    """``||F||_{T_X} = ||A(F)||_X``."""
    return eval_norm(area_functional(F, d), X)


def tent_masses(dmu, balls, d):
    """``int_{tent(B)} |dmu|`` for each ball."""
    g = dmu.grid
    out = []
    for ball in balls:
        total = 0.0
        for k, v in dmu.items():
            t = grid_tent(g, ball, k, d)
            if np.any(t):
                total += float(np.abs(v.values[t]).sum())
        out.append(total * g.cell_volume)
    return out


def carleson_norm(dmu, X, s, families, d):
    """Sampled ``X``-Carleson norm of a nonnegative level field.

    Each family contributes
    ``||{sum (lam_i/||1_B_i||_X)^s 1_B_i}^{1/s}||_X^{-1}
    sum_j lam_j |B_j|^{1/2} ||1_B_j||_X^{-1} [int_{tent(B_j)} |dmu|]^{1/2}``
    with ``|B|`` the discrete measure; the maximum over families is returned.

    Raises
    ------
    DegenerateFamily
        If a family has no positive weight.
    """
    g = dmu.grid
    cache = _BallCache(g, X, d)
    memo = {}

    def term(ball):
        key = cache.key(ball)
        if key not in memo:
            index, _ = ball_samples(g, ball, d)
            measure = len(index[0]) * g.cell_volume
            memo[key] = math.sqrt(measure * tent_masses(dmu, [ball], d)[0])
        return memo[key]

    best = 0.0
    for fam in families:
        best = max(best, _family_value(g, fam, cache, s, term))
    return best


def induced_measure(h, pair, krange, d=None):
    """Slices ``|phi_l * h|^2`` over ``krange`` (levels beyond the grid are skipped)."""
    resp = level_responses(h, pair, krange, d)
    return LevelField({k: h.with_values(np.abs(v) ** 2) for k, v in resp.items()})


# --------------------------------------------------------------------------
# tent atoms
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TentAtom:
    """Level field ``a`` supported in the tent of ``ball``.

    ``kappa >= 1`` is the constant the raw piece was divided by to meet the
    size condition; ``cover_level`` is the level of the cover ball before it
    was enlarged to contain the support.
    """

    a: LevelField
    ball: DilatedBall
    p: float
    X: object
    dilation: object
    kappa: float = 1.0
    cover_level: int = 0

    def size_bound(self):
        """``|B|^{1/p} / ||1_B||_X`` with the discrete measure of ``B``."""
        g = self.a.grid
        index, _ = ball_samples(g, self.ball, self.dilation)
        measure = len(index[0]) * g.cell_volume
        return measure ** (1.0 / self.p) / indicator_norm(self.X, self.ball, g, self.dilation)


@dataclass
class TentReport:
    support: bool
    size: bool
    size_slack: float

    @property
    def passed(self):
        return self.support and self.size


def validate_tent_atom(atom, p=None, rtol=1e-10):
    """Check ``supp a`` lies in the tent and ``||A(a)||_{L^p} <= |B|^{1/p}/||1_B||_X``."""
    p = atom.p if p is None else p
    d = atom.dilation
    g = atom.a.grid
    support = True
    for k, v in atom.a.items():
        nz = v.values != 0
        if np.any(nz) and np.any(nz & ~grid_tent(g, atom.ball, k, d)):
            support = False
    area = area_functional(atom.a, d)
    size = float((np.sum(area.values ** p) * g.cell_volume) ** (1.0 / p))
    bound = TentAtom(atom.a, atom.ball, p, atom.X, d).size_bound()
    return TentReport(support, size <= bound * (1 + rtol), size / bound)


# --------------------------------------------------------------------------
# tent atomic decomposition
# --------------------------------------------------------------------------

@dataclass
class TentDecomposition:
    weights: list
    atoms: list
    residual: float
    levels: list
    max_kappa: float

    def assemble(self):
        """``sum lam_{j,k} A_{j,k}``."""
        first = self.atoms[0].a
        out = {k: np.zeros(first.grid.dims, dtype=np.result_type(*[v.values for v in first.slices.values()]))
               for k in first.levels}
        for lam, atom in zip(self.weights, self.atoms):
            for k, v in atom.a.items():
                out[k] = out[k] + lam * v.values
        return LevelField({k: first.grid.with_values(v) for k, v in out.items()})


def _greedy_cover(region, d, levels, spacing):
    """Disjointified cover of ``region`` by balls centred at its samples.

    Repeatedly picks the uncovered sample admitting the largest ball inside
    ``region`` and removes that ball from the uncovered set.  Returns the
    label array (``-1`` off the region) and ``[(center_index, level)]``.
    """
    inscribed = np.full(region.shape, -(1 << 30))
    for k in levels:
        inside = _erode(region, d, k, spacing)
        inscribed[inside] = k
    labels = np.full(region.shape, -1)
    balls = []
    uncovered = region.copy()
    while np.any(uncovered):
        cand = np.where(uncovered, inscribed, -(1 << 31))
        flat = int(np.argmax(cand))
        idx = np.unravel_index(flat, region.shape)
        level = int(inscribed[idx])
        piece = np.zeros(region.shape, bool)
        piece[idx] = True
        piece = _dilate(piece, d, level, spacing) & uncovered
        labels[piece] = len(balls)
        balls.append((idx, level))
        uncovered &= ~piece
    return labels, balls


def _enclosing_level(grid, center, start, need, d):
    level = start
    while True:
        index, _ = ball_samples(grid, DilatedBall(center, level), d)
        inside = np.zeros(grid.dims, bool)
        inside[index] = True
        if not np.any(need & ~inside):
            return level
        level += 1


def tent_atomic_decomposition(F, X, theta0=None, gamma=0.5, d=None, p=2.0, target=1e-8):
    """Decompose ``F = sum lam_{j,k} A_{j,k}`` into tent atoms.

    ``O_j = {A(F) > 2^j}`` and ``(O_j)* = {M(1_{O_j}) > 1 - gamma}``.  Each
    ``(O_j)*`` is covered greedily by disjointified balls ``B_{j,k}``; a point
    ``(y, l)`` of the support goes to the largest ``j`` with ``(y, l)`` in the
    tent of ``(O_j)*`` and to the cover piece containing ``y``.  The cover
    ball is enlarged until its tent holds all points of the piece, and the
    piece is divided by ``kappa >= 1`` when needed to meet the ``T_2^p`` size
    condition.

    Returns a :class:`TentDecomposition`.  ``theta0`` is accepted for
    symmetry with :func:`aggregation_ratio` and is not needed here.

    Raises
    ------
    CoverageFailure
        If the uncovered mass exceeds ``target`` times the total mass.
    """
    if d is None:
        raise ValueError("a dilation is required")
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    g = F.grid
    sp = g.spacing
    total_mass = F.mass()
    if total_mass == 0:
        raise CoverageFailure("F vanishes identically")
    area = area_functional(F, d).values
    pos = area[area > 0]
    jlo = int(math.floor(math.log2(pos.min())))
    jhi = int(math.floor(math.log2(pos.max())))
    supp = {k: v.values != 0 for k, v in F.items()}
    owner = {k: np.full(g.dims, jlo - 1) for k in F.levels}
    # the lowest level has single-sample balls, so every sample gets a ball
    cover_levels = range(min(level_window(d, g).start, min(F.levels)), max(F.levels) + d.n + 2)
    tents, covers = {}, {}
    for j in range(jlo, jhi + 1):
        ind = g.with_values((area > 2.0 ** j).astype(float))
        star = hl_maximal(ind, d).values > 1 - gamma
        if not np.any(star):
            continue
        tents[j] = {k: _erode(star, d, k, sp) for k in F.levels}
        for k in F.levels:
            owner[k][supp[k] & tents[j][k]] = j
        covers[j] = (star, _greedy_cover(star, d, cover_levels, sp))
    residual = sum(float(np.abs(F[k].values[supp[k] & (owner[k] < jlo)]).sum()) for k in F.levels)
    residual *= g.cell_volume
    if residual > target * total_mass:
        raise CoverageFailure(f"uncovered mass {residual:.3g} of {total_mass:.3g}")
    weights, atoms = [], []
    max_kappa = 1.0
    js = []
    for j, (star, (labels, balls)) in covers.items():
        for i, (idx, level) in enumerate(balls):
            pieces = {k: supp[k] & (owner[k] == j) & (labels == i) for k in F.levels}
            if not any(np.any(m) for m in pieces.values()):
                continue
            need = np.zeros(g.dims, bool)
            for k, m in pieces.items():
                if np.any(m):
                    need |= _dilate(m, d, k, sp)
            center = tuple(o + h * ix for o, h, ix in zip(g.origin, sp, idx))
            ball = DilatedBall(center, _enclosing_level(g, center, level, need, d))
            norm1 = indicator_norm(X, ball, g, d)
            scale = 2.0 ** -j / norm1
            raw = LevelField({k: g.with_values(np.where(pieces[k], F[k].values, 0) * scale) for k in F.levels})
            probe = TentAtom(raw, ball, p, X, d)
            ratio = validate_tent_atom(probe).size_slack
            kappa = max(1.0, ratio * (1 + 1e-12))
            a = raw if kappa == 1.0 else raw.map(lambda v, c=kappa: v / c)
            atoms.append(TentAtom(a, ball, p, X, d, kappa, level))
            weights.append(2.0 ** j * norm1 * kappa)
            js.append(j)
            max_kappa = max(max_kappa, kappa)
    return TentDecomposition(weights, atoms, residual, js, max_kappa)


def aggregation_ratio(dec, F, X, theta0, d):
    """``||{sum (lam/||1_B||_X)^theta0 1_B}^{1/theta0}||_X / ||F||_{T_X}``."""
    g = F.grid
    total = np.zeros(g.dims)
    for lam, atom in zip(dec.weights, dec.atoms):
        index, _ = ball_samples(g, atom.ball, d)
        total[index] += (lam / indicator_norm(X, atom.ball, g, d)) ** theta0
    num = eval_norm(g.with_values(total ** (1.0 / theta0)), X)
    return num / tent_norm(F, X, d)


# --------------------------------------------------------------------------
# Carleson measures versus Campanato norms
# --------------------------------------------------------------------------

@dataclass
class CarlesonTable:
    carleson: list
    campanato: list

    @property
    def forward(self):
        """``||dmu|| / ||h||`` over the pool, skipping ``0/0``."""
        return [c / h for c, h in zip(self.carleson, self.campanato) if h > 0]

    @property
    def backward(self):
        return [h / c for c, h in zip(self.carleson, self.campanato) if c > 0]

    @staticmethod
    def band(values):
        v = np.asarray(values, dtype=float)
        if v.size == 0 or np.min(v) <= 0:
            return math.inf
        return float(np.max(v) / np.min(v))


def carleson_campanato_experiment(pool, X, pair, families, d, degree, theta0=None, q=1.0, krange=None):
    """Carleson norms of ``dmu_h = sum_l |phi_l * h|^2 dx delta_l`` against Campanato norms of ``h``.

    Both sides use the same family pool and ``s = theta0``.  Returns a
    :class:`CarlesonTable`.
    """
    if not pool:
        raise ValueError("the h-pool is empty")
    theta0 = X.theta0 if theta0 is None else theta0
    carl, camp = [], []
    for h in pool:
        dmu = induced_measure(h, pair, krange, d)
        carl.append(carleson_norm(dmu, X, theta0, families, d))
        camp.append(campanato_norm(h, X, q, degree, theta0, families, d))
    return CarlesonTable(carl, camp)
