"""Functions sampled on uniform box grids.

Sample ``idx`` of a :class:`GridFunction` sits at ``origin + idx * spacing``
and carries the cell weight ``prod(spacing)`` in every quadrature.  Axis ``i``
of ``values`` corresponds to the coordinate ``x_{i+1}``.

Besides the container this module provides the AGF1 binary format,
deterministic probe families and the discrete ball operations (ball masks,
ball sums and averages, max filters over ellipsoids) used by the maximal
functions, square functions and norms.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage, signal

from .dilation import DilatedBall
from .errors import EmptyRegion, GridMismatch, MalformedHeader, TruncatedPayload, UnknownFamily

__all__ = [
    "GridFunction",
    "TestFamily",
    "make_grid",
    "quadrature",
    "fft_convolve",
    "pad",
    "crop",
    "store",
    "load",
    "to_bytes",
    "from_bytes",
    "synthesize",
    "checksum",
    "indicator",
    "ball_mask",
    "ball_sum",
    "ball_average",
    "ball_max_filter",
    "FAMILIES",
]

MAGIC = b"AGF1"


class GridFunction:
    """Real or complex samples on a uniform box grid.

    Parameters
    ----------
    values : array_like
        Samples, one axis per coordinate.
    spacing : sequence of float
        Positive step per axis.
    origin : sequence of float
        Coordinates of the sample with index ``(0, ..., 0)``.
    """

    __slots__ = ("values", "spacing", "origin")

    def __init__(self, values, spacing, origin=None):
        vals = np.asarray(values)
        if np.iscomplexobj(vals):
            vals = vals.astype(np.complex128, copy=True)
        else:
            vals = vals.astype(np.float64, copy=True)
        n = vals.ndim
        spacing = tuple(float(s) for s in np.broadcast_to(np.asarray(spacing, float), (n,)))
        if origin is None:
            origin = tuple(-(m // 2) * h for m, h in zip(vals.shape, spacing))
        origin = tuple(float(o) for o in np.broadcast_to(np.asarray(origin, float), (n,)))
        if n < 1 or any(s <= 0 for s in spacing):
            raise ValueError("need at least one axis and positive spacing")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    def __setattr__(self, name, value):
        raise AttributeError("GridFunction is immutable")

    def __repr__(self):
        kind = "complex" if self.is_complex else "real"
        return f"GridFunction(dims={self.dims}, spacing={self.spacing}, {kind})"

    @property
    def dims(self):
        return self.values.shape

    @property
    def n(self):
        return self.values.ndim

    @property
    def is_complex(self):
        return np.iscomplexobj(self.values)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axes(self):
        return [o + h * np.arange(m) for o, h, m in zip(self.origin, self.spacing, self.dims)]

    def points(self):
        """Sample coordinates, shape ``dims + (n,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def zero_index(self):
        """Index of the sample nearest to the coordinate origin."""
        return tuple(int(round(-o / h)) for o, h in zip(self.origin, self.spacing))

    def with_values(self, values):
        values = np.asarray(values)
        if values.shape != self.dims:
            raise GridMismatch(f"shape {values.shape} does not match grid {self.dims}")
        return GridFunction(values, self.spacing, self.origin)

    def same_geometry(self, other, rtol=1e-12):
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing, rtol=rtol, atol=0)
            and np.allclose(self.origin, other.origin, rtol=rtol, atol=rtol * max(self.spacing))
        )

    def __add__(self, other):
        _check_same(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        _check_same(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        if isinstance(c, GridFunction):
            _check_same(self, c)
            return self.with_values(self.values * c.values)
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def abs(self):
        return self.with_values(np.abs(self.values))


def _check_same(f, g):
    if not f.same_geometry(g):
        raise GridMismatch(f"grids differ: {f.dims}/{f.spacing} vs {g.dims}/{g.spacing}")


def make_grid(dims, half_width=None, spacing=None):
    """Zero function on a grid centred at the origin (0 is a sample point).

    Exactly one of ``half_width`` (per-axis half extent) or ``spacing`` is used.
    """
    dims = tuple(int(m) for m in np.atleast_1d(dims))
    if spacing is None:
        hw = np.broadcast_to(np.asarray(1.0 if half_width is None else half_width, float), (len(dims),))
        spacing = tuple(2 * w / m for w, m in zip(hw, dims))
    return GridFunction(np.zeros(dims), spacing)


# --------------------------------------------------------------------------
# quadrature and convolution
# --------------------------------------------------------------------------

def quadrature(f, region=None, d=None):
    """Midpoint-rule integral of ``f`` over the grid or over a dilated ball.

    Raises
    ------
    EmptyRegion
        If ``region`` is a ball containing no sample point.
    """
    if region is None:
        return f.values.sum() * f.cell_volume
    if d is None:
        raise ValueError("a Dilation is required to integrate over a ball")
    inside = d.contains(f.points(), region.center, region.level)
    if not inside.any():
        raise EmptyRegion(f"no grid sample inside ball {region}")
    return f.values[inside].sum() * f.cell_volume


def fft_convolve(f, g):
    """Circular convolution ``(f * g)(x_m) = sum_j f(x_j) g(x_m - x_j) prod(h)``.

    The kernel ``g`` is read relative to its own coordinate origin, so both
    functions must live on the same grid and that grid must contain the point
    0.  Callers pad (see :func:`pad`) so that supports never wrap around.
    """
    _check_same(f, g)
    shift = tuple(-i for i in g.zero_index())
    kern = np.roll(g.values, shift, axis=tuple(range(g.n)))
    axes = tuple(range(f.n))
    out = np.fft.ifftn(np.fft.fftn(f.values, axes=axes) * np.fft.fftn(kern, axes=axes), axes=axes)
    if not (f.is_complex or g.is_complex):
        out = out.real
    return f.with_values(out * f.cell_volume)


def pad(f, factor=2):
    """Zero-pad symmetrically to ``factor`` times the size per axis."""
    widths = []
    for m in f.dims:
        extra = int(round(m * (factor - 1)))
        widths.append((extra // 2, extra - extra // 2))
    vals = np.pad(f.values, widths)
    origin = tuple(o - w[0] * h for o, w, h in zip(f.origin, widths, f.spacing))
    return GridFunction(vals, f.spacing, origin)


def crop(f, like):
    """Restrict a padded function back onto the geometry of ``like``."""
    start = [int(round((lo - o) / h)) for lo, o, h in zip(like.origin, f.origin, f.spacing)]
    sl = tuple(slice(s, s + m) for s, m in zip(start, like.dims))
    return like.with_values(f.values[sl])


# --------------------------------------------------------------------------
# AGF1 binary format
# --------------------------------------------------------------------------

def to_bytes(f):
    n = f.n
    head = MAGIC + struct.pack("<I", n) + struct.pack(f"<{n}I", *f.dims)
    head += struct.pack(f"<{n}d", *f.spacing) + struct.pack(f"<{n}d", *f.origin)
    head += struct.pack("<B", 1 if f.is_complex else 0)
    if f.is_complex:
        payload = np.ascontiguousarray(f.values).view(np.float64)
    else:
        payload = np.ascontiguousarray(f.values)
    return head + payload.astype("<f8").tobytes()


def from_bytes(buf):
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise MalformedHeader("missing AGF1 magic")
    (n,) = struct.unpack_from("<I", buf, 4)
    if not 1 <= n <= 8:
        raise MalformedHeader(f"implausible dimension {n}")
    off = 8
    need = off + 4 * n + 16 * n + 1
    if len(buf) < need:
        raise MalformedHeader("header is truncated")
    dims = struct.unpack_from(f"<{n}I", buf, off)
    off += 4 * n
    spacing = struct.unpack_from(f"<{n}d", buf, off)
    off += 8 * n
    origin = struct.unpack_from(f"<{n}d", buf, off)
    off += 8 * n
    (flag,) = struct.unpack_from("<B", buf, off)
    off += 1
    if flag not in (0, 1):
        raise MalformedHeader(f"unknown value flag {flag}")
    count = int(np.prod(dims)) * (2 if flag else 1)
    if len(buf) - off != 8 * count:
        raise TruncatedPayload(f"expected {8 * count} payload bytes, found {len(buf) - off}")
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=off).astype(np.float64)
    if flag:
        data = data.view(np.complex128)
    return GridFunction(data.reshape(dims), spacing, origin)


def store(f, path):
    with open(path, "wb") as fh:
        fh.write(to_bytes(f))


def load(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def checksum(f):
    return hashlib.sha256(to_bytes(f)).hexdigest()


# --------------------------------------------------------------------------
# probe families
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TestFamily:
    """Generator parameters for a deterministic family of probe functions."""

    __test__ = False  # keep pytest from collecting this class

    name: str
    seed: int = 0
    count: int = 1
    params: dict = field(default_factory=dict)


def _bump(t):
    """C-infinity bump ``exp(-1/(1-t))`` of the squared radius ``t``, zero for ``t >= 1``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = t < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - t[inside]))
    return out


def _inner_box(grid):
    # centres and radii are kept inside the central half of the box
    lo = np.array(grid.origin) + 0.25 * np.array(grid.dims) * np.array(grid.spacing)
    hi = np.array(grid.origin) + 0.75 * np.array(grid.dims) * np.array(grid.spacing)
    return lo, hi


def _random_center(rng, lo, hi, radius):
    return rng.uniform(lo + radius, hi - radius)


def _gen_bump(grid, rng, params):
    lo, hi = _inner_box(grid)
    x = grid.points()
    rmax = params.get("rmax", 0.2) * (hi - lo).min()
    radius = rng.uniform(0.4, 1.0) * rmax
    c = _random_center(rng, lo, hi, radius)
    amp = rng.uniform(0.5, 2.0)
    return amp * _bump(np.sum((x - c) ** 2, axis=-1) / radius ** 2)


def _gen_oscillatory(grid, rng, params):
    lo, hi = _inner_box(grid)
    x = grid.points()
    sigma = rng.uniform(0.5, 1.0) * params.get("sigma", 0.06) * (hi - lo).min()
    c = _random_center(rng, lo, hi, 4 * sigma)
    direction = rng.normal(size=grid.n)
    direction /= np.linalg.norm(direction)
    # |omega| sigma >= 5 keeps the mean below exp(-12.5)
    omega = direction * rng.uniform(5.0, 8.0) / sigma
    phase = rng.uniform(0, 2 * np.pi)
    r2 = np.sum((x - c) ** 2, axis=-1)
    return np.exp(-r2 / (2 * sigma ** 2)) * np.cos((x - c) @ omega + phase)


def _gen_piecewise(grid, rng, params):
    lo, hi = _inner_box(grid)
    x = grid.points()
    out = np.zeros(grid.dims)
    for _ in range(int(params.get("pieces", 3))):
        a = rng.uniform(lo, hi)
        b = rng.uniform(lo, hi)
        box = np.all((x >= np.minimum(a, b)) & (x <= np.maximum(a, b)), axis=-1)
        out += rng.uniform(-1.0, 1.0) * box
    return out


def _gen_atom_sum(grid, rng, params):
    lo, hi = _inner_box(grid)
    x = grid.points()
    out = np.zeros(grid.dims)
    rmax = params.get("rmax", 0.15) * (hi - lo).min()
    for _ in range(int(params.get("atoms", 4))):
        radius = rng.uniform(0.3, 1.0) * rmax
        c = _random_center(rng, lo, hi, radius)
        axis = rng.integers(grid.n)
        u = (x - c) / radius
        # derivative of a radial bump: odd in one variable, so mean zero
        out += rng.uniform(-1.0, 1.0) * u[..., axis] * _bump(np.sum(u ** 2, axis=-1))
    return out


FAMILIES = {
    "bump": _gen_bump,
    "oscillatory": _gen_oscillatory,
    "piecewise": _gen_piecewise,
    "random-atom-sum": _gen_atom_sum,
}


def synthesize(family, grid):
    """Draw ``family.count`` probe functions on the geometry of ``grid``.

    Every member is supported (or, for the oscillatory family, concentrated)
    inside the central half of the box.
    """
    try:
        gen = FAMILIES[family.name]
    except KeyError:
        raise UnknownFamily(family.name) from None
    if family.count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(family.seed)
    return [grid.with_values(gen(grid, rng, family.params)) for _ in range(family.count)]


def indicator(grid, d, ball):
    """Indicator of ``ball`` sampled on ``grid``."""
    if not isinstance(ball, DilatedBall):
        ball = DilatedBall(*ball)
    return grid.with_values(d.contains(grid.points(), ball.center, ball.level).astype(float))


# --------------------------------------------------------------------------
# ball operations
# --------------------------------------------------------------------------

@lru_cache(maxsize=512)
def _ball_mask_cached(d, k, spacing, limit):
    half = d.half_widths(k)
    reach = [min(int(np.floor(w / h)) + 1, lim) for w, h, lim in zip(half, spacing, limit)]
    axes = [np.arange(-r, r + 1) * h for r, h in zip(reach, spacing)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    mask = d.contains(pts, np.zeros(d.n), k)
    # the centre always belongs to the ball
    mask[tuple(reach)] = True
    mask.flags.writeable = False
    return mask


def ball_mask(d, k, spacing, limit=None):
    """Boolean mask of offsets ``m`` with ``m * h`` in ``B_k``.

    The mask has odd side lengths with the zero offset in the middle and is
    symmetric under ``m -> -m``.  ``limit`` caps the reach per axis (offsets
    beyond the grid extent never matter).
    """
    spacing = tuple(float(h) for h in spacing)
    if limit is None:
        limit = (1 << 30,) * d.n
    return _ball_mask_cached(d, int(k), spacing, tuple(int(x) for x in limit))


def _mask_for(values, d, k, spacing):
    limit = tuple(m - 1 for m in values.shape)
    return ball_mask(d, k, spacing, limit)


def ball_sum(values, d, k, spacing):
    """``sum_{m in mask(B_k)} values[i + m]`` with zero extension off the grid."""
    values = np.asarray(values)
    mask = _mask_for(values, d, k, spacing)
    if mask.sum() == 1:
        return values.astype(float if not np.iscomplexobj(values) else complex)
    if values.ndim == 1:
        r = int(mask.sum()) // 2
        n = len(values)
        cs = np.concatenate([[0.0], np.cumsum(np.pad(values, (r, r)))])
        return cs[2 * r + 1:] - cs[:n]
    out = signal.fftconvolve(values, mask.astype(float), mode="same")
    return out


def ball_average(values, d, k, spacing):
    """Average over ``x + B_k`` (sample count normalisation, zero extension)."""
    values = np.asarray(values)
    # the reach cap only drops offsets that never hit the grid, so the full
    # count of the ball is the uncapped mask size
    count = _ball_count(d, k, spacing)
    return ball_sum(values, d, k, spacing) / count


@lru_cache(maxsize=512)
def _ball_count_cached(d, k, spacing):
    half = d.half_widths(k)
    reach = [int(np.floor(w / h)) + 1 for w, h in zip(half, spacing)]
    if np.prod([2 * r + 1 for r in reach]) > 5e7:
        return float(d.b ** k / np.prod(spacing))
    return float(ball_mask(d, k, spacing).sum())


def _ball_count(d, k, spacing):
    return _ball_count_cached(d, int(k), tuple(float(h) for h in spacing))


def _shift(arr, offset, axis, fill):
    """``out[i] = arr[i + offset]`` along ``axis`` with ``fill`` off the grid."""
    out = np.full_like(arr, fill)
    n = arr.shape[axis]
    if abs(offset) >= n:
        return out
    src = [slice(None)] * arr.ndim
    dst = [slice(None)] * arr.ndim
    if offset >= 0:
        src[axis] = slice(offset, n)
        dst[axis] = slice(0, n - offset)
    else:
        src[axis] = slice(0, n + offset)
        dst[axis] = slice(-offset, n)
    out[tuple(dst)] = arr[tuple(src)]
    return out


def ball_max_filter(values, d, k, spacing):
    """``max_{m in mask(B_k)} values[i + m]``, ignoring offsets off the grid.

    The ellipsoid mask is decomposed into runs along the last axis; each run
    is a 1-D sliding maximum followed by a shift, so the cost is
    ``O(rows * N)`` rather than ``O(|mask| * N)``.
    """
    values = np.asarray(values, dtype=float)
    mask = _mask_for(values, d, k, spacing)
    if mask.sum() == 1:
        return values.copy()
    reach = [s // 2 for s in mask.shape]
    out = np.full(values.shape, -np.inf)
    rl = reach[-1]
    nl = values.shape[-1]
    widths = [(0, 0)] * (values.ndim - 1) + [(rl, rl)]
    padded = np.pad(values, widths, constant_values=-np.inf)
    cache = {}
    for prefix in np.ndindex(*mask.shape[:-1]):
        row = mask[prefix]
        idx = np.flatnonzero(row)
        if idx.size == 0:
            continue
        lo, hi = idx[0] - rl, idx[-1] - rl
        key = (lo, hi)
        if key not in cache:
            size = hi - lo + 1
            run = ndimage.maximum_filter1d(padded, size=size, axis=-1, mode="constant", cval=-np.inf)
            # the centred window covers [j - size//2, j - size//2 + size - 1]
            start = rl + lo + size // 2
            cache[key] = run[..., start:start + nl]
        run = cache[key]
        for ax, p in enumerate(prefix):
            run = _shift(run, p - reach[ax], ax, -np.inf)
        np.maximum(out, run, out=out)
    return out
