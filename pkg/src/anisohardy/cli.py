"""Command line driver: ``anisohardy <subcommand> --config run.toml --out results/``.

Every subcommand writes ``<out>/<subcommand>.csv``.  The file starts with
``#`` comment lines (schema version, subcommand, seed and the effective
configuration) followed by a fixed header row.

Exit codes: 0 on success, 2 when a validation report fails, 1 on errors
(including unknown subcommands and malformed configs).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import spaces as S
from ._toml import TOMLDecodeError, load as toml_load
from .errors import AnisoHardyError, ConfigParse

SCHEMA_VERSION = 1

COLUMNS = {
    "norm": ["probe", "space", "norm"],
    "maximal": ["probe", "space", "f_norm", "hl_norm", "grand_norm"],
    "square-functions": ["probe", "space", "lusin", "g", "g_lambda_star", "lambda"],
    "reconstruct": ["probe", "rel_l2_error", "partition_residual"],
    "campanato": ["probe", "space", "degree", "q", "campanato", "simple", "kernel"],
    "atoms": ["decomposition", "space", "atoms", "all_valid", "finite_atomic_norm", "grand_norm", "ratio"],
    "carleson": ["probe", "space", "carleson", "campanato", "carleson_over_campanato", "campanato_over_carleson"],
    "equivalence": ["probe", "space", "s_phi", "s_psi", "g", "g_lambda_star", "grand"],
    "duality": ["pair", "space", "pairing", "atomic_norm", "campanato_norm", "ratio"],
}

DEFAULTS = {
    "seed": 0,
    "dilation": {"matrix": [[2.0, 0.0], [0.0, 2.0]]},
    "grid": {"dims": [128, 128], "half_width": 4.0},
    "probes": {"family": "bump", "count": 1},
    "spaces": [{"kind": "lebesgue", "p": 2.0}],
    "levels": {"kmin": -2, "kmax": 2},
    "families": {"levels": [0, 1, 2], "lattice": 4, "random_count": 8, "max_size": 16},
    "experiment": {"q": 2.0, "band_limit": 50.0, "atoms": 4, "pairs": 10, "reconstruct_tol": 1e-2},
}


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

def load_config(path=None):
    """Defaults overridden section by section by the TOML file at ``path``."""
    cfg = json.loads(json.dumps(DEFAULTS))
    if path is None:
        return cfg
    try:
        with open(path, "rb") as fh:
            user = toml_load(fh)
    except TOMLDecodeError as exc:
        raise ConfigParse(f"{path}: {exc}") from None
    for key, val in user.items():
        if key not in cfg:
            raise ConfigParse(f"unknown config key {key!r}")
        if isinstance(cfg[key], dict) and isinstance(val, dict):
            cfg[key].update(val)
        else:
            cfg[key] = val
    return cfg


def _orlicz(spec):
    kind = spec.get("phi", "power")
    p = float(spec.get("p", 2.0))
    makers = {"power": S.power_orlicz, "log": S.log_orlicz, "exp": S.exp_orlicz}
    if kind not in makers:
        raise ConfigParse(f"unknown Young function {kind!r}")
    return makers[kind](p)


def make_space(spec, d, grid):
    """Space from a ``{kind = ..., ...}`` table."""
    kind = str(spec.get("kind", "")).lower()
    try:
        if kind == "lebesgue":
            return S.Lebesgue(float(spec["p"]))
        if kind == "lorentz":
            return S.Lorentz(float(spec["p"]), float(spec["q"]))
        if kind == "morrey":
            return S.Morrey(float(spec["p"]), float(spec["q"]), d)
        if kind == "mixed":
            return S.Mixed(tuple(float(v) for v in spec["p"]))
        if kind == "variable":
            # p(x) moves from p_lo to p_hi along the first axis
            lo, hi = float(spec["p_lo"]), float(spec.get("p_hi", spec["p_lo"]))
            x = grid.points()[..., 0]
            t = (x - x.min()) / max(x.max() - x.min(), 1e-300)
            return S.Variable(grid.with_values(lo + (hi - lo) * t))
        if kind == "orlicz":
            return S.Orlicz(_orlicz(spec))
        if kind == "orlicz_slice":
            return S.OrliczSlice(float(spec["q"]), _orlicz(spec), int(spec.get("ell", 0)), d)
        if kind == "weighted":
            alpha = float(spec.get("alpha", 0.0))
            r = np.sqrt(np.sum(grid.points() ** 2, axis=-1))
            return S.Weighted(float(spec["p"]), grid.with_values((1e-3 + r) ** alpha))
    except KeyError as exc:
        raise ConfigParse(f"space {kind!r} misses parameter {exc}") from None
    except ValueError as exc:
        raise ConfigParse(f"space {kind!r}: {exc}") from None
    raise ConfigParse(f"unknown space kind {kind!r}")


class Context:
    """Objects shared by the subcommands, built once from the config."""

    def __init__(self, cfg, seed, kmin=None, kmax=None):
        from .dilation import build_dilation
        from .gridfn import TestFamily, make_grid, synthesize

        self.cfg = cfg
        self.seed = seed
        try:
            self.d = build_dilation(np.array(cfg["dilation"]["matrix"], dtype=float))
            g = cfg["grid"]
            self.grid = make_grid(tuple(int(m) for m in g["dims"]), half_width=float(g["half_width"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigParse(f"bad dilation or grid section: {exc}") from None
        if self.grid.n != self.d.n:
            raise ConfigParse("grid and dilation dimensions differ")
        lv = cfg["levels"]
        self.krange = (int(lv["kmin"] if kmin is None else kmin), int(lv["kmax"] if kmax is None else kmax))
        names = cfg["probes"]["family"]
        names = [names] if isinstance(names, str) else list(names)
        self.probes = []
        for name in names:
            fam = TestFamily(name, seed=seed, count=int(cfg["probes"].get("count", 1)),
                             params=dict(cfg["probes"].get("params", {})))
            for i, f in enumerate(synthesize(fam, self.grid)):
                self.probes.append((f"{name}-{i}", f))
        self.spaces = [make_space(s, self.d, self.grid) for s in cfg["spaces"]]
        self.exp = cfg["experiment"]

    def degree(self, X):
        deg = self.exp.get("degree")
        return S.moment_degree(X, self.d) if deg is None else int(deg)

    def families(self, X):
        from .campanato import sample_families

        f = self.cfg["families"]
        return sample_families(self.d, self.grid, X, levels=[int(v) for v in f["levels"]], seed=self.seed,
                               lattice=int(f.get("lattice", 4)), random_count=int(f.get("random_count", 8)),
                               max_size=int(f.get("max_size", 16)))


# --------------------------------------------------------------------------
# subcommands; each returns (rows, ok)
# --------------------------------------------------------------------------

def _map(ctx, fn, items):
    if ctx.threads > 1:
        with ThreadPoolExecutor(ctx.threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _band(values):
    v = np.asarray([x for x in values if np.isfinite(x)], dtype=float)
    if v.size == 0:
        return 1.0
    if np.min(v) <= 0:
        return math.inf
    return float(np.max(v) / np.min(v))


def cmd_norm(ctx):
    rows = _map(ctx, lambda item: [[item[0], X.describe(), S.eval_norm(item[1], X)] for X in ctx.spaces],
                ctx.probes)
    return [r for block in rows for r in block], True


def cmd_maximal(ctx):
    from .maximal import grand_maximal, hl_maximal, make_dictionary

    def one(item):
        name, f = item
        out = []
        hl = hl_maximal(f, ctx.d)
        for X in ctx.spaces:
            mn = grand_maximal(f, make_dictionary(ctx.d, space=X), ctx.d, ctx.krange)
            out.append([name, X.describe(), S.eval_norm(f, X), S.eval_norm(hl, X), S.eval_norm(mn, X)])
        return out

    return [r for block in _map(ctx, one, ctx.probes) for r in block], True


def _pair(ctx, degree):
    from .lpaley import make_wavelet_pair

    return make_wavelet_pair(ctx.d, max(degree, 0))


def _lambda(X):
    return 2.0 / X.r_plus + 0.5


def cmd_square_functions(ctx):
    from .lpaley import g_function, g_lambda_star, level_responses, lusin_area

    def one(item):
        name, f = item
        out = []
        for X in ctx.spaces:
            pair = _pair(ctx, ctx.degree(X))
            resp = level_responses(f, pair, ctx.krange, ctx.d)
            lam = _lambda(X)
            s = lusin_area(f, pair, ctx.krange, ctx.d, resp)
            g = g_function(f, pair, ctx.krange, ctx.d, resp)
            gl = g_lambda_star(f, pair, lam, ctx.krange, ctx.d, X.r_plus, resp)
            out.append([name, X.describe(), S.eval_norm(s, X), S.eval_norm(g, X), S.eval_norm(gl, X), lam])
        return out

    return [r for block in _map(ctx, one, ctx.probes) for r in block], True


def cmd_reconstruct(ctx):
    from .lpaley import calderon_reconstruct, partition_residual

    pair = _pair(ctx, int(ctx.exp.get("degree") or 1))
    kmax = max(abs(ctx.krange[0]), abs(ctx.krange[1]))
    part = partition_residual(pair, J=kmax, seed=ctx.seed)
    rows = _map(ctx, lambda item: [item[0], calderon_reconstruct(item[1], pair, ctx.krange, ctx.d)[1], part],
                ctx.probes)
    tol = float(ctx.exp.get("reconstruct_tol", 1e-2))
    return rows, all(r[1] <= tol for r in rows)


def cmd_campanato(ctx):
    from .campanato import campanato_norm, kernel_campanato_norm, min_kernel_exponent, simple_campanato_norm

    q = float(ctx.exp.get("q", 2.0))
    rows = []
    for X in ctx.spaces:
        fams = ctx.families(X)
        balls = [b for fam in fams for b in fam.balls]
        deg = ctx.degree(X)
        phi = 1.1 * min_kernel_exponent(ctx.d, X.theta0, deg)

        def one(item, X=X, fams=fams, balls=balls, deg=deg, phi=phi):
            name, f = item
            return [name, X.describe(), deg, q,
                    campanato_norm(f, X, q, deg, X.theta0, fams, ctx.d),
                    simple_campanato_norm(f, X, q, deg, balls, ctx.d),
                    kernel_campanato_norm(f, X, deg, X.theta0, phi, fams, ctx.d)]

        rows += _map(ctx, one, ctx.probes)
    return rows, True


def cmd_atoms(ctx):
    from .atoms import DEFAULT_Q, finite_atomic_norm, random_decomposition, validate_atom, assemble
    from .maximal import grand_maximal, make_dictionary

    rows = []
    ok = True
    for X in ctx.spaces:
        deg = ctx.degree(X)
        dic = make_dictionary(ctx.d, space=X)
        for i in range(int(ctx.exp.get("pairs", 10))):
            dec = random_decomposition(ctx.grid, ctx.d, X, q=DEFAULT_Q, d=deg, count=int(ctx.exp.get("atoms", 4)),
                                       seed=ctx.seed * 1000 + i)
            valid = all(validate_atom(a).passed for a in dec.atoms)
            ok &= valid
            fan = finite_atomic_norm(dec)
            mn = S.eval_norm(grand_maximal(assemble(dec), dic, ctx.d, ctx.krange), X)
            rows.append([i, X.describe(), len(dec), int(valid), fan, mn, mn / fan])
    return rows, ok


def cmd_carleson(ctx):
    from .carleson import carleson_campanato_experiment

    rows = []
    ok = True
    limit = float(ctx.exp.get("band_limit", 50.0))
    for X in ctx.spaces:
        deg = ctx.degree(X)
        pair = _pair(ctx, deg)
        tab = carleson_campanato_experiment([f for _, f in ctx.probes], X, pair, ctx.families(X), ctx.d, deg,
                                            krange=ctx.krange)
        fwd, bwd = [], []
        for (name, _), c, h in zip(ctx.probes, tab.carleson, tab.campanato):
            a = c / h if h > 0 else math.nan
            b = h / c if c > 0 else math.nan
            fwd.append(a)
            bwd.append(b)
            rows.append([name, X.describe(), c, h, a, b])
        ok &= _band(fwd) <= limit and _band(bwd) <= limit
    return rows, ok


def cmd_equivalence(ctx):
    from .lpaley import admissible_phi, g_function, g_lambda_star, level_responses, lusin_area
    from .maximal import grand_maximal, make_dictionary

    rows = []
    ok = True
    limit = float(ctx.exp.get("band_limit", 50.0))
    for X in ctx.spaces:
        deg = ctx.degree(X)
        pair = _pair(ctx, deg)
        other = admissible_phi(ctx.d, deg, sharpness=2.0)
        dic = make_dictionary(ctx.d, space=X)
        lam = _lambda(X)

        def one(item, X=X, pair=pair, other=other, dic=dic, lam=lam):
            name, f = item
            resp = level_responses(f, pair, ctx.krange, ctx.d)
            s_phi = S.eval_norm(lusin_area(f, pair, ctx.krange, ctx.d, resp), X)
            s_psi = S.eval_norm(lusin_area(f, other, ctx.krange, ctx.d), X)
            g = S.eval_norm(g_function(f, pair, ctx.krange, ctx.d, resp), X)
            gl = S.eval_norm(g_lambda_star(f, pair, lam, ctx.krange, ctx.d, X.r_plus, resp), X)
            mn = S.eval_norm(grand_maximal(f, dic, ctx.d, ctx.krange), X)
            return [name, X.describe(), s_phi, s_psi, g, gl, mn]

        block = _map(ctx, one, ctx.probes)
        rows += block
        for col in (3, 4, 5, 6):
            ok &= _band([r[2] / r[col] if r[col] > 0 else math.nan for r in block]) <= limit
    return rows, ok


def cmd_duality(ctx):
    from .atoms import DEFAULT_Q, assemble, duality_ratio, extremal_decomposition, finite_atomic_norm, own_family
    from .campanato import campanato_norm, conjugate, duality_pairing
    from .gridfn import TestFamily, synthesize

    rows = []
    ok = True
    npairs = int(ctx.exp.get("pairs", 10))
    for X in ctx.spaces:
        deg = ctx.degree(X)
        fams = ctx.families(X)
        gs = synthesize(TestFamily("oscillatory", seed=ctx.seed, count=npairs), ctx.grid)
        ratios = []
        for i, g in enumerate(gs):
            dec = extremal_decomposition(g, ctx.d, X, q=DEFAULT_Q, d=deg, count=int(ctx.exp.get("atoms", 4)),
                                         seed=ctx.seed * 1000 + i)
            pairing = duality_pairing(assemble(dec), g)
            camp = campanato_norm(g, X, conjugate(DEFAULT_Q), deg, X.theta0, fams + [own_family(dec)], ctx.d)
            r = duality_ratio(dec, g, fams, ctx.d)
            ratios.append(r)
            rows.append([i, X.describe(), pairing, finite_atomic_norm(dec), camp, r])
        med = float(np.nanmedian(ratios))
        ok &= bool(np.nanmax(ratios) <= 3 * med)
    return rows, ok


COMMANDS = {
    "norm": cmd_norm,
    "maximal": cmd_maximal,
    "square-functions": cmd_square_functions,
    "reconstruct": cmd_reconstruct,
    "campanato": cmd_campanato,
    "atoms": cmd_atoms,
    "carleson": cmd_carleson,
    "equivalence": cmd_equivalence,
    "duality": cmd_duality,
}


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def render_csv(command, cfg, seed, rows):
    """CSV text: ``#`` metadata lines, header row, data rows."""
    buf = io.StringIO()
    buf.write(f"# schema_version = {SCHEMA_VERSION}\n")
    buf.write(f"# subcommand = {command}\n")
    buf.write(f"# seed = {seed}\n")
    for key in sorted(k for k in cfg if k != "seed"):
        buf.write(f"# {key} = {json.dumps(cfg[key], sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS[command])
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


class _Parser(argparse.ArgumentParser):
    # usage errors exit with status 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="anisohardy", description="Anisotropic Hardy/Campanato experiments on grids.")
    parser.add_argument("command", choices=sorted(COMMANDS), help="experiment to run")
    parser.add_argument("--config", help="TOML experiment config (defaults are used for missing sections)")
    parser.add_argument("--out", default=".", help="output directory for <command>.csv")
    parser.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads over probes")
    parser.add_argument("--kmin", type=int, default=None)
    parser.add_argument("--kmax", type=int, default=None)
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        seed = int(cfg.get("seed", 0)) if args.seed is None else args.seed
        if seed < 0:
            raise ConfigParse("seed must be nonnegative")
        cfg["seed"] = seed
        ctx = Context(cfg, seed, args.kmin, args.kmax)
        ctx.threads = max(1, args.threads)
        rows, ok = COMMANDS[args.command](ctx)
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, f"{args.command}.csv")
        with open(path, "w", newline="") as fh:
            fh.write(render_csv(args.command, cfg, seed, rows))
    except (AnisoHardyError, OSError) as exc:
        print(f"anisohardy: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if not ok:
        print(f"anisohardy: validation report failed, see {path}", file=sys.stderr)
        return 2
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
