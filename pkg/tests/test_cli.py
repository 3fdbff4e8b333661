import csv

import numpy as np
import pytest

from anisohardy import cli
from anisohardy import spaces as S
from anisohardy.gridfn import TestFamily, make_grid, synthesize

CONFIG = """
seed = 5
[grid]
dims = [64, 64]
half_width = 4.0
[[spaces]]
kind = "lebesgue"
p = 2
"""


def read_rows(path):
    with open(path) as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.reader(lines))


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(CONFIG)
    return path


def test_norm_matches_library(config, tmp_path):
    out = tmp_path / "out"
    assert cli.run(["norm", "--config", str(config), "--out", str(out)]) == 0
    rows = read_rows(out / "norm.csv")
    assert rows[0] == cli.COLUMNS["norm"]
    assert len(rows) == 2
    f = synthesize(TestFamily("bump", seed=5), make_grid((64, 64), half_width=4.0))[0]
    assert float(rows[1][2]) == pytest.approx(S.eval_norm(f, S.Lebesgue(2)), rel=1e-11)
    text = (out / "norm.csv").read_text()
    assert text.startswith("# schema_version = 1\n")
    assert "# grid = " in text


def test_fixed_seed_is_byte_identical(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.run(["campanato", "--config", str(config), "--out", str(out), "--seed", "2"]) == 0
    assert (a / "campanato.csv").read_bytes() == (b / "campanato.csv").read_bytes()
    c = tmp_path / "c"
    cli.run(["campanato", "--config", str(config), "--out", str(c), "--seed", "3"])
    assert (a / "campanato.csv").read_bytes() != (c / "campanato.csv").read_bytes()


def test_threads_do_not_change_output(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.run(["square-functions", "--config", str(config), "--out", str(a)])
    cli.run(["square-functions", "--config", str(config), "--out", str(b), "--threads", "3"])
    assert (a / "square-functions.csv").read_bytes() == (b / "square-functions.csv").read_bytes()


def test_unknown_subcommand_exits_one(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.run(["bogus"])
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_bad_config_exits_one(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[grid\n")
    assert cli.run(["norm", "--config", str(bad), "--out", str(tmp_path)]) == 1
    bad.write_text('[[spaces]]\nkind = "sobolev"\n')
    assert cli.run(["norm", "--config", str(bad), "--out", str(tmp_path)]) == 1
    bad.write_text("colour = 3\n")
    assert cli.run(["norm", "--config", str(bad), "--out", str(tmp_path)]) == 1


def test_report_failure_exits_two(config, tmp_path):
    # levels -1..1 cannot resolve the probe band, so the reconstruction check fails
    code = cli.run(["reconstruct", "--config", str(config), "--out", str(tmp_path), "--kmin", "-1", "--kmax", "1"])
    assert code == 2
    rows = read_rows(tmp_path / "reconstruct.csv")
    assert rows[0] == cli.COLUMNS["reconstruct"]


@pytest.mark.parametrize("command", ["maximal", "atoms", "duality", "equivalence"])
def test_subcommands_write_headers(config, tmp_path, command):
    code = cli.run([command, "--config", str(config), "--out", str(tmp_path)])
    assert code in (0, 2)
    rows = read_rows(tmp_path / f"{command}.csv")
    assert rows[0] == cli.COLUMNS[command]
    assert len(rows) > 1
    assert all(len(r) == len(rows[0]) for r in rows)


def test_carleson_subcommand(tmp_path):
    # default grid is fine enough for the tents of the sampled families
    code = cli.run(["carleson", "--out", str(tmp_path), "--seed", "1"])
    assert code == 0
    rows = read_rows(tmp_path / "carleson.csv")
    assert float(rows[1][2]) > 0 and np.isfinite(float(rows[1][4]))


def test_space_kinds(tmp_path):
    grid = make_grid((32, 32), half_width=2.0)
    from anisohardy.dilation import build_dilation

    d = build_dilation(2 * np.eye(2))
    specs = [
        {"kind": "lorentz", "p": 2, "q": 1},
        {"kind": "morrey", "p": 2, "q": 1},
        {"kind": "mixed", "p": [1, 2]},
        {"kind": "variable", "p_lo": 1.5, "p_hi": 3},
        {"kind": "orlicz", "phi": "log", "p": 1.5},
        {"kind": "orlicz_slice", "q": 2, "phi": "power", "p": 1.5},
        {"kind": "weighted", "p": 2, "alpha": 0.5},
    ]
    for spec in specs:
        assert isinstance(cli.make_space(spec, d, grid), S.SpaceSpec)
    from anisohardy.errors import ConfigParse

    with pytest.raises(ConfigParse):
        cli.make_space({"kind": "lorentz", "p": 2}, d, grid)
