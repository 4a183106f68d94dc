import csv
import json

import numpy as np
import pytest

from rombuckle import cli

SCENARIO = """\
[scenario]
name = tiny

[geometry]
kind = beam2d
length = 1
height = 0.1
nx = 20
ny = 2

[loading]
compression = dirichlet

[offline]
mu_stop = 0.06
n_points = 13

[online]
mu_stop = 0.06
n_points = 25

[output]
threshold = 1e-3

[seeding]
enabled = yes
component = 1
amplitude = 0.05
threshold = 0.01
"""

MULTI = SCENARIO.replace("name = tiny", "name = tiny_multi").replace(
    "[loading]", "[material]\nvertices = 1e6 0.25, 2e6 0.25, 1e6 0.4, 2e6 0.4\n"
                 "pairs = 1.5e6 0.3\n\n[loading]")


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    cfg = root / "tiny.cfg"
    cfg.write_text(SCENARIO)
    out = root / "run"
    assert cli.main(["offline", str(cfg), "--out", str(out), "-q"]) == 0
    assert cli.main(["online", str(cfg), "--out", str(out), "-q"]) == 0
    return cfg, out


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_offline_and_online_artifacts(tiny):
    cfg, out = tiny
    for name in ("basis.bin", "sigma.csv", "snapshots.npy", "snapshot_params.csv",
                 "offline_main.csv", "manifest.json", "report.json", "offline_diagram.svg",
                 "diagram.csv", "diagram.svg", "errors.csv", "errors.svg",
                 "online_main_rb.csv", "online_main_hf.csv"):
        assert (out / name).is_file(), name
    report = json.loads((out / "report.json").read_text())
    off, on = report["offline"], report["online"]
    assert off["n_snapshots"] == 13 and on["online_points"] == 25
    assert set(on) >= {"t_HF", "t_RB", "per_mu", "speedup_RB"}
    br = on["branches"][0]
    assert br["mu_star_rb"] == br["mu_star_hf"]
    assert br["mu_star_rb"] is not None
    d = rows(out / "diagram.csv")
    assert list(d[0]) == ["mu", "s", "newton_iters", "converged"] and len(d) == 25
    assert list(rows(out / "errors.csv")[0]) == ["mu", "error", "s_rb", "s_hf"]
    assert np.load(out / "snapshots.npy").shape[1] == 13


def test_reruns_reproduce_csvs(tiny, tmp_path):
    cfg, out = tiny
    again = tmp_path / "again"
    assert cli.main(["offline", str(cfg), "--out", str(again), "-q"]) == 0
    for name in ("offline_main.csv", "sigma.csv", "snapshot_params.csv"):
        assert (again / name).read_text() == (out / name).read_text()


def test_compare_identical_files(tiny, tmp_path, capsys):
    cfg, out = tiny
    summary = tmp_path / "cmp.json"
    code = cli.main(["compare", str(out / "diagram.csv"), str(out / "online_main_hf.csv"),
                     "--json", str(summary)])
    assert code == 0
    res = json.loads(summary.read_text())
    assert res["paired"] == 1
    same = cli.compare_branches(out / "diagram.csv", out / "diagram.csv")
    # [TRIVIAL]
    assert same["max_abs_ds"] == 0.0
    assert "ordering" in capsys.readouterr().out


def test_compare_grid_mismatch_exit_code(tiny):
    cfg, out = tiny
    assert cli.main(["compare", str(out / "diagram.csv"), str(out / "offline_main.csv")]) == 8


def test_stale_artifacts_exit_code(tiny, tmp_path):
    cfg, out = tiny
    other = tmp_path / "other.cfg"
    other.write_text(SCENARIO.replace("nx = 20", "nx = 22"))
    assert cli.main(["online", str(other), "--out", str(out), "-q"]) == 7
    assert cli.main(["online", str(other), "--out", str(tmp_path / "empty"), "-q"]) == 7


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text(SCENARIO.replace("n_points = 13", "n_points = 1"))
    assert cli.main(["offline", str(bad), "--out", str(tmp_path / "x")]) == 3
    err = capsys.readouterr().err
    assert "bad.cfg:" in err and "parameter range is empty" in err
    assert cli.main(["offline", str(tmp_path / "missing.cfg")]) == 3


def test_multi_material_snapshot_count(tmp_path):
    cfg = tmp_path / "multi.cfg"
    cfg.write_text(MULTI)
    out = tmp_path / "run"
    section = cli.run_offline(cfg, out, quiet=True)
    # [DERIVED] four vertex sweeps of 13 converged points each
    assert section["n_snapshots"] == 4 * 13
    params = rows(out / "snapshot_params.csv")
    assert list(params[0]) == ["mu", "E", "nu"] and len(params) == 52
    assert {(p["E"], p["nu"]) for p in params} == {
        ("1000000.0", "0.25"), ("2000000.0", "0.25"), ("1000000.0", "0.4"),
        ("2000000.0", "0.4")}


def test_mesh_export(tmp_path):
    info = cli.mesh_export("svk2d_geometric", tmp_path, mu_g=1.0, quiet=True)
    assert info["n_elements"] == 320
    text = (tmp_path / "mesh_mug1.vtk").read_text()
    assert text.startswith("# vtk DataFile")
    assert cli.main(["mesh-export", "svk2d_dirichlet", "--out", str(tmp_path), "-q"]) == 0
