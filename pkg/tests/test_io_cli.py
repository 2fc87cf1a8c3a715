import json
import os

import numpy as np
import pytest

from fracflow import cli
from fracflow.io.output import (CSV_SCHEMA, LINE_COLUMNS, AuditLog, RunManifest, file_hash, read_audit,
                                read_csv, write_line_csv)
from fracflow.io.vtk import VtkFormatError, read_vtk, write_interface_vtk, write_vtk
from fracflow.mesh.sampling import sample_line
from fracflow.scenarios import build_case


@pytest.fixture(scope="module")
def case2():
    return build_case(2, "reduced", 16)


def test_vtk_roundtrip(tmp_path, case2):
    mesh, state, _ = case2
    state.S = np.linspace(0, 1, mesh.n_cells)
    p = tmp_path / "b.vtk"
    write_vtk(mesh, state, p)
    g = read_vtk(p)
    assert np.allclose(g.points, mesh.points, rtol=0, atol=0)
    assert np.array_equal(np.array(g.cells), mesh.triangles)
    assert np.all(g.cell_types == 5)
    assert np.array_equal(g.cell_data["saturation"], state.S)
    assert np.array_equal(g.cell_data["pressure"], state.P)
    q = tmp_path / "i.vtk"
    write_interface_vtk(mesh, state, np.full(len(mesh.interface), 0.01), q)
    gi = read_vtk(q)
    assert np.all(gi.cell_types == 3)
    assert set(gi.cell_data) == {"saturation_gamma", "pressure_gamma", "aperture"}


def test_vtk_rejects_garbage(tmp_path):
    p = tmp_path / "x.vtk"
    p.write_text("hello\n")
    with pytest.raises(VtkFormatError):
        read_vtk(p)


def test_line_csv_roundtrip(tmp_path, case2):
    mesh, state, _ = case2
    smp = sample_line(mesh, state.S, state.P, [0, 0], [1, 1], 17)
    p = tmp_path / "l.csv"
    write_line_csv(p, smp, {"t": 0.0})
    head, cols, vals = read_csv(p)
    assert head.startswith(f"# schema={CSV_SCHEMA}")
    assert tuple(cols) == LINE_COLUMNS
    assert vals.shape == (17, len(LINE_COLUMNS))
    assert np.allclose(vals[:, 0], smp.arclength)
    assert np.all(np.isnan(vals[:, 5]))


def test_audit_log_drops_wall_time(tmp_path):
    p = tmp_path / "a.jsonl"
    with AuditLog(p) as log:
        log.write({"step": 1, "mass_error": np.float64(1e-16), "wall_time": 3.0, "n": np.int64(2)})
    rec = read_audit(p)
    assert rec == [{"step": 1, "mass_error": 1e-16, "n": 2}]


def test_manifest(tmp_path):
    p = tmp_path / "m.json"
    RunManifest("case=2", "abc", "reduced", 0.1, 0.01, 1.0, {"atol": 1e-10}, "out", "0.1", 5).write(p)
    d = json.loads(p.read_text())
    assert d["seed"] == 5 and d["newton"]["atol"] == 1e-10
    assert len(file_hash(p)) == 64


def test_cli_help_and_bad_args(capsys):
    assert cli.main(["--help"]) == 0
    assert cli.main(["--case", "7"]) == 1
    assert cli.main(["--dt", "-1", "--steps", "1"]) == 1
    assert cli.main(["--scenario", "/nope.ini"]) == 1
    assert cli.main(["--case", "1", "--steps", "0", "--line", "1,2,3"]) == 1


def test_cli_run_writes_outputs(tmp_path):
    out = tmp_path / "run"
    code = cli.main(["--case", "2", "--resolution", "16", "--steps", "2", "--out", str(out), "--output-every", "1",
                     "--line", "centerline", "--seed", "11"])
    assert code == 0
    names = set(os.listdir(out))
    assert {"bulk_0000.vtk", "bulk_0002.vtk", "interface_0002.vtk", "series.json", "audit.jsonl", "line.csv",
            "manifest.json"} <= names
    audit = read_audit(out / "audit.jsonl")
    assert [r["step"] for r in audit] == [1, 2]
    assert max(r["mass_error"] for r in audit) <= 1e-9
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 11 and man["mode"] == "reduced"
    _, _, vals = read_csv(out / "line.csv")
    assert np.all(np.isfinite(vals[:, 5]))  # the centre line runs along the interface


def test_cli_runs_are_reproducible(tmp_path):
    args = ["--case", "1", "--resolution", "16", "--steps", "1"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
    for f in ("audit.jsonl", "line.csv", "bulk_0001.vtk"):
        assert file_hash(tmp_path / "a" / f) == file_hash(tmp_path / "b" / f)


def test_cli_both_modes_compare(tmp_path, capsys):
    out = tmp_path / "both"
    assert cli.main(["--case", "2", "--mode", "both", "--resolution", "16", "--steps", "1", "--out", str(out)]) == 0
    assert (out / "compare.csv").exists()
    assert (out / "reduced" / "audit.jsonl").exists() and (out / "full" / "audit.jsonl").exists()
    assert "L1 saturation discrepancy" in capsys.readouterr().out


def test_cli_solver_failure(tmp_path, monkeypatch):
    import fracflow.solver.stepper as stepper
    from fracflow.solver.newton import NewtonError

    def never(*a, **k):
        raise NewtonError("forced")

    monkeypatch.setattr(stepper, "newton_solve", never)
    out = tmp_path / "f"
    assert cli.main(["--case", "2", "--resolution", "16", "--steps", "1", "--out", str(out)]) == 2
    assert "error" in read_audit(out / "audit.jsonl")[-1]


def test_cli_scenario_file(tmp_path):
    p = tmp_path / "s.ini"
    p.write_text("[case]\nid = 3\n[run]\nT = 0.01\ndt = 0.01\nh = 0.0625\n")
    assert cli.main(["--scenario", str(p), "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["scenario_hash"] == file_hash(p)
