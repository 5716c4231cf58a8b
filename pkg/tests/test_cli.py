import json

import pytest

from dynplast.cli import EXIT_AUDIT, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main

SHORT = ["--set", "time.T=0.2", "--set", "mesh.subdivisions=[4,4]"]


@pytest.fixture(autouse=True)
def output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("DYNPLAST_OUTPUT_ROOT", str(tmp_path / "runs"))
    return tmp_path / "runs"


@pytest.fixture
def run_dir(tmp_path):
    out = tmp_path / "run"
    assert main(["run", "plastic_shear", "-o", str(out)] + SHORT) == EXIT_OK
    return out


def test_run_writes_outputs(run_dir, capsys):
    names = {p.name for p in run_dir.iterdir()}
    assert {"manifest.json", "nodal.csv", "cells.csv", "boundary.csv", "energy.csv", "mesh.txt"} <= names


def test_run_default_output_root(output_root):
    assert main(["run", "plastic_shear"] + SHORT) == EXIT_OK
    assert (output_root / "plastic_shear" / "manifest.json").exists()


def test_audit_passes_and_writes_report(run_dir, tmp_path, capsys):
    report = tmp_path / "report.json"
    code = main(["audit", str(run_dir), "--samples", "6", "--report", str(report)])
    assert code == EXIT_OK
    rep = json.loads(report.read_text())
    assert rep["pass"] and {c["name"] for c in rep["checks"]} >= {
        "energy_ledger_consistency", "perzyna_identity", "exact_boundary_condition",
        "entropic_constant", "convexity_inequality"}


def test_audit_detects_tampering(run_dir, capsys):
    path = run_dir / "energy.csv"
    lines = path.read_text().splitlines()
    row = lines[5].split(",")
    row[2] = repr(float(row[2]) * 1.1 + 1e-3)
    lines[5] = ",".join(row)
    path.write_text("\n".join(lines) + "\n")
    assert main(["audit", str(run_dir), "--checks", "energy"]) == EXIT_AUDIT


def test_audit_detects_corrupted_stress(run_dir, capsys):
    path = run_dir / "cells.csv"
    lines = path.read_text().splitlines()
    head = lines[0].split(",")
    col = head.index("sigma_11")
    row = lines[-3].split(",")
    row[col] = repr(float(row[col]) * 1.1)
    lines[-3] = ",".join(row)
    path.write_text("\n".join(lines) + "\n")
    assert main(["audit", str(run_dir), "--checks", "energy,flow"]) == EXIT_AUDIT


def test_manifest_has_audit_summary(run_dir):
    man = json.loads((run_dir / "manifest.json").read_text())
    assert man["audit"]["pass"] and "energy_residual" in man["audit"]


def test_audit_empty_check_list(run_dir, capsys):
    assert main(["audit", str(run_dir), "--checks", ""]) == EXIT_OK


def test_audit_unknown_check(run_dir):
    assert main(["audit", str(run_dir), "--checks", "nonsense"]) == EXIT_CONFIG


def test_audit_missing_directory(tmp_path):
    assert main(["audit", str(tmp_path / "nothing")]) == EXIT_CONFIG


def test_invalid_material_is_config_error(tmp_path, capsys):
    code = main(["run", "plastic_shear", "-o", str(tmp_path / "x"), "--set", "material.mu=-1"] + SHORT)
    assert code == EXIT_CONFIG
    err = json.loads(capsys.readouterr().out)
    assert err["check"] == "ellipticity" and err["exit_code"] == EXIT_CONFIG


def test_incompatible_initial_velocity(tmp_path, capsys):
    code = main(["run", "plastic_shear", "-o", str(tmp_path / "x"),
                 "--set", 'initial.v0=["1","0"]'] + SHORT)
    assert code == EXIT_CONFIG
    err = json.loads(capsys.readouterr().out)
    assert err["check"] == "boundary" and err["residual"] > 0


def test_solver_failure_exit_code(tmp_path):
    code = main(["run", "plastic_shear", "-o", str(tmp_path / "x"), "--set", "solver.max_sweeps=1"])
    assert code == EXIT_SOLVER


def test_eps_sweep(tmp_path, capsys):
    out = tmp_path / "sweep"
    code = main(["sweep", "plastic_shear", "--param", "eps", "--values", "0.1,0.01",
                 "-o", str(out)] + SHORT)
    assert code == EXIT_OK
    summary = json.loads((out / "sweep.json").read_text())
    assert summary["param"] == "solver.eps" and summary["values"] == [0.1, 0.01]
    assert summary["pass"] and summary["checks"][0]["name"].startswith("relaxed_bc_monotone")
    assert (out / "solver.eps=0.1" / "manifest.json").exists()
    rows = (out / "sweep.csv").read_text().splitlines()
    assert rows[0].split(",")[:3] == ["value", "energy_residual", "relaxed_bc_residual"]
    assert len(rows) == 3


def test_delta_sweep_checks_order(tmp_path, capsys):
    out = tmp_path / "sweep"
    code = main(["sweep", "elastic_release", "--param", "delta", "--values", "0.02,0.01",
                 "-o", str(out), "--jobs", "2", "--set", "time.T=0.3"])
    summary = json.loads((out / "sweep.json").read_text())
    order = summary["checks"][0]["value"]
    assert code == EXIT_OK and 0.585 <= order <= 1.585


def test_sweep_needs_two_values(tmp_path):
    assert main(["sweep", "plastic_shear", "--param", "solver.eps", "--values", "0.1"]) == EXIT_CONFIG


def test_friedrichs_certificate(capsys):
    assert main(["friedrichs", "--lam", "1", "--mu", "1", "--nu", "1,2,2",
                 "--S2", "0,1,0,-1,0,0,0,0,0"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["certificate"]["admissible"]


def test_friedrichs_bad_input():
    assert main(["friedrichs", "--lam", "1", "--mu", "1", "--nu", "1,2"]) == EXIT_CONFIG
    assert main(["friedrichs", "--lam", "1", "--mu", "-1", "--nu", "0,0,1"]) == EXIT_CONFIG
