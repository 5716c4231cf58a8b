import json

import numpy as np
import pytest

from dynplast.config import load_scenario
from dynplast.dynamics import solve
from dynplast.export import content_hash, read_trajectory, write_trajectory

SHORT = {"time.T": 0.2, "mesh.subdivisions": [4, 4]}


@pytest.fixture(scope="module")
def short_run(tmp_path_factory):
    scn, opts, cfg = load_scenario("plastic_shear", SHORT)
    traj = solve(scn, opts)
    out = tmp_path_factory.mktemp("run")
    write_trajectory(traj, out, cfg)
    return traj, out, cfg


def test_round_trip_is_exact(short_run):
    traj, out, _ = short_run
    back = read_trajectory(out)
    for name in ("times", "u", "v", "e", "p", "sigma"):
        assert np.array_equal(getattr(traj, name), getattr(back, name)), name
    for k, col in traj.ledger.as_columns().items():
        assert np.array_equal(col, back.ledger.as_columns()[k]), k


def test_manifest_hash_matches_files(short_run):
    _, out, cfg = short_run
    man = json.loads((out / "manifest.json").read_text())
    assert man["content_hash"] == content_hash(out)
    assert man["n_steps"] == 20 and man["dim"] == 2
    assert man["config"]["time"]["T"] == cfg["time"]["T"]
    assert len(man["stats"]) == 21


def test_rerun_reproduces_hash(short_run, tmp_path):
    _, out, _ = short_run
    scn, opts, cfg = load_scenario("plastic_shear", SHORT)
    write_trajectory(solve(scn, opts), tmp_path, cfg)
    assert content_hash(tmp_path) == content_hash(out)


def test_csv_headers(short_run):
    _, out, _ = short_run
    head = (out / "cells.csv").read_text().splitlines()[0].split(",")
    assert head[:2] == ["step", "cell"] and "sigma_12" in head
    head = (out / "energy.csv").read_text().splitlines()[0].split(",")
    assert head[-1] == "residual"


def test_missing_file_reported(short_run, tmp_path):
    _, out, _ = short_run
    with pytest.raises(FileNotFoundError):
        read_trajectory(tmp_path)
    for f in out.iterdir():
        (tmp_path / f.name).write_bytes(f.read_bytes())
    (tmp_path / "cells.csv").unlink()
    with pytest.raises(FileNotFoundError):
        read_trajectory(tmp_path)
