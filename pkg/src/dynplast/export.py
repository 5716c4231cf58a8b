"""CSV/JSON serialization of trajectories.

A run directory holds ``nodal.csv``, ``cells.csv``, ``boundary.csv``,
``energy.csv``, the mesh in text form and ``manifest.json`` (configuration
echo, content hash, per-step solver statistics). Floats are written with
``repr`` so that they round-trip exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from dynplast import __version__
from dynplast.config import build_scenario
from dynplast.dynamics import EnergyLedger, Trajectory, boundary_datum
from dynplast.fem import assemble_operators, write_mesh
from dynplast.tensor_core import VOIGT_PAIRS, pack, unpack

AXES = "xyz"
FILES = ("nodal.csv", "cells.csv", "boundary.csv", "energy.csv")
LEDGER_COLUMNS = ("kinetic", "elastic", "plastic_dissipation", "boundary_dissipation",
                  "viscous_strain", "viscous_plastic", "work_force", "work_boundary")


def _fmt(x) -> str:
    return repr(float(x))


def _write_rows(path: Path, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def _tensor_names(prefix: str, dim: int) -> list:
    return [f"{prefix}_{i + 1}{j + 1}" for i, j in VOIGT_PAIRS[dim]]


def write_trajectory(traj: Trajectory, outdir, config: dict, audit: dict | None = None) -> Path:
    """Write all field groups and the manifest; returns the manifest path.

    ``audit`` is an optional JSON-friendly summary stored in the manifest.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    mesh = traj.mesh
    d = mesh.dim
    n = traj.n_steps
    vec = [AXES[k] for k in range(d)]

    U = traj.u.reshape(n + 1, mesh.nv, d)
    V = traj.v.reshape(n + 1, mesh.nv, d)
    _write_rows(out / "nodal.csv",
                ["step", "t", "node"] + [f"u_{a}" for a in vec] + [f"v_{a}" for a in vec],
                ([i, _fmt(traj.times[i]), a] + [_fmt(x) for x in U[i, a]] + [_fmt(x) for x in V[i, a]]
                 for i in range(n + 1) for a in range(mesh.nv)))

    E, P, S = pack(traj.e), pack(traj.p), pack(traj.sigma)
    _write_rows(out / "cells.csv",
                ["step", "cell"] + _tensor_names("e", d) + _tensor_names("p", d)
                + _tensor_names("sigma", d),
                ([i, c] + [_fmt(x) for x in E[i, c]] + [_fmt(x) for x in P[i, c]]
                 + [_fmt(x) for x in S[i, c]]
                 for i in range(n + 1) for c in range(mesh.nc)))

    fv = [traj.facet_velocity(i) for i in range(n + 1)]
    ft = [traj.facet_traction(i) for i in range(n + 1)]
    _write_rows(out / "boundary.csv",
                ["step", "facet"] + [f"v_{a}" for a in vec] + [f"traction_{a}" for a in vec],
                ([i, f] + [_fmt(x) for x in fv[i][f]] + [_fmt(x) for x in ft[i][f]]
                 for i in range(n + 1) for f in range(mesh.nf)))

    cols = traj.ledger.as_columns()
    names = list(LEDGER_COLUMNS) + ["residual"]
    _write_rows(out / "energy.csv", ["step", "t"] + names,
                ([i, _fmt(traj.times[i])] + [_fmt(cols[k][i]) for k in names]
                 for i in range(n + 1)))

    write_mesh(mesh, out / "mesh.txt")
    stats = []
    for i, st in enumerate(traj.stats):
        stats.append({
            "step": i,
            "t": float(traj.times[i]),
            "sweeps": int(st["sweeps"]),
            "q_change": float(st["q_change"]),
            "el_residual": float(st["el_residual"]) if np.isfinite(st["el_residual"]) else None,
            "perzyna_residual": float(st["perzyna_residual"]),
        })
    manifest = {
        "version": __version__,
        "config": config,
        "config_hash": hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest(),
        "content_hash": content_hash(out),
        "dim": d,
        "n_steps": n,
        "files": list(FILES) + ["mesh.txt"],
        "stats": stats,
        "audit": audit,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1))
    return path


def content_hash(outdir) -> str:
    out = Path(outdir)
    digest = hashlib.sha256()
    for name in FILES + ("mesh.txt",):
        digest.update((out / name).read_bytes())
    return digest.hexdigest()


def _read_csv(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def read_trajectory(outdir) -> Trajectory:
    """Rebuild a :class:`Trajectory` from a run directory.

    Raises
    ------
    FileNotFoundError
        If the manifest or a field file is missing.
    """
    out = Path(outdir)
    manifest_path = out / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"{manifest_path} not found")
    manifest = json.loads(manifest_path.read_text())
    for name in manifest["files"]:
        if not (out / name).exists():
            raise FileNotFoundError(f"{out / name} not found")
    cfg = dict(manifest["config"])
    cfg["mesh"] = {"file": str((out / "mesh.txt").resolve())}
    scn, opts = build_scenario(cfg, out)
    mesh = scn.mesh
    d = mesh.dim
    n = manifest["n_steps"]
    nodal = _read_csv(out / "nodal.csv")
    times = nodal[::mesh.nv, 1]
    u = nodal[:, 3:3 + d].reshape(n + 1, mesh.ndof)
    v = nodal[:, 3 + d:3 + 2 * d].reshape(n + 1, mesh.ndof)
    cells = _read_csv(out / "cells.csv")
    m = d * (d + 1) // 2
    e = unpack(cells[:, 2:2 + m].reshape(n + 1, mesh.nc, m), d)
    p = unpack(cells[:, 2 + m:2 + 2 * m].reshape(n + 1, mesh.nc, m), d)
    sigma = unpack(cells[:, 2 + 2 * m:2 + 3 * m].reshape(n + 1, mesh.nc, m), d)
    ops = assemble_operators(mesh, scn.hooke, scn.law.per_facet(mesh.nf))
    stats = [{"sweeps": s["sweeps"], "functional": [], "q_change": s["q_change"],
              "el_residual": s["el_residual"] if s["el_residual"] is not None else float("nan"),
              "perzyna_residual": s["perzyna_residual"]} for s in manifest["stats"]]
    traj = Trajectory(scn, opts, ops, times, u, v, e, p, sigma,
                      boundary_datum(scn, opts.eps), stats)
    en = _read_csv(out / "energy.csv")
    traj.ledger = EnergyLedger(*[en[:, 2 + k] for k in range(len(LEDGER_COLUMNS))])
    return traj
