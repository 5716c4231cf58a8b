"""Command line interface: ``run``, ``audit``, ``sweep`` and ``friedrichs``.

Exit codes: 0 success, 2 solver failure, 3 invalid configuration or
missing input, 4 failed audit.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from dynplast import audit
from dynplast.config import load_scenario
from dynplast.dynamics import ConfigError, SolverError, solve
from dynplast.export import read_trajectory, write_trajectory

log = logging.getLogger("dynplast")

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG, EXIT_AUDIT = 0, 2, 3, 4
ALL_CHECKS = ("energy", "flow", "boundary", "entropic", "convexity")


def output_root() -> Path:
    return Path(os.environ.get("DYNPLAST_OUTPUT_ROOT", "runs"))


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(pairs) -> dict:
    out = {}
    for item in pairs or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError("schema", f"override '{item}' must look like section.key=value")
        out[key.strip()] = _parse_value(val.strip())
    return out


def _error(code: int, exc: Exception) -> int:
    # human-readable line on stderr, machine-readable JSON on stdout
    log.error("%s", exc)
    doc = {"status": "error", "exit_code": code, "type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        res = float(exc.residual)
        doc.update(check=exc.check, residual=res if np.isfinite(res) else None)
    print(json.dumps(doc, indent=1))
    return code


def run_one(config, outdir, overrides=None, boundary: bool = False) -> dict:
    """Load, solve and export one configuration; returns a short summary.

    With ``boundary`` the relaxed boundary residual is added to the summary.
    """
    scn, opts, cfg = load_scenario(config, overrides)
    traj = solve(scn, opts)
    rep = audit.energy_audit(traj)
    summary = {
        "outdir": str(outdir),
        "n_steps": traj.n_steps,
        "max_sweeps": max(s["sweeps"] for s in traj.stats),
        "energy_residual": float(rep.max_abs),
        "energy_relative": float(rep.relative),
        "plastic_dissipation": float(traj.ledger.plastic.sum()),
        "max_perzyna": max(s["perzyna_residual"] for s in traj.stats),
        "max_distance_to_K": float(np.max(scn.K.distance(traj.sigma))),
    }
    if boundary:
        summary["relaxed_bc_residual"] = float(audit.relaxed_bc_audit(traj).relaxed.max())
    write_trajectory(traj, outdir, cfg, audit={**audit.report_dict(rep.checks()), **summary})
    return summary


def cmd_run(args) -> int:
    outdir = Path(args.output) if args.output else output_root() / Path(args.config).stem
    try:
        summary = run_one(args.config, outdir, _overrides(args.set))
    except (ConfigError, FileNotFoundError) as exc:
        return _error(EXIT_CONFIG, exc)
    except SolverError as exc:
        return _error(EXIT_SOLVER, exc)
    print(json.dumps(summary, indent=1))
    return EXIT_OK


def run_checks(traj, names, samples: int = 100, C: float = 10.0) -> list:
    o = traj.options
    checks = []
    for name in names:
        if name == "energy":
            checks += audit.energy_audit(traj).checks()
        elif name == "flow":
            checks += audit.flow_rule_audit(traj).checks()
        elif name == "boundary":
            checks += audit.relaxed_bc_audit(traj).checks(tol=10 * o.tol_inner)
        elif name == "entropic":
            checks += audit.entropic_audit(traj, audit.make_samples(traj, samples)).checks(C)
        elif name == "convexity":
            checks += audit.convexity_inequality_audit(traj).checks(C, o.delta + o.eps)
        else:
            raise ConfigError("schema", f"unknown check '{name}'")
    return checks


def cmd_audit(args) -> int:
    names = [c for c in (args.checks.split(",") if args.checks is not None else ALL_CHECKS) if c]
    try:
        traj = read_trajectory(args.trajectory)
    except (FileNotFoundError, ConfigError) as exc:
        return _error(EXIT_CONFIG, exc)
    if not names:
        log.warning("no checks requested")
        print(json.dumps(audit.report_dict([]), indent=1))
        return EXIT_OK
    try:
        checks = run_checks(traj, names, args.samples, args.C)
    except ConfigError as exc:
        return _error(EXIT_CONFIG, exc)
    report = audit.report_dict(checks)
    text = json.dumps(report, indent=1)
    if args.report:
        Path(args.report).write_text(text)
    print(text)
    return EXIT_OK if report["pass"] else EXIT_AUDIT


PARAM_ALIASES = {"eps": "solver.eps", "delta": "time.delta"}
SWEEP_COLUMNS = ("value", "energy_residual", "relaxed_bc_residual", "plastic_dissipation",
                 "max_distance_to_K")


def _sweep_job(job):
    config, outdir, overrides = job
    try:
        return run_one(config, outdir, overrides, boundary=True)
    except (ConfigError, SolverError) as exc:
        return {"outdir": str(outdir), "error": f"{type(exc).__name__}: {exc}"}


def sweep_assertions(param: str, values, runs) -> list:
    """Monotonicity or order checks for an eps or delta sweep.

    Decreasing ``eps`` must not increase the relaxed boundary residual by
    more than 10%; decreasing ``delta`` must shrink the energy residual at an
    observed order between ``log2 1.5`` and ``log2 3``.
    """
    ok = [(v, r) for v, r in zip(values, runs) if "error" not in r]
    ok.sort(key=lambda item: -item[0])
    checks = []
    for (v0, r0), (v1, r1) in zip(ok, ok[1:]):
        if param == "solver.eps":
            a, b = r0["relaxed_bc_residual"], r1["relaxed_bc_residual"]
            checks.append(audit.Check(f"relaxed_bc_monotone[{v0}->{v1}]", 1.1, b / max(a, 1e-300),
                                      b <= 1.1 * a))
        elif param == "time.delta":
            a, b = r0["energy_residual"], r1["energy_residual"]
            order = np.log(a / max(b, 1e-300)) / np.log(v0 / v1) if a > 0 else np.nan
            checks.append(audit.Check(f"energy_residual_order[{v0}->{v1}]", 1.0, order,
                                      bool(np.log2(1.5) <= order <= np.log2(3))))
    return checks


def cmd_sweep(args) -> int:
    values = [_parse_value(v) for v in args.values.split(",") if v.strip()]
    if len(values) < 2:
        return _error(EXIT_CONFIG, ConfigError("schema", "a sweep needs at least two values"))
    param = PARAM_ALIASES.get(args.param, args.param)
    base = _overrides(args.set)
    root = Path(args.output) if args.output else output_root() / f"{Path(args.config).stem}_sweep"
    jobs = [(args.config, root / f"{param}={v}", {**base, param: v}) for v in values]
    try:
        load_scenario(args.config, {**base, param: values[0]})
    except (ConfigError, FileNotFoundError) as exc:
        return _error(EXIT_CONFIG, exc)
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    checks = sweep_assertions(param, values, results)
    summary = {"param": param, "values": values, "runs": results, **audit.report_dict(checks)}
    root.mkdir(parents=True, exist_ok=True)
    (root / "sweep.json").write_text(json.dumps(summary, indent=1))
    with open(root / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for v, r in zip(values, results):
            w.writerow([repr(v)] + [repr(r.get(k, float("nan"))) for k in SWEEP_COLUMNS[1:]])
    print(json.dumps(summary, indent=1))
    if any("error" in r for r in results):
        return EXIT_CONFIG if any("ConfigError" in r.get("error", "") for r in results) else EXIT_SOLVER
    return EXIT_OK if summary["pass"] else EXIT_AUDIT


def _vector(text, n=None):
    vals = [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} numbers, got {len(vals)}")
    return np.array(vals)


def cmd_friedrichs(args) -> int:
    from dynplast.friedrichs3d import build_system, friedrichs_report
    try:
        system = build_system(args.lam, args.mu)
        nu = _vector(args.nu, 3)
        nu = nu / np.linalg.norm(nu)
        S1 = _vector(args.S1, 9).reshape(3, 3) if args.S1 else np.eye(3)
        S2 = _vector(args.S2, 9).reshape(3, 3) if args.S2 else None
        z = _vector(args.z, 3) if args.z else None
        tau = _vector(args.tau, 9).reshape(3, 3) if args.tau else None
        report = friedrichs_report(system, nu, S1, S2, z, tau)
    except ValueError as exc:
        return _error(EXIT_CONFIG, exc)
    print(json.dumps(report, indent=1))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynplast", description=__doc__.splitlines()[0])
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve a scenario and export the trajectory")
    r.add_argument("config", help="TOML file or shipped scenario name")
    r.add_argument("-o", "--output")
    r.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("audit", help="check an exported trajectory")
    a.add_argument("trajectory")
    a.add_argument("--checks", help=f"comma separated subset of {','.join(ALL_CHECKS)}")
    a.add_argument("--samples", type=int, default=100)
    a.add_argument("--C", type=float, default=10.0, help="allowed slack constant")
    a.add_argument("--report")
    a.set_defaults(func=cmd_audit)

    s = sub.add_parser("sweep", help="run a scenario for several values of one parameter")
    s.add_argument("config")
    s.add_argument("--param", required=True, help="eps, delta or any section.key")
    s.add_argument("--values", required=True, help="comma separated")
    s.add_argument("-o", "--output")
    s.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    f = sub.add_parser("friedrichs", help="build and certify a boundary matrix")
    f.add_argument("--lam", type=float, required=True)
    f.add_argument("--mu", type=float, required=True)
    f.add_argument("--nu", required=True, help="normal, e.g. 1,2,2")
    f.add_argument("--S1", help="row-major 3x3, default identity")
    f.add_argument("--S2", help="row-major skew 3x3")
    f.add_argument("--z")
    f.add_argument("--tau", help="row-major symmetric 3x3")
    f.set_defaults(func=cmd_friedrichs)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
