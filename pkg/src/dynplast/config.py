"""Scenario files (TOML) and the inline expression language.

Expressions are arithmetic in the variables ``x, y, z, t`` with the
functions ``sin cos tan exp log sqrt abs tanh min max`` and the constant
``pi``. They are evaluated vectorized over vertices or cell centroids.
"""

from __future__ import annotations

import ast
import copy
import operator
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from dynplast.convex_sets import Ball, BoundaryLaw, Polyhedral, VonMisesCylinder
from dynplast.dynamics import ConfigError, Scenario, SolverOptions
from dynplast.fem import generate_box_mesh, read_mesh, strain
from dynplast.tensor_core import Hooke, unpack

_BINOPS = {
    ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
    ast.Div: operator.truediv, ast.Pow: operator.pow,
}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "tanh": np.tanh,
    "min": np.minimum, "max": np.maximum,
}
_CONSTS = {"pi": np.pi}
VARIABLES = ("x", "y", "z", "t")


class Expression:
    """Compiled scalar expression.

    Examples
    --------
    >>> Expression("sin(pi*x) * t")(x=np.array([0.5]), t=2.0)
    array([2.])
    """

    def __init__(self, source):
        self.source = str(source)
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ConfigError("expression", f"cannot parse '{self.source}': {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ConfigError("expression", f"bad constant in '{self.source}'")
        elif isinstance(node, ast.Name):
            if node.id not in VARIABLES and node.id not in _CONSTS:
                raise ConfigError("expression", f"unknown name '{node.id}' in '{self.source}'")
        elif isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            self._check(node.operand)
        elif (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
              and node.func.id in _FUNCS and not node.keywords):
            for a in node.args:
                self._check(a)
        else:
            raise ConfigError("expression", f"unsupported syntax in '{self.source}'")

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else _CONSTS[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](self._eval(node.operand, env))
        args = [self._eval(a, env) for a in node.args]
        return _FUNCS[node.func.id](*args)

    def __call__(self, x=0.0, y=0.0, z=0.0, t=0.0):
        env = {"x": x, "y": y, "z": z, "t": t}
        shape = np.broadcast(*[np.asarray(v) for v in env.values()]).shape
        return np.broadcast_to(np.asarray(self._eval(self._tree, env), dtype=float), shape).copy()


def _points_env(points):
    names = ("x", "y", "z")
    return {names[k]: points[:, k] for k in range(points.shape[1])}


def eval_vector(exprs, points, t=0.0, name="field"):
    """Evaluate one expression per component at each point, shape (npts, ncomp)."""
    if isinstance(exprs, (str, int, float)):
        raise ConfigError("schema", f"{name} must be a list of expressions")
    env = _points_env(points)
    return np.stack([Expression(e)(t=t, **env) for e in exprs], axis=1)


DEFAULTS = {
    "boundary": {"S": 1.0},
    "initial": {"u0": None, "v0": None, "e0": "compatible", "p0": None},
    "load": {"f": None},
    "solver": {"tol_inner": 1e-10, "max_sweeps": 500, "first_step": "elastic"},
}


def merge_defaults(raw: dict) -> dict:
    cfg = copy.deepcopy(raw)
    for sec, vals in DEFAULTS.items():
        cfg.setdefault(sec, {})
        for k, v in vals.items():
            cfg[sec].setdefault(k, v)
    return cfg


def _require(cfg, section, key):
    try:
        return cfg[section][key]
    except KeyError:
        raise ConfigError("schema", f"missing [{section}] {key}") from None


def build_mesh(cfg: dict, base_dir: Path | None = None):
    m = cfg.get("mesh")
    if m is None:
        raise ConfigError("schema", "missing [mesh] section")
    if "file" in m:
        path = Path(m["file"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return read_mesh(path)
    dim = int(_require(cfg, "mesh", "dim"))
    return generate_box_mesh(dim, m.get("lengths", [1.0] * dim), _require(cfg, "mesh", "subdivisions"))


def build_constraint(cfg: dict, dim: int):
    c = cfg.get("constraint")
    if c is None:
        raise ConfigError("schema", "missing [constraint] section")
    kind = c.get("kind")
    try:
        if kind == "ball":
            return Ball(float(c["radius"]), dim)
        if kind == "von_mises":
            return VonMisesCylinder(float(c["k"]), dim)
        if kind == "polyhedral":
            normals = unpack(np.asarray(c["normals"], dtype=float), dim)
            return Polyhedral(normals, np.asarray(c["offsets"], dtype=float))
    except KeyError as exc:
        raise ConfigError("schema", f"[constraint] {kind} needs {exc}") from None
    except ValueError as exc:
        raise ConfigError("constraint", str(exc)) from None
    raise ConfigError("schema", f"unknown constraint kind '{kind}'")


def build_scenario(cfg: dict, base_dir: Path | None = None) -> tuple[Scenario, SolverOptions]:
    """Turn a parsed configuration dict into solver inputs.

    Raises
    ------
    ConfigError
        On schema problems or violated model hypotheses.
    """
    cfg = merge_defaults(cfg)
    mesh = build_mesh(cfg, base_dir)
    dim = mesh.dim
    try:
        hooke = Hooke(float(_require(cfg, "material", "lambda")),
                      float(_require(cfg, "material", "mu")), dim)
    except ValueError as exc:
        raise ConfigError("ellipticity", str(exc)) from None
    K = build_constraint(cfg, dim)
    S = np.asarray(cfg["boundary"]["S"], dtype=float)
    if S.ndim == 0:
        S = float(S) * np.eye(dim)
    try:
        law = BoundaryLaw(S)
    except ValueError as exc:
        raise ConfigError("boundary_coercivity", str(exc)) from None

    ini = cfg["initial"]
    verts, cents = mesh.vertices, mesh.cell_centroids
    zero_vec = ["0"] * dim
    u0 = eval_vector(ini["u0"] or zero_vec, verts, name="u0")
    v0 = eval_vector(ini["v0"] or zero_vec, verts, name="v0")
    ncomp = dim * (dim + 1) // 2
    eu0 = strain(mesh, u0)
    e0_spec, p0_spec = ini["e0"], ini["p0"]
    if p0_spec is None:
        p0_spec = ["0"] * ncomp if e0_spec == "compatible" else "compatible"
    if e0_spec == "compatible" and p0_spec == "compatible":
        raise ConfigError("schema", "e0 and p0 cannot both be 'compatible'")
    if e0_spec == "compatible":
        p0 = unpack(eval_vector(p0_spec, cents, name="p0"), dim)
        e0 = eu0 - p0
    elif p0_spec == "compatible":
        e0 = unpack(eval_vector(e0_spec, cents, name="e0"), dim)
        p0 = eu0 - e0
    else:
        e0 = unpack(eval_vector(e0_spec, cents, name="e0"), dim)
        p0 = unpack(eval_vector(p0_spec, cents, name="p0"), dim)

    f_exprs = cfg["load"]["f"]
    force = None
    if f_exprs is not None:
        if len(f_exprs) != dim:
            raise ConfigError("schema", f"load f needs {dim} components")
        compiled = [Expression(e) for e in f_exprs]
        env = _points_env(verts)

        def force(t, _c=compiled, _env=env):
            return np.stack([e(t=t, **_env) for e in _c], axis=1)

    scn = Scenario(mesh, hooke, K, law, u0, v0, e0, p0, force)
    sol = cfg["solver"]
    try:
        opts = SolverOptions(
            delta=float(_require(cfg, "time", "delta")),
            T=float(_require(cfg, "time", "T")),
            eps=float(_require(cfg, "solver", "eps")),
            tol_inner=float(sol["tol_inner"]),
            max_sweeps=int(sol["max_sweeps"]),
            first_step=str(sol["first_step"]),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("schema", str(exc)) from None
    return scn, opts


def read_config(path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("schema", f"{path}: {exc}") from None


def set_path(cfg: dict, dotted: str, value) -> dict:
    """Copy of ``cfg`` with ``section.key`` replaced, e.g. ``solver.eps``."""
    out = copy.deepcopy(cfg)
    section, _, key = dotted.partition(".")
    if not key:
        raise ConfigError("schema", f"parameter '{dotted}' must look like section.key")
    out.setdefault(section, {})[key] = value
    return out


def scenario_dir() -> Path:
    """Directory of the shipped scenario files."""
    return Path(__file__).with_name("scenarios")


def load_scenario(name_or_path, overrides: dict | None = None):
    """Load a shipped scenario by name or a TOML file by path.

    Returns
    -------
    (Scenario, SolverOptions, dict)
        The last item is the raw configuration after overrides.
    """
    path = Path(name_or_path)
    if not path.exists():
        path = scenario_dir() / f"{name_or_path}.toml"
    cfg = read_config(path)
    for k, v in (overrides or {}).items():
        cfg = set_path(cfg, k, v)
    scn, opts = build_scenario(cfg, path.parent)
    return scn, opts, cfg
