import numpy as np
import pytest
from scipy.linalg import null_space
from scipy.optimize import minimize

from dynplast.config import load_scenario
from dynplast.convex_sets import Ball, BoundaryLaw, Polyhedral, VonMisesCylinder, _frob_basis
from dynplast.dynamics import (
    ConfigError, Scenario, SolverError, SolverOptions, check_compatibility, perzyna_residual,
    plastic_prox, solve,
)
from dynplast.fem import assemble_operators, generate_box_mesh, strain
from dynplast.tensor_core import Hooke, frob
from conftest import random_sym


def box_support(dim, r):
    b = _frob_basis(dim)
    return lambda q: r * np.abs(np.einsum("ij,kij->k", q, b)).sum()


def increment_basis(K, dim):
    # the von Mises support is finite only on deviatoric increments
    b = _frob_basis(dim)
    if isinstance(K, VonMisesCylinder):
        tr = np.einsum("kii->k", b)[None, :]
        b = np.einsum("kl,kij->lij", null_space(tr), b)
    return b


def brute_prox(K, hooke, e_tot, p, eps, delta, support=None):
    kappa = eps / delta
    support = K.support if support is None else support
    basis = increment_basis(K, hooke.dim)

    def f(x):
        d = np.einsum("k,kij->ij", x, basis)
        return float(hooke.quadratic_form(e_tot - p - d) + support(d) + 0.5 * kappa * np.sum(d * d))

    best = np.zeros(len(basis))
    for scale in (1e-1, 1e-3, 1e-5):
        simplex = np.vstack([best, best + scale * np.eye(len(best))])
        best = minimize(f, best, method="Nelder-Mead",
                        options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 4000,
                                 "initial_simplex": simplex}).x
    return p + np.einsum("k,kij->ij", best, basis)


def box_polytope(dim, r):
    b = _frob_basis(dim)
    return Polyhedral(np.concatenate([b, -b]), np.full(2 * len(b), r))


@pytest.mark.parametrize("K", [Ball(0.3, 2), VonMisesCylinder(0.3, 2), box_polytope(2, 0.25)],
                         ids=lambda k: type(k).__name__)
def test_prox_matches_brute_force(K, rng):
    hooke = Hooke(1.2, 0.9, 2)
    for _ in range(4):
        e_tot = random_sym(rng, 2, 0.5)
        p = random_sym(rng, 2, 0.1)
        if isinstance(K, VonMisesCylinder):
            p -= np.trace(p) / 2 * np.eye(2)
        q, sigma = plastic_prox(K, hooke, e_tot, p, 0.01, 0.02)
        sup = box_support(2, 0.25) if isinstance(K, Polyhedral) else None
        ref = brute_prox(K, hooke, e_tot, p, 0.01, 0.02, sup)
        assert np.allclose(q, ref, atol=1e-6)
        assert np.allclose(sigma, hooke.apply(e_tot - q))


@pytest.mark.parametrize("K", [Ball(0.3, 3), VonMisesCylinder(0.3, 3), box_polytope(3, 0.3)],
                         ids=lambda k: type(k).__name__)
def test_prox_satisfies_viscoplastic_flow_rule(K, rng):
    hooke = Hooke(1.0, 1.0, 3)
    e_tot = np.array([random_sym(rng, 3, 0.6) for _ in range(20)])
    p = np.zeros_like(e_tot)
    for eps, delta in [(1e-1, 1e-2), (1e-3, 1e-2), (1e-2, 1e-3)]:
        q, sigma = plastic_prox(K, hooke, e_tot, p, eps, delta)
        res = perzyna_residual(K, sigma, q - p, eps, delta)
        assert res.max() * eps / delta <= 1e-10 * frob(sigma).max()


def test_general_prox_failure_is_reported(rng):
    hooke = Hooke(1.0, 1.0, 2)
    e = np.array([random_sym(rng, 2, 1.0) for _ in range(5)])
    with pytest.raises(SolverError):
        plastic_prox(box_polytope(2, 0.1), hooke, e, np.zeros_like(e), 1e-3, 1e-2, max_iter=2)


def test_prox_elastic_cells_untouched(rng):
    hooke = Hooke(1.0, 1.0, 2)
    K = Ball(10.0, 2)
    e = random_sym(rng, 2, 0.1)
    p = random_sym(rng, 2, 0.1)
    q, _ = plastic_prox(K, hooke, e, p, 0.01, 0.01)
    assert np.array_equal(q, p)


def test_von_mises_increment_is_deviatoric(rng):
    hooke = Hooke(2.0, 1.0, 3)
    e = np.array([random_sym(rng, 3) for _ in range(10)])
    q, _ = plastic_prox(VonMisesCylinder(0.1, 3), hooke, e, np.zeros_like(e), 0.01, 0.01)
    assert np.abs(np.trace(q, axis1=1, axis2=2)).max() < 1e-15


def small_scenario(dim=2, K=None, v0=None, force=None, n=3):
    mesh = generate_box_mesh(dim, [1.0] * dim, [n] * dim)
    hooke = Hooke(1.0, 1.0, dim)
    z = np.zeros((mesh.nv, dim))
    zc = np.zeros((mesh.nc, dim, dim))
    K = Ball(1e6, dim) if K is None else K
    return Scenario(mesh, hooke, K, BoundaryLaw(np.eye(dim)), z,
                    z if v0 is None else v0, zc, zc.copy(), force)


def test_elastic_run_matches_dense_linear_scheme():
    # with no plasticity each step is one linear solve; redo it with dense algebra
    dim = 2
    mesh = generate_box_mesh(dim, [1.0, 1.0], [3, 3])
    x = mesh.vertices
    force = lambda t: np.stack([np.sin(np.pi * x[:, 1]) * (1 + t), x[:, 0] * t], axis=1)
    scn = small_scenario(force=force)
    opts = SolverOptions(delta=0.05, T=0.5, eps=0.02)
    traj = solve(scn, opts)
    ops = assemble_operators(mesh, scn.hooke, np.eye(dim))
    M, K, V, B = (a.toarray() for a in (ops.mass, ops.stiffness, ops.viscosity, ops.boundary))
    d, eps = opts.delta, opts.eps
    L = K + eps / d * V + M / d**2 + B / d
    u = [np.zeros(mesh.ndof), np.zeros(mesh.ndof)]
    for i in range(2, opts.n_steps + 1):
        F = M @ force((i - 1) * d).ravel()
        rhs = eps / d * V @ u[-1] + M @ (2 * u[-1] - u[-2]) / d**2 + B @ u[-1] / d + F
        u.append(np.linalg.solve(L, rhs))
    assert np.abs(np.array(u) - traj.u).max() <= 1e-10 * np.abs(traj.u).max()


def test_sweeps_decrease_functional(plastic_traj):
    for st in plastic_traj.stats[2:]:
        f = np.array(st["functional"])
        assert np.all(np.diff(f) <= 1e-12 * (1 + np.abs(f[1:])))


def test_inner_iteration_contracts(plastic_traj):
    sweeps = [st["sweeps"] for st in plastic_traj.stats[2:]]
    assert max(sweeps) <= 20


def test_solver_failure_is_reported():
    scn, opts, _ = load_scenario("plastic_shear", {"solver.max_sweeps": 1, "time.T": 0.5})
    with pytest.raises(SolverError):
        solve(scn, opts)


def test_compatibility_checks_named():
    scn = small_scenario()
    check_compatibility(scn)
    bad = small_scenario(v0=np.ones((16, 2)))
    with pytest.raises(ConfigError) as exc:
        check_compatibility(bad)
    assert exc.value.check == "boundary"
    scn.e0 = scn.e0 + 0.1 * np.eye(2)
    with pytest.raises(ConfigError) as exc:
        check_compatibility(scn)
    assert exc.value.check == "strain_split"
    scn.p0 = scn.p0 - 0.1 * np.eye(2)
    scn.K = Ball(0.01, 2)
    with pytest.raises(ConfigError) as exc:
        check_compatibility(scn)
    assert exc.value.check == "stress_admissible"


@pytest.mark.parametrize("kw", [{"delta": 0.0}, {"eps": 0.0}, {"first_step": "x"}])
def test_option_validation(kw):
    base = {"delta": 0.1, "T": 1.0, "eps": 0.1}
    with pytest.raises(ConfigError):
        SolverOptions(**{**base, **kw})


def test_zero_data_gives_zero_trajectory():
    traj = solve(small_scenario(), SolverOptions(delta=0.1, T=0.5, eps=0.1))
    assert not np.any(traj.u) and not np.any(traj.sigma)
    assert not np.any(traj.ledger.residual)


def test_plastic_first_step_variant():
    mesh = generate_box_mesh(2, [1.0, 1.0], [4, 4])
    x = mesh.vertices
    v0 = np.stack([5 * np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]), 0 * x[:, 0]], axis=1)
    scn = small_scenario(K=VonMisesCylinder(0.05, 2), v0=v0, n=4)
    el = solve(scn, SolverOptions(delta=0.01, T=0.2, eps=0.01))
    pl = solve(scn, SolverOptions(delta=0.01, T=0.2, eps=0.01, first_step="plastic"))
    # the first plastic step yields immediately, the elastic one does not
    assert not np.any(el.p[1]) and np.any(pl.p[1])
    assert np.all(np.isfinite(pl.ledger.residual))
    # both converge to the same motion as delta -> 0; here they stay close
    assert np.abs(el.u[-1] - pl.u[-1]).max() < 0.1 * np.abs(el.u[-1]).max()


def test_energy_residual_nonpositive(plastic_traj, elastic_traj):
    for traj in (plastic_traj, elastic_traj):
        L = traj.ledger
        scale = np.abs(L.mechanical).max() + np.abs(L.work).max()
        assert np.diff(L.residual).max() <= 1e-9 * scale
        assert L.plastic.min() >= 0


def test_plastic_run_yields(plastic_traj):
    assert plastic_traj.ledger.plastic.sum() > 0
    assert np.any(plastic_traj.p[-1])
