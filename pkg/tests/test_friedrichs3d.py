import numpy as np
import pytest

from dynplast.friedrichs3d import (
    build_M, build_system, boundary_equivalence, energy_norm_identity, flux_identity,
    kernel_generators, null_space, numerical_rank, permutation_C_nu, phi_map,
    verify_admissible, xi_split,
)
from dynplast.tensor_core import sym_prod, unpack
from conftest import random_spd, random_sym, random_unit

LAM, MU = 1.3, 0.8


@pytest.fixture(scope="module")
def system():
    return build_system(LAM, MU)


def random_skew(rng, scale=0.7):
    w = rng.normal(size=(3, 3)) * scale
    return w - w.T


def special_normals():
    axes = list(np.eye(3))
    s = 1 / np.sqrt(2)
    one_zero = [np.array([0, s, s]), np.array([s, 0, -s]), np.array([s, s, 0])]
    return axes + one_zero


def test_system_rejects_bad_lame():
    with pytest.raises(ValueError):
        build_system(1.0, 0.0)


def test_coefficients_symmetric(system):
    for A in system.A:
        assert np.allclose(A, A.T, atol=1e-15)


def test_a_nu_reproduces_elastodynamic_flux(system, rng):
    # A_nu U.U = -2 (sigma nu).v
    for _ in range(10):
        nu = random_unit(rng, 3)
        v, s = rng.normal(size=3), random_sym(rng, 3)
        assert flux_identity(system, nu, v, s) < 1e-12


def test_rank_kernel_and_determinant(system, rng):
    normals = [random_unit(rng, 3) for _ in range(30)] + special_normals()
    for nu in normals:
        a = system.A_nu(nu)
        assert numerical_rank(a) == 6
        assert null_space(a).shape[1] == 3
        ker = kernel_generators(system, nu)
        assert np.abs(a @ ker).max() < 1e-12
        assert numerical_rank(ker) == 3
        det = np.linalg.det(a[:3, 3:6])
        ref = -np.prod(nu) * 2 * MU * np.sqrt(3 * LAM + 2 * MU)
        assert det == pytest.approx(ref, rel=1e-10, abs=1e-14)


def test_permutation_is_identity_iff_components_nonzero(system, rng):
    nu = random_unit(rng, 3)
    C, ap, _ = permutation_C_nu(system, nu)
    assert np.array_equal(C, np.eye(9))
    for nu in special_normals():
        C, ap, _ = permutation_C_nu(system, nu)
        assert not np.array_equal(C, np.eye(9))
        assert np.allclose(C @ C.T, np.eye(9))
        assert abs(np.linalg.det(ap)) > 1e-8


def test_build_M_certificates(system, rng):
    for nu in [random_unit(rng, 3) for _ in range(20)] + special_normals():
        S1 = random_spd(rng, 3)
        bm = build_M(system, nu, S1, random_skew(rng))
        cert = verify_admissible(system, nu, bm)
        assert cert.admissible, cert


def test_nearly_degenerate_normal_still_certified(system, rng):
    # one tiny component: the natural pivot block is invertible but ill conditioned
    for tiny in (5e-5, 1e-8, 1e-13):
        nu = np.array([-0.3, tiny, -0.95])
        nu /= np.linalg.norm(nu)
        bm = build_M(system, nu, random_spd(rng, 3), random_skew(rng))
        assert not np.array_equal(bm.C, np.eye(9))
        assert verify_admissible(system, nu, bm).admissible


def law_matrix(S1, S2, nu, sign):
    # (v, sigma_pr) -> (S1 + sign S2) v - sign sigma nu as a 3x9 matrix
    cols = []
    for w in np.eye(9):
        cols.append((S1 + sign * S2) @ w[:3] - sign * unpack(w[3:], 3) @ nu)
    return np.array(cols).T


def test_equivalence_both_directions(system, rng):
    for nu in [random_unit(rng, 3) for _ in range(10)] + special_normals():
        S1, S2 = random_spd(rng, 3), random_skew(rng)
        bm = build_M(system, nu, S1, S2)
        a = system.A_nu(nu)
        for sign in (1, -1):
            # kernel states satisfy the boundary law
            N = null_space(a + sign * bm.M)
            assert N.shape[1] == 6
            for _ in range(3):
                v, s = system.from_U(N @ rng.normal(size=6))
                lhs, rhs = boundary_equivalence(system, bm, v, s, sign)
                assert lhs < 1e-9 and rhs < 1e-9
            # states satisfying the boundary law are kernel states
            W = null_space(law_matrix(S1, S2, nu, sign))
            for _ in range(3):
                w = W @ rng.normal(size=W.shape[1])
                lhs, rhs = boundary_equivalence(system, bm, w[:3], unpack(w[3:], 3), sign)
                assert rhs < 1e-9 and lhs < 1e-9


def test_zero_and_identity_are_not_admissible(system, rng):
    nu = random_unit(rng, 3)
    assert not verify_admissible(system, nu, np.zeros((9, 9))).admissible
    assert not verify_admissible(system, nu, np.eye(9)).admissible


def test_alternative_coupling_block_breaks_equivalence(system, rng):
    # M2 = M3 Ahat'^-T S2 (factors in the other order) is not admissible
    nu = random_unit(rng, 3)
    S1, S2 = random_spd(rng, 3), random_skew(rng)
    bm = build_M(system, nu, S1, S2)
    ap = bm.blocks["ap"]
    m3 = bm.blocks["M3"]
    m2 = m3 @ np.linalg.inv(ap).T @ S2
    m1 = ap @ np.linalg.solve(m3, ap.T) + m2 @ np.linalg.solve(m3, m2.T)
    M = bm.M.copy()
    x = np.linalg.solve(ap, bm.blocks["app"])
    M[:3, :3] = m1
    M[:3, 3:6], M[3:6, :3] = m2, m2.T
    M[:3, 6:], M[6:, :3] = m2 @ x, (m2 @ x).T
    cert = verify_admissible(system, nu, M)
    assert not cert.admissible


def test_symmetric_law_reduces_to_S_v_plus_traction(system, rng):
    nu = random_unit(rng, 3)
    S = random_spd(rng, 3)
    bm = build_M(system, nu, S)
    N = null_space(system.A_nu(nu) - bm.M)
    v, s = system.from_U(N @ rng.normal(size=6))
    assert np.linalg.norm(S @ v + s @ nu) < 1e-10


def test_phi_map(system, rng):
    for _ in range(10):
        nu, eta = random_unit(rng, 3), rng.normal(size=3)
        phi = phi_map(system.hooke, nu, eta)
        assert np.allclose(system.hooke.apply(sym_prod(phi, nu)) @ nu, eta, atol=1e-13)


def test_xi_split(system, rng):
    for nu in [random_unit(rng, 3) for _ in range(10)] + special_normals():
        S = random_spd(rng, 3)
        bm = build_M(system, nu, S)
        xs = xi_split(system, bm, rng.normal(size=3), random_sym(rng, 3))
        assert max(xs.residuals.values()) < 1e-10
        # both parts lie in the image of A_nu, i.e. orthogonal to its kernel
        ker = kernel_generators(system, nu)
        assert np.abs(ker.T @ xs.xi_plus).max() < 1e-10
        assert np.abs(ker.T @ xs.xi_minus).max() < 1e-10
        assert xs.quad_plus == pytest.approx(xs.energy_plus, rel=1e-10)
        assert xs.quad_minus == pytest.approx(xs.energy_minus, rel=1e-10)
        # signed flux form: -A_nu xi.xi = +- S^-1 w.w / 2
        assert xs.flux_plus == pytest.approx(xs.energy_plus, rel=1e-10)
        assert xs.flux_minus == pytest.approx(-xs.energy_minus, rel=1e-10)


def test_minus_branch_quadratic_form_is_nonnegative(system, rng):
    # M >= 0, so M xi.xi cannot equal minus a positive energy
    nu = random_unit(rng, 3)
    bm = build_M(system, nu, random_spd(rng, 3))
    xs = xi_split(system, bm, rng.normal(size=3), random_sym(rng, 3))
    assert xs.quad_minus > 0
    assert xs.quad_minus != pytest.approx(-xs.energy_minus)


def test_energy_norm_identity(system, rng):
    for _ in range(20):
        args = (rng.normal(size=3), random_sym(rng, 3), rng.normal(size=3), random_sym(rng, 3))
        assert energy_norm_identity(system, *args) < 1e-11


def test_xi_split_requires_symmetric_law(system, rng):
    nu = random_unit(rng, 3)
    bm = build_M(system, nu, np.eye(3), random_skew(rng))
    with pytest.raises(ValueError):
        xi_split(system, bm, np.zeros(3), np.zeros((3, 3)))


def test_build_M_input_validation(system):
    nu = np.array([0.0, 0.6, 0.8])
    with pytest.raises(ValueError):
        build_M(system, nu, -np.eye(3))
    with pytest.raises(ValueError):
        build_M(system, nu, np.eye(3), np.eye(3))
