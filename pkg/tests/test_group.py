import io
import math

import numpy as np
import pytest

from stochlie.fields import PolyVectorField
from stochlie.group import (L_X, L_Y, L_Z, NORTH_POLE, BasisError, Side, ad_matrix, adjoint, affine1, affine_action,
                            custom_group, expm, flatten_elements, heisenberg, homogeneous_brownian_path,
                            integrate_group_sde, matrix_action, one_point_motion, pos_diag, project_homogeneous,
                            right_invariant_system, so3, stochastic_exponential, translate_solution)
from stochlie.noise import TimeGrid, sample_brownian, with_time_component, zero_path
from stochlie.sde import StratonovichSystem, integrate_heun


def rodrigues(omega):
    """Rotation by angle |omega| about omega."""
    theta = float(np.linalg.norm(omega))
    K = omega[0] * L_X + omega[1] * L_Y + omega[2] * L_Z
    if theta == 0:
        return np.eye(3)
    return np.eye(3) + math.sin(theta) / theta * K + (1 - math.cos(theta)) / theta ** 2 * K @ K


def test_expm_zero():
    assert np.array_equal(expm(np.zeros((3, 3))), np.eye(3))


def test_expm_scalar():
    assert expm([[0.7]])[0, 0] == pytest.approx(math.exp(0.7), rel=1e-15)


def test_expm_matches_rodrigues():
    rng = np.random.default_rng(0)
    for _ in range(20):
        omega = rng.normal(size=3) * 2
        R = expm(so3().to_matrix(omega))
        assert np.max(np.abs(R - rodrigues(omega))) <= 1e-13
        assert np.max(np.abs(R.T @ R - np.eye(3))) <= 1e-13


def test_expm_inverse():
    rng = np.random.default_rng(1)
    for _ in range(10):
        xi = rng.normal(size=(3, 3))
        assert np.max(np.abs(expm(xi) @ expm(-xi) - np.eye(3))) <= 1e-12


def test_adjoint_identity():
    G = affine1()
    assert np.allclose(adjoint(G, np.eye(2), [0.3, -1.2]), [0.3, -1.2], atol=1e-15)


def test_adjoint_affine():
    G = affine1()
    for d0 in (-1.5, 0.0, 0.4, 3.0):
        got = adjoint(G, expm(d0 * G.basis[0]), G.basis[1])
        assert np.allclose(got, [-d0, 1.0], atol=1e-12)


def test_adjoint_equals_exp_ad():
    G = so3()
    rng = np.random.default_rng(2)
    for _ in range(10):
        xi = rng.normal(size=3) * 0.3
        Ad = np.column_stack([adjoint(G, expm(G.to_matrix(xi)), e) for e in G.basis])
        series = expm(ad_matrix(G, xi))
        assert np.max(np.abs(Ad - series)) <= 1e-10


def test_adjoint_outside_span():
    G = affine1()
    with pytest.raises(BasisError):
        G.coords(np.array([[0.0, 0.0], [1.0, 0.0]]))


def test_group_basis_validation():
    with pytest.raises(ValueError):
        custom_group("dup", [np.eye(2), 2 * np.eye(2)])


def test_zero_path_constant():
    G = affine1()
    g0 = np.array([[2.0, 1.0], [0.0, 1.0]])
    traj = integrate_group_sde(G, zero_path(TimeGrid(1.0, 16), 2), g0)
    assert np.all(traj.elements == g0)


def test_posdiag_telescopes_to_gbm():
    mu, sigma = np.array([0.1, -0.2]), np.array([0.2, 0.5])
    path = with_time_component(sample_brownian(TimeGrid(1.0, 1024), 2, 4))
    t = path.component(0)
    weights = np.zeros((2, 3))
    for i in range(2):
        weights[i, 0] = mu[i] - sigma[i] ** 2 / 2
        weights[i, i + 1] = sigma[i]
    X = path.mix(weights)
    q0 = np.array([1.0, 2.0])
    traj = integrate_group_sde(pos_diag(2), X, np.diag(q0))
    exact = q0 * np.exp((mu - sigma ** 2 / 2) * t[:, None] + sigma * path.values[:, 1:])
    got = np.stack([np.diag(g) for g in traj.elements])
    assert np.max(np.abs(got - exact) / exact) <= 1e-12
    assert not traj.flagged


def test_so3_orthogonality():
    G = so3()
    B = sample_brownian(TimeGrid(1.0, 1024), 2, 6)
    traj = integrate_group_sde(G, homogeneous_brownian_path(G, [0, 1], B))
    assert traj.defect <= 1e-10


def test_translate_identity():
    G = affine1()
    traj = integrate_group_sde(G, with_time_component(sample_brownian(TimeGrid(1.0, 64), 1, 0)))
    same = translate_solution(traj, np.eye(2), G)
    assert np.array_equal(same.elements, traj.elements)


@pytest.mark.parametrize("G,g", [
    (affine1(), np.array([[1.7, -0.4], [0.0, 1.0]])),
    (pos_diag(2), np.diag([0.5, 3.0])),
])
def test_translation_covariance(G, g):
    path = sample_brownian(TimeGrid(1.0, 1024), 1, 8)
    path = with_time_component(path) if G.l == 2 else path
    direct = integrate_group_sde(G, path, g)
    moved = translate_solution(integrate_group_sde(G, path), g, G)
    assert np.max(np.abs(moved.elements - direct.elements)) <= 1e-12


def test_stochastic_exponential_covariance():
    G = affine1()
    path = with_time_component(sample_brownian(TimeGrid(1.0, 512), 1, 9))
    g = np.array([[0.5, 2.0], [0.0, 1.0]])
    direct = integrate_group_sde(G, path, g, side=Side.RIGHT_ACTION_LEFT_INVARIANT)
    moved = translate_solution(stochastic_exponential(G, path), g, G)
    assert np.max(np.abs(moved.elements - direct.elements)) <= 1e-12


def test_translate_requires_identity_start():
    G = affine1()
    traj = integrate_group_sde(G, zero_path(TimeGrid(1.0, 4), 2), np.array([[2.0, 0.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        translate_solution(traj, np.eye(2))


def test_affine_bottom_row_exact():
    G = affine1()
    traj = integrate_group_sde(G, with_time_component(sample_brownian(TimeGrid(1.0, 256), 1, 1)))
    assert np.all(traj.elements[:, 1] == [0.0, 1.0])
    assert np.all(traj.elements[:, 0, 0] > 0)


def test_one_point_motion_trivial_action():
    G = affine1()
    traj = integrate_group_sde(G, with_time_component(sample_brownian(TimeGrid(1.0, 32), 1, 1)))
    opm = one_point_motion(traj, lambda g, z: z, [0.25])
    assert np.all(opm.states == 0.25)


def test_one_point_motion_identity_trajectory():
    traj = integrate_group_sde(affine1(), zero_path(TimeGrid(1.0, 8), 2))
    assert np.all(one_point_motion(traj, affine_action, [1.5]).states == 1.5)


def test_one_point_motion_solves_affine_sde():
    # dGamma = dt + Gamma o dB; per-path error has a heavy tail, so check the mean over paths
    G = affine1()
    sys = StratonovichSystem([PolyVectorField.partial(1, 0), PolyVectorField.linear([[1.0]])], np.eye(2))
    errs = []
    for p in range(16):
        path = with_time_component(sample_brownian(TimeGrid(1.0, 1024), 1, 21, p))
        opm = one_point_motion(integrate_group_sde(G, path), affine_action, [0.5])
        errs.append(np.max(np.abs(opm.states - integrate_heun(sys, path, [0.5]).states)))
    assert np.mean(errs) <= 2e-3


def test_isotropy_fixes_north_pole():
    G = so3()
    B = sample_brownian(TimeGrid(1.0, 256), 1, 3)
    traj = integrate_group_sde(G, homogeneous_brownian_path(G, [2], B))
    proj = project_homogeneous(traj, NORTH_POLE, G)
    assert np.max(np.abs(proj.states - NORTH_POLE)) <= 1e-15


def test_sphere_projection_vs_heun():
    G = so3()
    B = sample_brownian(TimeGrid(1.0, 1024), 2, 2)
    proj = project_homogeneous(integrate_group_sde(G, homogeneous_brownian_path(G, [0, 1], B)), NORTH_POLE, G)
    sys = StratonovichSystem([PolyVectorField.linear(L_X), PolyVectorField.linear(L_Y)], np.eye(2))
    direct = integrate_heun(sys, B, NORTH_POLE)
    assert proj.defect <= 1e-10
    assert np.max(np.abs(proj.states - direct.states)) <= 5e-3


def test_sphere_base_point_must_be_unit():
    G = so3()
    traj = integrate_group_sde(G, zero_path(TimeGrid(1.0, 4), 3))
    with pytest.raises(ValueError):
        project_homogeneous(traj, [0.0, 0.0, 2.0], G)


def test_matrix_action():
    assert np.array_equal(matrix_action(2 * np.eye(3), np.ones(3)), 2 * np.ones(3))


def test_heisenberg_membership():
    G = heisenberg()
    traj = integrate_group_sde(G, sample_brownian(TimeGrid(1.0, 64), 3, 0))
    assert traj.defect == 0.0


def test_right_invariant_system_matches_group_scheme_in_the_limit():
    G = affine1()
    path = with_time_component(sample_brownian(TimeGrid(1.0, 1024), 1, 5))
    heun = integrate_heun(right_invariant_system(G), path, np.eye(2).reshape(-1)).states
    group = flatten_elements(integrate_group_sde(G, path).elements)
    assert np.max(np.abs(heun - group)) <= 1e-2


def test_group_csv():
    traj = integrate_group_sde(affine1(), zero_path(TimeGrid(1.0, 2), 2))
    buf = io.StringIO()
    traj.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,m00,m01,m10,m11,defect"
    assert lines[1] == "0,1,0,0,1,0"
