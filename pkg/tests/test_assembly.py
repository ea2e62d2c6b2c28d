import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse.linalg as sla
from scipy import integrate

from lwelasto.assembly import (
    MaterialParams, apply_dirichlet, assemble_ball_load, assemble_load, assemble_mass, assemble_scalar_mass,
    assemble_stiffness, ball_quadrature, build_operators, element_mass, element_stiffness, lumped,
)
from lwelasto.element import reference_element
from lwelasto.mesh import BoxDomain, build_box_mesh
from lwelasto.source import sine_bump
from lwelasto.space import build_space, interpolate

from oracles import SKEW_TET, compare_entries, exact_element_matrices

UNIT = MaterialParams(nu=1.0, lam=1.0, mu=1.0)


def _zero(p):
    return np.zeros(len(p))


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_local_matrices_match_exact_oracle(d):
    el = reference_element(d)
    lam, mu = Fraction(2), Fraction(3, 2)
    M_ex, K_ex, _ = exact_element_matrices(d, tuple(map(tuple, el.multi_indices.tolist())), SKEW_TET, lam, mu)
    verts = np.array(SKEW_TET, dtype=float)
    J = (verts[1:] - verts[0]).T
    assert compare_entries(element_mass(el, J), M_ex) < 1e-12
    K = element_stiffness(el, J, MaterialParams(1.0, float(lam), float(mu)))
    assert compare_entries(K, K_ex) < 1e-12


def test_vector_mass_of_constant_is_three_volumes(cube3):
    V = build_space(cube3, 2)
    M = assemble_mass(V)
    one = np.ones(M.shape[0])
    assert math.isclose(one @ M @ one, 3.0, rel_tol=1e-12)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_stiffness_worked_examples(cube3, d):
    V = build_space(cube3, d)
    K = assemble_stiffness(V, UNIT)
    shear = interpolate(V, lambda p: np.column_stack([p[:, 1], _zero(p), _zero(p)]))
    stretch = interpolate(V, lambda p: np.column_stack([p[:, 0], _zero(p), _zero(p)]))
    assert math.isclose(shear @ K @ shear, 2.0, rel_tol=1e-12)
    assert math.isclose(stretch @ K @ stretch, 3.0, rel_tol=1e-12)


def test_rigid_translation_in_kernel(cube3):
    V = build_space(cube3, 2)
    K = assemble_stiffness(V, UNIT)
    t = interpolate(V, lambda p: np.tile([0.3, -1.0, 2.0], (len(p), 1)))
    assert np.abs(K @ t).max() < 1e-12


def test_symmetry_and_definiteness(space_any_degree):
    V = space_any_degree
    M = assemble_mass(V)
    K = assemble_stiffness(V, UNIT)
    assert abs(M - M.T).max() < 1e-15
    assert abs(K - K.T).max() < 1e-13
    ops = build_operators(V, UNIT)
    if ops.stiffness_interior.shape[0] > 3:
        lo = sla.eigsh(ops.stiffness_interior, k=1, which="SA", return_eigenvectors=False)[0]
        assert lo > 0


def test_non_coercive_material_warns(cube2):
    V = build_space(cube2, 1)
    params = MaterialParams.from_engineering(2.5, 1.0, 1.0)
    assert math.isclose(params.lam, -1.25) and math.isclose(params.mu, 0.625)
    assert not params.coercive
    with pytest.warns(UserWarning, match="not coercive"):
        assemble_stiffness(V, params)


def test_engineering_conversion():
    p = MaterialParams.from_engineering(2.5, 0.25, 1.0)
    assert math.isclose(p.lam, 1.0) and math.isclose(p.mu, 1.0)
    with pytest.raises(ValueError):
        MaterialParams.from_engineering(1.0, 0.5, 1.0)
    with pytest.raises(ValueError):
        MaterialParams(nu=0.0, lam=1.0, mu=1.0)


def _h1_parts(V, u, rng_pts=None):
    from lwelasto.stress import QuadratureData
    from lwelasto.space import split_components
    q = QuadratureData.for_space(V)
    vals = np.einsum("qk,tkc->tqc", q.phi, split_components(V, u)[V.cell_dofs])
    grad = q.displacement_gradient(u)
    l2 = np.sum(q.weights[..., None] * vals ** 2)
    g2 = np.sum(q.weights[..., None, None] * grad ** 2)
    div = np.trace(grad, axis1=-2, axis2=-1)
    return l2, g2, grad, div, q.weights


def test_continuity_and_coercivity_on_random_fields(cube2, rng):
    V = build_space(cube2, 2)
    params = MaterialParams.from_engineering(2.5, 0.25, 1.0)   # lam + mu = 2
    K = assemble_stiffness(V, params)
    vint = V.vector_interior_dofs()
    for _ in range(30):
        u = np.zeros(3 * V.num_dofs)
        v = np.zeros(3 * V.num_dofs)
        u[vint] = rng.standard_normal(len(vint))
        v[vint] = rng.standard_normal(len(vint))
        lu, gu, *_ = _h1_parts(V, u)
        lv, gv, *_ = _h1_parts(V, v)
        bound = (params.lam + 4 * params.mu) * math.sqrt(lu + gu) * math.sqrt(lv + gv)
        assert abs(u @ K @ v) <= bound
        assert u @ K @ u >= (params.lam + params.mu) * gu * (1 - 1e-10)


def test_load_of_constant_force_integrates_basis(cube3):
    V = build_space(cube3, 2)
    b = assemble_load(V, lambda p: np.tile([1.0, 2.0, 3.0], (len(p), 1)))
    n = V.num_dofs
    assert np.allclose([b[:n].sum(), b[n:2 * n].sum(), b[2 * n:].sum()], [1, 2, 3], rtol=1e-12)


def test_ball_quadrature_volume_and_moments():
    pts, w = ball_quadrature((0.1, 0.2, 0.3), 0.25, 8, 8, 16)
    assert math.isclose(w.sum(), 4 / 3 * math.pi * 0.25 ** 3, rel_tol=1e-13)
    r2 = np.sum((pts - [0.1, 0.2, 0.3]) ** 2, axis=1)
    assert math.isclose(np.sum(w * r2), 4 * math.pi * 0.25 ** 5 / 5, rel_tol=1e-12)


def test_ball_load_total_matches_spherical_integral(cube3):
    V = build_space(cube3, 2)
    c, r = np.array([0.5, 0.45, 0.55]), 0.2
    b = assemble_ball_load(V, sine_bump, c, r, resolution=16)

    def integrand(rho, theta, phi):
        x = c + rho * np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
        return sine_bump(x[None, :])[0] * rho ** 2 * np.sin(theta)

    exact, _ = integrate.tplquad(integrand, 0, 2 * np.pi, 0, np.pi, 0, r, epsabs=1e-13, epsrel=1e-11)
    n = V.num_dofs
    # partition of unity: the scalar load sums to the integral of the profile over the ball
    assert math.isclose(b[:n].sum(), exact, rel_tol=1e-8)
    assert np.array_equal(b[:n], b[n:2 * n])


def test_apply_dirichlet_restricts(cube2):
    V = build_space(cube2, 1)
    M = assemble_scalar_mass(V)
    rhs = np.arange(V.num_dofs, dtype=float)
    red = apply_dirichlet(M, rhs, V.boundary_dofs)
    assert red.op.shape == (len(V.interior_dofs),) * 2
    x = red.expand(np.ones(len(red.free)))
    assert np.all(x[V.boundary_dofs] == 0)


def test_lumped_mass_preserves_total(cube2):
    V = build_space(cube2, 2)
    M = assemble_scalar_mass(V)
    L = lumped(M)
    assert math.isclose(L.sum(), M.sum(), rel_tol=1e-13)
    assert np.all(L.diagonal() > 0)
