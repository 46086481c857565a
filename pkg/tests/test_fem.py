import math

import numpy as np
import pytest
import scipy.sparse as sp

from unimesh.errors import SingularJacobian, SingularMatrix
from unimesh.fem import (Coefficients, FeSpace, ReferenceElement, apply_dirichlet, assemble,
                         check_jacobians, evaluate_field, gauss_line, l2_error, l2_norm, solve,
                         triangle_quadrature)
from unimesh.mesh import BackgroundMesh, equilateral_mesh
from unimesh.universal_mesh import DeformedConfiguration, identity_configuration

UNIT = BackgroundMesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


@pytest.mark.parametrize("degree", range(0, 12))
def test_quadrature_exactness(degree):
    rule = triangle_quadrature(degree)
    x, y = rule.points[:, 0], rule.points[:, 1]
    for i in range(degree + 1):
        j = degree - i
        exact = math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)
        assert abs(np.sum(rule.weights * x ** i * y ** j) - exact) < 1e-14


def test_gauss_line():
    x, w = gauss_line(9)
    for k in range(10):
        assert abs(np.sum(w * x ** k) - 1.0 / (k + 1)) < 1e-15


@pytest.mark.parametrize("p", [1, 2, 3])
def test_shape_functions(p):
    ref = ReferenceElement(p)
    assert ref.n_nodes == (p + 1) * (p + 2) // 2
    np.testing.assert_allclose(ref.values(ref.nodes), np.eye(ref.n_nodes), atol=1e-12)
    rng = np.random.default_rng(0)
    xi = rng.dirichlet([1, 1, 1], 50)[:, 1:]
    np.testing.assert_allclose(ref.values(xi).sum(axis=1), 1.0, atol=1e-13)
    np.testing.assert_allclose(ref.grads(xi).sum(axis=1), 0.0, atol=1e-11)


def test_p1_unit_triangle_closed_forms():
    space = FeSpace(UNIT, 1)
    S = assemble(space, identity_configuration(space))
    M24 = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]], dtype=float)
    K2 = np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]], dtype=float)
    np.testing.assert_allclose(24 * S.M.toarray(), M24, atol=1e-14)
    np.testing.assert_allclose(2 * S.K.toarray(), K2, atol=1e-14)
    assert S.B.nnz == 0 or np.max(np.abs(S.B.toarray())) == 0.0


def _t2_elements(p, h=0.35):
    """Curved elements cut by the unit circle, as produced by the universal mesh map."""
    from unimesh.geometry import circle
    from unimesh.universal_mesh import T2, IntervalMap

    mesh = equilateral_mesh(h)
    imap = IntervalMap(mesh, circle(), 0.0, geom_degree=p)
    cfg = imap.configuration(0.0)
    els = np.flatnonzero(imap.classification.cls == T2)
    return imap.space, cfg, els


@pytest.mark.parametrize("p", [2, 3])
def test_partition_of_unity_and_symmetry_on_curved_elements(p):
    space, cfg, els = _t2_elements(p)
    assert check_jacobians(cfg, els) > 0
    S = assemble(space, cfg, elements=els)
    M = S.M.toarray()
    K = S.K.toarray()
    assert np.max(np.abs(M - M.T)) <= 1e-14 * np.max(np.abs(M))
    np.testing.assert_allclose(K.sum(axis=1), 0.0, atol=1e-12)
    rule = triangle_quadrature(2 * p + 2)
    vals = evaluate_field(space, cfg, np.ones(space.ndofs), els, rule.points)
    np.testing.assert_allclose(vals, 1.0, atol=1e-12)
    used = space.dofs_of(els)
    assert np.min(np.linalg.eigvalsh(M[np.ix_(used, used)])) > 0


def _green_moment(space, cfg, e, antideriv):
    """Boundary integral of antideriv(x, y) dy along the mapped edges of element e."""
    s, w = gauss_line(30)
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    Y = cfg.positions[space.cell_dofs[e]]
    total = 0.0
    for a in range(3):
        A, B = corners[a], corners[(a + 1) % 3]
        xi = A[None] + s[:, None] * (B - A)[None]
        x = space.ref.values(xi) @ Y
        dx = np.einsum("qad,d,ai->qi", space.ref.grads(xi), B - A, Y)
        total += np.sum(w * antideriv(x[:, 0], x[:, 1]) * dx[:, 1])
    return total


@pytest.mark.parametrize("p", [2, 3])
def test_change_of_variables_against_boundary_integrals(p):
    # u = l1 and v = l2 linear are reproduced exactly by isoparametric elements,
    # so u M v and u K v are plain area integrals; Green's theorem turns them
    # into line integrals along the curved edges
    space, cfg, els = _t2_elements(p)
    rng = np.random.default_rng(11 + p)
    chosen = rng.choice(els, size=20, replace=False)
    y = cfg.positions
    for e in chosen:
        S = assemble(space, cfg, elements=[e])
        c1, c2 = rng.standard_normal(3), rng.standard_normal(3)
        l1 = c1[0] + c1[1] * y[:, 0] + c1[2] * y[:, 1]
        l2 = c2[0] + c2[1] * y[:, 0] + c2[2] * y[:, 1]
        a0, ax, ay = c1
        b0, bx, by = c2
        F = lambda X, Y: (a0 * b0 * X + (a0 * bx + ax * b0) * X ** 2 / 2 + ax * bx * X ** 3 / 3
                          + (a0 * by + ay * b0) * X * Y + (ax * by + ay * bx) * X ** 2 * Y / 2
                          + ay * by * X * Y ** 2)
        area = _green_moment(space, cfg, e, lambda X, Y: X)
        mass = _green_moment(space, cfg, e, F)
        assert abs(l1 @ S.M @ l2 - mass) <= 1e-12 * max(abs(mass), area)
        stiff = (ax * bx + ay * by) * area
        assert abs(l1 @ S.K @ l2 - stiff) <= 1e-12 * max(abs(stiff), area)
        assert abs(S.M.sum() - area) <= 1e-12 * area


def test_advection_matrix_uses_mesh_velocity():
    # B_ab = int N_a v . grad N_b ; for constant v and u linear, B u = v . grad u * int N_a
    space = FeSpace(equilateral_mesh(0.5, half_width=1.0), 2)
    v = np.array([0.3, -0.7])
    cfg = identity_configuration(space)
    cfg.velocities[:] = v
    S = assemble(space, cfg)
    u = 2.0 * space.dof_coords[:, 0] + 5.0 * space.dof_coords[:, 1]
    np.testing.assert_allclose(S.B @ u, (v @ [2.0, 5.0]) * (S.M @ np.ones(space.ndofs)), atol=1e-12)


def test_patch_test_p2_poisson():
    mesh = equilateral_mesh(0.3, half_width=1.0)
    space = FeSpace(mesh, 2)
    cfg = identity_configuration(space)
    exact = lambda x: 1.0 + x[..., 0] - 2 * x[..., 1] + x[..., 0] ** 2 + 3 * x[..., 0] * x[..., 1]
    S = assemble(space, cfg, forcing=lambda x, t: -2.0 * np.ones(x.shape[:-1]))
    boundary = np.flatnonzero((mesh.edge_triangles >= 0).sum(axis=1) == 1)
    rows = space.edge_dofs(boundary)
    A, b = apply_dirichlet(S.K, S.f, rows, exact(space.dof_coords[rows]))
    u = solve(A, b)
    assert np.max(np.abs(u - exact(space.dof_coords))) < 1e-10
    assert l2_error(space, cfg, u, lambda x, t: exact(x), 0.0) < 1e-10


def test_active_block_mass_positive_definite():
    space = FeSpace(equilateral_mesh(0.6, half_width=1.0), 2)
    S = assemble(space, identity_configuration(space))
    M = S.M.toarray()
    assert np.min(np.linalg.eigvalsh(M[5:40, 5:40])) > 0


def test_negative_jacobian_rejected():
    space = FeSpace(UNIT, 1)
    pos = space.dof_coords.copy()
    pos[[1, 2]] = pos[[2, 1]]
    cfg = DeformedConfiguration(space, pos, np.zeros_like(pos), np.array([0]), 0.0, 0.0)
    assert check_jacobians(cfg) < 0
    with pytest.raises(SingularJacobian):
        assemble(space, cfg)


def test_solve_against_dense():
    rng = np.random.default_rng(2)
    Q = rng.standard_normal((50, 50))
    A = Q @ Q.T + 50 * np.eye(50)
    b = rng.standard_normal(50)
    x = solve(sp.csr_matrix(A), b)
    np.testing.assert_allclose(x, np.linalg.solve(A, b), atol=1e-10)
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b)
    np.testing.assert_array_equal(solve(sp.identity(4), np.arange(4.0)), np.arange(4.0))


def test_singular_matrix():
    with pytest.raises(SingularMatrix):
        solve(sp.csr_matrix(np.zeros((3, 3))), np.ones(3))


def test_l2_norm_of_constant():
    space = FeSpace(UNIT, 3)
    cfg = identity_configuration(space)
    assert l2_norm(space, cfg, 2.0 * np.ones(space.ndofs)) == pytest.approx(2.0 * math.sqrt(0.5), rel=1e-14)
    assert l2_error(space, cfg, np.zeros(space.ndofs), lambda x, t: np.zeros(x.shape[:-1]), 0.0) == 0.0


def test_dirichlet_rows_identity():
    A = sp.csr_matrix(np.arange(9.0).reshape(3, 3) + 1)
    B, b = apply_dirichlet(A, np.ones(3), [1], [7.0])
    np.testing.assert_array_equal(B.toarray()[1], [0.0, 1.0, 0.0])
    assert b[1] == 7.0 and b[0] == 1.0
