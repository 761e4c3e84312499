"""Element technology, assembly, solver and projection checks."""

import numpy as np
import pytest

from weldh2 import fem, mesh as meshmod


def unit_square_mesh():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    elems = np.array([[0, 1, 2, 3]])
    return meshmod.Mesh(nodes, elems, 1, axisymmetric=False)


def test_partition_of_unity_and_weights():
    for order in (1, 2):
        q = fem.Quadrature(order)
        assert np.allclose(q.shape_values.sum(axis=1), 1.0)
        assert np.allclose(q.shape_gradients.sum(axis=1), 0.0, atol=1e-14)
        assert np.isclose(q.weights.sum(), 4.0)   # parent quad measure


def test_single_element_laplacian_matches_hand_matrix():
    m = unit_square_mesh()
    geo = m.geometry()
    Ke = np.einsum("eqai,eqbi,eq->eab", geo.dNdx, geo.dNdx, geo.wdet)
    # classic bilinear Laplacian on the unit square
    K_ref = (1.0 / 6.0) * np.array([
        [4, -1, -2, -1],
        [-1, 4, -1, -2],
        [-2, -1, 4, -1],
        [-1, -2, -1, 4],
    ])
    assert np.allclose(Ke[0], K_ref, atol=1e-14)


def test_two_disjoint_elements_block_diagonal():
    nodes = np.array([[0, 0], [1, 0], [1, 1], [0, 1],
                      [5, 5], [6, 5], [6, 6], [5, 6]], dtype=float)
    elems = np.array([[0, 1, 2, 3], [4, 5, 6, 7]])
    m = meshmod.Mesh(nodes, elems, 1, axisymmetric=False)
    geo = m.geometry()
    Ke = np.einsum("eqai,eqbi,eq->eab", geo.dNdx, geo.dNdx, geo.wdet)
    K = fem.assemble_matrix(m.n_nodes, m.elements, Ke).toarray()
    assert np.all(K[:4, 4:] == 0.0)
    assert np.all(K[4:, :4] == 0.0)


def test_assembly_is_bitwise_deterministic():
    rng = np.random.default_rng(3)
    m = meshmod.generate_strip_mesh(2.0, 17)
    geo = m.geometry()
    Ke = rng.normal(size=(m.n_elements, 4, 4))
    A1 = fem.assemble_matrix(m.n_nodes, m.elements, Ke)
    A2 = fem.assemble_matrix(m.n_nodes, m.elements, Ke)
    assert np.array_equal(A1.data, A2.data)
    assert np.array_equal(A1.indices, A2.indices)


def test_nan_in_element_matrix_reports_element():
    m = unit_square_mesh()
    Ke = np.full((1, 4, 4), np.nan)
    with pytest.raises(FloatingPointError, match="element 0"):
        fem.assemble_matrix(m.n_nodes, m.elements, Ke)


def test_rigid_translation_in_stiffness_nullspace():
    m = meshmod.generate_strip_mesh(1.0, 4)
    geo = m.geometry()
    Ke = np.einsum("eqai,eqbi,eq->eab", geo.dNdx, geo.dNdx, geo.wdet)
    K = fem.assemble_matrix(m.n_nodes, m.elements, Ke)
    assert np.allclose(K @ np.ones(m.n_nodes), 0.0, atol=1e-12)


def test_linear_system_identity_and_reactions():
    import scipy.sparse as sp
    K = sp.eye(4, format="csr") * 2.0
    b = np.array([2.0, 4.0, 6.0, 8.0])
    sys = fem.LinearSystem(K, b)
    x = sys.solve()
    assert np.allclose(x, b / 2.0)
    sys2 = fem.LinearSystem(K, b)
    sys2.set_dirichlet([0], [10.0])
    x2 = sys2.solve()
    assert x2[0] == 10.0
    assert np.allclose(sys2.reactions(x2), [2 * 10.0 - 2.0])


def test_newton_linear_residual_single_step():
    calls = []

    def rj(x):
        calls.append(1)
        return np.array([3.0 * x[0] - 6.0]), np.array([[3.0]])

    x = fem.newton(rj, np.array([0.0]), tol=1e-12)
    assert np.isclose(x[0], 2.0)
    # initial eval + one correction step evaluation
    assert len(calls) <= 3


def test_newton_stagnation_raises():
    def rj(x):
        return np.array([1.0 + x[0] ** 2]), np.array([[2.0 * x[0] + 1e-3]])

    with pytest.raises(fem.NewtonError):
        fem.newton(rj, np.array([1.0]), tol=1e-12, max_iter=10)


def test_projection_constant_exact():
    m = meshmod.generate_strip_mesh(1.0, 10)
    pv = np.full((m.n_elements, m.geometry().n_qp), 3.5)
    nodal = fem.project_to_nodes(m, pv)
    assert np.allclose(nodal, 3.5, atol=1e-12)


def test_projection_linear_exact_at_interior_nodes():
    m = meshmod.generate_strip_mesh(1.0, 20)
    geo = m.geometry()
    pv = 2.0 * geo.xq[..., 0] + 1.0
    nodal = fem.project_to_nodes(m, pv)
    exact = 2.0 * m.nodes[:, 0] + 1.0
    interior = (m.nodes[:, 0] > 1e-9) & (m.nodes[:, 0] < 1.0 - 1e-9)
    assert np.allclose(nodal[interior], exact[interior], atol=1e-10)


def test_projection_roundtrip_zero_mean_error_for_constants():
    m = meshmod.generate_strip_mesh(1.0, 7)
    pv = np.full((m.n_elements, m.geometry().n_qp), -1.25)
    back = fem.interp_to_points(m, fem.project_to_nodes(m, pv))
    assert np.allclose(back, -1.25, atol=1e-12)


def test_axisymmetric_strain_hoop_term():
    # u_r = r gives eps_rr = eps_hoop = 1 everywhere
    nodes = np.array([[1.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0]])
    m = meshmod.Mesh(nodes, np.array([[0, 1, 2, 3]]), 1, axisymmetric=True)
    u = np.zeros(8)
    u[0::2] = m.nodes[:, 0]
    eps = fem.strains_at_points(m, u)
    assert np.allclose(eps[..., 0], 1.0)
    assert np.allclose(eps[..., 2], 1.0)
    assert np.allclose(eps[..., 1], 0.0, atol=1e-14)
    assert np.allclose(eps[..., 3], 0.0, atol=1e-14)


def test_quadratic_element_geometry():
    # Q8 on a stretched quad: partition of unity, exact area
    nodes = np.array([[0, 0], [2, 0], [2, 1], [0, 1],
                      [1, 0], [2, 0.5], [1, 1], [0, 0.5]], dtype=float)
    m = meshmod.Mesh(nodes, np.array([[0, 1, 2, 3, 4, 5, 6, 7]]), 2,
                     axisymmetric=False)
    geo = m.geometry()
    assert np.allclose(geo.quad.shape_values.sum(axis=1), 1.0)
    assert np.isclose(geo.wdet.sum(), 2.0)
