"""Weak gradient, stabilizer and projection operators, element by element."""

import math

import numpy as np
import pytest

from wglab.mesh import RECTANGULAR, TRIANGULAR, build_mesh, element_from_vertices
from wglab import polyspace as ps
from wglab import weakop as wo
from wglab.polyspace import GradientSpace

import oracle

UNIT_SQUARE = element_from_vertices([(0, 0), (1, 0), (1, 1), (0, 1)])
REF_TRIANGLE = element_from_vertices([(0, 0), (1, 0), (0, 1)])


def layout_for(el, l, s):
    return wo.LocalDofLayout(l, s, el.n_edges)


def constant_pair(layout):
    c = np.zeros(layout.n_local)
    c[0] = 1.0
    for i in range(layout.n_edges):
        c[layout.edge_block(i).start] = 1.0
    return c


# -- weak gradient ------------------------------------------------------------

@pytest.mark.parametrize("el", [UNIT_SQUARE, REF_TRIANGLE], ids=["square", "triangle"])
@pytest.mark.parametrize("family,m", [("P", 0), ("P", 2), ("RT", 1)])
def test_weak_gradient_kills_constants(el, family, m):
    layout = layout_for(el, 1, 1)
    wg = wo.weak_gradient(el, layout, GradientSpace(family, m))
    assert np.abs(wg.W @ constant_pair(layout)).max() < 1e-12


@pytest.mark.parametrize("el", [UNIT_SQUARE, REF_TRIANGLE], ids=["square", "triangle"])
def test_weak_gradient_exact_for_linear_trace_pair(el):
    layout = layout_for(el, 1, 1)
    desc = GradientSpace("P", 0)
    wg = wo.weak_gradient(el, layout, desc)
    c = wo.trace_pair(el, layout, lambda x, y: x)
    coeffs = wg.W @ c
    # the [P_0]^2 basis is [(1,0), (0,1)]: gradient of x is (1, 0)
    np.testing.assert_allclose(coeffs, [1.0, 0.0], atol=1e-12)


def test_weak_gradient_reference_triangle_single_edge_value():
    # v0 = 0, v_b = 1 on the bottom edge only: <1, q.n> = -q_y over a
    # length-1 edge, divided by the area 1/2, gives (0, -2)
    el = REF_TRIANGLE
    layout = layout_for(el, 0, 0)
    wg = wo.weak_gradient(el, layout, GradientSpace("P", 0))
    c = np.zeros(layout.n_local)
    bottom = None
    for i in range(el.n_edges):
        mid = el.edge_starts[i] + 0.5 * el.edge_lengths[i] * el.edge_dirs[i]
        if mid[1] == 0:
            bottom = i
    c[layout.edge_block(bottom).start] = 1.0
    np.testing.assert_allclose(wg.W @ c, [0.0, -2.0], atol=1e-12)


@pytest.mark.parametrize("el", [UNIT_SQUARE, REF_TRIANGLE], ids=["square", "triangle"])
@pytest.mark.parametrize("l,s,family,m", [(0, 0, "P", 1), (1, 1, "P", 2), (1, 2, "RT", 1)])
def test_weak_gradient_solves_defining_equation(el, l, s, family, m):
    layout = layout_for(el, l, s)
    wg = wo.weak_gradient(el, layout, GradientSpace(family, m))
    residual = np.abs(wg.M_G @ wg.W - wg.B).max()
    assert residual <= 1e-12 * max(1.0, np.abs(wg.B).max())


def test_weak_gradient_matches_oracle_matrix():
    mesh = build_mesh(TRIANGULAR, 2)
    el = mesh.element(3)
    layout = layout_for(el, 1, 1)
    wg = wo.weak_gradient(el, layout, GradientSpace("P", 2))
    oel = oracle.oracle_element(mesh, 3)
    _, W_ref, _ = oracle.local_matrices(oel, 1, 1, "P", 2, math.inf)
    np.testing.assert_allclose(wg.W, W_ref, atol=1e-11)


# -- local stiffness ----------------------------------------------------------

@pytest.mark.parametrize("el", [UNIT_SQUARE, REF_TRIANGLE], ids=["square", "triangle"])
def test_local_stiffness_symmetric_psd(el):
    layout = layout_for(el, 1, 1)
    A = wo.local_stiffness(el, layout, GradientSpace("P", 2))
    assert np.abs(A - A.T).max() <= 1e-12 * max(1.0, np.abs(A).max())
    rng = np.random.default_rng(7)
    for _ in range(20):
        v = rng.standard_normal(layout.n_local)
        assert v @ A @ v >= -1e-12 * (v @ v)
    assert np.abs(A @ constant_pair(layout)).max() < 1e-12


def test_local_stiffness_rank_on_unit_square():
    # (P1, P1, [P2]^2): only constants in the kernel
    layout = layout_for(UNIT_SQUARE, 1, 1)
    A = wo.local_stiffness(UNIT_SQUARE, layout, GradientSpace("P", 2))
    assert np.linalg.matrix_rank(A, tol=1e-10) == layout.n_local - 1
    oel = oracle.OracleElement(UNIT_SQUARE.vertices, [True, True, True, True])
    A_ref, _, _ = oracle.local_matrices(oel, 1, 1, "P", 2, math.inf)
    assert np.linalg.matrix_rank(A_ref, tol=1e-10) == layout.n_local - 1


def test_local_stiffness_equals_gram_recomputed():
    el = REF_TRIANGLE
    layout = layout_for(el, 2, 1)
    desc = GradientSpace("RT", 1)
    wg = wo.weak_gradient(el, layout, desc)
    A = wo.local_stiffness(el, layout, desc, wg)
    gram = wg.W.T @ wg.M_G @ wg.W
    assert np.abs(A - gram).max() <= 1e-13 * max(1.0, np.abs(A).max())


# -- stabilizer ---------------------------------------------------------------

@pytest.mark.parametrize("j", [-1.0, 0.0, 1.0])
def test_stabilizer_kills_constants(j):
    for el in (UNIT_SQUARE, REF_TRIANGLE):
        layout = layout_for(el, 1, 1)
        S = wo.local_stabilizer(el, layout, j)
        assert np.abs(S @ constant_pair(layout)).max() < 1e-12


def test_stabilizer_free_is_zero_matrix():
    layout = layout_for(UNIT_SQUARE, 1, 1)
    S = wo.local_stabilizer(UNIT_SQUARE, layout, math.inf)
    assert not S.any()


def test_stabilizer_rejects_unsupported_exponent():
    layout = layout_for(UNIT_SQUARE, 1, 1)
    with pytest.raises(ValueError):
        wo.local_stabilizer(UNIT_SQUARE, layout, 2.0)


def test_stabilizer_annihilates_linear_trace_pair():
    for el in (UNIT_SQUARE, REF_TRIANGLE):
        layout = layout_for(el, 1, 1)
        S = wo.local_stabilizer(el, layout, -1.0)
        c = wo.trace_pair(el, layout, lambda x, y: 2 * x - 3 * y + 1)
        assert np.abs(S @ c).max() < 1e-12


def test_stabilizer_matches_oracle():
    mesh = build_mesh(RECTANGULAR, 2)
    el = mesh.element(1)
    layout = layout_for(el, 2, 1)
    S = wo.local_stabilizer(el, layout, 1.0)
    A_full = wo.local_operator(el, layout, GradientSpace("P", 1), 1.0)
    oel = oracle.oracle_element(mesh, 1)
    A_ref, _, _ = oracle.local_matrices(oel, 2, 1, "P", 1, 1.0)
    np.testing.assert_allclose(A_full, A_ref, atol=1e-11)
    A_nostab, _, _ = oracle.local_matrices(oel, 2, 1, "P", 1, math.inf)
    np.testing.assert_allclose(S, A_ref - A_nostab, atol=1e-11)


@pytest.mark.parametrize("j", [-1.0, 0.0, 1.0])
def test_stabilizer_scale_law_across_levels(j):
    # halving h_T scales S by 2^-(j+1): h_T^j from the weight, one more
    # factor of h from the edge measure
    def stab(level):
        mesh = build_mesh(RECTANGULAR, level)
        el = mesh.element(0)
        return wo.local_stabilizer(el, layout_for(el, 1, 1), j)

    S2, S3 = stab(2), stab(3)
    np.testing.assert_allclose(S3, S2 * 2.0 ** -(j + 1), rtol=1e-12)


# -- projections --------------------------------------------------------------

def test_project_Qb_average_of_x():
    mesh = build_mesh(RECTANGULAR, 1)
    for eid, (a, b) in enumerate(mesh.edges):
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        if pa[1] == 0 and pb[1] == 0:
            geom = mesh.edge_geometry(eid)
            coeffs = wo.project_Qb(geom, lambda x, y: x, 0)
            assert coeffs == pytest.approx([0.5])


def test_project_Q0_reproduces_constants():
    coeffs = wo.project_Q0(UNIT_SQUARE, lambda x, y: np.full_like(x, 3.0), 2)
    expected = np.zeros(6)
    expected[0] = 3.0
    np.testing.assert_allclose(coeffs, expected, atol=1e-12)


def test_project_Gm_swap_field_exact_coefficients():
    el = UNIT_SQUARE
    desc = GradientSpace("P", 1)
    coeffs = wo.project_Gm(el, lambda x, y: np.stack([y, x], axis=-1), desc)
    h, (cx, cy) = el.diameter, el.centroid
    # x-component y = cy + h*Y, y-component x = cx + h*X in the scaled basis
    expected = np.array([cy, 0, h, cx, h, 0], dtype=float)
    np.testing.assert_allclose(coeffs, expected, atol=1e-12)


@pytest.mark.parametrize("el", [UNIT_SQUARE, REF_TRIANGLE], ids=["square", "triangle"])
def test_projections_reproduce_members(el):
    rng = np.random.default_rng(42)
    c_in = rng.standard_normal(ps.dim_scalar(3))

    def f(x, y):
        vals = ps.eval_scalar_basis_many(el, 3, np.column_stack([np.ravel(x), np.ravel(y)]))
        return (vals @ c_in).reshape(np.shape(x))

    np.testing.assert_allclose(wo.project_Q0(el, f, 3), c_in, atol=1e-12)

    geom = wo._element_edge_geometry(el, 0)
    c_edge = rng.standard_normal(4)

    def fe(x, y):
        t = (np.column_stack([np.ravel(x), np.ravel(y)]) - geom.start) @ geom.direction
        vals = ps.eval_edge_basis_tau(3, t / geom.length)
        return (vals @ c_edge).reshape(np.shape(x))

    np.testing.assert_allclose(wo.project_Qb(geom, fe, 3), c_edge, atol=1e-12)


# -- structure properties -------------------------------------------------------

@pytest.mark.parametrize("l,s,family,m", [
    (1, 1, "P", 1),    # m <= min(l+1, s)
    (2, 2, "P", 3),    # m = l+1 = s+1? no: 3 > 2 -> skip? kept eligible: min(3,2)=2 < 3
])
def test_commutation_eligibility_matches_theory(l, s, family, m):
    # commutation holds iff div(G) in P_l and G.n traces in P_s
    el = REF_TRIANGLE
    desc = GradientSpace(family, m)
    layout = layout_for(el, l, s)
    wg = wo.weak_gradient(el, layout, desc)

    def u(x, y):
        return np.sin(x + 0.3) * np.cos(2 * y)

    def grad_u(x, y):
        return np.stack([np.cos(x + 0.3) * np.cos(2 * y),
                         -2 * np.sin(x + 0.3) * np.sin(2 * y)], axis=-1)

    lhs = wg.W @ wo.trace_pair(el, layout, u)
    rhs = wo.project_Gm(el, grad_u, desc)
    eligible = (m <= min(l + 1, s)) if family == "P" else (m <= min(l, s))
    err = np.abs(lhs - rhs).max()
    if eligible:
        assert err < 1e-10
    else:
        assert err > 1e-3


def test_polynomial_exactness_of_weak_gradient():
    # p of degree <= min(l, s) with grad p in the gradient space
    el = UNIT_SQUARE
    layout = layout_for(el, 2, 2)
    desc = GradientSpace("P", 1)
    wg = wo.weak_gradient(el, layout, desc)

    def p(x, y):
        return x * x - 2 * x * y + 3 * y + 1

    def grad_p(x, y):
        return np.stack([2 * x - 2 * y, -2 * x + 3 * np.ones_like(x)], axis=-1)

    coeffs = wg.W @ wo.trace_pair(el, layout, p)
    expected = wo.project_Gm(el, grad_p, desc)
    np.testing.assert_allclose(coeffs, expected, atol=1e-11)
    # and the projection is exact here, so compare pointwise too
    pts = np.array([[0.1, 0.2], [0.9, 0.4], [0.5, 0.5]])
    vals = np.einsum("i,nid->nd", coeffs, ps.eval_gradient_basis_many(el, desc, pts))
    np.testing.assert_allclose(vals, grad_p(pts[:, 0], pts[:, 1]), atol=1e-11)


def test_layout_blocks_partition_dofs():
    layout = wo.LocalDofLayout(2, 1, 4)
    assert layout.n_interior == 6
    assert layout.n_local == 6 + 4 * 2
    covered = list(range(layout.n_interior))
    for i in range(4):
        covered.extend(range(layout.edge_block(i).start, layout.edge_block(i).stop))
    assert covered == list(range(layout.n_local))
