"""Element-local weak Galerkin operators.

A local weak function is a coefficient vector over the interior P_l block
followed by one P_s block per edge (edge blocks in local edge order, each
parameterized along the global edge orientation).  The weak gradient maps
such a vector into the chosen gradient space by solving the local
mass-matrix system; the stabilizer penalizes the mismatch between the
projected interior trace and the edge unknowns, scaled by h_T^j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import Element, EdgeGeometry
from . import polyspace as ps
from .polyspace import GradientSpace

#: supported degree envelope, matching the study harness
MAX_INTERIOR_DEGREE = 3
MAX_EDGE_DEGREE = 4
MAX_GRADIENT_DEGREE = 4

STABILIZER_EXPONENTS = (-1.0, 0.0, 1.0, math.inf)


@dataclass(frozen=True)
class LocalDofLayout:
    """Block layout of one element's weak-function coefficients."""

    l: int
    s: int
    n_edges: int

    @property
    def n_interior(self) -> int:
        return ps.dim_scalar(self.l)

    @property
    def per_edge(self) -> int:
        return self.s + 1

    @property
    def n_local(self) -> int:
        return self.n_interior + self.n_edges * self.per_edge

    def edge_block(self, local_edge: int) -> slice:
        start = self.n_interior + local_edge * self.per_edge
        return slice(start, start + self.per_edge)


@dataclass(frozen=True)
class LocalWeakGradient:
    """Matrix W sending local coefficients to gradient-space coefficients,
    together with the gradient-space mass matrix used to build it."""

    W: np.ndarray
    M_G: np.ndarray
    B: np.ndarray


def _element_edge_geometry(element: Element, local_edge: int) -> EdgeGeometry:
    d = element.edge_dirs[local_edge]
    start = element.edge_starts[local_edge]
    length = element.edge_lengths[local_edge]
    return EdgeGeometry(
        length=float(length),
        midpoint=start + 0.5 * length * d,
        normal=np.array([-d[1], d[0]]),
        start=start,
        direction=d,
    )


def gradient_mass_matrix(element: Element, desc: GradientSpace, exactness: int | None = None) -> np.ndarray:
    if exactness is None:
        exactness = 2 * desc.poly_degree
    pts, w = ps.map_rule_to_element(ps.quad_element(element.kind, exactness), element)
    Q = ps.eval_gradient_basis_many(element, desc, pts)
    M = np.einsum("n,nid,njd->ij", w, Q, Q)
    return 0.5 * (M + M.T)


def weak_gradient(element: Element, layout: LocalDofLayout, desc: GradientSpace) -> LocalWeakGradient:
    """Discrete weak gradient operator of one element.

    Column ``c`` of ``W`` holds the gradient-space coefficients of the weak
    gradient of the c-th local basis function: the interior block tests
    -(v0, div q)_T, the edge blocks test <v_b, q . n>_dT with outward
    normals.
    """
    elem_ex, edge_ex = ps.operator_exactness(layout.l, layout.s, desc)
    pts, w = ps.map_rule_to_element(ps.quad_element(element.kind, elem_ex), element)
    Q = ps.eval_gradient_basis_many(element, desc, pts)
    M_G = np.einsum("n,nid,njd->ij", w, Q, Q)
    M_G = 0.5 * (M_G + M_G.T)

    B = np.zeros((desc.dim, layout.n_local))
    div = ps.div_gradient_basis_many(element, desc, pts)
    phi = ps.eval_scalar_basis_many(element, layout.l, pts)
    B[:, :layout.n_interior] = -np.einsum("n,ni,nj->ij", w, div, phi)

    rule = ps.quad_edge(edge_ex)
    chi = ps.eval_edge_basis_tau(layout.s, rule.points)
    for i in range(element.n_edges):
        geom = _element_edge_geometry(element, i)
        epts, ew, _ = ps.map_rule_to_edge(rule, geom)
        qn = ps.eval_gradient_basis_many(element, desc, epts) @ element.outward_normal(i)
        B[:, layout.edge_block(i)] = np.einsum("n,ni,np->ip", ew, qn, chi)

    W = np.linalg.solve(M_G, B)
    return LocalWeakGradient(W=W, M_G=M_G, B=B)


def local_stiffness(element: Element, layout: LocalDofLayout, desc: GradientSpace,
                    wg: LocalWeakGradient | None = None) -> np.ndarray:
    """Gram matrix W^T M_G W of the weak gradient; symmetric PSD."""
    if wg is None:
        wg = weak_gradient(element, layout, desc)
    A = wg.W.T @ wg.B  # equals W^T M_G W since M_G W = B
    return 0.5 * (A + A.T)


def edge_mass_matrix(s: int, length: float, exactness: int | None = None) -> np.ndarray:
    if exactness is None:
        exactness = 2 * s
    rule = ps.quad_edge(exactness)
    chi = ps.eval_edge_basis_tau(s, rule.points)
    return length * np.einsum("n,np,nq->pq", rule.weights, chi, chi)


def trace_difference_matrix(element: Element, layout: LocalDofLayout, local_edge: int,
                            exactness: int) -> tuple[np.ndarray, np.ndarray]:
    """(R_e, M_e): R_e maps local coefficients to the edge coefficients of
    Q_b(v0 trace) - v_b on the given edge, M_e is the edge mass matrix."""
    geom = _element_edge_geometry(element, local_edge)
    rule = ps.quad_edge(exactness)
    epts, ew, _ = ps.map_rule_to_edge(rule, geom)
    chi = ps.eval_edge_basis_tau(layout.s, rule.points)
    M_e = np.einsum("n,np,nq->pq", ew, chi, chi)
    phi = ps.eval_scalar_basis_many(element, layout.l, epts)
    moments = np.einsum("n,np,nj->pj", ew, chi, phi)
    R = np.zeros((layout.per_edge, layout.n_local))
    R[:, :layout.n_interior] = np.linalg.solve(M_e, moments)
    R[:, layout.edge_block(local_edge)] = -np.eye(layout.per_edge)
    return R, M_e


def local_stabilizer(element: Element, layout: LocalDofLayout, j: float) -> np.ndarray:
    """Stabilizer matrix h_T^j sum_e <Q_b v0 - v_b, Q_b w0 - w_b>_e.

    j = inf means the stabilizer-free formulation: the zero matrix.
    """
    if j not in STABILIZER_EXPONENTS:
        raise ValueError(f"stabilizer exponent must be one of {STABILIZER_EXPONENTS}, got {j}")
    n = layout.n_local
    if math.isinf(j):
        return np.zeros((n, n))
    _, edge_ex = ps.operator_exactness(layout.l, layout.s, GradientSpace(ps.FULL_POLY, 0))
    edge_ex = max(edge_ex, 2 * layout.s, layout.l + layout.s)
    S = np.zeros((n, n))
    for i in range(element.n_edges):
        R, M_e = trace_difference_matrix(element, layout, i, edge_ex)
        S += R.T @ (M_e @ R)
    S *= element.diameter ** j
    return 0.5 * (S + S.T)


def local_operator(element: Element, layout: LocalDofLayout, desc: GradientSpace, j: float) -> np.ndarray:
    """Stiffness plus stabilizer (stabilizer skipped entirely for j = inf)."""
    A = local_stiffness(element, layout, desc)
    if not math.isinf(j):
        A = A + local_stabilizer(element, layout, j)
    return A


# -- L2 projections ----------------------------------------------------------

def scalar_mass_matrix(element: Element, k: int, exactness: int | None = None) -> np.ndarray:
    if exactness is None:
        exactness = 2 * k
    pts, w = ps.map_rule_to_element(ps.quad_element(element.kind, exactness), element)
    phi = ps.eval_scalar_basis_many(element, k, pts)
    M = np.einsum("n,ni,nj->ij", w, phi, phi)
    return 0.5 * (M + M.T)


def project_Q0(element: Element, f, l: int) -> np.ndarray:
    """Coefficients of the L2 projection of f onto P_l(T)."""
    elem_ex, _ = ps.data_exactness(l, 0)
    pts, w = ps.map_rule_to_element(ps.quad_element(element.kind, elem_ex), element)
    phi = ps.eval_scalar_basis_many(element, l, pts)
    M = np.einsum("n,ni,nj->ij", w, phi, phi)
    rhs = phi.T @ (w * f(pts[:, 0], pts[:, 1]))
    return np.linalg.solve(M, rhs)


def project_Qb(edge: EdgeGeometry, f, s: int) -> np.ndarray:
    """Coefficients of the L2 projection of f onto P_s(e)."""
    _, edge_ex = ps.data_exactness(0, s)
    rule = ps.quad_edge(edge_ex)
    pts, w, _ = ps.map_rule_to_edge(rule, edge)
    chi = ps.eval_edge_basis_tau(s, rule.points)
    M = np.einsum("n,np,nq->pq", w, chi, chi)
    rhs = chi.T @ (w * f(pts[:, 0], pts[:, 1]))
    return np.linalg.solve(M, rhs)


def project_Gm(element: Element, field, desc: GradientSpace) -> np.ndarray:
    """Coefficients of the L2 projection of a vector field onto the gradient space."""
    elem_ex, _ = ps.data_exactness(desc.poly_degree, 0)
    exactness = max(elem_ex, 2 * desc.poly_degree)
    pts, w = ps.map_rule_to_element(ps.quad_element(element.kind, exactness), element)
    Q = ps.eval_gradient_basis_many(element, desc, pts)
    M = np.einsum("n,nid,njd->ij", w, Q, Q)
    vals = np.asarray(field(pts[:, 0], pts[:, 1]))
    rhs = np.einsum("n,nid,nd->i", w, Q, vals)
    return np.linalg.solve(0.5 * (M + M.T), rhs)


def trace_pair(element: Element, layout: LocalDofLayout, f) -> np.ndarray:
    """Local coefficients of Q_h f = {Q_0 f, Q_b f} on one element."""
    c = np.zeros(layout.n_local)
    c[:layout.n_interior] = project_Q0(element, f, layout.l)
    for i in range(element.n_edges):
        c[layout.edge_block(i)] = project_Qb(_element_edge_geometry(element, i), f, layout.s)
    return c
