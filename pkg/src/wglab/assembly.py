"""Global DOF enumeration, sparse assembly and the iterative solver.

Unknowns are ordered element interior blocks first (mesh element order),
then one block per interior edge (mesh edge order).  Boundary edges carry
no unknowns: their coefficients are pinned to the edge projection of the
Dirichlet data and eliminated symmetrically into the right-hand side.

On these uniform meshes all elements of a congruence class (translates
with the same oriented-edge pattern) share their local operator matrices,
so assembly computes each class once and scatters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh
from . import polyspace as ps
from . import weakop as wo
from .polyspace import GradientSpace

_J_VALUES = (-1.0, 0.0, 1.0, math.inf)


@dataclass(frozen=True)
class ElementConfig:
    """One WG element: interior degree, edge degree, gradient space and
    stabilizer exponent (inf = stabilizer-free)."""

    l: int
    s: int
    grad: GradientSpace
    j: float

    def __post_init__(self):
        if not 0 <= self.l <= wo.MAX_INTERIOR_DEGREE:
            raise ValueError(f"interior degree {self.l} outside [0, {wo.MAX_INTERIOR_DEGREE}]")
        if not 0 <= self.s <= wo.MAX_EDGE_DEGREE:
            raise ValueError(f"edge degree {self.s} outside [0, {wo.MAX_EDGE_DEGREE}]")
        if self.grad.degree > wo.MAX_GRADIENT_DEGREE:
            raise ValueError(f"gradient degree {self.grad.degree} outside [0, {wo.MAX_GRADIENT_DEGREE}]")
        object.__setattr__(self, "j", float(self.j))
        if self.j not in _J_VALUES:
            raise ValueError(f"stabilizer exponent must be one of -1, 0, 1, inf; got {self.j}")

    @property
    def stabilizer_free(self) -> bool:
        return math.isinf(self.j)

    def label(self) -> str:
        g = self.grad
        gtxt = f"[P{g.degree}]^2" if g.family == ps.FULL_POLY else f"RT{g.degree}"
        jtxt = "inf" if self.stabilizer_free else f"{int(self.j)}"
        return f"(P{self.l},P{self.s}(e),{gtxt}) j={jtxt}"


@dataclass(frozen=True)
class DofMap:
    """Deterministic global enumeration for one (mesh, l, s) pair."""

    l: int
    s: int
    n_elements: int
    n_edges: int
    n_unknowns: int
    n_pinned: int
    element_starts: np.ndarray
    edge_starts: np.ndarray  # >= n_unknowns marks a pinned boundary block

    @property
    def n_interior(self) -> int:
        return ps.dim_scalar(self.l)

    @property
    def per_edge(self) -> int:
        return self.s + 1

    @property
    def n_total(self) -> int:
        return self.n_unknowns + self.n_pinned

    def element_dofs(self, mesh: Mesh, index: int) -> np.ndarray:
        blocks = [self.element_starts[index] + np.arange(self.n_interior)]
        for eid in mesh.element_edges[index]:
            blocks.append(self.edge_starts[eid] + np.arange(self.per_edge))
        return np.concatenate(blocks)

    def element_dof_matrix(self, mesh: Mesh) -> np.ndarray:
        """(n_elements, n_local) global indices, interior block first."""
        cols = [self.element_starts[:, None] + np.arange(self.n_interior)[None, :]]
        for i in range(mesh.elements.shape[1]):
            eids = mesh.element_edges[:, i]
            cols.append(self.edge_starts[eids][:, None] + np.arange(self.per_edge)[None, :])
        return np.concatenate(cols, axis=1)


def build_dof_map(mesh: Mesh, config: ElementConfig) -> DofMap:
    n0 = ps.dim_scalar(config.l)
    per_edge = config.s + 1
    element_starts = np.arange(mesh.n_elements, dtype=np.int64) * n0
    interior_base = mesh.n_elements * n0
    n_int = int(np.count_nonzero(~mesh.boundary))
    n_unknowns = interior_base + n_int * per_edge
    edge_starts = np.empty(mesh.n_edges, dtype=np.int64)
    int_rank = bnd_rank = 0
    for eid in range(mesh.n_edges):
        if mesh.boundary[eid]:
            edge_starts[eid] = n_unknowns + bnd_rank * per_edge
            bnd_rank += 1
        else:
            edge_starts[eid] = interior_base + int_rank * per_edge
            int_rank += 1
    element_starts.setflags(write=False)
    edge_starts.setflags(write=False)
    return DofMap(
        l=config.l, s=config.s,
        n_elements=mesh.n_elements, n_edges=mesh.n_edges,
        n_unknowns=n_unknowns, n_pinned=bnd_rank * per_edge,
        element_starts=element_starts, edge_starts=edge_starts,
    )


@dataclass
class WeakCoeffVector:
    """All DOF values, pinned boundary entries included."""

    values: np.ndarray
    dofmap: DofMap

    def interior(self, index: int) -> np.ndarray:
        start = self.dofmap.element_starts[index]
        return self.values[start:start + self.dofmap.n_interior]

    def edge(self, edge_id: int) -> np.ndarray:
        start = self.dofmap.edge_starts[edge_id]
        return self.values[start:start + self.dofmap.per_edge]


@dataclass
class LinearSystem:
    """Eliminated symmetric system over the unknowns."""

    A: sp.csr_matrix
    b: np.ndarray
    pinned: np.ndarray
    dofmap: DofMap


# -- congruence classes -------------------------------------------------------

def _element_class_key(el) -> bytes:
    c = el.centroid
    rel = np.round(el.vertices - c, 12)
    edges = np.round(
        np.column_stack([el.edge_starts - c, el.edge_dirs, el.edge_lengths[:, None]]), 12)
    return rel.tobytes() + edges.tobytes() + el.edge_signs.astype(np.int8).tobytes()


def element_classes(mesh: Mesh) -> dict[bytes, np.ndarray]:
    """Element indices grouped by congruence class, first-seen order."""
    groups: dict[bytes, list[int]] = {}
    for e in range(mesh.n_elements):
        groups.setdefault(_element_class_key(mesh.element(e)), []).append(e)
    return {k: np.array(v, dtype=np.int64) for k, v in groups.items()}


def _edge_classes(mesh: Mesh, edge_ids: np.ndarray) -> dict[bytes, np.ndarray]:
    keys = np.round(
        np.column_stack([mesh._edge_dirs[edge_ids], mesh.edge_lengths[edge_ids]]), 12)
    groups: dict[bytes, list[int]] = {}
    for eid, key in zip(edge_ids, keys):
        groups.setdefault(key.tobytes(), []).append(int(eid))
    return {k: np.array(v, dtype=np.int64) for k, v in groups.items()}


def project_boundary_data(mesh: Mesh, dm: DofMap, g) -> np.ndarray:
    """Q_b g coefficients for every boundary edge, in pinned-slot order."""
    pinned = np.zeros(dm.n_pinned)
    boundary_ids = np.nonzero(mesh.boundary)[0]
    if len(boundary_ids) == 0:
        return pinned
    _, edge_ex = ps.data_exactness(dm.l, dm.s)
    rule = ps.quad_edge(edge_ex)
    chi = ps.eval_edge_basis_tau(dm.s, rule.points)
    for _, eids in _edge_classes(mesh, boundary_ids).items():
        length = mesh.edge_lengths[eids[0]]
        direction = mesh._edge_dirs[eids[0]]
        w = rule.weights * length
        M_e = np.einsum("n,np,nq->pq", w, chi, chi)
        t = rule.points * length
        pts = mesh._edge_starts[eids][:, None, :] + t[None, :, None] * direction[None, None, :]
        gv = g(pts[:, :, 0], pts[:, :, 1])
        moments = (gv * w[None, :]) @ chi
        coeffs = np.linalg.solve(M_e, moments.T).T
        slots = (dm.edge_starts[eids] - dm.n_unknowns)[:, None] + np.arange(dm.per_edge)[None, :]
        pinned[slots] = coeffs
    return pinned


def assemble(mesh: Mesh, config: ElementConfig, f, g) -> LinearSystem:
    """Assemble the WG system for -div(grad u) = f with u = g on the boundary.

    ``f`` and ``g`` are vectorized callables of (x, y).
    """
    dm = build_dof_map(mesh, config)
    layout = wo.LocalDofLayout(config.l, config.s, mesh.elements.shape[1])
    gdofs = dm.element_dof_matrix(mesh)
    n_loc = layout.n_local

    data_ex, _ = ps.data_exactness(config.l, config.s)
    rows_list, cols_list, vals_list = [], [], []
    b_full = np.zeros(dm.n_total)
    for _, els in element_classes(mesh).items():
        rep = mesh.element(int(els[0]))
        A_loc = wo.local_operator(rep, layout, config.grad, config.j)
        idx = gdofs[els]
        rows_list.append(np.repeat(idx, n_loc, axis=1).ravel())
        cols_list.append(np.tile(idx, (1, n_loc)).ravel())
        vals_list.append(np.tile(A_loc.ravel(), len(els)))

        rule = ps.quad_element(mesh.kind, data_ex)
        rep_pts, w = ps.map_rule_to_element(rule, rep)
        phi = ps.eval_scalar_basis_many(rep, config.l, rep_pts)
        offsets = rep_pts - rep.centroid
        pts = mesh.centroids[els][:, None, :] + offsets[None, :, :]
        fv = f(pts[:, :, 0], pts[:, :, 1])
        loads = (fv * w[None, :]) @ phi
        b_full[idx[:, :dm.n_interior]] = loads

    pinned = project_boundary_data(mesh, dm, g)

    M = dm.n_total
    A_full = sp.coo_matrix(
        (np.concatenate(vals_list), (np.concatenate(rows_list), np.concatenate(cols_list))),
        shape=(M, M),
    ).tocsr()
    N = dm.n_unknowns
    A = A_full[:N, :N]
    b = b_full[:N]
    if dm.n_pinned:
        b = b - A_full[:N, N:] @ pinned
    return LinearSystem(A=A, b=b, pinned=pinned, dofmap=dm)


# -- solver -------------------------------------------------------------------

@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual: float
    breakdown: bool = False
    reason: str | None = None


#: iterations of no meaningful residual progress before declaring breakdown
_STALL_WINDOW = 500


def solve(system: LinearSystem, tol: float = 1e-11, max_iter: int | None = None):
    """Diagonally preconditioned conjugate gradients from a zero guess.

    Breakdown (nonpositive curvature, residual stall, or iteration cap) is
    reported, not raised; the last iterate is still returned so the study
    harness can measure how wrong it is.
    """
    A, b, dm = system.A, system.b, system.dofmap
    N = dm.n_unknowns
    if max_iter is None:
        max_iter = max(2000, min(60000, 10 * N))
    x = np.zeros(N)
    report = SolveReport(converged=False, iterations=0, residual=0.0)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        report.converged = True
        return _full_vector(x, system), report

    diag = A.diagonal()
    inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    best = np.linalg.norm(r)
    best_iter = 0
    x_prev = x.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, max_iter + 1):
            Ap = A @ p
            curv = p @ Ap
            if not np.isfinite(curv) or curv <= 0.0:
                report.breakdown, report.reason = True, "curvature"
                break
            alpha = rz / curv
            x_prev[:] = x
            x += alpha * p
            r -= alpha * Ap
            rnorm = np.linalg.norm(r)
            report.iterations = k
            if not np.isfinite(rnorm) or not np.all(np.isfinite(x)):
                # the iterate exploded along a near-null direction
                x[:] = x_prev
                report.breakdown, report.reason = True, "curvature"
                break
            if rnorm <= tol * bnorm:
                report.converged = True
                break
            if rnorm < 0.99 * best:
                best, best_iter = rnorm, k
            elif k - best_iter >= _STALL_WINDOW:
                report.breakdown, report.reason = True, "stagnation"
                break
            z = inv_diag * r
            rz_new = r @ z
            beta = rz_new / rz
            rz = rz_new
            p = z + beta * p
        else:
            report.breakdown, report.reason = True, "max_iter"

    report.residual = float(np.linalg.norm(A @ x - b) / bnorm)
    return _full_vector(x, system), report


def _full_vector(x: np.ndarray, system: LinearSystem) -> WeakCoeffVector:
    dm = system.dofmap
    values = np.concatenate([x, system.pinned])
    return WeakCoeffVector(values=values, dofmap=dm)


def probe_singularity(system: LinearSystem, tol: float = 1e-10,
                      max_iter: int | None = None) -> bool:
    """Solve against deterministic generic data to expose a singular matrix.

    A singular but consistent system lets CG reproduce the assembled data
    perfectly, hiding the rank deficiency (manufactured loads are L2
    orthogonal to the kernel).  Generic data is inconsistent with any
    nontrivial kernel, so CG stalls or breaks down exactly when the matrix
    is not SPD.  The probe vector is seeded by the system size, keeping
    repeated runs bit-identical.
    """
    n = system.dofmap.n_unknowns
    rng = np.random.default_rng(n)
    probe = LinearSystem(A=system.A, b=rng.standard_normal(n),
                         pinned=system.pinned, dofmap=system.dofmap)
    _, report = solve(probe, tol=tol, max_iter=max_iter)
    return report.breakdown


def residual_check(system: LinearSystem, solution: WeakCoeffVector) -> float:
    """Galerkin residual ||A x - b||_inf / ||b||_inf over the unknowns."""
    x = solution.values[:system.dofmap.n_unknowns]
    res = np.abs(system.A @ x - system.b)
    scale = np.abs(system.b).max()
    top = res.max() if len(res) else 0.0
    return float(top / scale) if scale > 0 else float(top)


def dump_system(system: LinearSystem) -> str:
    """Coordinate text dump (``row col value``, 17 significant digits)."""
    coo = system.A.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = [
        f"{coo.row[i]} {coo.col[i]} {coo.data[i]:.17g}"
        for i in order
    ]
    return "\n".join(lines) + "\n"
