"""Convergence studies: supercloseness error norms, rates, classification.

Errors are measured against the projection of the exact solution:
e1 is the energy norm of Q_h u - u_h (weak-gradient seminorm plus the
stabilizer term when j is finite), e2 the elementwise L2 norm of
Q_0 u - u_0.  Rates are log2 ratios between consecutive levels; a run is
classified diverged when the solver breaks down at level >= 3 or the
finest-level rate falls below -0.5, and non-converging when both summary
rates sit within +-0.3 of zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh, build_mesh, MAX_LEVEL, RECTANGULAR, TRIANGULAR
from . import polyspace as ps
from . import weakop as wo
from . import assembly as asm
from .assembly import ElementConfig, WeakCoeffVector
from .solutions import ManufacturedSolution

_MESH_SHORT = {RECTANGULAR: "rect", TRIANGULAR: "tri"}
_MESH_LONG = {"rect": RECTANGULAR, "tri": TRIANGULAR, RECTANGULAR: RECTANGULAR, TRIANGULAR: TRIANGULAR}

#: errors below this are reported as exact reproductions (rate undefined)
EXACT_THRESHOLD = 1e-14


def rate(e_coarse: float, e_fine: float) -> float:
    """log2 error ratio between consecutive refinements; nan if undefined."""
    if e_coarse <= 0 or e_fine <= 0:
        return math.nan
    return math.log2(e_coarse / e_fine)


def compute_projection(mesh: Mesh, config: ElementConfig, solution: ManufacturedSolution) -> WeakCoeffVector:
    """Coefficients of Q_h u = {Q_0 u, Q_b u} over the whole mesh."""
    dm = asm.build_dof_map(mesh, config)
    values = np.zeros(dm.n_total)
    elem_ex, edge_ex = ps.data_exactness(config.l, config.s)

    for _, els in asm.element_classes(mesh).items():
        rep = mesh.element(int(els[0]))
        rule = ps.quad_element(mesh.kind, elem_ex)
        rep_pts, w = ps.map_rule_to_element(rule, rep)
        phi = ps.eval_scalar_basis_many(rep, config.l, rep_pts)
        M0 = np.einsum("n,ni,nj->ij", w, phi, phi)
        offsets = rep_pts - rep.centroid
        pts = mesh.centroids[els][:, None, :] + offsets[None, :, :]
        uv = solution.u(pts[:, :, 0], pts[:, :, 1])
        coeffs = np.linalg.solve(M0, ((uv * w[None, :]) @ phi).T).T
        slots = dm.element_starts[els][:, None] + np.arange(dm.n_interior)[None, :]
        values[slots] = coeffs

    rule = ps.quad_edge(edge_ex)
    chi = ps.eval_edge_basis_tau(config.s, rule.points)
    all_edges = np.arange(mesh.n_edges)
    for _, eids in asm._edge_classes(mesh, all_edges).items():
        length = mesh.edge_lengths[eids[0]]
        direction = mesh._edge_dirs[eids[0]]
        w = rule.weights * length
        M_e = np.einsum("n,np,nq->pq", w, chi, chi)
        t = rule.points * length
        pts = mesh._edge_starts[eids][:, None, :] + t[None, :, None] * direction[None, None, :]
        uv = solution.u(pts[:, :, 0], pts[:, :, 1])
        coeffs = np.linalg.solve(M_e, ((uv * w[None, :]) @ chi).T).T
        slots = dm.edge_starts[eids][:, None] + np.arange(dm.per_edge)[None, :]
        values[slots] = coeffs
    return WeakCoeffVector(values=values, dofmap=dm)


def _local_diffs(mesh: Mesh, config: ElementConfig, u_h: WeakCoeffVector,
                 proj: WeakCoeffVector) -> np.ndarray:
    diff = proj.values - u_h.values
    gdofs = u_h.dofmap.element_dof_matrix(mesh)
    return diff[gdofs]


def energy_error(mesh: Mesh, config: ElementConfig, solution: ManufacturedSolution,
                 u_h: WeakCoeffVector, proj: WeakCoeffVector | None = None) -> float:
    """|||Q_h u - u_h|||: weak-gradient norm plus stabilizer term (j finite)."""
    if proj is None:
        proj = compute_projection(mesh, config, solution)
    D = _local_diffs(mesh, config, u_h, proj)
    layout = wo.LocalDofLayout(config.l, config.s, mesh.elements.shape[1])
    total = 0.0
    for _, els in asm.element_classes(mesh).items():
        rep = mesh.element(int(els[0]))
        A_loc = wo.local_operator(rep, layout, config.grad, config.j)
        Dc = D[els]
        total += float(np.einsum("ei,ij,ej->", Dc, A_loc, Dc))
    return math.sqrt(max(total, 0.0))


def l2_error(mesh: Mesh, config: ElementConfig, solution: ManufacturedSolution,
             u_h: WeakCoeffVector, proj: WeakCoeffVector | None = None) -> float:
    """||Q_0 u - u_0|| over the mesh."""
    if proj is None:
        proj = compute_projection(mesh, config, solution)
    dm = u_h.dofmap
    diff = proj.values - u_h.values
    slots = dm.element_starts[:, None] + np.arange(dm.n_interior)[None, :]
    D = diff[slots]
    elem_ex, _ = ps.data_exactness(config.l, config.s)
    total = 0.0
    for _, els in asm.element_classes(mesh).items():
        rep = mesh.element(int(els[0]))
        M0 = wo.scalar_mass_matrix(rep, config.l, elem_ex)
        Dc = D[els]
        total += float(np.einsum("ei,ij,ej->", Dc, M0, Dc))
    return math.sqrt(max(total, 0.0))


@dataclass
class ConvergenceRow:
    level: int
    h: float
    ndof: int
    e1: float
    r1: float
    e2: float
    r2: float
    status: str  # ok | breakdown | diverging
    iterations: int = 0
    residual: float = 0.0


@dataclass
class ConvergenceReport:
    config: ElementConfig
    mesh_kind: str
    solution: str
    rows: list[ConvergenceRow] = field(default_factory=list)
    summary_r1: float = math.nan
    summary_r2: float = math.nan
    classification: str = "converged"  # converged | no-convergence | diverged
    trigger: str | None = None

    @property
    def diverged(self) -> bool:
        return self.classification == "diverged"


def run_study(config: ElementConfig, mesh_kind: str, levels, solution: ManufacturedSolution,
              solver_tol: float = 1e-11, max_iter: int | None = None) -> ConvergenceReport:
    """Sweep contiguous mesh levels, solve, and classify the convergence."""
    kind = _MESH_LONG[mesh_kind]
    levels = list(levels)
    if levels != list(range(levels[0], levels[-1] + 1)):
        raise ValueError("levels must be a contiguous ascending range")
    if levels[0] < 1 or levels[-1] > MAX_LEVEL:
        raise ValueError(f"levels must lie within [1, {MAX_LEVEL}]")

    report = ConvergenceReport(config=config, mesh_kind=_MESH_SHORT[kind], solution=solution.name)
    prev: ConvergenceRow | None = None
    for level in levels:
        mesh = build_mesh(kind, level)
        system = asm.assemble(mesh, config, solution.f, solution.g)
        u_h, solve_rep = asm.solve(system, tol=solver_tol, max_iter=max_iter)
        if config.stabilizer_free and not solve_rep.breakdown:
            # a consistent singular system solves the manufactured data
            # cleanly; generic data exposes the rank deficiency
            if asm.probe_singularity(system, max_iter=max_iter):
                solve_rep.breakdown, solve_rep.reason = True, "singular"
        proj = compute_projection(mesh, config, solution)
        e1 = energy_error(mesh, config, solution, u_h, proj)
        e2 = l2_error(mesh, config, solution, u_h, proj)
        r1 = rate(prev.e1, e1) if prev is not None else math.nan
        r2 = rate(prev.e2, e2) if prev is not None else math.nan
        if solve_rep.breakdown:
            status = "breakdown"
        elif prev is not None and min(_or_inf(r1), _or_inf(r2)) < -0.5:
            status = "diverging"
        else:
            status = "ok"
        row = ConvergenceRow(
            level=level, h=mesh.h, ndof=system.dofmap.n_unknowns,
            e1=e1, r1=r1, e2=e2, r2=r2, status=status,
            iterations=solve_rep.iterations, residual=solve_rep.residual,
        )
        report.rows.append(row)
        prev = row

    _summarize(report)
    return report


def _or_inf(r: float) -> float:
    return math.inf if math.isnan(r) else r


def _summarize(report: ConvergenceReport) -> None:
    rows = report.rows
    ok = [row for row in rows if row.status == "ok"]
    if len(ok) >= 2:
        a, b = ok[-2], ok[-1]
        gap = b.level - a.level
        report.summary_r1 = rate(a.e1, b.e1) / gap if gap else math.nan
        report.summary_r2 = rate(a.e2, b.e2) / gap if gap else math.nan

    if any(row.status == "breakdown" and row.level >= 3 for row in rows):
        report.classification, report.trigger = "diverged", "breakdown"
        return
    last = rows[-1]
    finest = [r for r in (last.r1, last.r2) if not math.isnan(r)]
    if finest and min(finest) < -0.5:
        report.classification, report.trigger = "diverged", "rate"
        return
    r1, r2 = report.summary_r1, report.summary_r2
    if not math.isnan(r1) and not math.isnan(r2) and abs(r1) <= 0.3 and abs(r2) <= 0.3:
        report.classification = "no-convergence"
    else:
        report.classification = "converged"


# -- table emission -----------------------------------------------------------

CSV_HEADER = ("mesh,element_l,element_s,grad_family,grad_degree,j,level,h,ndof,"
              "energy_err,energy_rate,l2_err,l2_rate,status")


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _fmt_j(j: float) -> str:
    return "inf" if math.isinf(j) else f"{int(j)}"


def csv_rows(report: ConvergenceReport) -> list[str]:
    cfg = report.config
    lines = []
    for row in report.rows:
        lines.append(",".join([
            report.mesh_kind, str(cfg.l), str(cfg.s), cfg.grad.family,
            str(cfg.grad.degree), _fmt_j(cfg.j), str(row.level), _fmt(row.h),
            str(row.ndof), _fmt(row.e1), _fmt(row.r1), _fmt(row.e2),
            _fmt(row.r2), row.status,
        ]))
    return lines


def summary_rates(report: ConvergenceReport) -> tuple[float, float]:
    """(r1, r2) as reported in the tables: -inf for diverged runs."""
    if report.diverged:
        return -math.inf, -math.inf
    return report.summary_r1, report.summary_r2


def emit_table(reports, fmt: str = "csv") -> str:
    """Render reports as CSV (per-level rows) or Markdown (summary + detail)."""
    reports = list(reports)
    if not reports:
        raise ValueError("emit_table needs at least one report")
    if fmt == "csv":
        lines = [CSV_HEADER]
        for rep in reports:
            lines.extend(csv_rows(rep))
        return "\n".join(lines) + "\n"
    if fmt == "markdown":
        lines = ["| element | mesh | j | r1 | r2 | class |", "|---|---|---|---|---|---|"]
        for rep in reports:
            r1, r2 = summary_rates(rep)
            cfg = rep.config
            lines.append(
                f"| {cfg.label().split(') j=')[0]}) | {rep.mesh_kind} | {_fmt_j(cfg.j)} "
                f"| {_round_rate(r1)} | {_round_rate(r2)} | {rep.classification} |")
        lines.append("")
        lines.append("| element | j | level | h | ndof | energy_err | r1 | l2_err | r2 | status |")
        lines.append("|---|---|---|---|---|---|---|---|---|---|")
        for rep in reports:
            cfg = rep.config
            name = cfg.label().split(") j=")[0] + ")"
            for row in rep.rows:
                lines.append(
                    f"| {name} | {_fmt_j(cfg.j)} | {row.level} | {row.h:.4g} | {row.ndof} "
                    f"| {row.e1:.3e} | {_round_rate(row.r1)} | {row.e2:.3e} "
                    f"| {_round_rate(row.r2)} | {row.status} |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown table format {fmt!r}")


def _round_rate(r: float) -> str:
    if math.isnan(r):
        return "-"
    if math.isinf(r):
        return "inf" if r > 0 else "-inf"
    return f"{r:.2f}"
