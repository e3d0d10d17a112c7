"""Error norms, rates, classification and table emission."""

import math

import numpy as np
import pytest

from wglab.mesh import RECTANGULAR, TRIANGULAR, build_mesh
from wglab import assembly as asm
from wglab.assembly import ElementConfig
from wglab.polyspace import GradientSpace
from wglab.solutions import SOLUTIONS, get_solution
from wglab import study
from wglab.study import (
    CSV_HEADER, compute_projection, emit_table, energy_error, l2_error, rate,
    run_study, summary_rates,
)

import oracle

SINSIN = get_solution("sinsin")


def config(l, s, fam, m, j):
    return ElementConfig(l=l, s=s, grad=GradientSpace(fam, m), j=j)


# -- manufactured solutions ----------------------------------------------------

@pytest.mark.parametrize("name", sorted(SOLUTIONS))
def test_solutions_satisfy_poisson_equation(name):
    sol = get_solution(name)
    rng = np.random.default_rng(3)
    pts = rng.uniform(0.1, 0.9, size=(20, 2))
    eps = 1e-4  # balances stencil truncation against cancellation
    x, y = pts[:, 0], pts[:, 1]
    lap = (sol.u(x + eps, y) + sol.u(x - eps, y) + sol.u(x, y + eps)
           + sol.u(x, y - eps) - 4 * sol.u(x, y)) / eps ** 2
    np.testing.assert_allclose(-lap, sol.f(x, y), atol=1e-6 * max(1, np.abs(sol.f(x, y)).max()))
    # gradient consistency
    gx = (sol.u(x + eps, y) - sol.u(x - eps, y)) / (2 * eps)
    gy = (sol.u(x, y + eps) - sol.u(x, y - eps)) / (2 * eps)
    np.testing.assert_allclose(sol.grad(x, y), np.stack([gx, gy], axis=-1), atol=1e-8)
    np.testing.assert_allclose(sol.g(x, y), sol.u(x, y))


def test_unknown_solution_rejected():
    with pytest.raises(ValueError):
        get_solution("cubic")


# -- error norms -----------------------------------------------------------------

@pytest.mark.parametrize("kind", [RECTANGULAR, TRIANGULAR])
@pytest.mark.parametrize("j", [-1.0, math.inf])
def test_errors_vanish_on_projection(kind, j):
    mesh = build_mesh(kind, 2)
    cfg = config(1, 1, "P", 2, j)
    proj = compute_projection(mesh, cfg, SINSIN)
    assert energy_error(mesh, cfg, SINSIN, proj, proj) <= 1e-14
    assert l2_error(mesh, cfg, SINSIN, proj, proj) <= 1e-14


def test_energy_error_includes_stabilizer_only_when_finite():
    mesh = build_mesh(RECTANGULAR, 3)
    sol = SINSIN
    cfg_stab = config(1, 1, "P", 2, 1.0)
    cfg_free = config(1, 1, "P", 2, math.inf)
    system = asm.assemble(mesh, cfg_free, sol.f, sol.g)
    u_h, _ = asm.solve(system)
    proj = compute_projection(mesh, cfg_free, sol)
    e_free = energy_error(mesh, cfg_free, sol, u_h, proj)
    e_stab = energy_error(mesh, cfg_stab, sol, u_h, proj)
    assert e_stab > e_free  # same coefficients, extra quadratic form


def test_l2_error_against_direct_quadrature():
    from wglab import polyspace as ps
    mesh = build_mesh(TRIANGULAR, 2)
    cfg = config(1, 1, "P", 0, -1.0)
    system = asm.assemble(mesh, cfg, SINSIN.f, SINSIN.g)
    u_h, _ = asm.solve(system)
    proj = compute_projection(mesh, cfg, SINSIN)
    e2 = l2_error(mesh, cfg, SINSIN, u_h, proj)
    total = 0.0
    for e in range(mesh.n_elements):
        el = mesh.element(e)
        pts, w = ps.map_rule_to_element(ps.quad_element(mesh.kind, 12), el)
        phi = ps.eval_scalar_basis_many(el, cfg.l, pts)
        diff = phi @ (proj.values - u_h.values)[system.dofmap.element_dofs(mesh, e)[:3]]
        total += w @ diff ** 2
    assert e2 == pytest.approx(math.sqrt(total), rel=1e-12)


# -- rate helper -----------------------------------------------------------------

def test_rate_examples():
    assert rate(0.1, 0.025) == pytest.approx(2.0)
    assert rate(0.1, 0.1) == pytest.approx(0.0)
    assert rate(0.1, 0.2) == pytest.approx(-1.0)
    assert math.isnan(rate(0.0, 0.1))
    assert math.isnan(rate(0.1, 0.0))


# -- studies ---------------------------------------------------------------------

def test_run_study_requires_contiguous_levels():
    with pytest.raises(ValueError):
        run_study(config(0, 0, "P", 0, -1), "rect", [2, 4], SINSIN)
    with pytest.raises(ValueError):
        run_study(config(0, 0, "P", 0, -1), "rect", [0, 1], SINSIN)
    with pytest.raises(ValueError):
        run_study(config(0, 0, "P", 0, -1), "rect", [8, 9], SINSIN)


def test_refinement_decreases_errors_for_stabilized_runs():
    # spot check of the monotonicity invariant at the stated levels
    cases = [
        ("rect", config(1, 1, "P", 0, -1.0)),
        ("rect", config(2, 2, "P", 1, -1.0)),
        ("tri", config(1, 1, "P", 0, -1.0)),
        ("tri", config(1, 2, "RT", 1, -1.0)),
    ]
    for mesh_kind, cfg in cases:
        rep = run_study(cfg, mesh_kind, range(3, 7), SINSIN)
        e1 = [row.e1 for row in rep.rows]
        e2 = [row.e2 for row in rep.rows]
        assert all(a > b for a, b in zip(e1, e1[1:])), (mesh_kind, cfg.label(), e1)
        assert all(a > b for a, b in zip(e2, e2[1:])), (mesh_kind, cfg.label(), e2)


def test_classification_regimes():
    diverged = run_study(config(1, 1, "P", 0, math.inf), "rect", range(3, 5), SINSIN)
    assert diverged.classification == "diverged"
    assert diverged.trigger in ("breakdown", "rate")
    assert summary_rates(diverged) == (-math.inf, -math.inf)

    flat = run_study(config(0, 0, "P", 2, math.inf), "rect", range(3, 6), SINSIN)
    assert flat.classification == "no-convergence"
    assert abs(flat.summary_r1) <= 0.3 and abs(flat.summary_r2) <= 0.3

    good = run_study(config(1, 1, "P", 0, -1.0), "rect", range(3, 6), SINSIN)
    assert good.classification == "converged"
    assert good.summary_r1 == pytest.approx(1.0, abs=0.1)
    assert good.summary_r2 == pytest.approx(2.0, abs=0.1)


def test_tiny_scale_matches_dense_oracle():
    # level-2, lowest order: assembled system and solution vs dense brute force
    for kind, mesh_kind in ((RECTANGULAR, "rect"), (TRIANGULAR, "tri")):
        mesh = build_mesh(kind, 2)
        cfg = config(0, 0, "P", 1, -1.0)
        system = asm.assemble(mesh, cfg, SINSIN.f, SINSIN.g)
        A_ref, b_ref, pinned_ref = oracle.assemble_dense(mesh, cfg, SINSIN.f, SINSIN.g)
        scale = np.abs(A_ref).max()
        assert np.abs(system.A.toarray() - A_ref).max() <= 1e-10 * scale
        np.testing.assert_allclose(system.b, b_ref, atol=1e-10 * max(1, np.abs(b_ref).max()))
        u_h, report = asm.solve(system, tol=1e-13)
        assert report.converged
        ref = oracle.solve_dense(mesh, cfg, SINSIN.f, SINSIN.g)
        np.testing.assert_allclose(u_h.values, ref, atol=1e-10)


# -- emission --------------------------------------------------------------------

def test_csv_emission_schema():
    rep = run_study(config(1, 1, "P", 0, -1.0), "rect", range(2, 4), SINSIN)
    text = emit_table([rep], "csv")
    lines = text.strip().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 1 + len(rep.rows)
    fields = lines[1].split(",")
    assert fields[0] == "rect"
    assert fields[:6] == ["rect", "1", "1", "P", "0", "-1"]
    assert fields[10] == "nan"  # first level has no rate
    assert fields[13] == "ok"
    float(fields[9])  # parses as a float


def test_csv_j_inf_literal():
    rep = run_study(config(1, 1, "P", 2, math.inf), "rect", range(2, 4), SINSIN)
    line = emit_table([rep], "csv").splitlines()[1]
    assert line.split(",")[5] == "inf"


def test_markdown_reports_minus_inf_for_diverged():
    rep = run_study(config(1, 1, "P", 0, math.inf), "rect", range(3, 5), SINSIN)
    text = emit_table([rep], "markdown")
    summary_line = text.splitlines()[2]
    assert "-inf" in summary_line and "diverged" in summary_line


def test_emit_table_validates_inputs():
    with pytest.raises(ValueError):
        emit_table([], "csv")
    rep = run_study(config(0, 0, "P", 0, -1.0), "rect", range(2, 3), SINSIN)
    with pytest.raises(ValueError):
        emit_table([rep], "latex")


def test_expmix_exercises_inhomogeneous_boundary():
    sol = get_solution("expmix")
    rep = run_study(config(1, 1, "P", 0, -1.0), "rect", range(3, 6), sol)
    assert rep.classification == "converged"
    assert rep.summary_r1 == pytest.approx(1.0, abs=0.2)
    assert rep.summary_r2 == pytest.approx(2.0, abs=0.2)
