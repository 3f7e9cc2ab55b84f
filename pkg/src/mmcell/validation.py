"""Full invariant suite behind the validate command.

Runs the geometry checks, the exact operator identities at the working
resolution, the electric-solution invariants (unit means, interior
vanishing, curl-freeness, tensor structure, energy identity), the loop
average of the elementary fields, and the wire-shrinking convergence
ladder (eta in {1/4, 1/8, 1/16}): the L2 distance of the wire-constrained
fields to the wire-free solution must decrease, with the reference
Dirichlet energy below every rung's.  Everything lands in a single report
dict matching the validation_report contract; rungs whose wire radius
rasterizes to nothing are recorded as resolution failures, not crashes.
"""

from __future__ import annotations

import numpy as np

from . import geometry as geo
from .electric_cell import dirichlet_energy, interior_resonator_links, solve_electric_cell, solve_theta_eta
from .errors import ResolutionError
from .grids import PeriodicGrid, build_curl, build_div, build_grad, integrate
from .magnetic_cell import circulation
from .solvers import LinearSolveOptions

ETA_LADDER = (0.25, 0.125, 0.0625)


def _check(report, name, passed, value=None, detail=""):
    report["checks"].append(
        {"name": name, "passed": bool(passed), "value": value, "detail": detail}
    )


def _operator_checks(report, grid: PeriodicGrid, seed: int):
    grad = build_grad(grid)
    curl = build_curl(grid)
    div = build_div(grid)
    cg = abs(curl @ grad)
    dc = abs(div @ curl.T)
    _check(report, "curl-grad-zero", (cg.max() if cg.nnz else 0.0) <= 1e-13,
           value=float(cg.max()) if cg.nnz else 0.0)
    _check(report, "div-curl-zero", (dc.max() if dc.nnz else 0.0) <= 1e-13,
           value=float(dc.max()) if dc.nnz else 0.0)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        u = rng.standard_normal(grid.num_nodes)
        v = rng.standard_normal(grid.num_edges)
        lhs = np.dot(grad @ u, v)
        rhs = -np.dot(u, div @ v)
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-30))
    _check(report, "grad-div-adjoint", worst <= 1e-12, value=worst)


def _electric_checks(report, geom, grid, sol):
    for j in range(3):
        mean = integrate(grid, sol.e_fields[j])
        err = float(np.abs(mean - np.eye(3)[j]).max())
        _check(report, f"e{j + 1}-unit-mean", err <= 1e-10, value=err)
    inner = interior_resonator_links(sol.resonator_mask).reshape(3, -1)
    if inner.any():
        worst = max(
            float(np.abs(sol.e_fields[j].reshape(3, -1)[inner]).max()) for j in range(3)
        )
        _check(report, "e-vanishes-in-resonator", worst <= 1e-12, value=worst)
    curl = build_curl(grid)
    worst = max(float(np.abs(curl @ sol.e_fields[j]).max()) for j in range(3))
    _check(report, "e-curl-free", worst <= 1e-9 * grid.n, value=worst)
    a = sol.a_eff
    sym = float(np.abs(a - a.T).max())
    _check(report, "a-symmetric", sym <= 1e-12 * np.abs(a).max(), value=sym)
    emin = float(np.linalg.eigvalsh(a.real).min())
    _check(report, "a-minus-identity-psd", emin >= 1.0 - 1e-9, value=emin)
    energies = sol.dirichlet_energies()
    worst = max(
        abs(a[j, j].real - (1.0 + energies[j])) / (1.0 + energies[j]) for j in range(3)
    )
    _check(report, "a-energy-identity", worst <= 1e-10, value=float(worst))
    try:
        circ_err = max(
            float(np.abs(circulation(sol.e_fields[j], grid, sol.resonator_mask) - np.eye(3)[j]).max())
            for j in range(3)
        )
        _check(report, "e-circulation-unit", circ_err <= 1e-8, value=circ_err)
    except Exception as exc:  # no admissible loop counts as a failed check
        _check(report, "e-circulation-unit", False, detail=str(exc))
    return energies


def run_validation_suite(
    geom: geo.CellGeometry,
    grid: PeriodicGrid,
    opts: LinearSolveOptions = LinearSolveOptions(),
    seed: int = 20260810,
    etas=ETA_LADDER,
) -> dict:
    report: dict = {"checks": [], "theta_eta_ladder": None, "resolution_error": False}

    geo_rep = geo.validate(geom, n=grid.n)
    for c in geo_rep.checks:
        _check(report, f"geometry/{c.name}", c.passed, value=c.value, detail=c.detail)

    _operator_checks(report, grid, seed)

    ref = solve_electric_cell(geom, grid, opts)
    ref_energy = _electric_checks(report, geom, grid, ref)

    ladder = None
    if geom.has_wires():
        ladder = {
            "eta": [],
            "l2_error": [],
            "dirichlet_energy": [],
            "reference_energy": [float(e) for e in ref_energy],
        }
        w = grid.h**3
        for eta in etas:
            try:
                sol = solve_theta_eta(geom, grid, eta, opts)
            except ResolutionError as exc:
                _check(report, f"theta-eta/{eta:g}-resolvable", False, detail=str(exc))
                report["resolution_error"] = True
                continue
            diff = sol.vth_eta - ref.e_fields
            errs = np.sqrt(w * np.einsum("ij,ij->i", diff, diff))
            energies = [dirichlet_energy(grid, sol.theta_eta[j]) for j in range(3)]
            ladder["eta"].append(eta)
            ladder["l2_error"].append([float(e) for e in errs])
            ladder["dirichlet_energy"].append([float(e) for e in energies])
            ok = all(
                ref_energy[j] <= energies[j] * (1 + 1e-9) + 1e-12 for j in range(3)
            )
            _check(report, f"theta-eta/{eta:g}-energy-dominates", ok,
                   value=float(min(energies[j] - ref_energy[j] for j in range(3))))
        errs_arr = np.asarray(ladder["l2_error"])
        if len(errs_arr) >= 2:
            decreasing = bool(np.all(np.diff(errs_arr, axis=0) < 0))
            _check(report, "theta-eta/error-strictly-decreasing", decreasing,
                   detail=f"L2 errors per eta: {ladder['l2_error']}")
        elif not report["resolution_error"]:
            _check(report, "theta-eta/error-strictly-decreasing", False,
                   detail="fewer than two resolvable rungs")
    report["theta_eta_ladder"] = ladder
    report["passed"] = all(c["passed"] for c in report["checks"])
    return report
