"""Electric cell problem: corrector potentials, elementary fields, A tensor.

For each polarization j the potential Theta^j minimizes the Dirichlet
energy  A(Theta) = int |grad Theta|^2  over periodic scalars that equal
the affine data -(y - c).e_j on the resonator voxels (c is the resonator
chart center; the constant offset is irrelevant).  The elementary field
is E^j = grad Theta^j + e_j, which vanishes identically on links interior
to the resonator, has unit mean, and is curl-free by construction.  The
tensor entry a[i, j] is the L2 pairing of E^i with E^j (no conjugation;
the fields are real).

The eta-dependent variant constrains, in addition, the two wires
transverse to j to the same affine data and the j-aligned wire to zero
(that value cannot follow the affine data, which is not periodic along
the wire); it converges to the wire-free solution as eta -> 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import geometry as geo
from .errors import GeometryError
from .grids import PeriodicGrid, build_grad, constant_field, integrate
from .solvers import LinearSolveOptions, cg_solve


@dataclass
class ElectricCellSolution:
    grid: PeriodicGrid
    resonator_mask: np.ndarray  # (n,n,n) bool
    theta: np.ndarray  # (3, n^3) potentials
    e_fields: np.ndarray  # (3, 3 n^3) link fields E^j
    a_eff: np.ndarray  # (3,3) complex
    solver_stats: dict = field(default_factory=dict)

    def dirichlet_energies(self) -> np.ndarray:
        """A(Theta^j) = int |grad Theta^j|^2 for j = 1..3."""
        g = build_grad(self.grid)
        return np.array([dirichlet_energy(self.grid, t, grad=g) for t in self.theta])


@dataclass
class ThetaEtaSolution:
    grid: PeriodicGrid
    eta: float
    theta_eta: np.ndarray  # (3, n^3)
    vth_eta: np.ndarray  # (3, 3 n^3) fields grad Theta + e_j
    resonator_mask: np.ndarray
    wire_masks: dict[int, np.ndarray]
    solver_stats: dict = field(default_factory=dict)


def dirichlet_energy(grid: PeriodicGrid, theta: np.ndarray, grad=None) -> float:
    """Quadrature of |grad theta|^2 over the torus."""
    g = build_grad(grid) if grad is None else grad
    gt = g @ np.asarray(theta).ravel()
    return float(grid.h**3 * np.vdot(gt, gt).real)


def _affine_data(coords: np.ndarray, axis_center: float) -> np.ndarray:
    """-(y_j - c_j), unwrapped about c_j so the data is smooth on the component."""
    return -(((coords - axis_center) + 0.5) % 1.0 - 0.5)


def _chart_center(geom: geo.CellGeometry, mask: np.ndarray, n: int) -> np.ndarray:
    if isinstance(geom.resonator, (geo.Ball, geo.Box)):
        return geom.resonator.chart_center()
    if mask.any():
        return (np.argwhere(mask).mean(axis=0) + 0.5) / n
    return np.array([0.5, 0.5, 0.5])


def _solve_constrained_laplace(
    grid: PeriodicGrid,
    con_mask: np.ndarray,
    data_per_j: list[np.ndarray],
    opts: LinearSolveOptions,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Minimize |grad Theta|^2 with Theta = data on con_mask, one solve per j.

    Returns (theta (3, n^3), fields (3, 3n^3), stats).  data_per_j[j] is a
    full n^3 array whose values are read on the constrained nodes only.
    The three polarizations are independent; ``threads`` > 1 runs them on
    a small pool (results are identical either way).
    """
    n3 = grid.num_nodes
    grad = build_grad(grid)
    con = con_mask.ravel()
    free = ~con
    if not con.any():
        theta = np.zeros((3, n3))
        fields = np.stack([constant_field(grid, np.eye(3)[j]) for j in range(3)])
        return theta, fields, {"iterations": [0, 0, 0], "residuals": [0.0, 0.0, 0.0]}
    if not free.any():
        raise GeometryError("constrained region covers the entire cell; no exterior voxels")

    lap = (grad.T @ grad).tocsr()
    free_idx = np.flatnonzero(free)
    con_idx = np.flatnonzero(con)
    l_ff = lap[free_idx][:, free_idx].tocsr()
    l_fc = lap[free_idx][:, con_idx].tocsr()

    def one(j):
        g_con = data_per_j[j].ravel()[con_idx]
        hist: list = []
        x = cg_solve(l_ff, -(l_fc @ g_con), opts, history_out=hist)
        return g_con, x, hist

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=min(threads, 3)) as pool:
            results = list(pool.map(one, range(3)))
    else:
        results = [one(j) for j in range(3)]

    theta = np.zeros((3, n3))
    fields = np.zeros((3, 3 * n3))
    stats = {"iterations": [], "residuals": []}
    for j, (g_con, x, hist) in enumerate(results):
        theta[j, con_idx] = g_con
        theta[j, free_idx] = x
        fields[j] = grad @ theta[j] + constant_field(grid, np.eye(3)[j])
        stats["iterations"].append(hist[-1][0] if hist else 0)
        stats["residuals"].append(hist[-1][1] if hist else 0.0)
    return theta, fields, stats


def solve_electric_cell(
    geom: geo.CellGeometry,
    grid: PeriodicGrid,
    opts: LinearSolveOptions = LinearSolveOptions(),
    resonator_mask: np.ndarray | None = None,
    threads: int = 1,
) -> ElectricCellSolution:
    """Solve the three elementary cell problems and assemble the tensor.

    Wires play no role here; only the resonator mask constrains the
    potential.  An empty resonator returns the exact identity solution.
    ``resonator_mask`` overrides rasterization when the caller already
    holds the mask at this resolution.
    """
    if resonator_mask is None:
        resonator_mask, _ = geo.rasterize_components(geom, grid.n)
    centers = grid.node_coords()
    c0 = _chart_center(geom, resonator_mask, grid.n)
    data = [_affine_data(centers[j], c0[j]) for j in range(3)]

    theta, fields, stats = _solve_constrained_laplace(grid, resonator_mask, data, opts, threads)

    a = np.empty((3, 3), dtype=np.complex128)
    w = grid.h**3
    for i in range(3):
        for j in range(i, 3):
            a[i, j] = a[j, i] = w * np.dot(fields[i], fields[j])
    return ElectricCellSolution(
        grid=grid,
        resonator_mask=resonator_mask,
        theta=theta,
        e_fields=fields,
        a_eff=a,
        solver_stats=stats,
    )


def solve_theta_eta(
    geom: geo.CellGeometry,
    grid: PeriodicGrid,
    eta: float,
    opts: LinearSolveOptions = LinearSolveOptions(),
    threads: int = 1,
) -> ThetaEtaSolution:
    """Wire-constrained potentials at relative cell size eta.

    Constraints for polarization j: affine data on the resonator and on
    the wires transverse to j (rasterized at radius alpha*eta), zero on
    the wire along j.  Raises ResolutionError when a wire cross-section
    rasterizes to nothing.
    """
    if not (0.0 < eta <= 1.0):
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    res_mask, wire_masks = geo.rasterize_components(geom, grid.n, wire_scale=eta)
    centers = grid.node_coords()
    c0 = _chart_center(geom, res_mask, grid.n)

    anchors = {w.direction: w for w in geom.wire_axes}
    con_mask = res_mask.copy()
    for m in wire_masks.values():
        con_mask |= m

    data_per_j = []
    for j in range(3):
        data = _affine_data(centers[j], c0[j])
        for direction, m in wire_masks.items():
            if direction == j + 1:
                data = np.where(m, 0.0, data)
            else:
                # unwrap the j-coordinate about the wire anchor so the affine
                # data stays smooth on wires that straddle the periodic cut
                w = anchors[direction]
                ta, tb = geo.transverse_axes(direction)
                anchor_j = w.position[0] if ta == j else w.position[1]
                rel = ((centers[j] - anchor_j) + 0.5) % 1.0 - 0.5
                wire_data = -((anchor_j + rel) - c0[j])
                data = np.where(m, wire_data, data)
        data_per_j.append(data)

    theta, fields, stats = _solve_constrained_laplace(grid, con_mask, data_per_j, opts, threads)
    return ThetaEtaSolution(
        grid=grid,
        eta=eta,
        theta_eta=theta,
        vth_eta=fields,
        resonator_mask=res_mask,
        wire_masks=wire_masks,
        solver_stats=stats,
    )


def field_mean(grid: PeriodicGrid, link_field: np.ndarray) -> np.ndarray:
    """Componentwise mean of a link field (equals integrate on the unit cell)."""
    return integrate(grid, link_field)


def interior_resonator_links(mask: np.ndarray) -> np.ndarray:
    """Links with both endpoints inside the resonator, shape (3, n, n, n)."""
    return np.stack([mask & np.roll(mask, -1, axis=d) for d in range(3)])
