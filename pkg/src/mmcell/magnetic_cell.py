"""Magnetic cell problem: constrained spectrum and the dispersive mu tensor.

The working space holds periodic vector fields that are curl-free outside
the resonator and have zero circulation.  It is parametrized explicitly,
never penalized: outside (and on the interface of) the resonator the
field is the gradient of a scalar potential, inside it every link value
is free.  Plaquettes whose four links are all gradient links then carry
exactly zero curl, and closed axis loops of gradient links telescope to
exactly zero circulation, so every field in the range of the
parametrization satisfies the constraints to machine precision.

On that space the quadratic form  b(u,v) = int curl u . curl v
+ div u . div v  is assembled and its lowest eigenpairs feed the moment
expansion of the effective permeability,

    mu[i,j](q) = delta_ij + sum_n  q/(lambda_n - q) * m_n[i] m_n[j],

with q the resonator-scaled squared wavenumber (eps_b * k^2) and
m_n = int phi_n the volume moment of the n-th eigenfield.  Modes with
vanishing moment ("dark") do not contribute.  The direct route solves
(b - q M) u_j = q <e_j, .> per polarization and reads off the tensor from
the field averages; both routes agree up to mode truncation because they
share one discretization.  Wires never enter this module.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import geometry as geo
from .errors import CirculationError, PoleProximityError, SolverError
from .grids import PeriodicGrid, build_curl, build_grad, constant_field, integrate
from .solvers import EigenSolveOptions, LinearSolveOptions, eigs_smallest

DARK_MOMENT_CUTOFF = 1e-10  # |int phi| below this (cell volume 1) is dark
DEFAULT_POLE_GUARD = 1e-8


class TruncationWarning(UserWarning):
    """Last retained bright mode still contributes above tolerance."""


def resonator_links(mask: np.ndarray) -> np.ndarray:
    """Links with both endpoints in the resonator, shape (3, n, n, n)."""
    return np.stack([mask & np.roll(mask, -1, axis=d) for d in range(3)])


def exterior_faces(mask: np.ndarray) -> np.ndarray:
    """Plaquettes whose four links are all gradient links, shape (3, n, n, n).

    Face d at node i is spanned by axes (d+1, d+2) and touches links
    u_{d+2}[i], u_{d+2}[i+e_{d+1}], u_{d+1}[i], u_{d+1}[i+e_{d+2}].
    """
    r = resonator_links(mask)
    out = np.empty((3,) + mask.shape, dtype=bool)
    for d in range(3):
        d2, d3 = (d + 1) % 3, (d + 2) % 3
        touched = r[d3] | np.roll(r[d3], -1, axis=d2) | r[d2] | np.roll(r[d2], -1, axis=d3)
        out[d] = ~touched
    return out


@dataclass
class ConstrainedSpace:
    """Explicit parametrization of the curl-free, zero-circulation space."""

    grid: PeriodicGrid
    resonator_mask: np.ndarray  # (n,n,n) bool
    pmap: sp.csr_matrix  # (3 n^3, reduced_dim)
    num_potential_dofs: int  # scalar potential DOFs (gauge already removed)
    num_free_links: int  # resonator-interior link DOFs
    gauge_node: int  # flat node index pinned to zero potential

    @property
    def reduced_dim(self) -> int:
        return self.pmap.shape[1]

    def lift(self, x: np.ndarray) -> np.ndarray:
        return self.pmap @ x

    def stiffness_and_mass(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """Reduced form matrix of b(.,.) and the reduced L2 mass."""
        g = build_grad(self.grid)
        c = build_curl(self.grid)
        w = self.grid.h**3
        b_full = (c.T @ c + g @ g.T) * w
        a_r = (self.pmap.T @ (b_full @ self.pmap)).tocsr()
        m_r = (self.pmap.T @ self.pmap).tocsr() * w
        # symmetrize away round-off from the triple product
        a_r = ((a_r + a_r.T) * 0.5).tocsr()
        return a_r, m_r


def build_constrained_space(grid: PeriodicGrid, mask: np.ndarray) -> ConstrainedSpace:
    """Assemble the parametrization map for a given resonator mask.

    Reduced coordinates = (potential on exterior + interface nodes, minus
    one gauge constant) + (free values on resonator-interior links).
    """
    n = grid.n
    n3 = grid.num_nodes
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n, n, n):
        raise ValueError(f"mask shape {mask.shape} does not match n={n}")

    res_links = resonator_links(mask)
    ext = ~mask
    if not ext.any():
        raise ValueError("resonator covers the whole cell")
    neighbor_ext = np.zeros_like(mask)
    for d in range(3):
        neighbor_ext |= np.roll(ext, 1, axis=d) | np.roll(ext, -1, axis=d)
    interface = mask & neighbor_ext
    potential_nodes = (ext | interface).ravel()

    gauge_node = int(np.flatnonzero(ext.ravel())[0])
    u_col = np.full(n3, -1, dtype=np.int64)
    pot_idx = np.flatnonzero(potential_nodes)
    u_col[pot_idx] = np.arange(len(pot_idx))
    # remove the gauge column, shift the ones after it
    gauge_col = u_col[gauge_node]
    u_col[u_col > gauge_col] -= 1
    u_col[gauge_node] = -1
    num_u = len(pot_idx) - 1

    idx3 = np.arange(n3).reshape(n, n, n)
    rows, cols, vals = [], [], []
    scale = float(n)  # 1/h
    for d in range(3):
        grad_here = ~res_links[d].ravel()
        link_rows = d * n3 + idx3.ravel()[grad_here]
        tails = idx3.ravel()[grad_here]
        heads = np.roll(idx3, -1, axis=d).ravel()[grad_here]
        for nodes, sgn in ((heads, scale), (tails, -scale)):
            keep = u_col[nodes] >= 0
            rows.append(link_rows[keep])
            cols.append(u_col[nodes][keep])
            vals.append(np.full(keep.sum(), sgn))

    free_flat = np.flatnonzero(res_links.reshape(3, -1).ravel())
    num_w = len(free_flat)
    rows.append(free_flat)
    cols.append(num_u + np.arange(num_w))
    vals.append(np.ones(num_w))

    pmap = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(3 * n3, num_u + num_w),
    )
    return ConstrainedSpace(
        grid=grid,
        resonator_mask=mask,
        pmap=pmap,
        num_potential_dofs=num_u,
        num_free_links=num_w,
        gauge_node=gauge_node,
    )


# ----------------------------------------------------------------------
# circulation (geometric average)


def _free_lines(mask: np.ndarray, axis: int) -> np.ndarray:
    """Flat transverse indices of complete axis lines missing the resonator."""
    return np.flatnonzero(~mask.any(axis=axis).ravel())


def circulation(
    u: np.ndarray,
    grid: PeriodicGrid,
    resonator_mask: np.ndarray,
    num_loops: int = 3,
    spread_tol: float = 1e-8,
) -> np.ndarray:
    """Loop average of a curl-free link field, one component per direction.

    Component k is the line integral of u over a closed grid line in
    direction e_k that avoids the resonator; ``num_loops`` distinct lines
    are evaluated and their spread must stay below
    ``spread_tol * (1 + |value|)``.  A warning is emitted when the field
    is not curl-free on exterior plaquettes (the average is then
    loop-dependent by Stokes).
    """
    n = grid.n
    comp = np.asarray(u).reshape(3, n, n, n)
    mask = np.asarray(resonator_mask, dtype=bool)

    curl = build_curl(grid) @ np.asarray(u).ravel()
    ext_f = exterior_faces(mask).ravel()
    worst = np.abs(curl[ext_f]).max() if ext_f.any() else 0.0
    if worst > 1e-8 * n * (1.0 + np.abs(comp).max()):
        warnings.warn(
            f"circulation input is not curl-free on exterior plaquettes "
            f"(max |curl| = {worst:.3e}); loop averages may disagree",
            stacklevel=2,
        )

    out = np.empty(3, dtype=complex)
    for k in range(3):
        free = _free_lines(mask, axis=k)
        if free.size == 0:
            raise CirculationError(
                f"no admissible loop in direction e_{k + 1}: every grid line "
                "meets the resonator (resolution too coarse or resonator not "
                "compactly contained)"
            )
        take = free[: max(1, min(num_loops, free.size))]
        sums = comp[k].sum(axis=k).ravel()[take] * grid.h
        spread = np.abs(sums - sums[0]).max()
        val = sums.mean()
        if spread > spread_tol * (1.0 + abs(val)):
            raise CirculationError(
                f"loop integrals in direction e_{k + 1} disagree by {spread:.3e} "
                f"(values {sums}); field is not loop-independent"
            )
        out[k] = val
    return out


# ----------------------------------------------------------------------
# spectrum and the dispersive permeability


@dataclass
class MagneticSpectrum:
    space: ConstrainedSpace
    eigenvalues: np.ndarray  # (k,) real, ascending
    eigenfields: np.ndarray  # (k, 3 n^3) lifted link fields, M-orthonormal
    moments: np.ndarray  # (k, 3) real volume moments
    bright: np.ndarray  # (k,) bool
    residuals: np.ndarray  # (k,)
    seed: int

    @property
    def num_modes(self) -> int:
        return len(self.eigenvalues)

    def rows(self):
        """(n, lambda, m1, m2, m3, bright) tuples for export."""
        for i in range(self.num_modes):
            yield (
                i,
                self.eigenvalues[i],
                self.moments[i, 0],
                self.moments[i, 1],
                self.moments[i, 2],
                bool(self.bright[i]),
            )


def solve_magnetic_spectrum(
    space: ConstrainedSpace,
    opts: EigenSolveOptions = EigenSolveOptions(),
    dark_cutoff: float = DARK_MOMENT_CUTOFF,
) -> MagneticSpectrum:
    """Lowest eigenpairs of the constrained form, with volume moments.

    The reduced matrices are real symmetric, so the eigensolve runs in
    real arithmetic and the lifted moments are exactly real.  Modes whose
    moment magnitude falls below ``dark_cutoff`` are retained but flagged
    dark; they cannot contribute to the permeability expansion.
    """
    a_r, m_r = space.stiffness_and_mass()
    k = min(opts.num_eigenpairs, space.reduced_dim)
    if k < opts.num_eigenpairs:
        warnings.warn(
            f"reduced space has dimension {space.reduced_dim} < requested "
            f"{opts.num_eigenpairs} modes; truncating",
            stacklevel=2,
        )
        opts = EigenSolveOptions(
            num_eigenpairs=k,
            shift=opts.shift,
            tolerance=opts.tolerance,
            max_restarts=opts.max_restarts,
            seed=opts.seed,
        )
    pairs = eigs_smallest(a_r, m_r, opts)
    lifted = (space.pmap @ pairs.vectors).T  # (k, 3 n^3)
    w = space.grid.h**3
    moments = w * lifted.reshape(len(pairs), 3, -1).sum(axis=2)
    bright = np.linalg.norm(moments, axis=1) > dark_cutoff
    return MagneticSpectrum(
        space=space,
        eigenvalues=pairs.values,
        eigenfields=lifted,
        moments=moments,
        bright=bright,
        residuals=pairs.residuals,
        seed=pairs.seed,
    )


@dataclass
class MuResult:
    tensor: np.ndarray  # (3,3) complex
    truncation_residual: float  # norm of the last included bright term
    min_pole_distance: float  # min |lambda_bright - q|, inf when no bright mode


def mu_eff_spectral(
    spectrum: MagneticSpectrum,
    q: complex,
    pole_guard: float | None = DEFAULT_POLE_GUARD,
    truncation_warn: float | None = None,
) -> MuResult:
    """Moment expansion of the effective permeability at q = eps_b k^2.

    Raises PoleProximityError for lossless q within ``pole_guard`` (relative)
    of a bright eigenvalue; pass ``pole_guard=None`` to disable (sweeps flag
    near-pole samples instead of dropping them).  ``truncation_warn``, when
    set, emits a TruncationWarning if the last bright term's norm exceeds it.
    """
    q = complex(q)
    lam = spectrum.eigenvalues
    bright = spectrum.bright
    mu = np.eye(3, dtype=complex)
    min_dist = np.inf
    last_term = 0.0
    if bright.any():
        lam_b = lam[bright]
        mom_b = spectrum.moments[bright]
        min_dist = float(np.abs(lam_b - q).min())
        if pole_guard is not None and q.imag == 0.0:
            guards = pole_guard * np.maximum(np.abs(lam_b), 1.0)
            if np.any(np.abs(lam_b - q) < guards):
                raise PoleProximityError(
                    f"lossless q={q.real:.6g} within pole guard of a bright "
                    f"eigenvalue (min distance {min_dist:.3e})"
                )
        if q != 0.0:
            coeff = q / (lam_b - q)
            mu += np.einsum("n,ni,nj->ij", coeff, mom_b, mom_b)
            last_term = float(np.abs(coeff[-1]) * np.dot(mom_b[-1], mom_b[-1]))
    if truncation_warn is not None and last_term > truncation_warn:
        warnings.warn(
            f"last bright mode still contributes {last_term:.3e} to mu; "
            "increase num_eigenpairs",
            TruncationWarning,
            stacklevel=2,
        )
    return MuResult(tensor=mu, truncation_residual=last_term, min_pole_distance=min_dist)


# ----------------------------------------------------------------------
# direct route


@dataclass
class MagneticCellSolution:
    grid: PeriodicGrid
    q: complex
    h_fields: np.ndarray  # (3, 3 n^3) link fields H^j
    j_fields: np.ndarray  # (3, 3 n^3) plaquette fields J^j
    mu: np.ndarray  # (3,3) complex
    residuals: np.ndarray  # (3,) linear-solve relative residuals
    space: ConstrainedSpace = field(repr=False, default=None)


def solve_magnetic_direct(
    geom: geo.CellGeometry | None,
    grid: PeriodicGrid,
    q: complex,
    opts: LinearSolveOptions = LinearSolveOptions(),
    space: ConstrainedSpace | None = None,
    eps_b: complex | None = None,
) -> MagneticCellSolution:
    """Solve (b - q M) u_j = q <e_j, .> on the constrained space, per j.

    H^j = e_j + u_j carries unit circulation by construction; the tensor
    column j is the volume average of H^j.  The complex-symmetric system
    is factorized sparsely and the solution verified against
    ``opts.tolerance``.  The current J^j is recovered from the curl of
    H^j; its physical scale needs eps_b (k = sqrt(q/eps_b), natural
    units), otherwise the unit-frequency convention J = i curl H is used.
    """
    q = complex(q)
    if space is None:
        if geom is None:
            raise ValueError("either a geometry or a prebuilt space is required")
        mask, _ = geo.rasterize_components(geom, grid.n)
        space = build_constrained_space(grid, mask)

    a_r, m_r = space.stiffness_and_mass()
    k_sys = (a_r - q * m_r).tocsc().astype(np.complex128)
    try:
        lu = spla.splu(k_sys)
    except RuntimeError as exc:  # singular factorization: q on the spectrum
        raise SolverError(
            f"direct magnetic solve at q={q}: factorization failed ({exc}); "
            "lossless q on or near a resonance, add loss or shift q"
        ) from exc

    w = grid.h**3
    n3 = grid.num_nodes
    h_fields = np.empty((3, 3 * n3), dtype=complex)
    j_fields = np.empty((3, 3 * n3), dtype=complex)
    mu = np.eye(3, dtype=complex)
    residuals = np.empty(3)

    if eps_b is not None:
        k_wave = np.sqrt(q / eps_b)
        omega = k_wave  # natural units: eps0 = mu0 = 1
    else:
        omega = 1.0

    curl = build_curl(grid)
    for j in range(3):
        e_j = constant_field(grid, np.eye(3)[j])
        rhs = q * w * (space.pmap.T @ e_j).astype(np.complex128)
        x = lu.solve(rhs)
        res = np.linalg.norm(k_sys @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
        if res > opts.tolerance:
            raise SolverError(
                f"direct magnetic solve, polarization {j + 1}: relative residual "
                f"{res:.3e} exceeds {opts.tolerance:.3e}",
                residual=res,
            )
        residuals[j] = res
        u_j = space.pmap @ x
        h_fields[j] = u_j + e_j
        mu[:, j] += integrate(grid, u_j)
        j_fields[j] = (1j / omega) * (curl @ h_fields[j])

    return MagneticCellSolution(
        grid=grid, q=q, h_fields=h_fields, j_fields=j_fields, mu=mu,
        residuals=residuals, space=space,
    )
