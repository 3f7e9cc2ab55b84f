"""Effective tensors, frequency sweep, and band classification.

The effective permittivity is frequency independent: the electric-cell
tensor plus the wire term pi*alpha^2*eps_w added to the diagonal entries
of directions that carry a wire.  The effective permeability comes from
the magnetic spectrum and is evaluated per frequency; a sweep computes
both once per configuration, walks the frequency grid, and classifies
each sample by the eigenvalue signs of the real parts:

* double-negative  -- both tensors negative definite,
* single-negative  -- exactly one negative definite,
* double-positive  -- neither (includes indefinite real parts),
* near-pole        -- q within 1% of a bright eigenvalue (overrides).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .electric_cell import solve_electric_cell
from .errors import GeometryError
from .grids import PeriodicGrid
from .magnetic_cell import (
    MagneticSpectrum,
    build_constrained_space,
    mu_eff_spectral,
    solve_magnetic_spectrum,
)
from .solvers import EigenSolveOptions, LinearSolveOptions

NEAR_POLE_REL_BAND = 0.01

FLAG_DOUBLE_POSITIVE = "double-positive"
FLAG_SINGLE_NEGATIVE = "single-negative"
FLAG_DOUBLE_NEGATIVE = "double-negative"
FLAG_NEAR_POLE = "near-pole"


def assemble_eps_eff(
    a_eff: np.ndarray, alpha: float, eps_w: complex, wire_dirs=(1, 2, 3)
) -> np.ndarray:
    """a_eff + pi alpha^2 eps_w on the diagonal entries with a wire.

    ``wire_dirs`` lists the directions (1-based) that carry a wire; with
    no wires (or alpha = 0) the tensor is a_eff unchanged.
    """
    a = np.asarray(a_eff, dtype=complex)
    if a.shape != (3, 3):
        raise ValueError("a_eff must be 3x3")
    if not np.allclose(a, a.T, rtol=0, atol=1e-10 * max(1.0, np.abs(a).max())):
        raise ValueError("a_eff must be symmetric")
    out = a.copy()
    term = np.pi * alpha**2 * eps_w
    for d in wire_dirs:
        out[d - 1, d - 1] += term
    return out


def classify_sample(
    eig_re_mu: np.ndarray, eig_re_eps: np.ndarray, near_pole: bool
) -> str:
    """Pure flag function of the stored eigenvalues (recheckable)."""
    if near_pole:
        return FLAG_NEAR_POLE
    neg = int(np.max(eig_re_mu) < 0) + int(np.max(eig_re_eps) < 0)
    if neg == 2:
        return FLAG_DOUBLE_NEGATIVE
    if neg == 1:
        return FLAG_SINGLE_NEGATIVE
    return FLAG_DOUBLE_POSITIVE


@dataclass
class SweepSample:
    omega: float
    k: float
    q: complex
    mu: np.ndarray  # (3,3) complex
    eig_re_mu: np.ndarray  # (3,) ascending
    eig_re_eps: np.ndarray  # (3,) ascending
    flag: str


@dataclass
class SweepResult:
    samples: list[SweepSample]
    eps_eff: np.ndarray  # (3,3) complex, frequency independent
    a_eff: np.ndarray  # (3,3) complex
    alpha: float
    eps_w: complex
    wire_dirs: tuple[int, ...]
    spectrum: MagneticSpectrum = field(repr=False, default=None)
    metadata: dict = field(default_factory=dict)

    def flags(self) -> list[str]:
        return [s.flag for s in self.samples]

    def recheck_flags(self) -> bool:
        """Flags must be a pure function of the stored eigenvalues."""
        return all(
            s.flag == classify_sample(s.eig_re_mu, s.eig_re_eps, s.flag == FLAG_NEAR_POLE)
            for s in self.samples
        )


def _near_pole(spectrum: MagneticSpectrum, q: complex) -> bool:
    lam = spectrum.eigenvalues[spectrum.bright]
    if lam.size == 0:
        return False
    return bool(np.any(np.abs(lam - q) < NEAR_POLE_REL_BAND * np.maximum(lam, 1.0)))


def sweep(
    geom: geo.CellGeometry,
    materials: geo.MaterialParams,
    grid: PeriodicGrid,
    omegas: np.ndarray,
    solve_opts: LinearSolveOptions = LinearSolveOptions(),
    eig_opts: EigenSolveOptions = EigenSolveOptions(),
    electric=None,
    spectrum: MagneticSpectrum | None = None,
) -> SweepResult:
    """Frequency sweep of the effective pair over sorted ``omegas``.

    The electric solve and the magnetic spectrum are computed once and
    reused across samples (pass precomputed ones to skip).  Near-pole
    samples are flagged, never dropped; the pole guard is disabled since
    sweeps are expected to straddle resonances.
    """
    omegas = np.sort(np.asarray(omegas, dtype=float))
    if omegas.size == 0:
        raise ValueError("empty frequency grid")

    res_mask, _ = geo.rasterize_components(geom, grid.n)
    if electric is None:
        electric = solve_electric_cell(geom, grid, solve_opts, resonator_mask=res_mask)
    if spectrum is None:
        space = build_constrained_space(grid, res_mask)
        spectrum = solve_magnetic_spectrum(space, eig_opts)

    wire_dirs = geom.wire_directions if geom.has_wires() else ()
    eps_eff = assemble_eps_eff(
        electric.a_eff, geom.wire_radius_alpha, materials.eps_w, wire_dirs
    )
    eig_re_eps = np.linalg.eigvalsh(0.5 * (eps_eff.real + eps_eff.real.T))

    samples = []
    for omega in omegas:
        k = materials.wavenumber(float(omega))
        q = materials.eps_b * k**2
        mu_res = mu_eff_spectral(spectrum, q, pole_guard=None)
        mu = mu_res.tensor
        eig_re_mu = np.linalg.eigvalsh(0.5 * (mu.real + mu.real.T))
        flag = classify_sample(eig_re_mu, eig_re_eps, _near_pole(spectrum, q))
        samples.append(
            SweepSample(
                omega=float(omega),
                k=float(k),
                q=complex(q),
                mu=mu,
                eig_re_mu=eig_re_mu,
                eig_re_eps=eig_re_eps,
                flag=flag,
            )
        )

    return SweepResult(
        samples=samples,
        eps_eff=eps_eff,
        a_eff=np.asarray(electric.a_eff, dtype=complex),
        alpha=geom.wire_radius_alpha,
        eps_w=complex(materials.eps_w),
        wire_dirs=tuple(wire_dirs),
        spectrum=spectrum,
        metadata={
            "n": grid.n,
            "num_modes": spectrum.num_modes,
            "eig_seed": spectrum.seed,
            "cg_tolerance": solve_opts.tolerance,
        },
    )


@dataclass
class PlaneWaveReport:
    status: str  # "ok" or "unsupported-anisotropic"
    eps_scalar: complex | None = None
    mu_scalar: complex | None = None
    eps_mu: complex | None = None
    propagating: bool | None = None


def _scalar_part(t: np.ndarray, rtol: float) -> complex | None:
    t = np.asarray(t, dtype=complex)
    s = np.trace(t) / 3.0
    if np.abs(t - s * np.eye(3)).max() > rtol * max(1.0, abs(s)):
        return None
    return complex(s)


def plane_wave_check(eps_eff, mu_eff, isotropy_rtol: float = 1e-6) -> PlaneWaveReport:
    """Scalar dispersion sanity check for isotropic effective pairs.

    For eps = e*I and mu = m*I the effective system supports plane waves
    with k_eff^2 proportional to e*m; a positive real product means the
    wave propagates (the double-negative case included), a negative one
    is evanescent.  Anisotropic input is reported, not processed.
    """
    e = _scalar_part(eps_eff, isotropy_rtol)
    m = _scalar_part(mu_eff, isotropy_rtol)
    if e is None or m is None:
        return PlaneWaveReport(status="unsupported-anisotropic")
    prod = e * m
    return PlaneWaveReport(
        status="ok",
        eps_scalar=e,
        mu_scalar=m,
        eps_mu=prod,
        propagating=bool(prod.real > 0),
    )
