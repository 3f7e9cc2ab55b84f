"""Constrained space, circulation, spectrum, and both permeability routes."""

import numpy as np
import pytest
import scipy.linalg

from mmcell import (
    Ball,
    CellGeometry,
    CirculationError,
    EigenSolveOptions,
    LinearSolveOptions,
    PeriodicGrid,
    PoleProximityError,
    build_constrained_space,
    build_curl,
    build_grad,
    circulation,
    integrate,
    mu_eff_spectral,
    rasterize,
    solve_electric_cell,
    solve_magnetic_direct,
    solve_magnetic_spectrum,
)
from mmcell.grids import build_face_div, constant_field
from mmcell.magnetic_cell import exterior_faces


@pytest.fixture(scope="module")
def ball_space():
    n = 12
    g = PeriodicGrid(n)
    mask = rasterize(CellGeometry(resonator=Ball((0.5, 0.5, 0.5), 0.3)), n).resonator
    return g, mask, build_constrained_space(g, mask)


@pytest.fixture(scope="module")
def ball_spectrum(ball_space):
    g, mask, space = ball_space
    return solve_magnetic_spectrum(space, EigenSolveOptions(num_eigenpairs=60))


# ----------------------------------------------------------------------
# circulation


def test_circulation_constant_field():
    g = PeriodicGrid(8)
    mask = np.zeros((8, 8, 8), dtype=bool)
    c = np.array([1.5, -0.25, 3.0])
    out = circulation(constant_field(g, c), g, mask)
    assert np.abs(out - c).max() <= 1e-13


def test_circulation_of_gradient_zero():
    g = PeriodicGrid(8)
    mask = np.zeros((8, 8, 8), dtype=bool)
    rng = np.random.default_rng(0)
    u = build_grad(g) @ rng.standard_normal(g.num_nodes)
    out = circulation(u, g, mask)
    assert np.abs(out).max() <= 1e-12


def test_circulation_of_elementary_fields(ball_space):
    # paper-backed: loop and volume averages coincide for the electric fields
    g, mask, _ = ball_space
    geom = CellGeometry(resonator=Ball((0.5, 0.5, 0.5), 0.3))
    sol = solve_electric_cell(geom, g, LinearSolveOptions(tolerance=1e-11))
    for j in range(3):
        out = circulation(sol.e_fields[j], g, mask)
        assert np.abs(out - np.eye(3)[j]).max() <= 1e-8


def test_circulation_requires_free_loop():
    # a fat slab blocking every x-line leaves no admissible loop
    n = 8
    g = PeriodicGrid(n)
    mask = np.zeros((n, n, n), dtype=bool)
    mask[:, :, 3] = True  # slab normal to z blocks all z-transverse... x and y lines
    with pytest.raises(CirculationError):
        circulation(constant_field(g, (1.0, 0, 0)), g, mask)


def test_circulation_warns_on_curly_field():
    g = PeriodicGrid(8)
    mask = np.zeros((8, 8, 8), dtype=bool)
    rng = np.random.default_rng(1)
    u = rng.standard_normal(g.num_edges)
    with pytest.warns(UserWarning):
        try:
            circulation(u, g, mask)
        except CirculationError:
            pass  # loop disagreement is expected for a random field


# ----------------------------------------------------------------------
# constrained space


def test_empty_resonator_reduced_dimension():
    g = PeriodicGrid(8)
    space = build_constrained_space(g, np.zeros((8, 8, 8), dtype=bool))
    assert space.reduced_dim == 8**3 - 1
    assert space.num_free_links == 0


def test_range_of_parametrization_satisfies_constraints(ball_space):
    g, mask, space = ball_space
    curl = build_curl(g)
    ext_f = exterior_faces(mask).ravel()
    rng = np.random.default_rng(2)
    for _ in range(20):
        u = space.lift(rng.standard_normal(space.reduced_dim))
        assert np.abs((curl @ u)[ext_f]).max() <= 1e-13 * g.n * max(1.0, np.abs(u).max())
        assert np.abs(circulation(u, g, mask)).max() <= 1e-10 * max(1.0, np.abs(u).max())


def test_dense_rank_oracle_tiny_grid():
    # oracle: dense nullspace of the stacked constraints [curl on exterior
    # faces; three circulation rows], computed by SVD, independent loops
    n = 8
    g = PeriodicGrid(n)
    mask = rasterize(CellGeometry(resonator=Ball((0.5, 0.5, 0.5), 0.25)), n).resonator
    space = build_constrained_space(g, mask)
    curl = build_curl(g).toarray()
    ext_f = exterior_faces(mask).ravel()
    blocks = [curl[ext_f]]
    for k in range(3):
        free = np.flatnonzero(~mask.any(axis=k).ravel())
        row = np.zeros(3 * n**3)
        comp = np.zeros((n, n, n))
        others = [d for d in range(3) if d != k]
        sel = [slice(None)] * 3
        idx = np.unravel_index(free[-1], (n, n))
        sel[others[0]], sel[others[1]] = idx
        comp[tuple(sel)] = g.h
        row[k * n**3 : (k + 1) * n**3] = comp.ravel()
        blocks.append(row[None, :])
    stacked = np.vstack(blocks)
    rank = np.linalg.matrix_rank(stacked, tol=1e-8)
    null_dim = 3 * n**3 - rank
    assert space.reduced_dim == null_dim
    assert np.linalg.matrix_rank(space.pmap.toarray()) == space.reduced_dim


# ----------------------------------------------------------------------
# spectrum


def test_empty_resonator_spectrum_all_dark():
    g = PeriodicGrid(8)
    space = build_constrained_space(g, np.zeros((8, 8, 8), dtype=bool))
    spec = solve_magnetic_spectrum(space, EigenSolveOptions(num_eigenpairs=10))
    assert not spec.bright.any()
    mu = mu_eff_spectral(spec, 5.0 + 0.1j).tensor
    assert np.abs(mu - np.eye(3)).max() == 0.0


def test_spectrum_matches_dense_oracle(ball_space, ball_spectrum):
    g, mask, space = ball_space
    a_r, m_r = space.stiffness_and_mass()
    dense = scipy.linalg.eigh(a_r.toarray(), m_r.toarray(), eigvals_only=True)
    k = ball_spectrum.num_modes
    rel = np.abs(ball_spectrum.eigenvalues - dense[:k]) / np.abs(dense[:k])
    assert rel.max() <= 1e-8


def test_spectrum_invariants(ball_spectrum):
    spec = ball_spectrum
    assert np.all(np.diff(spec.eigenvalues) >= -1e-10)
    assert spec.eigenvalues[0] >= -1e-10
    assert np.max(np.abs(spec.moments.imag)) == 0.0  # real arithmetic throughout
    # eigenfields satisfy the space constraints
    curl = build_curl(spec.space.grid)
    ext_f = exterior_faces(spec.space.resonator_mask).ravel()
    u = spec.eigenfields[0]
    assert np.abs((curl @ u)[ext_f]).max() <= 1e-10 * max(1.0, np.abs(u).max())


def test_bright_triple_isotropic_moments(ball_spectrum):
    # cube symmetry: the first bright cluster is a degenerate triple whose
    # moment outer-product sum is a multiple of the identity
    spec = ball_spectrum
    bidx = np.flatnonzero(spec.bright)
    assert len(bidx) >= 3
    tri = bidx[:3]
    assert np.ptp(spec.eigenvalues[tri]) <= 1e-8 * spec.eigenvalues[tri[0]]
    norms = np.linalg.norm(spec.moments[tri], axis=1)
    assert np.ptp(norms) <= 1e-6 * norms[0]
    outer = sum(np.outer(spec.moments[i], spec.moments[i]) for i in tri)
    iso = outer - outer.trace() / 3 * np.eye(3)
    assert np.abs(iso).max() <= 1e-8 * outer.trace()


# ----------------------------------------------------------------------
# spectral permeability


def test_mu_at_zero_frequency_is_identity(ball_spectrum):
    res = mu_eff_spectral(ball_spectrum, 0.0)
    assert np.abs(res.tensor - np.eye(3)).max() == 0.0


def test_mu_complex_symmetric_and_passive(ball_spectrum):
    q = 60.0 + 3.0j
    mu = mu_eff_spectral(ball_spectrum, q).tensor
    assert np.abs(mu - mu.T).max() <= 1e-12 * np.abs(mu).max()
    im_eigs = np.linalg.eigvalsh(mu.imag)
    assert im_eigs.min() >= -1e-10


def test_mu_sum_rule_below_first_pole(ball_spectrum):
    lam1 = ball_spectrum.eigenvalues[ball_spectrum.bright][0]
    mu = mu_eff_spectral(ball_spectrum, 0.5 * lam1).tensor
    assert np.all(np.diag(mu).real > 1.0)


def test_mu_pole_guard(ball_spectrum):
    lam1 = ball_spectrum.eigenvalues[ball_spectrum.bright][0]
    with pytest.raises(PoleProximityError):
        mu_eff_spectral(ball_spectrum, lam1 * (1 + 1e-10))
    # lossy q arbitrarily close to the pole is fine
    mu_eff_spectral(ball_spectrum, lam1 + 1e-6j)


def test_mu_sign_flip_across_pole(ball_spectrum):
    spec = ball_spectrum
    lam1 = spec.eigenvalues[spec.bright][0]
    m1 = spec.moments[spec.bright][0]
    e = m1 / np.linalg.norm(m1)
    below = mu_eff_spectral(spec, lam1 * 0.99).tensor
    above = mu_eff_spectral(spec, lam1 * 1.01).tensor
    v_below = e @ below.real @ e
    v_above = e @ above.real @ e
    assert v_below > 1.0
    assert v_above < 0.0
    # single-pole oracle from the measured eigenvalue and moment
    mm = np.dot(m1, m1)
    triple = np.abs(spec.eigenvalues - lam1) <= 1e-8 * lam1
    strength = sum(
        np.dot(spec.moments[i], e) ** 2 for i in np.flatnonzero(triple & spec.bright)
    )
    pred_below = 1.0 + 0.99 * lam1 / (lam1 - 0.99 * lam1) * strength
    assert abs(v_below - pred_below) <= 0.05 * abs(pred_below)
    assert mm > 0


# ----------------------------------------------------------------------
# direct route


def test_direct_empty_resonator_identity():
    g = PeriodicGrid(8)
    geom = CellGeometry(resonator=None)
    sol = solve_magnetic_direct(geom, g, q=10.0 + 1.0j)
    assert np.abs(sol.mu - np.eye(3)).max() <= 1e-12
    for j in range(3):
        assert np.abs(sol.h_fields[j].reshape(3, -1)[j] - 1.0).max() <= 1e-12


def test_direct_invariants(ball_space):
    g, mask, space = ball_space
    q = 30 + 2j
    sol = solve_magnetic_direct(None, g, q, space=space, eps_b=25.0 + 0.5j)
    div = -build_grad(g).T
    fdiv = build_face_div(g)
    ext_f = exterior_faces(mask).ravel()
    for j in range(3):
        h = sol.h_fields[j]
        # circulation normalization re-checked via the circulation operator
        circ = circulation(h, g, mask)
        assert np.abs(circ - np.eye(3)[j]).max() <= 1e-8
        # div H ~ 0 (solver tolerance scale)
        assert np.abs(div @ h).max() <= 1e-6 * g.n * np.abs(h).max()
        # J vanishes on exterior plaquettes exactly, div J = 0 exactly
        jf = sol.j_fields[j]
        assert np.abs(jf[ext_f]).max() <= 1e-12 * max(1.0, np.abs(jf).max())
        assert np.abs(fdiv @ jf).max() <= 1e-9 * g.n * max(1.0, np.abs(jf).max())


def test_route_agreement_improves_with_modes(ball_space):
    g, mask, space = ball_space
    q = 30 + 2j
    direct = solve_magnetic_direct(None, g, q, space=space)
    diffs = []
    for k in (12, 40, 120):
        spec = solve_magnetic_spectrum(space, EigenSolveOptions(num_eigenpairs=k))
        mu = mu_eff_spectral(spec, q).tensor
        diffs.append(np.abs(mu - direct.mu).max())
    assert diffs[1] <= diffs[0] * (1 + 1e-9)
    assert diffs[2] <= diffs[1] * (1 + 1e-9)
    assert diffs[2] <= 5e-3
