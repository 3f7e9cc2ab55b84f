"""Geometry rasterization, validation invariants, and the voxel file format."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmcell import (
    Ball,
    Box,
    CellGeometry,
    GeometryError,
    MaterialParams,
    ResolutionError,
    VoxelMaskRef,
    WireSpec,
    rasterize,
    read_voxel_file,
    validate,
    write_voxel_file,
)
from mmcell.geometry import EXTERIOR, RESONATOR

BALL_CENTER = (0.5, 0.5, 0.5)
# three pairwise-separated wires (axis distances all 0.5 on the torus)
WIRES = (
    WireSpec(direction=1, position=(0.25, 0.25)),
    WireSpec(direction=2, position=(0.25, 0.75)),
    WireSpec(direction=3, position=(0.75, 0.75)),
)


def test_ball_volume_fraction_oracle():
    # oracle: analytic ball volume (4/3) pi 0.25^3 ~ 0.06545
    geom = CellGeometry(resonator=Ball(BALL_CENTER, 0.25))
    mask = rasterize(geom, 32)
    frac = mask.volume_fraction(RESONATOR)
    exact = 4.0 / 3.0 * np.pi * 0.25**3
    assert abs(frac - exact) <= 0.10 * exact


def test_wire_volume_fraction_oracle():
    # oracle: analytic cylinder cross-section pi alpha^2 ~ 0.03141
    geom = CellGeometry(
        resonator=None, wire_radius_alpha=0.1, wire_axes=(WireSpec(3, (0.5, 0.5)),)
    )
    mask = rasterize(geom, 64)
    frac = mask.volume_fraction(RESONATOR + 3)
    exact = np.pi * 0.1**2
    assert abs(frac - exact) <= 0.15 * exact


def test_no_wires_when_alpha_zero():
    geom = CellGeometry(resonator=Ball(BALL_CENTER, 0.2), wire_radius_alpha=0.0)
    mask = rasterize(geom, 16)
    assert not mask.wire(1).any() and not mask.wire(2).any() and not mask.wire(3).any()


def test_rasterize_pure():
    geom = CellGeometry(resonator=Ball(BALL_CENTER, 0.2), wire_radius_alpha=0.05, wire_axes=WIRES)
    a = rasterize(geom, 24)
    b = rasterize(geom, 24)
    assert np.array_equal(a.labels, b.labels)


def test_volume_fraction_converges_under_refinement():
    exact = 4.0 / 3.0 * np.pi * 0.25**3
    errs = []
    for n in (16, 32, 64):
        mask = rasterize(CellGeometry(resonator=Ball(BALL_CENTER, 0.25)), n)
        errs.append(abs(mask.volume_fraction(RESONATOR) - exact))
    assert errs[2] < errs[0]


@settings(max_examples=15, deadline=None)
@given(st.integers(min_value=0, max_value=15))
def test_lattice_translation_invariance(shift):
    # shifting a ball by whole voxels must not change the voxel count
    n = 16
    base = rasterize(CellGeometry(resonator=Ball(BALL_CENTER, 0.23)), n)
    c = tuple((0.5 + shift / n) % 1.0 if d == 0 else 0.5 for d in range(3))
    moved = rasterize(CellGeometry(resonator=Ball(c, 0.23)), n)
    assert base.resonator.sum() == moved.resonator.sum()


def test_resolution_too_coarse_for_thin_wire():
    geom = CellGeometry(
        resonator=None, wire_radius_alpha=0.004, wire_axes=(WireSpec(3, (0.52, 0.52)),)
    )
    with pytest.raises(ResolutionError):
        rasterize(geom, 16)


def test_validate_passing_configuration():
    geom = CellGeometry(
        resonator=Ball(BALL_CENTER, 0.2), wire_radius_alpha=0.05, wire_axes=WIRES
    )
    rep = validate(geom, n=32)
    assert rep.passed, [c.name for c in rep.checks if not c.passed]
    margins = {c.name: c.value for c in rep.checks}
    assert margins["resonator-inside-cell"] == pytest.approx(0.3)


def test_validate_oversized_ball_hits_wire():
    # a ball of radius 0.45 reaches within sqrt(2)*0.25 - alpha of every wire
    geom = CellGeometry(
        resonator=Ball(BALL_CENTER, 0.45), wire_radius_alpha=0.05, wire_axes=WIRES
    )
    rep = validate(geom, n=32)
    assert not rep.passed
    failed = {c.name for c in rep.checks if not c.passed}
    assert any("resonator-disjoint" in name for name in failed)
    # the ball itself is still compactly contained (margin 0.05)
    assert "resonator-inside-cell" not in failed


def test_validate_intersecting_wires():
    # three wires through the same transverse anchor meet in a point
    geom = CellGeometry(
        resonator=Ball(BALL_CENTER, 0.2),
        wire_radius_alpha=0.05,
        wire_axes=(WireSpec(1, (0.1, 0.1)), WireSpec(2, (0.1, 0.1)), WireSpec(3, (0.1, 0.1))),
    )
    rep = validate(geom, n=32)
    assert not rep.passed
    failed = {c.name for c in rep.checks if not c.passed}
    assert any(name.startswith("wires-") for name in failed)


def test_validate_wireless_box():
    geom = CellGeometry(resonator=Box(BALL_CENTER, (0.2, 0.15, 0.1)))
    assert validate(geom, n=16).passed


def test_alpha_range_enforced():
    with pytest.raises(GeometryError):
        CellGeometry(resonator=None, wire_radius_alpha=0.7)


def test_material_passivity():
    with pytest.raises(GeometryError):
        MaterialParams(eps_b=25 - 1j)
    mat = MaterialParams(eps_b=25.0, eps_w=-100.0)
    assert mat.is_lossless
    assert not MaterialParams(eps_b=25 + 0.5j).is_lossless


def test_voxel_file_roundtrip(tmp_path):
    geom = CellGeometry(
        resonator=Ball(BALL_CENTER, 0.2), wire_radius_alpha=0.06, wire_axes=WIRES
    )
    mask = rasterize(geom, 16)
    path = tmp_path / "cell.mhvx"
    write_voxel_file(path, mask)
    back = read_voxel_file(path)
    assert back.n == 16
    assert np.array_equal(back.labels, mask.labels)
    # header is exactly 16 bytes, x-fastest payload
    raw = path.read_bytes()
    assert raw[:4] == b"MHVX"
    assert len(raw) == 16 + 16**3
    assert raw[16 + 3] == mask.labels[3, 0, 0]  # x varies first


def test_voxel_file_bad_magic(tmp_path):
    path = tmp_path / "junk.mhvx"
    path.write_bytes(b"NOPE" + bytes(12) + bytes(8))
    with pytest.raises(GeometryError):
        read_voxel_file(path)


def test_voxel_mask_resonator_roundtrip(tmp_path):
    geom = CellGeometry(resonator=Ball(BALL_CENTER, 0.25))
    mask = rasterize(geom, 16)
    path = tmp_path / "res.mhvx"
    write_voxel_file(path, mask)
    geom2 = CellGeometry(resonator=VoxelMaskRef(str(path)))
    mask2 = rasterize(geom2, 16)
    assert np.array_equal(mask2.resonator, mask.resonator)
    with pytest.raises(GeometryError):
        rasterize(geom2, 32)  # resolution mismatch is a hard error


def test_field_file_roundtrip(tmp_path):
    from mmcell.geometry import read_field_file, write_field_file

    rng = np.random.default_rng(3)
    n = 8
    scalar = rng.standard_normal(n**3) + 1j * rng.standard_normal(n**3)
    p = tmp_path / "theta.mhvx"
    write_field_file(p, n, scalar)
    n2, back = read_field_file(p)
    assert n2 == n
    assert np.allclose(back.ravel(), scalar.reshape(n, n, n).ravel())

    vec = rng.standard_normal(3 * n**3)
    p2 = tmp_path / "field.mhvx"
    write_field_file(p2, n, vec)
    _, backv = read_field_file(p2)
    assert np.allclose(backv.reshape(3, -1), vec.reshape(3, n**3).astype(complex))


def test_empty_geometry_all_exterior():
    mask = rasterize(CellGeometry(resonator=None), 8)
    assert (mask.labels == EXTERIOR).all()
