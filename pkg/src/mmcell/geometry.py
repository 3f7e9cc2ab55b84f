"""Periodicity-cell geometry: resonator shape, thin wires, rasterization.

The cell is Y = [0,1)^3 viewed as the flat torus.  A geometry holds one
bulk resonator (ball, box, or an imported voxel mask) that must be
compactly contained in the open cell, plus up to three axis-aligned
periodic wires of relative radius alpha.  Wire j runs in direction e_j
through a transverse anchor point (a, b); the transverse coordinates are
the two non-j axes in increasing order, so e.g. the wire along z is
{ (a, b, t) : t in [0,1) } thickened to a periodic cylinder.

All membership tests use periodic (minimum-image) distances, so shapes
wrap correctly; validity nevertheless requires the resonator to stay
clear of the cell boundary.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage as ndi

from .errors import GeometryError, ResolutionError

# voxel labels
EXTERIOR = 0
RESONATOR = 1
WIRE_BASE = 1  # wire j gets label WIRE_BASE + j, j in {1,2,3}

LABEL_NAMES = {0: "exterior", 1: "resonator", 2: "wire-1", 3: "wire-2", 4: "wire-3"}

_MAGIC = b"MHVX"
_HEADER = struct.Struct("<4sHIB5x")  # magic, version u16, n u32, payload kind u8, pad to 16
PAYLOAD_LABELS = 0
PAYLOAD_SCALAR_C128 = 1
PAYLOAD_VECTOR_C128 = 2


def _wrap(delta: np.ndarray) -> np.ndarray:
    """Minimum-image representative of a coordinate difference on the torus."""
    return (delta + 0.5) % 1.0 - 0.5


def transverse_axes(direction: int) -> tuple[int, int]:
    """The two non-axial axes (0-based, increasing) of wire direction j in {1,2,3}."""
    return tuple(d for d in (0, 1, 2) if d != direction - 1)


@dataclass(frozen=True)
class Ball:
    center: tuple[float, float, float]
    radius: float

    def contains(self, x, y, z):
        dx = _wrap(x - self.center[0])
        dy = _wrap(y - self.center[1])
        dz = _wrap(z - self.center[2])
        return dx * dx + dy * dy + dz * dz < self.radius**2

    def boundary_margin(self) -> float:
        """Distance from the shape to the cell boundary (analytic)."""
        m = min(min(c, 1.0 - c) for c in self.center)
        return m - self.radius

    def chart_center(self):
        return np.asarray(self.center, dtype=float)


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]
    half_widths: tuple[float, float, float]

    def contains(self, x, y, z):
        ok = np.abs(_wrap(x - self.center[0])) < self.half_widths[0]
        ok &= np.abs(_wrap(y - self.center[1])) < self.half_widths[1]
        ok &= np.abs(_wrap(z - self.center[2])) < self.half_widths[2]
        return ok

    def boundary_margin(self) -> float:
        return min(
            min(c, 1.0 - c) - h for c, h in zip(self.center, self.half_widths)
        )

    def chart_center(self):
        return np.asarray(self.center, dtype=float)


@dataclass(frozen=True)
class VoxelMaskRef:
    """Resonator given by an imported MHVX label file (label 1 = resonator)."""

    path: str

    def load_resonator(self, n: int) -> np.ndarray:
        mask = read_voxel_file(self.path)
        if mask.n != n:
            raise GeometryError(
                f"voxel-mask resonator has n={mask.n}, grid wants n={n}; resampling is not supported"
            )
        return mask.labels == RESONATOR


ShapeSpec = Ball | Box | VoxelMaskRef


@dataclass(frozen=True)
class WireSpec:
    direction: int  # 1, 2 or 3
    position: tuple[float, float]  # transverse anchor, both in (0,1)

    def __post_init__(self):
        if self.direction not in (1, 2, 3):
            raise GeometryError(f"wire direction must be 1, 2 or 3, got {self.direction}")


@dataclass(frozen=True)
class CellGeometry:
    resonator: ShapeSpec | None
    wire_radius_alpha: float = 0.0
    wire_axes: tuple[WireSpec, ...] = ()

    def __post_init__(self):
        if not (0.0 <= self.wire_radius_alpha < 0.5):
            raise GeometryError(
                f"wire_radius_alpha must lie in [0, 0.5), got {self.wire_radius_alpha}"
            )
        dirs = [w.direction for w in self.wire_axes]
        if len(dirs) != len(set(dirs)):
            raise GeometryError("at most one wire per axis direction")

    @property
    def wire_directions(self) -> tuple[int, ...]:
        return tuple(sorted(w.direction for w in self.wire_axes))

    def has_wires(self) -> bool:
        return self.wire_radius_alpha > 0 and len(self.wire_axes) > 0


@dataclass(frozen=True)
class MaterialParams:
    """Relative permittivity coefficients of resonator and wires.

    eps0_mu0 holds (eps_0, mu_0); only the product enters the frequency
    map k = omega * sqrt(eps0 * mu0).  Defaults give natural units.
    """

    eps_b: complex
    eps_w: complex = 1.0 + 0.0j
    eps0_mu0: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.eps_b.imag < 0 or self.eps_w.imag < 0:
            raise GeometryError("material imaginary parts must be >= 0 (passive media)")
        if self.eps0_mu0[0] <= 0 or self.eps0_mu0[1] <= 0:
            raise GeometryError("eps0 and mu0 must be positive")

    @property
    def is_lossless(self) -> bool:
        return self.eps_b.imag == 0 and self.eps_w.imag == 0

    def wavenumber(self, omega: float) -> float:
        return omega * np.sqrt(self.eps0_mu0[0] * self.eps0_mu0[1])


# ----------------------------------------------------------------------
# rasterization


@dataclass
class VoxelMask:
    """Per-voxel labels on the n^3 grid, voxel-center membership rule."""

    n: int
    labels: np.ndarray  # uint8, shape (n, n, n), indexed [ix, iy, iz]

    @property
    def resonator(self) -> np.ndarray:
        return self.labels == RESONATOR

    def wire(self, j: int) -> np.ndarray:
        return self.labels == WIRE_BASE + j

    def counts(self) -> dict[str, int]:
        return {
            name: int((self.labels == lab).sum()) for lab, name in LABEL_NAMES.items()
        }

    def volume_fraction(self, label: int) -> float:
        return float((self.labels == label).sum()) / self.n**3


def _voxel_centers(n: int):
    c = (np.arange(n) + 0.5) / n
    return np.meshgrid(c, c, c, indexing="ij")


def _wire_cross_section(wire: WireSpec, radius: float, n: int) -> np.ndarray:
    """2D bool mask over the transverse plane (first transverse axis varies first)."""
    c = (np.arange(n) + 0.5) / n
    a, b = np.meshgrid(c, c, indexing="ij")
    da = _wrap(a - wire.position[0])
    db = _wrap(b - wire.position[1])
    return da * da + db * db < radius**2


def _expand_cross_section(disc: np.ndarray, direction: int, n: int) -> np.ndarray:
    """Broadcast a transverse disc along the wire axis into an (n,n,n) mask."""
    ax = direction - 1
    out = np.zeros((n, n, n), dtype=bool)
    if ax == 0:
        out[:, :, :] = disc[np.newaxis, :, :]
    elif ax == 1:
        out[:, :, :] = disc[:, np.newaxis, :]
    else:
        out[:, :, :] = disc[:, :, np.newaxis]
    return out


def rasterize_components(
    geom: CellGeometry, n: int, wire_scale: float = 1.0
) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    """Boolean masks per component: (resonator, {direction: wire mask}).

    ``wire_scale`` rescales the wire radius (the convergence suite
    rasterizes wires at radius alpha*eta).  Raises ResolutionError if a
    wire has a positive radius but an empty rasterized cross-section.
    """
    if n < 8:
        raise ResolutionError(f"grid size n must be >= 8 for rasterization, got {n}")
    if geom.resonator is None:
        res = np.zeros((n, n, n), dtype=bool)
    elif isinstance(geom.resonator, VoxelMaskRef):
        res = geom.resonator.load_resonator(n)
    else:
        x, y, z = _voxel_centers(n)
        res = geom.resonator.contains(x, y, z)

    wires: dict[int, np.ndarray] = {}
    radius = geom.wire_radius_alpha * wire_scale
    if geom.wire_radius_alpha > 0:
        for w in geom.wire_axes:
            disc = _wire_cross_section(w, radius, n)
            if not disc.any():
                raise ResolutionError(
                    f"wire along e_{w.direction}: rasterized cross-section at radius "
                    f"{radius:.5g} is empty on the n={n} grid"
                )
            wires[w.direction] = _expand_cross_section(disc, w.direction, n)
    return res, wires


def rasterize(geom: CellGeometry, n: int, wire_scale: float = 1.0) -> VoxelMask:
    """Label voxels by center membership: exterior/resonator/wire-j.

    Wires take precedence over the resonator when sets overlap (valid
    geometries are disjoint, see validate()).
    """
    res, wires = rasterize_components(geom, n, wire_scale)
    labels = np.zeros((n, n, n), dtype=np.uint8)
    labels[res] = RESONATOR
    for j, m in wires.items():
        labels[m] = WIRE_BASE + j
    return VoxelMask(n=n, labels=labels)


# ----------------------------------------------------------------------
# validation


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float | None = None
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, passed, value=None, detail=""):
        self.checks.append(CheckResult(name, bool(passed), value, detail))

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "value": c.value, "detail": c.detail}
                for c in self.checks
            ],
        }


def _axis_distance(w1: WireSpec, w2: WireSpec) -> float:
    """Periodic distance between two wire center lines."""
    if w1.direction == w2.direction:
        da = _wrap(w1.position[0] - w2.position[0])
        db = _wrap(w1.position[1] - w2.position[1])
        return float(np.hypot(da, db))
    # perpendicular lines share exactly one transverse axis; the distance is
    # the offset of their anchor coordinates along that axis
    t1 = transverse_axes(w1.direction)
    t2 = transverse_axes(w2.direction)
    shared = set(t1) & set(t2)
    ax = shared.pop()
    c1 = w1.position[t1.index(ax)]
    c2 = w2.position[t2.index(ax)]
    return float(abs(_wrap(c1 - c2)))


def _resonator_wire_distance(
    geom: CellGeometry, wire: WireSpec, res_mask: np.ndarray, n: int
) -> float:
    """Distance between resonator and a wire center line, minus nothing.

    Analytic for ball/box, voxel-sampled for imported masks.
    """
    ta, tb = transverse_axes(wire.direction)
    if isinstance(geom.resonator, Ball):
        da = _wrap(geom.resonator.center[ta] - wire.position[0])
        db = _wrap(geom.resonator.center[tb] - wire.position[1])
        return float(np.hypot(da, db)) - geom.resonator.radius
    if isinstance(geom.resonator, Box):
        da = abs(_wrap(geom.resonator.center[ta] - wire.position[0]))
        db = abs(_wrap(geom.resonator.center[tb] - wire.position[1]))
        ga = max(da - geom.resonator.half_widths[ta], 0.0)
        gb = max(db - geom.resonator.half_widths[tb], 0.0)
        return float(np.hypot(ga, gb))
    # voxel mask: sample resonator voxel centers
    if not res_mask.any():
        return np.inf
    idx = np.argwhere(res_mask)
    centers = (idx + 0.5) / n
    da = _wrap(centers[:, ta] - wire.position[0])
    db = _wrap(centers[:, tb] - wire.position[1])
    return float(np.min(np.hypot(da, db)))


def validate(geom: CellGeometry, n: int = 32) -> ValidationReport:
    """Check the cell-geometry invariants; report margins in cell units.

    Rasterized checks (connectedness, mask disjointness) run at working
    resolution ``n``.  Simple connectedness is not verified, only plain
    connectedness of the rasterized resonator.
    """
    rep = ValidationReport()
    alpha = geom.wire_radius_alpha

    rep.add(
        "alpha-in-range",
        0.0 <= alpha < 0.5,
        value=alpha,
        detail="relative wire radius must lie in [0, 0.5)",
    )
    for w in geom.wire_axes:
        ok = all(0.0 < p < 1.0 for p in w.position)
        rep.add(
            f"wire-{w.direction}-anchor-in-cell",
            ok,
            detail=f"transverse anchor {w.position}",
        )

    try:
        res_mask, wire_masks = rasterize_components(geom, n)
        raster_ok = True
    except ResolutionError as exc:
        rep.add("rasterizable", False, detail=str(exc))
        res_mask, wire_masks = np.zeros((n, n, n), dtype=bool), {}
        raster_ok = False
    if raster_ok:
        rep.add("rasterizable", True, detail=f"working resolution n={n}")

    # compact containment of the resonator
    if geom.resonator is None:
        rep.add("resonator-inside-cell", True, value=np.inf, detail="no resonator")
    elif isinstance(geom.resonator, VoxelMaskRef):
        if res_mask.any():
            idx = np.argwhere(res_mask)
            centers = (idx + 0.5) / n
            margin = float(np.min(np.minimum(centers, 1.0 - centers)))
            touches = bool((idx == 0).any() or (idx == n - 1).any())
            rep.add(
                "resonator-inside-cell",
                not touches,
                value=margin,
                detail="voxel-mask resonator must not reach the outermost voxel layer",
            )
        else:
            rep.add("resonator-inside-cell", True, value=np.inf, detail="empty mask")
    else:
        margin = geom.resonator.boundary_margin()
        rep.add(
            "resonator-inside-cell",
            margin > 0,
            value=margin,
            detail="analytic distance to the cell boundary",
        )

    # connectedness (6-connectivity; compact containment means no wrap needed)
    if res_mask.any():
        structure = ndi.generate_binary_structure(3, 1)
        _, ncomp = ndi.label(res_mask, structure=structure)
        rep.add(
            "resonator-connected",
            ncomp == 1,
            value=float(ncomp),
            detail="connected components of the rasterized resonator (simple "
            "connectedness is assumed, not verified)",
        )
    else:
        rep.add("resonator-connected", True, value=0.0, detail="empty resonator")

    # pairwise wire disjointness (analytic axis distances, periodic)
    wires = list(geom.wire_axes)
    if alpha > 0:
        for i in range(len(wires)):
            for k in range(i + 1, len(wires)):
                d = _axis_distance(wires[i], wires[k])
                gap = d - 2 * alpha
                rep.add(
                    f"wires-{wires[i].direction}{wires[k].direction}-disjoint",
                    gap > 0,
                    value=gap,
                    detail=f"axis distance {d:.5g} vs diameter {2 * alpha:.5g}",
                )
        # wire vs resonator
        for w in wires:
            d = _resonator_wire_distance(geom, w, res_mask, n)
            gap = d - alpha
            rep.add(
                f"wire-{w.direction}-resonator-disjoint",
                gap > 0,
                value=gap,
                detail="distance from resonator to wire axis minus wire radius",
            )
        # cross-check on the rasterized masks at working resolution
        if raster_ok:
            masks = list(wire_masks.items())
            overlap = False
            for j, m in masks:
                if (m & res_mask).any():
                    overlap = True
            for i in range(len(masks)):
                for k in range(i + 1, len(masks)):
                    if (masks[i][1] & masks[k][1]).any():
                        overlap = True
            rep.add(
                "masks-disjoint",
                not overlap,
                detail=f"rasterized overlap test at n={n}",
            )
    return rep


# ----------------------------------------------------------------------
# MHVX voxel binary format
#
# 16-byte header, little endian: magic "MHVX" | version u16 = 1 |
# n u32 | payload-kind u8 (0 labels u8, 1 scalar complex128,
# 2 vector complex128 x3) | 5 pad bytes.  Payload follows in x-fastest
# order (index = ix + n*iy + n^2*iz); complex numbers are two f64 LE.


def write_voxel_file(path, mask: VoxelMask) -> None:
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, 1, mask.n, PAYLOAD_LABELS))
        f.write(np.ascontiguousarray(mask.labels, dtype=np.uint8).ravel(order="F").tobytes())


def read_voxel_file(path) -> VoxelMask:
    with open(path, "rb") as f:
        hdr = f.read(_HEADER.size)
        if len(hdr) != _HEADER.size:
            raise GeometryError(f"{path}: truncated MHVX header")
        magic, version, n, kind = _HEADER.unpack(hdr)
        if magic != _MAGIC:
            raise GeometryError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
        if version != 1:
            raise GeometryError(f"{path}: unsupported MHVX version {version}")
        if kind != PAYLOAD_LABELS:
            raise GeometryError(f"{path}: payload kind {kind} is not a label mask")
        buf = f.read(n**3)
        if len(buf) != n**3:
            raise GeometryError(f"{path}: payload has {len(buf)} bytes, expected {n**3}")
    labels = np.frombuffer(buf, dtype=np.uint8).reshape((n, n, n), order="F").copy()
    return VoxelMask(n=n, labels=labels)


def write_field_file(path, n: int, values: np.ndarray) -> None:
    """Dump a complex scalar (n^3) or link-vector (3 n^3) field for debugging."""
    a = np.asarray(values, dtype=np.complex128)
    if a.size == n**3:
        kind = PAYLOAD_SCALAR_C128
        payload = a.reshape((n, n, n)).ravel(order="F")
    elif a.size == 3 * n**3:
        kind = PAYLOAD_VECTOR_C128
        comp = a.reshape(3, n, n, n)
        payload = np.concatenate([comp[d].ravel(order="F") for d in range(3)])
    else:
        raise ValueError(f"field size {a.size} fits neither scalar nor vector on n={n}")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, 1, n, kind))
        f.write(np.ascontiguousarray(payload).tobytes())


def read_field_file(path) -> tuple[int, np.ndarray]:
    with open(path, "rb") as f:
        magic, version, n, kind = _HEADER.unpack(f.read(_HEADER.size))
        if magic != _MAGIC or version != 1:
            raise GeometryError(f"{path}: not an MHVX v1 file")
        if kind == PAYLOAD_SCALAR_C128:
            count = n**3
        elif kind == PAYLOAD_VECTOR_C128:
            count = 3 * n**3
        else:
            raise GeometryError(f"{path}: payload kind {kind} is not a field")
        data = np.frombuffer(f.read(16 * count), dtype=np.complex128)
    if data.size != count:
        raise GeometryError(f"{path}: truncated payload")
    if kind == PAYLOAD_SCALAR_C128:
        return n, data.reshape((n, n, n), order="F").copy()
    comps = data.reshape(3, -1)
    out = np.stack([comps[d].reshape((n, n, n), order="F") for d in range(3)])
    return n, out
