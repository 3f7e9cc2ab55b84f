"""Effective-medium engine for resonator-and-wire metamaterial cells.

Computes the frequency-independent effective permittivity and the
dispersive effective permeability of a periodic cell containing a
dielectric bulk resonator and up to three thin connected wires, then
sweeps frequency to locate double-negative (negative-index) bands.
"""

from .effective_medium import (
    PlaneWaveReport,
    SweepResult,
    SweepSample,
    assemble_eps_eff,
    classify_sample,
    plane_wave_check,
    sweep,
)
from .electric_cell import (
    ElectricCellSolution,
    ThetaEtaSolution,
    dirichlet_energy,
    solve_electric_cell,
    solve_theta_eta,
)
from .errors import (
    CirculationError,
    ConfigError,
    GeometryError,
    IncompatibleRhsError,
    MmcellError,
    PoleProximityError,
    ResolutionError,
    SolverError,
)
from .geometry import (
    Ball,
    Box,
    CellGeometry,
    MaterialParams,
    ValidationReport,
    VoxelMask,
    VoxelMaskRef,
    WireSpec,
    rasterize,
    read_voxel_file,
    validate,
    write_voxel_file,
)
from .grids import (
    PeriodicGrid,
    SparseOperator,
    build_curl,
    build_div,
    build_face_div,
    build_grad,
    integrate,
)
from .magnetic_cell import (
    ConstrainedSpace,
    MagneticCellSolution,
    MagneticSpectrum,
    MuResult,
    build_constrained_space,
    circulation,
    mu_eff_spectral,
    solve_magnetic_direct,
    solve_magnetic_spectrum,
)
from .solvers import (
    EigenPairs,
    EigenSolveOptions,
    LinearSolveOptions,
    cg_solve,
    eigs_smallest,
)

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "Box",
    "CellGeometry",
    "CirculationError",
    "ConfigError",
    "ConstrainedSpace",
    "EigenPairs",
    "EigenSolveOptions",
    "ElectricCellSolution",
    "GeometryError",
    "IncompatibleRhsError",
    "LinearSolveOptions",
    "MagneticCellSolution",
    "MagneticSpectrum",
    "MaterialParams",
    "MmcellError",
    "MuResult",
    "PeriodicGrid",
    "PlaneWaveReport",
    "PoleProximityError",
    "ResolutionError",
    "SolverError",
    "SparseOperator",
    "SweepResult",
    "SweepSample",
    "ThetaEtaSolution",
    "ValidationReport",
    "VoxelMask",
    "VoxelMaskRef",
    "WireSpec",
    "assemble_eps_eff",
    "build_constrained_space",
    "build_curl",
    "build_div",
    "build_face_div",
    "build_grad",
    "cg_solve",
    "circulation",
    "classify_sample",
    "dirichlet_energy",
    "eigs_smallest",
    "integrate",
    "mu_eff_spectral",
    "plane_wave_check",
    "rasterize",
    "read_voxel_file",
    "solve_electric_cell",
    "solve_magnetic_direct",
    "solve_magnetic_spectrum",
    "solve_theta_eta",
    "sweep",
    "validate",
    "write_voxel_file",
]
