"""Command-line entry point.

Subcommands: cell-electric, cell-magnetic [--direct --q RE,IM], sweep,
validate.  One JSON configuration file describes the run; artifacts land
in the output directory with a config echo and content hashes, and rerun
byte-identically for a fixed config and seed.

Exit codes: 0 success, 1 validation checks failed, 2 config error,
3 solver non-convergence, 4 resolution too coarse.  Failures print a
machine-readable error JSON on stdout.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import geometry as geo
from .contracts import (
    canonical_json,
    complex_pair,
    sha256_hex,
    tensor_to_json,
    write_json,
    write_spectrum_csv,
    write_sweep_csv,
)
from .effective_medium import sweep as run_sweep
from .electric_cell import solve_electric_cell
from .errors import ConfigError, MmcellError, ResolutionError, SolverError
from .geometry import write_field_file
from .grids import PeriodicGrid
from .magnetic_cell import (
    build_constrained_space,
    circulation,
    mu_eff_spectral,
    solve_magnetic_direct,
    solve_magnetic_spectrum,
)
from .solvers import EigenSolveOptions, LinearSolveOptions
from .validation import run_validation_suite

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_RESOLUTION = 4

_COMPLEX = {
    "oneOf": [
        {"type": "number"},
        {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    ]
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["version", "geometry", "grid"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": 1},
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "resonator": {
                    "oneOf": [
                        {"type": "null"},
                        {
                            "type": "object",
                            "required": ["type"],
                            "properties": {"type": {"enum": ["ball", "box", "voxel_mask"]}},
                        },
                    ]
                },
                "wire_radius_alpha": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.5},
                "wire_axes": {
                    "type": "array",
                    "maxItems": 3,
                    "items": {
                        "type": "object",
                        "required": ["direction", "position"],
                        "additionalProperties": False,
                        "properties": {
                            "direction": {"enum": [1, 2, 3]},
                            "position": {
                                "type": "array",
                                "items": {"type": "number"},
                                "minItems": 2,
                                "maxItems": 2,
                            },
                        },
                    },
                },
            },
        },
        "materials": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eps_b": _COMPLEX,
                "eps_w": _COMPLEX,
                "eps0_mu0": {
                    "type": "array",
                    "items": {"type": "number", "exclusiveMinimum": 0},
                    "minItems": 2,
                    "maxItems": 2,
                },
            },
        },
        "grid": {
            "type": "object",
            "required": ["n"],
            "additionalProperties": False,
            "properties": {"n": {"type": "integer", "minimum": 8, "maximum": 256}},
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tolerance": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "max_iterations": {"type": "integer", "minimum": 1},
                "preconditioner": {"enum": ["none", "diagonal", "multigrid-V-cycle"]},
            },
        },
        "eigensolver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "num_eigenpairs": {"type": "integer", "minimum": 1},
                "shift": {"type": "number"},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "max_restarts": {"type": "integer", "minimum": 1},
            },
        },
        "sweep": {
            "type": "object",
            "required": ["omega_min", "omega_max", "count"],
            "additionalProperties": False,
            "properties": {
                "omega_min": {"type": "number", "exclusiveMinimum": 0},
                "omega_max": {"type": "number", "exclusiveMinimum": 0},
                "count": {"type": "integer", "minimum": 1},
                "spacing": {"enum": ["linear", "log"]},
            },
        },
        "output_dir": {"type": "string"},
        "seed": {"type": "integer"},
    },
}


def _as_complex(v) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    return complex(v[0], v[1])


def load_config(path: str) -> dict:
    try:
        with open(path) as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    import jsonschema

    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: e.json_path)
    if errors:
        e = errors[0]
        raise ConfigError(e.message, field=e.json_path)
    return raw


def build_objects(cfg: dict):
    gcfg = cfg.get("geometry", {})
    res_cfg = gcfg.get("resonator")
    try:
        if res_cfg is None:
            resonator = None
        elif res_cfg["type"] == "ball":
            resonator = geo.Ball(tuple(res_cfg["center"]), float(res_cfg["radius"]))
        elif res_cfg["type"] == "box":
            resonator = geo.Box(tuple(res_cfg["center"]), tuple(res_cfg["half_widths"]))
        else:
            resonator = geo.VoxelMaskRef(res_cfg["path"])
        geom = geo.CellGeometry(
            resonator=resonator,
            wire_radius_alpha=float(gcfg.get("wire_radius_alpha", 0.0)),
            wire_axes=tuple(
                geo.WireSpec(int(w["direction"]), tuple(w["position"]))
                for w in gcfg.get("wire_axes", [])
            ),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"geometry block is incomplete: {exc}", field="$.geometry")
    except geo.GeometryError as exc:
        raise ConfigError(str(exc), field="$.geometry")

    mcfg = cfg.get("materials", {})
    try:
        materials = geo.MaterialParams(
            eps_b=_as_complex(mcfg.get("eps_b", 1.0)),
            eps_w=_as_complex(mcfg.get("eps_w", 1.0)),
            eps0_mu0=tuple(mcfg.get("eps0_mu0", (1.0, 1.0))),
        )
    except geo.GeometryError as exc:
        raise ConfigError(str(exc), field="$.materials")

    grid = PeriodicGrid(int(cfg["grid"]["n"]))

    scfg = cfg.get("solver", {})
    solve_opts = LinearSolveOptions(
        tolerance=float(scfg.get("tolerance", 1e-10)),
        max_iterations=int(scfg.get("max_iterations", 20000)),
        preconditioner=scfg.get("preconditioner", "none"),
    )
    ecfg = cfg.get("eigensolver", {})
    eig_opts = EigenSolveOptions(
        num_eigenpairs=int(ecfg.get("num_eigenpairs", 40)),
        shift=float(ecfg.get("shift", 0.0)),
        tolerance=float(ecfg.get("tolerance", 1e-9)),
        max_restarts=int(ecfg.get("max_restarts", 5000)),
        seed=int(cfg.get("seed", 20260810)),
    )
    return geom, materials, grid, solve_opts, eig_opts


def _git_hash() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5
        )
        return out.stdout.strip() if out.returncode == 0 else "unknown"
    except Exception:
        return "unknown"


def _metadata(cfg: dict, args) -> dict:
    return {
        "tool": "mmcell",
        "tool_version": __version__,
        "git": _git_hash(),
        "seed": int(cfg.get("seed", 20260810)),
        "threads": args.threads,
        "n": cfg["grid"]["n"],
    }


def _omega_grid(cfg: dict) -> np.ndarray:
    try:
        s = cfg["sweep"]
    except KeyError:
        raise ConfigError("sweep block required for this command", field="$.sweep")
    lo, hi, count = s["omega_min"], s["omega_max"], s["count"]
    if hi < lo:
        raise ConfigError("omega_max must be >= omega_min", field="$.sweep.omega_max")
    if s.get("spacing", "linear") == "log":
        return np.geomspace(lo, hi, count)
    return np.linspace(lo, hi, count)


def cmd_cell_electric(cfg, args, out: Path) -> int:
    geom, _, grid, solve_opts, _ = build_objects(cfg)
    sol = solve_electric_cell(geom, grid, solve_opts, threads=args.threads)
    payload = {
        "a_eff": tensor_to_json(sol.a_eff),
        "diagnostics": {
            "cg_iterations": sol.solver_stats["iterations"],
            "cg_residuals": sol.solver_stats["residuals"],
            "dirichlet_energies": [float(e) for e in sol.dirichlet_energies()],
        },
    }
    write_json(out / "a_eff.json", payload, cfg, _metadata(cfg, args))
    if args.dump_fields:
        for j in range(3):
            write_field_file(out / f"theta_{j + 1}.mhvx", grid.n, sol.theta[j].astype(complex))
            write_field_file(out / f"e_{j + 1}.mhvx", grid.n, sol.e_fields[j].astype(complex))
    print(f"a_eff.json written to {out}")
    return EXIT_OK


def cmd_cell_magnetic(cfg, args, out: Path) -> int:
    geom, materials, grid, solve_opts, eig_opts = build_objects(cfg)
    mask, _ = geo.rasterize_components(geom, grid.n)
    space = build_constrained_space(grid, mask)
    spectrum = solve_magnetic_spectrum(space, eig_opts)
    config_sha = sha256_hex(canonical_json(cfg))
    write_spectrum_csv(out / "spectrum.csv", spectrum, config_sha)

    if args.q is not None:
        q = complex(*args.q)
        mu_s = mu_eff_spectral(spectrum, q, pole_guard=None)
        payload = {
            "q": complex_pair(q),
            "mu_spectral": tensor_to_json(mu_s.tensor),
            "truncation_residual": mu_s.truncation_residual,
            "num_modes": spectrum.num_modes,
        }
        if args.direct:
            direct = solve_magnetic_direct(
                None, grid, q, solve_opts, space=space, eps_b=materials.eps_b
            )
            rel = float(
                np.abs(direct.mu - mu_s.tensor).max() / max(np.abs(direct.mu).max(), 1e-300)
            )
            circ_err = max(
                float(np.abs(circulation(direct.h_fields[j], grid, mask) - np.eye(3)[j]).max())
                for j in range(3)
            )
            payload["mu_direct"] = tensor_to_json(direct.mu)
            payload["route_rel_difference"] = rel
            payload["circulation_error"] = circ_err
        write_json(out / "mu-at-q.json", payload, cfg, _metadata(cfg, args))
    print(f"spectrum.csv written to {out} ({int(spectrum.bright.sum())} bright modes)")
    return EXIT_OK


def cmd_sweep(cfg, args, out: Path) -> int:
    geom, materials, grid, solve_opts, eig_opts = build_objects(cfg)
    omegas = _omega_grid(cfg)
    result = run_sweep(geom, materials, grid, omegas, solve_opts, eig_opts)
    config_sha = sha256_hex(canonical_json(cfg))
    write_sweep_csv(out / "sweep.csv", result, config_sha)
    flags = result.flags()
    payload = {
        "eps_eff": tensor_to_json(result.eps_eff),
        "a_eff": tensor_to_json(result.a_eff),
        "wire_term": complex_pair(np.pi * result.alpha**2 * result.eps_w),
        "samples": len(result.samples),
        "flag_counts": {f: flags.count(f) for f in sorted(set(flags))},
        "sweep_csv": "sweep.csv",
    }
    write_json(out / "result.json", payload, cfg, _metadata(cfg, args))
    print(f"sweep.csv + result.json written to {out}; flags: {payload['flag_counts']}")
    return EXIT_OK


def cmd_validate(cfg, args, out: Path) -> int:
    geom, _, grid, solve_opts, _ = build_objects(cfg)
    report = run_validation_suite(geom, grid, solve_opts, seed=int(cfg.get("seed", 20260810)))
    write_json(out / "validation.json", report, cfg, _metadata(cfg, args))
    for c in report["checks"]:
        status = "pass" if c["passed"] else "FAIL"
        val = "" if c["value"] is None else f" [{c['value']:.3e}]"
        print(f"{status:4s}  {c['name']}{val}")
    if report["resolution_error"]:
        return EXIT_RESOLUTION
    return EXIT_OK if report["passed"] else EXIT_CHECKS_FAILED


def _parse_q(text: str):
    try:
        re_s, im_s = text.split(",")
        return (float(re_s), float(im_s))
    except ValueError:
        raise argparse.ArgumentTypeError("expected --q RE,IM (e.g. --q 30,2)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mmcell",
        description="Effective permittivity/permeability of a resonator-and-wire "
        "metamaterial cell (natural units: eps0 = mu0 = 1 unless configured).",
    )
    p.add_argument("--version", action="version", version=f"mmcell {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="path to the JSON run configuration")
        sp.add_argument("--out", default=None, help="output directory (default: config output_dir)")
        sp.add_argument("--threads", type=int, default=1, help="worker cap for independent solves")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")

    sp = sub.add_parser("cell-electric", help="solve the electric cell problem, write a_eff.json")
    common(sp)
    sp.add_argument("--dump-fields", action="store_true", help="also dump potentials/fields (MHVX)")
    sp.set_defaults(func=cmd_cell_electric)

    sp = sub.add_parser("cell-magnetic", help="eigen-ladder and optional mu at one q")
    common(sp)
    sp.add_argument("--q", type=_parse_q, default=None, metavar="RE,IM",
                    help="evaluate mu at q = eps_b k^2 = RE + IM j")
    sp.add_argument("--direct", action="store_true",
                    help="also solve the coupled cell problem at q and cross-check")
    sp.set_defaults(func=cmd_cell_magnetic)

    sp = sub.add_parser("sweep", help="frequency sweep, write sweep.csv + result.json")
    common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("validate", help="run the full invariant suite")
    common(sp)
    sp.set_defaults(func=cmd_validate)
    return p


def _error_json(kind: str, code: int, message: str, field: str | None = None) -> str:
    err = {"error": {"kind": kind, "code": code, "message": message}}
    if field:
        err["error"]["field"] = field
    return json.dumps(err)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        out = Path(args.out or cfg.get("output_dir", "."))
        out.mkdir(parents=True, exist_ok=True)
        return args.func(cfg, args, out)
    except ConfigError as exc:
        print(_error_json("config", EXIT_CONFIG, str(exc), getattr(exc, "field", None)))
        return EXIT_CONFIG
    except ResolutionError as exc:
        print(_error_json("resolution", EXIT_RESOLUTION, str(exc)))
        return EXIT_RESOLUTION
    except SolverError as exc:
        print(_error_json("solver", EXIT_SOLVER, str(exc)))
        return EXIT_SOLVER
    except MmcellError as exc:
        print(_error_json("error", EXIT_CONFIG, str(exc)))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
