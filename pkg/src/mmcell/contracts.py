"""Output file contracts: CSV columns, JSON envelopes, content hashing.

Every artifact the CLI writes carries the configuration echo (JSON) or its
hash (CSV comment lines) plus a content hash, and is byte-reproducible for
a fixed configuration and seed.  Floats are rendered with %.16e so files
round-trip exactly on one platform.  The machine-readable copy of these
contracts lives in ``schema/output_contract.json`` at the repository root;
plot tooling cross-checks against that file, and a drift test keeps it in
sync with this module.
"""

from __future__ import annotations

import hashlib
import io
import json

import numpy as np

CONTRACT_VERSION = 1

_TENSOR_NAMES = [f"{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3)]

SWEEP_COLUMNS = (
    ["omega", "k", "q_re", "q_im"]
    + [f"mu_{ij}_{p}" for ij in _TENSOR_NAMES for p in ("re", "im")]
    + [f"eps_{ij}_{p}" for ij in _TENSOR_NAMES for p in ("re", "im")]
    + [f"eig_re_mu_{i}" for i in (1, 2, 3)]
    + [f"eig_re_eps_{i}" for i in (1, 2, 3)]
    + ["flag"]
)

SPECTRUM_COLUMNS = ["n", "lambda", "m1", "m2", "m3", "bright"]

VALIDATION_LADDER_KEYS = ["eta", "l2_error", "dirichlet_energy", "reference_energy"]


def contract_dict() -> dict:
    """The machine-readable form of the output contracts."""
    return {
        "version": CONTRACT_VERSION,
        "sweep_csv": {"columns": SWEEP_COLUMNS},
        "spectrum_csv": {"columns": SPECTRUM_COLUMNS},
        "validation_report": {
            "keys": ["passed", "checks", "theta_eta_ladder"],
            "theta_eta_ladder_keys": VALIDATION_LADDER_KEYS,
        },
        "voxel_file": {
            "magic": "MHVX",
            "header_bytes": 16,
            "layout": "magic[4] version:u16le n:u32le payload_kind:u8 pad[5]",
            "payload_kinds": {"labels_u8": 0, "scalar_c128": 1, "vector_c128": 2},
            "order": "x-fastest",
        },
    }


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_hex(data: str | bytes) -> str:
    if isinstance(data, str):
        data = data.encode()
    return hashlib.sha256(data).hexdigest()


def fmt(x: float) -> str:
    return f"{float(x):.16e}"


def complex_pair(z: complex) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def tensor_to_json(t: np.ndarray) -> list[list[list[float]]]:
    """3x3 complex tensor as nested [re, im] pairs, row major."""
    t = np.asarray(t, dtype=complex)
    return [[complex_pair(t[i, j]) for j in range(3)] for i in range(3)]


def tensor_from_json(rows) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows])


def json_envelope(payload: dict, config: dict, meta: dict | None = None) -> dict:
    """Wrap a payload with the config echo and content hash."""
    body = {
        "contract_version": CONTRACT_VERSION,
        "config_echo": config,
        "config_sha256": sha256_hex(canonical_json(config)),
        "metadata": meta or {},
        **payload,
    }
    body["content_sha256"] = sha256_hex(canonical_json(payload))
    return body


def write_json(path, payload: dict, config: dict, meta: dict | None = None) -> dict:
    body = json_envelope(payload, config, meta)
    with open(path, "w") as f:
        json.dump(body, f, indent=2, sort_keys=True)
        f.write("\n")
    return body


def _write_csv(path, kind: str, columns, rows, config_sha: str) -> None:
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(row) + "\n")
    data = buf.getvalue()
    with open(path, "w") as f:
        f.write(f"# mmcell {kind} v{CONTRACT_VERSION}\n")
        f.write(f"# config_sha256: {config_sha}\n")
        f.write(f"# content_sha256: {sha256_hex(data)}\n")
        f.write(data)


def write_sweep_csv(path, result, config_sha: str) -> None:
    """Rows per the sweep_csv contract; eps columns repeat the static tensor."""
    eps_flat = [fmt(v) for z in np.asarray(result.eps_eff).ravel() for v in complex_pair(z)]
    rows = []
    for s in result.samples:
        row = [fmt(s.omega), fmt(s.k), fmt(s.q.real), fmt(s.q.imag)]
        row += [fmt(v) for z in np.asarray(s.mu).ravel() for v in complex_pair(z)]
        row += eps_flat
        row += [fmt(v) for v in s.eig_re_mu]
        row += [fmt(v) for v in s.eig_re_eps]
        row.append(s.flag)
        assert len(row) == len(SWEEP_COLUMNS)
        rows.append(row)
    _write_csv(path, "sweep", SWEEP_COLUMNS, rows, config_sha)


def write_spectrum_csv(path, spectrum, config_sha: str) -> None:
    rows = [
        [str(i), fmt(lam), fmt(m1), fmt(m2), fmt(m3), "1" if bright else "0"]
        for (i, lam, m1, m2, m3, bright) in spectrum.rows()
    ]
    _write_csv(path, "spectrum", SPECTRUM_COLUMNS, rows, config_sha)


def read_csv_with_comments(path) -> tuple[dict, list[str], list[list[str]]]:
    """Parse an mmcell CSV back into (comment metadata, columns, rows)."""
    meta: dict = {}
    columns: list[str] = []
    rows: list[list[str]] = []
    with open(path) as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    key, _, val = body.partition(":")
                    meta[key.strip()] = val.strip()
                else:
                    meta.setdefault("banner", body)
                continue
            if not columns:
                columns = line.split(",")
            else:
                rows.append(line.split(","))
    return meta, columns, rows
