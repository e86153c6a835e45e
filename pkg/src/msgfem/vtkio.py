"""Output writers: legacy ASCII VTK, CSV tables and the JSON summary.

All writers format floats with repr-stable "%.12g" and iterate in index
order, so rerunning a case byte-reproduces every artifact.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

VTK_CELL_TYPE = {3: 12, 2: 9}  # hex8 / quad4


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_vtk(path, mesh, point_data: dict | None = None, cell_data: dict | None = None):
    """Legacy ASCII VTK 3.0 UNSTRUCTURED_GRID with optional fields.

    Point arrays with one column per space dimension are written as
    VECTORS, everything else as per-component SCALARS.
    """
    path = Path(path)
    lines = ["# vtk DataFile Version 3.0", "msgfem fields", "ASCII",
             "DATASET UNSTRUCTURED_GRID"]
    n_pts = mesh.n_nodes
    lines.append(f"POINTS {n_pts} double")
    coords = mesh.coords
    for i in range(n_pts):
        xyz = list(coords[i]) + [0.0] * (3 - mesh.dim)
        lines.append(" ".join(_fmt(c) for c in xyz))

    n_el = mesh.n_elements
    n_en = mesh.conn.shape[1]
    lines.append(f"CELLS {n_el} {n_el * (n_en + 1)}")
    for e in range(n_el):
        lines.append(f"{n_en} " + " ".join(str(int(n)) for n in mesh.conn[e]))
    lines.append(f"CELL_TYPES {n_el}")
    cell_type = VTK_CELL_TYPE[mesh.dim]
    lines.extend([str(cell_type)] * n_el)

    def emit_fields(data: dict, count: int, kind: str):
        lines.append(f"{kind} {count}")
        for name in sorted(data):
            arr = np.asarray(data[name], dtype=float)
            if arr.ndim == 2 and arr.shape[1] == mesh.dim and kind == "POINT_DATA":
                lines.append(f"VECTORS {name} double")
                for row in arr:
                    xyz = list(row) + [0.0] * (3 - mesh.dim)
                    lines.append(" ".join(_fmt(c) for c in xyz))
            elif arr.ndim == 2:
                for c in range(arr.shape[1]):
                    lines.append(f"SCALARS {name}_{c} double 1")
                    lines.append("LOOKUP_TABLE default")
                    lines.extend(_fmt(v) for v in arr[:, c])
            else:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(_fmt(v) for v in arr)

    if point_data:
        emit_fields(point_data, n_pts, "POINT_DATA")
    if cell_data:
        emit_fields(cell_data, n_el, "CELL_DATA")
    path.write_text("\n".join(lines) + "\n")


def write_spectra_csv(path, bases, formulation: str = "aharmonic"):
    """Per-subdomain eigenvalue table: one row per (subdomain, mode)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["subdomain", "k", "lambda", "one_over_lambda", "aharmonic_residual",
             "formulation"]
        )
        for basis in bases:
            for k, lam in enumerate(basis.eigenvalues):
                inv = np.inf if lam <= 0 else 1.0 / lam
                res = basis.aharmonic_residuals[k]
                w.writerow(
                    [basis.subdomain, k, _fmt(lam), _fmt(inv),
                     "" if np.isnan(res) else _fmt(res), formulation]
                )


def write_errors_csv(path, rows: list, header: list):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])


def write_decomposition_csv(path, decomp):
    """Owner map plus per-subdomain set sizes and the coloring constant."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["element", "owner"])
        for e, o in enumerate(decomp.owner):
            w.writerow([e, int(o)])
        w.writerow([])
        w.writerow(["subdomain", "owned", "overlap", "oversampled", "n_dofs",
                    "n_b1", "n_b2", "n_b3"])
        for sub in decomp.subdomains:
            w.writerow(
                [sub.index, sub.owned_elements.size, sub.overlap_elements.size,
                 sub.elements.size, sub.n_dofs, sub.b1.size, sub.b2.size,
                 sub.b3.size]
            )
        w.writerow([])
        w.writerow(["k0", decomp.k0])


def write_iterations_csv(path, residuals: list, cond: float):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "relative_residual", "condition_estimate"])
        for i, r in enumerate(residuals):
            w.writerow([i, _fmt(r), _fmt(cond) if i == len(residuals) - 1 else ""])


def write_summary_json(path, summary: dict):
    def default(obj):
        if isinstance(obj, (np.integer,)):
            return int(obj)
        if isinstance(obj, (np.floating,)):
            return float(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        raise TypeError(f"not JSON serializable: {type(obj)}")

    Path(path).write_text(
        json.dumps(summary, indent=2, sort_keys=True, default=default) + "\n"
    )
