"""Deterministic writers for tables, monitor logs, VTK fields and run manifests."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .stress import COMPONENT_NAMES, COMPONENTS

CONVERGENCE_COLUMNS = (
    "{p}", "displacement_error", "CO({p})", "CPU_s", "stress_error", "CO({p})_stress", "CPU_s_stress",
)
SCENARIO_COLUMNS = ("h", "w_norm", "k11", "k22", "k33", "k12", "k13", "k23")
MONITOR_COLUMNS = ("n", "t", "l2_norm", "a_norm", "energy", "cg_iterations", "residual")


def fmt_sci(x) -> str:
    """Five significant digits in scientific notation; empty for None."""
    if x is None:
        return ""
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{float(x):.4e}"


def fmt_order(x) -> str:
    return "" if x is None else f"{x:.4f}"


def fmt_resolution(x: float, base: int = 3) -> str:
    """'3^-3' style label when ``x`` is an integer power of ``base``."""
    if x > 0:
        p = math.log(x) / math.log(base)
        if abs(p - round(p)) < 1e-9:
            return f"{base}^{int(round(p))}"
    return fmt_sci(x)


def _write_text(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
    return path


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def convergence_table_text(series) -> str:
    if len(series.resolutions) < 2:
        raise ValueError("a convergence table needs at least two resolutions")
    p = series.parameter
    header = [c.format(p=p) for c in CONVERGENCE_COLUMNS]
    co_w = series.orders("displacement")
    co_s = series.orders("stress")
    cpu = list(series.cpu_seconds) or [None] * len(series.resolutions)
    cpu_s = list(series.stress_cpu_seconds) or [None] * len(series.resolutions)
    rows = []
    for i, r in enumerate(series.resolutions):
        rows.append([
            fmt_resolution(r),
            fmt_sci(series.displacement_errors[i]),
            fmt_order(co_w[i]),
            "" if cpu[i] is None else f"{cpu[i]:.4f}",
            fmt_sci(series.stress_errors[i]),
            fmt_order(co_s[i]),
            "" if cpu_s[i] is None else f"{cpu_s[i]:.4f}",
        ])
    return _csv_text(header, rows)


def emit_convergence_table(series, path):
    return _write_text(path, convergence_table_text(series))


def stress_matrix(component_maxima) -> np.ndarray:
    """Symmetric 3x3 matrix from six values in COMPONENTS order."""
    m = np.zeros((3, 3))
    for c, (i, j) in enumerate(COMPONENTS):
        m[i, j] = m[j, i] = component_maxima[c]
    return m


def scenario_table_text(h_label, w_norm, component_maxima) -> str:
    row = [h_label, fmt_sci(w_norm)] + [fmt_sci(v) for v in component_maxima]
    return _csv_text(SCENARIO_COLUMNS, [row])


def stress_matrix_text(component_maxima) -> str:
    m = stress_matrix(component_maxima)
    return _csv_text(("row", "1", "2", "3"), [[i + 1] + [fmt_sci(v) for v in m[i]] for i in range(3)])


def emit_scenario_table(out_dir, h_label, w_norm, component_maxima):
    """Write scenario_table.csv and stress_matrix.csv; returns both paths."""
    out_dir = Path(out_dir)
    a = _write_text(out_dir / "scenario_table.csv", scenario_table_text(h_label, w_norm, component_maxima))
    b = _write_text(out_dir / "stress_matrix.csv", stress_matrix_text(component_maxima))
    return a, b


def monitor_csv_text(monitors) -> str:
    rows = [
        [m.n, repr(float(m.t)), repr(float(m.l2_norm)), repr(float(m.a_norm)), repr(float(m.energy)),
         m.cg_iterations, repr(float(m.residual))]
        for m in monitors
    ]
    return _csv_text(MONITOR_COLUMNS, rows)


def emit_monitor_csv(monitors, path):
    return _write_text(path, monitor_csv_text(monitors))


def _f17(x) -> str:
    return f"{float(x):.17g}"


def vtk_text(mesh, displacement=None, stress_points=None, label="step") -> str:
    """Legacy VTK 3.0 ASCII unstructured grid of tetrahedra.

    ``displacement`` is (num_vertices, 3); ``stress_points`` is
    (num_vertices, 6) in COMPONENTS order.  Missing fields are written as zeros.
    """
    nv, nt = mesh.num_vertices, mesh.num_tets
    disp = np.zeros((nv, 3)) if displacement is None else np.asarray(displacement)
    stress = np.zeros((nv, 6)) if stress_points is None else np.asarray(stress_points)
    lines = ["# vtk DataFile Version 3.0", f"lwelasto {label}", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {nv} double")
    lines.extend(" ".join(_f17(c) for c in p) for p in mesh.vertices)
    lines.append(f"CELLS {nt} {5 * nt}")
    lines.extend("4 " + " ".join(str(int(i)) for i in t) for t in mesh.tets)
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["10"] * nt)
    lines.append(f"POINT_DATA {nv}")
    lines.append("VECTORS displacement double")
    lines.extend(" ".join(_f17(c) for c in p) for p in disp)
    for c, name in enumerate(COMPONENT_NAMES):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_f17(v) for v in stress[:, c])
    return "\n".join(lines) + "\n"


def emit_vtk(mesh, displacement, stress_points, path, label="step"):
    return _write_text(path, vtk_text(mesh, displacement, stress_points, label))


def read_vtk_points(path) -> np.ndarray:
    """Minimal reader returning the POINTS block of a legacy ASCII file."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    for i, line in enumerate(lines):
        if line.startswith("POINTS"):
            n = int(line.split()[1])
            return np.array([[float(v) for v in row.split()] for row in lines[i + 1:i + 1 + n]])
    raise ValueError(f"no POINTS section in {path}")


def vertex_values(space, coeffs_or_cols) -> np.ndarray:
    """Restrict nodal values to mesh vertices (lattice points at multiples of d)."""
    d = space.degree
    n = np.array(space.mesh.domain.n)
    shape = d * n + 1
    kk, jj, ii = np.meshgrid(*(np.arange(m + 1) for m in n[::-1]), indexing="ij")
    ids = d * ii.ravel() + shape[0] * (d * jj.ravel() + shape[1] * d * kk.ravel())
    vals = np.asarray(coeffs_or_cols)
    if vals.ndim == 1 and vals.shape[0] == 3 * space.num_dofs:
        vals = vals.reshape(3, space.num_dofs).T
    return vals[ids]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def content_hash(config: dict) -> str:
    canon = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def manifest_text(manifest: dict) -> str:
    return json.dumps(_jsonable(manifest), sort_keys=True, indent=2) + "\n"


def emit_manifest(manifest: dict, path):
    return _write_text(path, manifest_text(manifest))
