"""Writers for VTK fields and CSV run histories.

Floats are written with 17 significant digits so identical runs produce
identical bytes.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .mesh import TriMesh
from .solver import NEWTON_LOG_HEADER, ContinuationLog

HISTORY_HEADER = ("problem_index", "alpha", "newton_iters", "objective", "dissipation",
                  "volume_defect", "bc_defect_x", "bc_defect_y", "min_Jtau")
VTK_TRIANGLE = 5


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _vtk_lines(points, triangles, point_data, cell_data, title):
    nv, nt = len(points), len(triangles)
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {nv} double"]
    out += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in points]
    out.append(f"CELLS {nt} {4 * nt}")
    out += [f"3 {a} {b} {c}" for a, b, c in triangles]
    out.append(f"CELL_TYPES {nt}")
    out += [str(VTK_TRIANGLE)] * nt
    for header, n, data in (("POINT_DATA", nv, point_data), ("CELL_DATA", nt, cell_data)):
        if not data:
            continue
        out.append(f"{header} {n}")
        for name, arr in data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.shape == (n,):
                out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                out += [_fmt(a) for a in arr]
            elif arr.shape == (n, 2):
                out.append(f"VECTORS {name} double")
                out += [f"{_fmt(a)} {_fmt(b)} 0" for a, b in arr]
            else:
                raise ValueError(f"field {name!r} has shape {arr.shape}, expected ({n},) or ({n}, 2)")
    return out


def write_vtk(mesh: TriMesh, path, point_data: dict | None = None, cell_data: dict | None = None,
              displacement=None) -> list[Path]:
    """Legacy ASCII VTK of the reference mesh with the given fields.

    With ``displacement`` (nv, 2) a second file ``<stem>_deformed.vtk`` holds
    the mesh with displaced vertices and the same fields.  Returns the paths
    written.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    point_data = point_data or {}
    cell_data = cell_data or {}
    lines = _vtk_lines(mesh.vertices, mesh.triangles, point_data, cell_data, "reference configuration")
    path.write_text("\n".join(lines) + "\n")
    written = [path]
    if displacement is not None:
        moved = mesh.vertices + np.asarray(displacement, dtype=float)
        dpath = path.with_name(path.stem + "_deformed.vtk")
        lines = _vtk_lines(moved, mesh.triangles, point_data, cell_data, "deformed configuration")
        dpath.write_text("\n".join(lines) + "\n")
        written.append(dpath)
    return written


def read_vtk_cell_scalars(path, name: str) -> np.ndarray:
    """Cell scalar ``name`` from a file written by :func:`write_vtk`."""
    lines = Path(path).read_text().splitlines()
    start = next(i for i, s in enumerate(lines) if s.startswith("CELL_DATA"))
    n = int(lines[start].split()[1])
    for i in range(start, len(lines)):
        if lines[i].startswith(f"SCALARS {name} "):
            return np.array([float(s) for s in lines[i + 2:i + 2 + n]])
    raise KeyError(name)


def read_vtk_points(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    start = next(i for i, s in enumerate(lines) if s.startswith("POINTS"))
    n = int(lines[start].split()[1])
    return np.array([[float(v) for v in s.split()[:2]] for s in lines[start + 1:start + 1 + n]])


def write_history(log: ContinuationLog, path) -> Path:
    """One CSV row per accepted problem of the continuation."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(HISTORY_HEADER)
        for e in log.entries:
            wr.writerow([e.problem_index, _fmt(e.alpha), e.report.iterations, _fmt(e.objective),
                         _fmt(e.dissipation), _fmt(e.volume_defect), _fmt(e.barycenter_defect[0]),
                         _fmt(e.barycenter_defect[1]), _fmt(e.min_jacobian)])
    return path


def write_newton_log(log: ContinuationLog, path) -> Path:
    """One CSV row per Newton residual evaluation (free-dof Euclidean norms)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(NEWTON_LOG_HEADER)
        for idx, alpha, it, ares, rres, jmin in log.newton_log:
            wr.writerow([idx, _fmt(alpha), it, _fmt(ares), _fmt(rres), _fmt(jmin)])
    return path
