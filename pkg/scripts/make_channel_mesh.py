"""Generate the flow-tunnel meshes shipped with the package.

Channel [-10, 10] x [-3, 3] with a circular obstacle of radius 0.5 at the
origin, approximated by a regular polygon.  The coarse mesh is built from a
fixed, graded point cloud triangulated by a constrained Delaunay method
without Steiner points, so the triangle count follows from Euler's formula:
``n_tri = n_design + n_outer + 2 * n_interior``.  Finer meshes are obtained
by uniform red refinement with new design vertices projected onto the circle.

Usage::

    python scripts/make_channel_mesh.py src/mmshape/data
"""
import sys
from pathlib import Path

import numpy as np
import triangle

from mmshape.mesh import TriMesh, refine_uniform, write_gmsh

X0, X1, H = -10.0, 10.0, 3.0
RADIUS = 0.5
N_DESIGN = 141
N_TRIANGLES = 1601


def _outer_boundary():
    # counterclockwise, corner (-10, -3) first; spacing 1 on every side
    pts, tags = [], []
    for x in np.arange(X0, X1, 1.0):
        pts.append((x, -H)); tags.append("Gamma_ns")
    for y in np.arange(-H, H, 1.0):
        pts.append((X1, y)); tags.append("Gamma_out")
    for x in np.arange(X1, X0, -1.0):
        pts.append((x, H)); tags.append("Gamma_ns")
    for y in np.arange(H, -H, -1.0):
        pts.append((X0, y)); tags.append("Gamma_in")
    return np.array(pts), tags


def _design_polygon():
    # a vertex sits on the upstream tip (-0.5, 0); mirror symmetric in x2
    theta = np.pi + 2.0 * np.pi * np.arange(N_DESIGN) / N_DESIGN
    return RADIUS * np.column_stack([np.cos(theta), np.sin(theta)])


def _inside(p, margin):
    return ((p[:, 0] > X0 + margin) & (p[:, 0] < X1 - margin)
            & (np.abs(p[:, 1]) < H - margin))


def _interior_points(growth):
    h0 = 2.0 * np.pi * RADIUS / N_DESIGN
    pts = []
    r, h, k = RADIUS, h0, 0
    while h < 1.0:
        h = min(growth * h, 1.0)
        r = r + 0.9 * h
        n = max(int(round(2.0 * np.pi * r / h)), 6)
        theta = 2.0 * np.pi * (np.arange(n) + 0.5 * (k % 2)) / n
        ring = r * np.column_stack([np.cos(theta), np.sin(theta)])
        pts.append(ring[_inside(ring, 0.45 * h)])
        k += 1
    rmax = r + 0.6
    gx, gy = np.meshgrid(np.arange(X0 + 1.0, X1, 1.0), np.arange(-H + 1.0, H, 1.0))
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    grid = grid + 0.25 * np.column_stack([np.where(gy.ravel() % 2 == 0, 0.5, -0.5), 0 * gy.ravel()])
    grid = grid[np.hypot(grid[:, 0], grid[:, 1]) > rmax]
    pts.append(grid)
    return np.vstack(pts)


def _triangulate(points, n_outer, n_design):
    seg_outer = np.column_stack([np.arange(n_outer), (np.arange(n_outer) + 1) % n_outer])
    seg_design = n_outer + np.column_stack([np.arange(n_design), (np.arange(n_design) + 1) % n_design])
    out = triangle.triangulate(
        {"vertices": points, "segments": np.vstack([seg_outer, seg_design]),
         "holes": np.array([[0.0, 0.0]])}, "pQ")
    assert len(out["vertices"]) == len(points), "Steiner points were inserted"
    return out["triangles"]


def _smooth(points, tris, n_outer, n_design, sweeps=8):
    n_fixed = n_outer + n_design
    pts = points.copy()
    for _ in range(sweeps):
        acc = np.zeros_like(pts)
        cnt = np.zeros(len(pts))
        for a, b in ((0, 1), (1, 2), (2, 0)):
            np.add.at(acc, tris[:, a], pts[tris[:, b]])
            np.add.at(acc, tris[:, b], pts[tris[:, a]])
            np.add.at(cnt, tris[:, a], 1.0)
            np.add.at(cnt, tris[:, b], 1.0)
        pts[n_fixed:] = 0.5 * pts[n_fixed:] + 0.5 * acc[n_fixed:] / cnt[n_fixed:, None]
        tris = _triangulate(pts, n_outer, n_design)
    return pts, tris


def coarse_mesh():
    outer, outer_tags = _outer_boundary()
    design = _design_polygon()
    n_outer, n_design = len(outer), len(design)
    n_interior = (N_TRIANGLES - n_design - n_outer) // 2
    # smallest growth factor yielding enough points; surplus far-field points dropped
    for growth in np.arange(1.10, 1.60, 0.002):
        interior = _interior_points(growth)
        if len(interior) <= n_interior:
            break
        candidate = interior
    interior = candidate
    dist = np.hypot(interior[:, 0], interior[:, 1])
    drop = np.argsort(-dist, kind="stable")[: len(interior) - n_interior]
    interior = np.delete(interior, np.sort(drop), axis=0)
    points = np.vstack([outer, design, interior])
    tris = _triangulate(points, n_outer, n_design)
    points, tris = _smooth(points, tris, n_outer, n_design)

    edges, tags = [], []
    for i, tag in enumerate(outer_tags):
        edges.append((i, (i + 1) % n_outer)); tags.append(tag)
    for i in range(n_design):
        edges.append((n_outer + i, n_outer + (i + 1) % n_design)); tags.append("Gamma_d")
    return TriMesh.from_arrays(points, tris, np.array(edges), tags)


def main(outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    mesh = coarse_mesh()
    assert mesh.n_triangles == N_TRIANGLES, mesh.n_triangles
    write_gmsh(mesh, outdir / "channel_coarse.msh")
    fine = refine_uniform(mesh, circle_radius=RADIUS)
    write_gmsh(fine, outdir / "channel_medium.msh")
    print(f"coarse: {mesh.n_triangles} triangles, {len(mesh.design_loop)} design edges")
    print(f"medium: {fine.n_triangles} triangles, {len(fine.design_loop)} design edges")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/mmshape/data")
