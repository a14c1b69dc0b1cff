"""Triangular meshes with tagged boundaries, GMSH I/O and geometric queries."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

GAMMA_IN = "Gamma_in"
GAMMA_OUT = "Gamma_out"
GAMMA_NS = "Gamma_ns"
GAMMA_D = "Gamma_d"
TAGS = (GAMMA_IN, GAMMA_OUT, GAMMA_NS, GAMMA_D)

# physical group id -> tag, used when the file carries no $PhysicalNames
DEFAULT_TAG_IDS = {1: GAMMA_IN, 2: GAMMA_OUT, 3: GAMMA_NS, 4: GAMMA_D}

SINGULAR_TOL = 1e-14


class MeshError(ValueError):
    """Raised for malformed mesh files or meshes violating an invariant."""


class TriMesh:
    """Immutable reference triangulation.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    boundary_edges : (nb, 2) int array
    boundary_tags : (nb,) array of tag names
    design_loop : (m,) int array
        Γ_d vertices in traversal order; edge ``k`` joins ``design_loop[k]``
        and ``design_loop[(k + 1) % m]``.  The traversal direction is chosen
        such that the right-hand normal of every edge points into the fluid,
        i.e. away from the obstacle.
    """

    def __init__(self, vertices, triangles, boundary_edges, boundary_tags, design_loop):
        self.vertices = vertices
        self.triangles = triangles
        self.boundary_edges = boundary_edges
        self.boundary_tags = boundary_tags
        self.design_loop = design_loop
        for arr in (vertices, triangles, boundary_edges, boundary_tags, design_loop):
            arr.setflags(write=False)

    @classmethod
    def from_arrays(cls, vertices, triangles, boundary_edges, boundary_tags,
                    require_design: bool = True) -> "TriMesh":
        """Build and validate a mesh.  Clockwise triangles are reoriented."""
        vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        boundary_edges = np.array(boundary_edges, dtype=np.int64).reshape(-1, 2)
        boundary_tags = np.array([str(t) for t in boundary_tags], dtype=object)
        if len(boundary_tags) != len(boundary_edges):
            raise MeshError("one tag per boundary edge required")
        unknown = set(boundary_tags) - set(TAGS)
        if unknown:
            raise MeshError(f"unknown boundary tag(s): {sorted(unknown)}")
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise MeshError("triangle references a missing vertex")

        area2 = _signed_area2(vertices, triangles)
        if np.any(area2 == 0.0):
            raise MeshError("degenerate triangle with zero area")
        flip = area2 < 0
        triangles[flip] = triangles[flip][:, [0, 2, 1]]

        _check_boundary(triangles, boundary_edges)
        design = boundary_edges[boundary_tags == GAMMA_D]
        if len(design) == 0 and not require_design:
            loop = np.zeros(0, dtype=np.int64)
        else:
            loop = _chain_loop(design)
            loop = _orient_loop(vertices, triangles, loop)
            others = boundary_edges[boundary_tags != GAMMA_D]
            if np.intersect1d(others.ravel(), loop).size:
                raise MeshError("design boundary touches the rest of the boundary")
            if len(others):
                rest = vertices[np.unique(others)]
                gap = np.min(np.linalg.norm(vertices[loop][:, None, :] - rest[None], axis=2))
                if not gap > 0.0:
                    raise MeshError("design boundary has zero distance to the rest of the boundary")
        return cls(vertices, triangles, boundary_edges, boundary_tags, loop)

    # ---- sizes -------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    # ---- topology ----------------------------------------------------------
    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges, sorted vertex pairs in lexicographic order."""
        return self._edge_data[0]

    @cached_property
    def triangle_edges(self) -> np.ndarray:
        """(nt, 3) edge index of local edges (0,1), (1,2), (2,0)."""
        return self._edge_data[1]

    @cached_property
    def _edge_data(self):
        t = self.triangles
        local = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1).reshape(-1, 2)
        local = np.sort(local, axis=1)
        edges, inverse = np.unique(local, axis=0, return_inverse=True)
        return edges, inverse.reshape(-1, 3)

    def edge_index(self, pairs) -> np.ndarray:
        """Global edge index of each vertex pair (any order)."""
        pairs = np.sort(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), axis=1)
        key = self.edges[:, 0] * self.n_vertices + self.edges[:, 1]
        q = pairs[:, 0] * self.n_vertices + pairs[:, 1]
        pos = np.searchsorted(key, q)
        if np.any(pos >= len(key)) or np.any(key[np.minimum(pos, len(key) - 1)] != q):
            raise MeshError("vertex pair is not a mesh edge")
        return pos

    def tagged_vertices(self, *tags) -> np.ndarray:
        mask = np.isin(self.boundary_tags, tags)
        return np.unique(self.boundary_edges[mask])

    def tagged_edges(self, *tags) -> np.ndarray:
        """Global edge indices of the boundary edges carrying any of ``tags``."""
        mask = np.isin(self.boundary_tags, tags)
        return self.edge_index(self.boundary_edges[mask])

    # ---- design curve --------------------------------------------------------
    @cached_property
    def design_edges(self) -> np.ndarray:
        """(m, 2) vertex pairs of Γ_d in loop order."""
        loop = self.design_loop
        return np.column_stack([loop, np.roll(loop, -1)])

    @cached_property
    def design_edge_triangles(self) -> np.ndarray:
        """Index of the (unique) triangle adjacent to each design edge."""
        eidx = self.edge_index(self.design_edges)
        owner = np.full(len(self.edges), -1, dtype=np.int64)
        owner[self.triangle_edges.ravel()] = np.repeat(np.arange(self.n_triangles), 3)
        return owner[eidx]

    @cached_property
    def design_edge_lengths(self) -> np.ndarray:
        d = np.diff(self.vertices[self.design_edges], axis=1)[:, 0]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def design_edge_normals(self) -> np.ndarray:
        """Unit normals of the Γ_d edges pointing from the obstacle into the fluid."""
        d = np.diff(self.vertices[self.design_edges], axis=1)[:, 0]
        h = np.hypot(d[:, 0], d[:, 1])
        if np.any(h == 0.0):
            raise MeshError("zero-length design edge")
        return np.column_stack([d[:, 1], -d[:, 0]]) / h[:, None]


def _signed_area2(vertices, triangles):
    p = vertices[triangles]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    return a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]


def _check_boundary(triangles, boundary_edges):
    local = np.sort(np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]],
                                    triangles[:, [2, 0]]]), axis=1)
    edges, counts = np.unique(local, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise MeshError("non-manifold edge shared by more than two triangles")
    free = edges[counts == 1]
    tagged = np.sort(boundary_edges, axis=1)
    tagged_u, tcount = np.unique(tagged, axis=0, return_counts=True)
    if np.any(tcount > 1):
        raise MeshError("boundary edge tagged more than once")
    free_set = {tuple(e) for e in free}
    tagged_set = {tuple(e) for e in tagged_u}
    if tagged_set - free_set:
        raise MeshError("tagged boundary edge is not on the boundary of exactly one triangle")
    if free_set - tagged_set:
        raise MeshError("boundary edge without a physical tag")


def _chain_loop(design_edges):
    if len(design_edges) < 3:
        raise MeshError("design boundary not a single closed loop")
    nbrs: dict[int, list[int]] = {}
    for a, b in design_edges:
        nbrs.setdefault(int(a), []).append(int(b))
        nbrs.setdefault(int(b), []).append(int(a))
    if any(len(v) != 2 for v in nbrs.values()):
        raise MeshError("design boundary not a single closed loop")
    start = int(design_edges[0, 0])
    loop, prev, cur = [start], None, start
    while True:
        a, b = nbrs[cur]
        nxt = b if a == prev else a
        if nxt == start:
            break
        loop.append(nxt)
        prev, cur = cur, nxt
        if len(loop) > len(design_edges):
            break
    if len(loop) != len(design_edges):
        raise MeshError("design boundary not a single closed loop")
    return np.array(loop, dtype=np.int64)


def _orient_loop(vertices, triangles, loop):
    a, b = loop[0], loop[1]
    for tri in triangles:
        if a in tri and b in tri:
            c = [v for v in tri if v != a and v != b][0]
            break
    d = vertices[b] - vertices[a]
    right = np.array([d[1], -d[0]])
    if right @ (vertices[c] - vertices[a]) < 0:
        loop = np.concatenate([loop[:1], loop[1:][::-1]])
    return loop


# ---------------------------------------------------------------------------
# GMSH MSH 2.2 ASCII
# ---------------------------------------------------------------------------

def load_gmsh(path, tag_map: dict | None = None) -> TriMesh:
    """Read an ASCII MSH v2.2 file.

    ``tag_map`` maps physical-group names or numbers to boundary tags.  Without
    it, physical names equal to a tag name are used directly and otherwise the
    numeric groups 1-4 map to (Gamma_in, Gamma_out, Gamma_ns, Gamma_d).
    """
    try:
        lines = Path(path).read_text().split("\n")
    except OSError as exc:
        raise MeshError(f"cannot read mesh file {path}: {exc}") from exc
    sections = _msh_sections(lines)
    fmt = sections.get("MeshFormat")
    if not fmt or fmt[0].split()[:2] != ["2.2", "0"]:
        raise MeshError("only ASCII MSH format 2.2 is supported")

    names = {}
    for line in sections.get("PhysicalNames", [])[1:]:
        parts = line.split(maxsplit=2)
        if len(parts) == 3:
            names[int(parts[1])] = parts[2].strip().strip('"')

    try:
        node_lines = sections["Nodes"]
        n_nodes = int(node_lines[0])
        ids = np.empty(n_nodes, dtype=np.int64)
        coords = np.empty((n_nodes, 2))
        for i, line in enumerate(node_lines[1:n_nodes + 1]):
            parts = line.split()
            ids[i] = int(parts[0])
            coords[i] = float(parts[1]), float(parts[2])
        elem_lines = sections["Elements"]
        n_elem = int(elem_lines[0])
        tris, edges, groups = [], [], []
        for line in elem_lines[1:n_elem + 1]:
            parts = [int(x) for x in line.split()]
            etype, ntags = parts[1], parts[2]
            phys = parts[3] if ntags > 0 else 0
            nodes = parts[3 + ntags:]
            if etype == 2:
                tris.append(nodes[:3])
            elif etype == 1:
                edges.append(nodes[:2])
                groups.append(phys)
    except (KeyError, IndexError, ValueError) as exc:
        raise MeshError(f"malformed MSH file: {exc}") from exc

    index = {int(n): i for i, n in enumerate(ids)}
    try:
        tris = np.array([[index[n] for n in t] for t in tris], dtype=np.int64)
        edges = np.array([[index[n] for n in e] for e in edges], dtype=np.int64)
    except KeyError as exc:
        raise MeshError(f"element references unknown node {exc}") from exc
    if len(tris) == 0:
        raise MeshError("mesh contains no triangles")

    tags = []
    for g in groups:
        tag = _resolve_tag(g, names, tag_map)
        if tag is None:
            raise MeshError(f"unknown physical group {names.get(g, g)!r} on a boundary edge")
        tags.append(tag)
    return TriMesh.from_arrays(coords, tris, edges.reshape(-1, 2), tags)


def _resolve_tag(group, names, tag_map):
    name = names.get(group)
    if tag_map:
        for key in (name, group, str(group)):
            if key is not None and key in tag_map:
                return tag_map[key]
        return None
    if name in TAGS:
        return name
    if name is None:
        return DEFAULT_TAG_IDS.get(group)
    return None


def _msh_sections(lines):
    sections, current, body = {}, None, []
    for raw in lines:
        line = raw.strip()
        if not line:
            continue
        if line.startswith("$End"):
            if current is not None:
                sections[current] = body
            current, body = None, []
        elif line.startswith("$"):
            current, body = line[1:], []
        elif current is not None:
            body.append(line)
    return sections


def write_gmsh(mesh: TriMesh, path) -> None:
    """Write ``mesh`` as ASCII MSH 2.2; coordinates round-trip exactly."""
    ids = {tag: i + 1 for i, tag in enumerate(TAGS)}
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$PhysicalNames", str(len(TAGS) + 1)]
    out += [f'1 {ids[t]} "{t}"' for t in TAGS]
    out += ['2 5 "fluid"', "$EndPhysicalNames", "$Nodes", str(mesh.n_vertices)]
    out += [f"{i + 1} {x!r} {y!r} 0" for i, (x, y) in enumerate(mesh.vertices.tolist())]
    out += ["$EndNodes", "$Elements", str(len(mesh.boundary_edges) + mesh.n_triangles)]
    k = 1
    for (a, b), tag in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags):
        out.append(f"{k} 1 2 {ids[tag]} {ids[tag]} {a + 1} {b + 1}")
        k += 1
    for a, b, c in mesh.triangles.tolist():
        out.append(f"{k} 2 2 5 5 {a + 1} {b + 1} {c + 1}")
        k += 1
    out += ["$EndElements", ""]
    Path(path).write_text("\n".join(out))


# ---------------------------------------------------------------------------
# geometric queries
# ---------------------------------------------------------------------------

def design_normals(mesh: TriMesh) -> np.ndarray:
    """Unit normals at the Γ_d vertices (loop order), obstacle-outward.

    Each is the length-weighted mean of the two adjacent edge normals.
    """
    en = mesh.design_edge_normals * mesh.design_edge_lengths[:, None]
    vn = en + np.roll(en, 1, axis=0)
    return vn / np.linalg.norm(vn, axis=1)[:, None]


def p1_gradients(mesh: TriMesh) -> np.ndarray:
    """(nt, 3, 2) gradients of the P1 hat functions on every triangle."""
    p = mesh.vertices[mesh.triangles]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns
    inv_t = np.linalg.inv(jac).transpose(0, 2, 1)
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    return np.einsum("eij,aj->eai", inv_t, ref)


def displacement_gradient(mesh: TriMesh, w) -> np.ndarray:
    """(nt, 2, 2) gradient of a P1 vector field with blocked coefficients."""
    coeffs = np.asarray(getattr(w, "coeffs", w), dtype=float)
    n = mesh.n_vertices
    wv = np.stack([coeffs[:n], coeffs[n:2 * n]], axis=1)[mesh.triangles]  # (nt, 3, 2)
    return np.einsum("eac,eaj->ecj", wv, p1_gradients(mesh))


def transform_jacobian(mesh: TriMesh, w) -> np.ndarray:
    """J_τ = det(I + Dw) per triangle (constant for P1 displacements)."""
    dw = displacement_gradient(mesh, w)
    return (1 + dw[:, 0, 0]) * (1 + dw[:, 1, 1]) - dw[:, 0, 1] * dw[:, 1, 0]


def transformed_normal(grad_tau, n) -> np.ndarray:
    """Unit normal of the deformed boundary, ``(Dτ)^{-T} n`` normalized."""
    grad_tau = np.asarray(grad_tau, dtype=float)
    det = grad_tau[0, 0] * grad_tau[1, 1] - grad_tau[0, 1] * grad_tau[1, 0]
    if abs(det) < SINGULAR_TOL:
        raise np.linalg.LinAlgError("singular transformation gradient")
    # (Dτ)^{-T} = cof(Dτ) / det
    cof = np.array([[grad_tau[1, 1], -grad_tau[1, 0]], [-grad_tau[0, 1], grad_tau[0, 0]]])
    m = cof @ np.asarray(n, dtype=float) / det
    return m / np.linalg.norm(m)


def design_transformed_normal(mesh: TriMesh, w, edge: int) -> np.ndarray:
    """Deformed normal on design edge ``edge``; constant along the edge for P1 ``w``."""
    t = mesh.design_edge_triangles[edge]
    grad_tau = np.eye(2) + displacement_gradient(mesh, w)[t]
    return transformed_normal(grad_tau, mesh.design_edge_normals[edge])


@dataclass(frozen=True)
class QualityReport:
    min_jacobian: float
    min_angle: float
    max_aspect_ratio: float
    n_inverted: int

    def __str__(self):
        return (f"min J_tau        {self.min_jacobian:.6g}\n"
                f"min angle (deg)  {math.degrees(self.min_angle):.4g}\n"
                f"max aspect ratio {self.max_aspect_ratio:.4g}\n"
                f"inverted         {self.n_inverted}")


def mesh_quality(mesh: TriMesh, w=None) -> QualityReport:
    """Quality statistics of the deformed mesh (id + w)(Ω).

    The aspect ratio is ``longest_edge * perimeter / (4 sqrt(3) area)``, equal
    to one for an equilateral triangle.  Inverted or collapsed elements get
    an infinite aspect ratio and a zero angle.
    """
    if w is None:
        jac = np.ones(mesh.n_triangles)
        x = mesh.vertices
    else:
        jac = transform_jacobian(mesh, w)
        coeffs = np.asarray(getattr(w, "coeffs", w), dtype=float)
        x = mesh.vertices + coeffs[:2 * mesh.n_vertices].reshape(2, -1).T
    p = x[mesh.triangles]
    e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
    lengths = np.linalg.norm(e, axis=2)
    area = 0.5 * _signed_area2(x, mesh.triangles)
    ok = (area > 0) & (jac > 0)
    angles = np.zeros((mesh.n_triangles, 3))
    for k in range(3):
        u, v = -e[:, k - 1], e[:, k]
        cosang = np.einsum("ij,ij->i", u, v) / np.maximum(lengths[:, k - 1] * lengths[:, k], 1e-300)
        angles[:, k] = np.arccos(np.clip(cosang, -1.0, 1.0))
    angles[~ok] = 0.0
    aspect = np.full(mesh.n_triangles, np.inf)
    aspect[ok] = lengths[ok].max(axis=1) * lengths[ok].sum(axis=1) / (4 * math.sqrt(3) * area[ok])
    return QualityReport(min_jacobian=float(jac.min()), min_angle=float(angles.min()),
                         max_aspect_ratio=float(aspect.max()), n_inverted=int(np.sum(jac <= 0)))


def polygon_area(points) -> float:
    """Signed shoelace area of a closed polygon given by its vertices."""
    x, y = np.asarray(points, dtype=float).T
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def refine_uniform(mesh: TriMesh, circle_radius: float | None = None) -> TriMesh:
    """Split every triangle into four.

    With ``circle_radius`` the new Γ_d vertices are projected radially onto the
    circle of that radius about the origin, so the refined design polygon
    interpolates the circle.
    """
    nv = mesh.n_vertices
    edges = mesh.edges
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    if circle_radius is not None and len(mesh.design_loop):
        d_idx = mesh.edge_index(mesh.design_edges)
        mid[d_idx] *= circle_radius / np.linalg.norm(mid[d_idx], axis=1)[:, None]
    vertices = np.vstack([mesh.vertices, mid])
    t, te = mesh.triangles, mesh.triangle_edges + nv
    m01, m12, m20 = te[:, 0], te[:, 1], te[:, 2]
    tris = np.concatenate([
        np.column_stack([t[:, 0], m01, m20]),
        np.column_stack([m01, t[:, 1], m12]),
        np.column_stack([m20, m12, t[:, 2]]),
        np.column_stack([m01, m12, m20]),
    ])
    bm = mesh.edge_index(mesh.boundary_edges) + nv
    bedges = np.concatenate([np.column_stack([mesh.boundary_edges[:, 0], bm]),
                             np.column_stack([bm, mesh.boundary_edges[:, 1]])])
    tags = np.concatenate([mesh.boundary_tags, mesh.boundary_tags])
    return TriMesh.from_arrays(vertices, tris, bedges, tags,
                               require_design=len(mesh.design_loop) > 0)
