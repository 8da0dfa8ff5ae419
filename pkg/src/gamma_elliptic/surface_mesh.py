"""Oriented closed triangulations with vertices exactly on the surface.

Two deterministic preset hierarchies are provided: the icosahedral sphere
(midpoint subdivision + projection) and a structured torus grid. Meshes are
immutable after construction; ``refine`` returns a new mesh.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .geometry import Atlas


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class ElementGeometry:
    """Per-triangle data for P1 assembly on the affine element."""

    area: float
    normal: np.ndarray        # unit, (3,)
    basis_gradients: np.ndarray  # (3, 3); row i is grad of the hat at vertex i


class SurfaceMesh:
    """Closed oriented triangulation; vertices lie on the target surface."""

    def __init__(self, vertices: np.ndarray, triangles: np.ndarray, label: str = "mesh"):
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.asarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError("vertices must have shape (n, 3)")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError("triangles must have shape (m, 3)")
        if triangles.min(initial=0) < 0 or triangles.max(initial=-1) >= len(vertices):
            raise MeshError("triangle indices out of range")
        vertices.setflags(write=False)
        triangles.setflags(write=False)
        self.vertices = vertices
        self.triangles = triangles
        self.label = label
        self._edge_map: Optional[Dict[Tuple[int, int], list]] = None
        self._geom = None

    # -- basic shape -------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def token(self) -> str:
        """Identifier used to tie DiscreteFields to their mesh."""
        return f"{self.label}:{self.n_vertices}v:{self.n_triangles}t"

    def edge_map(self) -> Dict[Tuple[int, int], list]:
        """Undirected edge -> list of (triangle index, traversed_forward)."""
        if self._edge_map is None:
            em: Dict[Tuple[int, int], list] = {}
            for t, (a, b, c) in enumerate(self.triangles):
                for u, v in ((a, b), (b, c), (c, a)):
                    key = (min(u, v), max(u, v))
                    em.setdefault(key, []).append((t, u < v))
            self._edge_map = em
        return self._edge_map

    @property
    def n_edges(self) -> int:
        return len(self.edge_map())

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_triangles

    # -- element geometry ----------------------------------------------------

    def element_arrays(self):
        """Vectorized (areas, unit normals, hat gradients) for all triangles."""
        if self._geom is None:
            p = self.vertices[self.triangles]  # (nt, 3, 3)
            e01 = p[:, 1] - p[:, 0]
            e02 = p[:, 2] - p[:, 0]
            n = np.cross(e01, e02)
            nn = np.linalg.norm(n, axis=1)
            scale = max(float(np.abs(self.vertices).max()), 1e-300)
            if np.any(nn / 2.0 < 1e-14 * scale * scale):
                raise MeshError("degenerate triangle encountered")
            areas = nn / 2.0
            normals = n / nn[:, None]
            # opposite edges: e_i = p_{i+2} - p_{i+1}
            opp = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
            grads = np.cross(normals[:, None, :], opp) / (2.0 * areas[:, None, None])
            areas.setflags(write=False)
            normals.setflags(write=False)
            grads.setflags(write=False)
            self._geom = (areas, normals, grads)
        return self._geom

    def areas(self) -> np.ndarray:
        return self.element_arrays()[0]

    def total_area(self) -> float:
        return float(self.areas().sum())

    # -- invariants ----------------------------------------------------------

    def validate(self, expected_euler: Optional[int] = None) -> None:
        """Check the closed-manifold, orientation and quality invariants."""
        for edge, uses in self.edge_map().items():
            if len(uses) != 2:
                raise MeshError(f"edge {edge} is shared by {len(uses)} triangles")
            if uses[0][1] == uses[1][1]:
                raise MeshError(f"inconsistent orientation across edge {edge}")
        self.element_arrays()  # raises on degenerate triangles
        if expected_euler is not None and self.euler_characteristic != expected_euler:
            raise MeshError(
                f"Euler characteristic {self.euler_characteristic} != {expected_euler}"
            )


def mesh_size(mesh: SurfaceMesh) -> float:
    """Longest edge length."""
    p = mesh.vertices
    h = 0.0
    for (a, b) in mesh.edge_map():
        h = max(h, float(np.linalg.norm(p[a] - p[b])))
    return h


def element_geometry(mesh: SurfaceMesh, index: int) -> ElementGeometry:
    if not 0 <= index < mesh.n_triangles:
        raise MeshError(f"triangle index {index} out of range")
    areas, normals, grads = mesh.element_arrays()
    return ElementGeometry(float(areas[index]), normals[index].copy(), grads[index].copy())


# ---------------------------------------------------------------------------
# Construction


_ICO_FACES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]


def _icosahedron() -> Tuple[np.ndarray, np.ndarray]:
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
            (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
            (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
        ],
        dtype=float,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    return verts, np.array(_ICO_FACES, dtype=np.int64)


def _orient_consistently(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Flood-fill a consistent orientation, then fix the global sign so the
    enclosed signed volume is positive (outward normals)."""
    tris = triangles.copy()
    edge_map: Dict[Tuple[int, int], list] = {}
    for t, (a, b, c) in enumerate(tris):
        for u, v in ((a, b), (b, c), (c, a)):
            edge_map.setdefault((min(u, v), max(u, v)), []).append(t)
    visited = np.zeros(len(tris), dtype=bool)
    stack = [0]
    visited[0] = True
    while stack:
        t = stack.pop()
        a, b, c = tris[t]
        for u, v in ((a, b), (b, c), (c, a)):
            key = (min(u, v), max(u, v))
            for s in edge_map[key]:
                if s == t or visited[s]:
                    continue
                sa, sb, sc = tris[s]
                forward = (u, v) in ((sa, sb), (sb, sc), (sc, sa))
                if forward:  # same direction on shared edge -> flip neighbor
                    tris[s] = (sa, sc, sb)
                visited[s] = True
                stack.append(s)
    if not visited.all():
        raise MeshError("triangulation is not edge-connected")
    p = vertices[tris]
    volume = np.einsum("ti,ti->", np.cross(p[:, 0], p[:, 1]), p[:, 2]) / 6.0
    if volume < 0:
        tris = tris[:, [0, 2, 1]]
    return tris


def _torus_grid(atlas: Atlas, n_minor: int, n_major: int) -> Tuple[np.ndarray, np.ndarray]:
    chart = atlas.charts[0]
    th = np.arange(n_minor) * (2.0 * np.pi / n_minor)
    ph = np.arange(n_major) * (2.0 * np.pi / n_major)
    TH, PH = np.meshgrid(th, ph, indexing="ij")
    y = np.stack([TH.ravel(), PH.ravel()], axis=-1)
    verts = chart.map(y)

    def vid(i, j):
        return (i % n_minor) * n_major + (j % n_major)

    tris = []
    for i in range(n_minor):
        for j in range(n_major):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return verts, np.array(tris, dtype=np.int64)


def build_mesh(atlas: Atlas, preset: str, resolution: int = 1) -> SurfaceMesh:
    """Build a preset mesh: 'sphere-icosahedral' (resolution = number of
    subdivisions, >= 0) or 'torus-grid' (resolution scales an 8 x 24 grid)."""
    if resolution < 0:
        raise MeshError("resolution must be nonnegative")
    if preset == "sphere-icosahedral":
        verts, tris = _icosahedron()
        verts = atlas.project(verts)
        tris = _orient_consistently(verts, tris)
        mesh = SurfaceMesh(verts, tris, label=f"sphere-ico-0[{atlas.label}]")
        for level in range(resolution):
            mesh = refine(mesh, atlas)
        return mesh
    if preset == "torus-grid":
        if resolution < 1:
            raise MeshError("torus-grid needs resolution >= 1")
        verts, tris = _torus_grid(atlas, 8 * resolution, 24 * resolution)
        verts = atlas.project(verts)
        tris = _orient_consistently(verts, tris)
        return SurfaceMesh(verts, tris, label=f"torus-grid-{resolution}[{atlas.label}]")
    raise MeshError(f"unknown mesh preset {preset!r}")


def refine(mesh: SurfaceMesh, atlas: Atlas) -> SurfaceMesh:
    """Split each triangle into 4 by projected edge midpoints."""
    verts = [mesh.vertices]
    midpoint_idx: Dict[Tuple[int, int], int] = {}
    new_points = []
    next_id = mesh.n_vertices
    for (a, b) in mesh.edge_map():
        new_points.append(0.5 * (mesh.vertices[a] + mesh.vertices[b]))
        midpoint_idx[(a, b)] = next_id
        next_id += 1
    new_points = atlas.project(np.array(new_points))
    all_verts = np.vstack([mesh.vertices, new_points])

    def mid(u, v):
        return midpoint_idx[(min(u, v), max(u, v))]

    tris = np.empty((4 * mesh.n_triangles, 3), dtype=np.int64)
    for t, (a, b, c) in enumerate(mesh.triangles):
        mab, mbc, mca = mid(a, b), mid(b, c), mid(c, a)
        tris[4 * t + 0] = (a, mab, mca)
        tris[4 * t + 1] = (mab, b, mbc)
        tris[4 * t + 2] = (mca, mbc, c)
        tris[4 * t + 3] = (mab, mbc, mca)
    label = mesh.label
    if "-ico-" in label:
        stem, rest = label.split("-ico-", 1)
        level, suffix = rest.split("[", 1)
        label = f"{stem}-ico-{int(level) + 1}[{suffix}"
    else:
        label = label + "+"
    return SurfaceMesh(all_verts, tris, label=label)


# ---------------------------------------------------------------------------
# Export


def write_vtk(mesh: SurfaceMesh, path, point_data: Optional[Dict[str, np.ndarray]] = None):
    """Write legacy ASCII VTK PolyData, optionally with vertex scalars."""
    lines = [
        "# vtk DataFile Version 3.0",
        mesh.label,
        "ASCII",
        "DATASET POLYDATA",
        f"POINTS {mesh.n_vertices} double",
    ]
    for v in mesh.vertices:
        lines.append(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    lines.append(f"POLYGONS {mesh.n_triangles} {4 * mesh.n_triangles}")
    for t in mesh.triangles:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (mesh.n_vertices,):
                raise MeshError(f"point data {name!r} has wrong shape {values.shape}")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{v:.17g}" for v in values)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_csv(mesh: SurfaceMesh, vertices_path, triangles_path):
    """Plain CSV dump: one row per vertex (x,y,z) / per triangle (i,j,k)."""
    with open(vertices_path, "w") as fh:
        fh.write("x,y,z\n")
        for v in mesh.vertices:
            fh.write(f"{v[0]:.17g},{v[1]:.17g},{v[2]:.17g}\n")
    with open(triangles_path, "w") as fh:
        fh.write("v0,v1,v2\n")
        for t in mesh.triangles:
            fh.write(f"{t[0]},{t[1]},{t[2]}\n")
