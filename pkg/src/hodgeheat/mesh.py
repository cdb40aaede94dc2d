"""Oriented simplicial complexes embedded in Euclidean space.

Simplices of dimension k < n are stored with increasing vertex indices;
top-dimensional simplices keep the orientation they were built with
(counterclockwise for planar meshes, outward for closed surfaces).
"""

from __future__ import annotations

import math
from functools import cached_property
from itertools import combinations

import numpy as np
import scipy.sparse as sp

MAX_ICOSPHERE_LEVEL = 6


def permutation_sign(perm) -> int:
    """Sign of a permutation given as a sequence of distinct integers."""
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


class SimplicialComplex:
    """Simplicial mesh of intrinsic dimension 1 or 2.

    Parameters
    ----------
    vertices : array_like, shape (nv, ambient_dim)
    cells : array_like, shape (nc, dim + 1)
        Top-dimensional simplices; tuple order is the orientation.
    surface : str, optional
        Name of the exact surface the vertices lie on ("circle" or "sphere").
        Uniform refinement projects new vertices back onto it.
    """

    def __init__(self, vertices, cells, surface: str | None = None):
        vertices = np.asarray(vertices, dtype=float)
        cells = np.asarray(cells, dtype=np.int64)
        if vertices.ndim != 2 or cells.ndim != 2:
            raise ValueError("vertices and cells must be 2-d arrays")
        self.dim = cells.shape[1] - 1
        if self.dim not in (1, 2):
            raise ValueError(f"unsupported intrinsic dimension {self.dim}")
        self.ambient_dim = vertices.shape[1]
        if self.ambient_dim not in (self.dim, self.dim + 1):
            raise ValueError("ambient dimension must be n or n+1")
        self.vertices = vertices
        self.vertices.setflags(write=False)
        self.surface = surface

        simplices = [np.arange(len(vertices), dtype=np.int64)[:, None]]
        for k in range(1, self.dim):
            faces = set()
            for cell in cells:
                faces.update(combinations(sorted(cell.tolist()), k + 1))
            simplices.append(np.array(sorted(faces), dtype=np.int64).reshape(-1, k + 1))
        simplices.append(cells)
        for s in simplices:
            s.setflags(write=False)
        self.simplices = simplices
        self.face_index = [
            {tuple(sorted(s.tolist())): i for i, s in enumerate(simp)}
            for simp in simplices
        ]
        self._validate()

    def _validate(self):
        cells = self.simplices[-1]
        for cell in cells:
            if len(set(cell.tolist())) != len(cell):
                raise ValueError(f"repeated vertex in simplex {tuple(cell)}")
        if np.any(self.volumes(self.dim) <= 0.0):
            raise ValueError("degenerate simplex")
        if len(self.face_index[-1]) != len(cells):
            raise ValueError("duplicate top simplex")

    def __repr__(self):
        counts = ", ".join(str(c) for c in self.counts)
        return f"SimplicialComplex(dim={self.dim}, ambient={self.ambient_dim}, counts=({counts}))"

    @property
    def cells(self) -> np.ndarray:
        return self.simplices[-1]

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.simplices)

    def euler_characteristic(self) -> int:
        return int(sum((-1) ** k * c for k, c in enumerate(self.counts)))

    def volumes(self, k: int) -> np.ndarray:
        """k-dimensional volume of every k-simplex (flat simplices)."""
        simp = self.simplices[k]
        if k == 0:
            return np.ones(len(simp))
        pts = self.vertices[simp]
        edges = pts[:, 1:, :] - pts[:, :1, :]
        gram = np.einsum("sia,sja->sij", edges, edges)
        return np.sqrt(np.clip(np.linalg.det(gram), 0.0, None)) / math.factorial(k)

    def mesh_size(self) -> float:
        """Maximum edge length."""
        edges = self.simplices[1]
        lengths = np.linalg.norm(self.vertices[edges[:, 1]] - self.vertices[edges[:, 0]], axis=1)
        return float(lengths.max())

    @cached_property
    def _element_faces(self):
        """Per element and face degree: global face index and the local vertex
        positions of that face, listed in the face's stored orientation."""
        cells = self.cells
        n = self.dim
        out = {}
        for k in range(n + 1):
            subsets = list(combinations(range(n + 1), k + 1))
            index = np.empty((len(cells), len(subsets)), dtype=np.int64)
            local = np.empty((len(cells), len(subsets), k + 1), dtype=np.int64)
            for e, cell in enumerate(cells):
                for j, sub in enumerate(subsets):
                    glob = tuple(int(cell[p]) for p in sub)
                    f = self.face_index[k][tuple(sorted(glob))]
                    index[e, j] = f
                    stored = self.simplices[k][f]
                    pos = {int(cell[p]): p for p in sub}
                    local[e, j] = [pos[int(v)] for v in stored]
            out[k] = (index, local)
        return out

    def element_faces(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(index, local)`` for the k-faces of every top simplex.

        ``index[e, j]`` is the global k-simplex index of local face j and
        ``local[e, j]`` lists its local vertex positions in stored order.
        """
        return self._element_faces[k]

    @cached_property
    def boundary_facets(self) -> np.ndarray:
        """Indices of (n-1)-simplices that belong to exactly one top simplex."""
        index, _ = self.element_faces(self.dim - 1)
        counts = np.bincount(index.ravel(), minlength=len(self.simplices[self.dim - 1]))
        return np.flatnonzero(counts == 1)

    def is_closed(self) -> bool:
        return len(self.boundary_facets) == 0


def boundary_matrix(mesh: SimplicialComplex, k: int) -> sp.csr_matrix:
    """Signed incidence matrix from k-simplices to (k-1)-simplices.

    Face i of (v_0, ..., v_k) enters with sign (-1)^i, corrected by the
    parity between the removed-vertex tuple and the face's stored tuple.
    Entries are exact integers.
    """
    if not 1 <= k <= mesh.dim:
        raise ValueError(f"k must lie in 1..{mesh.dim}, got {k}")
    rows, cols, vals = [], [], []
    lower = mesh.simplices[k - 1]
    for j, simplex in enumerate(mesh.simplices[k]):
        verts = simplex.tolist()
        for i in range(k + 1):
            face = verts[:i] + verts[i + 1:]
            f = mesh.face_index[k - 1][tuple(sorted(face))]
            stored = lower[f].tolist()
            perm = [stored.index(v) for v in face]
            rows.append(f)
            cols.append(j)
            vals.append((-1) ** i * permutation_sign(perm))
    shape = (len(lower), len(mesh.simplices[k]))
    return sp.csr_matrix((np.array(vals, dtype=np.int64), (rows, cols)), shape=shape)


def build_square_mesh(nx: int, ny: int, side: float = 1.0) -> SimplicialComplex:
    """Structured triangulation of [0, side]^2 with all diagonals running
    from lower-left to upper-right."""
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be positive")
    xs = np.linspace(0.0, side, nx + 1)
    ys = np.linspace(0.0, side, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    cells = []
    for j in range(ny):
        for i in range(nx):
            p00, p10, p11, p01 = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            cells.append((p00, p10, p11))
            cells.append((p00, p11, p01))
    return SimplicialComplex(vertices, cells)


def build_circle_mesh(m: int) -> SimplicialComplex:
    """Regular m-gon inscribed in the unit circle, edges counterclockwise."""
    if m < 3:
        raise ValueError("m must be at least 3")
    theta = 2.0 * np.pi * np.arange(m) / m
    vertices = np.column_stack([np.cos(theta), np.sin(theta)])
    cells = [(i, (i + 1) % m) for i in range(m)]
    return SimplicialComplex(vertices, cells, surface="circle")


def _icosahedron():
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    return verts, np.array(faces)


def _orient_outward(vertices, cells):
    p = vertices[cells]
    normal = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    flip = np.einsum("ij,ij->i", normal, p.mean(axis=1)) < 0
    cells = cells.copy()
    cells[flip] = cells[flip][:, [0, 2, 1]]
    return cells


def build_icosphere(level: int) -> SimplicialComplex:
    """Icosahedron refined ``level`` times with vertices on the unit sphere."""
    if not 0 <= level <= MAX_ICOSPHERE_LEVEL:
        raise ValueError(f"icosphere level must lie in 0..{MAX_ICOSPHERE_LEVEL}")
    verts, faces = _icosahedron()
    mesh = SimplicialComplex(verts, _orient_outward(verts, faces), surface="sphere")
    for _ in range(level):
        mesh = refine_uniform(mesh)
    return mesh


def project_to_surface(points: np.ndarray, surface: str | None) -> np.ndarray:
    if surface in ("circle", "sphere"):
        return points / np.linalg.norm(points, axis=1, keepdims=True)
    if surface is None:
        return points
    raise ValueError(f"unknown surface {surface!r}")


def refine_uniform(mesh: SimplicialComplex) -> SimplicialComplex:
    """Bisect every edge; triangles split 1-to-4 keeping their orientation.

    New vertices of meshes tied to an exact surface are projected onto it.
    """
    edges = mesh.simplices[1]
    nv = len(mesh.vertices)
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    mids = project_to_surface(mids, mesh.surface)
    vertices = np.vstack([mesh.vertices, mids])

    def mid(a, b):
        return nv + mesh.face_index[1][(min(a, b), max(a, b))]

    cells = []
    if mesh.dim == 1:
        for a, b in mesh.cells.tolist():
            m = mid(a, b)
            cells += [(a, m), (m, b)]
    else:
        for a, b, c in mesh.cells.tolist():
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            cells += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    return SimplicialComplex(vertices, cells, surface=mesh.surface)


def write_vtk(path, mesh: SimplicialComplex, cell_data=None, point_data=None, title="hodgeheat"):
    """Write a legacy ASCII VTK unstructured grid with optional scalar fields."""
    pts = mesh.vertices
    if pts.shape[1] < 3:
        pts = np.hstack([pts, np.zeros((len(pts), 3 - pts.shape[1]))])
    cells = mesh.cells
    ctype = 3 if mesh.dim == 1 else 5
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {len(pts)} double")
    lines += [" ".join(f"{x:.16g}" for x in p) for p in pts]
    lines.append(f"CELLS {len(cells)} {len(cells) * (cells.shape[1] + 1)}")
    lines += [" ".join(str(v) for v in (cells.shape[1], *c)) for c in cells.tolist()]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(ctype)] * len(cells)
    for header, data, count in (("CELL_DATA", cell_data, len(cells)),
                                ("POINT_DATA", point_data, len(pts))):
        if not data:
            continue
        lines.append(f"{header} {count}")
        for name, values in data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (count,):
                raise ValueError(f"field {name!r} has shape {values.shape}, expected ({count},)")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [f"{v:.16g}" for v in values]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
