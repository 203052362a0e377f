"""Two-dimensional polytopal meshes.

A mesh stores its topology (vertices, straight faces, cells given as closed
loops of faces) together with every geometric quantity used by the schemes:
cell measures, centres, diameters, face lengths and midpoints, outward unit
normals n_{K,s}, orthogonal distances d_{K,s} and half-diamond measures
|D_{K,s}| = |s| d_{K,s} / 2.

Per-(cell, face) quantities are stored in "cell-face" order: the faces of cell
``K`` occupy ``cf_ptr[K]:cf_ptr[K+1]`` and are listed counter-clockwise, face
``j`` of the loop joining ``cell_vertices[j]`` to ``cell_vertices[j+1]``.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

GEOM_TOL = 1e-12


class MeshError(ValueError):
    """Raised for malformed topology, invalid geometry or unreadable files."""


@dataclass(frozen=True)
class MeshStats:
    h_M: float
    theta: float
    n_cells: int
    n_faces: int
    n_vertices: int


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PolytopalMesh:
    vertices: np.ndarray          # (nV, 2)
    face_vertices: np.ndarray     # (nF, 2)
    face_cells: np.ndarray        # (nF, 2), -1 for the missing neighbour
    cf_ptr: np.ndarray            # (nC+1,)
    cf_face: np.ndarray           # (nCF,) face ids in loop order
    cf_vertex: np.ndarray         # (nCF,) first vertex of each loop face
    centers: np.ndarray           # (nC, 2) x_K
    cell_area: np.ndarray
    cell_centroid: np.ndarray
    cell_diam: np.ndarray
    face_length: np.ndarray
    face_mid: np.ndarray
    cf_normal: np.ndarray         # (nCF, 2) outward unit normals
    cf_dist: np.ndarray           # (nCF,) d_{K,s}
    cf_diamond: np.ndarray        # (nCF,) |D_{K,s}|
    kind: str = "general"
    label: str = "mesh"
    meta: dict = field(default_factory=dict)

    # ------------------------------------------------------------------ sizes
    @property
    def n_cells(self) -> int:
        return len(self.cf_ptr) - 1

    @property
    def n_faces(self) -> int:
        return len(self.face_vertices)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @cached_property
    def cf_cell(self) -> np.ndarray:
        return _frozen(np.repeat(np.arange(self.n_cells), np.diff(self.cf_ptr)))

    @cached_property
    def cf_next_vertex(self) -> np.ndarray:
        """Second vertex of each loop face (counter-clockwise)."""
        nxt = np.empty_like(self.cf_vertex)
        for K in range(self.n_cells):
            s, e = self.cf_ptr[K], self.cf_ptr[K + 1]
            nxt[s:e] = np.roll(self.cf_vertex[s:e], -1)
        return _frozen(nxt)

    @cached_property
    def face_boundary(self) -> np.ndarray:
        return _frozen(self.face_cells[:, 1] < 0)

    @cached_property
    def vertex_boundary(self) -> np.ndarray:
        flag = np.zeros(self.n_vertices, dtype=bool)
        flag[self.face_vertices[self.face_boundary].ravel()] = True
        return _frozen(flag)

    @property
    def h_M(self) -> float:
        return float(self.cell_diam.max())

    @cached_property
    def area(self) -> float:
        """|Omega| from the boundary faces alone (divergence theorem)."""
        bnd = self.face_boundary[self.cf_face]
        x = self.face_mid[self.cf_face[bnd]]
        flux = np.einsum("ij,ij->i", x, self.cf_normal[bnd])
        return float(0.5 * np.sum(flux * self.face_length[self.cf_face[bnd]]))

    def cell_faces(self, K: int) -> np.ndarray:
        return self.cf_face[self.cf_ptr[K]:self.cf_ptr[K + 1]]

    def cell_vertices(self, K: int) -> np.ndarray:
        return self.cf_vertex[self.cf_ptr[K]:self.cf_ptr[K + 1]]

    def cell_loops(self) -> list[list[int]]:
        return [self.cell_vertices(K).tolist() for K in range(self.n_cells)]

    @cached_property
    def _face_lookup(self) -> dict[tuple[int, int], int]:
        return {tuple(sorted(map(int, fv))): i for i, fv in enumerate(self.face_vertices)}

    def find_face(self, a: int, b: int) -> int:
        return self._face_lookup[(min(a, b), max(a, b))]

    def cell_triangles(self) -> np.ndarray:
        """Triangles (x_K, a, b) for every cell-face pair, in cell-face order."""
        tri = np.empty((len(self.cf_face), 3, 2))
        tri[:, 0] = self.centers[self.cf_cell]
        tri[:, 1] = self.vertices[self.cf_vertex]
        tri[:, 2] = self.vertices[self.cf_next_vertex]
        return tri

    # ----------------------------------------------------------- constructors
    @classmethod
    def from_polygons(cls, vertices: np.ndarray, polygons: Sequence[Sequence[int]],
                      centers: np.ndarray | None = None, kind: str | None = None,
                      label: str = "mesh") -> "PolytopalMesh":
        """Build from vertex loops; faces are created by matching edges."""
        lookup: dict[tuple[int, int], int] = {}
        fv: list[tuple[int, int]] = []
        cell_faces = []
        for poly in polygons:
            ids = []
            m = len(poly)
            for j in range(m):
                a, b = int(poly[j]), int(poly[(j + 1) % m])
                key = (min(a, b), max(a, b))
                if key not in lookup:
                    lookup[key] = len(fv)
                    fv.append(key)
                ids.append(lookup[key])
            cell_faces.append(ids)
        return cls.from_topology(vertices, np.array(fv, dtype=np.int64), cell_faces,
                                 centers=centers, kind=kind, label=label)

    @classmethod
    def from_topology(cls, vertices: np.ndarray, face_vertices: np.ndarray,
                      cell_faces: Sequence[Sequence[int]], centers: np.ndarray | None = None,
                      kind: str | None = None, label: str = "mesh") -> "PolytopalMesh":
        vertices = np.asarray(vertices, dtype=float)
        face_vertices = np.asarray(face_vertices, dtype=np.int64).reshape(-1, 2)
        nF, nC = len(face_vertices), len(cell_faces)
        if nC == 0:
            raise MeshError("mesh has no cells")
        if face_vertices.size and (face_vertices.min() < 0 or face_vertices.max() >= len(vertices)):
            raise MeshError("face references a missing vertex")

        face_cells = -np.ones((nF, 2), dtype=np.int64)
        count = np.zeros(nF, dtype=np.int64)
        ptr = [0]
        cf_face: list[int] = []
        cf_vertex: list[int] = []
        for K, faces in enumerate(cell_faces):
            faces = [int(f) for f in faces]
            if len(faces) < 3:
                raise MeshError(f"cell {K}: fewer than 3 faces")
            for f in faces:
                if not 0 <= f < nF:
                    raise MeshError(f"cell {K}: unknown face {f}")
                if count[f] >= 2:
                    raise MeshError(f"face {f}: referenced by more than 2 cells")
                face_cells[f, count[f]] = K
                count[f] += 1
            loop = _vertex_loop(K, faces, face_vertices)
            if _signed_area(vertices[loop]) < 0:
                loop = loop[::-1]
            m = len(loop)
            pair = {tuple(sorted(map(int, face_vertices[f]))): f for f in faces}
            for j in range(m):
                a, b = loop[j], loop[(j + 1) % m]
                cf_face.append(pair[(min(a, b), max(a, b))])
                cf_vertex.append(a)
            ptr.append(len(cf_face))
        if np.any(count == 0):
            raise MeshError(f"face {int(np.argmin(count))}: not attached to any cell")

        cf_ptr = np.array(ptr, dtype=np.int64)
        cf_face_a = np.array(cf_face, dtype=np.int64)
        cf_vertex_a = np.array(cf_vertex, dtype=np.int64)
        cf_cell = np.repeat(np.arange(nC), np.diff(cf_ptr))

        # next vertex in each loop
        nxt = np.empty_like(cf_vertex_a)
        for K in range(nC):
            s, e = cf_ptr[K], cf_ptr[K + 1]
            nxt[s:e] = np.roll(cf_vertex_a[s:e], -1)
        a = vertices[cf_vertex_a]
        b = vertices[nxt]
        cross = a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]
        area = np.bincount(cf_cell, cross, nC) / 2.0
        cx = np.bincount(cf_cell, (a[:, 0] + b[:, 0]) * cross, nC) / (6.0 * area)
        cy = np.bincount(cf_cell, (a[:, 1] + b[:, 1]) * cross, nC) / (6.0 * area)
        centroid = np.column_stack([cx, cy])
        diam = np.zeros(nC)
        for K in range(nC):
            p = vertices[cf_vertex_a[cf_ptr[K]:cf_ptr[K + 1]]]
            diam[K] = np.sqrt(((p[:, None, :] - p[None, :, :]) ** 2).sum(-1).max())

        p0 = vertices[face_vertices[:, 0]]
        p1 = vertices[face_vertices[:, 1]]
        flen = np.hypot(*(p1 - p0).T)
        fmid = 0.5 * (p0 + p1)
        edge = b - a
        elen = np.hypot(edge[:, 0], edge[:, 1])
        normal = np.column_stack([edge[:, 1], -edge[:, 0]]) / elen[:, None]
        centers = centroid.copy() if centers is None else np.asarray(centers, dtype=float).reshape(nC, 2)
        dist = np.einsum("ij,ij->i", fmid[cf_face_a] - centers[cf_cell], normal)
        diamond = flen[cf_face_a] * dist / 2.0

        if kind is None:
            kind = _detect_kind(vertices, cf_ptr, cf_vertex_a, nxt, area)
        return cls(
            vertices=_frozen(vertices), face_vertices=_frozen(face_vertices),
            face_cells=_frozen(face_cells), cf_ptr=_frozen(cf_ptr),
            cf_face=_frozen(cf_face_a), cf_vertex=_frozen(cf_vertex_a),
            centers=_frozen(centers), cell_area=_frozen(area),
            cell_centroid=_frozen(centroid), cell_diam=_frozen(diam),
            face_length=_frozen(flen), face_mid=_frozen(fmid),
            cf_normal=_frozen(normal), cf_dist=_frozen(dist),
            cf_diamond=_frozen(diamond), kind=kind, label=label,
        )

    def with_centers(self, centers: np.ndarray) -> "PolytopalMesh":
        """Same topology, different cell centres (distances recomputed)."""
        faces = [self.cell_faces(K) for K in range(self.n_cells)]
        return PolytopalMesh.from_topology(self.vertices, self.face_vertices, faces,
                                           centers=centers, kind=self.kind, label=self.label)

    def split_faces(self) -> tuple["PolytopalMesh", np.ndarray]:
        """Split every face at its midpoint.

        Returns the new mesh (same cells and centres) and an array ``half`` of
        shape (nF, 2) with ``half[s, k]`` the id of the half of ``s`` that
        touches ``face_vertices[s, k]``.
        """
        nV = self.n_vertices
        verts = np.vstack([self.vertices, self.face_mid])
        polys = []
        for K in range(self.n_cells):
            loop = []
            for f, v in zip(self.cell_faces(K), self.cell_vertices(K)):
                loop.extend([int(v), nV + int(f)])
            polys.append(loop)
        split = PolytopalMesh.from_polygons(verts, polys, centers=self.centers,
                                            kind="split", label=self.label + "-split")
        half = np.array([[split.find_face(int(a), nV + s), split.find_face(int(b), nV + s)]
                         for s, (a, b) in enumerate(self.face_vertices)], dtype=np.int64)
        return split, half

    def stats(self) -> MeshStats:
        return MeshStats(self.h_M, regularity_factor(self), self.n_cells, self.n_faces,
                         self.n_vertices)


def _vertex_loop(K: int, faces: list[int], fv: np.ndarray) -> list[int]:
    remaining = list(faces[1:])
    a, b = (int(x) for x in fv[faces[0]])
    loop = [a, b]
    while remaining:
        cur = loop[-1]
        for idx, f in enumerate(remaining):
            u, w = (int(x) for x in fv[f])
            if cur in (u, w):
                loop.append(w if u == cur else u)
                remaining.pop(idx)
                break
        else:
            raise MeshError(f"cell {K}: faces do not form a closed loop")
    if loop[-1] != loop[0]:
        raise MeshError(f"cell {K}: faces do not form a closed loop")
    return loop[:-1]


def _signed_area(p: np.ndarray) -> float:
    q = np.roll(p, -1, axis=0)
    return 0.5 * float(np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))


def _detect_kind(vertices, cf_ptr, cf_vertex, nxt, area) -> str:
    sizes = np.diff(cf_ptr)
    if np.all(sizes == 3):
        return "simplicial"
    if np.all(sizes == 4):
        d = vertices[nxt] - vertices[cf_vertex]
        axis = (np.abs(d[:, 0]) <= GEOM_TOL * np.abs(d).max()) | (np.abs(d[:, 1]) <= GEOM_TOL * np.abs(d).max())
        if axis.all():
            return "cartesian"
    return "general"


# ---------------------------------------------------------------------------
# builders

def _check_counts(nx: int, ny: int, domain: Sequence[float]) -> tuple[float, float, float, float]:
    if int(nx) < 1 or int(ny) < 1:
        raise MeshError("cell counts must be at least 1")
    x0, x1, y0, y1 = (float(t) for t in domain)
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate domain {tuple(domain)}")
    return x0, x1, y0, y1


def _grid(nx, ny, domain):
    x0, x1, y0, y1 = _check_counts(nx, ny, domain)
    xs = x0 + (x1 - x0) * np.arange(nx + 1) / nx
    ys = y0 + (y1 - y0) * np.arange(ny + 1) / ny
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


def build_cartesian(nx: int, ny: int, domain: Sequence[float] = (0.0, 1.0, 0.0, 1.0)) -> PolytopalMesh:
    """Uniform grid of ``nx * ny`` rectangles; ``domain = (xmin, xmax, ymin, ymax)``."""
    verts = _grid(nx, ny, domain)
    vid = lambda i, j: j * (nx + 1) + i  # noqa: E731
    polys = [[vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]
             for j in range(ny) for i in range(nx)]
    return PolytopalMesh.from_polygons(verts, polys, kind="cartesian", label=f"cartesian-{nx}x{ny}")


def build_simplicial(nx: int, ny: int, domain: Sequence[float] = (0.0, 1.0, 0.0, 1.0)) -> PolytopalMesh:
    """Each grid rectangle split into two triangles along its rising diagonal."""
    verts = _grid(nx, ny, domain)
    vid = lambda i, j: j * (nx + 1) + i  # noqa: E731
    polys = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            polys += [[a, b, c], [a, c, d]]
    return PolytopalMesh.from_polygons(verts, polys, kind="simplicial", label=f"simplicial-{nx}x{ny}")


def build_family(kind: str, levels: int, base_n: int = 4,
                 domain: Sequence[float] = (0.0, 1.0, 0.0, 1.0)) -> list[PolytopalMesh]:
    builder = {"cartesian": build_cartesian, "simplicial": build_simplicial}.get(kind)
    if builder is None:
        raise MeshError(f"unknown mesh family {kind!r}")
    return [builder(base_n * 2 ** k, base_n * 2 ** k, domain) for k in range(levels)]


def perturb(mesh: PolytopalMesh, amplitude: float, seed: int) -> PolytopalMesh:
    """Move interior vertices randomly within a disc of radius ``amplitude * h_v``.

    ``h_v`` is the shortest face incident to the vertex. Cell centres are reset
    to the new centroids. Raises :class:`MeshError` naming the first (K, s) with
    a non-positive orthogonal distance.
    """
    if not 0.0 <= amplitude <= 0.3:
        raise MeshError("amplitude must lie in [0, 0.3]")
    if amplitude == 0.0:
        return mesh
    rng = np.random.default_rng(seed)
    h_v = np.full(mesh.n_vertices, np.inf)
    np.minimum.at(h_v, mesh.face_vertices[:, 0], mesh.face_length)
    np.minimum.at(h_v, mesh.face_vertices[:, 1], mesh.face_length)
    r = amplitude * h_v * np.sqrt(rng.random(mesh.n_vertices))
    t = 2.0 * np.pi * rng.random(mesh.n_vertices)
    shift = np.column_stack([r * np.cos(t), r * np.sin(t)])
    shift[mesh.vertex_boundary] = 0.0
    verts = mesh.vertices + shift
    for K, loop in enumerate(mesh.cell_loops()):
        if _signed_area(verts[loop]) <= 0:
            raise MeshError(f"perturbation inverts cell {K}")
    faces = [mesh.cell_faces(K) for K in range(mesh.n_cells)]
    kind = "simplicial" if mesh.kind == "simplicial" else None
    out = PolytopalMesh.from_topology(verts, mesh.face_vertices, faces, kind=kind,
                                      label=f"{mesh.label}-p{amplitude:g}s{seed}")
    bad = np.flatnonzero(out.cf_dist <= 0)
    if bad.size:
        j = bad[0]
        raise MeshError(f"perturbation gives d_(K,s) <= 0 at (K={out.cf_cell[j]}, s={out.cf_face[j]})")
    return out


# ---------------------------------------------------------------------------
# validation

def regularity_factor(mesh: PolytopalMesh) -> float:
    K = mesh.cf_cell
    first = np.max(mesh.cell_diam[K] / mesh.cf_dist + mesh.cell_area[K] / mesh.cf_diamond)
    # d_{K,s}/d_{L,s} over interior faces, both orientations
    d = np.zeros((mesh.n_faces, 2))
    slot = (mesh.face_cells[mesh.cf_face, 1] == K).astype(int)
    d[mesh.cf_face, slot] = mesh.cf_dist
    inner = ~mesh.face_boundary
    second = 0.0
    if inner.any():
        r = d[inner, 0] / d[inner, 1]
        second = float(np.max(np.maximum(r, 1.0 / r)))
    return float(first + second)


def validate(mesh: PolytopalMesh) -> MeshStats | list[str]:
    """Check every mesh invariant; return stats or the list of violations."""
    bad: list[str] = []
    nC = mesh.n_cells
    tol = GEOM_TOL * np.maximum(1.0, mesh.cell_area)
    K = mesh.cf_cell
    for j in np.flatnonzero(mesh.cf_dist <= 0):
        bad.append(f"d_(K,s) <= 0 at (K={K[j]}, s={mesh.cf_face[j]})")
    unit = np.abs(np.hypot(*mesh.cf_normal.T) - 1.0)
    for j in np.flatnonzero(unit > GEOM_TOL):
        bad.append(f"normal not unit at (K={K[j]}, s={mesh.cf_face[j]})")
    flen = mesh.face_length[mesh.cf_face]
    stokes = np.column_stack([np.bincount(K, flen * mesh.cf_normal[:, c], nC) for c in range(2)])
    for k in np.flatnonzero(np.abs(stokes).max(axis=1) > tol):
        bad.append(f"sum |s| n != 0 in cell {k}")
    dsum = np.bincount(K, mesh.cf_diamond, nC)
    for k in np.flatnonzero(np.abs(dsum - mesh.cell_area) > tol):
        bad.append(f"sum |D_(K,s)| != |K| in cell {k}")
    diam_ok = np.abs(mesh.cf_diamond - flen * mesh.cf_dist / 2.0) > tol[K]
    for j in np.flatnonzero(diam_ok):
        bad.append(f"|D_(K,s)| != |s| d / 2 at (K={K[j]}, s={mesh.cf_face[j]})")
    proj = np.einsum("ij,ij->i", mesh.face_mid[mesh.cf_face] - mesh.centers[K], mesh.cf_normal)
    for j in np.flatnonzero(np.abs(proj - mesh.cf_dist) > tol[K]):
        bad.append(f"(x_s - x_K).n != d_(K,s) at (K={K[j]}, s={mesh.cf_face[j]})")
    ncell = (mesh.face_cells >= 0).sum(axis=1)
    for f in np.flatnonzero((ncell < 1) | (ncell > 2)):
        bad.append(f"face {f} has {ncell[f]} adjacent cells")
    if abs(mesh.cell_area.sum() - mesh.area) > GEOM_TOL * max(1.0, mesh.area):
        bad.append("sum |K| != |Omega|")
    if bad:
        return bad
    return mesh.stats()


# ---------------------------------------------------------------------------
# JSON serialisation

def mesh_to_dict(mesh: PolytopalMesh) -> dict:
    return {
        "dim": 2,
        "vertices": mesh.vertices.tolist(),
        "faces": [{"v": [int(a), int(b)], "cells": [int(c) for c in fc if c >= 0]}
                  for (a, b), fc in zip(mesh.face_vertices, mesh.face_cells)],
        "cells": [{"faces": mesh.cell_faces(K).tolist(), "center": mesh.centers[K].tolist()}
                  for K in range(mesh.n_cells)],
    }


def mesh_from_dict(data: dict, label: str = "mesh") -> PolytopalMesh:
    try:
        if data.get("dim", 2) != 2:
            raise MeshError(f"unsupported dimension {data.get('dim')}")
        verts = np.asarray(data["vertices"], dtype=float).reshape(-1, 2)
        fv, fcells = [], []
        for i, f in enumerate(data["faces"]):
            v = f["v"]
            if len(v) != 2:
                raise MeshError(f"face {i}: expected 2 vertices, got {len(v)}")
            cells = f.get("cells", [])
            if not 1 <= len(cells) <= 2:
                raise MeshError(f"face {i}: references {len(cells)} cells")
            fv.append([int(v[0]), int(v[1])])
            fcells.append(sorted(int(c) for c in cells))
        cell_faces, centers, have_all = [], [], True
        for k, c in enumerate(data["cells"]):
            cell_faces.append([int(f) for f in c["faces"]])
            if "center" in c:
                centers.append([float(t) for t in c["center"]])
            else:
                have_all = False
        if centers and not have_all:
            raise MeshError("either all cells or none must carry a centre")
    except (KeyError, TypeError) as exc:
        raise MeshError(f"malformed mesh record: {exc!r}") from exc
    listed = [[] for _ in fv]
    for k, faces in enumerate(cell_faces):
        for f in faces:
            if not 0 <= f < len(fv):
                raise MeshError(f"cell {k}: unknown face {f}")
            listed[f].append(k)
    for i, (a, b) in enumerate(zip(listed, fcells)):
        if sorted(a) != b:
            raise MeshError(f"face {i}: cell list {b} disagrees with cell records {sorted(a)}")
    return PolytopalMesh.from_topology(verts, np.array(fv, dtype=np.int64), cell_faces,
                                       centers=np.array(centers) if centers else None, label=label)


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_mesh(mesh: PolytopalMesh, path: str | os.PathLike) -> None:
    # json uses repr() for floats, which round-trips exactly (<= 17 digits)
    atomic_write_text(path, json.dumps(mesh_to_dict(mesh)))


def read_mesh(path: str | os.PathLike) -> PolytopalMesh:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MeshError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return mesh_from_dict(data, label=os.path.splitext(os.path.basename(os.fspath(path)))[0])
