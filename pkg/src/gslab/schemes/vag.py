"""Vertex approximate gradient (VAG) scheme, 2D version.

P1 on the triangles (x_K, v, v') of every cell-face pair, then mass-lumped
by giving one third of each triangle to each of its three nodes. In 2D the
face points of the 3D construction do not exist, so there is nothing to
condense.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..gd import GradientDiscretisation
from ..mesh import PolytopalMesh
from .lagrange import build_p1


def sub_triangulation(mesh: PolytopalMesh) -> PolytopalMesh:
    """Simplicial mesh with nodes = vertices then cell centres."""
    nV = mesh.n_vertices
    verts = np.vstack([mesh.vertices, mesh.centers])
    polys = np.column_stack([nV + mesh.cf_cell, mesh.cf_vertex, mesh.cf_next_vertex])
    return PolytopalMesh.from_polygons(verts, polys, kind="simplicial", label=f"{mesh.label}-vag")


def build_vag2d(mesh: PolytopalMesh) -> GradientDiscretisation:
    sub = sub_triangulation(mesh)
    gd = build_p1(sub, lumped=True)
    kinds = np.array(["vertex"] * mesh.n_vertices + ["cell"] * mesh.n_cells)
    parent = replace(gd.parent, kind="vag2d_p1", dof_kind=kinds)
    return replace(gd, kind="vag2d", dof_kind=kinds, parent=parent,
                   info={**gd.info, "base_mesh": mesh})
