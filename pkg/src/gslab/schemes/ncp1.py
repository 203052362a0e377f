"""Nonconforming P1 (Crouzeix-Raviart) elements, with optional diamond lumping."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..gd import Control, GradientDiscretisation, LleStructure, NodeMap, region_constant_map
from ..mesh import PolytopalMesh
from ..quadrature import Quadrature
from ..transforms import LumpingPartition, mass_lump
from .common import barycentric, lambdas_at, require_simplicial


def build_ncp1(mesh: PolytopalMesh, lumped: bool = False) -> GradientDiscretisation:
    """Dofs at face midpoints; basis ``alpha_s = 1 - 2 lambda_v`` with v opposite s.

    Cells are integrated on the three triangles (x_K, a, b), i.e. the halves of
    the diamonds D_s, which are the lumping regions.
    """
    require_simplicial(mesh, "ncp1")
    quad = Quadrature.from_pieces(mesh.cell_triangles(), mesh.cf_cell, mesh.cf_cell, mesh.n_cells)
    verts, X, Jinv, grads = barycentric(mesh)
    faces = mesh.cf_face.reshape(-1, 3)         # face j is opposite local vertex j+2
    opp = [2, 0, 1]
    nF, nQ = mesh.n_faces, quad.n_nodes
    cells = quad.node_cell
    lam = lambdas_at(quad.points, cells, X, Jinv)
    alpha = 1.0 - 2.0 * lam[:, opp]
    pi = NodeMap.from_triplets(np.repeat(np.arange(nQ), 3), faces[cells].ravel(), alpha.ravel(), nQ, nF)
    mats = [-2.0 * grads[K][opp].T for K in range(mesh.n_cells)]
    grad = region_constant_map(quad, list(faces), mats, nF)

    nC = mesh.n_cells
    rows = np.concatenate([np.repeat(np.arange(nC), 3), nC + np.arange(nF)])
    cols = np.concatenate([faces.ravel(), np.arange(nF)])
    vals = np.concatenate([np.full(3 * nC, 1.0 / 3.0), np.ones(nF)])
    phi = sp.csr_matrix((vals, (rows, cols)), shape=(nC + nF, nF))

    gd = GradientDiscretisation(
        kind="ncp1", mesh=mesh, points=mesh.face_mid.copy(), boundary=mesh.face_boundary.copy(),
        quad=quad, pi=pi, grad=grad, lle=LleStructure(list(faces), [g[None] for g in mats]),
        control=Control(mesh, phi), dof_kind=np.array(["face"] * nF))
    if lumped:
        return mass_lump(gd, LumpingPartition(mesh.cf_face.copy()), kind="ncp1_lumped")
    return gd
