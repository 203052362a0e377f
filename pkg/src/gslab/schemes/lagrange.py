"""Conforming Lagrange elements of degree 1 and 2, and mass-lumped P1."""

from __future__ import annotations

import numpy as np

from ..gd import GradientDiscretisation, LleStructure, NodeMap, region_constant_map
from ..mesh import PolytopalMesh
from ..quadrature import Quadrature
from ..transforms import LumpingPartition, mass_lump
from .common import SchemeError, barycentric, corner_pieces, lambdas_at, require_simplicial


def _p1_pieces(mesh: PolytopalMesh):
    pieces, cell, owner, _ = corner_pieces(mesh)
    quad = Quadrature.from_pieces(pieces, cell, cell, mesh.n_cells)
    return quad, owner


def build_p1(mesh: PolytopalMesh, k: int = 1, lumped: bool = False) -> GradientDiscretisation:
    """Lagrange P_k (k = 1, 2) on a simplicial mesh; ``lumped`` only for k = 1.

    Every triangle is integrated on its six barycentric-dual pieces, so the
    lumping regions V_v (points closest in barycentric terms to v) are unions
    of pieces.
    """
    require_simplicial(mesh, "p1/p2")
    if k not in (1, 2):
        raise SchemeError("only k = 1 and k = 2 are supported")
    if lumped and k != 1:
        raise SchemeError("mass lumping is only defined for k = 1")
    quad, owner = _p1_pieces(mesh)
    verts, X, Jinv, grads = barycentric(mesh)
    cells = quad.node_cell
    lam = lambdas_at(quad.points, cells, X, Jinv)
    nQ = quad.n_nodes
    if k == 1:
        n = mesh.n_vertices
        rows = np.repeat(np.arange(nQ), 3)
        pi = NodeMap.from_triplets(rows, verts[cells].ravel(), lam.ravel(), nQ, n)
        region_dofs = list(verts)
        region_mats = list(np.transpose(grads, (0, 2, 1)))
        grad = region_constant_map(quad, region_dofs, region_mats, n)
        lle = LleStructure(region_dofs, [g[None] for g in region_mats])
        gd = GradientDiscretisation(
            kind="p1", mesh=mesh, points=mesh.vertices.copy(), boundary=mesh.vertex_boundary.copy(),
            quad=quad, pi=pi, grad=grad, lle=lle,
            dof_kind=np.array(["vertex"] * n), info={"k": 1})
        if lumped:
            return mass_lump(gd, LumpingPartition(owner), kind="p1_lumped")
        return gd
    return _build_p2(mesh, quad, verts, X, Jinv, grads, lam)


def _p2_local(lam: np.ndarray, g: np.ndarray):
    """P2 basis values (n, 6) and gradients (n, 6, 2): 3 vertex then 3 edge functions.

    Edge function j lives on the edge from local vertex j to j+1.
    """
    nxt = [1, 2, 0]
    val = np.empty((len(lam), 6))
    grd = np.empty((len(lam), 6, 2))
    for j in range(3):
        val[:, j] = lam[:, j] * (2 * lam[:, j] - 1)
        grd[:, j] = (4 * lam[:, j] - 1)[:, None] * g[:, j]
        m = nxt[j]
        val[:, 3 + j] = 4 * lam[:, j] * lam[:, m]
        grd[:, 3 + j] = 4 * (lam[:, m][:, None] * g[:, j] + lam[:, j][:, None] * g[:, m])
    return val, grd


def _build_p2(mesh, quad, verts, X, Jinv, grads, lam) -> GradientDiscretisation:
    nV, nF = mesh.n_vertices, mesh.n_faces
    n = nV + nF
    faces = mesh.cf_face.reshape(-1, 3)                 # face j joins local j and j+1
    local = np.hstack([verts, nV + faces])              # (nC, 6) global dofs
    cells = quad.node_cell
    nQ = quad.n_nodes
    val, grd = _p2_local(lam, grads[cells])
    rows = np.repeat(np.arange(nQ), 6)
    pi = NodeMap.from_triplets(rows, local[cells].ravel(), val.ravel(), nQ, n)
    grad = NodeMap.from_triplets(rows, local[cells].ravel(), grd.reshape(-1, 2), nQ, n)
    # gradient samples at the three vertices of each triangle
    samples = []
    eye = np.eye(3)
    for K in range(mesh.n_cells):
        g = np.repeat(grads[K][None], 3, axis=0)
        _, gv = _p2_local(eye, g)
        samples.append(np.transpose(gv, (0, 2, 1)))     # (3 samples, 2, 6)
    lle = LleStructure(list(local), samples)
    points = np.vstack([mesh.vertices, mesh.face_mid])
    boundary = np.concatenate([mesh.vertex_boundary, mesh.face_boundary])
    kinds = np.array(["vertex"] * nV + ["face"] * nF)
    return GradientDiscretisation(kind="p2", mesh=mesh, points=points, boundary=boundary,
                                  quad=quad, pi=pi, grad=grad, lle=lle, dof_kind=kinds,
                                  info={"k": 2})
