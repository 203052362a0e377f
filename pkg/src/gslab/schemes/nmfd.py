"""Nodal mimetic finite differences (nMFD) in 2D."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..gd import Control, GradientDiscretisation, LleStructure, NodeMap, region_constant_map
from ..mesh import PolytopalMesh
from ..quadrature import Quadrature
from .common import SchemeError, corner_pieces
from .hmm import comparison_constant, stabilisation_matrix
from .mpfa import _entry_next

WEIGHT_TOL = 1e-12


def default_weights(mesh: PolytopalMesh) -> tuple[np.ndarray, np.ndarray]:
    """Cell weights per cell-vertex entry (|K|/#V_K) and face weights (|s|/2 per end)."""
    sizes = np.diff(mesh.cf_ptr)
    w_cell = np.repeat(mesh.cell_area / sizes, sizes)
    w_face = np.repeat(mesh.face_length[:, None] / 2.0, 2, axis=1)
    return w_cell, w_face


def check_weights(mesh: PolytopalMesh, w_cell: np.ndarray, w_face: np.ndarray) -> None:
    bad = []
    if np.any(w_cell < 0) or np.any(w_face < 0):
        bad.append("weights must be nonnegative")
    tot = np.bincount(mesh.cf_cell, w_cell, mesh.n_cells)
    k = np.flatnonzero(np.abs(tot - mesh.cell_area) > WEIGHT_TOL * np.maximum(1, mesh.cell_area))
    if k.size:
        bad.append(f"sum_v w_K^v != |K| in cell {k[0]}")
    s = np.flatnonzero(np.abs(w_face.sum(axis=1) - mesh.face_length) > WEIGHT_TOL)
    if s.size:
        bad.append(f"sum_v w_s^v != |s| on face {s[0]}")
    fv = mesh.vertices[mesh.face_vertices]                       # (nF, 2, 2)
    bary = np.einsum("fk,fkd->fd", w_face, fv) - mesh.face_length[:, None] * mesh.face_mid
    s = np.flatnonzero(np.abs(bary).max(axis=1) > WEIGHT_TOL * max(1.0, np.abs(fv).max()))
    if s.size:
        bad.append(f"sum_v w_s^v v != |s| x_s on face {s[0]}")
    if bad:
        raise SchemeError("nMFD weight axioms violated: " + "; ".join(bad))


def build_nmfd(mesh: PolytopalMesh, weights: tuple[np.ndarray, np.ndarray] | None = None,
               stabilisation=None) -> GradientDiscretisation:
    """nMFD with vertex unknowns.

    ``weights = (w_cell, w_face)``: ``w_cell`` has one entry per cell-vertex
    (in cell-face order, entry j <-> vertex ``cf_vertex[j]``), ``w_face`` has
    shape (n_faces, 2) matching ``face_vertices``. The cell centre becomes
    ``x_K = sum_v w_K^v v / |K|``; it lives in a scheme-local copy of the mesh.
    Subcells V_(K,v) are realised as the triangles (x_K, v, p) where p splits
    each face of K through v in proportion to the face weights, which gives
    exactly the prescribed measures.
    """
    w_cell, w_face = default_weights(mesh) if weights is None else (
        np.asarray(weights[0], dtype=float), np.asarray(weights[1], dtype=float))
    check_weights(mesh, w_cell, w_face)
    nC, nV = mesh.n_cells, mesh.n_vertices
    xk = np.column_stack([np.bincount(mesh.cf_cell, w_cell * mesh.vertices[mesh.cf_vertex, c], nC)
                          for c in range(2)]) / mesh.cell_area[:, None]
    local = mesh.with_centers(xk)
    if np.any(local.cf_dist <= 0):
        j = int(np.flatnonzero(local.cf_dist <= 0)[0])
        raise SchemeError(f"nMFD centre gives d_(K,s) <= 0 at (K={local.cf_cell[j]}, s={local.cf_face[j]})")

    # weight of the starting vertex of each cell-face entry on that face
    fv = local.face_vertices[local.cf_face]
    slot_a = (fv[:, 0] != local.cf_vertex).astype(int)
    w_a = w_face[local.cf_face, slot_a]
    w_b = w_face[local.cf_face, 1 - slot_a]
    split = w_a / local.face_length[local.cf_face]
    pieces, cell, owner, entry = corner_pieces(local, split=split)
    nxt = _entry_next(local)
    region = np.where(np.arange(len(pieces)) % 2 == 0, entry, nxt[entry])
    quad = Quadrature.from_pieces(pieces, cell, region, len(local.cf_face))
    vol = quad.region_measure

    region_dofs, region_mats = [], []
    zeta = 1.0
    pi_rows = []
    for K in range(nC):
        s, e = local.cf_ptr[K], local.cf_ptr[K + 1]
        m = e - s
        verts = local.cf_vertex[s:e]
        nrm = local.cf_normal[s:e]
        area = local.cell_area[K]
        hK = local.cell_diam[K]
        wk = w_cell[s:e]
        # grad_K over the loop vertices: face j joins local vertices j and j+1
        Gk = np.zeros((2, m))
        for j in range(m):
            Gk[:, j] += w_a[s + j] * nrm[j] / area
            Gk[:, (j + 1) % m] += w_b[s + j] * nrm[j] / area
        Q = np.eye(m) - np.outer(np.ones(m), wk) / area
        delta = local.vertices[verts] - xk[K]
        R = np.eye(m) - delta @ Gk
        L = stabilisation_matrix(stabilisation, K, R, slice(s, e))
        zeta = max(zeta, comparison_constant(L, R, vol[s:e] / hK ** 2, K))
        stab = L @ R @ Q
        for j in range(m):
            # subcell at vertex j: faces j (leaving) and j-1 (entering)
            Nsum = w_a[s + j] * nrm[j] + w_b[s + (j - 1) % m] * nrm[(j - 1) % m]
            region_dofs.append(verts)
            region_mats.append(Gk + np.outer(Nsum / (2.0 * vol[s + j]), stab[j]))
        pi_rows.append((verts, wk / area))

    grad = region_constant_map(quad, region_dofs, region_mats, nV)
    cells_of_node = quad.node_cell
    sizes = np.diff(local.cf_ptr)
    rows, cols, vals = [], [], []
    for K, (verts, coef) in enumerate(pi_rows):
        nodes = np.flatnonzero(cells_of_node == K)
        rows.append(np.repeat(nodes, len(verts)))
        cols.append(np.tile(verts, len(nodes)))
        vals.append(np.tile(coef, len(nodes)))
    pi = NodeMap.from_triplets(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                               quad.n_nodes, nV)

    nF = local.n_faces
    prow = [np.repeat(np.arange(nC), sizes), nC + np.repeat(np.arange(nF), 2)]
    pcol = [local.cf_vertex, local.face_vertices.ravel()]
    pval = [w_cell / local.cell_area[local.cf_cell], (w_face / local.face_length[:, None]).ravel()]
    phi = sp.csr_matrix((np.concatenate(pval), (np.concatenate(prow), np.concatenate(pcol))),
                        shape=(nC + nF, nV))
    return GradientDiscretisation(
        kind="nmfd", mesh=local, points=local.vertices.copy(),
        boundary=local.vertex_boundary.copy(), quad=quad, pi=pi, grad=grad,
        lle=LleStructure(region_dofs, [g[None] for g in region_mats]),
        control=Control(local, phi), dof_kind=np.array(["vertex"] * nV),
        info={"zeta": zeta, "centers": xk, "subcell_volume": vol})
