"""MPFA-O scheme in hybrid form, on Cartesian or simplicial meshes.

Dofs are the cell values u_K followed by one value u_(s,v) per face s and
vertex v of s (id ``n_cells + 2*s + k`` for ``v = face_vertices[s, k]``). The
gradient is constant on each subcell V_(K,v), the part of K closest to v
bounded by the segments joining x_K to the midpoints of the two faces of K
through v.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from ..gd import (Control, GradientDiscretisation, LleStructure, piecewise_constant_map,
                  region_constant_map)
from ..mesh import PolytopalMesh
from ..quadrature import Quadrature
from .common import SchemeError, corner_pieces


def _entry_next(mesh: PolytopalMesh) -> np.ndarray:
    idx = np.arange(len(mesh.cf_face))
    nxt = idx + 1
    ends = mesh.cf_ptr[1:] - 1
    nxt[ends] = mesh.cf_ptr[:-1]
    return nxt


def _entry_prev(mesh: PolytopalMesh) -> np.ndarray:
    idx = np.arange(len(mesh.cf_face))
    prv = idx - 1
    prv[mesh.cf_ptr[:-1]] = mesh.cf_ptr[1:] - 1
    return prv


def pair_id(mesh: PolytopalMesh, face: np.ndarray, vertex: np.ndarray) -> np.ndarray:
    face = np.asarray(face)
    k = (mesh.face_vertices[face, 0] != np.asarray(vertex)).astype(np.int64)
    return mesh.n_cells + 2 * face + k


def build_mpfa_o(mesh: PolytopalMesh) -> GradientDiscretisation:
    if mesh.kind not in ("cartesian", "simplicial"):
        raise SchemeError("mpfa_o is restricted to Cartesian and simplicial meshes "
                          f"(got a {mesh.kind} mesh)")
    nC, nF = mesh.n_cells, mesh.n_faces
    n = nC + 2 * nF
    nxt, prv = _entry_next(mesh), _entry_prev(mesh)

    # regions: one per cell-vertex, indexed by the loop entry starting at that vertex
    pieces, cell, owner, entry = corner_pieces(mesh)
    region = np.where(np.arange(len(pieces)) % 2 == 0, entry, nxt[entry])
    quad = Quadrature.from_pieces(pieces, cell, region, len(mesh.cf_face))
    vol = quad.region_measure

    # subcell V_(K,v): v = cf_vertex[j]; faces of K through v are entries j and prv[j]
    j = np.arange(len(mesh.cf_face))
    v = mesh.cf_vertex
    ent = np.column_stack([j, prv])
    half = 0.5 * mesh.face_length[mesh.cf_face[ent]]               # (R, 2)
    nrm = mesh.cf_normal[ent]                                       # (R, 2, 2)
    pairs = pair_id(mesh, mesh.cf_face[ent], v[:, None])            # (R, 2)
    cols = half[:, :, None] * nrm / vol[:, None, None]              # (R, 2 faces, 2 comps)
    mats = np.empty((len(j), 2, 3))
    mats[:, :, 1:] = np.transpose(cols, (0, 2, 1))
    mats[:, :, 0] = -mats[:, :, 1:].sum(axis=2)
    region_dofs = np.column_stack([mesh.cf_cell, pairs])
    grad = region_constant_map(quad, list(region_dofs), list(mats), n)
    partition = quad.piece_cell.copy()
    pi = piecewise_constant_map(quad, partition, n)

    fv = mesh.face_vertices
    if mesh.kind == "cartesian":
        pts_pair = np.repeat(mesh.face_mid, 2, axis=0)
    else:
        a, b = mesh.vertices[fv[:, 0]], mesh.vertices[fv[:, 1]]
        pts_pair = np.empty((2 * nF, 2))
        pts_pair[0::2] = (2 * a + b) / 3.0
        pts_pair[1::2] = (2 * b + a) / 3.0
    points = np.vstack([mesh.centers, pts_pair])
    boundary = np.concatenate([np.zeros(nC, dtype=bool), np.repeat(mesh.face_boundary, 2)])

    split, halfid = mesh.split_faces()
    rows = np.concatenate([np.arange(nC), nC + halfid.ravel()])
    phi = sp.csr_matrix((np.ones(nC + 2 * nF), (rows, np.arange(nC + 2 * nF))),
                        shape=(nC + split.n_faces, n))
    kinds = np.array(["cell"] * nC + ["face-vertex"] * (2 * nF))
    info = {"mesh_kind": mesh.kind, "region_entries": ent, "region_pairs": pairs,
            "region_volume": vol}
    return GradientDiscretisation(
        kind="mpfa_o", mesh=mesh, points=points, boundary=boundary, quad=quad, pi=pi, grad=grad,
        lle=LleStructure(list(region_dofs), [m[None] for m in mats]), partition=partition,
        control=Control(split, phi), dof_kind=kinds, info=info)


def _region_tensor(gd: GradientDiscretisation, A) -> np.ndarray:
    """Mean of A over each subcell, shape (R, 2, 2)."""
    R = gd.quad.n_regions
    if callable(A):
        vals = np.asarray(A(gd.quad.points), dtype=float).reshape(-1, 2, 2)
        w = gd.quad.weights[:, None, None] * vals
        tot = np.zeros((R, 2, 2))
        np.add.at(tot, gd.quad.node_region, w)
        return tot / gd.info["region_volume"][:, None, None]
    A = np.asarray(A, dtype=float)
    if A.shape == (2, 2):
        return np.broadcast_to(A, (R, 2, 2)).copy()
    if A.shape == (gd.mesh.n_cells, 2, 2):
        return A[gd.mesh.cf_cell]
    raise SchemeError("A must be a callable, a 2x2 matrix or one 2x2 matrix per cell")


def mpfa_fluxes(gd: GradientDiscretisation, u: np.ndarray, A=np.eye(2)) -> np.ndarray:
    """Subface fluxes ``F_(K,s,v) = |s_v| (A G u) . n_(K,s)``.

    Returns an array (R, 2): for subcell r = V_(K,v), the fluxes through the
    halves at v of its two faces (``gd.info['region_entries'][r]``).
    """
    if gd.kind != "mpfa_o":
        raise SchemeError("fluxes are defined for mpfa_o only")
    mesh = gd.mesh
    ent = gd.info["region_entries"]
    G = gd.grad.apply(u)
    # gradient is constant per region: read it at the first node of each region
    first = np.full(gd.quad.n_regions, -1)
    first[gd.quad.node_region[::-1]] = np.arange(gd.quad.n_nodes)[::-1]
    g = G[first]
    Ag = np.einsum("rab,rb->ra", _region_tensor(gd, A), g)
    half = 0.5 * mesh.face_length[mesh.cf_face[ent]]
    return half * np.einsum("rka,ra->rk", mesh.cf_normal[ent], Ag)


def conservativity_residual(gd: GradientDiscretisation, fluxes: np.ndarray) -> float:
    """max over interior subfaces of |F_(K,s,v) + F_(L,s,v)|."""
    mesh = gd.mesh
    ent = gd.info["region_entries"]
    pairs = gd.info["region_pairs"]
    total = np.zeros(gd.n_dofs)
    np.add.at(total, pairs.ravel(), fluxes.ravel())
    inner = ~gd.boundary
    inner[: mesh.n_cells] = False
    return float(np.abs(total[inner]).max()) if inner.any() else 0.0


@dataclass(frozen=True, eq=False)
class EliminatedSystem:
    matrix: sp.csr_matrix          # cell-only matrix (n_cells x n_cells)
    rhs: np.ndarray
    recover: Callable[[np.ndarray], np.ndarray]  # cell values -> full hybrid dof vector


def eliminate_vertices(gd: GradientDiscretisation, A=np.eye(2),
                       f: Callable | None = None) -> EliminatedSystem:
    """Eliminate the face-vertex unknowns around each vertex.

    Around every vertex the subface unknowns are fixed by flux continuity
    through the interior faces at that vertex, which expresses the subface
    fluxes as a transmissibility stencil acting on the surrounding cell
    values. The cell balances then form a cell-only system.
    """
    if gd.kind != "mpfa_o":
        raise SchemeError("vertex elimination is defined for mpfa_o only")
    mesh = gd.mesh
    nC = mesh.n_cells
    ent = gd.info["region_entries"]
    pairs = gd.info["region_pairs"]
    vol = gd.info["region_volume"]
    AT = _region_tensor(gd, A)
    half = 0.5 * mesh.face_length[mesh.cf_face[ent]]
    nrm = mesh.cf_normal[ent]
    # T[r, i, l] = h_i h_l n_i . A n_l / |V|
    T = (half[:, :, None] * half[:, None, :]
         * np.einsum("ria,rab,rlb->ril", nrm, AT, nrm) / vol[:, None, None])
    region_cell = mesh.cf_cell
    region_vertex = mesh.cf_vertex
    interior_pair = ~gd.boundary

    rows, cols, vals = [], [], []
    recover_blocks = []
    order = np.argsort(region_vertex, kind="stable")
    starts = np.searchsorted(region_vertex[order], np.arange(mesh.n_vertices + 1))
    for vtx in range(mesh.n_vertices):
        regs = order[starts[vtx]:starts[vtx + 1]]
        if len(regs) == 0:
            continue
        cells = np.unique(region_cell[regs])
        cpos = {int(c): i for i, c in enumerate(cells)}
        unknown = np.unique(pairs[regs][interior_pair[pairs[regs]]])
        fpos = {int(p): i for i, p in enumerate(unknown)}
        nf, nc = len(unknown), len(cells)
        Aff = np.zeros((nf, nf))
        Afc = np.zeros((nf, nc))
        for r in regs:
            k = cpos[int(region_cell[r])]
            for i in range(2):
                pi_ = int(pairs[r, i])
                if pi_ not in fpos:
                    continue
                for l in range(2):
                    pl = int(pairs[r, l])
                    if pl in fpos:
                        Aff[fpos[pi_], fpos[pl]] += T[r, i, l]
                Afc[fpos[pi_], k] -= T[r, i].sum()
        if nf:
            try:
                X = -np.linalg.solve(Aff, Afc)
            except np.linalg.LinAlgError as exc:
                raise SchemeError(f"singular local system at vertex {vtx}") from exc
            if not np.all(np.isfinite(X)):
                raise SchemeError(f"singular local system at vertex {vtx}")
        else:
            X = np.zeros((0, nc))
        recover_blocks.append((unknown, cells, X))
        for r in regs:
            k = cpos[int(region_cell[r])]
            for i in range(2):
                flux = np.zeros(nc)
                for l in range(2):
                    pl = int(pairs[r, l])
                    if pl in fpos:
                        flux += T[r, i, l] * X[fpos[pl]]
                flux[k] -= T[r, i].sum()
                # cell balance row of K: -sum of outgoing fluxes
                rows.extend([int(region_cell[r])] * nc)
                cols.extend(cells.tolist())
                vals.extend((-flux).tolist())
    S = sp.coo_matrix((vals, (rows, cols)), shape=(nC, nC)).tocsr()
    if f is None:
        b = np.zeros(nC)
    else:
        b = gd.pi.component(0).T @ (gd.quad.weights * gd.quad.sample(f))
        b = np.asarray(b)[:nC]

    def recover(uc: np.ndarray) -> np.ndarray:
        u = np.zeros(gd.n_dofs)
        u[:nC] = uc
        for unknown, cells, X in recover_blocks:
            if len(unknown):
                u[unknown] = X @ uc[cells]
        return u

    return EliminatedSystem(S, b, recover)
