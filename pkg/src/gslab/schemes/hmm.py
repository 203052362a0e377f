"""Hybrid mimetic mixed (HMM) scheme and its SUSHI condensation."""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.sparse as sp

from ..gd import (Control, GradientDiscretisation, LleStructure, piecewise_constant_map,
                  region_constant_map)
from ..mesh import PolytopalMesh
from ..quadrature import Quadrature
from ..transforms import CondensationRule, barycentric_condense
from .common import SchemeError

SQRT_D = np.sqrt(2.0)


def image_basis(R: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of the range of R."""
    U, s, _ = np.linalg.svd(R)
    rank = int(np.sum(s > tol * max(1.0, s[0])))
    return U[:, :rank]


def stabilisation_matrix(stab, K: int, R: np.ndarray, entries: slice) -> np.ndarray:
    """The isomorphism L_K of Im(R_K) as an m x m matrix."""
    m = R.shape[0]
    if stab is None:
        return np.eye(m)
    if callable(stab):
        return np.asarray(stab(K, R), dtype=float)
    if isinstance(stab, tuple) and stab[0] == "face":
        c = np.asarray(stab[1], dtype=float)[entries]
        B = image_basis(R)
        P = B @ B.T
        return P @ np.diag(c) @ P
    c = np.asarray(stab, dtype=float)
    return (c if c.ndim == 0 else c[K]) * np.eye(m)


def comparison_constant(L: np.ndarray, R: np.ndarray, weight: np.ndarray, K: int) -> float:
    """Smallest zeta with N(R xi)/zeta <= N(L R xi) <= zeta N(R xi), N(eta) = sum w eta^2.

    Also checks that L maps Im(R) onto itself.
    """
    B = image_basis(R)
    if B.shape[1] == 0 or np.array_equal(L, np.eye(len(L))):
        return 1.0
    LB = L @ B
    if np.abs(LB - B @ (B.T @ LB)).max() > 1e-10 * max(1.0, np.abs(LB).max()):
        raise SchemeError(f"cell {K}: stabilisation does not map Im(R_K) into itself")
    if np.linalg.matrix_rank(B.T @ LB, tol=1e-10) < B.shape[1]:
        raise SchemeError(f"cell {K}: stabilisation is not an isomorphism of Im(R_K)")
    W = np.diag(weight)
    lam = np.linalg.eigvals(np.linalg.solve(B.T @ W @ B, LB.T @ W @ LB)).real
    return float(max(lam.max(), 1.0 / lam.min()))


def build_hmm(mesh: PolytopalMesh, stabilisation=None) -> GradientDiscretisation:
    """HMM on any polytopal mesh.

    ``stabilisation`` selects L_K: ``None`` (identity), a positive scalar or
    one scalar per cell, ``("face", c)`` with one positive weight per
    cell-face entry (projected onto Im(R_K)), or a callable ``(K, R) -> L``.
    """
    nC, nF = mesh.n_cells, mesh.n_faces
    n = nC + nF
    quad = Quadrature.from_pieces(mesh.cell_triangles(), mesh.cf_cell,
                                  np.arange(len(mesh.cf_face)), len(mesh.cf_face))
    region_dofs, region_mats = [None] * len(mesh.cf_face), [None] * len(mesh.cf_face)
    zeta = 1.0
    for K in range(nC):
        s, e = mesh.cf_ptr[K], mesh.cf_ptr[K + 1]
        faces = mesh.cf_face[s:e]
        m = e - s
        nrm = mesh.cf_normal[s:e]
        length = mesh.face_length[faces]
        dist = mesh.cf_dist[s:e]
        Gk = (length[:, None] * nrm).T / mesh.cell_area[K]          # 2 x m, acts on xi
        delta = mesh.face_mid[faces] - mesh.centers[K]
        R = np.eye(m) - delta @ Gk
        L = stabilisation_matrix(stabilisation, K, R, slice(s, e))
        zeta = max(zeta, comparison_constant(L, R, mesh.cf_diamond[s:e] / dist ** 2, K))
        Q = np.hstack([-np.ones((m, 1)), np.eye(m)])                  # xi = Q u_loc
        base = Gk @ Q
        stab = L @ R @ Q
        dofs = np.concatenate([[K], nC + faces])
        for j in range(m):
            region_dofs[s + j] = dofs
            region_mats[s + j] = base + (SQRT_D / dist[j]) * np.outer(nrm[j], stab[j])
    grad = region_constant_map(quad, region_dofs, region_mats, n)
    partition = quad.piece_cell.copy()
    pi = piecewise_constant_map(quad, partition, n)
    points = np.vstack([mesh.centers, mesh.face_mid])
    boundary = np.concatenate([np.zeros(nC, dtype=bool), mesh.face_boundary])
    kinds = np.array(["cell"] * nC + ["face"] * nF)
    return GradientDiscretisation(
        kind="hmm", mesh=mesh, points=points, boundary=boundary, quad=quad, pi=pi, grad=grad,
        lle=LleStructure(region_dofs, [g[None] for g in region_mats]), partition=partition,
        control=Control(mesh, sp.identity(n, format="csr")), dof_kind=kinds,
        info={"zeta": zeta, "stabilisation": "identity" if stabilisation is None else "custom"})


def _min_norm_weights(P: np.ndarray, target: np.ndarray) -> np.ndarray | None:
    """Minimal-norm beta with sum beta = 1 and sum beta_j P_j = target, or None."""
    M = np.vstack([np.ones(len(P)), P.T])
    rhs = np.concatenate([[1.0], target])
    if np.linalg.matrix_rank(M, tol=1e-12 * max(1.0, np.abs(M).max())) < min(3, len(P)):
        return None
    beta, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    scale = max(1.0, np.abs(P).max())
    if np.abs(M @ beta - rhs).max() > 1e-13 * scale:
        return None
    return beta


def sushi_rule(gd: GradientDiscretisation, keep_faces=None) -> CondensationRule:
    """Eliminate the interior faces of an HMM discretisation.

    ``keep_faces`` (indices or boolean mask) lists interior faces that stay
    hybrid, typically those lying on a discontinuity of the diffusion tensor.
    """
    mesh = gd.mesh
    nC = mesh.n_cells
    keep = mesh.face_boundary.copy()
    if keep_faces is not None:
        keep[np.asarray(keep_faces)] = True
    retained = np.concatenate([np.arange(nC), nC + np.flatnonzero(keep)])
    vertex_cells: list[set] = [set() for _ in range(mesh.n_vertices)]
    for K in range(nC):
        for v in mesh.cell_vertices(K):
            vertex_cells[int(v)].add(K)
    stencils = {}
    for s in np.flatnonzero(~keep):
        target = mesh.face_mid[s]
        H = [int(c) for c in mesh.face_cells[s]]
        beta = _min_norm_weights(gd.points[H], target)
        if beta is None:
            a, b = mesh.face_vertices[s]
            H = sorted(vertex_cells[int(a)] | vertex_cells[int(b)])
            beta = _min_norm_weights(gd.points[H], target)
        if beta is None:
            raise SchemeError(f"face {s}: no affinely independent stencil reproduces its midpoint")
        stencils[nC + int(s)] = (np.array(H, dtype=np.int64), beta)
    return CondensationRule(retained, stencils)


def build_sushi(mesh: PolytopalMesh, stabilisation=None, keep_faces=None) -> GradientDiscretisation:
    hmm = build_hmm(mesh, stabilisation)
    return barycentric_condense(hmm, sushi_rule(hmm, keep_faces), kind="sushi")
