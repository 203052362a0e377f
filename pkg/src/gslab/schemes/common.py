"""Helpers shared by the scheme builders."""

from __future__ import annotations

import numpy as np

from ..mesh import PolytopalMesh


class SchemeError(ValueError):
    pass


def require_simplicial(mesh: PolytopalMesh, scheme: str) -> None:
    if np.any(np.diff(mesh.cf_ptr) != 3):
        raise SchemeError(f"{scheme} requires a simplicial mesh (got {mesh.kind})")


def corner_pieces(mesh: PolytopalMesh, centers: np.ndarray | None = None,
                  split: np.ndarray | None = None):
    """Split each cell into triangles (x_K, v, p) around each vertex.

    For every cell-face entry (face from ``a`` to ``b``) two pieces are
    produced: (x_K, a, p) owned by ``a`` and (x_K, p, b) owned by ``b``, where
    ``p = a + split * (b - a)`` (midpoint by default).

    Returns pieces (P, 3, 2), the owning cell, the owning vertex, and the
    originating cell-face entry of each piece.
    """
    xk = mesh.centers if centers is None else centers
    t = np.full(len(mesh.cf_face), 0.5) if split is None else split
    a = mesh.vertices[mesh.cf_vertex]
    b = mesh.vertices[mesh.cf_next_vertex]
    p = a + t[:, None] * (b - a)
    c = xk[mesh.cf_cell]
    n = len(mesh.cf_face)
    pieces = np.empty((2 * n, 3, 2))
    pieces[0::2] = np.stack([c, a, p], axis=1)
    pieces[1::2] = np.stack([c, p, b], axis=1)
    cell = np.repeat(mesh.cf_cell, 2)
    owner = np.empty(2 * n, dtype=np.int64)
    owner[0::2] = mesh.cf_vertex
    owner[1::2] = mesh.cf_next_vertex
    entry = np.repeat(np.arange(n), 2)
    return pieces, cell, owner, entry


def barycentric(mesh: PolytopalMesh):
    """Per-triangle affine data: vertices (nC,3), inverse Jacobians, gradients of lambda."""
    verts = mesh.cf_vertex.reshape(-1, 3)
    X = mesh.vertices[verts]                                # (nC, 3, 2)
    J = np.stack([X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]], axis=2)  # columns e1, e2
    Jinv = np.linalg.inv(J)                                 # rows: grad lambda_1, lambda_2
    grads = np.empty((len(verts), 3, 2))
    grads[:, 1:] = Jinv
    grads[:, 0] = -Jinv.sum(axis=1)
    return verts, X, Jinv, grads


def lambdas_at(points: np.ndarray, cells: np.ndarray, X: np.ndarray, Jinv: np.ndarray) -> np.ndarray:
    """Barycentric coordinates (n, 3) of points in the given triangles."""
    rel = points - X[cells, 0]
    l12 = np.einsum("nij,nj->ni", Jinv[cells], rel)
    return np.column_stack([1.0 - l12.sum(axis=1), l12])
