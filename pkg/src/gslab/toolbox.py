"""Polytopal toolbox: cell and face values with a Stokes-consistent gradient.

Toolbox vectors are ordered [cells, faces]; the discrete space imposes zero
values on boundary faces.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh import PolytopalMesh
from .quadrature import Quadrature


@dataclass(frozen=True, eq=False)
class ToolboxVector:
    cell: np.ndarray
    face: np.ndarray

    @classmethod
    def make(cls, mesh: PolytopalMesh, cell, face) -> "ToolboxVector":
        """Build a vector on ``mesh``, forcing boundary face values to zero."""
        cell = np.broadcast_to(np.asarray(cell, dtype=float), (mesh.n_cells,)).copy()
        face = np.broadcast_to(np.asarray(face, dtype=float), (mesh.n_faces,)).copy()
        face[mesh.face_boundary] = 0.0
        return cls(cell, face)

    @classmethod
    def interpolate(cls, mesh: PolytopalMesh, fn: Callable[[np.ndarray], np.ndarray]) -> "ToolboxVector":
        return cls.make(mesh, fn(mesh.centers), fn(mesh.face_mid))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.cell, self.face])

    def check(self, mesh: PolytopalMesh) -> None:
        if self.cell.shape != (mesh.n_cells,) or self.face.shape != (mesh.n_faces,):
            raise ValueError("toolbox vector does not conform to the mesh")
        if np.any(self.face[mesh.face_boundary] != 0.0):
            raise ValueError("toolbox vector has nonzero boundary face values")


def toolbox_reconstruction(mesh: PolytopalMesh, v: ToolboxVector) -> np.ndarray:
    """Cell values of the piecewise-constant reconstruction."""
    v.check(mesh)
    return v.cell.copy()


def toolbox_gradient(mesh: PolytopalMesh, v: ToolboxVector) -> np.ndarray:
    """Per-cell gradient (n_cells, 2); both defining sums are evaluated and compared."""
    v.check(mesh)
    K = mesh.cf_cell
    w = mesh.face_length[mesh.cf_face][:, None] * mesh.cf_normal
    with_k = (v.face[mesh.cf_face] - v.cell[K])[:, None] * w
    without = v.face[mesh.cf_face][:, None] * w
    g1 = np.column_stack([np.bincount(K, with_k[:, c], mesh.n_cells) for c in range(2)])
    g2 = np.column_stack([np.bincount(K, without[:, c], mesh.n_cells) for c in range(2)])
    g1 /= mesh.cell_area[:, None]
    g2 /= mesh.cell_area[:, None]
    scale = 1.0 + np.abs(v.as_array()).max() * np.max(mesh.face_length[mesh.cf_face] / mesh.cell_area[K])
    if np.abs(g1 - g2).max() > 1e-12 * scale:
        raise ArithmeticError("the two forms of the toolbox gradient disagree")
    return g1


def toolbox_norm(mesh: PolytopalMesh, v: ToolboxVector, p: float = 2.0) -> float:
    if not 1.0 < p < np.inf:
        raise ValueError("p must lie in (1, inf)")
    v.check(mesh)
    d = mesh.cf_dist
    jump = (v.face[mesh.cf_face] - v.cell[mesh.cf_cell]) / d
    return float(np.sum(mesh.face_length[mesh.cf_face] * d * np.abs(jump) ** p) ** (1.0 / p))


def cell_quadrature(mesh: PolytopalMesh) -> Quadrature:
    return Quadrature.from_pieces(mesh.cell_triangles(), mesh.cf_cell, mesh.cf_cell, mesh.n_cells)


@dataclass(frozen=True)
class StokesDefect:
    value: float
    bound: float


def stokes_defect(mesh: PolytopalMesh, v: ToolboxVector, psi: Callable, div_psi: Callable,
                  w1inf: float, p: float = 2.0) -> StokesDefect:
    """``|int grad_T v . psi + Pi_T v div psi|`` and its a priori bound.

    ``w1inf`` is ``||psi||_{W^{1,inf}}`` (supplied with the field).
    """
    quad = cell_quadrature(mesh)
    ps = quad.sample(psi).reshape(-1, 2)
    dv = quad.sample(div_psi).reshape(-1)
    g = toolbox_gradient(mesh, v)[quad.node_cell]
    c = v.cell[quad.node_cell]
    val = abs(float(quad.integrate(np.einsum("qi,qi->q", g, ps) + c * dv)))
    q = (p - 1.0) / p
    bound = (2.0 * mesh.area) ** q * w1inf * toolbox_norm(mesh, v, p) * mesh.h_M
    return StokesDefect(val, bound)


@dataclass(frozen=True, eq=False)
class ToolboxMatrices:
    """Toolbox operators on full [cells, faces] vectors."""

    pi: sp.csr_matrix        # (nC, nT)
    grad: tuple              # two (nC, nT) matrices
    norm: sp.csr_matrix      # (nT, nT) quadratic form of the squared p=2 norm
    interior: np.ndarray     # indices of X_{T,0} inside [cells, faces]


@lru_cache(maxsize=32)
def _matrices(mesh: PolytopalMesh) -> ToolboxMatrices:
    nC, nF = mesh.n_cells, mesh.n_faces
    nT = nC + nF
    K = mesh.cf_cell
    fcol = nC + mesh.cf_face
    pi = sp.csr_matrix((np.ones(nC), (np.arange(nC), np.arange(nC))), shape=(nC, nT))
    w = mesh.face_length[mesh.cf_face][:, None] * mesh.cf_normal / mesh.cell_area[K][:, None]
    grads = tuple(sp.csr_matrix((np.concatenate([w[:, c], -w[:, c]]),
                                 (np.concatenate([K, K]), np.concatenate([fcol, K]))),
                                shape=(nC, nT)) for c in range(2))
    # ||v||^2 = sum |s|/d (v_s - v_K)^2
    coef = mesh.face_length[mesh.cf_face] / mesh.cf_dist
    rows = np.arange(len(K))
    J = sp.csr_matrix((np.concatenate([np.ones(len(K)), -np.ones(len(K))]),
                       (np.concatenate([rows, rows]), np.concatenate([fcol, K]))),
                      shape=(len(K), nT))
    norm = (J.T @ sp.diags(coef) @ J).tocsr()
    interior = np.concatenate([np.arange(nC), nC + np.flatnonzero(~mesh.face_boundary)])
    return ToolboxMatrices(pi, grads, norm, interior)


def toolbox_matrices(mesh: PolytopalMesh) -> ToolboxMatrices:
    return _matrices(mesh)
