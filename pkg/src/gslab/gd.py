"""Gradient discretisations sampled on region-aligned quadrature.

A :class:`GradientDiscretisation` stores the reconstruction ``Pi_D`` and the
gradient ``grad_D`` as sparse linear maps from the full dof vector (interior
and boundary dofs) to values at quadrature nodes. Working matrices on the
interior space ``X_{D,0}`` are derived lazily and cached.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .kernels import gram_triplets
from .mesh import PolytopalMesh
from .quadrature import Quadrature, QuadratureField, lp_norm


# ---------------------------------------------------------------------------
# sparse node maps

@dataclass(frozen=True, eq=False)
class NodeMap:
    """CSR map from dof vectors to ``nc``-component values at quadrature nodes."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray  # (nnz, nc)
    n_cols: int

    @classmethod
    def from_triplets(cls, rows, cols, vals, n_rows: int, n_cols: int) -> "NodeMap":
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=float)
        vals = vals.reshape(len(rows), -1 if len(rows) else (vals.shape[-1] if vals.ndim == 2 else 1))
        key = rows * n_cols + cols
        uniq, inv = np.unique(key, return_inverse=True)
        data = np.zeros((len(uniq), vals.shape[1]))
        np.add.at(data, inv, vals)
        urows = uniq // n_cols
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(urows, minlength=n_rows), out=indptr[1:])
        return cls(indptr, (uniq % n_cols).astype(np.int64), np.ascontiguousarray(data), int(n_cols))

    @property
    def n_rows(self) -> int:
        return len(self.indptr) - 1

    @property
    def n_comp(self) -> int:
        return self.data.shape[1]

    @cached_property
    def _components(self) -> tuple[sp.csr_matrix, ...]:
        shape = (self.n_rows, self.n_cols)
        return tuple(sp.csr_matrix((self.data[:, c], self.indices, self.indptr), shape=shape)
                     for c in range(self.n_comp))

    def component(self, c: int) -> sp.csr_matrix:
        return self._components[c]

    def apply(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[0] != self.n_cols:
            raise ValueError(f"dof vector has length {u.shape[0]}, expected {self.n_cols}")
        out = np.column_stack([m @ u for m in self._components])
        return out[:, 0] if self.n_comp == 1 else out

    def compose(self, E: sp.spmatrix) -> "NodeMap":
        """The map ``u -> self(E u)``."""
        E = sp.csr_matrix(E)
        rows, cols, vals = [], [], []
        for c, m in enumerate(self._components):
            coo = (m @ E).tocoo()
            v = np.zeros((coo.nnz, self.n_comp))
            v[:, c] = coo.data
            rows.append(coo.row)
            cols.append(coo.col)
            vals.append(v)
        return NodeMap.from_triplets(np.concatenate(rows), np.concatenate(cols),
                                     np.vstack(vals), self.n_rows, E.shape[1])

    def row_abs_sum(self) -> np.ndarray:
        s = np.abs(self.data).sum(axis=1)
        return np.add.reduceat(np.append(s, 0.0), self.indptr[:-1]) * (np.diff(self.indptr) > 0)

    def row_sum(self) -> np.ndarray:
        s = self.data.sum(axis=1)
        return np.add.reduceat(np.append(s, 0.0), self.indptr[:-1]) * (np.diff(self.indptr) > 0)


def gram(nm: NodeMap, coef: np.ndarray) -> sp.csr_matrix:
    """``sum_q R_q^T coef_q R_q`` over the quadrature nodes."""
    nc = nm.n_comp
    coef = np.ascontiguousarray(np.asarray(coef, dtype=float).reshape(nm.n_rows, nc, nc))
    r, c, v = gram_triplets(nm.indptr, nm.indices, nm.data, coef)
    n = nm.n_cols
    return sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()


# ---------------------------------------------------------------------------
# LLE data

@dataclass(frozen=True, eq=False)
class LleStructure:
    """Per-region dof sets and local gradient matrices.

    ``region_grads[U]`` has shape (S, 2, |I_U|): the local matrix at S sample
    points of U. One sample suffices for constant matrices; affine matrices
    (P2) are sampled at the region's vertices, where the sup over U is reached.
    """

    region_dofs: list
    region_grads: list

    @property
    def n_regions(self) -> int:
        return len(self.region_dofs)


def hypercube_norm(G: np.ndarray) -> float:
    """``max_{|xi|_inf <= 1} |G xi|_2`` for a 2 x m matrix, computed exactly.

    ``max_xi |G xi| = max_theta sum_j |c_j . e_theta|``; the sign pattern is
    constant between consecutive zeros of ``c_j . e_theta``, so checking one
    direction per arc enumerates every candidate vertex of the hypercube.
    """
    cols = G.T[np.abs(G).sum(axis=0) > 0]
    if len(cols) == 0:
        return 0.0
    ang = np.arctan2(cols[:, 1], cols[:, 0]) + np.pi / 2
    brk = np.sort(np.mod(np.concatenate([ang, ang + np.pi]), 2 * np.pi))
    mids = 0.5 * (brk + np.roll(brk, -1))
    mids[-1] = 0.5 * (brk[-1] + brk[0] + 2 * np.pi)
    e = np.column_stack([np.cos(mids), np.sin(mids)])
    signs = np.sign(e @ cols.T)
    return float(np.max(np.linalg.norm(signs @ cols, axis=1)))


# ---------------------------------------------------------------------------
# the discretisation

@dataclass(frozen=True, eq=False)
class Control:
    """Linear map from full dof vectors to toolbox vectors [cells, faces]."""

    toolbox: PolytopalMesh
    phi: sp.csr_matrix


@dataclass(frozen=True, eq=False)
class GradientDiscretisation:
    kind: str
    mesh: PolytopalMesh
    points: np.ndarray            # (N, 2) approximation points x_i
    boundary: np.ndarray          # (N,) bool, dofs in I_dOmega
    quad: Quadrature
    pi: NodeMap                   # nc = 1
    grad: NodeMap                 # nc = 2
    lle: LleStructure | None = None
    partition: np.ndarray | None = None   # piece -> dof (-1: empty) when piecewise constant
    control: Control | None = None
    dof_kind: np.ndarray | None = None
    info: dict[str, Any] = field(default_factory=dict)
    parent: "GradientDiscretisation | None" = None

    @property
    def n_dofs(self) -> int:
        return len(self.points)

    @property
    def piecewise_constant(self) -> bool:
        return self.partition is not None

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @property
    def n_interior(self) -> int:
        return len(self.interior)

    @cached_property
    def extension(self) -> sp.csr_matrix:
        """Injection of interior vectors into full dof vectors."""
        n, m = self.n_dofs, self.n_interior
        return sp.csr_matrix((np.ones(m), (self.interior, np.arange(m))), shape=(n, m))

    def full(self, u_int: np.ndarray) -> np.ndarray:
        u = np.zeros(self.n_dofs)
        u[self.interior] = u_int
        return u

    @cached_property
    def pi0(self) -> NodeMap:
        return self.pi.compose(self.extension)

    @cached_property
    def grad0(self) -> NodeMap:
        return self.grad.compose(self.extension)

    @cached_property
    def mass(self) -> sp.csr_matrix:
        """Gram matrix of Pi_D on X_{D,0}."""
        return gram(self.pi0, self.quad.weights)

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Gram matrix of grad_D on X_{D,0}."""
        return self.stiffness_with(None)

    def stiffness_with(self, A: np.ndarray | None) -> sp.csr_matrix:
        w = self.quad.weights
        if A is None:
            coef = w[:, None, None] * np.eye(2)[None]
        else:
            coef = w[:, None, None] * np.asarray(A, dtype=float)
        return gram(self.grad0, coef)

    def pi_matrix(self) -> sp.csr_matrix:
        return self.pi0.component(0)

    def grad_matrices(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        return self.grad0.component(0), self.grad0.component(1)

    def describe(self) -> str:
        return f"{self.kind} on {self.mesh.label}: {self.n_dofs} dofs ({self.n_interior} interior)"


# ---------------------------------------------------------------------------
# operations

def interpolate(gd: GradientDiscretisation, phi: Callable[[np.ndarray], np.ndarray],
                zero_boundary: bool = True) -> np.ndarray:
    """Dof vector with ``v_i = phi(x_i)``; boundary entries zeroed by default."""
    v = np.asarray(phi(gd.points), dtype=float).reshape(gd.n_dofs).copy()
    if not np.all(np.isfinite(v)):
        bad = int(np.flatnonzero(~np.isfinite(v))[0])
        raise ValueError(f"phi is not finite at approximation point {bad}")
    if zero_boundary:
        v[gd.boundary] = 0.0
    return v


def evaluate(gd: GradientDiscretisation, u: np.ndarray) -> tuple[QuadratureField, QuadratureField]:
    """``(Pi_D u, grad_D u)`` at the quadrature nodes; ``u`` is a full dof vector."""
    u = np.asarray(u, dtype=float)
    if u.shape != (gd.n_dofs,):
        raise ValueError(f"expected a dof vector of length {gd.n_dofs}, got shape {u.shape}")
    return QuadratureField(gd.quad, gd.pi.apply(u)), QuadratureField(gd.quad, gd.grad.apply(u))


def _require_lle(gd: GradientDiscretisation) -> LleStructure:
    if gd.lle is None:
        raise ValueError(f"{gd.kind} carries no LLE structure")
    return gd.lle


def _point_triangle_distance(x: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Distances from points (n, 2) to triangles (t, 3, 2): array (n, t)."""
    best = np.full((len(x), len(tri)), np.inf)
    inside = np.ones((len(x), len(tri)), dtype=bool)
    for k in range(3):
        a = tri[:, k]
        b = tri[:, (k + 1) % 3]
        ab = b - a
        ax = x[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("nti,ti->nt", ax, ab) / np.einsum("ti,ti->t", ab, ab), 0.0, 1.0)
        proj = a[None] + t[..., None] * ab[None]
        best = np.minimum(best, np.linalg.norm(x[:, None, :] - proj, axis=2))
        cross = ab[None, :, 0] * ax[..., 1] - ab[None, :, 1] * ax[..., 0]
        inside &= cross >= 0
    best[inside] = 0.0
    return best


@dataclass(frozen=True)
class LleTerms:
    diam: np.ndarray       # per region
    gnorm: np.ndarray      # ||G_U||_inf
    maxdist: np.ndarray    # max_{i in I_U} dist(x_i, U)
    alpha_sup: float       # max over nodes of sum_i |alpha_i|

    @property
    def value(self) -> float:
        return float(np.max(self.gnorm + self.maxdist / self.diam) + self.alpha_sup)


def lle_terms(gd: GradientDiscretisation) -> LleTerms:
    lle = _require_lle(gd)
    quad = gd.quad
    order = np.argsort(quad.piece_region, kind="stable")
    starts = np.searchsorted(quad.piece_region[order], np.arange(lle.n_regions + 1))
    diam = np.zeros(lle.n_regions)
    gnorm = np.zeros(lle.n_regions)
    maxdist = np.zeros(lle.n_regions)
    for U in range(lle.n_regions):
        tri = quad.pieces[order[starts[U]:starts[U + 1]]]
        pts = tri.reshape(-1, 2)
        diam[U] = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1).max())
        G = lle.region_grads[U]
        gnorm[U] = diam[U] * max(hypercube_norm(g) for g in G)
        dofs = lle.region_dofs[U]
        if len(dofs):
            maxdist[U] = _point_triangle_distance(gd.points[dofs], tri).min(axis=1).max()
    return LleTerms(diam, gnorm, maxdist, float(gd.pi.row_abs_sum().max()))


def lle_regularity(gd: GradientDiscretisation) -> float:
    """LLE regularity: max_U(||G_U|| + max dist(x_i,U)/diam U) + sup sum |alpha_i|."""
    return lle_terms(gd).value


@dataclass(frozen=True)
class BoundCheck:
    residual: np.ndarray   # per region, max over its nodes
    bound: np.ndarray      # per region

    @property
    def ok(self) -> bool:
        return bool(np.all(self.residual <= self.bound * (1 + 1e-12) + 1e-13))


def lle_gradient_bound_check(gd: GradientDiscretisation, phi: Callable, grad_phi: Callable,
                             w2inf: float) -> BoundCheck:
    """Compare ``|G_U v - grad phi|`` with the local LLE estimate on every region."""
    terms = lle_terms(gd)
    v = interpolate(gd, phi, zero_boundary=False)
    diff = gd.grad.apply(v) - gd.quad.sample(grad_phi)
    res = np.zeros(gd.quad.n_regions)
    np.maximum.at(res, gd.quad.node_region, np.linalg.norm(diff, axis=1))
    bound = (1 + 0.5 * terms.gnorm * (terms.maxdist / terms.diam + 1) ** 2) * terms.diam * w2inf
    return BoundCheck(res, bound)


def check_partition_of_unity(gd: GradientDiscretisation) -> float:
    """max_q |sum_i alpha_i(x_q) - 1|."""
    return float(np.max(np.abs(gd.pi.row_sum() - 1.0)))


def region_constant_map(quad: Quadrature, region_dofs: Sequence[np.ndarray],
                        region_mats: Sequence[np.ndarray], n_cols: int) -> NodeMap:
    """Node map whose value on region U is ``region_mats[U] @ u[region_dofs[U]]``.

    ``region_mats[U]`` has shape (nc, |I_U|).
    """
    node_region = quad.node_region
    sizes = np.array([len(d) for d in region_dofs])
    nc = region_mats[0].shape[0] if len(region_mats) else 1
    rows, cols, vals = [], [], []
    for m in np.unique(sizes):
        if m == 0:
            continue
        regs = np.flatnonzero(sizes == m)
        D = np.array([region_dofs[U] for U in regs]).reshape(len(regs), m)
        G = np.array([region_mats[U] for U in regs]).reshape(len(regs), nc, m)
        lookup = -np.ones(quad.n_regions, dtype=np.int64)
        lookup[regs] = np.arange(len(regs))
        nodes = np.flatnonzero(lookup[node_region] >= 0)
        loc = lookup[node_region[nodes]]
        rows.append(np.repeat(nodes, m))
        cols.append(D[loc].ravel())
        vals.append(np.transpose(G[loc], (0, 2, 1)).reshape(-1, nc))
    if not rows:
        return NodeMap.from_triplets([], [], np.zeros((0, nc)), quad.n_nodes, n_cols)
    return NodeMap.from_triplets(np.concatenate(rows), np.concatenate(cols), np.vstack(vals),
                                 quad.n_nodes, n_cols)


def piecewise_constant_map(quad: Quadrature, piece_dof: np.ndarray, n_cols: int) -> NodeMap:
    """Reconstruction equal to ``u_i`` on every piece assigned to dof ``i``."""
    nodes = np.arange(quad.n_nodes)
    dof = np.asarray(piece_dof)[quad.node_piece]
    keep = dof >= 0
    return NodeMap.from_triplets(nodes[keep], dof[keep], np.ones(int(keep.sum())),
                                 quad.n_nodes, n_cols)


def lp_norm_of(gd: GradientDiscretisation, u: np.ndarray, p: float = 2.0) -> tuple[float, float]:
    """``(||Pi_D u||_p, ||grad_D u||_p)`` for a full dof vector."""
    a, b = evaluate(gd, u)
    return lp_norm(a, p), lp_norm(b, p)
