"""Piecewise triangle quadrature aligned with integration regions."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

# Six-point rule exact for polynomials of degree 4 on a triangle
# (barycentric coordinates, weights relative to the triangle area).
_A1, _W1 = 0.44594849091596488632, 0.22338158967801146570
_A2, _W2 = 0.09157621350977074346, 0.10995174365532186764
RULE_BARY = np.array([
    [_A1, _A1, 1 - 2 * _A1], [_A1, 1 - 2 * _A1, _A1], [1 - 2 * _A1, _A1, _A1],
    [_A2, _A2, 1 - 2 * _A2], [_A2, 1 - 2 * _A2, _A2], [1 - 2 * _A2, _A2, _A2],
])
RULE_WEIGHTS = np.array([_W1, _W1, _W1, _W2, _W2, _W2])
NODES_PER_PIECE = len(RULE_WEIGHTS)


def triangle_area(tri: np.ndarray) -> np.ndarray:
    """Signed areas of triangles given as (..., 3, 2)."""
    e1 = tri[..., 1, :] - tri[..., 0, :]
    e2 = tri[..., 2, :] - tri[..., 0, :]
    return 0.5 * (e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0])


@dataclass(frozen=True, eq=False)
class Quadrature:
    """Degree-4 rule on a set of triangular pieces.

    Every piece belongs to one mesh cell and one integration region; node ``q``
    lies in piece ``q // 6``.
    """

    pieces: np.ndarray        # (P, 3, 2)
    piece_cell: np.ndarray    # (P,)
    piece_region: np.ndarray  # (P,)
    n_regions: int

    @classmethod
    def from_pieces(cls, pieces, piece_cell, piece_region, n_regions: int | None = None):
        pieces = np.asarray(pieces, dtype=float).reshape(-1, 3, 2)
        area = triangle_area(pieces)
        flip = area < 0
        if flip.any():
            pieces = pieces.copy()
            pieces[flip] = pieces[flip][:, [0, 2, 1]]
        piece_region = np.asarray(piece_region, dtype=np.int64)
        if n_regions is None:
            n_regions = int(piece_region.max()) + 1 if len(piece_region) else 0
        for a in (pieces, piece_region):
            a.setflags(write=False)
        return cls(pieces, np.asarray(piece_cell, dtype=np.int64), piece_region, n_regions)

    @property
    def n_pieces(self) -> int:
        return len(self.pieces)

    @cached_property
    def piece_area(self) -> np.ndarray:
        return triangle_area(self.pieces)

    @cached_property
    def points(self) -> np.ndarray:
        return np.einsum("qk,pkd->pqd", RULE_BARY, self.pieces).reshape(-1, 2)

    @cached_property
    def weights(self) -> np.ndarray:
        return (self.piece_area[:, None] * RULE_WEIGHTS[None, :]).ravel()

    @property
    def n_nodes(self) -> int:
        return self.n_pieces * NODES_PER_PIECE

    @cached_property
    def node_piece(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_pieces), NODES_PER_PIECE)

    @cached_property
    def node_cell(self) -> np.ndarray:
        return self.piece_cell[self.node_piece]

    @cached_property
    def node_region(self) -> np.ndarray:
        return self.piece_region[self.node_piece]

    @cached_property
    def region_measure(self) -> np.ndarray:
        return np.bincount(self.piece_region, self.piece_area, self.n_regions)

    def integrate(self, values: np.ndarray) -> float | np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))

    def sample(self, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        vals = np.asarray(fn(self.points), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("function is not finite at some quadrature node")
        return vals


@dataclass(frozen=True, eq=False)
class QuadratureField:
    """Values (scalar or 2-vector) attached to the nodes of a quadrature."""

    quad: Quadrature
    values: np.ndarray

    def __post_init__(self):
        if len(self.values) != self.quad.n_nodes:
            raise ValueError("field size does not match quadrature")

    def pointwise_abs(self) -> np.ndarray:
        v = self.values
        return np.abs(v) if v.ndim == 1 else np.sqrt(np.sum(v * v, axis=1))


def lp_norm(field: QuadratureField, p: float = 2.0) -> float:
    a = field.pointwise_abs()
    return float(np.dot(field.quad.weights, a ** p) ** (1.0 / p))


def lp_distance(f: QuadratureField, g: QuadratureField | Callable | np.ndarray, p: float = 2.0) -> float:
    """``||f - g||_{L^p}``; ``g`` may be a field on the same layout or a callable."""
    if isinstance(g, QuadratureField):
        if g.quad is not f.quad:
            raise ValueError("fields live on different quadratures")
        gv = g.values
    elif callable(g):
        gv = f.quad.sample(g)
    else:
        gv = np.asarray(g, dtype=float)
    return lp_norm(QuadratureField(f.quad, f.values - gv.reshape(f.values.shape)), p)
