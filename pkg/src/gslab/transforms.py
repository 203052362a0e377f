"""Generic transforms of gradient discretisations: condensation and mass lumping."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .gd import (GradientDiscretisation, LleStructure, NodeMap, gram, lle_terms,
                 piecewise_constant_map)
from .linalg import NumericalError, pencil_max, pencil_max_oracle
from .quadrature import lp_norm, QuadratureField

BARY_TOL = 1e-12


class TransformError(ValueError):
    pass


# ---------------------------------------------------------------------------
# barycentric condensation

@dataclass(frozen=True, eq=False)
class CondensationRule:
    """Retained dofs plus, for each eliminated dof, a stencil and its weights."""

    retained: np.ndarray
    stencils: dict  # eliminated dof -> (H_i array, beta array)

    def to_json(self) -> str:
        return json.dumps({
            "retained": [int(i) for i in self.retained],
            "stencils": {str(i): {"H": [int(j) for j in H], "beta": [float(b) for b in beta]}
                         for i, (H, beta) in sorted(self.stencils.items())},
        })

    @classmethod
    def from_json(cls, text: str) -> "CondensationRule":
        data = json.loads(text)
        st = {int(i): (np.array(s["H"], dtype=np.int64), np.array(s["beta"], dtype=float))
              for i, s in data["stencils"].items()}
        return cls(np.array(data["retained"], dtype=np.int64), st)


def check_rule(gd: GradientDiscretisation, rule: CondensationRule) -> None:
    n = gd.n_dofs
    kept = np.zeros(n, dtype=bool)
    kept[rule.retained] = True
    if np.any(gd.boundary & ~kept):
        bad = int(np.flatnonzero(gd.boundary & ~kept)[0])
        raise TransformError(f"boundary dof {bad} cannot be eliminated")
    eliminated = np.flatnonzero(~kept)
    if set(map(int, eliminated)) != set(rule.stencils):
        raise TransformError("stencils must be given exactly for the eliminated dofs")
    scale = max(1.0, float(np.abs(gd.points).max()))
    for i in eliminated:
        H, beta = rule.stencils[int(i)]
        if len(H) == 0:
            raise TransformError(f"dof {i}: empty stencil")
        if not np.all(kept[H]):
            raise TransformError(f"dof {i}: stencil uses eliminated dofs")
        if abs(beta.sum() - 1.0) > BARY_TOL:
            raise TransformError(f"dof {i}: weights sum to {beta.sum()!r}, not 1")
        if np.abs(beta @ gd.points[H] - gd.points[i]).max() > BARY_TOL * scale:
            raise TransformError(f"dof {i}: weights do not reproduce its point")


def extension_matrix(gd: GradientDiscretisation, rule: CondensationRule) -> sp.csr_matrix:
    """Matrix of v -> V mapping retained values to all dofs."""
    n, m = gd.n_dofs, len(rule.retained)
    pos = -np.ones(n, dtype=np.int64)
    pos[rule.retained] = np.arange(m)
    rows, cols, vals = list(rule.retained), list(range(m)), [1.0] * m
    for i, (H, beta) in rule.stencils.items():
        rows += [i] * len(H)
        cols += list(pos[H])
        vals += list(beta)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, m))


def ba_regularity(gd: GradientDiscretisation, rule: CondensationRule) -> float:
    """1 + max_i (sum |beta| + max over regions containing i of max_j dist / diam)."""
    if not rule.stencils:
        return 1.0
    terms = lle_terms(gd)
    where: dict[int, list[int]] = {}
    for U, dofs in enumerate(gd.lle.region_dofs):
        for i in dofs:
            where.setdefault(int(i), []).append(U)
    worst = 0.0
    for i, (H, beta) in rule.stencils.items():
        far = np.linalg.norm(gd.points[H] - gd.points[i], axis=1).max()
        regions = where.get(int(i), [])
        ratio = max((far / terms.diam[U] for U in regions), default=0.0)
        worst = max(worst, float(np.abs(beta).sum() + ratio))
    return 1.0 + worst


def barycentric_condense(gd: GradientDiscretisation, rule: CondensationRule,
                         kind: str | None = None) -> GradientDiscretisation:
    if gd.lle is None:
        raise TransformError("condensation requires an LLE discretisation")
    check_rule(gd, rule)
    if not rule.stencils and np.array_equal(rule.retained, np.arange(gd.n_dofs)):
        return gd
    E = extension_matrix(gd, rule)
    Ec = E.tocsr()
    pos = -np.ones(gd.n_dofs, dtype=np.int64)
    pos[rule.retained] = np.arange(len(rule.retained))
    dofs_new, grads_new = [], []
    for dofs, G in zip(gd.lle.region_dofs, gd.lle.region_grads):
        sub = Ec[dofs]
        cols = np.unique(sub.indices)
        dofs_new.append(cols)
        grads_new.append(np.einsum("sci,ij->scj", G, sub[:, cols].toarray()))
    partition = None
    if gd.partition is not None:
        used = gd.partition[gd.partition >= 0]
        if np.all(pos[used] >= 0):
            partition = np.where(gd.partition >= 0, pos[np.maximum(gd.partition, 0)], -1)
    control = None if gd.control is None else replace(gd.control, phi=sp.csr_matrix(gd.control.phi @ E))
    info = dict(gd.info)
    info["reg_ba"] = ba_regularity(gd, rule)
    info["condensation"] = rule
    return replace(
        gd,
        kind=kind or f"{gd.kind}_condensed",
        points=gd.points[rule.retained],
        boundary=gd.boundary[rule.retained],
        pi=gd.pi.compose(E),
        grad=gd.grad.compose(E),
        lle=LleStructure(dofs_new, grads_new),
        partition=partition,
        control=control,
        dof_kind=None if gd.dof_kind is None else gd.dof_kind[rule.retained],
        info=info,
        parent=gd,
    )


# ---------------------------------------------------------------------------
# mass lumping

@dataclass(frozen=True, eq=False)
class LumpingPartition:
    """Assignment of quadrature pieces to dofs (-1 for pieces left out)."""

    piece_dof: np.ndarray

    @classmethod
    def from_regions(cls, regions: Mapping[int, Sequence[int]], n_pieces: int) -> "LumpingPartition":
        piece_dof = -np.ones(n_pieces, dtype=np.int64)
        for i, pieces in regions.items():
            pieces = np.asarray(pieces, dtype=np.int64)
            clash = pieces[piece_dof[pieces] >= 0]
            if clash.size:
                raise TransformError(f"regions overlap: piece {int(clash[0])} assigned twice")
            piece_dof[pieces] = i
        return cls(piece_dof)


def mass_lump(gd: GradientDiscretisation, partition: LumpingPartition,
              kind: str | None = None) -> GradientDiscretisation:
    pd = np.asarray(partition.piece_dof, dtype=np.int64)
    if pd.shape != (gd.quad.n_pieces,):
        raise TransformError("partition does not match the quadrature pieces")
    if pd.max() >= gd.n_dofs:
        raise TransformError("partition refers to unknown dofs")
    return replace(gd, kind=kind or f"{gd.kind}_lumped",
                   pi=piecewise_constant_map(gd.quad, pd, gd.n_dofs),
                   partition=pd, parent=gd)


# ---------------------------------------------------------------------------
# comparison of reconstructions

@dataclass(frozen=True)
class Distance:
    value: float
    exact: bool  # False: Monte-Carlo lower bound


def _same_space(gd: GradientDiscretisation, other: GradientDiscretisation) -> None:
    if gd.n_dofs != other.n_dofs or not np.array_equal(gd.boundary, other.boundary):
        raise TransformError("reconstructions live on different dof spaces")
    if gd.quad is not other.quad or gd.grad is not other.grad:
        raise TransformError("reconstructions must share quadrature and gradient")


def reconstruction_distance(gd: GradientDiscretisation, gd_star: GradientDiscretisation,
                            p: float = 2.0, method: str = "auto", samples: int = 10_000,
                            seed: int = 0) -> Distance:
    """max_v ||Pi v - Pi* v|| / ||grad v||: exact at p=2, sampled lower bound otherwise."""
    _same_space(gd, gd_star)
    diff, star = gd.pi0, gd_star.pi0
    rows = np.concatenate([np.repeat(np.arange(diff.n_rows), np.diff(diff.indptr)),
                           np.repeat(np.arange(star.n_rows), np.diff(star.indptr))])
    cols = np.concatenate([diff.indices, star.indices])
    vals = np.concatenate([diff.data, -star.data])
    dmap = NodeMap.from_triplets(rows, cols, vals, diff.n_rows, diff.n_cols)
    if p == 2.0:
        Md = gram(dmap, gd.quad.weights)
        try:
            lam = (pencil_max_oracle(Md, gd.stiffness) if method == "oracle"
                   else pencil_max(Md, gd.stiffness, method))
            return Distance(float(np.sqrt(lam)), True)
        except NumericalError as exc:
            raise TransformError(f"gradient Gram matrix not positive definite: {exc}") from exc
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(samples):
        v = rng.standard_normal(gd.n_interior)
        num = lp_norm(QuadratureField(gd.quad, dmap.apply(v)), p)
        den = lp_norm(QuadratureField(gd.quad, gd.grad0.apply(v)), p)
        best = max(best, num / den)
    return Distance(best, False)
