"""Scheme builders and the catalogue used by the command line."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

from ..gd import GradientDiscretisation
from ..mesh import PolytopalMesh
from .common import SchemeError
from .hmm import build_hmm, build_sushi
from .lagrange import build_p1
from .mpfa import build_mpfa_o, eliminate_vertices, mpfa_fluxes, conservativity_residual
from .ncp1 import build_ncp1
from .nmfd import build_nmfd
from .vag import build_vag2d


@dataclass(frozen=True)
class SchemeInfo:
    kind: str
    family: str
    mesh_kinds: tuple[str, ...]
    piecewise_constant: bool
    builder: Callable[..., GradientDiscretisation]
    default_mesh: str
    notes: str = ""


CATALOGUE: dict[str, SchemeInfo] = {
    "p1": SchemeInfo("p1", "conforming Lagrange P1", ("simplicial",), False,
                     lambda m, **kw: build_p1(m, 1, **kw), "simplicial"),
    "p2": SchemeInfo("p2", "conforming Lagrange P2", ("simplicial",), False,
                     lambda m, **kw: build_p1(m, 2, **kw), "simplicial"),
    "p1_lumped": SchemeInfo("p1_lumped", "mass-lumped Lagrange P1 (barycentric dual cells)",
                            ("simplicial",), True,
                            lambda m, **kw: build_p1(m, 1, lumped=True, **kw), "simplicial"),
    "ncp1": SchemeInfo("ncp1", "nonconforming P1 (Crouzeix-Raviart)", ("simplicial",), False,
                       build_ncp1, "simplicial"),
    "ncp1_lumped": SchemeInfo("ncp1_lumped", "nonconforming P1 lumped on diamonds",
                              ("simplicial",), True,
                              lambda m, **kw: build_ncp1(m, lumped=True, **kw), "simplicial"),
    "mpfa_o": SchemeInfo("mpfa_o", "multi-point flux approximation, O-scheme (hybrid form)",
                         ("cartesian", "simplicial"), True, build_mpfa_o, "cartesian"),
    "hmm": SchemeInfo("hmm", "hybrid mimetic mixed", ("any polytopal",), True, build_hmm,
                      "cartesian", "default stabilisation: identity on Im(R_K), zeta_D = 1"),
    "sushi": SchemeInfo("sushi", "HMM with all interior faces condensed", ("any polytopal",), True,
                        build_sushi, "cartesian",
                        "interior face values are barycentric combinations of nearby cell values"),
    "nmfd": SchemeInfo("nmfd", "nodal mimetic finite differences", ("any polytopal",), False,
                       build_nmfd, "cartesian",
                       "default weights |K|/#V_K and |s|/2, identity stabilisation, zeta_D = 1"),
    "vag2d": SchemeInfo("vag2d", "vertex approximate gradient (2D)", ("any polytopal",), True,
                        build_vag2d, "cartesian"),
}


def scheme_kinds() -> list[str]:
    return list(CATALOGUE)


def build(kind: str, mesh: PolytopalMesh, **params: Any) -> GradientDiscretisation:
    try:
        info = CATALOGUE[kind]
    except KeyError:
        raise SchemeError(f"unknown scheme {kind!r}; known: {', '.join(CATALOGUE)}") from None
    return info.builder(mesh, **params)


def describe(kind: str) -> str:
    if kind not in CATALOGUE:
        raise SchemeError(f"unknown scheme {kind!r}")
    info = CATALOGUE[kind]
    lines = [
        f"{info.kind}: {info.family}",
        f"  mesh kinds: {', '.join(info.mesh_kinds)}",
        f"  piecewise-constant reconstruction: {'yes' if info.piecewise_constant else 'no'}",
        f"  default mesh family: {info.default_mesh}",
    ]
    if info.notes:
        lines.append(f"  {info.notes}")
    return "\n".join(lines)


__all__ = [
    "CATALOGUE", "SchemeError", "SchemeInfo", "build", "build_hmm", "build_mpfa_o", "build_ncp1",
    "build_nmfd", "build_p1", "build_sushi", "build_vag2d", "conservativity_residual",
    "describe", "eliminate_vertices", "mpfa_fluxes", "scheme_kinds",
]
