"""Quality measures of gradient discretisations (exact at p = 2).

All extremal quantities are generalised eigenvalues of symmetric pencils
built from the Gram matrices of the reconstructions on X_{D,0}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .gd import GradientDiscretisation, NodeMap, gram, interpolate
from .linalg import NumericalError, pencil_max, pencil_max_oracle, spd_solve, spd_solve_oracle
from .mesh import PolytopalMesh
from .quadrature import QuadratureField, lp_norm
from .toolbox import toolbox_matrices

PI = np.pi


# ---------------------------------------------------------------------------
# test banks

def _sin(x):
    return np.sin(PI * x[:, 0]) * np.sin(PI * x[:, 1])


def _grad_sin(x):
    return PI * np.column_stack([np.cos(PI * x[:, 0]) * np.sin(PI * x[:, 1]),
                                 np.sin(PI * x[:, 0]) * np.cos(PI * x[:, 1])])


def _bump(x):
    return (16.0 * x[:, 0] * (1 - x[:, 0]) * x[:, 1] * (1 - x[:, 1])) ** 2


def _grad_bump(x):
    a = x[:, 0] * (1 - x[:, 0])
    b = x[:, 1] * (1 - x[:, 1])
    return 512.0 * (a * b)[:, None] * np.column_stack([(1 - 2 * x[:, 0]) * b, a * (1 - 2 * x[:, 1])])


def _affine(x):
    return 0.5 + 2.0 * x[:, 0] - x[:, 1]


def _grad_affine(x):
    return np.tile([2.0, -1.0], (len(x), 1))


TEST_FUNCTIONS: dict[str, tuple[Callable, Callable]] = {
    "trig": (_sin, _grad_sin),
    "bump": (_bump, _grad_bump),
    "affine": (_affine, _grad_affine),
}

TEST_FIELDS: dict[str, tuple[Callable, Callable]] = {
    "trig": (lambda x: np.column_stack([np.sin(PI * x[:, 1]), np.sin(PI * x[:, 0])]),
             lambda x: np.zeros(len(x))),
    "poly": (lambda x: np.column_stack([x[:, 0] ** 2 * x[:, 1], x[:, 1] - x[:, 0] * x[:, 1] ** 2]),
             lambda x: np.ones(len(x))),
    "swirl": (lambda x: np.column_stack([np.cos(PI * x[:, 0]) * np.sin(PI * x[:, 1]),
                                         x[:, 0] * x[:, 1]]),
              lambda x: -PI * np.sin(PI * x[:, 0]) * np.sin(PI * x[:, 1]) + x[:, 0]),
}


# ---------------------------------------------------------------------------
# coercivity, consistency, limit-conformity

def coercivity_constant(gd: GradientDiscretisation, method: str = "auto") -> float:
    """C_D = max ||Pi_D v|| / ||grad_D v|| over X_{D,0}."""
    if gd.n_interior == 0:
        return 0.0
    try:
        if method == "oracle":
            return float(np.sqrt(pencil_max_oracle(gd.mass, gd.stiffness)))
        return float(np.sqrt(pencil_max(gd.mass, gd.stiffness, method)))
    except (NumericalError, np.linalg.LinAlgError) as exc:
        raise NumericalError(f"{gd.kind}: gradient Gram matrix is not definite ({exc})") from exc


@dataclass(frozen=True)
class ConsistencyDefect:
    interpolant: float   # ||Pi v - phi|| + ||grad v - grad phi|| at the interpolant
    ls: float            # min_u sqrt(||Pi u - phi||^2 + ||grad u - grad phi||^2)

    @property
    def lower(self) -> float:
        return self.ls

    @property
    def upper(self) -> float:
        return min(np.sqrt(2.0) * self.ls, self.interpolant)


def consistency_defect(gd: GradientDiscretisation, phi: Callable, grad_phi: Callable,
                       method: str = "auto") -> ConsistencyDefect:
    quad = gd.quad
    f = quad.sample(phi).reshape(-1)
    g = quad.sample(grad_phi).reshape(-1, 2)
    v = interpolate(gd, phi)
    pv, gv = gd.pi.apply(v), gd.grad.apply(v)
    interp = (lp_norm(QuadratureField(quad, pv - f)) + lp_norm(QuadratureField(quad, gv - g)))
    if gd.n_interior == 0:
        ls = float(np.sqrt(lp_norm(QuadratureField(quad, f)) ** 2 + lp_norm(QuadratureField(quad, g)) ** 2))
        return ConsistencyDefect(interp, ls)
    P = gd.pi_matrix()
    Gx, Gy = gd.grad_matrices()
    w = quad.weights
    c = P.T @ (w * f) + Gx.T @ (w * g[:, 0]) + Gy.T @ (w * g[:, 1])
    u = spd_solve((gd.mass + gd.stiffness).tocsc(), c, "dense" if method == "oracle" else method)
    ls2 = np.dot(w, (P @ u - f) ** 2) + np.dot(w, (Gx @ u - g[:, 0]) ** 2) + np.dot(w, (Gy @ u - g[:, 1]) ** 2)
    return ConsistencyDefect(float(interp), float(np.sqrt(max(ls2, 0.0))))


def stokes_residual(gd: GradientDiscretisation, psi: Callable, div_psi: Callable) -> np.ndarray:
    """r_i = int grad_D e_i . psi + Pi_D e_i div psi for interior dofs."""
    w = gd.quad.weights
    ps = gd.quad.sample(psi).reshape(-1, 2)
    dv = gd.quad.sample(div_psi).reshape(-1)
    Gx, Gy = gd.grad_matrices()
    return Gx.T @ (w * ps[:, 0]) + Gy.T @ (w * ps[:, 1]) + gd.pi_matrix().T @ (w * dv)


def dual_norm(gd: GradientDiscretisation, r: np.ndarray, method: str = "auto") -> float:
    """sqrt(r^T K^{-1} r): the norm of a functional against ||grad_D .||."""
    if gd.n_interior == 0:
        return 0.0
    if method == "oracle":
        z = spd_solve_oracle(gd.stiffness, r)
    else:
        z = spd_solve(gd.stiffness, r, method)
    return float(np.sqrt(max(float(r @ z), 0.0)))


def limit_conformity_defect(gd: GradientDiscretisation, psi: Callable, div_psi: Callable,
                            method: str = "auto") -> float:
    """W_D(psi), the exact p=2 dual norm of the discrete Stokes residual."""
    return dual_norm(gd, stokes_residual(gd, psi, div_psi), method)


# ---------------------------------------------------------------------------
# controls

@dataclass(frozen=True)
class ControlReport:
    phi_norm: float
    omega_pi: float
    omega_grad: float
    omega_grad_exact_zero: bool

    @property
    def omega_grad_status(self) -> str:
        return "exactly-zero" if self.omega_grad_exact_zero else f"bounded-by({self.omega_grad:.6g})"


def control_report(gd: GradientDiscretisation, toolbox: PolytopalMesh | None = None,
                   phi: sp.spmatrix | None = None, method: str = "auto") -> ControlReport:
    """Norm of the control and its reconstruction/gradient discrepancies.

    ``phi`` maps full dof vectors of ``gd`` to full toolbox vectors
    [cells, faces]; both default to the scheme's own control.
    """
    if toolbox is None or phi is None:
        if gd.control is None:
            raise ValueError(f"{gd.kind} provides no control")
        toolbox, phi = gd.control.toolbox, gd.control.phi
    nT = toolbox.n_cells + toolbox.n_faces
    if phi.shape != (nT, gd.n_dofs):
        raise ValueError(f"control has shape {phi.shape}, expected {(nT, gd.n_dofs)}")
    if toolbox.n_cells != gd.mesh.n_cells:
        raise ValueError("toolbox and discretisation must share their cells")
    tm = toolbox_matrices(toolbox)
    phi0 = sp.csr_matrix(phi)[:, gd.interior]
    leak = phi0[toolbox.n_cells + np.flatnonzero(toolbox.face_boundary)]
    if leak.nnz and abs(leak).max() > 1e-14:
        raise ValueError("control does not map into the toolbox space (nonzero boundary faces)")
    phiT = phi0[tm.interior]
    N = tm.norm[tm.interior][:, tm.interior]
    K = gd.stiffness
    pm = (lambda A: pencil_max_oracle(A, K)) if method == "oracle" else (lambda A: pencil_max(A, K, method))
    phi_norm = float(np.sqrt(pm((phiT.T @ N @ phiT).tocsr())))

    # Pi_D - Pi_T Phi at the quadrature nodes
    nodes = gd.quad.n_nodes
    sel = sp.csr_matrix((np.ones(nodes), (np.arange(nodes), gd.quad.node_cell)),
                        shape=(nodes, toolbox.n_cells))
    diff = (gd.pi_matrix() - sel @ phi0[: toolbox.n_cells]).tocoo()
    if diff.nnz == 0 or np.abs(diff.data).max() == 0.0:
        omega_pi = 0.0
    else:
        dmap = NodeMap.from_triplets(diff.row, diff.col, diff.data, nodes, gd.n_interior)
        omega_pi = float(np.sqrt(pm(gram(dmap, gd.quad.weights))))

    # per-cell functionals int_K grad_D e_j - |K| grad_T Phi e_j
    w = gd.quad.weights
    cellint = sp.csr_matrix((w, (gd.quad.node_cell, np.arange(nodes))), shape=(toolbox.n_cells, nodes))
    area = sp.diags(toolbox.cell_area)
    Gx, Gy = gd.grad_matrices()
    C = [(cellint @ G - area @ tm.grad[c] @ phi0).tocsr() for c, G in enumerate((Gx, Gy))]
    tol = 1e-12 * toolbox.cell_area
    worst = np.zeros(toolbox.n_cells)
    for Cc in C:
        Cc = Cc.tocoo()
        np.maximum.at(worst, Cc.row, np.abs(Cc.data))
    exact = bool(np.all(worst <= tol))
    if exact:
        return ControlReport(phi_norm, omega_pi, 0.0, True)
    # upper bound: sum over cells of the dual norms of the per-cell functionals
    Cs = sp.vstack([C[0], C[1]]).tocsr()
    Z = spd_solve(K, Cs.T.toarray())
    bound = 0.0
    nC = toolbox.n_cells
    for k in range(nC):
        rows = [k, nC + k]
        Mk = Cs[rows] @ Z[:, rows]
        bound += float(np.sqrt(max(np.linalg.eigvalsh(0.5 * (Mk + Mk.T))[-1], 0.0)))
    return ControlReport(phi_norm, omega_pi, bound, False)


def poincare_constant(mesh: PolytopalMesh, method: str = "auto") -> float:
    """max ||Pi_T v|| / ||v||_{T,0,2} over the toolbox space."""
    tm = toolbox_matrices(mesh)
    mass = sp.diags(np.concatenate([mesh.cell_area, np.zeros(mesh.n_faces)]))
    sub = tm.interior
    return float(np.sqrt(pencil_max(mass.tocsr()[sub][:, sub], tm.norm[sub][:, sub], method)))


# ---------------------------------------------------------------------------
# bundles

@dataclass
class GdMetrics:
    C_D: float | None = None
    S_D: dict = field(default_factory=dict)     # name -> {interpolant, ls_lo, ls_hi}
    W_D: dict = field(default_factory=dict)     # name -> value
    reg_lle: float | None = None
    reg_ba: float | None = None
    zeta: float | None = None
    omega: float | None = None

    def records(self, scheme: str, mesh_id: str, level: int) -> list[dict]:
        out = []

        def add(q, v):
            if v is not None:
                out.append({"scheme": scheme, "mesh": mesh_id, "level": level,
                            "quantity": q, "value": float(v)})
        add("C_D", self.C_D)
        for name, d in sorted(self.S_D.items()):
            for key, val in d.items():
                add(f"S_D.{name}.{key}", val)
        for name, val in sorted(self.W_D.items()):
            add(f"W_D.{name}", val)
        add("reg_LLE", self.reg_lle)
        add("reg_Ba", self.reg_ba)
        add("zeta_D", self.zeta)
        add("omega", self.omega)
        return out


def gd_metrics(gd: GradientDiscretisation, which=("C_D", "S_D", "W_D", "reg_LLE", "omega"),
               functions=None, fields=None) -> GdMetrics:
    from .gd import lle_regularity
    from .transforms import reconstruction_distance
    functions = TEST_FUNCTIONS if functions is None else functions
    fields = TEST_FIELDS if fields is None else fields
    m = GdMetrics()
    if "C_D" in which:
        m.C_D = coercivity_constant(gd)
    if "S_D" in which:
        for name, (phi, gphi) in functions.items():
            d = consistency_defect(gd, phi, gphi)
            m.S_D[name] = {"interpolant": d.interpolant, "ls_lo": d.lower, "ls_hi": np.sqrt(2) * d.ls}
    if "W_D" in which:
        for name, (psi, dpsi) in fields.items():
            m.W_D[name] = limit_conformity_defect(gd, psi, dpsi)
    if "reg_LLE" in which and gd.lle is not None:
        m.reg_lle = lle_regularity(gd)
    m.reg_ba = gd.info.get("reg_ba")
    m.zeta = gd.info.get("zeta")
    if "omega" in which and gd.partition is not None and gd.parent is not None \
            and gd.parent.grad is gd.grad:
        m.omega = reconstruction_distance(gd, gd.parent).value
    return m
