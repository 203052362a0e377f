"""Gradient schemes for linear and semilinear diffusion, errors and convergence studies."""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .gd import GradientDiscretisation
from .linalg import DENSE_LIMIT, NumericalError
from .measures import coercivity_constant, consistency_defect, limit_conformity_defect
from .mesh import build_cartesian, build_simplicial, perturb
from .problems import DiffusionProblem
from .quadrature import QuadratureField, lp_norm

SOLVE_TOL = 1e-10
NEWTON_TOL = 1e-10
NEWTON_MAXITER = 50
LINESEARCH_FLOOR = 2.0 ** -20
CG_MAXITER = 20000

# errors that abort a study with a partial table; anything else propagates
SOLVE_FAILURES = (NumericalError, ArithmeticError, np.linalg.LinAlgError)

CSV_COLUMNS = ("level", "h", "dofs", "errL2", "errH1", "orderL2", "orderH1",
               "C_D", "W_D", "S_D_lo", "S_D_hi", "wall_ms")


@dataclass(frozen=True, eq=False)
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofs: np.ndarray      # full-vector indices of the unknowns

    @property
    def size(self) -> int:
        return len(self.rhs)


def _tensor_at_nodes(gd: GradientDiscretisation, problem: DiffusionProblem) -> np.ndarray:
    A = problem.tensor(gd.quad.points)
    if not np.allclose(A, A.transpose(0, 2, 1), rtol=0, atol=1e-12 * np.abs(A).max()):
        raise ValueError(f"{problem.name}: diffusion tensor is not symmetric")
    lam = np.linalg.eigvalsh(A)
    if lam[:, 0].min() <= 0:
        q = int(np.argmin(lam[:, 0]))
        raise ValueError(f"{problem.name}: diffusion tensor not positive definite at {gd.quad.points[q]}")
    return A


def assemble_linear(gd: GradientDiscretisation, problem: DiffusionProblem) -> SparseSystem:
    K = gd.stiffness_with(_tensor_at_nodes(gd, problem))
    f = gd.quad.sample(problem.f).reshape(-1)
    b = gd.pi_matrix().T @ (gd.quad.weights * f)
    return SparseSystem(K.tocsr(), np.asarray(b), gd.interior)


def pcg(A: sp.spmatrix, b: np.ndarray, tol: float = SOLVE_TOL, maxiter: int = CG_MAXITER) -> np.ndarray:
    """Conjugate gradients with Jacobi preconditioning, to ``||r|| <= tol ||b||``."""
    d = A.diagonal()
    if np.any(d <= 0):
        raise NumericalError("matrix has a nonpositive diagonal entry")
    M = spla.LinearOperator(A.shape, matvec=lambda r: r / d, dtype=float)
    count = 0

    def tick(_):
        nonlocal count
        count += 1

    x, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=maxiter, M=M, callback=tick)
    if info != 0:
        res = np.linalg.norm(b - A @ x) / np.linalg.norm(b)
        raise NumericalError(f"CG did not converge after {count} iterations (relative residual {res:.3e})")
    return x


def solve_linear(system: SparseSystem, method: str = "auto") -> np.ndarray:
    """Solution on the unknowns; relative residual <= 1e-10 is checked on return."""
    A, b = system.matrix, system.rhs
    n = system.size
    if n == 0:
        return np.zeros(0)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros(n)
    if method == "auto":
        method = "dense" if n < DENSE_LIMIT else "cg"
    if method == "dense":
        try:
            x = sla.cho_solve(sla.cho_factor(A.toarray()), b)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"Cholesky failed: {exc}") from exc
    elif method == "cg":
        x = pcg(A, b)
    else:
        raise ValueError(f"unknown method {method!r}")
    res = np.linalg.norm(b - A @ x) / nb
    if not res <= SOLVE_TOL * 10:
        raise NumericalError(f"linear solve residual {res:.3e} exceeds tolerance")
    return x


@dataclass(frozen=True)
class NewtonResult:
    u: np.ndarray          # unknowns
    iterations: int
    residual: float
    history: tuple[float, ...] = ()


def solve_semilinear(gd: GradientDiscretisation, problem: DiffusionProblem, form: str = "A",
                     u0: np.ndarray | None = None) -> NewtonResult:
    """Newton with residual-norm halving line search.

    Form A integrates ``beta(Pi_D u) Pi_D v``; form B uses ``Pi_D beta(u)``
    with ``beta`` applied to the dof values.
    """
    if form not in ("A", "B"):
        raise ValueError("form must be 'A' or 'B'")
    system = assemble_linear(gd, problem)
    K, b = system.matrix, system.rhs
    if problem.beta is None:
        return NewtonResult(solve_linear(system), 0, 0.0)
    beta, dbeta = problem.beta, problem.dbeta
    if dbeta is None:
        raise ValueError("semilinear solve needs the derivative of beta")
    w = gd.quad.weights
    P0 = gd.pi_matrix()
    Pfull = gd.pi.component(0)
    WP0 = (sp.diags(w) @ P0).tocsr()
    PtWP = (P0.T @ WP0).tocsr()
    n = system.size

    def residual(u):
        if form == "A":
            return K @ u + P0.T @ (w * beta(P0 @ u)) - b
        return K @ u + WP0.T @ (Pfull @ beta(gd.full(u))) - b

    def jacobian(u):
        if form == "A":
            return K + P0.T @ sp.diags(w * dbeta(P0 @ u)) @ P0
        return K + PtWP @ sp.diags(dbeta(u))

    u = np.zeros(n) if u0 is None else np.asarray(u0, dtype=float).copy()
    F = residual(u)
    r0 = max(np.linalg.norm(F), np.finfo(float).tiny)
    hist = [float(np.linalg.norm(F))]
    for it in range(1, NEWTON_MAXITER + 1):
        if hist[-1] <= NEWTON_TOL * r0:
            return NewtonResult(u, it - 1, hist[-1], tuple(hist))
        J = jacobian(u)
        du = (sla.solve(J.toarray(), -F) if n < DENSE_LIMIT
              else spla.splu(sp.csc_matrix(J)).solve(-F))
        t = 1.0
        while True:
            trial = u + t * du
            Ft = residual(trial)
            if np.linalg.norm(Ft) < hist[-1] or t <= LINESEARCH_FLOOR:
                break
            t *= 0.5
        if np.linalg.norm(Ft) >= hist[-1]:
            raise NumericalError(f"Newton stagnated at iteration {it}, residual {hist[-1]:.3e}")
        u, F = trial, Ft
        hist.append(float(np.linalg.norm(F)))
    if hist[-1] <= NEWTON_TOL * r0:
        return NewtonResult(u, NEWTON_MAXITER, hist[-1], tuple(hist))
    raise NumericalError(f"Newton did not converge in {NEWTON_MAXITER} iterations, residual {hist[-1]:.3e}")


def solve(gd: GradientDiscretisation, problem: DiffusionProblem, form: str = "A") -> np.ndarray:
    """Full dof vector solving the scheme for ``problem``."""
    if problem.linear:
        return gd.full(solve_linear(assemble_linear(gd, problem)))
    return gd.full(solve_semilinear(gd, problem, form).u)


@dataclass(frozen=True)
class ErrorReport:
    err_l2: float
    err_h1: float
    w_d: float
    s_d: float          # interpolant bound of S_D(u)

    @property
    def lhs(self) -> float:
        return self.err_l2 + self.err_h1

    @property
    def rhs(self) -> float:
        return self.w_d + self.s_d


def error_report(gd: GradientDiscretisation, u: np.ndarray, problem: DiffusionProblem) -> ErrorReport:
    if not problem.manufactured:
        raise ValueError(f"{problem.name} has no manufactured solution")
    quad = gd.quad
    ex = quad.sample(problem.exact).reshape(-1)
    gex = quad.sample(problem.grad_exact).reshape(-1, 2)
    e0 = lp_norm(QuadratureField(quad, gd.pi.apply(u) - ex))
    e1 = lp_norm(QuadratureField(quad, gd.grad.apply(u) - gex))
    w = limit_conformity_defect(gd, problem.flux, problem.div_flux)
    s = consistency_defect(gd, problem.exact, problem.grad_exact).interpolant
    return ErrorReport(e0, e1, w, s)


# ---------------------------------------------------------------------------
# convergence studies

def family_mesh(family: str, n: int, perturbation: float = 0.0, seed: int = 0):
    if family == "cartesian":
        mesh = build_cartesian(n, n)
    elif family == "simplicial":
        mesh = build_simplicial(n, n)
    else:
        raise ValueError(f"unknown mesh family {family!r}")
    return perturb(mesh, perturbation, seed) if perturbation else mesh


def discontinuity_faces(mesh, problem: DiffusionProblem, tol: float = 1e-12) -> np.ndarray:
    """Interior faces across which the cell-centre diffusion tensors differ."""
    A = problem.tensor(mesh.cell_centroid)
    inner = np.flatnonzero(~mesh.face_boundary)
    K, L = mesh.face_cells[inner, 0], mesh.face_cells[inner, 1]
    jump = np.abs(A[K] - A[L]).reshape(len(inner), -1).max(axis=1)
    return inner[jump > tol * np.abs(A).max()]


@dataclass
class LevelResult:
    level: int
    n: int
    h: float
    dofs: int
    err_l2: float
    err_h1: float
    C_D: float | None
    W_D: float | None
    S_D_lo: float | None
    S_D_hi: float | None
    S_D_interp: float | None
    wall_ms: float
    order_l2: float | None = None
    order_h1: float | None = None

    @property
    def lhs(self) -> float:
        return self.err_l2 + self.err_h1

    @property
    def rhs(self) -> float | None:
        if self.W_D is None or self.S_D_interp is None:
            return None
        return self.W_D + self.S_D_interp


@dataclass
class StudyResult:
    scheme: str
    family: str
    problem: str
    levels: list[LevelResult] = field(default_factory=list)
    error: str | None = None

    def to_csv(self, timing: bool = False) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for r in self.levels:
            wr.writerow([r.level, _fmt(r.h), r.dofs, _fmt(r.err_l2), _fmt(r.err_h1),
                         _fmt(r.order_l2), _fmt(r.order_h1), _fmt(r.C_D), _fmt(r.W_D),
                         _fmt(r.S_D_lo), _fmt(r.S_D_hi),
                         f"{r.wall_ms:.1f}" if timing else ""])
        return buf.getvalue()

    def ratios(self) -> list[float]:
        """LHS/RHS of the error estimate per level."""
        return [r.lhs / r.rhs for r in self.levels if r.rhs]


def errlin_constant(c_d: float, lam_min: float = 1.0, lam_max: float = 1.0,
                    margin: float = 1.2) -> float:
    """Constant of the linear error estimate, from A and a bound on C_D.

    With u the scheme solution,
    ||grad u_bar - grad_D u|| <= (W_D + (lam_max + lam_min) S_D) / lam_min and
    ||u_bar - Pi_D u|| <= (C_D W_D + (C_D lam_max + lam_min) S_D) / lam_min;
    summing gives LHS <= C (W_D + S_D).  ``margin`` turns the C_D observed on
    one level into a bound for the whole family.
    """
    c = margin * c_d
    return max(1.0 + c, (1.0 + c) * lam_max + 2.0 * lam_min) / lam_min


def _fmt(v) -> str:
    return "" if v is None else f"{v:.12e}"


def run_level(scheme: str, family: str, problem: DiffusionProblem, n: int, level: int,
              perturbation: float = 0.0, seed: int = 0, metrics: bool = True,
              params: dict | None = None) -> LevelResult:
    from .schemes import build
    t0 = time.perf_counter()
    mesh = family_mesh(family, n, perturbation, seed)
    params = dict(params or {})
    if params.get("keep_faces") == "discontinuities":
        params["keep_faces"] = discontinuity_faces(mesh, problem)
    gd = build(scheme, mesh, **params)
    u = solve(gd, problem)
    rep = error_report(gd, u, problem) if metrics else None
    if rep is None:
        quad = gd.quad
        e0 = lp_norm(QuadratureField(quad, gd.pi.apply(u) - quad.sample(problem.exact).reshape(-1)))
        e1 = lp_norm(QuadratureField(quad, gd.grad.apply(u) - quad.sample(problem.grad_exact).reshape(-1, 2)))
        c = w = lo = hi = si = None
    else:
        e0, e1, w, si = rep.err_l2, rep.err_h1, rep.w_d, rep.s_d
        c = coercivity_constant(gd)
        sd = consistency_defect(gd, problem.exact, problem.grad_exact)
        lo, hi = sd.lower, sd.upper
    return LevelResult(level, n, mesh.h_M, gd.n_interior, e0, e1, c, w, lo, hi, si,
                       1e3 * (time.perf_counter() - t0))


def convergence_study(scheme: str, family: str, problem: DiffusionProblem,
                      levels: tuple[int, ...] = (4, 8, 16, 32), perturbation: float = 0.0,
                      seed: int = 0, metrics: bool = True, threads: int = 1,
                      params: dict | None = None,
                      on_error: Callable[[int, Exception], None] | None = None) -> StudyResult:
    """Solve on each level and compute observed orders.

    A failing level stops the study; the partial table is returned with
    ``error`` set.
    """
    if len(levels) < 2:
        raise ValueError("a convergence study needs at least 2 levels")
    res = StudyResult(scheme, family, problem.name)
    jobs = [(i, n) for i, n in enumerate(levels)]

    def work(job):
        i, n = job
        return run_level(scheme, family, problem, n, i, perturbation, seed + i, metrics, params)

    outcomes: list = []
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            futures = [pool.submit(work, j) for j in jobs]
            for fut in futures:
                try:
                    outcomes.append(fut.result())
                except SOLVE_FAILURES as exc:
                    outcomes.append(exc)
    else:
        for j in jobs:
            try:
                outcomes.append(work(j))
            except SOLVE_FAILURES as exc:
                outcomes.append(exc)
                break
    for i, out in enumerate(outcomes):
        if isinstance(out, Exception):
            res.error = f"level {i} (n={levels[i]}): {type(out).__name__}: {out}"
            if on_error is not None:
                on_error(i, out)
            break
        res.levels.append(out)
    for prev, cur in zip(res.levels, res.levels[1:]):
        lh = math.log(prev.h / cur.h)
        cur.order_l2 = _order(prev.err_l2, cur.err_l2, lh)
        cur.order_h1 = _order(prev.err_h1, cur.err_h1, lh)
    return res


def _order(e0: float, e1: float, log_h: float) -> float | None:
    if e0 <= 0 or e1 <= 0 or log_h == 0:
        return None
    return math.log(e0 / e1) / log_h


def residual_functional(gd: GradientDiscretisation, problem: DiffusionProblem, u: np.ndarray) -> np.ndarray:
    """Scheme residual on X_{D,0} for a full dof vector ``u``."""
    system = assemble_linear(gd, problem)
    r = system.matrix @ u[gd.interior] - system.rhs
    if problem.beta is not None:
        r = r + gd.pi_matrix().T @ (gd.quad.weights * problem.beta(gd.pi.apply(u)))
    return r


__all__ = [
    "CSV_COLUMNS", "ErrorReport", "LevelResult", "NewtonResult", "SparseSystem", "StudyResult",
    "assemble_linear", "convergence_study", "discontinuity_faces", "errlin_constant", "error_report", "family_mesh", "pcg",
    "residual_functional", "run_level", "solve", "solve_linear", "solve_semilinear",
]
