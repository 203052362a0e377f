"""Symmetric pencils and SPD solves, with a dense path for small systems."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_LIMIT = 2000
EIG_TOL = 1e-10
EIG_MAXITER = 5000


class NumericalError(RuntimeError):
    """A solve or eigen-solve failed to produce a trustworthy answer."""


def _dense(A) -> np.ndarray:
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


def pencil_max(A, B, method: str = "auto") -> float:
    """Largest eigenvalue of ``A x = lam B x`` with A symmetric PSD, B SPD."""
    n = A.shape[0]
    if n == 0:
        return 0.0
    if method == "auto":
        method = "dense" if n < DENSE_LIMIT else "sparse"
    if method == "dense" or n < 3:
        C = _reduce(A, B)
        try:
            lam = sla.eigvalsh(C, subset_by_index=[n - 1, n - 1])
        except np.linalg.LinAlgError:
            # the partial solver occasionally fails on clustered spectra
            lam = np.linalg.eigvalsh(C)
        return max(float(lam[-1]), 0.0)
    if method != "sparse":
        raise ValueError(f"unknown method {method!r}")
    A = sp.csc_matrix(A)
    B = sp.csc_matrix(B)
    if A.nnz == 0 or abs(A).max() == 0.0:
        return 0.0
    lu = spla.splu(B)
    # Lanczos on the B-symmetric operator B^{-1} A, started from a fixed vector
    v0 = np.random.default_rng(0).standard_normal(n)
    try:
        lam = spla.eigsh(A, k=1, M=B, Minv=_inv_operator(lu, n), which="LA",
                         tol=EIG_TOL * 1e-2, maxiter=EIG_MAXITER, v0=v0,
                         return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise NumericalError(f"Lanczos did not converge in {EIG_MAXITER} iterations") from exc
    return max(float(lam[0]), 0.0)


def _inv_operator(lu, n):
    return spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)


def _reduce(A, B) -> np.ndarray:
    """L^{-1} A L^{-T} with B = L L^T."""
    try:
        L = np.linalg.cholesky(_dense(B))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"pencil matrix not positive definite: {exc}") from exc
    X = sla.solve_triangular(L, _dense(A), lower=True)
    C = sla.solve_triangular(L, X.T, lower=True)
    return 0.5 * (C + C.T)


def pencil_max_oracle(A, B) -> float:
    """Brute-force reference: full eigendecomposition after a Cholesky reduction."""
    if A.shape[0] == 0:
        return 0.0
    return max(float(np.linalg.eigvalsh(_reduce(A, B))[-1]), 0.0)


def spd_solve(K, r, method: str = "auto") -> np.ndarray:
    """Solve ``K x = r`` for SPD ``K`` (r may hold several columns)."""
    n = K.shape[0]
    if n == 0:
        return np.zeros_like(np.asarray(r, dtype=float))
    if method == "auto":
        method = "dense" if n < DENSE_LIMIT else "sparse"
    if method == "dense":
        try:
            return sla.cho_solve(sla.cho_factor(_dense(K)), r)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"matrix not positive definite: {exc}") from exc
    return spla.splu(sp.csc_matrix(K)).solve(np.asarray(r, dtype=float))


def spd_solve_oracle(K, r) -> np.ndarray:
    """Reference solve through the eigendecomposition of K."""
    lam, Q = np.linalg.eigh(_dense(K))
    if lam[0] <= 0:
        raise NumericalError("matrix not positive definite")
    return Q @ ((Q.T @ r) / (lam if np.ndim(r) == 1 else lam[:, None]))
