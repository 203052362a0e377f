"""Pure numpy version of the assembly kernel (same contract as ``_kernels``)."""

from __future__ import annotations

import numpy as np


def gram_triplets(indptr: np.ndarray, indices: np.ndarray, data: np.ndarray,
                  coef: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """COO triplets of ``sum_q R_q^T C_q R_q`` for sparse rows ``R_q``.

    ``data`` has shape (nnz, nc): each stored entry carries ``nc`` components
    (1 for a reconstruction, 2 for a gradient). ``coef`` has shape (Q, nc, nc).
    Rows are grouped by length so each group is one vectorised einsum.
    """
    lens = np.diff(indptr)
    rows_out, cols_out, vals_out = [], [], []
    for m in np.unique(lens):
        if m == 0:
            continue
        sel = np.flatnonzero(lens == m)
        idx = indptr[sel][:, None] + np.arange(m)
        cols = indices[idx]
        vals = data[idx]
        loc = np.einsum("nia,nab,njb->nij", vals, coef[sel], vals)
        rows_out.append(np.repeat(cols, m, axis=1).ravel())
        cols_out.append(np.tile(cols, (1, m)).ravel())
        vals_out.append(loc.ravel())
    if not rows_out:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy(), np.empty(0)
    return np.concatenate(rows_out), np.concatenate(cols_out), np.concatenate(vals_out)
