"""Compare the compiled and numpy Gram-assembly kernels.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Both backends are fed the gradient maps of a few discretisations and timed
on identical input; the results are also checked for agreement.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np
import scipy.sparse as sp

from gslab import _kernels_py
from gslab.mesh import build_cartesian, build_simplicial
from gslab.schemes import build

try:
    from gslab import _kernels as compiled
except ImportError:  # extension not built
    compiled = None

CASES = [
    ("p1", "simplicial", 64),
    ("p2", "simplicial", 32),
    ("hmm", "cartesian", 64),
    ("sushi", "cartesian", 32),
]


def kernel_input(kind: str, family: str, n: int):
    mesh = build_simplicial(n, n) if family == "simplicial" else build_cartesian(n, n)
    gd = build(kind, mesh)
    g = gd.grad0
    coef = gd.quad.weights[:, None, None] * np.eye(2)[None]
    return g.indptr, g.indices, g.data, coef, g.n_cols


def to_matrix(trip, n):
    r, c, v = trip
    return sp.csr_matrix((v, (r, c)), shape=(n, n))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'case':22s} {'nnz(out)':>10s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for kind, family, n in CASES:
        indptr, indices, data, coef, ncols = kernel_input(kind, family, n)
        ref = _kernels_py.gram_triplets(indptr, indices, data, coef)
        t_py = min(timeit.repeat(lambda: _kernels_py.gram_triplets(indptr, indices, data, coef),
                                 number=1, repeat=args.repeat))
        label = f"{kind} {family} {n}x{n}"
        if compiled is None:
            print(f"{label:22s} {len(ref[2]):10d} {1e3 * t_py:10.2f} {'n/a':>10s} {'n/a':>8s}")
            continue
        out = compiled.gram_triplets(indptr, indices, data, coef)
        diff = abs(to_matrix(out, ncols) - to_matrix(ref, ncols)).max()
        assert diff <= 1e-12 * abs(to_matrix(ref, ncols)).max(), f"{label}: backends disagree ({diff})"
        t_cy = min(timeit.repeat(lambda: compiled.gram_triplets(indptr, indices, data, coef),
                                 number=1, repeat=args.repeat))
        print(f"{label:22s} {len(ref[2]):10d} {1e3 * t_py:10.2f} {1e3 * t_cy:10.2f} {t_py / t_cy:8.2f}")


if __name__ == "__main__":
    main()
