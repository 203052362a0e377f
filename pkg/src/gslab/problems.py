"""Built-in manufactured problems on the unit square with homogeneous Dirichlet data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

PI = np.pi
Field = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DiffusionProblem:
    """-div(A grad u) + beta(u) = f in the unit square, u = 0 on the boundary.

    ``A`` maps points (n, 2) to tensors (n, 2, 2); None means the identity.
    ``beta``/``dbeta`` are the optional monotone nonlinearity and its derivative.
    """

    name: str
    f: Field
    A: Field | None = None
    beta: Callable[[np.ndarray], np.ndarray] | None = None
    dbeta: Callable[[np.ndarray], np.ndarray] | None = None
    exact: Field | None = None
    grad_exact: Field | None = None

    @property
    def linear(self) -> bool:
        return self.beta is None

    @property
    def manufactured(self) -> bool:
        return self.exact is not None and self.grad_exact is not None

    def tensor(self, x: np.ndarray) -> np.ndarray:
        if self.A is None:
            return np.broadcast_to(np.eye(2), (len(x), 2, 2)).copy()
        return np.asarray(self.A(x), dtype=float).reshape(len(x), 2, 2)

    def tensor_bounds(self, samples: int = 64) -> tuple[float, float]:
        """Extreme eigenvalues of A over a grid of the unit square."""
        t = (np.arange(samples) + 0.5) / samples
        x = np.column_stack([np.repeat(t, samples), np.tile(t, samples)])
        lam = np.linalg.eigvalsh(self.tensor(x))
        return float(lam[:, 0].min()), float(lam[:, 1].max())

    def flux(self, x: np.ndarray) -> np.ndarray:
        """A grad u of the manufactured solution."""
        return np.einsum("qij,qj->qi", self.tensor(x), self.grad_exact(x))

    def div_flux(self, x: np.ndarray) -> np.ndarray:
        d = -np.asarray(self.f(x), dtype=float)
        if self.beta is not None:
            d = d + self.beta(self.exact(x))
        return d


def _s(x):
    return np.sin(PI * x[:, 0]) * np.sin(PI * x[:, 1])


def _gs(x):
    return PI * np.column_stack([np.cos(PI * x[:, 0]) * np.sin(PI * x[:, 1]),
                                 np.sin(PI * x[:, 0]) * np.cos(PI * x[:, 1])])


def _const_tensor(t):
    t = np.asarray(t, dtype=float)
    return lambda x: np.broadcast_to(t, (len(x), 2, 2)).copy()


def sin2d() -> DiffusionProblem:
    return DiffusionProblem("sin2d", f=lambda x: 2 * PI ** 2 * _s(x), exact=_s, grad_exact=_gs)


def aniso(ratio: float = 100.0) -> DiffusionProblem:
    return DiffusionProblem("aniso", f=lambda x: (1.0 + ratio) * PI ** 2 * _s(x),
                            A=_const_tensor(np.diag([1.0, ratio])), exact=_s, grad_exact=_gs)


# hetero: a = 1 for x < 1/2 and 10 beyond; u = sin(2 pi x) sin(pi y) / a is continuous
# (it vanishes on x = 1/2) and a du/dx is continuous, so no interface source appears.
A_LEFT, A_RIGHT = 1.0, 10.0


def _a(x):
    return np.where(x[:, 0] < 0.5, A_LEFT, A_RIGHT)


def _h(x):
    return np.sin(2 * PI * x[:, 0]) * np.sin(PI * x[:, 1]) / _a(x)


def _gh(x):
    g = PI * np.column_stack([2 * np.cos(2 * PI * x[:, 0]) * np.sin(PI * x[:, 1]),
                              np.sin(2 * PI * x[:, 0]) * np.cos(PI * x[:, 1])])
    return g / _a(x)[:, None]


def hetero() -> DiffusionProblem:
    return DiffusionProblem("hetero", f=lambda x: 5 * PI ** 2 * np.sin(2 * PI * x[:, 0]) * np.sin(PI * x[:, 1]),
                            A=lambda x: _a(x)[:, None, None] * np.eye(2)[None],
                            exact=_h, grad_exact=_gh)


def cubic_beta() -> DiffusionProblem:
    return DiffusionProblem("cubic-beta", f=lambda x: 2 * PI ** 2 * _s(x) + _s(x) ** 3,
                            beta=lambda s: s ** 3, dbeta=lambda s: 3 * s ** 2,
                            exact=_s, grad_exact=_gs)


PROBLEMS: dict[str, Callable[[], DiffusionProblem]] = {
    "sin2d": sin2d,
    "aniso": aniso,
    "hetero": hetero,
    "cubic-beta": cubic_beta,
}


def get_problem(name: str) -> DiffusionProblem:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(PROBLEMS)}") from None
