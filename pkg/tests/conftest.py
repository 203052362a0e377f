import numpy as np
import pytest

from gslab.mesh import build_cartesian, build_simplicial, perturb

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cart4():
    return build_cartesian(4, 4)


@pytest.fixture(scope="session")
def simp4():
    return build_simplicial(4, 4)


@pytest.fixture(scope="session")
def simp4p():
    return perturb(build_simplicial(4, 4), 0.2, seed=3)


@pytest.fixture(scope="session")
def cart4p():
    return perturb(build_cartesian(4, 4), 0.2, seed=3)


def affine(rng):
    """Random affine map and its gradient."""
    c = rng.uniform(-2, 2, 3)
    return (lambda x: c[0] + c[1] * x[:, 0] + c[2] * x[:, 1]), np.array(c[1:])


def mesh_for(kind, n=4, amplitude=0.0, seed=0):
    """A mesh admissible for scheme ``kind``."""
    from gslab.schemes import CATALOGUE
    info = CATALOGUE[kind]
    base = build_simplicial(n, n) if info.default_mesh == "simplicial" else build_cartesian(n, n)
    if amplitude and kind != "mpfa_o":
        base = perturb(base, amplitude, seed)
    return base
