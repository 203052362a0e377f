import numpy as np
import pytest
from conftest import affine

from gslab.measures import poincare_constant
from gslab.mesh import build_cartesian, build_family, build_simplicial, perturb
from gslab.toolbox import (ToolboxVector, stokes_defect, toolbox_gradient, toolbox_matrices,
                           toolbox_norm, toolbox_reconstruction)


def _random(mesh, rng):
    return ToolboxVector.make(mesh, rng.standard_normal(mesh.n_cells), rng.standard_normal(mesh.n_faces))


@pytest.fixture(params=["cart", "simp"])
def mesh(request):
    base = build_cartesian(4, 4) if request.param == "cart" else build_simplicial(4, 4)
    return perturb(base, 0.2, seed=11)


def test_make_zeroes_boundary(mesh, rng):
    v = _random(mesh, rng)
    assert not v.face[mesh.face_boundary].any()
    v.check(mesh)
    with pytest.raises(ValueError):
        ToolboxVector(v.cell, np.ones(mesh.n_faces)).check(mesh)
    with pytest.raises(ValueError):
        ToolboxVector(v.cell[:-1], v.face).check(mesh)


def test_reconstruction_examples():
    m = build_cartesian(2, 2)
    assert not toolbox_reconstruction(m, ToolboxVector.make(m, 0, np.zeros(m.n_faces))).any()
    v = ToolboxVector.make(m, np.ones(4), np.arange(m.n_faces))
    np.testing.assert_array_equal(toolbox_reconstruction(m, v), 1.0)
    step = toolbox_reconstruction(m, ToolboxVector.make(m, np.arange(4), np.zeros(m.n_faces)))
    np.testing.assert_array_equal(step, [0, 1, 2, 3])


def test_gradient_unit_cell_right_face():
    # the only cell has boundary faces, so go through the operator matrices
    m = build_cartesian(1, 1)
    tb = toolbox_matrices(m)
    right = np.flatnonzero(np.isclose(m.face_mid[:, 0], 1.0))
    x = np.zeros(m.n_cells + m.n_faces)
    x[1 + right] = 1.0
    assert tb.grad[0] @ x == pytest.approx([1.0])
    assert tb.grad[1] @ x == pytest.approx([0.0])


def test_gradient_affine_exact(mesh, rng):
    for _ in range(10):
        L, g = affine(rng)
        v = ToolboxVector(L(mesh.centers), L(mesh.face_mid))
        tb = toolbox_matrices(mesh)
        x = v.as_array()
        G = np.column_stack([tb.grad[0] @ x, tb.grad[1] @ x])
        assert np.abs(G - g).max() < 1e-12


def test_gradient_constant_faces():
    m = build_cartesian(4, 4)
    v = ToolboxVector.make(m, np.zeros(m.n_cells), np.full(m.n_faces, 2.5))
    g = toolbox_gradient(m, v)
    inner = [K for K in range(m.n_cells)
             if not m.face_boundary[m.cf_face[m.cf_ptr[K]:m.cf_ptr[K + 1]]].any()]
    assert inner and np.abs(g[inner]).max() < 1e-13


def test_gradient_forms_agree_and_linear(mesh, rng):
    v, w = _random(mesh, rng), _random(mesh, rng)
    a, b = 0.7, -1.9
    lin = ToolboxVector(a * v.cell + b * w.cell, a * v.face + b * w.face)
    np.testing.assert_allclose(toolbox_gradient(mesh, lin),
                               a * toolbox_gradient(mesh, v) + b * toolbox_gradient(mesh, w), atol=1e-12)


def test_gradient_matches_matrices(mesh, rng):
    v = _random(mesh, rng)
    tb = toolbox_matrices(mesh)
    G = np.column_stack([tb.grad[0] @ v.as_array(), tb.grad[1] @ v.as_array()])
    np.testing.assert_allclose(G, toolbox_gradient(mesh, v), atol=1e-12)


def test_norm_examples():
    m = build_cartesian(1, 1)
    assert toolbox_norm(m, ToolboxVector.make(m, 0, np.zeros(4))) == 0.0
    # one face at 1 against v_K = 0: |s|/d = 1/0.5
    x = np.zeros(5)
    x[1] = 1.0
    assert x @ toolbox_matrices(m).norm @ x == pytest.approx(2.0)
    # all four faces at 0 against v_K = 1
    assert toolbox_norm(m, ToolboxVector.make(m, 1.0, np.zeros(4))) ** 2 == pytest.approx(8.0)


def test_norm_matches_quadratic_form(mesh, rng):
    v = _random(mesh, rng)
    x = v.as_array()
    assert toolbox_norm(mesh, v) ** 2 == pytest.approx(x @ toolbox_matrices(mesh).norm @ x, rel=1e-12)


def test_norm_rejects_p(mesh):
    v = ToolboxVector.make(mesh, 0, 0)
    for p in (1.0, np.inf, 0.5):
        with pytest.raises(ValueError):
            toolbox_norm(mesh, v, p)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_gradient_norm_inequality(mesh, rng, p):
    w = mesh.cell_area
    c = 2.0 ** ((p - 1) / p)
    for _ in range(100):
        v = _random(mesh, rng)
        g = np.linalg.norm(toolbox_gradient(mesh, v), axis=1)
        lhs = np.sum(w * g ** p) ** (1 / p)
        nrm = toolbox_norm(mesh, v, p)
        assert nrm > 0 and lhs <= c * nrm * (1 + 1e-12)


def test_norm_positive_on_cell_only_vector(mesh, rng):
    v = ToolboxVector.make(mesh, rng.standard_normal(mesh.n_cells), np.zeros(mesh.n_faces))
    assert toolbox_norm(mesh, v) > 0


def test_stokes_defect_zero_and_constant(mesh, rng):
    psi = lambda x: np.tile([0.3, -1.1], (len(x), 1))
    div0 = lambda x: np.zeros(len(x))
    zero = ToolboxVector.make(mesh, 0, 0)
    assert stokes_defect(mesh, zero, psi, div0, 1.1).value == 0.0
    v = _random(mesh, rng)
    d = stokes_defect(mesh, v, psi, div0, 1.1)
    direct = abs(np.sum(mesh.cell_area[:, None] * toolbox_gradient(mesh, v) @ np.array([0.3, -1.1])))
    assert d.value == pytest.approx(direct, rel=1e-10, abs=1e-13)
    assert d.value <= d.bound


def test_stokes_defect_affine_three_levels(rng):
    L, _ = affine(rng)
    psi = lambda x: np.column_stack([np.sin(np.pi * x[:, 1]), np.sin(np.pi * x[:, 0])])
    div = lambda x: np.zeros(len(x))
    for m in build_family("cartesian", 3):
        v = ToolboxVector.interpolate(m, L)
        d = stokes_defect(m, v, psi, div, np.pi)
        assert d.value <= d.bound


def test_poincare_unit_cell():
    assert poincare_constant(build_cartesian(1, 1)) == pytest.approx(1 / np.sqrt(8), rel=1e-12)


def test_poincare_family_bounded():
    vals = [poincare_constant(m) for m in build_family("cartesian", 3)]
    assert max(vals) / min(vals) <= 1.2


def test_poincare_dilation():
    a = poincare_constant(build_cartesian(4, 4))
    b = poincare_constant(build_cartesian(4, 4, (0.0, 3.0, 0.0, 3.0)))
    assert b == pytest.approx(3 * a, rel=1e-10)
