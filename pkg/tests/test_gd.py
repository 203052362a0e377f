import numpy as np
import pytest
from conftest import affine, mesh_for

from gslab.gd import (check_partition_of_unity, evaluate, interpolate, lle_gradient_bound_check,
                      lle_regularity, lle_terms)
from gslab.mesh import build_simplicial, build_cartesian
from gslab.quadrature import Quadrature, QuadratureField, lp_distance, lp_norm
from gslab.schemes import CATALOGUE, build

KINDS = list(CATALOGUE)


@pytest.fixture(scope="module", params=KINDS)
def gd(request):
    return build(request.param, mesh_for(request.param, 4, 0.2, seed=5))


def test_quadrature_is_degree_four():
    tri = np.array([[[0.1, 0.2], [0.9, 0.3], [0.4, 1.1]]])
    q = Quadrature.from_pieces(tri, np.zeros(1, int), np.zeros(1, int))
    e1, e2 = tri[0, 1] - tri[0, 0], tri[0, 2] - tri[0, 0]
    area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
    assert q.weights.sum() == pytest.approx(area, rel=1e-14)
    # degree-4 monomials: the rule must agree with itself on the 4-way split
    for a, b in [(4, 0), (2, 2), (1, 3), (0, 4)]:
        f = lambda x: x[:, 0] ** a * x[:, 1] ** b
        p = tri[0]
        m = (p[[0, 1, 2]] + p[[1, 2, 0]]) / 2
        sub = np.array([[p[0], m[0], m[2]], [m[0], p[1], m[1]], [m[2], m[1], p[2]], [m[0], m[1], m[2]]])
        q4 = Quadrature.from_pieces(sub, np.zeros(4, int), np.zeros(4, int))
        assert q.integrate(q.sample(f)) == pytest.approx(q4.integrate(q4.sample(f)), rel=1e-13)


def test_region_measures_sum_to_domain(gd):
    assert gd.quad.region_measure.sum() == pytest.approx(1.0, abs=1e-12)
    assert gd.quad.weights.min() > 0


def test_lp_norm_basics(gd):
    q = gd.quad
    assert lp_norm(QuadratureField(q, np.zeros(q.n_nodes))) == 0.0
    assert lp_norm(QuadratureField(q, np.full(q.n_nodes, -3.0))) == pytest.approx(3.0)


def test_gradient_norm_of_trig():
    gd = build("p2", build_simplicial(16, 16))
    g = lambda x: np.pi * np.column_stack([np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]),
                                           np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1])])
    val = lp_norm(QuadratureField(gd.quad, gd.quad.sample(g)))
    assert val == pytest.approx(np.pi / np.sqrt(2), abs=1e-6)


def test_lp_distance_triangle(gd, rng):
    q = gd.quad
    f, g, h = (QuadratureField(q, rng.standard_normal(q.n_nodes)) for _ in range(3))
    assert lp_distance(f, h) <= lp_distance(f, g) + lp_distance(g, h) + 1e-12
    assert lp_distance(f, f.values) == 0.0


def test_interpolate_zero_and_errors(gd):
    assert not interpolate(gd, lambda x: np.zeros(len(x))).any()
    with pytest.raises(ValueError, match="not finite"):
        interpolate(gd, lambda x: np.full(len(x), np.nan))


def test_interpolate_two_triangles():
    gd = build("p1", build_simplicial(1, 1))
    v = interpolate(gd, lambda x: np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]))
    assert gd.n_interior == 0 and not v.any()


def test_evaluate_size_mismatch(gd):
    with pytest.raises(ValueError):
        evaluate(gd, np.zeros(gd.n_dofs + 1))


def test_linearity(gd, rng):
    for _ in range(20):
        u, w = rng.standard_normal((2, gd.n_dofs))
        a, b = rng.standard_normal(2)
        p1, g1 = evaluate(gd, a * u + b * w)
        pu, gu = evaluate(gd, u)
        pw, gw = evaluate(gd, w)
        np.testing.assert_allclose(p1.values, a * pu.values + b * pw.values, atol=1e-12 * (1 + abs(a) + abs(b)) * 10)
        np.testing.assert_allclose(g1.values, a * gu.values + b * gw.values, atol=1e-10)


def test_gradient_norm_property(gd):
    K = gd.stiffness.toarray()
    lam = np.linalg.eigvalsh(K)
    assert lam[0] > 1e-12 * np.trace(K) / len(K)


def test_partition_of_unity(gd):
    assert check_partition_of_unity(gd) < 1e-12


def test_linear_exactness(gd, rng):
    for _ in range(10):
        L, grad = affine(rng)
        v = interpolate(gd, L, zero_boundary=False)
        err = np.abs(gd.grad.apply(v) - grad).max()
        assert err < 1e-10


def test_piecewise_constant_flag(gd):
    assert gd.piecewise_constant == CATALOGUE[gd.kind].piecewise_constant
    if gd.piecewise_constant:
        # each node sees exactly one dof with weight one
        assert np.all(np.diff(gd.pi.indptr) <= 1)
        np.testing.assert_array_equal(gd.pi.data[:, 0], 1.0)


def test_hat_function_p1():
    mesh = build_simplicial(4, 4)
    gd = build("p1", mesh)
    i = gd.interior[4]
    e = np.zeros(gd.n_dofs)
    e[i] = 1.0
    pv, gv = evaluate(gd, e)
    assert pv.values.max() <= 1.0 + 1e-14 and pv.values.min() >= -1e-14
    # gradient constant per triangle
    g = gv.values.reshape(mesh.n_cells, -1, 2)
    assert np.abs(g - g[:, :1]).max() < 1e-12


def test_hmm_reconstruction_is_cell_value(rng):
    mesh = build_cartesian(3, 3)
    gd = build("hmm", mesh)
    u = gd.full(rng.standard_normal(gd.n_interior))
    pv, _ = evaluate(gd, u)
    np.testing.assert_array_equal(pv.values, u[gd.quad.node_cell])


def test_lle_regularity_piecewise_constant_alpha():
    gd = build("hmm", build_cartesian(4, 4))
    assert lle_terms(gd).alpha_sup == pytest.approx(1.0)


def test_lle_regularity_stable():
    vals = [lle_regularity(build("p1", build_simplicial(n, n))) for n in (4, 8, 16)]
    assert max(vals) / min(vals) <= 1.01


def test_lle_maxdist_inside():
    t = lle_terms(build("p1", build_simplicial(4, 4)))
    assert np.all(t.maxdist / t.diam <= 1.0)


def test_bound_check_affine(gd, rng):
    L, grad = affine(rng)
    chk = lle_gradient_bound_check(gd, L, lambda x: np.tile(grad, (len(x), 1)), 0.0)
    assert chk.ok and chk.residual.max() < 1e-10


def test_bound_check_quadratic():
    gd = build("p1", build_simplicial(4, 4))
    chk = lle_gradient_bound_check(gd, lambda x: x[:, 0] ** 2 / 2,
                                   lambda x: np.column_stack([x[:, 0], 0 * x[:, 0]]), 1.0)
    assert chk.ok


def test_bound_check_trig(gd):
    phi = lambda x: np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
    grad = lambda x: np.pi * np.column_stack([np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]),
                                              np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1])])
    assert lle_gradient_bound_check(gd, phi, grad, np.pi ** 2).ok
