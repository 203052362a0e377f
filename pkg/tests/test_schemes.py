import numpy as np
import pytest
from conftest import affine

from gslab.gd import evaluate, interpolate
from gslab.mesh import build_cartesian, build_simplicial, perturb
from gslab.schemes import CATALOGUE, SchemeError, build, build_hmm, build_nmfd, describe, scheme_kinds
from gslab.schemes.hmm import sushi_rule
from gslab.schemes.nmfd import default_weights
from gslab.schemes.vag import sub_triangulation
from gslab.toolbox import toolbox_matrices

# nmfd reconstructs v_K as a weighted vertex average, which is cellwise constant
# but not of the form sum u_i chi_{V_i}
PC = {"p1_lumped", "ncp1_lumped", "mpfa_o", "hmm", "sushi", "vag2d"}


def test_catalogue():
    assert scheme_kinds() == ["p1", "p2", "p1_lumped", "ncp1", "ncp1_lumped", "mpfa_o", "hmm",
                              "sushi", "nmfd", "vag2d"]
    with pytest.raises(SchemeError):
        build("rt0", build_cartesian(2, 2))


@pytest.mark.parametrize("kind", ["p1", "p2", "p1_lumped", "ncp1", "ncp1_lumped"])
def test_simplicial_only(kind):
    with pytest.raises(SchemeError):
        build(kind, build_cartesian(2, 2))


def test_p2_lumping_rejected():
    from gslab.schemes import build_p1
    with pytest.raises(SchemeError):
        build_p1(build_simplicial(2, 2), 2, lumped=True)


def test_mpfa_rejects_general_mesh():
    with pytest.raises(SchemeError, match="restricted"):
        build("mpfa_o", perturb(build_cartesian(3, 3), 0.2, seed=0))


def test_p2_six_nodes_per_triangle():
    mesh = build_simplicial(1, 1)
    gd = build("p2", mesh)
    assert gd.n_dofs == 4 + 5
    assert all(len(d) == 6 for d in gd.lle.region_dofs)


def test_p1_affine_interpolant_exact(simp4p, rng):
    gd = build("p1", simp4p)
    L, g = affine(rng)
    v = interpolate(gd, L, zero_boundary=False)
    pv, gv = evaluate(gd, v)
    np.testing.assert_allclose(pv.values, L(gd.quad.points), atol=1e-12)
    np.testing.assert_allclose(gv.values, np.broadcast_to(g, gv.values.shape), atol=1e-12)


def test_ncp1_basis_value_at_opposite_vertex(simp4p):
    gd = build("ncp1", simp4p)
    m = gd.mesh
    K = 5
    s = gd.lle.region_dofs[K][0]
    e = np.zeros(gd.n_dofs)
    e[s] = 1.0
    nodes = gd.quad.node_cell == K
    vals = gd.pi.apply(e)[nodes]
    X = np.column_stack([np.ones(nodes.sum()), gd.quad.points[nodes]])
    c, *_ = np.linalg.lstsq(X, vals, rcond=None)
    assert np.abs(X @ c - vals).max() < 1e-12
    opp = [v for v in m.cell_vertices(K) if v not in m.face_vertices[s]][0]
    assert c[0] + c[1:] @ m.vertices[opp] == pytest.approx(-1.0, abs=1e-12)
    at_mid = c[0] + c[1:] @ m.face_mid[s]
    assert at_mid == pytest.approx(1.0, abs=1e-12)


def test_ncp1_basis_orthogonal(simp4p):
    M = build("ncp1", simp4p).mass.toarray()
    off = M - np.diag(np.diag(M))
    assert np.abs(off).max() < 1e-14 * np.abs(M).max() * 100


def test_mpfa_counts_and_points():
    gd = build("mpfa_o", build_cartesian(2, 2))
    assert gd.n_dofs == 28
    pairs = gd.points[4:]
    np.testing.assert_array_equal(pairs[0::2], pairs[1::2])


def test_mpfa_simplicial_points():
    m = build_simplicial(2, 2)
    gd = build("mpfa_o", m)
    a, b = m.vertices[m.face_vertices[0]]
    np.testing.assert_allclose(gd.points[m.n_cells], (2 * a + b) / 3)


def test_hmm_default_zeta():
    gd = build_hmm(perturb(build_cartesian(4, 4), 0.2, seed=1))
    assert gd.info["zeta"] == 1.0


def test_hmm_scalar_and_face_stabilisation():
    m = build_cartesian(3, 3)
    assert build_hmm(m, 2.0).info["zeta"] == pytest.approx(4.0)
    c = np.full(len(m.cf_face), 1.0)
    gd = build_hmm(m, ("face", c))
    assert gd.info["zeta"] == pytest.approx(1.0)
    np.testing.assert_allclose(gd.stiffness.toarray(), build_hmm(m).stiffness.toarray(), atol=1e-12)


def test_hmm_rejects_singular_stabilisation():
    with pytest.raises(SchemeError, match="isomorphism"):
        build_hmm(build_cartesian(2, 2), lambda K, R: np.zeros_like(R))


@pytest.mark.parametrize("kind", ["hmm", "nmfd"])
def test_cell_mean_of_gradient(cart4p, rng, kind):
    """int_K grad_D u = |K| times the toolbox gradient of the control of u."""
    gd = build(kind, cart4p)
    u = rng.standard_normal(gd.n_dofs)
    g = gd.grad.apply(u) * gd.quad.weights[:, None]
    mean = np.column_stack([np.bincount(gd.quad.node_cell, g[:, c], gd.mesh.n_cells) for c in range(2)])
    tb = toolbox_matrices(gd.control.toolbox)
    x = gd.control.phi @ u
    G = np.column_stack([tb.grad[0] @ x, tb.grad[1] @ x]) * gd.mesh.cell_area[:, None]
    np.testing.assert_allclose(mean, G, atol=1e-12)


def test_sushi_cartesian_half_weights():
    m = build_cartesian(4, 4)
    rule = sushi_rule(build_hmm(m))
    assert len(rule.stencils) == int((~m.face_boundary).sum())
    for H, beta in rule.stencils.values():
        assert len(H) == 2
        np.testing.assert_allclose(beta, 0.5, atol=1e-14)


def test_sushi_dof_count():
    m = build_cartesian(4, 4)
    gd = build("sushi", m)
    assert gd.n_interior == m.n_cells
    assert gd.n_dofs == m.n_cells + int(m.face_boundary.sum())


def test_sushi_keep_faces():
    m = build_cartesian(4, 4)
    keep = np.flatnonzero(~m.face_boundary)[:3]
    gd = build("sushi", m, keep_faces=keep)
    assert gd.n_interior == m.n_cells + 3


def test_nmfd_subcell_volumes(cart4p):
    gd = build_nmfd(cart4p)
    vol = np.bincount(gd.mesh.cf_cell, gd.info["subcell_volume"], gd.mesh.n_cells)
    np.testing.assert_allclose(vol, cart4p.cell_area, atol=1e-14)
    assert gd.info["zeta"] == 1.0


def test_nmfd_default_face_weights_positive(cart4p):
    _, w_face = default_weights(cart4p)
    assert np.all(w_face > 0)


def test_nmfd_weight_axioms(cart4p):
    w_cell, w_face = default_weights(cart4p)
    bad = w_cell.copy()
    bad[0] *= 1.1
    with pytest.raises(SchemeError, match=r"\|K\| in cell 0"):
        build_nmfd(cart4p, (bad, w_face))
    skew = w_face.copy()
    skew[3] = [0.7 * cart4p.face_length[3], 0.3 * cart4p.face_length[3]]
    with pytest.raises(SchemeError, match="on face 3"):
        build_nmfd(cart4p, (w_cell, skew))
    neg = w_face.copy()
    neg[3] = [-cart4p.face_length[3], 2 * cart4p.face_length[3]]
    with pytest.raises(SchemeError, match="nonnegative"):
        build_nmfd(cart4p, (w_cell, neg))


def test_nmfd_affine_exact_on_triangles(simp4p, rng):
    gd = build_nmfd(simp4p)
    L, g = affine(rng)
    v = interpolate(gd, L, zero_boundary=False)
    assert np.abs(gd.grad.apply(v) - g).max() < 1e-10


def test_vag_sub_triangulation(cart4p):
    sub = sub_triangulation(cart4p)
    assert sub.n_cells == len(cart4p.cf_face)
    gd = build("vag2d", cart4p)
    assert gd.n_dofs == cart4p.n_vertices + cart4p.n_cells
    area = np.bincount(gd.partition, gd.quad.piece_area, gd.n_dofs)
    assert area.sum() == pytest.approx(1.0, abs=1e-12)
    # thirds: each cell centre owns a third of its sub-triangles
    np.testing.assert_allclose(area[cart4p.n_vertices:], cart4p.cell_area / 3, atol=1e-14)


def test_vag_parent_linear_exact(cart4p, rng):
    gd = build("vag2d", cart4p).parent
    L, g = affine(rng)
    v = interpolate(gd, L, zero_boundary=False)
    assert np.abs(gd.grad.apply(v) - g).max() < 1e-10
    np.testing.assert_allclose(gd.pi.apply(v), L(gd.quad.points), atol=1e-12)


@pytest.mark.parametrize("kind", list(CATALOGUE))
def test_piecewise_constant_set(kind):
    """Flag matches the catalogue; piecewise-constant schemes have diagonal mass."""
    from conftest import mesh_for
    gd = build(kind, mesh_for(kind, 3))
    assert gd.piecewise_constant == (kind in PC) == CATALOGUE[kind].piecewise_constant
    if kind in PC:
        M = gd.mass.toarray()
        assert np.abs(M - np.diag(np.diag(M))).max() <= 1e-12 * np.abs(M).max()


def test_describe():
    d = describe("mpfa_o")
    assert "cartesian" in d and "simplicial" in d
    assert "zeta_D = 1" in describe("hmm")
    with pytest.raises(SchemeError):
        describe("nope")
