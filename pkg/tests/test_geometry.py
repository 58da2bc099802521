import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapebie.errors import ConfigError, DeformationTooLarge, OutOfChart
from shapebie.fields import make_field, zero_field
from shapebie.geometry import (SurfaceGrid, b_matrix, check_field_jacobian, cofactor_W, d2J, d2N,
                               deform, dJ, dm_W, dN, make_shape, material_to_shape, pullback,
                               pushforward, tangent_basis, wedge_W)

from conftest import LADDER, fit_order


def central(fn, t):
    return (fn(t) - fn(-t)) / (2 * t)


def second(fn, base, t):
    return (fn(t) - 2 * base + fn(-t)) / t**2


# ---------------------------------------------------------------------------
# surfaces and grids


def test_quadrature_of_one(grids):
    assert abs(grids["circle"].weights.sum() - 2 * np.pi) < 1e-12
    assert abs(grids["sphere"].weights.sum() - 4 * np.pi) < 1e-12


@pytest.mark.parametrize("name", ["circle", "ellipse(1,0.6)", "kite", "sphere",
                                  "ellipsoid(1,1.3,0.8)"])
def test_normals_unit_and_outward(grids, name):
    g = grids[name]
    assert np.max(np.abs(np.linalg.norm(g.normals, axis=1) - 1)) < 1e-14
    assert np.max(np.abs(g.W - g.J[:, None] * g.normals)) < 1e-15
    # outward: the level-set gradient points the same way
    ls = make_field("normal", g.surface)
    assert np.min(np.einsum("ni,ni->n", ls.value(g.positions), g.normals)) > 0.999999


def test_unknown_shape():
    with pytest.raises(ConfigError):
        make_shape("blob")
    with pytest.raises(ConfigError):
        make_shape("ellipse(1)")


def test_out_of_chart(shapes):
    with pytest.raises(OutOfChart):
        tangent_basis(shapes["sphere"], [[0.0, 1.0]])


def test_tangent_examples(shapes):
    e = tangent_basis(shapes["circle"], [[0.0]])[0, 0]
    assert np.allclose(e, [0, 1], atol=1e-15)
    tang = tangent_basis(shapes["sphere"], [[0.0, 0.0]])[0]
    assert abs(tang[0] @ tang[1]) < 1e-14
    assert np.max(np.abs(tang @ np.array([1.0, 0, 0]))) < 1e-14
    r = 0.1 * make_field("normal", shapes["circle"])
    e = tangent_basis(deform(shapes["circle"], r), [[0.0]])[0, 0]
    assert np.allclose(e, [0, 1.1], atol=1e-14)


def test_deform_examples(shapes, grids):
    c = shapes["circle"]
    g = grids["circle"]
    same = g.deformed(zero_field(2))
    assert np.array_equal(same.positions, g.positions)
    big = g.deformed(0.1 * make_field("normal", c))
    assert np.max(np.abs(np.linalg.norm(big.positions, axis=1) - 1.1)) < 1e-14
    with pytest.raises(DeformationTooLarge):
        deform(c, -1.0 * make_field("normal", c))
    # the original surface is unchanged
    assert np.array_equal(SurfaceGrid.build(c, 128).positions, g.positions)


@pytest.mark.parametrize("name,field", [("circle", "fourier2d(2,1,0.5)"), ("kite", "shear(0)"),
                                        ("sphere", "poly(x*y,y*z,z*x)")])
def test_field_jacobian_matches_fd(grids, name, field):
    g = grids[name]
    xi = make_field(field, g.surface)
    rng = np.random.default_rng(3)
    pts = g.positions[rng.choice(g.size, 10, replace=False)]
    assert check_field_jacobian(xi, pts) < 1e-6


# ---------------------------------------------------------------------------
# W, J, N and their derivatives


def test_w_examples(shapes, grids):
    g = grids["circle"]
    n = make_field("normal", shapes["circle"])
    assert np.allclose(wedge_W(g), g.normals, atol=0)
    for t in (0.1, 0.3):
        assert np.allclose(g.deformed(t * n).J, 1 + t, atol=1e-14)
    gs = grids["sphere"]
    ns = make_field("normal", shapes["sphere"])
    assert np.allclose(gs.deformed(0.2 * ns).J, 1.2**2, atol=1e-13)


@pytest.mark.parametrize("name,field", [("kite", "fourier2d(2,1,0.5)"),
                                        ("ellipsoid(1,1.3,0.8)", "poly(x*y,y*z,z*x)")])
def test_cofactor_cross_check(grids, name, field):
    g = grids[name]
    r = 0.05 * make_field(field, g.surface)
    assert np.max(np.abs(cofactor_W(g, r) - wedge_W(g, r))) < 1e-13


def test_recursion_vanishes_and_cofactor():
    rng = np.random.default_rng(0)
    a2 = rng.normal(size=(5, 2, 2))
    a3 = rng.normal(size=(5, 3, 3))
    assert np.max(np.abs(b_matrix(a2, 2))) < 1e-12
    assert np.max(np.abs(b_matrix(a3, 3))) < 1e-11
    cof = np.linalg.det(a3)[:, None, None] * np.transpose(np.linalg.inv(a3), (0, 2, 1))
    assert np.max(np.abs(b_matrix(a3, 2) - 2 * cof)) < 1e-11


def test_dm_w_examples(shapes, grids):
    g = grids["circle"]
    n = make_field("normal", shapes["circle"])
    assert np.max(np.abs(dm_W(g, n, 1) - g.normals)) < 1e-14
    xi = make_field("fourier2d(3,1,0.2)", shapes["circle"])
    assert not np.any(dm_W(g, xi, 2))
    c = make_field("constant(0.3,-0.2)", shapes["circle"])
    assert not np.any(dm_W(g, c, 1))
    gs = grids["sphere"]
    assert not np.any(dm_W(gs, make_field("poly(x*y,z,x)", shapes["sphere"]), 3))


def test_dm_w_second_order_3d_matches_fd(shapes, grids):
    g = grids["ellipsoid(1,1.3,0.8)"]
    xi = make_field("poly(x*y,y*z,z*x)", g.surface)
    exact = dm_W(g, xi, 2)
    errs = [np.max(np.abs(second(lambda s: g.deformed(s * xi).W, g.W, t) - exact))
            for t in LADDER]
    assert max(errs) < 1e-9  # W is quadratic in t for d=3


def test_dj_examples(shapes, grids):
    assert np.allclose(dJ(grids["circle"], make_field("normal", shapes["circle"])), 1, atol=1e-14)
    assert np.allclose(dJ(grids["sphere"], make_field("normal", shapes["sphere"])), 2, atol=1e-13)
    assert not np.any(dJ(grids["kite"], make_field("constant(1,2)", shapes["kite"])))


def test_dn_examples(shapes, grids):
    for name in ("circle", "sphere"):
        n = make_field("normal", shapes[name])
        assert np.max(np.abs(dN(grids[name], n))) < 1e-13
    assert not np.any(dN(grids["kite"], make_field("constant(1,2)", shapes["kite"])))


def test_dn_shear_order_two(shapes, grids):
    g = grids["circle"]
    xi = make_field("shear(0)", shapes["circle"])
    exact = dN(g, xi)
    errs = [np.max(np.abs(central(lambda s: g.deformed(s * xi).normals, t) - exact))
            for t in LADDER]
    assert fit_order(errs) >= 1.9


@pytest.mark.parametrize("name,field", [("circle", "fourier2d(2,1,0.5)"),
                                        ("ellipse(1,0.6)", "fourier2d(1,1,0.5)"),
                                        ("kite", "fourier2d(3,0.5,1)"),
                                        ("ellipsoid(1,1.3,0.8)", "poly(y**2,0,x*z)")])
def test_first_and_second_order(grids, name, field):
    g = grids[name]
    xi = make_field(field, g.surface)
    fam_j = lambda s: g.deformed(s * xi).J  # noqa: E731
    fam_n = lambda s: g.deformed(s * xi).normals  # noqa: E731
    for fam, exact in ((fam_j, dJ(g, xi)), (fam_n, dN(g, xi))):
        errs = [np.max(np.abs(central(fam, t) - exact)) for t in LADDER]
        assert fit_order(errs) >= 1.9
    for fam, base, exact in ((fam_j, g.J, d2J(g, xi, xi)), (fam_n, g.normals, d2N(g, xi, xi))):
        errs = [np.max(np.abs(second(fam, base, t) - exact)) for t in LADDER]
        assert fit_order(errs) >= 1.9


def test_dn_orthogonal_at_deformed_state(shapes, grids):
    g = grids["kite"]
    r0 = 0.05 * make_field("fourier2d(2,1,0.5)", shapes["kite"])
    xi = make_field("shear(1)", shapes["kite"])
    state = g.deformed(r0)
    v = dN(g, xi, r0)
    dots = np.abs(np.einsum("ni,ni->n", v, state.normals))
    assert np.max(dots) <= 1e-12 * max(1.0, np.max(np.abs(v)))


def test_derivative_at_deformed_state_matches_fd(shapes, grids):
    g = grids["ellipse(1,0.6)"]
    r0 = 0.05 * make_field("fourier2d(2,1,0.5)", g.surface)
    xi = make_field("fourier2d(1,0.3,1)", g.surface)
    exact_j, exact_n = dJ(g, xi, r0), dN(g, xi, r0)
    errs_j, errs_n = [], []
    for t in LADDER:
        plus, minus = g.deformed(r0 + t * xi), g.deformed(r0 - t * xi)
        errs_j.append(np.max(np.abs((plus.J - minus.J) / (2 * t) - exact_j)))
        errs_n.append(np.max(np.abs((plus.normals - minus.normals) / (2 * t) - exact_n)))
    assert fit_order(errs_j) >= 1.9 and fit_order(errs_n) >= 1.9


def test_second_derivative_examples(shapes, grids):
    c, s = grids["circle"], grids["sphere"]
    nc = make_field("normal", shapes["circle"])
    ns = make_field("normal", shapes["sphere"])
    assert np.max(np.abs(d2J(c, nc, nc))) < 1e-13
    assert np.max(np.abs(d2J(s, ns, ns) - 2)) < 1e-12
    assert np.max(np.abs(d2N(c, nc, nc))) < 1e-13
    assert np.max(np.abs(d2N(s, ns, ns))) < 1e-12
    k = make_field("constant(0.2,0.1)", shapes["circle"])
    assert not np.any(d2J(c, k, k)) and not np.any(d2N(c, k, k))


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 4), st.floats(-1, 1), st.floats(-1, 1))
def test_second_derivatives_symmetric(k, a, b):
    from shapebie.geometry import kite
    g = SurfaceGrid.build(kite(), 32)
    x1 = make_field(f"fourier2d({k},{a},{b})", g.surface)
    x2 = make_field("shear(0)", g.surface)
    assert np.max(np.abs(d2J(g, x1, x2) - d2J(g, x2, x1))) < 1e-13
    assert np.max(np.abs(d2N(g, x1, x2) - d2N(g, x2, x1))) < 1e-13
    assert np.max(np.abs(np.einsum("ni,ni->n", dN(g, x1), g.normals))) < 1e-13


# ---------------------------------------------------------------------------
# pullback


def test_pullback_examples(shapes, grids):
    g = grids["circle"]
    theta = g.params[:, 0]
    t = 0.2
    r = t * make_field("normal", shapes["circle"])
    assert np.allclose(pullback(lambda x: x[:, 0], g, r), (1 + t) * np.cos(theta), atol=1e-14)
    assert np.array_equal(pullback(lambda x: np.ones(len(x)), g, r), np.ones(g.size))
    vals = np.sin(3 * theta)
    assert np.array_equal(pullback(pushforward(vals, g, r), g, r), vals)
    assert np.array_equal(pullback(lambda x: x[:, 1], g), g.positions[:, 1])


def test_material_to_shape(shapes, grids):
    g = grids["kite"]
    xi = make_field("fourier2d(2,1,0.5)", shapes["kite"])
    xv = xi.value(g.positions)
    grad_x1 = np.tile([1.0, 0.0], (g.size, 1))
    # u_r(x) = x_1 for every r: the material derivative is xi_1, the shape derivative zero
    assert np.max(np.abs(material_to_shape(xv[:, 0], grad_x1, xv))) == 0
    u_dot = np.cos(g.params[:, 0])
    assert np.array_equal(material_to_shape(u_dot, np.zeros_like(xv), xv), u_dot)
    assert np.array_equal(material_to_shape(u_dot, grad_x1, np.zeros_like(xv)), u_dot)
