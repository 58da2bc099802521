import json

import mpmath as mp
import numpy as np
import pytest

from shapebie.errors import DimensionError, ParameterError, TooCloseToBoundary
from shapebie.export import export_operator, read_binary
from shapebie.fields import make_field
from shapebie.geometry import SurfaceGrid, make_shape
from shapebie.operators import (OperatorMatrix, adjoint_defect, assemble_D, assemble_dD_op,
                                assemble_dV, assemble_Kprime, assemble_N, assemble_pulled_back,
                                assemble_V, circle_multiplier_N, circle_multiplier_V,
                                eval_dpotential, eval_potential, hypersingular_bilinear,
                                kress_weights, pairing)

from conftest import LADDER, fit_order

N = 128
SHAPES_2D = ["circle", "ellipse(1,0.6)", "kite"]
KAPPAS = [1.0, 2 + 0.5j]


def _quad_multiplier(kappa, n, dps=20):
    """int_0^{2pi} G(2|sin(s/2)|) e^{ins} ds on the unit circle, by tanh-sinh quadrature."""
    with mp.workdps(dps):
        k = mp.mpc(kappa)
        f = lambda s: 0.25j * mp.hankel1(0, k * 2 * mp.sin(s / 2)) * mp.cos(n * s)
        return complex(2 * mp.quad(f, [0, mp.pi / 2, mp.pi]))


def _multiplier(mat, grid, n):
    u = np.exp(1j * n * grid.params[:, 0])
    return (mat @ u) @ np.conj(u) / grid.size


@pytest.fixture(scope="module")
def oracle():
    cache = {}

    def get(kappa, n):
        key = (kappa, abs(n))
        if key not in cache:
            cache[key] = _quad_multiplier(kappa, abs(n))
        return cache[key]
    return get


@pytest.mark.parametrize("kappa", KAPPAS)
def test_closed_form_multiplier_against_quadrature(oracle, kappa):
    for n in (0, 1, 4, 17):
        q = oracle(kappa, n)
        assert abs(circle_multiplier_V(kappa, n) - q) <= 1e-12 * abs(q)


@pytest.mark.parametrize("kappa", KAPPAS)
def test_V_multipliers(grids, oracle, kappa):
    g = grids["circle"]
    mat = assemble_V(g, kappa).matrix
    for n in (0, 1, 2, 5, 11, 20, 32):
        q = oracle(kappa, n)
        assert abs(_multiplier(mat, g, n) - q) <= 1e-8 * abs(q)


@pytest.mark.parametrize("kappa", KAPPAS)
def test_N_multipliers(grids, oracle, kappa):
    g = grids["circle"]
    mat = assemble_N(g, kappa).matrix
    for n in (0, 1, 3, 9, 32):
        q = kappa**2 * (oracle(kappa, n + 1) + oracle(kappa, n - 1)) / 2 - n**2 * oracle(kappa, n)
        assert abs(_multiplier(mat, g, n) - q) <= 1e-6 * abs(q)
        assert abs(circle_multiplier_N(kappa, n) - q) <= 1e-10 * abs(q)


def test_mapping_order(grids):
    g = grids["circle"]
    mat = assemble_V(g, 1.0).matrix
    ns = np.arange(4, N // 4 + 1)
    lam = np.array([abs(_multiplier(mat, g, n)) for n in ns])
    slope = np.polyfit(np.log(ns), np.log(lam), 1)[0]
    assert abs(slope + 1) < 0.05


def test_kress_weights_symmetric_circulant():
    w = kress_weights(16)
    assert np.max(np.abs(w - w.T)) < 1e-14
    assert np.max(np.abs(np.roll(np.roll(w, 1, 0), 1, 1) - w)) < 1e-14


@pytest.mark.parametrize("shape", SHAPES_2D)
def test_invariants(grids, shape):
    g = grids[shape]
    for kappa in KAPPAS:
        v = assemble_V(g, kappa)
        d = assemble_D(g, kappa)
        kp = assemble_Kprime(g, kappa)
        nm = assemble_N(g, kappa)
        assert v.tag == "V" and v.size == N
        assert adjoint_defect(d, kp) <= 1e-10
        w = g.weights
        sym = nm.matrix * w[:, None]
        assert np.max(np.abs(sym - sym.T)) <= 1e-9 * np.max(np.abs(sym))
    if shape == "circle":
        for kappa in KAPPAS:
            m = assemble_V(g, kappa).matrix
            assert np.max(np.abs(m - m.T)) <= 1e-12


@pytest.mark.parametrize("shape", SHAPES_2D)
def test_N_bilinear_form(grids, shape):
    g = grids[shape]
    th = g.params[:, 0]
    u = np.exp(np.cos(th))
    v = np.sin(2 * th) + 0.3
    kappa = 2 + 0.5j
    lhs = pairing(g, assemble_N(g, kappa).apply(u), v)
    rhs = hypersingular_bilinear(g, kappa, u, v)
    assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(lhs))
    assert abs(pairing(g, assemble_N(g, kappa).apply(v), u) - lhs) <= 1e-9 * max(1.0, abs(lhs))


def test_N_on_constant(grids):
    g = grids["circle"]
    kappa = 1.0
    one = np.ones(N)
    v = assemble_V(g, kappa).matrix
    nn = g.normals @ g.normals.T
    ref = kappa**2 * (v * nn) @ one
    assert np.max(np.abs(assemble_N(g, kappa).apply(one) - ref)) < 1e-12


def test_self_convergence_kite(shapes):
    kite = shapes["kite"]
    vals = []
    for n in (32, 64, 128, 256):
        g = SurfaceGrid.build(kite, n)
        u = np.exp(np.cos(g.params[:, 0]))
        vals.append(assemble_V(g, 1.0).apply(u)[0])
    errs = [abs(v - vals[-1]) for v in vals[:-1]]
    assert errs[1] < errs[0] / 100 and errs[2] < 1e-10


def test_errors(grids):
    with pytest.raises(DimensionError):
        assemble_V(grids["sphere"], 1.0)
    with pytest.raises(ParameterError):
        assemble_V(grids["circle"], 0)
    with pytest.raises(ParameterError):
        assemble_pulled_back(grids["circle"], 1.0, None, "W")
    with pytest.raises(ParameterError):
        OperatorMatrix(np.zeros((3, 3)), grids["circle"], "V", 1.0)


def test_pulled_back_identity_and_translation(grids, shapes):
    g = grids["kite"]
    for tag, fn in (("V", assemble_V), ("D", assemble_D), ("K'", assemble_Kprime),
                    ("N", assemble_N)):
        assert np.array_equal(assemble_pulled_back(g, 1.0, None, tag).matrix, fn(g, 1.0).matrix)
    c = make_field("constant(0.5,-0.25)", shapes["kite"])
    for tag in ("V", "D"):
        base = assemble_pulled_back(g, 1.0, None, tag).matrix
        moved = assemble_pulled_back(g, 1.0, c, tag).matrix
        assert np.max(np.abs(moved - base)) <= 1e-13


def test_two_route_assembly(grids, shapes):
    g = grids["circle"]
    t = 0.1
    r = make_field("normal", shapes["circle"]) * t
    direct = SurfaceGrid.build(make_shape(f"circle({1 + t})"), N)
    for tag, fn in (("V", assemble_V), ("D", assemble_D), ("N", assemble_N)):
        a = assemble_pulled_back(g, 2 + 0.5j, r, tag).matrix
        b = fn(direct, 2 + 0.5j).matrix
        assert np.max(np.abs(a - b)) <= 1e-10


def test_deformed_double_layer_finite(grids, shapes):
    r = make_field("fourier2d(2,1,0)", shapes["circle"]) * 0.1
    m = assemble_pulled_back(grids["circle"], 1.0, r, "D").matrix
    assert np.all(np.isfinite(m)) and np.max(np.abs(np.diag(m))) < 1


@pytest.mark.parametrize("shape", SHAPES_2D)
@pytest.mark.parametrize("kappa", KAPPAS)
@pytest.mark.parametrize("which", ["V", "D"])
def test_operator_derivative_order(grids, shapes, shape, kappa, which):
    g = grids[shape]
    deriv = assemble_dV if which == "V" else assemble_dD_op
    xi = make_field("fourier2d(2,1,0.5)" if shape != "circle" else "normal", shapes[shape])
    base = assemble_pulled_back(g, kappa, None, which).matrix
    dm = deriv(g, kappa, xi).matrix
    rem = [np.max(np.abs(assemble_pulled_back(g, kappa, xi * t, which).matrix - base - t * dm))
           for t in LADDER]
    assert fit_order(rem) >= 1.9
    cen = [np.max(np.abs((assemble_pulled_back(g, kappa, xi * t, which).matrix
                          - assemble_pulled_back(g, kappa, xi * -t, which).matrix) / (2 * t) - dm))
           for t in LADDER]
    assert fit_order(cen) >= 1.9


@pytest.mark.parametrize("which", ["V", "D"])
def test_operator_derivative_constant_and_linear(grids, shapes, which):
    g = grids["ellipse(1,0.6)"]
    deriv = assemble_dV if which == "V" else assemble_dD_op
    c = make_field("constant(0.3,-0.2)", shapes["ellipse(1,0.6)"])
    assert np.all(deriv(g, 2 + 0.5j, c).matrix == 0)
    xi = make_field("fourier2d(3,0.5,1)", shapes["ellipse(1,0.6)"])
    a = deriv(g, 1.0, xi * 2.0).matrix
    b = deriv(g, 1.0, xi).matrix
    assert np.max(np.abs(a - 2 * b)) <= 1e-14 * np.max(np.abs(a))


# ---------------------------------------------------------------------------
# potentials


def test_potential_zero_density(grids):
    s = eval_potential(grids["kite"], 1.0, 0.0, [[3.0, 0.0]])
    assert s.values[0] == 0 and s.side == ("exterior",)


def test_potential_sides(grids):
    s = eval_potential(grids["circle"], 1.0, 1.0, [[0.2, 0.1], [2.0, 0.0]])
    assert s.side == ("interior", "exterior")
    assert abs(s.min_distance - 0.7763932) < 1e-3


def test_potential_too_close(grids):
    with pytest.raises(TooCloseToBoundary):
        eval_potential(grids["circle"], 1.0, 1.0, [[1.02, 0.0]])


def test_sphere_single_layer(grids):
    s = eval_potential(grids["sphere"], 1.0, 1.0, [[2.0, 0.0, 0.0]])
    assert abs(s.values[0] - np.sin(1.0) * np.exp(2j) / 2) <= 1e-8


@pytest.mark.parametrize("shape,d", [("circle", 2), ("sphere", 3)])
def test_radiating_decay(grids, shape, d):
    e = np.eye(d)[0]
    s = eval_potential(grids[shape], 1.0, 1.0, [10 * e, 100 * e])
    ratio = abs(s.values[0]) / abs(s.values[1])
    assert abs(ratio / 10 ** ((d - 1) / 2) - 1) < 0.05


def test_double_layer_self_convergence(shapes):
    vals = []
    for n in (32, 64, 128):
        g = SurfaceGrid.build(shapes["kite"], n)
        vals.append(eval_potential(g, 1.0, lambda x: np.exp(x[:, 0]), [[3.0, 1.0]], "double")
                    .values[0])
    assert abs(vals[1] - vals[2]) < 1e-12 * abs(vals[2]) + 1e-14


def _dpotential_errors(grid, xi, points, u=1.0, kappa=1.0):
    ana = eval_dpotential(grid, kappa, u, points, xi).values
    errs = []
    for t in LADDER:
        fp = eval_potential(grid, kappa, u, points, r=xi * t).values
        fm = eval_potential(grid, kappa, u, points, r=xi * -t).values
        errs.append(np.max(np.abs((fp - fm) / (2 * t) - ana)))
    return errs


def test_dpotential_circle_normal(grids, shapes):
    xi = make_field("normal", shapes["circle"])
    errs = _dpotential_errors(grids["circle"], xi, [[2.0, 0.0]])
    assert errs[-1] <= 1e-6
    assert fit_order(errs) >= 1.9
    # for this radial case the potential is J0(R) H0(2) * pi R i / 2 as a function of R
    from shapebie.special import besselj, hankel1
    exact = 0.5j * np.pi * (besselj(0, 1.0) - besselj(1, 1.0)) * hankel1(0, 2.0)
    got = eval_dpotential(grids["circle"], 1.0, 1.0, [[2.0, 0.0]], xi).values[0]
    assert abs(got - exact) <= 1e-10


@pytest.mark.parametrize("shape,field", [("kite", "fourier2d(2,1,0.5)"),
                                         ("sphere", "poly(x*y,y*z,z*x)")])
def test_dpotential_order(grids, shapes, shape, field):
    xi = make_field(field, shapes[shape])
    d = shapes[shape].dim
    pts = np.array([[2.5] + [0.3] * (d - 1), [0.0, -2.2] + [0.4] * (d - 2)])
    errs = _dpotential_errors(grids[shape], xi, pts, u=lambda x: 1 + x[:, 0])
    assert fit_order(errs) >= 1.9 and errs[-1] <= 1e-5


def test_dpotential_zero_field(grids, shapes):
    xi = make_field("constant(0,0)", shapes["circle"])
    assert np.all(eval_dpotential(grids["circle"], 1.0, 1.0, [[2.0, 0.0]], xi).values == 0)


@pytest.mark.parametrize("shape,field", [("circle", "fourier2d(5,1,0)"), ("kite", "normal")])
def test_dpotential_regularity_loss(grids, shapes, shape, field):
    g = grids[shape]
    xi = make_field(field, shapes[shape])
    x0 = np.max(g.positions[:, 0])
    near = _dpotential_errors(g, xi, [[x0 + 0.1, 0.0]])[-1]
    far = _dpotential_errors(g, xi, [[x0 + 3.0, 0.0]])[-1]
    assert near >= 10 * far


# ---------------------------------------------------------------------------
# export


def test_export_roundtrip(grids, tmp_path):
    op = assemble_D(grids["kite"], 2 + 0.5j)
    stem = tmp_path / "kite_D"
    export_operator(op, str(stem))
    assert np.array_equal(read_binary(f"{stem}.bin"), op.matrix)
    meta = json.loads((tmp_path / "kite_D.json").read_text())
    assert meta == {"shape": "kite", "N": N, "operator": "D", "kappa_re": 2.0,
                    "kappa_im": 0.5, "deformation": None}
    lines = (tmp_path / "kite_D.csv").read_text().splitlines()
    assert lines[0] == "row,col,re,im" and len(lines) == N * N + 1
    r, c, re, im = lines[1 + 5].split(",")
    assert complex(float(re), float(im)) == op.matrix[int(r), int(c)]
