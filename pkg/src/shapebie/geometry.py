"""Closed-form surfaces, deformations and the coefficient functions J_r, n_r, W(r).

Curves (d=2) use one periodic chart ``theta -> x(theta)``; surfaces (d=3) use
one chart ``(phi, u) -> x`` of sphere type with ``u = cos(polar angle)`` and the
poles excluded from the open domain.  A deformed surface is the composition
``(Id + r) o chart``; its tangents are ``(Id + Dr) e_i``.

All derivative formulas are expressed through the tangential Jacobian

    A = [tau_r0 D_{Gamma_r0}(tau_r0^{-1} xi)] = sum_a (d_a xi) (x) e^a(r0),

with ``d_a xi`` the parametric derivatives of xi on the reference chart and
``e^a(r0)`` the dual basis of the deformed tangents, so that ``div = Tr A`` and
``[grad_Gamma xi] = A^T``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import sympy as sp
from scipy.spatial import cKDTree

from .errors import ConfigError, DeformationTooLarge, OutOfChart
from .fields import COORDS, Field, _floats, _lambdify, parse_id

PARAMS = sp.symbols("p0:2", real=True)

MIN_NODE_DISTANCE = 1e-10
MIN_GRAM = 1e-12


@dataclass
class Jet:
    position: np.ndarray  # (n, d)
    tangents: np.ndarray  # (n, d-1, d)
    second: np.ndarray  # (n, d-1, d-1, d)


class Chart:
    """Closed-form parametrisation with exact first and second derivatives."""

    def __init__(self, exprs, pdim):
        self.exprs = [sp.sympify(e) for e in exprs]
        self.pdim = pdim
        self.dim = len(exprs)

    @cached_property
    def _fns(self):
        ps = PARAMS[: self.pdim]

        def lam(e):
            fn = sp.lambdify(ps, e, "numpy")
            return lambda q: np.broadcast_to(
                np.asarray(fn(*q.T), dtype=float), q.shape[:1]).copy()

        pos = [lam(e) for e in self.exprs]
        d1 = [[lam(sp.diff(e, ps[a])) for e in self.exprs] for a in range(self.pdim)]
        d2 = [[[lam(sp.diff(e, ps[a], ps[b])) for e in self.exprs]
               for b in range(self.pdim)] for a in range(self.pdim)]
        return pos, d1, d2

    def jets(self, params):
        pos, d1, d2 = self._fns
        q = np.atleast_2d(params)
        position = np.stack([f(q) for f in pos], axis=-1)
        tangents = np.stack([np.stack([f(q) for f in row], axis=-1) for row in d1], axis=1)
        second = np.stack([np.stack([np.stack([f(q) for f in r2], axis=-1)
                                     for r2 in r1], axis=1) for r1 in d2], axis=1)
        return Jet(position, tangents, second)


def wedge(tangents, orientation=1.0):
    """Exterior product of the d-1 tangent vectors, as a vector in R^d."""
    if tangents.shape[-2] == 1:
        e = tangents[..., 0, :]
        return orientation * np.stack([e[..., 1], -e[..., 0]], axis=-1)
    return orientation * np.cross(tangents[..., 0, :], tangents[..., 1, :])


class Surface:
    """Reference surface given by a single chart."""

    def __init__(self, name, chart, levelset=None, interior_point=None, orientation=1.0):
        self.name = name
        self.chart = chart
        self.dim = chart.dim
        self.levelset = levelset
        self.interior_point = np.zeros(self.dim) if interior_point is None else interior_point
        self.orientation = orientation

    @property
    def root(self):
        return self

    @property
    def deformation(self):
        return None

    def check_params(self, params):
        q = np.atleast_2d(params)
        if self.dim == 3 and np.any(np.abs(q[:, 1]) >= 1.0):
            raise OutOfChart("parameter u must lie in the open interval (-1, 1)")
        if not np.all(np.isfinite(q)):
            raise OutOfChart("non-finite chart parameter")
        return q

    def jets(self, params):
        return self.chart.jets(self.check_params(params))

    def __repr__(self):
        return f"Surface({self.name!r})"


class DeformedSurface(Surface):
    """The surface (Id + r) Gamma, charted by (Id + r) o phi."""

    def __init__(self, base, field):
        self.base = base
        self.field = field
        self.name = f"{base.name}+[{field.name}]"
        self.chart = base.chart
        self.dim = base.dim
        self.levelset = None
        self.interior_point = base.interior_point
        self.orientation = base.orientation

    @property
    def root(self):
        return self.base.root

    @property
    def deformation(self):
        return self.field

    def jets(self, params):
        j = self.base.jets(params)
        x = j.position
        v = self.field.value(x)
        dv = self.field.jacobian(x)
        hv = self.field.hessian(x)
        tangents = j.tangents + np.einsum("nij,naj->nai", dv, j.tangents)
        second = (j.second + np.einsum("nij,nabj->nabi", dv, j.second)
                  + np.einsum("nijk,naj,nbk->nabi", hv, j.tangents, j.tangents))
        return Jet(x + v, tangents, second)


# ---------------------------------------------------------------------------
# shape registry


def circle(radius=1.0):
    t = PARAMS[0]
    x, y = COORDS[:2]
    return Surface("circle" if radius == 1.0 else f"circle({radius:g})",
                   Chart([radius * sp.cos(t), radius * sp.sin(t)], 1),
                   levelset=x**2 + y**2 - radius**2)


def ellipse(a, b):
    t = PARAMS[0]
    x, y = COORDS[:2]
    return Surface(f"ellipse({a:g},{b:g})", Chart([a * sp.cos(t), b * sp.sin(t)], 1),
                   levelset=x**2 / a**2 + y**2 / b**2 - 1)


def kite():
    t = PARAMS[0]
    x, y = COORDS[:2]
    c = sp.Rational(13, 20)
    chart = Chart([sp.cos(t) + c * sp.cos(2 * t) - c, sp.Rational(3, 2) * sp.sin(t)], 1)
    # cos(t) = x + 1.3 y^2 / 2.25 and sin(t) = y / 1.5 on the curve
    levelset = (x + 2 * c * y**2 / sp.Rational(9, 4)) ** 2 + y**2 / sp.Rational(9, 4) - 1
    return Surface("kite", chart, levelset=levelset)


def ellipsoid(a, b, c, name=None):
    phi, u = PARAMS
    s = sp.sqrt(1 - u**2)
    x, y, z = COORDS
    return Surface(name or f"ellipsoid({a:g},{b:g},{c:g})",
                   Chart([a * s * sp.cos(phi), b * s * sp.sin(phi), c * u], 2),
                   levelset=x**2 / a**2 + y**2 / b**2 + z**2 / c**2 - 1)


def sphere(radius=1.0):
    name = "sphere" if radius == 1.0 else f"sphere({radius:g})"
    return ellipsoid(radius, radius, radius, name=name)


def make_shape(spec):
    """Build a reference surface from a registry id."""
    name, args = parse_id(spec)
    vals = _floats(args, spec)
    expected = {"circle": (0, 1), "ellipse": (2,), "kite": (0,), "sphere": (0, 1),
                "ellipsoid": (3,)}
    if name not in expected:
        raise ConfigError(f"unknown shape id {spec!r}")
    if len(vals) not in expected[name]:
        raise ConfigError(f"{spec!r}: wrong number of arguments")
    if any(v <= 0 for v in vals):
        raise ConfigError(f"{spec!r}: dimensions must be positive")
    if name == "circle":
        return circle(*vals)
    if name == "ellipse":
        return ellipse(*vals)
    if name == "kite":
        return kite()
    if name == "sphere":
        return sphere(*vals)
    return ellipsoid(*vals)


# ---------------------------------------------------------------------------
# grids


def parameter_nodes(dim, n):
    """Quadrature parameters and parameter-space weights.

    d=2: ``n`` uniform nodes in theta.  d=3: ``n = (n_u, n_phi)`` with
    Gauss-Legendre in u and uniform in phi.
    """
    if dim == 2:
        n = int(n)
        theta = 2 * np.pi * np.arange(n) / n
        return theta[:, None], np.full(n, 2 * np.pi / n)
    n_u, n_phi = (n, 2 * n) if np.isscalar(n) else n
    u, wu = np.polynomial.legendre.leggauss(int(n_u))
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    pp, uu = np.meshgrid(phi, u, indexing="xy")
    ww = np.outer(wu, np.full(n_phi, 2 * np.pi / n_phi))
    return np.stack([pp.ravel(), uu.ravel()], axis=-1), ww.ravel()


def _dual_basis(tangents):
    gram = np.einsum("naj,nbj->nab", tangents, tangents)
    det = np.linalg.det(gram)
    bad = ~(det > 0)
    if np.any(bad):
        # degenerate nodes get NaN duals; admissibility checks reject them
        gram = gram.copy()
        gram[bad] = np.eye(gram.shape[-1])
    dual = np.einsum("nab,nbj->naj", np.linalg.inv(gram), tangents)
    dual[bad] = np.nan
    return dual, det


class SurfaceGrid:
    """Node data on Gamma_r for a fixed set of reference chart parameters."""

    def __init__(self, surface, params, param_weights):
        self.surface = surface
        self.dim = surface.dim
        self.params = np.atleast_2d(params)
        self.param_weights = np.asarray(param_weights, dtype=float)
        jet = surface.jets(self.params)
        self.positions = jet.position
        self.tangents = jet.tangents
        self.second = jet.second
        root = surface.root
        if root is surface:
            ref = jet
        else:
            ref = root.jets(self.params)
        self.ref_positions = ref.position
        self.ref_tangents = ref.tangents
        self.ref_second = ref.second
        self.dual, self.gram = _dual_basis(self.tangents)
        ref_area = np.linalg.norm(wedge(ref.tangents, root.orientation), axis=-1)
        self.W = wedge(self.tangents, surface.orientation) / ref_area[:, None]
        self.J = np.linalg.norm(self.W, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            self.normals = self.W / self.J[:, None]
        self.weights = self.param_weights * ref_area * self.J

    @classmethod
    def build(cls, surface, n):
        params, weights = parameter_nodes(surface.dim, n)
        return cls(surface, params, weights)

    @property
    def size(self):
        return len(self.params)

    def deformed(self, r, check=True):
        """Grid on deform(surface, r) at the same chart parameters."""
        if r is None:
            return self
        grid = SurfaceGrid(DeformedSurface(self.surface, r), self.params, self.param_weights)
        if check:
            _check_admissible(grid)
        return grid

    def field_jet(self, field):
        """(value, parametric first derivatives) of a reference field at nodes."""
        x = self.ref_positions
        return field.value(x), np.einsum("nij,naj->nai", field.jacobian(x), self.ref_tangents)

    def field_second(self, field):
        """Second parametric derivatives d_a d_b of a reference field (n, p, p, d)."""
        x = self.ref_positions
        return (np.einsum("nij,nabj->nabi", field.jacobian(x), self.ref_second)
                + np.einsum("nijk,naj,nbk->nabi", field.hessian(x),
                            self.ref_tangents, self.ref_tangents))

    def tangential_jacobian(self, field):
        """A = sum_a d_a(field) (x) e^a on this grid (vector or scalar field)."""
        x = self.ref_positions
        jac = field.jacobian(x)
        if field.rank == 0:
            da = np.einsum("nj,naj->na", jac, self.ref_tangents)
            return np.einsum("na,naj->nj", da, self.dual)
        da = np.einsum("nij,naj->nai", jac, self.ref_tangents)
        return np.einsum("nai,naj->nij", da, self.dual)


def _check_admissible(grid):
    if np.any(grid.gram <= MIN_GRAM) or not np.all(np.isfinite(grid.positions)):
        raise DeformationTooLarge("deformed chart is not immersive (Gram determinant <= 1e-12)")
    dist, _ = cKDTree(grid.positions).query(grid.positions, k=2)
    if np.min(dist[:, 1]) < MIN_NODE_DISTANCE:
        raise DeformationTooLarge("deformed nodes collide (distance < 1e-10)")


_CHECK_RESOLUTION = {2: 256, 3: (16, 32)}


def deform(surface, r, check_grid=None):
    """Return (Id + r) Gamma; admissibility checked on ``check_grid`` nodes."""
    deformed = DeformedSurface(surface, r)
    if check_grid is None:
        params, weights = parameter_nodes(surface.dim, _CHECK_RESOLUTION[surface.dim])
    else:
        params, weights = check_grid.params, check_grid.param_weights
    _check_admissible(SurfaceGrid(deformed, params, weights))
    return deformed


def tangent_basis(surface, params):
    """The d-1 tangent vectors (Id + Dr) d_a phi at chart parameters."""
    return surface.jets(params).tangents


# ---------------------------------------------------------------------------
# coefficient functions and their Gateaux derivatives


def _state(grid, r0):
    return grid if r0 is None else grid.deformed(r0)


def wedge_W(grid, r=None):
    """W(r) = wedge of deformed tangents / |wedge of reference tangents|."""
    return _state(grid, r).W


def jacobian_J(grid, r=None):
    return _state(grid, r).J


def normal_N(grid, r=None):
    """tau_r n_r at the nodes."""
    return _state(grid, r).normals


def cofactor_W(grid, r):
    """Cross-check W(r) = cof(Id + Dr) n through the ambient Jacobian of r."""
    eye = np.eye(grid.dim)
    m = eye + r.jacobian(grid.ref_positions)
    cof = np.linalg.det(m)[:, None, None] * np.transpose(np.linalg.inv(m), (0, 2, 1))
    return np.einsum("nij,nj->ni", cof, grid.normals)


def b1(a):
    """B_1(A) = Tr(A) Id - A^T for a stack of matrices."""
    tr = np.trace(a, axis1=-2, axis2=-1)
    return tr[..., None, None] * np.eye(a.shape[-1]) - np.swapaxes(a, -1, -2)


def b_matrix(a, m):
    """B_m(A) from the recursion with B_0 = Id (no truncation for m >= d)."""
    eye = np.broadcast_to(np.eye(a.shape[-1]), a.shape)
    bs = [eye]
    powers = [eye, a]
    for k in range(2, m + 1):
        powers.append(powers[-1] @ a)
    for mm in range(1, m + 1):
        acc = np.zeros_like(a)
        for i in range(1, mm + 1):
            coef = (-1) ** (i + 1) * np.prod(np.arange(mm - i + 1, mm, dtype=float))
            acc = acc + coef * (b1(powers[i]) @ bs[mm - i])
        bs.append(acc)
    return bs[m]


def dm_W(grid, xi, m, r0=None):
    """m-th directional derivative of r -> W(r) at r0 in direction xi."""
    if m < 1:
        raise ValueError("order m must be >= 1")
    state = _state(grid, r0)
    if m >= grid.dim:
        return np.zeros_like(state.W)
    a = state.tangential_jacobian(xi)
    return np.einsum("nij,nj->ni", b_matrix(a, m), state.W)


def dJ(grid, xi, r0=None):
    """J_r0 * Tr(A); equals div_Gamma xi at r0 = 0."""
    state = _state(grid, r0)
    return state.J * np.trace(state.tangential_jacobian(xi), axis1=1, axis2=2)


def dN(grid, xi, r0=None):
    """-A^T N(r0)."""
    state = _state(grid, r0)
    a = state.tangential_jacobian(xi)
    return -np.einsum("nji,nj->ni", a, state.normals)


def _surface_grads(grid, xi1, xi2):
    g1 = np.swapaxes(grid.tangential_jacobian(xi1), 1, 2)
    g2 = np.swapaxes(grid.tangential_jacobian(xi2), 1, 2)
    return g1, g2


def d2J(grid, xi1, xi2):
    """Second derivative of r -> J_r at r = 0 (bilinear, symmetric)."""
    g1, g2 = _surface_grads(grid, xi1, xi2)
    n = grid.normals
    g1n = np.einsum("nij,nj->ni", g1, n)
    g2n = np.einsum("nij,nj->ni", g2, n)
    div1 = np.trace(g1, axis1=1, axis2=2)
    div2 = np.trace(g2, axis1=1, axis2=2)
    return (-np.einsum("nij,nji->n", g2, g1) + div1 * div2
            + np.einsum("ni,ni->n", g1n, g2n))


def d2N(grid, xi1, xi2):
    """Second derivative of r -> tau_r n_r at r = 0 (bilinear, symmetric)."""
    g1, g2 = _surface_grads(grid, xi1, xi2)
    n = grid.normals
    g1n = np.einsum("nij,nj->ni", g1, n)
    g2n = np.einsum("nij,nj->ni", g2, n)
    return (np.einsum("nij,nj->ni", g2, g1n) + np.einsum("nij,nj->ni", g1, g2n)
            - np.einsum("ni,ni->n", g1n, g2n)[:, None] * n)


# ---------------------------------------------------------------------------
# pullback and material/shape derivatives


def pullback(u, grid, r=None):
    """(tau_r u)(x) = u(x + r(x)); ``u`` is a callable on points or node values."""
    if callable(u):
        return np.asarray(u(_state(grid, r).positions))
    return np.array(u, copy=True)


def pushforward(u, grid, r=None):
    """Inverse of :func:`pullback` on node values."""
    return np.array(u, copy=True)


def material_to_shape(u_dot, grad_u0, xi_values):
    """u'_0 = u_dot_0 - xi . grad u_0."""
    return np.asarray(u_dot) - np.einsum("ni,ni->n", np.atleast_2d(xi_values),
                                         np.atleast_2d(grad_u0))


def check_field_jacobian(field, points, h=1e-6):
    """Max relative discrepancy between the Jacobian and central differences."""
    points = np.atleast_2d(points)
    jac = field.jacobian(points)
    fd = np.zeros_like(jac)
    for j in range(field.dim):
        e = np.zeros(field.dim)
        e[j] = h
        diff = (field.value(points + e) - field.value(points - e)) / (2 * h)
        fd[..., j] = diff
    scale = max(np.max(np.abs(jac)), 1e-300)
    return np.max(np.abs(fd - jac)) / scale


__all__ = [
    "Chart", "Surface", "DeformedSurface", "SurfaceGrid", "Jet", "Field",
    "circle", "ellipse", "kite", "sphere", "ellipsoid", "make_shape", "deform",
    "tangent_basis", "wedge_W", "jacobian_J", "normal_N", "cofactor_W", "dm_W",
    "dJ", "dN", "d2J", "d2N", "b1", "b_matrix", "pullback", "pushforward",
    "material_to_shape", "parameter_nodes", "check_field_jacobian",
]
