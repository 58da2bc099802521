"""Nystrom discretisation of boundary integral operators on closed curves,
plus smooth-quadrature potentials off the boundary (d=2,3).

Weakly singular kernels on the uniform theta grid are split as

    K(t, s) = L1(t, s) log(4 sin^2((t - s)/2)) + L2(t, s)

with L1, L2 smooth; the log part is integrated with the trigonometric
interpolation weights ``R_j`` and L2 with the trapezoid rule.  Pulled-back
operators are assembled on the fixed reference theta grid using the deformed
nodes and their exact parametric jets, so ``t -> assemble_pulled_back(t xi)``
is a smooth function of t and its exact derivative is ``assemble_dV`` /
``assemble_dD_op``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, ParameterError, TooCloseToBoundary
from .geometry import SurfaceGrid, parameter_nodes
from .kernels import _check_kappa, grad_Ga, radial_profile
from .special import EULER_GAMMA, bessel01, besselj, hankel1

OPERATOR_TAGS = ("V", "D", "K'", "N")
MIN_POTENTIAL_DISTANCE = 0.05


@dataclass(frozen=True)
class OperatorMatrix:
    matrix: np.ndarray
    grid: SurfaceGrid
    tag: str
    kappa: complex
    deformation: Optional[str] = None

    def __post_init__(self):
        n = self.grid.size
        if self.matrix.shape != (n, n):
            raise ParameterError(f"matrix shape {self.matrix.shape} does not match grid size {n}")
        if not np.all(np.isfinite(self.matrix)):
            raise ParameterError(f"non-finite entries in {self.tag} matrix")
        self.matrix.setflags(write=False)

    @property
    def size(self):
        return self.grid.size

    def apply(self, u):
        return self.matrix @ np.asarray(u)

    def max_abs(self):
        return float(np.max(np.abs(self.matrix)))


def _require2(grid):
    if grid.dim != 2:
        raise DimensionError("on-curve operators are discretised for d = 2 only")
    if grid.size % 2:
        raise ParameterError("the log-splitting rule needs an even number of nodes")


def kress_weights(n_nodes):
    """R[i, j] = R_{|i-j|}: quadrature weights for log(4 sin^2((t_i - s)/2))."""
    half = n_nodes // 2
    t = 2 * np.pi * np.arange(n_nodes) / n_nodes
    m = np.arange(1, half)
    r = -(2 * np.pi / half) * (np.cos(np.outer(t, m)) / m).sum(axis=1) \
        - (np.pi / half**2) * np.cos(half * t)
    idx = (np.arange(n_nodes)[:, None] - np.arange(n_nodes)[None, :]) % n_nodes
    return r[idx]


def log_sin_matrix(n_nodes):
    """log(4 sin^2((t_i - t_j)/2)) with zero diagonal."""
    t = 2 * np.pi * np.arange(n_nodes) / n_nodes
    diff = t[:, None] - t[None, :]
    out = np.zeros((n_nodes, n_nodes))
    off = ~np.eye(n_nodes, dtype=bool)
    out[off] = np.log(4 * np.sin(diff[off] / 2) ** 2)
    return out


def spectral_derivative_matrix(n_nodes):
    """Trigonometric differentiation in theta on the uniform grid (even N)."""
    if n_nodes % 2:
        raise ParameterError("spectral differentiation needs an even number of nodes")
    t = 2 * np.pi * np.arange(n_nodes) / n_nodes
    k = np.arange(n_nodes)
    diff = t[:, None] - t[None, :]
    sign = (-1.0) ** (k[:, None] - k[None, :])
    out = np.zeros((n_nodes, n_nodes))
    off = ~np.eye(n_nodes, dtype=bool)
    out[off] = 0.5 * sign[off] / np.tan(diff[off] / 2)
    return out


def arc_length_derivative(grid):
    speed = np.linalg.norm(grid.tangents[:, 0], axis=-1)
    return spectral_derivative_matrix(grid.size) / speed[:, None]


# ---------------------------------------------------------------------------
# curve data


@dataclass
class _Curve:
    x: np.ndarray       # nodes (N, 2)
    dx: np.ndarray      # d/dtheta (N, 2)
    ddx: np.ndarray     # d^2/dtheta^2 (N, 2)

    @property
    def speed(self):
        return np.linalg.norm(self.dx, axis=-1)

    @property
    def normal(self):
        return _rot(self.dx) / self.speed[:, None]


def _rot(v):
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


def _curve(grid):
    return _Curve(grid.positions, grid.tangents[:, 0], grid.second[:, 0, 0])


def _xi_curve(grid, xi):
    """(xi, xi', xi'') at the reference nodes, derivatives in theta."""
    val, first = grid.field_jet(xi)
    return _Curve(val, first[:, 0], grid.field_second(xi)[:, 0, 0])


def _pair_geometry(c):
    diff = c.x[None, :, :] - c.x[:, None, :]        # X_j - X_i
    rho = np.linalg.norm(diff, axis=-1)
    np.fill_diagonal(rho, 1.0)
    return diff, rho


# ---------------------------------------------------------------------------
# single layer


def _v_parts(c, kappa):
    n = len(c.x)
    _, rho = _pair_geometry(c)
    speed = c.speed
    j0, _, _, _ = bessel01(kappa * rho)
    g = radial_profile(2, kappa, rho)[0]
    m1 = -j0 * speed[None, :] / (4 * np.pi)
    m2 = g * speed[None, :] - m1 * log_sin_matrix(n)
    diag = (0.25j - (np.log(kappa * speed / 2) + EULER_GAMMA) / (2 * np.pi)) * speed
    np.fill_diagonal(m1, -speed / (4 * np.pi))
    np.fill_diagonal(m2, diag)
    return m1, m2


def _combine(l1, l2):
    n = l1.shape[0]
    return kress_weights(n) * l1 + (2 * np.pi / n) * l2


def _single_layer(c, kappa):
    return _combine(*_v_parts(c, kappa))


def assemble_V(grid, kappa):
    _require2(grid)
    kappa = _check_kappa(kappa)
    return OperatorMatrix(_single_layer(_curve(grid), kappa), grid, "V", kappa)


# ---------------------------------------------------------------------------
# double layer (normal at x) and its adjoint (normal at y)


def _phi(kappa, rho):
    """G'(rho)/rho and its log coefficient (kappa/4pi) J1(kappa rho)/rho."""
    _, g1, g2 = radial_profile(2, kappa, rho)
    _, j1, _, _ = bessel01(kappa * rho)
    phi = g1 / rho
    dphi = g2 / rho - g1 / rho**2
    phi1 = kappa * j1 / (4 * np.pi * rho)
    dphi1 = -kappa**2 * besselj(2, kappa * rho) / (4 * np.pi * rho)
    return phi, dphi, phi1, dphi1


def _dl_diag(c):
    return -np.einsum("ni,ni->n", _rot(c.dx), c.ddx) / (4 * np.pi * c.speed**2)


def _double_layer(c, kappa, adjoint=False):
    n = len(c.x)
    diff, rho = _pair_geometry(c)
    phi, _, phi1, _ = _phi(kappa, rho)
    nrm = c.normal
    if adjoint:
        g = -np.einsum("jk,ijk->ij", nrm, diff)     # n(y_j) . (x_i - y_j)
    else:
        g = np.einsum("ik,ijk->ij", nrm, diff)      # n(x_i) . (y_j - x_i)
    speed = c.speed[None, :]
    l1 = phi1 * g * speed
    l2 = phi * g * speed - l1 * log_sin_matrix(n)
    np.fill_diagonal(l1, 0.0)
    np.fill_diagonal(l2, _dl_diag(c))
    return _combine(l1, l2)


def assemble_D(grid, kappa):
    _require2(grid)
    kappa = _check_kappa(kappa)
    return OperatorMatrix(_double_layer(_curve(grid), kappa), grid, "D", kappa)


def assemble_Kprime(grid, kappa):
    _require2(grid)
    kappa = _check_kappa(kappa)
    return OperatorMatrix(_double_layer(_curve(grid), kappa, adjoint=True), grid, "K'", kappa)


def adjoint_defect(d_op, kp_op):
    """max |w_i D_ij - w_j K'_ji| (real transpose under the quadrature pairing)."""
    w = d_op.grid.weights
    return float(np.max(np.abs(w[:, None] * d_op.matrix - (w[:, None] * kp_op.matrix).T)))


# ---------------------------------------------------------------------------
# hypersingular operator through its regularised form


def _hypersingular(grid, c, kappa):
    v = _single_layer(c, kappa)
    nrm = c.normal
    ds = spectral_derivative_matrix(len(c.x)) / c.speed[:, None]
    return kappa**2 * v * (nrm @ nrm.T) + ds @ v @ ds


def assemble_N(grid, kappa):
    """kappa^2 V[(n(x).n(y)) u] + d/ds V d/ds u."""
    _require2(grid)
    kappa = _check_kappa(kappa)
    return OperatorMatrix(_hypersingular(grid, _curve(grid), kappa), grid, "N", kappa)


def hypersingular_bilinear(grid, kappa, u, v):
    """kappa^2 <V(n u), n v> - <V du/ds, dv/ds> with the real quadrature pairing."""
    _require2(grid)
    kappa = _check_kappa(kappa)
    c = _curve(grid)
    vm = _single_layer(c, kappa)
    w = grid.weights
    nrm = c.normal
    ds = spectral_derivative_matrix(grid.size) / c.speed[:, None]
    nu = nrm * np.asarray(u)[:, None]
    nv = nrm * np.asarray(v)[:, None]
    first = sum(np.sum(w * nv[:, k] * (vm @ nu[:, k])) for k in range(2))
    second = np.sum(w * (ds @ v) * (vm @ (ds @ u)))
    return kappa**2 * first - second


def pairing(grid, a, b):
    return np.sum(grid.weights * np.asarray(a) * np.asarray(b))


# ---------------------------------------------------------------------------
# pulled-back families


def assemble_pulled_back(grid, kappa, r, which):
    """tau_r K_{Gamma_r} tau_r^{-1} on the reference theta grid."""
    if which not in OPERATOR_TAGS:
        raise ParameterError(f"unknown operator {which!r}; expected one of {OPERATOR_TAGS}")
    _require2(grid)
    kappa = _check_kappa(kappa)
    state = grid.deformed(r)
    c = _curve(state)
    if which == "V":
        mat = _single_layer(c, kappa)
    elif which == "D":
        mat = _double_layer(c, kappa)
    elif which == "K'":
        mat = _double_layer(c, kappa, adjoint=True)
    else:
        mat = _hypersingular(state, c, kappa)
    name = None if r is None else getattr(r, "name", str(r))
    return OperatorMatrix(mat, grid, which, kappa, name)


def _derivative_setup(grid, xi):
    _require2(grid)
    c = _curve(grid)
    e = _xi_curve(grid, xi)
    diff, rho = _pair_geometry(c)
    dxi = e.x[None, :, :] - e.x[:, None, :]           # xi_j - xi_i
    drho = np.einsum("ijk,ijk->ij", diff, dxi) / rho
    np.fill_diagonal(drho, 0.0)
    div = np.einsum("ni,ni->n", e.dx, c.dx) / c.speed**2
    return c, e, diff, rho, dxi, drho, div


def assemble_dV(grid, kappa, xi):
    """Exact derivative at t=0 of t -> assemble_pulled_back(grid, kappa, t xi, 'V')."""
    kappa = _check_kappa(kappa)
    c, e, diff, rho, dxi, drho, div = _derivative_setup(grid, xi)
    n = grid.size
    speed = c.speed
    j0, j1, _, _ = bessel01(kappa * rho)
    g, g1, _ = radial_profile(2, kappa, rho)
    dspeed = (speed * div)[None, :]
    dm1 = -(-kappa * j1 * drho * speed[None, :] + j0 * dspeed) / (4 * np.pi)
    dk = g1 * drho * speed[None, :] + g * dspeed
    dm2 = dk - dm1 * log_sin_matrix(n)
    base = 0.25j - (np.log(kappa * speed / 2) + EULER_GAMMA) / (2 * np.pi)
    np.fill_diagonal(dm1, -speed * div / (4 * np.pi))
    np.fill_diagonal(dm2, base * speed * div - speed * div / (2 * np.pi))
    name = getattr(xi, "name", str(xi))
    return OperatorMatrix(_combine(dm1, dm2), grid, "dV", kappa, name)


def assemble_dD_op(grid, kappa, xi):
    """Exact derivative at t=0 of t -> assemble_pulled_back(grid, kappa, t xi, 'D')."""
    kappa = _check_kappa(kappa)
    c, e, diff, rho, dxi, drho, div = _derivative_setup(grid, xi)
    n = grid.size
    speed = c.speed
    nrm = c.normal
    dnrm = _rot(e.dx) / speed[:, None] \
        - _rot(c.dx) * (np.einsum("ni,ni->n", c.dx, e.dx) / speed**3)[:, None]
    g = np.einsum("ik,ijk->ij", nrm, diff)
    dg = np.einsum("ik,ijk->ij", dnrm, diff) + np.einsum("ik,ijk->ij", nrm, dxi)
    phi, dphi, phi1, dphi1 = _phi(kappa, rho)
    sp_j = speed[None, :]
    div_j = div[None, :]
    dk = (dphi * drho * g + phi * dg) * sp_j + phi * g * sp_j * div_j
    dl1 = (dphi1 * drho * g + phi1 * dg) * sp_j + phi1 * g * sp_j * div_j
    dl2 = dk - dl1 * log_sin_matrix(n)
    # diagonal: L2 = -c / (4 pi |x'|^2), c = (R x') . x''
    cc = np.einsum("ni,ni->n", _rot(c.dx), c.ddx)
    dcc = np.einsum("ni,ni->n", _rot(e.dx), c.ddx) + np.einsum("ni,ni->n", _rot(c.dx), e.ddx)
    ds2 = 2 * np.einsum("ni,ni->n", c.dx, e.dx)
    np.fill_diagonal(dl1, 0.0)
    np.fill_diagonal(dl2, -(dcc * speed**2 - cc * ds2) / (4 * np.pi * speed**4))
    name = getattr(xi, "name", str(xi))
    return OperatorMatrix(_combine(dl1, dl2), grid, "dD_op", kappa, name)


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class PotentialSample:
    points: np.ndarray
    values: np.ndarray
    min_distance: float
    side: tuple


_DENSE = {2: 4096, 3: (64, 128)}


def boundary_distance(surface, points):
    """Distance from each point to a dense sampling of the surface."""
    from scipy.spatial import cKDTree

    params, _ = parameter_nodes(surface.dim, _DENSE[surface.dim])
    dense = surface.jets(params).position
    dist, _ = cKDTree(dense).query(points)
    return dist


def _side(grid, points):
    """Gauss solid-angle integral: ~1 inside, ~0 outside."""
    d = grid.dim
    diff = grid.positions[None, :, :] - points[:, None, :]
    r = np.linalg.norm(diff, axis=-1)
    flux = np.einsum("pjk,jk->pj", diff, grid.normals) / r**d
    area = 2 * np.pi if d == 2 else 4 * np.pi
    s = (flux * grid.weights[None, :]).sum(axis=1) / area
    return tuple("interior" if v > 0.5 else "exterior" for v in s)


def _prepare(grid, u, points, r):
    state = grid.deformed(r)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != grid.dim:
        raise DimensionError("evaluation points have the wrong dimension")
    dist = boundary_distance(state.surface, points)
    if np.min(dist) < MIN_POTENTIAL_DISTANCE:
        raise TooCloseToBoundary(
            f"point at distance {np.min(dist):.3g} < {MIN_POTENTIAL_DISTANCE} from the boundary")
    if callable(u):
        u = u(grid.ref_positions)
    u = np.broadcast_to(np.asarray(u), (grid.size,))
    return state, points, dist, u


def eval_potential(grid, kappa, u, points, kind="single", r=None):
    """P_r tau_r^{-1} u at points off Gamma_r; u given at the reference nodes."""
    kappa = _check_kappa(kappa)
    if kind not in ("single", "double"):
        raise ParameterError(f"unknown potential kind {kind!r}")
    state, points, dist, u = _prepare(grid, u, points, r)
    z = points[:, None, :] - state.positions[None, :, :]
    wu = state.weights * u
    if kind == "single":
        rho = np.linalg.norm(z, axis=-1)
        vals = radial_profile(grid.dim, kappa, rho)[0] @ wu
    else:
        dn = -np.einsum("pjk,jk->pj", grad_Ga(grid.dim, kappa, z), state.normals)
        vals = dn @ wu
    return PotentialSample(points, vals, float(np.min(dist)), _side(state, points))


def eval_dpotential(grid, kappa, u, points, xi):
    """Derivative at r=0 of the pulled-back single-layer potential in direction xi."""
    kappa = _check_kappa(kappa)
    _, points, dist, u = _prepare(grid, u, points, None)
    z = points[:, None, :] - grid.positions[None, :, :]
    rho = np.linalg.norm(z, axis=-1)
    xi_y = xi.value(grid.positions)
    div = np.trace(grid.tangential_jacobian(xi), axis1=1, axis2=2)
    kern = -np.einsum("pjk,jk->pj", grad_Ga(grid.dim, kappa, z), xi_y) \
        + radial_profile(grid.dim, kappa, rho)[0] * div[None, :]
    vals = kern @ (grid.weights * u)
    return PotentialSample(points, vals, float(np.min(dist)), _side(grid, points))


# ---------------------------------------------------------------------------
# closed-form multipliers on the unit circle (used as cross-checks)


def circle_multiplier_V(kappa, n):
    """(i pi / 2) J_n(kappa) H_n(kappa)."""
    n = abs(n)
    return 0.5j * np.pi * besselj(n, kappa) * hankel1(n, kappa)


def circle_multiplier_N(kappa, n):
    """kappa^2 (lam_{n+1} + lam_{n-1}) / 2 - n^2 lam_n with lam the V multiplier."""
    lam = circle_multiplier_V
    return kappa**2 * (lam(kappa, n + 1) + lam(kappa, n - 1)) / 2 - n**2 * lam(kappa, n)


__all__ = [
    "OperatorMatrix", "PotentialSample", "kress_weights", "log_sin_matrix",
    "spectral_derivative_matrix", "arc_length_derivative", "assemble_V", "assemble_D",
    "assemble_Kprime", "assemble_N", "adjoint_defect", "hypersingular_bilinear", "pairing",
    "assemble_pulled_back", "assemble_dV", "assemble_dD_op", "eval_potential",
    "eval_dpotential", "boundary_distance", "circle_multiplier_V", "circle_multiplier_N", "OPERATOR_TAGS",
]
