"""Tangential differential operators and their shape derivatives.

Fields are :class:`~shapebie.fields.Field` objects whose ambient jets serve
as the declared extension; every operator here depends only on tangential
derivatives, so the extension choice does not matter.

``G(r) u = tau_r grad_{Gamma_r} tau_r^{-1} u`` is evaluated through the
parametric derivatives of u and the dual basis of the deformed tangents,
which is the pulled-back operator exactly (no linearisation).
"""

import numpy as np

from .errors import DimensionError


def tangential_projector(normals):
    d = normals.shape[-1]
    return np.eye(d) - np.einsum("ni,nj->nij", normals, normals)


def surface_gradient(u, grid):
    """grad u - (grad u . n) n for a scalar field (or each component of a vector).

    For a vector field returns the matrix [grad_Gamma u] whose i-th column is
    the surface gradient of u_i.
    """
    x = grid.positions
    n = grid.normals
    p = tangential_projector(n)
    jac = u.jacobian(x)
    if u.rank == 0:
        return np.einsum("nij,nj->ni", p, jac)
    return np.einsum("nij,nkj->nik", p, jac)


def surface_divergence(v, grid):
    """div v - ([grad v] n . n)."""
    jac = v.jacobian(grid.positions)
    n = grid.normals
    return np.trace(jac, axis1=1, axis2=2) - np.einsum("ni,nij,nj->n", n, jac, n)


def _require3(grid):
    if grid.dim != 3:
        raise DimensionError("operator is defined for d = 3 only")


def gunter_M(v, grid):
    """Mv = ([grad v] - (div v) Id) n."""
    _require3(grid)
    jac = v.jacobian(grid.positions)  # jac[i, j] = d_j v_i, so [grad v] = jac^T
    n = grid.normals
    div = np.trace(jac, axis1=1, axis2=2)
    return np.einsum("nij,ni->nj", jac, n) - div[:, None] * n


def gunter_m(u, grid, j, k):
    """Component operator m_jk u = n_k d_j u - n_j d_k u for a scalar field."""
    _require3(grid)
    g = u.jacobian(grid.positions)
    n = grid.normals
    return n[:, k] * g[:, j] - n[:, j] * g[:, k]


def gunter_M_components(v, grid):
    """(Mv)_j = sum_k m_jk v_k, assembled from the component operators."""
    _require3(grid)
    jac = v.jacobian(grid.positions)
    n = grid.normals
    out = np.zeros_like(n)
    for j in range(3):
        for k in range(3):
            out[:, j] += n[:, k] * jac[:, k, j] - n[:, j] * jac[:, k, k]
    return out


def stokes_residual(a, b, grid, jk=None):
    """|int (M a).b - int a.(M b)| for vector fields, or with jk=(j, k)
    |int (m_jk a) b + int a (m_jk b)| for scalar fields."""
    _require3(grid)
    w = grid.weights
    x = grid.positions
    if jk is None:
        lhs = np.sum(w * np.einsum("ni,ni->n", gunter_M(a, grid), b.value(x)))
        rhs = np.sum(w * np.einsum("ni,ni->n", a.value(x), gunter_M(b, grid)))
        return abs(lhs - rhs)
    j, k = jk
    lhs = np.sum(w * gunter_m(a, grid, j, k) * b.value(x))
    rhs = np.sum(w * a.value(x) * gunter_m(b, grid, j, k))
    return abs(lhs + rhs)


def curl(jac):
    return np.stack([jac[:, 2, 1] - jac[:, 1, 2],
                     jac[:, 0, 2] - jac[:, 2, 0],
                     jac[:, 1, 0] - jac[:, 0, 1]], axis=-1)


def traction_forms(v, mu, lam, grid):
    """The traction T v written two ways: via Gunter's M, and classically."""
    _require3(grid)
    jac = v.jacobian(grid.positions)
    n = grid.normals
    div = np.trace(jac, axis1=1, axis2=2)
    n_curl = np.cross(n, curl(jac))
    dvdn = np.einsum("nij,nj->ni", jac, n)
    form_m = 2 * mu * gunter_M(v, grid) + (lam + 2 * mu) * div[:, None] * n - mu * n_curl
    form_classic = 2 * mu * dvdn + lam * div[:, None] * n + mu * n_curl
    return form_m, form_classic


def traction_rewrite_check(v, mu, lam, grid):
    a, b = traction_forms(v, mu, lam, grid)
    return float(np.max(np.abs(a - b)))


# ---------------------------------------------------------------------------
# pulled-back operators and their derivatives


def _state(grid, r0):
    return grid if r0 is None else grid.deformed(r0)


def pulled_gradient(grid, u, r=None):
    """G(r) u; for vector u the matrix whose i-th column is G(r) u_i."""
    state = _state(grid, r)
    a = state.tangential_jacobian(u)
    return a if u.rank == 0 else np.swapaxes(a, 1, 2)


def pulled_divergence(grid, v, r=None):
    """D(r) v = Tr [G(r) v]."""
    return np.trace(pulled_gradient(grid, v, r), axis1=1, axis2=2)


def dG(grid, xi, u, r0=None):
    """-[G xi] G u + (G u . [G xi] N) N at r0."""
    state = _state(grid, r0)
    gxi = pulled_gradient(state, xi)
    gu = pulled_gradient(state, u)
    n = state.normals
    gxin = np.einsum("nij,nj->ni", gxi, n)
    return -np.einsum("nij,nj->ni", gxi, gu) + np.einsum("ni,ni->n", gu, gxin)[:, None] * n


def dD(grid, xi, v, r0=None):
    """-Tr([G xi][G v]) + ([G v] N . [G xi] N) at r0."""
    state = _state(grid, r0)
    gxi = pulled_gradient(state, xi)
    gv = pulled_gradient(state, v)
    n = state.normals
    return (-np.einsum("nij,nji->n", gxi, gv)
            + np.einsum("ni,ni->n", np.einsum("nij,nj->ni", gv, n),
                        np.einsum("nij,nj->ni", gxi, n)))


def dN_via_gradient(grid, xi, r0=None):
    """dN[r0, xi] = -[G(r0) xi] N(r0), through the surface-gradient route."""
    state = _state(grid, r0)
    if r0 is None:
        gxi = surface_gradient(xi, state)
    else:
        gxi = pulled_gradient(state, xi)
    return -np.einsum("nij,nj->ni", gxi, state.normals)
