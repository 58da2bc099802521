"""Pseudo-homogeneous kernels: Helmholtz (d=2,3), elastodynamic (d=3).

Kernels are functions of ``z = x - y`` only.  Arrays of arguments have shape
``(..., d)``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, ParameterError, SingularArgument
from .fields import parse_id, split_args
from .special import bessel01

_TINY = 0.0


def _check_kappa(kappa):
    kappa = complex(kappa)
    if kappa == 0:
        raise ParameterError("wavenumber must be non-zero")
    if kappa.imag < 0:
        raise ParameterError("wavenumber must satisfy Im(kappa) >= 0")
    return kappa


def _radius(z):
    z = np.asarray(z, dtype=float)
    r = np.linalg.norm(z, axis=-1)
    if np.any(r <= _TINY):
        raise SingularArgument("kernel evaluated at z = 0")
    return z, r


def radial_profile(d, kappa, r):
    """(G, G', G'') of the Helmholtz fundamental solution as functions of |z|."""
    kappa = _check_kappa(kappa)
    r = np.asarray(r, dtype=float)
    if d == 2:
        j0, j1, y0, y1 = bessel01(kappa * r)
        h0 = j0 + 1j * y0
        h1 = j1 + 1j * y1
        g = 0.25j * h0
        g1 = -0.25j * kappa * h1
        g2 = -0.25j * kappa**2 * (h0 - h1 / (kappa * r))
        return g, g1, g2
    if d == 3:
        g = np.exp(1j * kappa * r) / (4 * np.pi * r)
        a = 1j * kappa - 1 / r
        return g, g * a, g * (a * a + 1 / r**2)
    raise ParameterError(f"unsupported dimension {d}")


def helmholtz_Ga(d, kappa, z):
    """(i/4) H0(kappa |z|) for d=2, exp(i kappa |z|) / (4 pi |z|) for d=3."""
    _, r = _radius(z)
    return radial_profile(d, kappa, r)[0]


def grad_Ga(d, kappa, z):
    z, r = _radius(z)
    _, g1, _ = radial_profile(d, kappa, r)
    return (g1 / r)[..., None] * z


def hess_Ga(d, kappa, z):
    z, r = _radius(z)
    _, g1, g2 = radial_profile(d, kappa, r)
    zh = z / r[..., None]
    outer = zh[..., :, None] * zh[..., None, :]
    eye = np.eye(z.shape[-1])
    return g2[..., None, None] * outer + (g1 / r)[..., None, None] * (eye - outer)


def elastic_wavenumbers(omega, rho, mu, lam):
    if mu <= 0 or rho <= 0 or lam + 2 * mu <= 0:
        raise ParameterError("need rho > 0, mu > 0, lambda + 2 mu > 0")
    return omega * np.sqrt(rho / mu), omega * np.sqrt(rho / (lam + 2 * mu))


def elastic_Ge(kappa_s, kappa_p, mu, z):
    """(1/mu) (G_a(ks) Id + Hess(G_a(ks) - G_a(kp)) / ks^2), d=3."""
    if mu <= 0:
        raise ParameterError("mu must be positive")
    kappa_s = _check_kappa(kappa_s)
    _check_kappa(kappa_p)
    z = np.asarray(z, dtype=float)
    eye = np.eye(3)
    gs = helmholtz_Ga(3, kappa_s, z)
    hdiff = hess_Ga(3, kappa_s, z) - hess_Ga(3, kappa_p, z)
    return (gs[..., None, None] * eye + hdiff / kappa_s**2) / mu


def _fd_derivative(fn, z, h):
    """Central-difference gradient along each axis: result[..., j] = d/dz_j fn."""
    z = np.asarray(z, dtype=float)
    cols = []
    for j in range(z.shape[-1]):
        e = np.zeros(z.shape[-1])
        e[j] = h
        cols.append((fn(z + e) - fn(z - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def _fd_second(fn, z, h):
    """Fourth-order central second derivatives: result[..., j, k]."""
    z = np.asarray(z, dtype=float)
    d = z.shape[-1]
    base = fn(z)
    out = np.zeros(base.shape + (d, d), dtype=complex)
    for j in range(d):
        ej = np.zeros(d)
        ej[j] = 1.0
        for k in range(j, d):
            ek = np.zeros(d)
            ek[k] = 1.0
            if j == k:
                val = (-fn(z + 2 * h * ej) + 16 * fn(z + h * ej) - 30 * base
                       + 16 * fn(z - h * ej) - fn(z - 2 * h * ej)) / (12 * h * h)
            else:
                def mixed(s):
                    return (fn(z + s * (ej + ek)) - fn(z + s * (ej - ek))
                            - fn(z - s * (ej - ek)) + fn(z - s * (ej + ek))) / (4 * s * s)
                val = (4 * mixed(h) - mixed(2 * h)) / 3
            out[..., j, k] = val
            out[..., k, j] = val
    return out


def helmholtz_residual(d, kappa, z):
    """|Tr Hess G + kappa^2 G| / |kappa^2 G|."""
    g = helmholtz_Ga(d, kappa, z)
    lap = np.trace(hess_Ga(d, kappa, z), axis1=-2, axis2=-1)
    return np.abs(lap + complex(kappa) ** 2 * g) / np.abs(complex(kappa) ** 2 * g)


def navier_residual(omega, rho, mu, lam, z, h=3e-3):
    """Relative residual of mu Lap u + (lam + mu) grad div u + rho w^2 u = 0
    applied to the columns of G_e (second derivatives by finite differences
    of the analytic Hessian-based formula)."""
    ks, kp = elastic_wavenumbers(omega, rho, mu, lam)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    h = h * min(np.min(np.linalg.norm(z, axis=-1)), 1 / abs(ks), 1 / abs(kp))
    ge = elastic_Ge(ks, kp, mu, z)
    d2 = _fd_second(lambda w: elastic_Ge(ks, kp, mu, w), z, h)  # [..., i, col, j, k]
    lap = np.einsum("...icjj->...ic", d2)
    graddiv = np.einsum("...kcik->...ic", d2)
    res = mu * lap + (lam + mu) * graddiv + rho * omega**2 * ge
    scale = mu * np.max(np.abs(lap), axis=(-2, -1))
    return np.max(np.abs(res), axis=(-2, -1)) / scale


# ---------------------------------------------------------------------------
# kernel specifications and class certification


@dataclass
class KernelSpec:
    name: str
    dim: int
    class_index: int
    value: Callable
    gradient: Optional[Callable] = None
    hessian: Optional[Callable] = None
    params: dict = field(default_factory=dict)
    kappa: Optional[complex] = None

    def derivative(self, order, z, h_rel=1e-3):
        """Tensor of all order-th partial derivatives at z (trailing axes)."""
        z = np.asarray(z, dtype=float)
        if order == 0:
            return self.value(z)
        if order == 1 and self.gradient is not None:
            return self.gradient(z)
        if order == 2 and self.hessian is not None:
            return self.hessian(z)
        h = h_rel * np.min(np.linalg.norm(z, axis=-1))
        if order == 1 or (self.gradient is not None and order == 2):
            lower = (lambda w: self.gradient(w)) if order == 2 else self.value
            return _fd_derivative(lower, z, h)
        return _fd_derivative(lambda w: self.derivative(order - 1, w, h_rel), z, h)


def helmholtz_kernel(d, kappa):
    kappa = _check_kappa(kappa)
    return KernelSpec(f"helmholtz{d}d({kappa:g})", d, 1,
                      value=lambda z: helmholtz_Ga(d, kappa, z),
                      gradient=lambda z: grad_Ga(d, kappa, z),
                      hessian=lambda z: hess_Ga(d, kappa, z),
                      params={"kappa": kappa}, kappa=kappa)


def elastic_kernel(omega, rho, mu, lam):
    ks, kp = elastic_wavenumbers(omega, rho, mu, lam)
    return KernelSpec(f"elastic3d({omega:g},{rho:g},{mu:g},{lam:g})", 3, 1,
                      value=lambda z: elastic_Ge(ks, kp, mu, z),
                      params={"omega": omega, "rho": rho, "mu": mu, "lambda": lam,
                              "kappa_s": ks, "kappa_p": kp})


def parse_complex(text):
    try:
        return complex(str(text).replace(" ", "").replace("i", "j").replace("jj", "j"))
    except ValueError as exc:
        raise ConfigError(f"cannot parse wavenumber {text!r}") from exc


def make_kernel(spec):
    """Registry: ``helmholtz2d(kappa)``, ``helmholtz3d(kappa)``,
    ``elastic3d(omega, rho, mu, lambda)``."""
    name, args = parse_id(spec)
    try:
        if name in ("helmholtz2d", "helmholtz3d") and len(args) == 1:
            return helmholtz_kernel(int(name[-2]), parse_complex(args[0]))
        if name == "elastic3d" and len(args) == 4:
            return elastic_kernel(*[float(a) for a in args])
    except ParameterError as exc:
        raise ConfigError(f"{spec!r}: {exc}") from exc
    raise ConfigError(f"unknown kernel id {spec!r}")


def _fit_slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _directions(d, count, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(count, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


CERTIFY_RADII = np.geomspace(1e-3, 1e-1, 8)


def class_certify(kernel, m, radii=CERTIFY_RADII, n_directions=5, n_pairs=100,
                  tolerance=0.1, seed=0):
    """Numerically test the class -m conditions of a kernel.

    (i)   log-log slope of max |D^a G| over the radii for |a| = 0..m+1, against
          the nominal exponent -(d-1) + m - |a|.  A nominal exponent of 0 admits
          logarithmic growth (fitted power of |log r| at most 1 + tolerance).
    (ii)  D^m G has homogeneity degree -(d-1): same test at |a| = m.
    (iii) D^m G is odd: relative antisymmetry defect at antipodal pairs.
    """
    d = kernel.dim
    dirs = _directions(d, n_directions, seed)
    conditions = []
    for order in range(0, m + 2):
        nominal = -(d - 1) + m - order
        mags = []
        for r in radii:
            vals = kernel.derivative(order, r * dirs)
            mags.append(np.max(np.abs(np.asarray(vals).reshape(len(dirs), -1))))
        mags = np.array(mags)
        entry = {"condition": f"(i) |D^{order} G| scaling", "order": order,
                 "nominal": nominal}
        if np.max(mags) < 1e-14:
            entry.update(slope=None, passed=True, sharp=True, note="vanishes")
        elif nominal == 0 and _fit_slope(radii, mags) < -tolerance:
            p = _fit_slope(np.abs(np.log(radii)), mags)
            entry.update(slope=_fit_slope(radii, mags), log_power=p,
                         passed=p <= 1 + tolerance, sharp=p <= 1 + tolerance,
                         note="logarithmic")
        else:
            slope = _fit_slope(radii, mags)
            entry.update(slope=slope, passed=slope >= nominal - tolerance,
                         sharp=abs(slope - nominal) <= tolerance)
        if order == m:
            conditions.append(dict(entry, condition=f"(ii) D^{m} G homogeneous of degree {-(d - 1)}"))
        conditions.append(entry)
    rng = np.random.default_rng(seed + 1)
    pts = _directions(d, n_pairs, seed + 2) * rng.uniform(1e-3, 1.0, size=(n_pairs, 1))
    plus = np.asarray(kernel.derivative(m, pts))
    minus = np.asarray(kernel.derivative(m, -pts))
    scale = np.max(np.abs(plus.reshape(n_pairs, -1)), axis=1)
    scale = np.where(scale == 0, 1.0, scale)
    defect = np.max(np.abs((plus + minus).reshape(n_pairs, -1)), axis=1) / scale
    conditions.append({"condition": f"(iii) D^{m} G odd", "max_defect": float(np.max(defect)),
                       "passed": bool(np.max(defect) <= 1e-10), "sharp": True})
    return {"kernel": kernel.name, "m": m,
            "passed": all(c["passed"] for c in conditions),
            "sharp": all(c.get("sharp", True) for c in conditions),
            "conditions": conditions}


def acoustic3d_remainder(kappa, r):
    """G_a - (1/4pi)(1/r + i k - k^2 r / 2 - i k^3 r^2 / 6) at radius r (d=3)."""
    kappa = _check_kappa(kappa)
    r = np.asarray(r, dtype=float)
    g = helmholtz_Ga(3, kappa, r[:, None] * np.array([1.0, 0.0, 0.0]))
    poly = 1 / r + 1j * kappa - kappa**2 * r / 2 - 1j * kappa**3 * r**2 / 6
    return g - poly / (4 * np.pi)


def acoustic3d_remainder_slope(kappa, radii=np.geomspace(1e-2, 2e-1, 8)):
    return _fit_slope(radii, np.abs(acoustic3d_remainder(kappa, radii)))


# ---------------------------------------------------------------------------
# shape-derivative kernels


def boundary_derivative_kernel(kernel, xi_x, xi_y, x, y, div_xi_y):
    """(xi(x) - xi(y)) . grad G(x - y) + G(x - y) div_Gamma xi(y)."""
    z = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    dxi = np.asarray(xi_x, dtype=float) - np.asarray(xi_y, dtype=float)
    return (np.einsum("...i,...i->...", dxi, kernel.gradient(z))
            + kernel.value(z) * np.asarray(div_xi_y))


def potential_derivative_kernel(kernel, xi_y, x, y, div_xi_y):
    """-xi(y) . grad G(x - y) + G(x - y) div_Gamma xi(y), x off the boundary."""
    z = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return (-np.einsum("...i,...i->...", np.asarray(xi_y, dtype=float), kernel.gradient(z))
            + kernel.value(z) * np.asarray(div_xi_y))


@dataclass
class DerivativeKernel:
    """Shape-derivative kernel of ``base`` in direction ``xi``.

    ``variant='boundary'``: x, y on the boundary; ``'potential'``: x off it.
    """

    base: KernelSpec
    xi: object
    variant: str = "boundary"

    def __post_init__(self):
        if self.variant not in ("boundary", "potential"):
            raise ParameterError(f"unknown derivative-kernel variant {self.variant!r}")

    def __call__(self, x, y, div_xi_y):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        xi_y = self.xi.value(y)
        if self.variant == "potential":
            return potential_derivative_kernel(self.base, xi_y, x, y, div_xi_y)
        return boundary_derivative_kernel(self.base, self.xi.value(x), xi_y, x, y, div_xi_y)


def doublelayer_flatness(surface, param_x, param_y, normal_at="y"):
    """g / |x - y|^2 with g = n(y).(x - y) (or n(x).(x - y) for normal_at='x')."""
    from .geometry import wedge

    jx = surface.jets(np.atleast_2d(param_x))
    jy = surface.jets(np.atleast_2d(param_y))
    diff = jx.position - jy.position
    dist2 = np.einsum("ni,ni->n", diff, diff)
    if np.any(dist2 == 0):
        raise SingularArgument("flatness ratio undefined at x = y")
    jet = jy if normal_at == "y" else jx
    w = wedge(jet.tangents, surface.orientation)
    n = w / np.linalg.norm(w, axis=-1, keepdims=True)
    return np.einsum("ni,ni->n", n, diff) / dist2


def doublelayer_certify(surface, kappa, param_x, steps=CERTIFY_RADII, tolerance=0.1):
    """Class -1 evidence for n(y).grad G(x - y) on a smooth surface.

    Walks y towards x along the first chart direction; reports the flatness
    ratio (must stay bounded) and the log-log slope of the kernel modulus,
    whose nominal value is -(d - 2).
    """
    d = surface.dim
    param_x = np.atleast_2d(np.asarray(param_x, dtype=float))
    offset = np.zeros((len(steps), param_x.shape[1]))
    offset[:, 0] = steps
    param_y = param_x + offset
    ratio = doublelayer_flatness(surface, np.repeat(param_x, len(steps), 0), param_y)
    from .geometry import wedge

    jx = surface.jets(param_x)
    jy = surface.jets(param_y)
    w = wedge(jy.tangents, surface.orientation)
    n = w / np.linalg.norm(w, axis=-1, keepdims=True)
    z = jx.position - jy.position
    kern = np.abs(np.einsum("ni,ni->n", n, grad_Ga(d, kappa, z)))
    dist = np.linalg.norm(z, axis=-1)
    slope = _fit_slope(dist, kern)
    nominal = -(d - 2)
    return {"flatness_max": float(np.max(np.abs(ratio))), "slope": slope, "nominal": nominal,
            "passed": bool(np.all(np.isfinite(ratio)) and slope >= nominal - tolerance),
            "sharp": abs(slope - nominal) <= tolerance}


__all__ = [
    "DerivativeKernel", "doublelayer_certify",
    "radial_profile", "helmholtz_Ga", "grad_Ga", "hess_Ga", "elastic_Ge",
    "elastic_wavenumbers", "helmholtz_residual", "navier_residual", "KernelSpec",
    "helmholtz_kernel", "elastic_kernel", "make_kernel", "class_certify",
    "acoustic3d_remainder", "acoustic3d_remainder_slope",
    "boundary_derivative_kernel", "potential_derivative_kernel",
    "doublelayer_flatness", "parse_complex", "split_args",
]
