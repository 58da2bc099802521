"""Bessel and Hankel functions of integer order for complex arguments.

Three evaluation bands, selected per element by ``|z|``:

* ``|z| <= 8``: ascending power series.
* ``8 < |z| < 25``: Miller backward recurrence for J, Neumann series for Y.
* ``|z| >= 25``: Hankel asymptotic expansion.

The middle band exists because the asymptotic expansion at ``|z| = 8`` cannot
reach double precision (its smallest term is ~1e-7).
"""

import math

import numpy as np

EULER_GAMMA = 0.57721566490153286061
SERIES_LIMIT = 8.0
ASYMPTOTIC_LIMIT = 25.0

_SERIES_TERMS = 45
_ASYMPTOTIC_TERMS = 40


def _as_complex(z):
    return np.asarray(z, dtype=complex)


def _series_j(n, z):
    h = z / 2
    q = -(h * h)
    term = h**n / math.factorial(n)
    total = term.copy()
    for k in range(1, _SERIES_TERMS):
        term = term * q / (k * (k + n))
        total = total + term
    return total


def _series_y0(z, j0):
    h = z / 2
    q = -(h * h)
    term = np.ones_like(z)
    harmonic = 0.0
    acc = np.zeros_like(z)
    for k in range(1, _SERIES_TERMS):
        term = term * q / (k * k)
        harmonic += 1.0 / k
        acc = acc + harmonic * term
    return (2 / np.pi) * (np.log(h) + EULER_GAMMA) * j0 - (2 / np.pi) * acc


def _series_y1(z, j1):
    h = z / 2
    q = -(h * h)
    term = np.ones_like(z)  # q^k / (k! (k+1)!)
    harmonic_k = 0.0  # H_k
    acc = (-EULER_GAMMA + (-EULER_GAMMA + 1.0)) * term
    for k in range(1, _SERIES_TERMS):
        term = term * q / (k * (k + 1))
        harmonic_k += 1.0 / k
        psi_sum = (-EULER_GAMMA + harmonic_k) + (-EULER_GAMMA + harmonic_k + 1.0 / (k + 1))
        acc = acc + psi_sum * term
    return -2 / (np.pi * z) + (2 / np.pi) * np.log(h) * j1 - (h / np.pi) * acc


def _miller(z, order):
    """Normalised J_0..J_order by backward recurrence (all entries of z)."""
    top = int(np.max(np.abs(z), initial=0.0)) + order + 40
    top += top % 2
    f = np.zeros((top + 2,) + z.shape, dtype=complex)
    f[top] = 1e-30
    for k in range(top, 0, -1):
        f[k - 1] = (2 * k / z) * f[k] - f[k + 1]
    norm = f[0] + 2 * np.sum(f[2:top + 1:2], axis=0)
    return f[: max(order, 2) + 1] / norm, f[: top + 1] / norm


def _neumann_y01(z, jall):
    h = z / 2
    log_term = np.log(h) + EULER_GAMMA
    top = jall.shape[0] - 1
    s0 = np.zeros_like(z)
    ds = np.zeros_like(z)
    for k in range(1, top // 2):
        sign = (-1) ** k
        s0 = s0 + sign * jall[2 * k] / k
        ds = ds + sign * (jall[2 * k - 1] - jall[2 * k + 1]) / (2 * k)
    y0 = (2 / np.pi) * log_term * jall[0] - (4 / np.pi) * s0
    dy0 = (2 / np.pi) * (jall[0] / z - log_term * jall[1]) - (4 / np.pi) * ds
    return y0, -dy0


def _asymptotic_h(nu, z, kind):
    sign = 1.0 if kind == 1 else -1.0
    omega = z - nu * np.pi / 2 - np.pi / 4
    mu = 4.0 * nu * nu
    term = np.ones_like(z)
    total = np.ones_like(z)
    for k in range(1, _ASYMPTOTIC_TERMS):
        term = term * (sign * 1j) * (mu - (2 * k - 1) ** 2) / (k * 8 * z)
        total = total + term
    return np.sqrt(2 / (np.pi * z)) * np.exp(sign * 1j * omega) * total


def _bands(z):
    a = np.abs(z)
    return a <= SERIES_LIMIT, (a > SERIES_LIMIT) & (a < ASYMPTOTIC_LIMIT), a >= ASYMPTOTIC_LIMIT


def bessel01(z):
    """Return (J0, J1, Y0, Y1) at complex ``z`` (z != 0)."""
    z = _as_complex(z)
    shape = z.shape
    z = z.reshape(-1)
    out = [np.empty_like(z) for _ in range(4)]
    low, mid, high = _bands(z)
    if np.any(low):
        zz = z[low]
        j0 = _series_j(0, zz)
        j1 = _series_j(1, zz)
        out[0][low], out[1][low] = j0, j1
        out[2][low], out[3][low] = _series_y0(zz, j0), _series_y1(zz, j1)
    if np.any(mid):
        zz = z[mid]
        _, jall = _miller(zz, 2)
        y0, y1 = _neumann_y01(zz, jall)
        out[0][mid], out[1][mid], out[2][mid], out[3][mid] = jall[0], jall[1], y0, y1
    if np.any(high):
        zz = z[high]
        for nu in (0, 1):
            h1 = _asymptotic_h(nu, zz, 1)
            h2 = _asymptotic_h(nu, zz, 2)
            out[nu][high] = (h1 + h2) / 2
            out[2 + nu][high] = (h1 - h2) / 2j
    return tuple(o.reshape(shape) for o in out)


def besselj(n, z):
    """J_n(z) for integer n >= 0."""
    if n < 0:
        return (-1) ** n * besselj(-n, z)
    z = _as_complex(z)
    if n <= 1:
        return bessel01(z)[n]
    shape = z.shape
    z = z.reshape(-1)
    out = np.empty_like(z)
    low = np.abs(z) <= SERIES_LIMIT
    if np.any(low):
        out[low] = _series_j(n, z[low])
    rest = ~low
    if np.any(rest):
        zz = z[rest]
        upward = np.abs(zz) > n + 1
        res = np.empty_like(zz)
        if np.any(upward):
            j0, j1, _, _ = bessel01(zz[upward])
            prev, cur = j0, j1
            for k in range(1, n):
                prev, cur = cur, (2 * k / zz[upward]) * cur - prev
            res[upward] = cur
        if np.any(~upward):
            jn, _ = _miller(zz[~upward], n)
            res[~upward] = jn[n]
        out[rest] = res
    return out.reshape(shape)


def bessely(n, z):
    """Y_n(z) for integer n >= 0 (upward recurrence from Y0, Y1)."""
    if n < 0:
        return (-1) ** n * bessely(-n, z)
    z = _as_complex(z)
    _, _, y0, y1 = bessel01(z)
    if n == 0:
        return y0
    prev, cur = y0, y1
    for k in range(1, n):
        prev, cur = cur, (2 * k / z) * cur - prev
    return cur


def hankel1(n, z):
    """H^(1)_n(z) = J_n(z) + i Y_n(z)."""
    if n in (0, 1):
        j0, j1, y0, y1 = bessel01(z)
        return (j0 + 1j * y0) if n == 0 else (j1 + 1j * y1)
    return besselj(n, z) + 1j * bessely(n, z)
