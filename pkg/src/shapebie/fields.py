"""Ambient closed-form fields with exact first and second derivatives.

A field is defined by sympy expressions in the ambient coordinates; values,
Jacobians and Hessians are lambdified once and evaluated on point arrays of
shape ``(n, d)``.  Index conventions for a vector field ``f``::

    jacobian[p, i, j]   = d f_i / d x_j
    hessian[p, i, j, k] = d^2 f_i / d x_j d x_k

Scalar fields drop the leading component index.
"""

import re
from functools import cached_property

import numpy as np
import sympy as sp

from .errors import ConfigError, ParameterError

COORDS = sp.symbols("x0:3", real=True)
_ALIASES = {"x": COORDS[0], "y": COORDS[1], "z": COORDS[2],
            "x0": COORDS[0], "x1": COORDS[1], "x2": COORDS[2]}


def _lambdify(expr, dim):
    fn = sp.lambdify(COORDS[:dim], expr, "numpy")

    def call(points):
        out = fn(*points.T)
        return np.broadcast_to(np.asarray(out, dtype=float), points.shape[:1]).copy()

    return call


class Field:
    """Base class: subclasses implement ``_jet(points, order)``."""

    dim: int
    rank: int
    name: str

    def value(self, points):
        return self._jet(np.atleast_2d(points), 0)

    def jacobian(self, points):
        return self._jet(np.atleast_2d(points), 1)

    def hessian(self, points):
        return self._jet(np.atleast_2d(points), 2)

    def __add__(self, other):
        return CombinedField([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        return CombinedField([(1.0, self), (-1.0, other)])

    def __mul__(self, c):
        return CombinedField([(float(c), self)])

    __rmul__ = __mul__

    def __neg__(self):
        return CombinedField([(-1.0, self)])

    def sup_norm(self, points):
        """sup over points of |value| and |Jacobian| (Frobenius)."""
        v = self.value(points).reshape(len(points), -1)
        j = self.jacobian(points).reshape(len(points), -1)
        return max(np.max(np.linalg.norm(v, axis=1)), np.max(np.linalg.norm(j, axis=1)))

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class SymbolicField(Field):
    def __init__(self, exprs, dim, name, rank=None):
        if not isinstance(exprs, (list, tuple)):
            exprs = [exprs]
        self.exprs = [sp.sympify(e, locals=_ALIASES) for e in exprs]
        self.dim = dim
        self.rank = (0 if len(self.exprs) == 1 else 1) if rank is None else rank
        if self.rank == 1 and len(self.exprs) != dim:
            raise ParameterError(f"vector field {name!r} needs {dim} components")
        used = set().union(*(e.free_symbols for e in self.exprs))
        if not used <= set(COORDS[:dim]):
            raise ParameterError(f"field {name!r} uses unknown symbols {sorted(map(str, used))}")
        self.name = name

    @cached_property
    def _fns(self):
        xs = COORDS[: self.dim]
        d = self.dim
        val = [_lambdify(e, d) for e in self.exprs]
        jac = [[_lambdify(sp.diff(e, xs[j]), d) for j in range(d)] for e in self.exprs]
        hes = [[[_lambdify(sp.diff(e, xs[j], xs[k]), d) for k in range(d)]
                for j in range(d)] for e in self.exprs]
        return val, jac, hes

    def _jet(self, points, order):
        fns = self._fns[order]
        if order == 0:
            out = np.stack([f(points) for f in fns], axis=-1)
        elif order == 1:
            out = np.stack([np.stack([f(points) for f in row], axis=-1) for row in fns], axis=1)
        else:
            out = np.stack([np.stack([np.stack([f(points) for f in r2], axis=-1)
                                      for r2 in r1], axis=1) for r1 in fns], axis=1)
        return out[:, 0] if self.rank == 0 else out


class CombinedField(Field):
    """Finite linear combination of fields, evaluated termwise."""

    def __init__(self, terms):
        flat = []
        for c, f in terms:
            if isinstance(f, CombinedField):
                flat.extend((c * c2, f2) for c2, f2 in f.terms)
            else:
                flat.append((c, f))
        dims = {f.dim for _, f in flat}
        ranks = {f.rank for _, f in flat}
        if len(dims) != 1 or len(ranks) != 1:
            raise ParameterError("cannot combine fields of different dimension or rank")
        self.terms = flat
        self.dim = dims.pop()
        self.rank = ranks.pop()
        self.name = " + ".join(f"{c:g}*{f.name}" for c, f in flat)

    def _jet(self, points, order):
        return sum(c * f._jet(points, order) for c, f in self.terms)


def zero_field(dim):
    return SymbolicField([0] * dim, dim, "zero", rank=1)


# ---------------------------------------------------------------------------
# registry


def split_args(text):
    """Split a comma list at top level (commas inside brackets are kept)."""
    parts, depth, cur = [], 0, ""
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append(cur.strip())
            cur = ""
        else:
            cur += ch
    if cur.strip():
        parts.append(cur.strip())
    return parts


_ID = re.compile(r"^\s*([A-Za-z][A-Za-z0-9_-]*)\s*(?:\((.*)\))?\s*$")


def parse_id(spec):
    m = _ID.match(spec)
    if not m:
        raise ConfigError(f"malformed identifier {spec!r}")
    name, args = m.group(1), m.group(2)
    return name, split_args(args) if args else []


def _floats(args, spec):
    try:
        return [float(sp.sympify(a)) for a in args]
    except (TypeError, ValueError, sp.SympifyError) as exc:
        raise ConfigError(f"non-numeric argument in {spec!r}") from exc


def make_field(spec, surface):
    """Build a field from a registry id such as ``fourier2d(2, 1, 0)``.

    Known ids: ``normal``, ``normal-ext``, ``radial``, ``constant(v...)``,
    ``fourier2d(k, a, b[, v1, v2])``, ``shear(axis)``, ``coord(i)``,
    ``poly(e1[, e2, e3])``.
    """
    name, args = parse_id(spec)
    d = surface.dim
    xs = COORDS[:d]
    r = sp.sqrt(sum(x**2 for x in xs))
    if name in ("normal", "normal-ext"):
        if surface.levelset is None:
            raise ConfigError(f"surface {surface.name!r} has no level set for {spec!r}")
        grad = [sp.diff(surface.levelset, x) for x in xs]
        norm = sp.sqrt(sum(g**2 for g in grad))
        return SymbolicField([g / norm for g in grad], d, spec)
    if name == "radial":
        return SymbolicField([x / r for x in xs], d, spec)
    if name == "constant":
        vals = _floats(args, spec)
        if len(vals) != d:
            raise ConfigError(f"{spec!r}: constant needs {d} components")
        return SymbolicField(vals, d, spec, rank=1)
    if name == "fourier2d":
        if d != 2:
            raise ConfigError(f"{spec!r} is only defined in 2D")
        vals = _floats(args, spec)
        if not vals or len(vals) not in (1, 2, 3, 5):
            raise ConfigError(f"{spec!r}: expected fourier2d(k[, a, b[, v1, v2]])")
        k = vals[0]
        a = vals[1] if len(vals) > 1 else 1.0
        b = vals[2] if len(vals) > 2 else 0.0
        phi = sp.atan2(xs[1], xs[0])
        amp = a * sp.cos(k * phi) + b * sp.sin(k * phi)
        direction = [vals[3], vals[4]] if len(vals) == 5 else [xs[0] / r, xs[1] / r]
        return SymbolicField([amp * v for v in direction], d, spec)
    if name == "shear":
        (axis,) = [int(v) for v in _floats(args, spec)] or [0]
        if not 0 <= axis < d:
            raise ConfigError(f"{spec!r}: axis out of range")
        comps = [0] * d
        comps[axis] = xs[(axis + 1) % d]
        return SymbolicField(comps, d, spec, rank=1)
    if name == "coord":
        (i,) = [int(v) for v in _floats(args, spec)]
        if not 0 <= i < d:
            raise ConfigError(f"{spec!r}: coordinate out of range")
        return SymbolicField(xs[i], d, spec)
    if name == "poly":
        if len(args) not in (1, d):
            raise ConfigError(f"{spec!r}: expected 1 or {d} components")
        try:
            return SymbolicField(args, d, spec, rank=0 if len(args) == 1 else 1)
        except (sp.SympifyError, ParameterError) as exc:
            raise ConfigError(f"{spec!r}: {exc}") from exc
    raise ConfigError(f"unknown field id {spec!r}")
