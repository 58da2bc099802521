"""Finite-difference verification of Gateaux derivatives.

A :class:`FamilyHandle` wraps ``t -> f(r0 + t xi)``.  Estimates are compared
with analytic derivatives in the max norm (over nodes, matrix entries or
sample points) and the decay of the error along a t-ladder is fitted on a
log-log scale.
"""

import csv
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .errors import EvaluationFailed, InsufficientData, ShapeBIEError

DEFAULT_LADDER = (1e-2, 5e-3, 2.5e-3)
ROUNDOFF_FLOOR = 1e-13
CENTRAL_THRESHOLD = 1.9
ONE_SIDED_THRESHOLD = 0.9


class _Saturated:
    """Sentinel order: every error is below the roundoff floor."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "PASS_SATURATED"

    __str__ = __repr__

    def __reduce__(self):
        return (_Saturated, ())


PASS_SATURATED = _Saturated()


def max_norm(x):
    return float(np.max(np.abs(np.asarray(x)))) if np.size(x) else 0.0


def thread_count():
    """Worker threads for independent evaluations (env SHAPEBIE_THREADS, default 1)."""
    try:
        return max(1, int(os.environ.get("SHAPEBIE_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, items):
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


class FamilyHandle:
    """t -> f(r0 + t xi); ``base`` (if given) is returned verbatim at t = 0."""

    def __init__(self, evaluate: Callable[[float], Any], kind="array", base=None, name=""):
        self._evaluate = evaluate
        self.kind = kind
        self.name = name
        self._cache = {}
        if base is not None:
            self._cache[0.0] = np.asarray(base)

    def __call__(self, t):
        t = float(t)
        if t not in self._cache:
            value = self._evaluate(t)
            if hasattr(value, "matrix"):
                value = value.matrix
            elif hasattr(value, "values"):
                value = value.values
            self._cache[t] = np.asarray(value)
        return self._cache[t]

    def evaluate_many(self, ts):
        """Evaluate at several t (parallel when allowed); failures are returned."""
        def safe(t):
            try:
                return self(t)
            except ShapeBIEError as exc:
                return exc
        return parallel_map(safe, ts)


@dataclass
class FDEstimates:
    ladder: list
    estimates: list
    richardson: Optional[np.ndarray] = None


def _check_ladder(ladder):
    ladder = [float(t) for t in ladder]
    if len(ladder) < 1 or any(t <= 0 for t in ladder):
        raise ValueError("ladder entries must be positive")
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("ladder must be strictly decreasing")
    return ladder


def _richardson(ladder, estimates, order=2):
    if len(estimates) < 2:
        return None
    q = (ladder[-2] / ladder[-1]) ** order
    return (q * estimates[-1] - estimates[-2]) / (q - 1)


def _difference(family, ladder, combine, points):
    ladder = _check_ladder(ladder)
    ests = []
    for t in ladder:
        vals = family.evaluate_many(points(t))
        bad = [v for v in vals if isinstance(v, Exception)]
        if bad:
            partial = FDEstimates(ladder[: len(ests)], ests, _richardson(ladder, ests))
            raise EvaluationFailed(f"family {family.name!r} failed at t={t:g}: {bad[0]}", partial)
        ests.append(combine(t, *vals))
    return FDEstimates(ladder, ests, _richardson(ladder, ests))


def fd_first(family, ladder=DEFAULT_LADDER):
    """Central differences (f(t) - f(-t)) / 2t with a Richardson value."""
    return _difference(family, ladder, lambda t, a, b: (a - b) / (2 * t), lambda t: (t, -t))


def fd_one_sided(family, ladder=DEFAULT_LADDER):
    """(f(t) - f(0)) / t."""
    est = _difference(family, ladder, lambda t, a, b: (a - b) / t, lambda t: (t, 0.0))
    est.richardson = None
    return est


def fd_second(family, ladder=DEFAULT_LADDER):
    """(f(t) - 2 f(0) + f(-t)) / t^2 with a Richardson value."""
    return _difference(family, ladder, lambda t, a, b, c: (a - 2 * b + c) / t**2,
                       lambda t: (t, 0.0, -t))


def polarize(second_derivative, xi1, xi2):
    """d^2 f[0; xi1, xi2] from equal-direction second derivatives."""
    return 0.5 * (np.asarray(second_derivative(xi1 + xi2))
                  - np.asarray(second_derivative(xi1))
                  - np.asarray(second_derivative(xi2)))


def taylor_remainder(family, derivative, t, second=None):
    """|| f(t) - f(0) - t df - t^2/2 d^2f ||_max."""
    rem = family(t) - family(0.0) - t * np.asarray(derivative)
    if second is not None:
        rem = rem - 0.5 * t * t * np.asarray(second)
    return max_norm(rem)


def roundoff_floor(scale, ladder, derivative_order=1, factor=64.0):
    """Per-t saturation level: max(1e-13, factor * eps * scale / t^k)."""
    eps = np.finfo(float).eps
    return [max(ROUNDOFF_FLOOR, factor * eps * scale / t**derivative_order) for t in ladder]


def order_fit(errors, ladder, floor=ROUNDOFF_FLOOR):
    """Least-squares slope of log(error) against log(t) over unsaturated entries."""
    errors = np.asarray(errors, dtype=float)
    ladder = np.asarray(ladder, dtype=float)
    if errors.shape != ladder.shape or len(ladder) < 2:
        raise InsufficientData("need at least two ladder points")
    floor = np.broadcast_to(np.asarray(floor, dtype=float), errors.shape)
    usable = errors >= floor
    if not np.any(usable):
        return PASS_SATURATED
    if np.count_nonzero(usable) < 2:
        raise InsufficientData("fewer than two unsaturated errors")
    return float(np.polyfit(np.log(ladder[usable]), np.log(errors[usable]), 1)[0])


@dataclass
class DerivativeReport:
    target: str
    xi: str
    ladder: list
    errors: list
    order: Any
    passed: bool
    wall_ms: float = 0.0
    threshold: float = CENTRAL_THRESHOLD
    mode: str = "central"
    suite: str = ""
    shape: str = ""
    N: Any = ""
    kappa: Any = ""
    extra: dict = field(default_factory=dict)

    @property
    def max_error(self):
        return max(self.errors) if self.errors else 0.0

    def order_text(self):
        if self.order is None:
            return ""
        if self.order is PASS_SATURATED:
            return str(PASS_SATURATED)
        return f"{self.order:.3f}"

    def to_json(self):
        order = self.order
        if order is PASS_SATURATED:
            order = str(PASS_SATURATED)
        out = {"target": self.target, "xi": self.xi, "ladder": list(self.ladder),
               "errors": [float(e) for e in self.errors], "order": order,
               "pass": bool(self.passed), "wall_ms": float(self.wall_ms)}
        if self.suite:
            out.update(suite=self.suite, shape=self.shape, N=self.N, kappa=self.kappa,
                       mode=self.mode, threshold=self.threshold)
        if self.extra:
            out["extra"] = self.extra
        return out

    def csv_row(self):
        return [self.suite, self.target, self.xi, self.shape, self.N, self.kappa,
                self.order_text(), f"{self.max_error:.6e}", "PASS" if self.passed else "FAIL"]


CSV_COLUMNS = ["suite", "target", "xi", "shape", "N", "kappa", "order", "max_error", "pass"]


def reports_to_csv(reports):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        writer.writerow(r.csv_row())
    return buf.getvalue()


def reports_to_json(reports):
    return json.dumps([r.to_json() for r in reports], indent=2)


def _judge(errors, ladder, floor, threshold):
    try:
        order = order_fit(errors, ladder, floor)
    except InsufficientData:
        # one usable point: passes only if the finest step is saturated
        last_ok = errors[-1] < np.broadcast_to(floor, (len(errors),))[-1]
        return (PASS_SATURATED if last_ok else None), bool(last_ok)
    if order is PASS_SATURATED:
        return order, True
    return order, bool(np.isfinite(order) and order >= threshold)


def verify_derivative(target, xi, family, analytic, ladder=DEFAULT_LADDER, mode="central",
                      threshold=None, scale=None, **meta):
    """Compare an analytic derivative with FD estimates along the ladder.

    mode: ``central`` (first derivative, order >= 1.9), ``one-sided``
    (order >= 0.9) or ``second`` (second derivative, order >= 1.9).
    """
    start = time.perf_counter()
    ladder = _check_ladder(ladder)
    if mode == "central":
        est, k, default = fd_first(family, ladder), 1, CENTRAL_THRESHOLD
    elif mode == "one-sided":
        est, k, default = fd_one_sided(family, ladder), 1, ONE_SIDED_THRESHOLD
    elif mode == "second":
        est, k, default = fd_second(family, ladder), 2, CENTRAL_THRESHOLD
    else:
        raise ValueError(f"unknown mode {mode!r}")
    threshold = default if threshold is None else threshold
    analytic = np.asarray(analytic)
    errors = [max_norm(e - analytic) for e in est.estimates]
    if scale is None:
        scale = max(max_norm(family(0.0)), max_norm(analytic))
    floor = roundoff_floor(scale, ladder, k)
    order, passed = _judge(errors, ladder, floor, threshold)
    extra = dict(meta.pop("extra", {}))
    if est.richardson is not None:
        extra["richardson_error"] = max_norm(est.richardson - analytic)
    return DerivativeReport(target=target, xi=xi, ladder=ladder, errors=errors, order=order,
                            passed=passed, wall_ms=1000 * (time.perf_counter() - start),
                            threshold=threshold, mode=mode, extra=extra, **meta)


__all__ = [
    "FamilyHandle", "FDEstimates", "DerivativeReport", "PASS_SATURATED", "DEFAULT_LADDER",
    "fd_first", "fd_one_sided", "fd_second", "polarize", "taylor_remainder", "order_fit",
    "roundoff_floor", "verify_derivative", "reports_to_csv", "reports_to_json", "max_norm",
    "parallel_map", "thread_count", "CSV_COLUMNS",
]
