"""Batch verification runner.

    shapebie run   --config cfg.json [--suite S] [--out DIR]
    shapebie table --config cfg.json [--out DIR]

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error.
"""

import argparse
import json
from importlib import metadata
import os
import platform
import sys
import time

import jsonschema
import numpy as np

from . import __version__
from .errors import CheckFailed, ConfigError, ShapeBIEError
from .fields import make_field
from .geometry import SurfaceGrid, d2J, d2N, dJ, dm_W, dN, make_shape
from .kernels import (acoustic3d_remainder_slope, class_certify, helmholtz_residual,
                      make_kernel, navier_residual, parse_complex)
from .operators import (adjoint_defect, assemble_D, assemble_dD_op, assemble_dV,
                        assemble_Kprime, assemble_N, assemble_pulled_back, assemble_V,
                        circle_multiplier_V, eval_dpotential, eval_potential)
from .rng import XorShift64Star
from .shape_diff import (DerivativeReport, FamilyHandle, max_norm, reports_to_csv,
                         reports_to_json, verify_derivative)
from .surface_calculus import (dD, dG, dN_via_gradient, gunter_m, pulled_divergence,
                               pulled_gradient, stokes_residual, traction_rewrite_check)

SUITES = ("coeffs", "surfops", "operators", "potentials", "kernels")

DEFAULT_FIELDS = {
    2: ["normal", "constant(0.3,-0.2)", "fourier2d(1,1,0.5)", "fourier2d(2,1,0.5)",
        "fourier2d(3,0.5,1)"],
    3: ["normal", "constant(0.3,-0.2,0.1)", "poly(x*y,y*z,z*x)", "poly(y**2,0,x*z)"],
}
DEFAULT_U_FIELDS = {
    2: ["coord(0)", "poly(x**2*y)", "poly(x*y,y**2)"],
    3: ["coord(2)", "poly(x*y*z)", "poly(x*y,y*z,z*x)"],
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "suite": {"enum": list(SUITES) + ["all"]},
        "shapes": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "shape": {"type": "string"},
        "fields": {"oneOf": [
            {"type": "array", "items": {"type": "string"}, "minItems": 1},
            {"type": "object", "additionalProperties": False,
             "properties": {"2": {"type": "array", "items": {"type": "string"}},
                            "3": {"type": "array", "items": {"type": "string"}}}}]},
        "u_fields": {"oneOf": [
            {"type": "array", "items": {"type": "string"}, "minItems": 1},
            {"type": "object", "additionalProperties": False,
             "properties": {"2": {"type": "array", "items": {"type": "string"}},
                            "3": {"type": "array", "items": {"type": "string"}}}}]},
        "kernels": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "kernel": {"type": "string"},
        "kappas": {"type": "array", "items": {"type": ["string", "number"]}, "minItems": 1},
        "N": {"type": "integer", "minimum": 8},
        "grid3d": {"type": "array", "items": {"type": "integer", "minimum": 2},
                   "minItems": 2, "maxItems": 2},
        "ladder": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                   "minItems": 2},
        "out": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "n_points": {"type": "integer", "minimum": 1, "maximum": 64},
        "N_list": {"type": "array", "items": {"type": "integer", "minimum": 8}},
        "inject_failure": {"oneOf": [{"type": "string"},
                                     {"type": "array", "items": {"type": "string"}}]},
    },
}

DEFAULTS = {
    "suite": "all",
    "shapes": ["circle", "ellipse(1,0.6)", "kite", "sphere"],
    "kernels": ["helmholtz2d(1)", "helmholtz3d(1)", "elastic3d(2,1,1,2)"],
    "kappas": ["1"],
    "N": 128,
    "grid3d": [32, 64],
    "ladder": [1e-2, 5e-3, 2.5e-3],
    "out": "shapebie-out",
    "seed": 1,
    "n_points": 4,
    "inject_failure": [],
}


# ---------------------------------------------------------------------------
# configuration


def _location(err):
    path = "/".join(str(p) for p in err.absolute_path)
    return path or "<root>"


def parse_config(raw, suite_override=None):
    """Validate a decoded JSON config and fill defaults."""
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as err:
        raise ConfigError(f"config field {_location(err)}: {err.message}") from None
    cfg = dict(DEFAULTS)
    cfg.update(raw)
    if "shape" in raw:
        cfg["shapes"] = [raw["shape"]]
    if "kernel" in raw:
        cfg["kernels"] = [raw["kernel"]]
    if suite_override is not None:
        if suite_override not in SUITES + ("all",):
            raise ConfigError(f"unknown suite {suite_override!r}")
        cfg["suite"] = suite_override
    if isinstance(cfg["inject_failure"], str):
        cfg["inject_failure"] = [cfg["inject_failure"]]
    ladder = [float(t) for t in cfg["ladder"]]
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ConfigError("config field ladder: must be strictly decreasing")
    cfg["ladder"] = ladder
    cfg["kappas"] = [_kappa(k) for k in cfg["kappas"]]
    surfaces = [make_shape(s) for s in cfg["shapes"]]
    n = cfg["N"]
    if any(s.dim == 2 for s in surfaces) and n & (n - 1):
        raise ConfigError(f"config field N: {n} is not a power of two")
    for k in cfg["kernels"]:
        make_kernel(k)
    for s in surfaces:
        for f in _field_ids(cfg, "fields", s.dim) + _field_ids(cfg, "u_fields", s.dim):
            make_field(f, s)
    if "N_list" in cfg:
        if not cfg["N_list"]:
            raise ConfigError("config field N_list: must not be empty")
        bad = [m for m in cfg["N_list"] if m & (m - 1)]
        if bad:
            raise ConfigError(f"config field N_list: {bad} are not powers of two")
    return cfg


def _kappa(value):
    k = parse_complex(value) if isinstance(value, str) else complex(value)
    if k == 0 or k.imag < 0:
        raise ConfigError(f"config field kappas: {value!r} needs kappa != 0 and Im >= 0")
    return k


def load_config(path, suite_override=None):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(raw, suite_override)


def _field_ids(cfg, key, dim):
    value = cfg.get(key)
    defaults = DEFAULT_FIELDS if key == "fields" else DEFAULT_U_FIELDS
    if value is None:
        return defaults[dim]
    if isinstance(value, dict):
        return value.get(str(dim), defaults[dim])
    return value


def kappa_text(k):
    k = complex(k)
    return f"{k.real:g}" if k.imag == 0 else f"{k.real:g}{k.imag:+g}i"


# ---------------------------------------------------------------------------
# check helpers


class _Context:
    def __init__(self, cfg):
        self.cfg = cfg
        self.ladder = cfg["ladder"]
        self.inject = set(cfg["inject_failure"])
        self.reports = []

    def grid(self, surface):
        n = self.cfg["N"] if surface.dim == 2 else tuple(self.cfg["grid3d"])
        return SurfaceGrid.build(surface, n)

    @staticmethod
    def grid_label(grid):
        if grid.dim == 2:
            return str(grid.size)
        n_u = len(np.unique(grid.params[:, 1]))
        return f"{n_u}x{grid.size // n_u}"

    def meta(self, suite, grid, kappa=""):
        return {"suite": suite, "shape": grid.surface.root.name, "N": self.grid_label(grid),
                "kappa": kappa_text(kappa) if kappa != "" else ""}

    def fd(self, target, xi_name, family, analytic, meta, modes=("central",)):
        analytic = np.asarray(analytic)
        if target in self.inject or "all" in self.inject:
            analytic = analytic + 1e-3 * (max_norm(analytic) + 1.0)
        for mode in modes:
            name = target if mode in ("central", "second") else f"{target}[{mode}]"
            try:
                rep = verify_derivative(name, xi_name, family, analytic, self.ladder, mode,
                                        **meta)
            except ShapeBIEError as exc:
                rep = DerivativeReport(name, xi_name, self.ladder, [], None, False, mode=mode,
                                       extra={"error": str(exc)}, **meta)
            self.reports.append(rep)

    def identity(self, target, xi_name, error, tol, meta, order=None):
        error = float(error)
        self.reports.append(DerivativeReport(target, xi_name, [], [error], order,
                                             bool(error <= tol), threshold=tol,
                                             mode="identity", **meta))


def _family(fn, base):
    return FamilyHandle(lambda t: fn(t) if t != 0 else base, base=base)


def _is_constant(field, grid):
    return not np.any(field.jacobian(grid.ref_positions))


# ---------------------------------------------------------------------------
# suites


def suite_coeffs(ctx, surfaces):
    for surface in surfaces:
        grid = ctx.grid(surface)
        meta = ctx.meta("coeffs", grid)
        for fid in _field_ids(ctx.cfg, "fields", surface.dim):
            xi = make_field(fid, surface)

            def state(t, xi=xi):
                return grid.deformed(t * xi)

            ctx.fd("dJ", fid, _family(lambda t: state(t).J, grid.J), dJ(grid, xi), meta,
                   modes=("central", "one-sided"))
            ctx.fd("dN", fid, _family(lambda t: state(t).normals, grid.normals),
                   dN(grid, xi), meta)
            ctx.fd("dW", fid, _family(lambda t: state(t).W, grid.W), dm_W(grid, xi, 1), meta)
            ctx.fd("d2J", fid, _family(lambda t: state(t).J, grid.J), d2J(grid, xi, xi), meta,
                   modes=("second",))
            ctx.fd("d2N", fid, _family(lambda t: state(t).normals, grid.normals),
                   d2N(grid, xi, xi), meta, modes=("second",))
            for m in range(surface.dim, surface.dim + 2):
                ctx.identity(f"dmW[m={m}]=0", fid, max_norm(dm_W(grid, xi, m)), 0.0, meta)
            if _is_constant(xi, grid):
                ctx.identity("dJ=0", fid, max_norm(dJ(grid, xi)), 0.0, meta)
                ctx.identity("dN=0", fid, max_norm(dN(grid, xi)), 0.0, meta)


def suite_surfops(ctx, surfaces):
    for surface in surfaces:
        grid = ctx.grid(surface)
        meta = ctx.meta("surfops", grid)
        for fid in _field_ids(ctx.cfg, "fields", surface.dim):
            xi = make_field(fid, surface)
            ctx.identity("dN=-[G xi]N", fid,
                         max_norm(dN_via_gradient(grid, xi) - dN(grid, xi)), 1e-12, meta)
            for uid in _field_ids(ctx.cfg, "u_fields", surface.dim):
                u = make_field(uid, surface)
                label = f"{fid};u={uid}"
                if u.rank == 0:
                    base = pulled_gradient(grid, u)
                    fam = _family(lambda t, u=u, xi=xi: pulled_gradient(grid, u, t * xi), base)
                    ctx.fd("dG", label, fam, dG(grid, xi, u), meta)
                else:
                    base = pulled_divergence(grid, u)
                    fam = _family(lambda t, u=u, xi=xi: pulled_divergence(grid, u, t * xi), base)
                    ctx.fd("dD", label, fam, dD(grid, xi, u), meta)
        if surface.dim == 3:
            _gunter_checks(ctx, surface, grid, meta)


def _gunter_checks(ctx, surface, grid, meta):
    scalars = [make_field(s, surface) for s in ("coord(0)", "poly(y*z)", "poly(x**2+z)")]
    worst = 0.0
    for u in scalars:
        for j in range(3):
            for k in range(3):
                worst = max(worst, max_norm(gunter_m(u, grid, j, k) + gunter_m(u, grid, k, j)))
    ctx.identity("m_jk=-m_kj", "-", worst, 1e-13, meta)
    n = make_field("normal", surface)
    vec = make_field("poly(x*y,y*z,z*x)", surface)
    res = max(stokes_residual(n, n, grid), stokes_residual(vec, n, grid),
              stokes_residual(scalars[0], scalars[1], grid, jk=(0, 1)))
    ctx.identity("stokes", "-", res, 1e-8, meta)
    quad = make_field("poly(x**2-0.3*y*z+0.5*x, 0.7*x*y+z**2-0.2*y, -0.4*x*z+0.9*y**2+x)",
                      surface)
    ctx.identity("traction_rewrite", "-", traction_rewrite_check(quad, 1.3, 0.7, grid), 1e-12,
                 meta)


def _two_d(surfaces, suite):
    flat = [s for s in surfaces if s.dim == 2]
    if not flat and suite == "operators":
        raise ConfigError("suite operators needs at least one d=2 shape")
    return flat


def suite_operators(ctx, surfaces, explicit=False):
    for surface in _two_d(surfaces, "operators" if explicit else ""):
        grid = ctx.grid(surface)
        for kappa in ctx.cfg["kappas"]:
            meta = ctx.meta("operators", grid, kappa)
            bases = {"V": assemble_V(grid, kappa).matrix, "D": assemble_D(grid, kappa).matrix}
            ctx.identity("K'=adjoint(D)", "-",
                         adjoint_defect(assemble_D(grid, kappa), assemble_Kprime(grid, kappa)),
                         1e-10, meta)
            nm = assemble_N(grid, kappa).matrix
            w = grid.weights[:, None]
            ctx.identity("N symmetric", "-", max_norm(w * nm - (w * nm).T), 1e-9, meta)
            if surface.name == "circle":
                ctx.identity("V multiplier", "-", _v_multiplier_error(grid, kappa), 1e-8, meta)
            for fid in _field_ids(ctx.cfg, "fields", 2):
                xi = make_field(fid, surface)
                for which, deriv in (("V", assemble_dV), ("D", assemble_dD_op)):
                    dm = deriv(grid, kappa, xi).matrix
                    fam = _family(lambda t, which=which, xi=xi: assemble_pulled_back(
                        grid, kappa, t * xi, which).matrix, bases[which])
                    ctx.fd(f"d{which}", fid, fam, dm, meta, modes=("central", "one-sided"))
                    if _is_constant(xi, grid):
                        ctx.identity(f"d{which}=0", fid, max_norm(dm), 0.0, meta)


def _v_multiplier_error(grid, kappa):
    theta = grid.params[:, 0]
    v = assemble_V(grid, kappa)
    worst = 0.0
    for n in range(-(grid.size // 4), grid.size // 4 + 1):
        u = np.exp(1j * n * theta)
        lam = complex(circle_multiplier_V(kappa, n))
        worst = max(worst, max_norm(v.apply(u) - lam * u) / abs(lam))
    return worst


def sample_points(surface, grid, count, seed, min_gap=0.5):
    """Seeded points at distance >= min_gap from the surface."""
    rng = XorShift64Star(seed)
    radius = np.max(np.linalg.norm(grid.positions, axis=1))
    dirs = rng.directions(count, surface.dim)
    return dirs * (radius + min_gap + 1.5 * rng.uniform(count))[:, None]


def suite_potentials(ctx, surfaces):
    for surface in surfaces:
        grid = ctx.grid(surface)
        pts = sample_points(surface, grid, ctx.cfg["n_points"], ctx.cfg["seed"])
        density = 1.0 + 0.5 * grid.ref_positions[:, 0]
        for kappa in ctx.cfg["kappas"]:
            meta = ctx.meta("potentials", grid, kappa)
            base = eval_potential(grid, kappa, density, pts).values
            for fid in _field_ids(ctx.cfg, "fields", surface.dim):
                xi = make_field(fid, surface)
                fam = _family(lambda t, xi=xi: eval_potential(grid, kappa, density, pts,
                                                              r=t * xi).values, base)
                ctx.fd("dP", fid, fam, eval_dpotential(grid, kappa, density, pts, xi).values,
                       meta)


def suite_kernels(ctx):
    seed = ctx.cfg["seed"]
    for kid in ctx.cfg["kernels"]:
        kernel = make_kernel(kid)
        meta = {"suite": "kernels", "shape": "-", "N": "-",
                "kappa": kappa_text(kernel.kappa) if kernel.kappa is not None else ""}
        rng = XorShift64Star(seed)
        radii = np.array([0.5, 1.0, 0.5, 1.0])
        z0 = rng.directions(4, kernel.dim) * radii[:, None]
        if kernel.gradient is not None:
            e = rng.directions(1, kernel.dim)[0]
            fam = _family(lambda t: kernel.value(z0 + t * e), kernel.value(z0))
            ctx.fd("grad G", "-", fam, kernel.gradient(z0) @ e, meta)
            ctx.identity("helmholtz residual", "-",
                         np.max(helmholtz_residual(kernel.dim, kernel.kappa, z0)), 1e-8, meta)
        else:
            p = kernel.params
            ctx.identity("navier residual", "-",
                         np.max(navier_residual(p["omega"], p["rho"], p["mu"], p["lambda"], z0)),
                         1e-6, meta)
        rep = class_certify(kernel, kernel.class_index)
        gaps = [abs(c["slope"] - c["nominal"]) for c in rep["conditions"]
                if c.get("slope") is not None and "log_power" not in c]
        defect = [c["max_defect"] for c in rep["conditions"] if "max_defect" in c]
        ctx.reports.append(DerivativeReport("class_certify", f"m={kernel.class_index}", [],
                                            [max(gaps + defect)], None,
                                            bool(rep["passed"] and rep["sharp"]), threshold=0.1,
                                            mode="identity", extra={"report": rep}, **meta))
        if kernel.dim == 3 and kernel.kappa is not None:
            slope = acoustic3d_remainder_slope(kernel.kappa)
            ctx.identity("expansion remainder", "-", abs(slope - 3.0), 0.1, meta, order=slope)


def run_suites(cfg):
    ctx = _Context(cfg)
    surfaces = [make_shape(s) for s in cfg["shapes"]]
    suite = cfg["suite"]
    chosen = SUITES if suite == "all" else (suite,)
    for name in chosen:
        if name == "coeffs":
            suite_coeffs(ctx, surfaces)
        elif name == "surfops":
            suite_surfops(ctx, surfaces)
        elif name == "operators":
            suite_operators(ctx, surfaces, explicit=suite == "operators")
        elif name == "potentials":
            suite_potentials(ctx, surfaces)
        else:
            suite_kernels(ctx)
    return ctx.reports


def _versions():
    out = {"shapebie": __version__, "python": platform.python_version()}
    for pkg in ("numpy", "scipy", "sympy", "jsonschema"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


def _failing(reports):
    return [r for r in reports if not r.passed]


def cmd_run(args):
    start = time.perf_counter()
    cfg = load_config(args.config, args.suite)
    out = args.out or cfg["out"]
    reports = run_suites(cfg)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "report.json"), "w") as fh:
        fh.write(reports_to_json(reports))
    with open(os.path.join(out, "summary.csv"), "w", newline="") as fh:
        fh.write(reports_to_csv(reports))
    failed = _failing(reports)
    manifest = {"config": {k: (kappa_text(v) if k == "kappa" else v) for k, v in cfg.items()
                           if k != "kappas"},
                "kappas": [kappa_text(k) for k in cfg["kappas"]],
                "versions": _versions(), "wall_seconds": time.perf_counter() - start,
                "checks": len(reports), "failed": len(failed),
                "files": ["report.json", "summary.csv", "MANIFEST.json"]}
    with open(os.path.join(out, "MANIFEST.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed; output in {out}")
    if failed:
        raise CheckFailed("\n".join(",".join(map(str, r.csv_row())) for r in failed))
    return 0


# ---------------------------------------------------------------------------
# convergence table


TABLE_COLUMNS = ["shape", "N", "kappa", "quantity", "error", "reduction", "fd_order", "pass"]
SATURATION = 1e-12
SELF_SATURATION = 1e-12


def _table_rows(cfg):
    n_list = sorted(cfg.get("N_list") or [])
    if not n_list:
        raise ConfigError("config field N_list: required and non-empty for the table command")
    surfaces = [s for s in (make_shape(x) for x in cfg["shapes"]) if s.dim == 2]
    if not surfaces:
        raise ConfigError("table needs at least one d=2 shape")
    kappa = cfg["kappas"][0]
    fid = _field_ids(cfg, "fields", 2)[0]
    rows = []
    for surface in surfaces:
        ref = SurfaceGrid.build(surface, 2 * n_list[-1])
        u_ref = np.exp(np.cos(ref.params[:, 0]))
        ref_vals = {"V": assemble_V(ref, kappa).apply(u_ref)[0],
                    "D": assemble_D(ref, kappa).apply(u_ref)[0]}
        xi = make_field(fid, surface)
        prev = {}
        for n in n_list:
            grid = SurfaceGrid.build(surface, n)
            u = np.exp(np.cos(grid.params[:, 0]))
            quantities = {}
            if surface.name == "circle":
                quantities["V multiplier"] = (_v_multiplier_error(grid, kappa), 10.0, SATURATION)
            quantities["V self-convergence"] = (
                abs(assemble_V(grid, kappa).apply(u)[0] - ref_vals["V"]), 1.0, SELF_SATURATION)
            quantities["D self-convergence"] = (
                abs(assemble_D(grid, kappa).apply(u)[0] - ref_vals["D"]), 1.0, SELF_SATURATION)
            fam = _family(lambda t: assemble_pulled_back(grid, kappa, t * xi, "V").matrix,
                          assemble_V(grid, kappa).matrix)
            order = verify_derivative("dV", fid, fam, assemble_dV(grid, kappa, xi).matrix,
                                      cfg["ladder"]).order_text()
            for q, (err, factor, floor) in quantities.items():
                old = prev.get(q)
                reduction = old / err if old is not None and err > 0 else float("nan")
                ok = err < floor or old is None or old < floor or reduction >= factor
                prev[q] = err
                rows.append([surface.name, n, kappa_text(kappa), q, f"{err:.3e}",
                             "" if np.isnan(reduction) else f"{reduction:.3g}", order,
                             "PASS" if ok else "FAIL"])
    return rows


def cmd_table(args):
    cfg = load_config(args.config)
    rows = _table_rows(cfg)
    lines = [",".join(TABLE_COLUMNS)] + [",".join(map(str, r)) for r in rows]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    out = args.out or cfg["out"]
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "table.csv"), "w", newline="") as fh:
        fh.write(text)
    failed = [r for r in rows if r[-1] != "PASS"]
    if failed:
        raise CheckFailed("\n".join(",".join(map(str, r)) for r in failed))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="shapebie", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run verification suites")
    run.add_argument("--config", required=True)
    run.add_argument("--suite", default=None)
    run.add_argument("--out", default=None)
    run.set_defaults(func=cmd_run)
    table = sub.add_parser("table", help="operator convergence table")
    table.add_argument("--config", required=True)
    table.add_argument("--out", default=None)
    table.set_defaults(func=cmd_table)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    except CheckFailed as exc:
        print("failing checks:", file=sys.stderr)
        print(str(exc), file=sys.stderr)
        return CheckFailed.exit_code
    except ShapeBIEError as exc:
        print(f"check failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return CheckFailed.exit_code


if __name__ == "__main__":
    sys.exit(main())
