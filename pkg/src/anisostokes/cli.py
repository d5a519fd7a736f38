"""Command-line driver: ``anisostokes <subcommand> [options]``.

Every run writes a JSON report with one record per check and, for studies,
a CSV table. The exit status is 0 when every check passes, 1 when one fails
and 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, expr
from .bvp import (BVPData, exterior_truncation_study, solve_dirichlet,
                  solve_dirichlet_by_potentials, solve_mixed, solve_neumann_by_potentials,
                  solve_transmission)
from .config import ConfigError, ExperimentConfig, load_config
from .fem import h1_norm, load_functional, trace_functional
from .manufactured import default_state
from .mesh import CompositeMesh, build_composite, refine, tag_interface
from .nstokes import NSContext, free_load, run as run_ns, uniqueness_margin
from .potentials import (PotentialContext, identity_suite, inverse_checks, project_nu,
                         project_rigid_density)
from .studies import convergence_study, infsup_study, observed_rates
from .tensor import (CoeffTensor, INNER, OUTER, adn_ellipticity_check, check_symmetry,
                     ellipticity_constant, from_regions, make_isotropic, random_symmetric_tensor)

SUBCOMMANDS = ("tensor-check", "identities", "bvp", "ns", "infsup", "converge", "truncation")
CSV_COLUMNS = ("level", "h", "error_u", "error_p", "rate_u", "rate_p")
UNDEFINED = "\u2014"


@dataclass
class Report:
    command: str
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    deterministic: bool = False

    def add(self, name: str, value: float, tol: float, passed: bool | None = None, anchor: str = ""):
        value = float(value)
        ok = (math.isfinite(value) and value <= tol) if passed is None else bool(passed)
        self.checks.append({"name": name, "anchor": anchor, "value": value, "tol": float(tol),
                            "pass": ok})

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def to_json(self) -> str:
        body = {"command": self.command, "passed": self.passed, "checks": self.checks,
                "tables": self.tables, "data": self.data,
                "environment": {"version": __version__, "deterministic": self.deterministic,
                                "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat()}}
        return json.dumps(_clean(body), indent=2, sort_keys=True)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def format_cell(value) -> str:
    if value is None:
        return UNDEFINED
    if isinstance(value, float):
        return f"{value:.6e}"
    return str(value)


def write_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([format_cell(row.get(c)) for c in CSV_COLUMNS])


# ------------------------------------------------------------- builders
def build_mesh(cfg: ExperimentConfig, refinements: int | None = None) -> CompositeMesh:
    m = cfg["mesh"]
    mesh = build_composite(m["dim"], m["inner"], float(m["R"]), float(m["h"]), float(m["r0"]),
                           outer_shape=m["outer"], uniform_radius=m["uniform_radius"],
                           growth=float(m["growth"]))
    for _ in range(m["refinements"] if refinements is None else refinements):
        mesh = refine(mesh)
    return mesh


def build_tensor(cfg: ExperimentConfig, dim: int) -> CoeffTensor:
    t = cfg["tensor"]
    if t["kind"] == "isotropic":
        mu = t["mu"]
        if isinstance(mu, dict):
            unknown = set(mu) - {"inner", "outer"}
            if unknown:
                raise ConfigError(f"tensor.mu: unknown keys {sorted(unknown)}")
            mu = {INNER: float(mu.get("inner", 1.0)), OUTER: float(mu.get("outer", 1.0))}
        return make_isotropic(dim, mu, float(t["lam"]))
    if t["kind"] == "random":
        rng = np.random.default_rng(t["seed"])
        a = random_symmetric_tensor(dim, rng, float(t["shift"]), t["self_adjoint"])
        return from_regions(a, a, "random")
    try:
        inner = np.asarray(t["inner"], dtype=float).reshape((dim,) * 4)
        outer = np.asarray(t.get("outer", t["inner"]), dtype=float).reshape((dim,) * 4)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"tensor: array kind needs inner/outer with {dim ** 4} entries") from exc
    return from_regions(inner, outer, "array")


def _neumann_predicate(text: str, dim: int):
    """Facet-centroid predicate from ``"<coord> > <number>"`` or ``"<coord> < <number>"``."""
    parts = text.split()
    if len(parts) != 3 or parts[0] not in expr.COORDS[:dim] or parts[1] not in ("<", ">"):
        raise ConfigError(f"mesh.neumann_where: expected '<coord> < value' or '<coord> > value', got {text!r}")
    axis = expr.COORDS.index(parts[0])
    try:
        val = float(parts[2])
    except ValueError as exc:
        raise ConfigError(f"mesh.neumann_where: {parts[2]!r} is not a number") from exc
    if parts[1] == ">":
        return lambda c: c[:, axis] > val
    return lambda c: c[:, axis] < val


# ------------------------------------------------------------ commands
def cmd_tensor_check(cfg, args, rep: Report):
    dim = cfg["mesh"]["dim"]
    A = build_tensor(cfg, dim)
    rng = np.random.default_rng(cfg["solver"]["seed"])
    pts = rng.uniform(-1, 1, (10, dim))
    ok, viol = check_symmetry(A, pts)
    rep.add("symmetry", viol, 1e-12, ok, "index-pair symmetry")
    ell = ellipticity_constant(A, pts)
    rep.add("ellipticity constant positive", -ell.c_inv, 0.0, ell.elliptic, "symmetric ellipticity")
    adn = adn_ellipticity_check(A, pts, 1000, seed=cfg["solver"]["seed"])
    rep.add("ADN determinant bounded away from zero", -abs(adn.min_scaled_det), 0.0, adn.passed,
            "ADN symbol")
    rep.data.update({"c_inv": ell.c_inv, "c_A": ell.c_A(), "adn_min_scaled_det": adn.min_scaled_det})


def cmd_identities(cfg, args, rep: Report):
    mesh = build_mesh(cfg, args.refine)
    A = build_tensor(cfg, mesh.dim)
    wanted = cfg["checks"]
    if wanted is not None and len(wanted) == 0:
        return
    ctx = PotentialContext(A, mesh, cfg["solver"]["pressure_mode"])
    n = cfg["solver"]["samples"]
    seed = cfg["solver"]["seed"]
    checks = identity_suite(ctx, n, seed) + inverse_checks(ctx, min(n, 10), seed)
    for c in checks:
        if wanted is None or c.name in wanted:
            rec = c.record()
            rec["level"] = args.refine or cfg["mesh"]["refinements"]
            rep.checks.append(rec)
    if wanted:
        missing = set(wanted) - {c["name"] for c in rep.checks}
        if missing:
            raise ConfigError(f"checks: unknown names {sorted(missing)}")


def _random_data(ctx: PotentialContext, kind: str, seed: int) -> BVPData:
    s = ctx.space
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(s.n_velocity)
    g = np.zeros(s.n_pressure)
    if kind == "transmission":
        return BVPData(kind, f, rng.standard_normal(s.n_pressure), rng.standard_normal(s.n_trace),
                       rng.standard_normal(s.n_trace))
    if kind == "dirichlet":
        return BVPData(kind, f, g, phi_D=project_nu(ctx, rng.standard_normal(s.n_trace)))
    if kind == "neumann":
        return BVPData(kind, psi_N=project_rigid_density(ctx, rng.standard_normal(s.n_trace)))
    return BVPData(kind, f, g, phi_D=rng.standard_normal(s.n_trace),
                   psi_N=rng.standard_normal(s.n_trace))


def cmd_bvp(cfg, args, rep: Report):
    kind = args.kind or cfg["problem"]["kind"]
    mesh = build_mesh(cfg, args.refine)
    if kind == "mixed":
        mesh = tag_interface(mesh, _neumann_predicate(cfg["mesh"]["neumann_where"], mesh.dim))
    A = build_tensor(cfg, mesh.dim)
    pm = args.pressure_mode or cfg["solver"]["pressure_mode"]
    ctx = PotentialContext(A, mesh, pm)
    s = ctx.space
    source = cfg["problem"]["data"]
    if source == "manufactured":
        state = default_state(A, mesh, pm == "continuous")
        data = BVPData(kind, state.load_functional(s), state.divergence_functional(s),
                       state.trace_jump(s), state.traction_jump(s), state.side_trace(s, OUTER),
                       state.traction_density(s, OUTER))
    elif source == "zero":
        z = np.zeros(s.n_trace)
        data = BVPData(kind, phi_D=z, psi_N=z)
    else:
        data = _random_data(ctx, kind, cfg["problem"]["seed"])
    if kind == "transmission":
        a = solve_transmission(ctx, data)
        b = solve_transmission(ctx, data, "potential")
        diff = h1_norm(s, a.field.u - b.field.u) / max(h1_norm(s, a.field.u), 1e-300)
        rep.add("direct and potential paths agree", diff, 1e-7, anchor="transmission")
        rep.data["report"] = a.report
    elif kind == "dirichlet":
        a = solve_dirichlet(ctx, data)
        b = solve_dirichlet(ctx, data, "harmonic")
        scale = max(h1_norm(s, a.field.u, OUTER), 1e-300)
        rep.add("solution independent of the lifting", h1_norm(s, a.field.u - b.field.u, OUTER) / scale,
                1e-10, anchor="exterior Dirichlet")
        if pm == "broken":
            c = solve_dirichlet_by_potentials(ctx, data)
            rep.add("direct and potential paths agree",
                    h1_norm(s, a.field.u - c.field.u, OUTER) / scale, 1e-7, anchor="exterior Dirichlet")
        rep.data["report"] = a.report
    elif kind == "neumann":
        r = solve_neumann_by_potentials(ctx, data.psi_N)
        rep.add("outer traction reproduces the datum", r.report["boundary_residual"], 1e-8,
                anchor="exterior Neumann")
        rep.data["report"] = {k: v for k, v in r.report.items() if k != "density"}
    else:
        a = solve_mixed(ctx, data)
        b = solve_mixed(ctx, data, "harmonic")
        rep.add("Neumann datum reproduced on N", a.report["neumann_residual"], 1e-8, anchor="mixed")
        rep.add("Neumann traction independent of the lifting", b.report["neumann_residual"], 1e-8,
                anchor="mixed")
        rep.data["report"] = a.report


def cmd_ns(cfg, args, rep: Report):
    mesh = build_mesh(cfg, args.refine)
    A = build_tensor(cfg, mesh.dim)
    ctx = NSContext(A, mesh, gauge="mean", skew=cfg["ns"]["skew"])
    s = ctx.space
    f = load_functional(s, expr.vector_field(cfg["ns"]["load"], mesh.dim))
    psi = trace_functional(s, expr.density_field(cfg["ns"]["density"], mesh.dim))
    F = free_load(ctx, f, psi)
    target = cfg["ns"]["margin"]
    m = uniqueness_margin(ctx, F)
    scale = target / m.margin_bound if m.margin_bound > 0 else 1.0
    F = F * scale
    tol = args.tol if args.tol is not None else cfg["solver"]["tol"]
    maxit = args.maxit if args.maxit is not None else cfg["solver"]["maxit"]
    theta = args.theta if args.theta is not None else cfg["solver"]["theta"]
    res = run_ns(ctx, F, tol, maxit, theta)
    r = res.report
    rep.add("Picard converged", 0.0 if r.converged else 1.0, 0.0, r.converged, "Picard")
    rep.add("contraction ratio below one", r.checks["contraction"]["max_ratio"], 1.0 - 1e-12,
            anchor="Picard")
    rep.add("energy bound", r.checks["energy"]["value"] - r.checks["energy"]["bound"], 0.0,
            anchor="energy estimate")
    rep.add("pressure bound", r.checks["pressure"]["value"] - r.checks["pressure"]["bound"], 0.0,
            anchor="pressure estimate")
    rep.add("first-block residual", r.checks["recovery"]["full"], 1e-8, anchor="pressure recovery")
    rep.data.update({"history": r.history, "ratios": r.ratios, "constants": r.constants,
                     "load_scale": scale, "iterations": r.iterations})


def cmd_infsup(cfg, args, rep: Report):
    levels = (args.refine if args.refine is not None else cfg["mesh"]["refinements"]) + 1
    mesh = build_mesh(cfg, 0)
    A = build_tensor(cfg, mesh.dim)
    st = infsup_study(A, mesh, levels)
    for k, b in enumerate(st.beta):
        rep.add(f"beta_h positive on level {k}", -b, 0.0, b > 0, "inf-sup")
    rep.add("level-to-level degradation at most 50%", 0.5 - st.min_ratio, 0.0, anchor="inf-sup")
    rep.add("dense eigensolve agreement on the coarsest level", st.dense_agreement, 1e-8,
            anchor="inf-sup")
    floor = cfg["solver"]["floor"]
    rep.data.update({"h": st.h, "beta": st.beta, "beta_dense": st.beta_dense,
                     "beta_broken": st.broken_beta,
                     "broken_mode_enabled": [b >= floor for b in st.broken_beta]})


def cmd_converge(cfg, args, rep: Report):
    K = args.refine if args.refine is not None else cfg["mesh"]["refinements"]
    if K < 2:
        raise ConfigError("converge: need a refinement count K >= 2 (--refine K)")
    kind = args.kind or cfg["problem"]["kind"]
    if kind == "neumann":
        raise ConfigError("converge: no manufactured study for the neumann kind")
    mesh = build_mesh(cfg, 0)
    A = build_tensor(cfg, mesh.dim)
    pm = args.pressure_mode or cfg["solver"]["pressure_mode"]
    where = _neumann_predicate(cfg["mesh"]["neumann_where"], mesh.dim)
    table = convergence_study(kind, A, mesh, K + 1, pm, zero=cfg["problem"]["data"] == "zero",
                              neumann_where=where)
    rows = table.rows()
    rep.tables["convergence"] = rows
    if cfg["problem"]["data"] == "zero":
        rep.add("zero data gives zero errors", max(table.u_errors + table.p_errors), 0.0,
                anchor="convergence")
    else:
        last = table.u_rates[-1]
        rep.add("velocity error decreases", 0.0 if all(
            b < a for a, b in zip(table.u_errors, table.u_errors[1:])) else 1.0, 0.0,
            anchor="convergence")
        rep.data["final_rate_u"] = last


def cmd_truncation(cfg, args, rep: Report):
    t = cfg["truncation"]
    dim = cfg["mesh"]["dim"]
    A = build_tensor(cfg, dim)
    density = expr.density_field(t["density"], dim)
    st = exterior_truncation_study(A, density, tuple(float(r) for r in t["radii"]), float(t["h"]),
                                   float(cfg["mesh"]["r0"]), float(t["uniform_radius"]),
                                   float(t["collar_width"]), outer_shape=t["outer"], dim=dim)
    rep.tables["truncation"] = [{"level": k, "h": t["h"], "error_u": d, "error_p": None,
                                 "rate_u": r, "rate_p": None}
                                for k, (d, r) in enumerate(zip(st.differences,
                                                               observed_rates(st.differences)))]
    rep.add("collar differences strictly decreasing", 0.0 if st.decreasing else 1.0, 0.0,
            anchor="truncation")
    rep.data.update({"radii": st.radii, "differences": st.differences, "collar_norms": st.collar_norms})


COMMANDS = {"tensor-check": cmd_tensor_check, "identities": cmd_identities, "bvp": cmd_bvp,
            "ns": cmd_ns, "infsup": cmd_infsup, "converge": cmd_converge,
            "truncation": cmd_truncation}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anisostokes", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="YAML or JSON experiment configuration")
    p.add_argument("--out", help="JSON report path (CSV tables go next to it)")
    p.add_argument("--deterministic", action="store_true",
                   help="fixed seeds and ordered reductions; reruns give identical report bodies")
    p.add_argument("--refine", type=int, default=None, help="number of uniform refinements; studies use K + 1 levels")
    p.add_argument("--pressure-mode", choices=("continuous", "broken"), default=None)
    p.add_argument("--kind", choices=("transmission", "dirichlet", "neumann", "mixed"), default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--maxit", type=int, default=None)
    p.add_argument("--theta", type=float, default=None)
    return p


def run(command: str, cfg: ExperimentConfig, args) -> Report:
    rep = Report(command, deterministic=bool(getattr(args, "deterministic", False)))
    COMMANDS[command](cfg, args, rep)
    return rep


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    try:
        cfg = load_config(args.config)
        rep = run(args.command, cfg, args)
    except (ConfigError, expr.ExpressionError) as exc:
        print(f"anisostokes: config error: {exc}", file=sys.stderr)
        return 2
    text = rep.to_json()
    if args.out:
        out = Path(args.out)
        out.write_text(text + "\n", encoding="utf-8")
        for name, rows in rep.tables.items():
            write_csv(out.with_name(f"{out.stem}_{name}.csv"), rows)
    else:
        print(text)
    for c in rep.checks:
        status = "PASS" if c["pass"] else "FAIL"
        print(f"{status} {c['name']}: {c['value']:.3e} (tol {c['tol']:.1e})", file=sys.stderr)
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
