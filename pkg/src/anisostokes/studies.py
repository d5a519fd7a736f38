"""Refinement studies shared by the command line and the test suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bvp import BVPData, solve_dirichlet, solve_mixed, solve_transmission
from .fem import (MixedSpace, assemble, evaluate_pressure, h1_norm, h1_seminorm_error,
                  region_mask)
from .manufactured import Manufactured, default_state
from .mesh import CompositeMesh, refine, tag_interface
from .potentials import PotentialContext, green_representation
from .saddle import infsup_estimate
from .tensor import INNER, OUTER, CoeffTensor


def observed_rates(errors) -> list:
    """``log2(e_k / e_{k+1})`` per level; ``None`` where undefined."""
    out = [None]
    for a, b in zip(errors[:-1], errors[1:]):
        out.append(math.log2(a / b) if a > 0 and b > 0 else None)
    return out


def pressure_error_mod_constants(space: MixedSpace, p: np.ndarray, exact, regions=None,
                                 degree: int = 6) -> float:
    """L2 error of the pressure after removing the best constant over ``regions``."""
    q = space.quad(degree)
    nc, nq, d = q.points.shape
    v = evaluate_pressure(space, p, degree)
    if exact is not None:
        v = v - np.asarray(exact(q.points.reshape(-1, d), np.repeat(q.regions, nq))).reshape(nc, nq)
    mask = region_mask(space, regions)
    w = q.weights[mask]
    v = v[mask]
    v = v - np.sum(w * v) / np.sum(w)
    return float(np.sqrt(np.sum(w * v ** 2)))


@dataclass
class ConvergenceTable:
    kind: str
    h: list = field(default_factory=list)
    u_errors: list = field(default_factory=list)
    p_errors: list = field(default_factory=list)

    @property
    def u_rates(self):
        return observed_rates(self.u_errors)

    @property
    def p_rates(self):
        return observed_rates(self.p_errors)

    def rows(self) -> list[dict]:
        return [{"level": k, "h": self.h[k], "error_u": self.u_errors[k],
                 "error_p": self.p_errors[k], "rate_u": self.u_rates[k], "rate_p": self.p_rates[k]}
                for k in range(len(self.h))]


def solve_manufactured(kind: str, ctx: PotentialContext, state: Manufactured | None):
    """Solve one problem kind with data taken from ``state`` (``None`` means zero data).

    Returns the solution field and the regions where the error is measured.
    """
    s = ctx.space
    if kind == "transmission":
        if state is None:
            data = BVPData("transmission")
        else:
            data = BVPData("transmission", state.load_functional(s), state.divergence_functional(s),
                           state.trace_jump(s), state.traction_jump(s))
        return solve_transmission(ctx, data).field, None
    if kind in ("dirichlet", "mixed"):
        if state is None:
            data = BVPData(kind, phi_D=np.zeros(s.n_trace), psi_N=np.zeros(s.n_trace))
        else:
            data = BVPData(kind, f=state.load_functional(s, OUTER),
                           g=state.divergence_functional(s, OUTER),
                           phi_D=state.side_trace(s, OUTER),
                           psi_N=state.traction_density(s, OUTER))
        solver = solve_dirichlet if kind == "dirichlet" else solve_mixed
        return solver(ctx, data).field, OUTER
    raise ValueError(f"no manufactured study for kind {kind!r}")


def convergence_study(kind: str, tensor: CoeffTensor, mesh: CompositeMesh, levels: int,
                      pressure_mode: str = "continuous", zero: bool = False,
                      neumann_where=None) -> ConvergenceTable:
    """Errors against the default manufactured state over ``levels`` meshes."""
    if levels < 2:
        raise ValueError("a convergence study needs at least two levels")
    table = ConvergenceTable(kind)
    for k in range(levels):
        if k:
            mesh = refine(mesh)
        m = mesh
        if kind == "mixed":
            m = tag_interface(mesh, neumann_where or (lambda c: c[:, 0] > 0))
        ctx = PotentialContext(tensor, m, pressure_mode)
        state = None if zero else default_state(tensor, m, pressure_mode == "continuous")
        fld, regions = solve_manufactured(kind, ctx, state)
        grad = None if state is None else state.grad
        pres = None if state is None else state.pressure
        table.h.append(m.h)
        table.u_errors.append(h1_seminorm_error(ctx.space, fld.u, grad, regions))
        table.p_errors.append(pressure_error_mod_constants(ctx.space, fld.p, pres, regions))
    return table


@dataclass
class InfSupStudy:
    h: list
    beta: list
    beta_dense: float | None
    broken_beta: list

    @property
    def min_ratio(self) -> float:
        b = self.beta
        return min(b[k + 1] / b[k] for k in range(len(b) - 1)) if len(b) > 1 else 1.0

    @property
    def dense_agreement(self) -> float:
        if self.beta_dense is None:
            return float("nan")
        return abs(self.beta[0] - self.beta_dense) / self.beta_dense


def infsup_study(tensor: CoeffTensor, mesh: CompositeMesh, levels: int, dense: bool = True,
                 broken: bool = True, broken_levels: int | None = None) -> InfSupStudy:
    """Taylor-Hood inf-sup constants over refinements, with a dense check on the coarsest mesh.

    The broken-pressure constant is computed on the first ``broken_levels``
    levels (all of them by default).
    """
    nb = levels if broken_levels is None else broken_levels
    hs, betas, bbetas = [], [], []
    dense_val = None
    for k in range(levels):
        if k:
            mesh = refine(mesh)
        forms = assemble(tensor, MixedSpace(mesh, "continuous"))
        betas.append(infsup_estimate(forms))
        hs.append(mesh.h)
        if k == 0 and dense:
            dense_val = infsup_estimate(forms, method="dense")
        if broken and k < nb:
            bbetas.append(infsup_estimate(assemble(tensor, MixedSpace(mesh, "broken"))))
    return InfSupStudy(hs, betas, dense_val, bbetas)


@dataclass
class TractionStudy:
    h: list
    errors: list
    lifting_spread: list

    @property
    def rates(self):
        return observed_rates(self.errors)


def traction_study(tensor: CoeffTensor, mesh: CompositeMesh, levels: int,
                   pressure_mode: str = "continuous") -> TractionStudy:
    """Inner conormal derivative of Galerkin solutions against the classical traction.

    Errors are discrete trace-dual norms of ``t+ - (sigma nu)`` relative to the
    exact density. ``lifting_spread`` is the relative difference between the
    tractions obtained with the nodal and the harmonic lifting.
    """
    out = TractionStudy([], [], [])
    for k in range(levels):
        if k:
            mesh = refine(mesh)
        ctx = PotentialContext(tensor, mesh, pressure_mode)
        s = ctx.space
        state = default_state(tensor, mesh, pressure_mode == "continuous")
        f = state.load_functional(s)
        fld, _ = solve_manufactured("transmission", ctx, state)
        exact = state.traction_density(s, INNER)
        t = ctx.traction(fld.u, fld.p, f, INNER)
        t_h = ctx.traction(fld.u, fld.p, f, INNER, "harmonic")
        scale = ctx.norms.dual_norm(exact)
        out.h.append(mesh.h)
        out.errors.append(ctx.norms.dual_norm(t - exact) / scale)
        out.lifting_spread.append(float(np.linalg.norm(t - t_h) / np.linalg.norm(t)))
    return out


@dataclass
class ReconstructionStudy:
    h: list
    errors: list
    self_errors: list

    @property
    def rates(self):
        return observed_rates(self.errors)


def reconstruction_study(tensor: CoeffTensor, mesh: CompositeMesh, levels: int,
                         pressure_mode: str = "continuous") -> ReconstructionStudy:
    """Rebuild manufactured two-sided states from their exact jumps and loads.

    ``errors`` are H1 seminorm errors of the reconstruction against the exact
    velocity; ``self_errors`` are relative H1 differences between each Galerkin
    state and its own reconstruction from discrete jumps.
    """
    out = ReconstructionStudy([], [], [])
    for k in range(levels):
        if k:
            mesh = refine(mesh)
        ctx = PotentialContext(tensor, mesh, pressure_mode)
        s = ctx.space
        state = default_state(tensor, mesh, pressure_mode == "continuous")
        f, g = state.load_functional(s), state.divergence_functional(s)
        fld, _ = solve_manufactured("transmission", ctx, state)
        own = green_representation(ctx, fld.u, fld.p, f, g)
        exact = green_representation(ctx, fld.u, fld.p, f, g, jump_trace=state.trace_jump(s),
                                     jump_traction=state.traction_jump(s))
        scale = h1_norm(s, fld.u)
        out.h.append(mesh.h)
        out.errors.append(h1_seminorm_error(s, exact.pair.u, state.grad, None))
        out.self_errors.append(float(sum(own.u_error.values()) / max(scale, 1e-300)))
    return out
