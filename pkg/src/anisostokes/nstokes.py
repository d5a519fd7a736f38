"""Stationary anisotropic Navier-Stokes on a bounded composite domain.

The nonlinear problem is solved by Picard iteration on the map
``w -> U(w)``, where ``U(w)`` solves the linear Stokes system with load
``F - (w . grad) w``. The saddle matrix does not change between steps, so it
is factorized once.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse.linalg as spla

from .fem import (AssembledForms, MixedSpace, assemble, convection_load, lp_norm, trace)
from .mesh import CompositeMesh
from .saddle import SaddleOperator, infsup_estimate
from .tensor import INNER, OUTER, CoeffTensor, ellipticity_constant, linf_norm


class NavierStokesError(RuntimeError):
    pass


class NSContext:
    """Forms, factorization and constants for one bounded composite mesh."""

    def __init__(self, tensor: CoeffTensor, mesh: CompositeMesh, gauge: str = "mean",
                 skew: bool = False):
        self.tensor = tensor
        self.space = MixedSpace(mesh, "continuous", "full_dirichlet", gauge)
        self.forms: AssembledForms = assemble(tensor, self.space)
        self.op = SaddleOperator(self.forms.A_free, self.forms.B_free, self.space.gauge_vector())
        self._xlu = spla.splu(self.forms.X_free.tocsc())
        self.skew = skew
        self._constants: dict = {}

    def convection(self, w_free: np.ndarray, u_free: np.ndarray | None = None) -> np.ndarray:
        """Free-dof vector ``v -> <(w . grad) u, v>``."""
        s = self.space
        w = s.Pf @ w_free
        u = w if u_free is None else s.Pf @ u_free
        return s.Pf.T @ convection_load(s, w, u, skew=self.skew)

    def grad_norm(self, u_free: np.ndarray) -> float:
        return float(np.sqrt(max(u_free @ (self.forms.X_free @ u_free), 0.0)))

    def dual_norm(self, F: np.ndarray) -> float:
        return float(np.sqrt(max(F @ self._xlu.solve(F), 0.0)))

    def pressure_norm(self, p: np.ndarray) -> float:
        """L2 norm modulo constants."""
        Mp = self.forms.Mp
        ones = np.ones(len(p))
        q = p - ones * (ones @ (Mp @ p)) / (ones @ (Mp @ ones))
        return float(np.sqrt(max(q @ (Mp @ q), 0.0)))

    # constants -----------------------------------------------------------
    def c_A(self) -> float:
        if "c_A" not in self._constants:
            q = self.space.quad(2)
            pts = q.points.reshape(-1, self.space.dim)
            regs = np.repeat(q.regions, q.points.shape[1])
            rep = ellipticity_constant(self.tensor, pts, regs)
            if not rep.elliptic:
                raise NavierStokesError("tensor is not elliptic on trace-free symmetric matrices")
            self._constants["c_A"] = rep.c_A()
        return self._constants["c_A"]

    def norm_A(self) -> float:
        if "norm_A" not in self._constants:
            q = self.space.quad(2)
            self._constants["norm_A"] = linf_norm(self.tensor, q.points.reshape(-1, self.space.dim))
        return self._constants["norm_A"]

    def beta(self) -> float:
        if "beta" not in self._constants:
            self._constants["beta"] = infsup_estimate(self.forms)
        return self._constants["beta"]

    def embedding(self, **kw) -> "EmbeddingEstimate":
        if "c" not in self._constants:
            self._constants["c"] = embedding_constant(self, **kw)
        return self._constants["c"]


def free_load(ctx: NSContext, f: np.ndarray | None = None, psi: np.ndarray | None = None) -> np.ndarray:
    """``F = -(f_+ + f_-) + trace* psi`` as a free-dof functional."""
    s = ctx.space
    F = np.zeros(s.n_free)
    if f is not None:
        F -= s.Pf.T @ f
    if psi is not None:
        e = np.zeros(s.n_velocity)
        e[s.trace_bdofs[INNER]] = psi
        F += s.Pf.T @ e
    return F


def dual_norm_F(ctx: NSContext, F: np.ndarray) -> float:
    """``sqrt(F^T X^{-1} F)``: the discrete dual norm against the gradient seminorm."""
    return ctx.dual_norm(F)


# ------------------------------------------------------------- embedding
@dataclass
class EmbeddingEstimate:
    c: float
    analytic_bound: float
    ratios: list


def _l4_gradient(ctx: NSContext, v_free: np.ndarray) -> np.ndarray:
    """Free-dof vector of ``w -> int |v|^2 v . w``."""
    s = ctx.space
    q = s.quad(8)
    d = s.dim
    v = s.Pf @ v_free
    coef = v.reshape(-1, d)[s.cell_bnodes]
    val = np.einsum("qk,cki->cqi", q.phi, coef)
    mag2 = np.sum(val ** 2, axis=-1)
    local = np.einsum("cq,qk,cqi->cki", q.weights * mag2, q.phi, val)
    out = np.zeros(s.n_velocity)
    np.add.at(out, (s.cell_bnodes[:, :, None] * d + np.arange(d)).ravel(), local.ravel())
    return s.Pf.T @ out


def l4_ratio(ctx: NSContext, v_free: np.ndarray) -> float:
    g = ctx.grad_norm(v_free)
    if g == 0.0:
        return 0.0
    return lp_norm(ctx.space, ctx.space.Pf @ v_free, 4.0) / g


def analytic_embedding_bound(ctx: NSContext) -> float:
    """Upper bound for the L4 embedding constant of the whole domain.

    In 3D ``c^2 <= (4/3) |Omega|^{1/6}`` (Sobolev L6 bound with Hoelder); in 2D
    Ladyzhenskaya's inequality with the Poincare constant of the enclosing
    box of side ``L`` gives ``c^2 <= L / pi``.
    """
    mesh = ctx.space.mesh
    if mesh.dim == 3:
        vol = float(np.sum(ctx.space.cell_volumes()))
        return float(np.sqrt(4.0 / 3.0 * vol ** (1.0 / 6.0)))
    verts = mesh.vertices
    L = float(np.max(verts.max(axis=0) - verts.min(axis=0)))
    return float(np.sqrt(L / np.pi))


def embedding_constant(ctx: NSContext, n_starts: int = 4, n_iter: int = 60, seed: int = 0,
                       rtol: float = 1e-10) -> EmbeddingEstimate:
    """Lower estimate of ``sup |v|_L4 / |grad v|`` by nonlinear power iteration.

    Each step solves ``X v_new = int |v|^2 v phi``, the stationarity condition of
    the ratio; the ratio increases monotonically along the iteration.
    """
    rng = np.random.default_rng(seed)
    s = ctx.space
    pts = s.nodes[s.free_dofs // s.dim]
    ratios = []
    for k in range(n_starts):
        if k == 0:
            # smooth bump start
            R = s.mesh.R
            v = np.prod(np.cos(0.5 * np.pi * pts / (R * 1.0001)), axis=1)
        else:
            v = rng.standard_normal(s.n_free)
        v = v / ctx.grad_norm(v)
        prev = l4_ratio(ctx, v)
        for _ in range(n_iter):
            v = ctx._xlu.solve(_l4_gradient(ctx, v))
            v = v / ctx.grad_norm(v)
            cur = l4_ratio(ctx, v)
            if cur - prev <= rtol * cur:
                prev = max(prev, cur)
                break
            prev = cur
        ratios.append(prev)
    return EmbeddingEstimate(float(max(ratios)), analytic_embedding_bound(ctx), ratios)


def scale_mesh(mesh: CompositeMesh, s: float) -> CompositeMesh:
    """The same mesh dilated by ``s``."""
    return replace(mesh, vertices=mesh.vertices * s, R=mesh.R * s, r0=mesh.r0 * s, h=mesh.h * s)


# --------------------------------------------------------------- Picard
@dataclass
class SolveReport:
    converged: bool
    iterations: int
    history: list
    ratios: list
    theta: float
    constants: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)


def picard_step(ctx: NSContext, w: np.ndarray, F: np.ndarray, theta: float = 1.0):
    """One damped step ``(1 - theta) w + theta U(w)``; returns ``(u, p, U(w))``."""
    rhs = F - ctx.convection(w)
    uw, p, _ = ctx.op.solve(rhs, np.zeros(ctx.space.n_pressure))
    return (1.0 - theta) * w + theta * uw, p, uw


def solve_navier_stokes(ctx: NSContext, F: np.ndarray, tol: float = 1e-12, maxit: int = 100,
                        theta: float = 1.0, u0: np.ndarray | None = None, strict: bool = False):
    """Picard iteration from ``u0`` (default zero).

    The step is halved whenever the update grows. Returns ``(u, p, report)`` with
    free velocity coefficients and gauged pressure.
    """
    u = np.zeros(ctx.space.n_free) if u0 is None else np.asarray(u0, dtype=float).copy()
    p = np.zeros(ctx.space.n_pressure)
    history, ratios = [], []
    converged = False
    for k in range(maxit):
        new, p, _ = picard_step(ctx, u, F, theta)
        step = ctx.grad_norm(new - u)
        if history and step > history[-1] and theta > 1e-3:
            theta *= 0.5
        if history and history[-1] > 0:
            ratios.append(step / history[-1])
        history.append(step)
        u = new
        scale = max(ctx.grad_norm(u), 1e-300)
        if step <= tol * scale or step == 0.0:
            converged = True
            break
    # a final undamped solve returns the pressure belonging to u
    _, p, _ = picard_step(ctx, u, F, 1.0)
    report = SolveReport(converged, len(history), history, ratios, theta)
    if not converged and strict:
        raise NavierStokesError(f"Picard iteration did not converge in {maxit} steps; "
                                f"last ratios {ratios[-3:]}")
    return u, p, report


# -------------------------------------------------------------- checks
@dataclass
class Margin:
    margin: float
    unique: bool
    margin_bound: float
    note: str = "embedding constant is a lower estimate; the verdict is necessary-side only"


def uniqueness_margin(ctx: NSContext, F: np.ndarray) -> Margin:
    """``4 c_A^2 c^2 |||F|||`` with the estimated and the analytic embedding constant."""
    cA = ctx.c_A()
    emb = ctx.embedding()
    nF = ctx.dual_norm(F)
    m = 4.0 * cA ** 2 * emb.c ** 2 * nF
    mb = 4.0 * cA ** 2 * emb.analytic_bound ** 2 * nF
    return Margin(float(m), bool(m < 1.0), float(mb))


@dataclass
class BoundCheck:
    value: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.value <= self.bound


def energy_bound(ctx: NSContext, u: np.ndarray, F: np.ndarray, slack: float = 1e-10) -> BoundCheck:
    """``|grad u| <= 2 c_A |||F|||``."""
    return BoundCheck(ctx.grad_norm(u), 2.0 * ctx.c_A() * ctx.dual_norm(F) + slack)


def pressure_bound(ctx: NSContext, p: np.ndarray, F: np.ndarray) -> BoundCheck:
    """``|p| <= C' |||F||| + C'' |||F|||^2`` with ``C_Omega = 1 / beta_h``.

    ``C' = C_Omega (1 + 2 c_A n^4 |A|)`` and ``C'' = 4 C_Omega c_A^2 c^2`` with the
    analytic embedding bound ``c``.
    """
    n = ctx.space.dim
    cO = 1.0 / ctx.beta()
    cA = ctx.c_A()
    c = ctx.embedding().analytic_bound
    nF = ctx.dual_norm(F)
    C1 = cO * (1.0 + 2.0 * cA * n ** 4 * ctx.norm_A())
    C2 = 4.0 * cO * cA ** 2 * c ** 2
    return BoundCheck(ctx.pressure_norm(p), C1 * nF + C2 * nF ** 2)


@dataclass
class RecoveryResidual:
    full: float
    pressure_free: float


def pressure_recovery_check(ctx: NSContext, u: np.ndarray, p: np.ndarray, F: np.ndarray) -> RecoveryResidual:
    """Residual of the first block and its part seen by divergence-free tests.

    ``full`` is the dual norm of ``F - a(u, .) - b(., p) - c(u, u, .)``;
    ``pressure_free`` is the same functional without the pressure term
    measured only on discretely divergence-free fields.
    """
    r0 = F - ctx.forms.A_free @ u - ctx.convection(u)
    full = r0 - ctx.forms.B_free.T @ p
    scale = max(ctx.dual_norm(F), 1e-300)
    proj_op = ctx.__dict__.get("_proj_op")
    if proj_op is None:
        proj_op = SaddleOperator(ctx.forms.X_free, ctx.forms.B_free, ctx.space.gauge_vector())
        ctx.__dict__["_proj_op"] = proj_op
    w, _, _ = proj_op.solve(r0, np.zeros(ctx.space.n_pressure))
    return RecoveryResidual(ctx.dual_norm(full) / scale, ctx.grad_norm(w) / scale)


def energy_identity_defect(ctx: NSContext, u: np.ndarray, F: np.ndarray) -> dict:
    """``a(u,u) - <F,u>`` and the convective self term with the divergence residual."""
    c = float(u @ ctx.convection(u))
    return {"energy_defect": float(u @ (ctx.forms.A_free @ u) - F @ u + c),
            "convective_self": c,
            "divergence_residual": float(np.linalg.norm(ctx.forms.B_free @ u))}


@dataclass
class NSResult:
    u: np.ndarray
    p: np.ndarray
    report: SolveReport


def run(ctx: NSContext, F: np.ndarray, tol: float = 1e-12, maxit: int = 100, theta: float = 1.0,
        u0: np.ndarray | None = None) -> NSResult:
    """Solve and attach every estimate and bound check to the report."""
    u, p, rep = solve_navier_stokes(ctx, F, tol, maxit, theta, u0)
    m = uniqueness_margin(ctx, F)
    eb = energy_bound(ctx, u, F)
    pb = pressure_bound(ctx, p, F)
    rr = pressure_recovery_check(ctx, u, p, F)
    rep.constants = {"c_A": ctx.c_A(), "norm_A": ctx.norm_A(), "beta_h": ctx.beta(),
                     "embedding_c": ctx.embedding().c,
                     "embedding_bound": ctx.embedding().analytic_bound,
                     "dual_norm_F": ctx.dual_norm(F), "margin": m.margin,
                     "margin_bound": m.margin_bound}
    rep.checks = {"energy": {"value": eb.value, "bound": eb.bound, "pass": eb.passed},
                  "pressure": {"value": pb.value, "bound": pb.bound, "pass": pb.passed},
                  "recovery": {"full": rr.full, "pressure_free": rr.pressure_free},
                  "contraction": {"max_ratio": max(rep.ratios) if rep.ratios else 0.0,
                                  "pass": all(r < 1 for r in rep.ratios)}}
    rep.checks.update(energy_identity_defect(ctx, u, F))
    return NSResult(u, p, rep)


def solve_ns_transmission(ctx: NSContext, f: np.ndarray | None, psi: np.ndarray | None,
                          tol: float = 1e-12, maxit: int = 100, theta: float = 1.0):
    """Nonlinear transmission problem with loads ``f`` and traction jump ``psi``.

    Returns the result and the post-hoc jump residuals: the velocity trace
    jump and the nonlinear traction jump (convective loads included) minus ``psi``.
    """
    s = ctx.space
    F = free_load(ctx, f, psi)
    res = run(ctx, F, tol, maxit, theta)
    ub = s.Pf @ res.u
    load = (np.zeros(s.n_velocity) if f is None else f) + convection_load(s, ub, ub, skew=ctx.skew)
    R = ctx.forms.A @ ub + ctx.forms.B.T @ res.p + load
    t_jump = R[s.trace_bdofs[INNER]] + R[s.trace_bdofs[OUTER]]
    psi0 = np.zeros(s.n_trace) if psi is None else psi
    scale = max(np.linalg.norm(psi0), np.linalg.norm(R[s.trace_bdofs[INNER]]), 1e-300)
    res.report.checks["trace_jump"] = float(np.max(np.abs(trace(s, ub, INNER) - trace(s, ub, OUTER)),
                                                   initial=0.0))
    res.report.checks["traction_jump_residual"] = float(np.linalg.norm(t_jump - psi0) / scale)
    return res
