"""Volume and layer potentials built from variational transmission problems.

Every potential is the Galerkin solution of one two-sided Stokes problem on
the truncated domain with homogeneous Dirichlet conditions on the outer
boundary. All of them share the same left-hand side, so one factorization of
the bordered saddle matrix serves every density.

Conventions (``R = A u + B^T p + load`` is the broken residual):

* Newtonian: ``a(u, v) + b(v, p) = -<f, v>``, ``b(u, q) = 0``.
* compressibility: ``a(u, v) + b(v, p) = 0``, ``b(u, q) = -<g, q>``.
* single layer: ``a(u, v) + b(v, p) = <psi, trace v>``.
* double layer: ``u = v - lift_inner(phi)`` with ``v`` continuous, so the
  trace jump (inner minus outer) equals ``-phi``.
* traction ``t+ = R`` tested with the inner lifting, ``t- = -R`` with the outer one.

The pressure gauge is a zero mean over the cells touching the truncation
boundary. The gauge multiplier also acts as a flux sink in that collar, which
stands in for the escape of flux to infinity when a datum has nonzero net
normal flux.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .fem import (AssembledForms, Field, Lifting, MixedSpace, TraceNorms, assemble,
                  conormal_derivative, h1_norm, l2_pressure_error, nu_density,
                  rigid_traces, stokes_residual, trace, trace_mass)
from .mesh import CompositeMesh
from .saddle import SaddleOperator
from .tensor import INNER, OUTER, CoeffTensor, adjoint_tensor

ADMISSIBLE_TOL = 1e-8
PROJECT_TOL = 1e-6


class AdmissibilityError(ValueError):
    pass


@dataclass
class PotentialPair:
    """A velocity/pressure potential with the operator that produced it."""

    field: Field
    kind: str
    multiplier: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def u(self) -> np.ndarray:
        return self.field.u

    @property
    def p(self) -> np.ndarray:
        return self.field.p


class PotentialContext:
    """Factorized two-sided Stokes operator on a truncated composite domain."""

    def __init__(self, tensor: CoeffTensor, mesh: CompositeMesh | None = None,
                 pressure_mode: str = "continuous", space: MixedSpace | None = None):
        if space is None:
            space = MixedSpace(mesh, pressure_mode=pressure_mode,
                               constraint_mode="full_dirichlet", gauge="collar")
        self.tensor = tensor
        self.space = space
        self.forms: AssembledForms = assemble(tensor, space)
        self.op = SaddleOperator(self.forms.A_free, self.forms.B_free, space.gauge_vector())
        self.lifting = Lifting(space, self.forms.X)
        self.nu = nu_density(space)
        self.rigid = rigid_traces(space)
        self._adjoint: PotentialContext | None = None
        # inner-trace embedding and the single layer right-hand sides
        n = space.n_trace
        self.E_in = sp.csr_matrix((np.ones(n), (space.trace_bdofs[INNER], np.arange(n))),
                                  shape=(space.n_velocity, n))
        self.T = (space.Pf.T @ self.E_in).tocsr()

    # ---------------------------------------------------------------- basics
    @property
    def adjoint(self) -> "PotentialContext":
        """Context for the adjoint tensor on the same space."""
        if self._adjoint is None:
            self._adjoint = PotentialContext(adjoint_tensor(self.tensor), space=self.space)
        return self._adjoint

    @cached_property
    def trace_mass(self) -> sp.csr_matrix:
        return trace_mass(self.space)

    @cached_property
    def norms(self) -> TraceNorms:
        return TraceNorms(self.space)

    def solve(self, rhs_free: np.ndarray, g: np.ndarray | None = None,
              offset: np.ndarray | None = None, kind: str = "transmission") -> PotentialPair:
        """Solve the shared system; ``offset`` is a broken field added to the continuous unknown."""
        s = self.space
        rhs = np.asarray(rhs_free, dtype=float).copy()
        gg = np.zeros(s.n_pressure) if g is None else np.asarray(g, dtype=float).copy()
        if offset is not None:
            rhs -= s.Pf.T @ (self.forms.A @ offset)
            gg -= self.forms.B @ offset
        v, p, lam = self.op.solve(rhs, gg)
        u = s.Pf @ v
        if offset is not None:
            u = u + offset
        return PotentialPair(Field(s, u, p), kind, float(lam))

    def _solve_many(self, rhs: np.ndarray, g: np.ndarray | None = None,
                    offset: np.ndarray | None = None):
        """Column-stacked version of :meth:`solve` returning broken velocities and pressures."""
        s = self.space
        rhs = np.asarray(rhs, dtype=float).copy()
        gg = np.zeros((s.n_pressure, rhs.shape[1])) if g is None else np.asarray(g, dtype=float).copy()
        if offset is not None:
            rhs -= s.Pf.T @ (self.forms.A @ offset)
            gg -= self.forms.B @ offset
        v, p, _ = self.op.solve(rhs, gg)
        u = s.Pf @ v
        if offset is not None:
            u = u + offset
        return u, p

    def residual(self, u: np.ndarray, p: np.ndarray, load: np.ndarray | None = None) -> np.ndarray:
        return stokes_residual(self.forms, u, p, load)

    def traction(self, pair_or_u, p=None, load=None, side=INNER, variant="nodal") -> np.ndarray:
        if isinstance(pair_or_u, PotentialPair):
            pair_or_u, p = pair_or_u.u, pair_or_u.p
        return conormal_derivative(self.forms, pair_or_u, p, load, side, self.lifting, variant)

    def trace(self, pair_or_u, side=INNER) -> np.ndarray:
        u = pair_or_u.u if isinstance(pair_or_u, PotentialPair) else pair_or_u
        return trace(self.space, u, side)


# ------------------------------------------------------------------ potentials
def newtonian(ctx: PotentialContext, f: np.ndarray) -> PotentialPair:
    """Newtonian potential of a broken load functional ``f``."""
    return ctx.solve(-(ctx.space.Pf.T @ f), kind="newtonian")


def compressibility(ctx: PotentialContext, g: np.ndarray, strict: bool = True) -> PotentialPair:
    """Compressibility potential: divergence ``g`` with no body force.

    With ``strict`` the datum must have zero total integral, which is what
    full Dirichlet conditions on the truncation boundary require.
    """
    g = np.asarray(g, dtype=float)
    total = float(np.sum(g))
    if strict and abs(total) > 1e-10 * max(float(np.sum(np.abs(g))), 1e-300):
        raise AdmissibilityError(f"divergence datum has nonzero total {total:.3e}; "
                                 "incompatible with full Dirichlet truncation")
    return ctx.solve(np.zeros(ctx.space.n_free), -g, kind="compressibility")


def single_layer(ctx: PotentialContext, psi: np.ndarray) -> PotentialPair:
    """Single layer potential of a trace density ``psi``."""
    return ctx.solve(ctx.T @ psi, kind="single_layer")


def double_layer(ctx: PotentialContext, phi: np.ndarray) -> PotentialPair:
    """Double layer potential of a trace field ``phi`` (trace jump ``-phi``)."""
    offset = -ctx.lifting(phi, INNER)
    return ctx.solve(np.zeros(ctx.space.n_free), offset=offset, kind="double_layer")


def adjoint_single_layer(ctx: PotentialContext, psi: np.ndarray) -> PotentialPair:
    """Single layer potential of the adjoint system."""
    pair = single_layer(ctx.adjoint, psi)
    pair.kind = "adjoint_single_layer"
    return pair


def adjoint_double_layer(ctx: PotentialContext, phi: np.ndarray) -> PotentialPair:
    pair = double_layer(ctx.adjoint, phi)
    pair.kind = "adjoint_double_layer"
    return pair


# ---------------------------------------------------------- boundary operators
@dataclass
class SingleLayerOps:
    V: np.ndarray        # trace of V psi
    K_prime: np.ndarray  # average traction
    t_plus: np.ndarray
    t_minus: np.ndarray
    pair: PotentialPair


@dataclass
class DoubleLayerOps:
    K: np.ndarray        # average trace
    D: np.ndarray        # inner traction
    g_plus: np.ndarray
    g_minus: np.ndarray
    t_minus: np.ndarray
    pair: PotentialPair


def single_layer_operators(ctx: PotentialContext, psi: np.ndarray) -> SingleLayerOps:
    pair = single_layer(ctx, psi)
    tp = ctx.traction(pair, side=INNER)
    tm = ctx.traction(pair, side=OUTER)
    return SingleLayerOps(ctx.trace(pair, INNER), 0.5 * (tp + tm), tp, tm, pair)


def double_layer_operators(ctx: PotentialContext, phi: np.ndarray) -> DoubleLayerOps:
    pair = double_layer(ctx, phi)
    gp, gm = ctx.trace(pair, INNER), ctx.trace(pair, OUTER)
    tp = ctx.traction(pair, side=INNER)
    tm = ctx.traction(pair, side=OUTER)
    return DoubleLayerOps(0.5 * (gp + gm), tp, gp, gm, tm, pair)


def boundary_operators(ctx: PotentialContext, data: np.ndarray, kind: str):
    """``kind="density"`` gives the single layer operators, ``kind="trace"`` the double layer ones."""
    if kind == "density":
        return single_layer_operators(ctx, data)
    if kind == "trace":
        return double_layer_operators(ctx, data)
    raise ValueError(f"unknown boundary data kind {kind!r}")


def single_layer_matrix(ctx: PotentialContext) -> np.ndarray:
    """Dense matrix of the single layer boundary operator (one solve per trace dof)."""
    cache = ctx.__dict__.setdefault("_dense", {})
    if "V" not in cache:
        u, _ = ctx._solve_many(ctx.T.toarray())
        cache["V"] = u[ctx.space.trace_bdofs[INNER]]
    return cache["V"]


def hypersingular_matrix(ctx: PotentialContext) -> np.ndarray:
    """Dense matrix of the hypersingular operator ``D``."""
    cache = ctx.__dict__.setdefault("_dense", {})
    if "D" not in cache:
        s = ctx.space
        offset = -ctx.E_in.toarray()
        u, p = ctx._solve_many(np.zeros((s.n_free, s.n_trace)), offset=offset)
        R = ctx.forms.A @ u + ctx.forms.B.T @ p
        cache["D"] = R[s.trace_bdofs[INNER]]
    return cache["D"]


# -------------------------------------------------------------- admissibility
def _admit(x: np.ndarray, rows: np.ndarray, name: str) -> np.ndarray:
    """Accept, project (with a warning) or reject ``x`` against constraint ``rows @ x = 0``."""
    rows = np.atleast_2d(rows)
    xn = np.linalg.norm(x)
    if xn == 0.0:
        return x
    rel = np.max(np.abs(rows @ x) / (np.linalg.norm(rows, axis=1) * xn))
    if rel <= ADMISSIBLE_TOL:
        return x
    if rel <= PROJECT_TOL:
        warnings.warn(f"{name}: constraint violation {rel:.2e}; projecting", stacklevel=3)
        return x - rows.T @ np.linalg.solve(rows @ rows.T, rows @ x)
    raise AdmissibilityError(f"{name}: constraint violation {rel:.2e} exceeds {PROJECT_TOL:.0e}")


def admit_nu_orthogonal(ctx: PotentialContext, phi: np.ndarray) -> np.ndarray:
    """Trace fields with zero net normal flux ``<phi, nu> = 0``."""
    return _admit(np.asarray(phi, dtype=float), ctx.nu, "trace field must have zero normal flux")


def admit_rigid_orthogonal(ctx: PotentialContext, psi: np.ndarray) -> np.ndarray:
    """Densities annihilating every rigid-motion trace."""
    return _admit(np.asarray(psi, dtype=float), ctx.rigid,
                  "density must annihilate rigid-motion traces")


def rigid_moment_rows(ctx: PotentialContext) -> np.ndarray:
    """Rows ``M_G r_j`` so that ``rows @ phi`` are the rigid moments of a trace field."""
    return (ctx.trace_mass @ ctx.rigid.T).T


def project_rigid_moments(ctx: PotentialContext, phi: np.ndarray) -> np.ndarray:
    """Remove the rigid moments of a trace field (Euclidean projection)."""
    rows = rigid_moment_rows(ctx)
    return phi - rows.T @ np.linalg.solve(rows @ rows.T, rows @ phi)


def project_rigid_density(ctx: PotentialContext, psi: np.ndarray) -> np.ndarray:
    rows = ctx.rigid
    return psi - rows.T @ np.linalg.solve(rows @ rows.T, rows @ psi)


def project_nu(ctx: PotentialContext, x: np.ndarray) -> np.ndarray:
    nu = ctx.nu
    return x - nu * (nu @ x) / (nu @ nu)


@dataclass
class InverseResult:
    value: np.ndarray
    residual: float


def invert_single_layer(ctx: PotentialContext, phi: np.ndarray) -> InverseResult:
    """Galerkin inverse of the single layer operator on densities orthogonal to ``nu``."""
    phi = admit_nu_orthogonal(ctx, phi)
    V = single_layer_matrix(ctx)
    Q = sla.null_space(ctx.nu[None, :])
    y = np.linalg.solve(Q.T @ V @ Q, Q.T @ phi)
    psi = Q @ y
    res = np.linalg.norm(V @ psi - phi) / max(np.linalg.norm(phi), 1e-300)
    return InverseResult(psi, float(res))


def invert_hypersingular(ctx: PotentialContext, psi: np.ndarray) -> InverseResult:
    """Inverse of ``D`` onto trace fields with vanishing rigid moments."""
    psi = admit_rigid_orthogonal(ctx, psi)
    D = hypersingular_matrix(ctx)
    Z = sla.null_space(rigid_moment_rows(ctx))
    y = np.linalg.solve(Z.T @ D @ Z, Z.T @ psi)
    phi = Z @ y
    res = np.linalg.norm(D @ phi - psi) / max(np.linalg.norm(psi), 1e-300)
    return InverseResult(phi, float(res))


# ------------------------------------------------------------ identity checks
@dataclass
class Check:
    name: str
    value: float
    tol: float
    anchor: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tol)

    def record(self) -> dict:
        return {"name": self.name, "anchor": self.anchor, "value": float(self.value),
                "tol": float(self.tol), "pass": self.passed}


def _rel(a: np.ndarray, scale: float) -> float:
    return float(np.linalg.norm(a) / max(scale, 1e-300))


def jump_checks(ctx: PotentialContext, n_samples: int = 20, seed: int = 0,
                tol: float = 1e-10) -> list[Check]:
    """The six jump and one-sided relations for random densities and traces."""
    rng = np.random.default_rng(seed)
    worst = dict.fromkeys(["single layer trace jump", "single layer traction jump",
                           "double layer trace jump", "double layer traction jump",
                           "single layer one-sided tractions", "double layer one-sided traces"], 0.0)
    for _ in range(n_samples):
        psi = rng.standard_normal(ctx.space.n_trace)
        phi = rng.standard_normal(ctx.space.n_trace)
        sl = single_layer_operators(ctx, psi)
        dl = double_layer_operators(ctx, phi)
        su = max(np.linalg.norm(sl.V), np.linalg.norm(psi))
        worst["single layer trace jump"] = max(
            worst["single layer trace jump"],
            _rel(ctx.trace(sl.pair, INNER) - ctx.trace(sl.pair, OUTER), su))
        worst["single layer traction jump"] = max(
            worst["single layer traction jump"],
            _rel(sl.t_plus - sl.t_minus - psi, np.linalg.norm(psi)))
        worst["double layer trace jump"] = max(
            worst["double layer trace jump"], _rel(dl.g_plus - dl.g_minus + phi, np.linalg.norm(phi)))
        dscale = max(np.linalg.norm(dl.D), np.linalg.norm(dl.t_minus))
        worst["double layer traction jump"] = max(
            worst["double layer traction jump"], _rel(dl.D - dl.t_minus, dscale))
        worst["single layer one-sided tractions"] = max(
            worst["single layer one-sided tractions"],
            _rel(sl.t_plus - (0.5 * psi + sl.K_prime), np.linalg.norm(psi)),
            _rel(sl.t_minus - (-0.5 * psi + sl.K_prime), np.linalg.norm(psi)))
        worst["double layer one-sided traces"] = max(
            worst["double layer one-sided traces"],
            _rel(dl.g_plus - (-0.5 * phi + dl.K), np.linalg.norm(phi)),
            _rel(dl.g_minus - (0.5 * phi + dl.K), np.linalg.norm(phi)))
    return [Check(k, v, tol, "jump relations") for k, v in worst.items()]


def characteristic_pressure(ctx: PotentialContext, region: int = INNER) -> np.ndarray:
    """Pressure coefficients of the indicator of one region (broken mode only)."""
    s = ctx.space
    if s.pressure_mode != "broken":
        raise AdmissibilityError("indicator pressures need the broken pressure mode")
    return (s.pnode_region == region).astype(float)


def kernel_checks(ctx: PotentialContext, n_samples: int = 5, seed: int = 0,
                  tol: float = 1e-10) -> list[Check]:
    """Near-kernel fields of the single layer and hypersingular operators."""
    s = ctx.space
    rng = np.random.default_rng(seed)
    out = []
    sl = single_layer(ctx, ctx.nu)
    scale = np.linalg.norm(ctx.nu)
    if s.pressure_mode == "broken":
        chi = characteristic_pressure(ctx)
        out.append(Check("single layer of normal: velocity", _rel(sl.u, scale), tol, "kernel"))
        out.append(Check("single layer of normal: pressure is minus inner indicator",
                         float(np.max(np.abs(sl.p + chi))), tol, "kernel"))
    worst_d = worst_w = 0.0
    for j, r in enumerate(ctx.rigid):
        dl = double_layer_operators(ctx, r)
        worst_d = max(worst_d, _rel(dl.D, np.linalg.norm(r)))
        expect = np.zeros(s.n_velocity)
        pts = s.bnode_points()
        from .mesh import rigid_motion_basis

        rv = rigid_motion_basis(s.dim)(pts)[j].reshape(-1)
        inner = np.repeat(s.bnode_region == INNER, s.dim)
        expect[inner] = -rv[inner]
        worst_w = max(worst_w, _rel(dl.pair.u - expect, np.linalg.norm(rv[inner])),
                      float(np.max(np.abs(dl.pair.p))))
    out.append(Check("hypersingular of rigid traces", worst_d, tol, "kernel"))
    out.append(Check("double layer of rigid trace is minus the motion inside", worst_w, tol, "kernel"))
    worst_v = worst_r = 0.0
    for _ in range(n_samples):
        psi = rng.standard_normal(s.n_trace)
        phi = rng.standard_normal(s.n_trace)
        Vpsi = single_layer_operators(ctx, psi).V
        Dphi = double_layer_operators(ctx, phi).D
        worst_v = max(worst_v, abs(ctx.nu @ Vpsi) / (np.linalg.norm(ctx.nu) * np.linalg.norm(Vpsi)))
        rr = ctx.rigid @ Dphi / (np.linalg.norm(ctx.rigid, axis=1) * np.linalg.norm(Dphi))
        worst_r = max(worst_r, float(np.max(np.abs(rr))))
    if s.pressure_mode == "broken":
        out.append(Check("single layer range has zero normal flux", worst_v, tol, "kernel"))
    out.append(Check("hypersingular range annihilates rigid traces", worst_r, tol, "kernel"))
    return out


def sign_checks(ctx: PotentialContext, n_samples: int = 20, seed: int = 0) -> list[Check]:
    """``<psi, V psi> >= 0`` and ``<-D phi, phi> >= 0``; both equal an energy."""
    rng = np.random.default_rng(seed)
    worst_v = worst_d = 0.0
    for _ in range(n_samples):
        psi = rng.standard_normal(ctx.space.n_trace)
        phi = rng.standard_normal(ctx.space.n_trace)
        sl = single_layer_operators(ctx, psi)
        dl = double_layer_operators(ctx, phi)
        ev = sl.pair.u @ (ctx.forms.A @ sl.pair.u)
        ed = dl.pair.u @ (ctx.forms.A @ dl.pair.u)
        qv, qd = psi @ sl.V, -(dl.D @ phi)
        worst_v = max(worst_v, max(-qv, 0.0) / max(abs(qv), 1e-300), abs(qv - ev) / max(abs(ev), 1e-300))
        worst_d = max(worst_d, max(-qd, 0.0) / max(abs(qd), 1e-300), abs(qd - ed) / max(abs(ed), 1e-300))
    return [Check("single layer form equals energy and is nonnegative", worst_v, 1e-9, "symmetry"),
            Check("hypersingular form equals energy and is nonnegative", worst_d, 1e-9, "symmetry")]


@dataclass
class DualityReport:
    single_layer: float
    double_layer: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.single_layer <= self.tol and self.double_layer <= self.tol


def duality_transpose_checks(ctx: PotentialContext, n_samples: int = 20, seed: int = 0,
                             tol: float = 1e-9) -> DualityReport:
    """``<psi, V* psi*> = <psi*, V psi>`` and ``<psi*, K phi> = <K'* psi*, phi>``."""
    rng = np.random.default_rng(seed)
    adj = ctx.adjoint
    w1 = w2 = 0.0
    for _ in range(n_samples):
        psi = rng.standard_normal(ctx.space.n_trace)
        psis = rng.standard_normal(ctx.space.n_trace)
        phi = rng.standard_normal(ctx.space.n_trace)
        Vpsi = single_layer_operators(ctx, psi).V
        sla_ = single_layer_operators(adj, psis)
        lhs, rhs = psi @ sla_.V, psis @ Vpsi
        scale = np.linalg.norm(psi) * np.linalg.norm(sla_.V) + np.linalg.norm(psis) * np.linalg.norm(Vpsi)
        w1 = max(w1, abs(lhs - rhs) / scale)
        Kphi = double_layer_operators(ctx, phi).K
        lhs, rhs = psis @ Kphi, sla_.K_prime @ phi
        scale = np.linalg.norm(psis) * np.linalg.norm(Kphi) + np.linalg.norm(sla_.K_prime) * np.linalg.norm(phi)
        w2 = max(w2, abs(lhs - rhs) / scale)
    return DualityReport(float(w1), float(w2), tol)


def inverse_checks(ctx: PotentialContext, n_samples: int = 10, seed: int = 0,
                   tol: float = 1e-8) -> list[Check]:
    """Round trips through the single layer and hypersingular inverses, plus coercivity."""
    rng = np.random.default_rng(seed)
    V = single_layer_matrix(ctx)
    D = hypersingular_matrix(ctx)
    ev = ed = 0.0
    cv = cd = np.inf
    for _ in range(n_samples):
        psi0 = project_nu(ctx, rng.standard_normal(ctx.space.n_trace))
        got = invert_single_layer(ctx, project_nu(ctx, V @ psi0)).value
        ev = max(ev, _rel(got - psi0, np.linalg.norm(psi0)))
        phi0 = project_rigid_moments(ctx, rng.standard_normal(ctx.space.n_trace))
        got = invert_hypersingular(ctx, project_rigid_density(ctx, D @ phi0)).value
        ed = max(ed, _rel(got - phi0, np.linalg.norm(phi0)))
        cv = min(cv, (psi0 @ V @ psi0) / ctx.norms.dual_norm(psi0) ** 2)
        cd = min(cd, -(phi0 @ D @ phi0) / ctx.norms.norm(phi0) ** 2)
    return [Check("single layer inverse round trip", ev, tol, "inverse"),
            Check("hypersingular inverse round trip", ed, tol, "inverse"),
            Check("single layer coercivity (negated constant)", -cv, 0.0, "inverse"),
            Check("hypersingular coercivity (negated constant)", -cd, 0.0, "inverse")]


# ------------------------------------------------------- Green representation
@dataclass
class RepresentationResult:
    pair: PotentialPair
    u_error: dict
    p_error: dict
    input_residual: float


def _zero_extend(ctx: PotentialContext, u, p, side):
    s = ctx.space
    keep_u = np.repeat(s.bnode_region == side, s.dim)
    keep_p = s.pnode_region == side
    return np.where(keep_u, u, 0.0), np.where(keep_p, p, 0.0)


def green_representation(ctx: PotentialContext, u: np.ndarray, p: np.ndarray,
                         f: np.ndarray | None = None, g: np.ndarray | None = None,
                         jump_trace: np.ndarray | None = None,
                         jump_traction: np.ndarray | None = None,
                         side: int | None = None, check: bool = True,
                         rtol: float = 1e-8) -> RepresentationResult:
    """Rebuild ``(u, p)`` from its jumps and loads.

    ``u_rec = -W[trace u] + V[traction] + N f + G g``. Jumps default to those
    of the discrete state; exact jumps may be supplied instead. With ``side``
    the state is extended by zero across the interface first (single-sided
    representation; needs the broken pressure mode).
    """
    s = ctx.space
    f = np.zeros(s.n_velocity) if f is None else np.asarray(f, dtype=float)
    g = np.zeros(s.n_pressure) if g is None else np.asarray(g, dtype=float)
    if side is not None:
        if s.pressure_mode != "broken":
            raise AdmissibilityError("single-sided representation needs the broken pressure mode")
        u, p = _zero_extend(ctx, u, p, side)
        f = np.where(np.repeat(s.bnode_region == side, s.dim), f, 0.0)
        g = np.where(s.pnode_region == side, g, 0.0)
    res = 0.0
    if check:
        R = ctx.residual(u, p, f)
        r1 = s.Pf.T @ R
        tmask = np.zeros(s.n_continuous, dtype=bool)
        tmask[s.trace_cdofs] = True
        r1 = r1[~tmask[s.free_dofs]]
        r2 = ctx.forms.B @ u + g
        c = s.gauge_vector()
        if c is not None:
            r2 = r2 - c * (c @ r2) / (c @ c)
        scale = (np.linalg.norm(ctx.forms.A @ u) + np.linalg.norm(ctx.forms.B.T @ p)
                 + np.linalg.norm(f) + np.linalg.norm(g))
        res = float((np.linalg.norm(r1) + np.linalg.norm(r2)) / max(scale, 1e-300))
        if res > rtol:
            raise AdmissibilityError(f"state does not solve the two-sided system (residual {res:.2e})")
    if jump_trace is None:
        jump_trace = trace(s, u, INNER) - trace(s, u, OUTER)
    if jump_traction is None:
        jump_traction = (ctx.traction(u, p, f, INNER) - ctx.traction(u, p, f, OUTER))
    rec = (double_layer(ctx, jump_trace).field.scaled(-1.0)
           + single_layer(ctx, jump_traction).field
           + newtonian(ctx, f).field
           + compressibility(ctx, g, strict=False).field)
    pair = PotentialPair(rec, "representation")
    du = u - rec.u
    dp = p - rec.p
    u_err = {name: h1_norm(s, du, r) for name, r in (("inner", INNER), ("outer", OUTER))}
    p_err = {name: l2_pressure_error(s, dp, None, r) for name, r in (("inner", INNER), ("outer", OUTER))}
    return RepresentationResult(pair, u_err, p_err, res)


def identity_suite(ctx: PotentialContext, n_samples: int = 20, seed: int = 0) -> list[Check]:
    """All algebraic identities of the potential layer on one mesh."""
    checks = jump_checks(ctx, n_samples, seed)
    checks += kernel_checks(ctx, min(n_samples, 5), seed)
    checks += sign_checks(ctx, n_samples, seed)
    dual = duality_transpose_checks(ctx, n_samples, seed)
    checks += [Check("single layer adjoint duality", dual.single_layer, dual.tol, "duality"),
               Check("double layer transpose duality", dual.double_layer, dual.tol, "duality")]
    return checks
