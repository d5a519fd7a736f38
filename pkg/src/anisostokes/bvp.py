"""Linear boundary-value problems on composite and exterior domains.

Exterior problems live on the outer region of a truncated mesh with
homogeneous Dirichlet conditions on the truncation boundary. Each problem has
a direct variational solve and, where available, a second route through the
layer potentials so the two can be compared.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import (AssembledForms, Field, evaluate_velocity, h1_norm, l2_pressure_error,
                  trace)
from .mesh import DIRICHLET, NEUMANN, CompositeMesh, build_composite
from .potentials import (AdmissibilityError, PotentialContext, PotentialPair, admit_nu_orthogonal,
                         admit_rigid_orthogonal, compressibility, double_layer,
                         invert_hypersingular, invert_single_layer, newtonian, single_layer)
from .saddle import SaddleOperator
from .tensor import INNER, OUTER, CoeffTensor

KINDS = ("transmission", "dirichlet", "neumann", "mixed")


class BVPError(ValueError):
    pass


@dataclass
class BVPData:
    """Discrete data of a linear problem.

    Loads are broken velocity functionals, divergence data pressure functionals,
    ``phi``/``phi_D`` trace coefficients and ``psi``/``psi_N`` trace densities.
    """

    kind: str
    f: np.ndarray | None = None
    g: np.ndarray | None = None
    phi: np.ndarray | None = None
    psi: np.ndarray | None = None
    phi_D: np.ndarray | None = None
    psi_N: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BVPError(f"unknown problem kind {self.kind!r}")
        needed = {"transmission": (), "dirichlet": ("phi_D",), "neumann": ("psi_N",),
                  "mixed": ("phi_D",)}[self.kind]
        for name in needed:
            if getattr(self, name) is None:
                raise BVPError(f"{self.kind} problem needs {name}")


@dataclass
class BVPResult:
    field: Field
    multiplier: float = 0.0
    report: dict = field(default_factory=dict)


def _zeros(ctx: PotentialContext, data: BVPData):
    s = ctx.space
    f = np.zeros(s.n_velocity) if data.f is None else np.asarray(data.f, dtype=float)
    g = np.zeros(s.n_pressure) if data.g is None else np.asarray(data.g, dtype=float)
    return f, g


def _outer_only(ctx: PotentialContext, f: np.ndarray, g: np.ndarray):
    """Extension by zero of outer data."""
    s = ctx.space
    fo = np.where(np.repeat(s.bnode_region == OUTER, s.dim), f, 0.0)
    if s.pressure_mode == "broken":
        go = np.where(s.pnode_region == OUTER, g, 0.0)
    else:
        go = g.copy()
    return fo, go


# -------------------------------------------------------------- transmission
def solve_transmission(ctx: PotentialContext, data: BVPData, path: str = "direct") -> BVPResult:
    """Two-sided problem with trace jump ``phi`` and traction jump ``psi``."""
    s = ctx.space
    f, g = _zeros(ctx, data)
    phi = np.zeros(s.n_trace) if data.phi is None else np.asarray(data.phi, dtype=float)
    psi = np.zeros(s.n_trace) if data.psi is None else np.asarray(data.psi, dtype=float)
    if path == "direct":
        pair = ctx.solve(ctx.T @ psi - s.Pf.T @ f, -g, offset=ctx.lifting(phi, INNER))
    elif path == "potential":
        parts = [newtonian(ctx, f), compressibility(ctx, g, strict=False),
                 single_layer(ctx, psi), double_layer(ctx, phi)]
        fld = parts[0].field + parts[1].field + parts[2].field - parts[3].field
        lam = parts[0].multiplier + parts[1].multiplier + parts[2].multiplier - parts[3].multiplier
        pair = PotentialPair(fld, "transmission", lam)
    else:
        raise BVPError(f"unknown path {path!r}")
    u = pair.u
    jump = trace(s, u, INNER) - trace(s, u, OUTER)
    tj = ctx.traction(u, pair.p, f, INNER) - ctx.traction(u, pair.p, f, OUTER)
    report = {"path": path,
              "trace_jump_residual": float(np.linalg.norm(jump - phi)),
              "traction_jump_residual": float(np.linalg.norm(tj - psi)),
              "multiplier": pair.multiplier}
    return BVPResult(pair.field, pair.multiplier, report)


# ------------------------------------------------------------------ exterior
class ExteriorSystem:
    """Stokes problem on the outer region with some interface nodes prescribed.

    ``fixed`` selects trace nodes (indices into ``space.trace_nodes``) whose
    values are prescribed; the remaining interface nodes carry natural
    (traction) conditions.
    """

    def __init__(self, forms: AssembledForms, fixed: np.ndarray, gauge: bool):
        s = forms.space
        d = s.dim
        self.forms = forms
        self.space = s
        outer = s.side_dofs(OUTER)
        excl = np.zeros(s.n_velocity, dtype=bool)
        excl[s.constrained_bdofs()] = True
        self.fixed = np.asarray(fixed, dtype=np.int64)
        self.fixed_bdofs = (s.trace_bnodes[OUTER][self.fixed][:, None] * d + np.arange(d)).ravel()
        excl[self.fixed_bdofs] = True
        self.U = outer[~excl[outer]]
        self.Pn = s.pnode_regions_for(OUTER)
        self.A = forms.A[self.U][:, self.U].tocsr()
        self.B = forms.B[self.Pn][:, self.U].tocsr()
        c = s.gauge_vector() if gauge else None
        self.c = None if c is None else c[self.Pn]
        self.op = SaddleOperator(self.A, self.B, self.c)

    def solve(self, f: np.ndarray, g: np.ndarray, offset: np.ndarray,
              psi_N: np.ndarray | None = None) -> tuple[Field, float]:
        s = self.space
        rhs = -(f + self.forms.A @ offset)
        if psi_N is not None:
            nat = np.zeros(s.n_velocity)
            nat[s.trace_bdofs[OUTER]] = psi_N
            rhs = rhs - nat
        gg = -(g + self.forms.B @ offset)
        v, p, lam = self.op.solve(rhs[self.U], gg[self.Pn])
        u = offset.copy()
        u[self.U] += v
        pf = np.zeros(s.n_pressure)
        pf[self.Pn] = p
        return Field(s, u, pf), float(lam)


def _exterior(ctx: PotentialContext, key, fixed, gauge) -> ExteriorSystem:
    cache = ctx.__dict__.setdefault("_exterior", {})
    if key not in cache:
        cache[key] = ExteriorSystem(ctx.forms, fixed, gauge)
    return cache[key]


def solve_dirichlet(ctx: PotentialContext, data: BVPData, variant: str = "nodal") -> BVPResult:
    """Exterior Dirichlet problem; ``variant`` picks the right inverse of the outer trace."""
    s = ctx.space
    f, g = _outer_only(ctx, *_zeros(ctx, data))
    ext = _exterior(ctx, "dirichlet", np.arange(s.n_trace_nodes), True)
    offset = ctx.lifting(np.asarray(data.phi_D, dtype=float), OUTER, variant)
    fld, lam = ext.solve(f, g, offset)
    flux = float(ctx.nu @ data.phi_D)
    report = {"variant": variant, "multiplier": lam, "normal_flux": flux,
              "trace_residual": float(np.linalg.norm(trace(s, fld.u, OUTER) - data.phi_D)),
              "solution_h1": h1_norm(s, fld.u, OUTER),
              "pressure_l2": l2_pressure_error(s, fld.p, None, OUTER)}
    return BVPResult(fld, lam, report)


def solve_dirichlet_by_potentials(ctx: PotentialContext, data: BVPData) -> BVPResult:
    """Exterior Dirichlet problem as ``N f + G g + V V^{-1}(phi_D - trace(N f + G g))``."""
    s = ctx.space
    phi_D = admit_nu_orthogonal(ctx, data.phi_D)
    f, g = _outer_only(ctx, *_zeros(ctx, data))
    vol = newtonian(ctx, f).field + compressibility(ctx, g, strict=False).field
    rhs = phi_D - trace(s, vol.u, OUTER)
    # the volume part has zero normal flux through the interface up to solver error
    rhs = rhs - ctx.nu * (ctx.nu @ rhs) / (ctx.nu @ ctx.nu)
    inv = invert_single_layer(ctx, rhs)
    fld = vol + single_layer(ctx, inv.value).field
    keep = np.repeat(s.bnode_region == OUTER, s.dim)
    u = np.where(keep, fld.u, 0.0)
    p = fld.p if s.pressure_mode == "continuous" else np.where(s.pnode_region == OUTER, fld.p, 0.0)
    report = {"inverse_residual": inv.residual,
              "trace_residual": float(np.linalg.norm(trace(s, u, OUTER) - phi_D))}
    return BVPResult(Field(s, u, p), 0.0, report)


def solve_neumann_by_potentials(ctx: PotentialContext, psi_N: np.ndarray) -> BVPResult:
    """Exterior Neumann problem as the double layer of ``D^{-1} psi_N``."""
    s = ctx.space
    psi_N = admit_rigid_orthogonal(ctx, psi_N)
    inv = invert_hypersingular(ctx, psi_N)
    pair = double_layer(ctx, inv.value)
    keep = np.repeat(s.bnode_region == OUTER, s.dim)
    u = np.where(keep, pair.u, 0.0)
    p = pair.p if s.pressure_mode == "continuous" else np.where(s.pnode_region == OUTER, pair.p, 0.0)
    t_minus = ctx.traction(pair, side=OUTER)
    scale = max(np.linalg.norm(psi_N), 1e-300)
    report = {"inverse_residual": inv.residual,
              "boundary_residual": float(np.linalg.norm(t_minus - psi_N) / scale),
              "density": inv.value}
    return BVPResult(Field(s, u, p), pair.multiplier, report)


def dirichlet_trace_nodes(space, tags: np.ndarray | None = None) -> np.ndarray:
    """Trace nodes lying on the closure of the Dirichlet part of the interface."""
    tags = space.mesh.interface_tags if tags is None else tags
    nodes = space.iface_facet_tnodes[tags == DIRICHLET]
    return np.unique(nodes)


def neumann_supported(space, tags: np.ndarray | None = None) -> np.ndarray:
    """Trace-density mask of basis functions supported in the Neumann part."""
    fixed = np.zeros(space.n_trace_nodes, dtype=bool)
    fixed[dirichlet_trace_nodes(space, tags)] = True
    return np.repeat(~fixed, space.dim)


def solve_mixed(ctx: PotentialContext, data: BVPData, variant: str = "nodal") -> BVPResult:
    """Outer-region problem with Dirichlet data on D and traction data on N.

    Interface facets are split by ``mesh.interface_tags``; the truncation
    boundary keeps the constraint of the space. Only the entries of ``psi_N``
    on Neumann-supported trace basis functions are used.
    """
    s = ctx.space
    tags = s.mesh.interface_tags
    if not np.any(tags == DIRICHLET):
        raise BVPError("mixed problem needs a Dirichlet part of positive measure")
    fixed = dirichlet_trace_nodes(s)
    ext = _exterior(ctx, ("mixed", tags.tobytes()), fixed, gauge=not np.any(tags == NEUMANN))
    f, g = _outer_only(ctx, *_zeros(ctx, data))
    nmask = neumann_supported(s)
    phi_D = np.asarray(data.phi_D, dtype=float)
    phi_fixed = np.where(nmask, 0.0, phi_D)
    offset = np.zeros(s.n_velocity)
    offset[s.trace_bdofs[OUTER]] = phi_fixed
    psi_N = np.zeros(s.n_trace) if data.psi_N is None else np.where(nmask, data.psi_N, 0.0)
    fld, lam = ext.solve(f, g, offset, psi_N)
    t_minus = ctx.traction(fld.u, fld.p, f, OUTER, variant)
    scale = max(np.linalg.norm(psi_N), np.linalg.norm(t_minus), 1e-300)
    report = {"dirichlet_residual": float(np.linalg.norm((trace(s, fld.u, OUTER) - phi_D)[~nmask])),
              "neumann_residual": float(np.linalg.norm((t_minus - psi_N)[nmask]) / scale),
              "n_dirichlet_facets": int(np.sum(tags == DIRICHLET)),
              "n_neumann_facets": int(np.sum(tags == NEUMANN))}
    return BVPResult(fld, lam, report)


def mixed_traction(ctx: PotentialContext, result: BVPResult, f: np.ndarray | None = None,
                   variant: str = "nodal") -> np.ndarray:
    """Restriction of the outer traction to Neumann-supported trace basis functions."""
    s = ctx.space
    f = np.zeros(s.n_velocity) if f is None else _outer_only(ctx, f, np.zeros(s.n_pressure))[0]
    t = ctx.traction(result.field.u, result.field.p, f, OUTER, variant)
    return t[neumann_supported(s)]


# -------------------------------------------------------- truncation study
def _matched_cells(mesh_a: CompositeMesh, mesh_b: CompositeMesh, cells_a: np.ndarray):
    key = lambda c: tuple(np.round(c, 9))  # noqa: E731
    ca = mesh_a.vertices[mesh_a.cells[cells_a]].mean(axis=1)
    cb = mesh_b.vertices[mesh_b.cells].mean(axis=1)
    lookup = {key(c): i for i, c in enumerate(cb)}
    idx = [lookup.get(key(c), -1) for c in ca]
    if min(idx) < 0:
        raise BVPError("collar cells do not match between truncations")
    return np.asarray(idx)


def collar_cells(mesh: CompositeMesh, width: float) -> np.ndarray:
    """Cells whose centroid lies within ``width`` (max norm) of a square interface."""
    c = mesh.vertices[mesh.cells].mean(axis=1)
    s = np.max(np.abs(c), axis=1)
    return np.flatnonzero(np.abs(s - mesh.r0) <= width)


def _collar_difference(ctx_a, u_a, ctx_b, u_b, cells_a, cells_b) -> float:
    qa = ctx_a.space.quad(4)
    va, ga = evaluate_velocity(ctx_a.space, u_a, 4)
    vb, gb = evaluate_velocity(ctx_b.space, u_b, 4)
    dv = va[cells_a] - vb[cells_b]
    dg = ga[cells_a] - gb[cells_b]
    w = qa.weights[cells_a]
    return float(np.sqrt(np.sum(w * (np.sum(dv ** 2, -1) + np.sum(dg ** 2, (-1, -2))))))


@dataclass
class TruncationReport:
    radii: list
    differences: list
    collar_norms: list

    @property
    def decreasing(self) -> bool:
        d = self.differences
        return all(d[i + 1] < d[i] for i in range(len(d) - 1))


def exterior_truncation_study(tensor: CoeffTensor, density, radii=(4.0, 8.0, 16.0),
                              h: float = 0.125, r0: float = 0.5, uniform_radius: float = 1.0,
                              collar_width: float = 0.25, growth: float = 1.5,
                              outer_shape: str = "box", dim: int = 2) -> TruncationReport:
    """Single layer potentials of a fixed density on growing truncations.

    ``density(points, normals)`` gives the density as a function on the
    interface. The interface neighbourhood is meshed identically for every
    radius, so the collar differences compare the same finite element cells.
    """
    from .fem import trace_functional

    results = []
    for R in radii:
        mesh = build_composite(dim, "square", R, h, r0, outer_shape=outer_shape,
                               uniform_radius=uniform_radius, growth=growth,
                               blend_start=max(uniform_radius, 0.4 * R) if outer_shape == "ball" else None)
        ctx = PotentialContext(tensor, mesh)
        psi = trace_functional(ctx.space, density)
        results.append((ctx, single_layer(ctx, psi).u))
    first = results[0][0].space.mesh
    base = collar_cells(first, collar_width)
    cells = [_matched_cells(first, ctx.space.mesh, base) for ctx, _ in results]
    diffs = [_collar_difference(ca, ua, cb, ub, ka, kb)
             for (ca, ua), (cb, ub), ka, kb in zip(results[:-1], results[1:], cells[:-1], cells[1:])]
    norms = [_collar_difference(ctx, u, ctx, np.zeros_like(u), k, k)
             for (ctx, u), k in zip(results, cells)]
    return TruncationReport(list(radii), diffs, norms)
