"""Taylor-Hood spaces on composite meshes and assembly of the Stokes forms.

Velocity is continuous piecewise quadratic and pressure piecewise linear. All
velocity fields are stored in a *broken* layout where every P2 node on the
interface has an inner and an outer copy; a continuous field has equal copies.
Two-sided fields (for instance double layer potentials) use the same layout
with different copies. The prolongation ``P`` maps continuous coefficients to
the broken layout, so the continuous stiffness matrix is ``P.T @ A @ P``.

Degrees of freedom are node-major: component ``c`` of node ``k`` is ``k * dim + c``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import DIRICHLET, CompositeMesh
from .quadrature import simplex_rule
from .tensor import INNER, OUTER, CoeffTensor, SYMMETRY_TOL, isotropic_array, symmetry_violation

PRESSURE_MODES = ("continuous", "broken")
CONSTRAINT_MODES = ("full_dirichlet", "d_only")
GAUGES = ("collar", "mean", "none")
SIDES = {"inner": INNER, "outer": OUTER, "+": INNER, "-": OUTER, INNER: INNER, OUTER: OUTER}


class SpaceError(ValueError):
    pass


def local_edges(dim: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(dim + 1), 2))


def p2_basis(lam: np.ndarray):
    """P2 Lagrange basis on a simplex in barycentric coordinates.

    Returns values ``(nq, nloc)`` and derivatives with respect to the
    barycentric coordinates ``(nq, nloc, d + 1)``.
    """
    nq, k = lam.shape
    edges = local_edges(k - 1)
    nloc = k + len(edges)
    val = np.empty((nq, nloc))
    der = np.zeros((nq, nloc, k))
    for i in range(k):
        val[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
        der[:, i, i] = 4.0 * lam[:, i] - 1.0
    for e, (i, j) in enumerate(edges):
        val[:, k + e] = 4.0 * lam[:, i] * lam[:, j]
        der[:, k + e, i] = 4.0 * lam[:, j]
        der[:, k + e, j] = 4.0 * lam[:, i]
    return val, der


def barycentric_gradients(pts: np.ndarray):
    """Gradients of barycentric coordinates ``(nc, d + 1, d)`` and cell volumes."""
    d = pts.shape[-1]
    jac = np.swapaxes(pts[:, 1:, :] - pts[:, :1, :], 1, 2)
    det = np.linalg.det(jac)
    if np.any(det <= 0):
        bad = int(np.flatnonzero(det <= 0)[0])
        raise SpaceError(f"degenerate or inverted cell {bad}")
    inv = np.linalg.inv(jac)
    grads = np.empty((len(pts), d + 1, d))
    grads[:, 1:, :] = inv
    grads[:, 0, :] = -inv.sum(axis=1)
    return grads, det / {2: 2.0, 3: 6.0}[d]


def _pair_keys(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    return lo.astype(np.int64) * n + hi


@dataclass
class QuadData:
    """Quadrature data on all cells for one rule."""

    points: np.ndarray      # (nc, nq, dim)
    weights: np.ndarray     # (nc, nq), already scaled by cell volume
    lam: np.ndarray         # (nq, d + 1)
    phi: np.ndarray         # (nq, nloc)
    dphi: np.ndarray        # (nc, nq, nloc, dim)
    regions: np.ndarray     # (nc,)


class MixedSpace:
    """Taylor-Hood velocity/pressure spaces with interface traces.

    Parameters
    ----------
    mesh : CompositeMesh
    pressure_mode : "continuous" or "broken" (duplicated interface pressure values)
    constraint_mode : "full_dirichlet" constrains the whole truncation boundary,
        "d_only" constrains only Dirichlet-tagged outer facets
    gauge : "collar" (zero mean over cells touching the truncation boundary),
        "mean" (zero mean over the domain) or "none"
    """

    def __init__(self, mesh: CompositeMesh, pressure_mode: str = "continuous",
                 constraint_mode: str = "full_dirichlet", gauge: str = "collar"):
        if pressure_mode not in PRESSURE_MODES:
            raise SpaceError(f"unknown pressure mode {pressure_mode!r}")
        if constraint_mode not in CONSTRAINT_MODES:
            raise SpaceError(f"unknown constraint mode {constraint_mode!r}")
        if gauge not in GAUGES:
            raise SpaceError(f"unknown gauge {gauge!r}")
        self.mesh = mesh
        self.dim = mesh.dim
        self.pressure_mode = pressure_mode
        self.constraint_mode = constraint_mode
        self.gauge = gauge
        self._build_nodes()
        self._build_broken()
        self._build_constraints()
        self._build_trace()
        self._build_pressure()

    # ------------------------------------------------------------------ layout
    def _build_nodes(self):
        mesh = self.mesh
        nv = mesh.nv
        k = self.dim + 1
        edges = local_edges(self.dim)
        a = np.concatenate([mesh.cells[:, i] for i, _ in edges])
        b = np.concatenate([mesh.cells[:, j] for _, j in edges])
        keys = _pair_keys(a, b, nv)
        self.edge_keys, inv = np.unique(keys, return_inverse=True)
        inv = inv.reshape(len(edges), mesh.nc).T
        self.n_nodes = nv + len(self.edge_keys)
        self.cell_nodes = np.concatenate([mesh.cells, nv + inv], axis=1)
        self.nloc = k + len(edges)
        lo, hi = self.edge_keys // nv, self.edge_keys % nv
        self.nodes = np.concatenate([mesh.vertices, 0.5 * (mesh.vertices[lo] + mesh.vertices[hi])])

    def edge_node(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Geometric P2 node id of the midpoint of edge (a, b)."""
        keys = _pair_keys(np.asarray(a), np.asarray(b), self.mesh.nv)
        pos = np.searchsorted(self.edge_keys, keys)
        if np.any(self.edge_keys[np.minimum(pos, len(self.edge_keys) - 1)] != keys):
            raise SpaceError("edge not in mesh")
        return self.mesh.nv + pos

    def facet_nodes(self, facets: np.ndarray) -> np.ndarray:
        """P2 node ids of facets: vertices then edge midpoints in combination order."""
        cols = [facets[:, i] for i in range(facets.shape[1])]
        for i, j in itertools.combinations(range(facets.shape[1]), 2):
            cols.append(self.edge_node(facets[:, i], facets[:, j]))
        return np.stack(cols, axis=1)

    def _build_broken(self):
        mesh = self.mesh
        nn = self.n_nodes
        in_region = np.zeros((2, nn), dtype=bool)
        for r in (INNER, OUTER):
            in_region[r, self.cell_nodes[mesh.regions == r].ravel()] = True
        self.node_copy = np.full((2, nn), -1, dtype=np.int64)
        order = np.stack(np.nonzero(in_region.T), axis=1)  # (node, region) sorted by node
        self.node_copy[order[:, 1], order[:, 0]] = np.arange(len(order))
        self.n_bnodes = len(order)
        self.bnode_geo = order[:, 0]
        self.bnode_region = order[:, 1]
        self.cell_bnodes = np.where(mesh.regions[:, None] == INNER,
                                    self.node_copy[INNER][self.cell_nodes],
                                    self.node_copy[OUTER][self.cell_nodes])
        d = self.dim
        rows = np.arange(self.n_bnodes)[:, None] * d + np.arange(d)
        cols = self.bnode_geo[:, None] * d + np.arange(d)
        self.P = sp.csr_matrix((np.ones(rows.size), (rows.ravel(), cols.ravel())),
                               shape=(self.n_bnodes * d, nn * d))

    def _build_constraints(self):
        mesh = self.mesh
        facets = mesh.outer_facets
        if self.constraint_mode == "d_only":
            facets = facets[mesh.outer_tags == DIRICHLET]
        constrained = np.zeros(self.n_nodes, dtype=bool)
        if len(facets):
            constrained[self.facet_nodes(facets).ravel()] = True
        self.constrained_nodes = np.flatnonzero(constrained)
        d = self.dim
        mask = np.repeat(~constrained, d)
        self.free_dofs = np.flatnonzero(mask)
        self.n_free = len(self.free_dofs)
        # continuous free coefficients -> broken layout
        self.Pf = self.P[:, self.free_dofs].tocsr()

    def _build_trace(self):
        mesh = self.mesh
        self.iface_facet_nodes = self.facet_nodes(mesh.interface_facets)
        self.trace_nodes = np.unique(self.iface_facet_nodes)
        self.n_trace_nodes = len(self.trace_nodes)
        lookup = np.full(self.n_nodes, -1, dtype=np.int64)
        lookup[self.trace_nodes] = np.arange(self.n_trace_nodes)
        self.trace_index = lookup
        self.iface_facet_tnodes = lookup[self.iface_facet_nodes]
        d = self.dim
        self.n_trace = self.n_trace_nodes * d
        self.trace_bnodes = {INNER: self.node_copy[INNER][self.trace_nodes],
                             OUTER: self.node_copy[OUTER][self.trace_nodes]}
        self.trace_bdofs = {r: (self.trace_bnodes[r][:, None] * d + np.arange(d)).ravel()
                            for r in (INNER, OUTER)}
        self.trace_cdofs = (self.trace_nodes[:, None] * d + np.arange(d)).ravel()
        if np.any(self.node_copy[:, self.trace_nodes] < 0):
            raise SpaceError("interface node missing a side copy")

    def _build_pressure(self):
        mesh = self.mesh
        nv = mesh.nv
        if self.pressure_mode == "continuous":
            self.n_pressure = nv
            self.cell_pnodes = mesh.cells.copy()
            self.pnode_vertex = np.arange(nv)
            self.pnode_region = np.full(nv, -1)
        else:
            in_region = np.zeros((2, nv), dtype=bool)
            for r in (INNER, OUTER):
                in_region[r, mesh.cells[mesh.regions == r].ravel()] = True
            copy = np.full((2, nv), -1, dtype=np.int64)
            order = np.stack(np.nonzero(in_region.T), axis=1)
            copy[order[:, 1], order[:, 0]] = np.arange(len(order))
            self.n_pressure = len(order)
            self.pnode_vertex = order[:, 0]
            self.pnode_region = order[:, 1]
            self.cell_pnodes = np.where(mesh.regions[:, None] == INNER,
                                        copy[INNER][mesh.cells], copy[OUTER][mesh.cells])

    # ------------------------------------------------------------- properties
    @property
    def n_velocity(self) -> int:
        """Number of broken velocity coefficients."""
        return self.n_bnodes * self.dim

    @property
    def n_continuous(self) -> int:
        return self.n_nodes * self.dim

    def side_dofs(self, side) -> np.ndarray:
        r = SIDES[side]
        nodes = np.flatnonzero(self.bnode_region == r)
        return (nodes[:, None] * self.dim + np.arange(self.dim)).ravel()

    def constrained_bdofs(self) -> np.ndarray:
        """Broken velocity dofs sitting on constrained outer-boundary nodes."""
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.constrained_nodes] = True
        nodes = np.flatnonzero(mask[self.bnode_geo])
        return (nodes[:, None] * self.dim + np.arange(self.dim)).ravel()

    @cached_property
    def _cell_geometry(self):
        return barycentric_gradients(self.mesh.vertices[self.mesh.cells])

    def quad(self, degree: int) -> QuadData:
        return self._quad(int(degree))

    def _quad(self, degree: int) -> QuadData:
        cache = self.__dict__.setdefault("_quad_cache", {})
        if degree not in cache:
            lam, w = simplex_rule(self.dim, degree)
            grads, vol = self._cell_geometry
            verts = self.mesh.vertices[self.mesh.cells]
            pts = np.einsum("qi,cid->cqd", lam, verts)
            phi, dlam = p2_basis(lam)
            dphi = np.einsum("qki,cid->cqkd", dlam, grads)
            cache[degree] = QuadData(pts, vol[:, None] * w[None, :], lam, phi, dphi,
                                     self.mesh.regions)
        return cache[degree]

    def cell_volumes(self) -> np.ndarray:
        return self._cell_geometry[1]

    # ----------------------------------------------------------------- fields
    def continuous_to_broken(self, uc: np.ndarray) -> np.ndarray:
        return self.P @ uc

    def free_to_broken(self, uf: np.ndarray) -> np.ndarray:
        return self.Pf @ uf

    def zero_velocity(self) -> np.ndarray:
        return np.zeros(self.n_velocity)

    def zero_pressure(self) -> np.ndarray:
        return np.zeros(self.n_pressure)

    def bnode_points(self) -> np.ndarray:
        return self.nodes[self.bnode_geo]

    def pnode_points(self) -> np.ndarray:
        return self.mesh.vertices[self.pnode_vertex]

    def pnode_regions_for(self, region: int) -> np.ndarray:
        """Pressure nodes used by cells of one region."""
        return np.unique(self.cell_pnodes[self.mesh.regions == region])

    def gauge_vector(self) -> np.ndarray | None:
        """Pressure functional whose vanishing fixes the additive constant."""
        if self.gauge == "none":
            return None
        q = self.quad(2)
        cells = np.arange(self.mesh.nc)
        if self.gauge == "collar":
            cells = self.mesh.collar_cells()
        vals = np.einsum("cq,qi->ci", q.weights[cells], q.lam)
        c = np.zeros(self.n_pressure)
        np.add.at(c, self.cell_pnodes[cells].ravel(), vals.ravel())
        return c

    def gauge_region_cells(self) -> np.ndarray:
        if self.gauge == "collar":
            return self.mesh.collar_cells()
        return np.arange(self.mesh.nc)


@dataclass
class Field:
    """Velocity (broken layout) and pressure coefficients on a space."""

    space: MixedSpace
    u: np.ndarray
    p: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.u) != self.space.n_velocity or len(self.p) != self.space.n_pressure:
            raise SpaceError("field coefficient lengths do not match the space")

    def __add__(self, other: "Field") -> "Field":
        return Field(self.space, self.u + other.u, self.p + other.p)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.space, self.u - other.u, self.p - other.p)

    def scaled(self, s: float) -> "Field":
        return Field(self.space, s * self.u, s * self.p)


# ---------------------------------------------------------------- assembly
def _scatter(space: MixedSpace, local: np.ndarray, row_nodes, col_nodes, rdim, cdim, shape):
    """Assemble ``local[c, a, i, b, j]`` blocks into a CSR matrix."""
    nc, na, _, nb, _ = local.shape
    rows = (row_nodes[:, :, None] * rdim + np.arange(rdim))  # (nc, na, rdim)
    cols = (col_nodes[:, :, None] * cdim + np.arange(cdim))
    R = np.broadcast_to(rows[:, :, :, None, None], local.shape)
    C = np.broadcast_to(cols[:, None, None, :, :], local.shape)
    mat = sp.coo_matrix((local.ravel(), (R.ravel(), C.ravel())), shape=shape)
    return mat.tocsr()


def _tensor_at_quad(A: CoeffTensor, q: QuadData) -> np.ndarray:
    nc, nq, d = q.points.shape
    if A.is_piecewise_constant:
        vals = np.stack([A.region_value(INNER), A.region_value(OUTER)])
        return vals[q.regions][:, None]  # (nc, 1, n, n, n, n)
    regs = np.repeat(q.regions, nq)
    return A(q.points.reshape(-1, d), regs).reshape(nc, nq, d, d, d, d)


def assemble_a(A: CoeffTensor, space: MixedSpace, degree: int | None = None,
               check_symmetry: bool = True) -> sp.csr_matrix:
    """Broken stiffness matrix with ``M[v, u] = a(u, v)``.

    Uses the strain form ``a_ij^{ab} E_jb(u) E_ia(v)``; the tensor must satisfy
    the index-swap symmetries (checked at quadrature points).
    """
    if A.dim != space.dim:
        raise SpaceError("tensor and space dimensions differ")
    if degree is None:
        degree = 2 if A.is_piecewise_constant else 4
    q = space.quad(degree)
    a = _tensor_at_quad(A, q)
    if check_symmetry:
        viol = symmetry_violation(a)
        if viol > SYMMETRY_TOL:
            raise SpaceError(f"tensor violates the index-swap symmetry by {viol:.3e}")
    d = space.dim
    # strain of basis (node k, component j): E[c,q,k,j,i,a]
    eye = np.eye(d)
    g = q.dphi
    strain = 0.5 * (np.einsum("cqka,ji->cqkjia", g, eye) + np.einsum("cqki,ja->cqkjia", g, eye))
    # stress of each trial basis field: a_im^{ab} E_mb(phi_k e_j)
    if a.shape[1] == 1:
        stress = np.einsum("cimab,cqkjmb->cqkjia", a[:, 0], strain, optimize=True)
    else:
        stress = np.einsum("cqimab,cqkjmb->cqkjia", a, strain, optimize=True)
    local = np.einsum("cq,cqkjia,cqlnia->clnkj", q.weights, stress, strain, optimize=True)
    n = space.n_velocity
    return _scatter(space, local, space.cell_bnodes, space.cell_bnodes, d, d, (n, n))


def assemble_b(space: MixedSpace) -> sp.csr_matrix:
    """Broken divergence matrix with ``B[q, v] = b(v, q) = -(div v, q)``."""
    qd = space.quad(2)
    d = space.dim
    local = -np.einsum("cq,qr,cqkj->crkj", qd.weights, qd.lam, qd.dphi)
    local = local[:, :, None, :, :]
    shape = (space.n_pressure, space.n_velocity)
    return _scatter(space, local, space.cell_pnodes, space.cell_bnodes, 1, d, shape)


def assemble_velocity_mass(space: MixedSpace) -> sp.csr_matrix:
    qd = space.quad(4)
    d = space.dim
    m = np.einsum("cq,qk,ql->clk", qd.weights, qd.phi, qd.phi)
    local = np.einsum("clk,ij->clikj", m, np.eye(d))
    return _scatter(space, local, space.cell_bnodes, space.cell_bnodes, d, d,
                    (space.n_velocity, space.n_velocity))


def assemble_gradient_seminorm(space: MixedSpace) -> sp.csr_matrix:
    """Broken matrix of ``(grad u, grad v)`` for vector fields."""
    qd = space.quad(2)
    d = space.dim
    k = np.einsum("cq,cqka,cqla->clk", qd.weights, qd.dphi, qd.dphi)
    local = np.einsum("clk,ij->clikj", k, np.eye(d))
    return _scatter(space, local, space.cell_bnodes, space.cell_bnodes, d, d,
                    (space.n_velocity, space.n_velocity))


def assemble_pressure_mass(space: MixedSpace) -> sp.csr_matrix:
    qd = space.quad(2)
    m = np.einsum("cq,qr,qs->crs", qd.weights, qd.lam, qd.lam)[:, :, None, :, None]
    return _scatter(space, m, space.cell_pnodes, space.cell_pnodes, 1, 1,
                    (space.n_pressure, space.n_pressure))


@dataclass
class AssembledForms:
    """Broken-layout matrices of the Stokes forms on one space.

    ``A[v, u] = a(u, v)``, ``B[q, v] = b(v, q)``, mass matrices and the
    gradient-seminorm matrix ``X``.
    """

    space: MixedSpace
    tensor: CoeffTensor
    A: sp.csr_matrix
    B: sp.csr_matrix
    Mv: sp.csr_matrix
    Mp: sp.csr_matrix
    X: sp.csr_matrix

    def restrict(self, M: sp.spmatrix) -> sp.csr_matrix:
        """Continuous, constrained version ``Pf.T M Pf`` of a broken velocity matrix."""
        Pf = self.space.Pf
        return (Pf.T @ M @ Pf).tocsr()

    @cached_property
    def A_free(self) -> sp.csr_matrix:
        return self.restrict(self.A)

    @cached_property
    def X_free(self) -> sp.csr_matrix:
        return self.restrict(self.X)

    @cached_property
    def B_free(self) -> sp.csr_matrix:
        return (self.B @ self.space.Pf).tocsr()

    @cached_property
    def Mv_free(self) -> sp.csr_matrix:
        return self.restrict(self.Mv)


def assemble(A: CoeffTensor, space: MixedSpace, degree: int | None = None) -> AssembledForms:
    """Assemble all matrices for tensor ``A`` on ``space``."""
    return AssembledForms(space, A, assemble_a(A, space, degree), assemble_b(space),
                          assemble_velocity_mass(space), assemble_pressure_mass(space),
                          assemble_gradient_seminorm(space))


# -------------------------------------------------------- evaluation helpers
def evaluate_velocity(space: MixedSpace, u: np.ndarray, degree: int = 4):
    """Values ``(nc, nq, dim)`` and gradients ``(nc, nq, dim, dim)`` (``[i, a] = d_a u_i``)."""
    q = space.quad(degree)
    coef = u.reshape(-1, space.dim)[space.cell_bnodes]  # (nc, nloc, dim)
    val = np.einsum("qk,cki->cqi", q.phi, coef)
    grad = np.einsum("cqka,cki->cqia", q.dphi, coef)
    return val, grad


def evaluate_pressure(space: MixedSpace, p: np.ndarray, degree: int = 4) -> np.ndarray:
    q = space.quad(degree)
    return np.einsum("qr,cr->cq", q.lam, p[space.cell_pnodes])


def region_mask(space: MixedSpace, regions) -> np.ndarray:
    regions = [SIDES[r] for r in np.atleast_1d(regions)] if regions is not None else [INNER, OUTER]
    return np.isin(space.mesh.regions, regions)


def interpolate(space: MixedSpace, func: Callable) -> np.ndarray:
    """Nodal interpolant of ``func(points, regions) -> (m, dim)`` in the broken layout."""
    vals = np.asarray(func(space.bnode_points(), space.bnode_region), dtype=float)
    return vals.reshape(-1).copy()


def interpolate_pressure(space: MixedSpace, func: Callable) -> np.ndarray:
    """Nodal interpolant of a scalar ``func(points, regions)``.

    For continuous pressure the region argument is ``-1`` at every node.
    """
    regs = space.pnode_region
    if space.pressure_mode == "continuous":
        regs = np.full(space.n_pressure, -1)
    return np.asarray(func(space.pnode_points(), regs), dtype=float).reshape(-1).copy()


def load_functional(space: MixedSpace, func: Callable, regions=None, degree: int = 6) -> np.ndarray:
    """Broken vector ``int f . phi`` over the given regions.

    ``func(points, regions)`` returns ``(m, dim)`` values.
    """
    q = space.quad(degree)
    mask = region_mask(space, regions)
    nc, nq, d = q.points.shape
    vals = np.asarray(func(q.points.reshape(-1, d), np.repeat(q.regions, nq)), dtype=float)
    vals = vals.reshape(nc, nq, d) * mask[:, None, None]
    local = np.einsum("cq,qk,cqi->cki", q.weights, q.phi, vals)
    out = np.zeros(space.n_velocity)
    idx = space.cell_bnodes[:, :, None] * d + np.arange(d)
    np.add.at(out, idx.ravel(), local.ravel())
    return out


def pressure_functional(space: MixedSpace, func: Callable, regions=None, degree: int = 6) -> np.ndarray:
    """Pressure-dual vector ``int g q`` over the given regions."""
    q = space.quad(degree)
    mask = region_mask(space, regions)
    nc, nq, d = q.points.shape
    vals = np.asarray(func(q.points.reshape(-1, d), np.repeat(q.regions, nq)), dtype=float)
    vals = vals.reshape(nc, nq) * mask[:, None]
    local = np.einsum("cq,qr,cq->cr", q.weights, q.lam, vals)
    out = np.zeros(space.n_pressure)
    np.add.at(out, space.cell_pnodes.ravel(), local.ravel())
    return out


# ------------------------------------------------------------ interface data
@dataclass
class FacetQuad:
    points: np.ndarray   # (nf, nq, dim)
    weights: np.ndarray  # (nf, nq)
    normals: np.ndarray  # (nf, dim)
    phi: np.ndarray      # (nq, nfloc)


def interface_quad(space: MixedSpace, degree: int = 6) -> FacetQuad:
    mesh = space.mesh
    lam, w = simplex_rule(space.dim - 1, degree)
    pts = mesh.vertices[mesh.interface_facets]
    x = np.einsum("qi,fid->fqd", lam, pts)
    meas = mesh.interface_measures()
    phi, _ = p2_basis(lam)
    return FacetQuad(x, meas[:, None] * w[None, :], mesh.interface_normals(), phi)


def trace_functional(space: MixedSpace, func: Callable, degree: int = 6,
                     facet_mask: np.ndarray | None = None) -> np.ndarray:
    """Trace density ``Phi_k -> int_interface func . Phi_k``.

    ``func(points, normals)`` returns ``(m, dim)`` values.
    """
    fq = interface_quad(space, degree)
    nf, nq, d = fq.points.shape
    nrm = np.repeat(fq.normals, nq, axis=0)
    vals = np.asarray(func(fq.points.reshape(-1, d), nrm), dtype=float).reshape(nf, nq, d)
    if facet_mask is not None:
        vals = vals * facet_mask[:, None, None]
    local = np.einsum("fq,qk,fqi->fki", fq.weights, fq.phi, vals)
    out = np.zeros(space.n_trace)
    idx = space.iface_facet_tnodes[:, :, None] * d + np.arange(d)
    np.add.at(out, idx.ravel(), local.ravel())
    return out


def nu_density(space: MixedSpace) -> np.ndarray:
    """The normal as a density: ``Phi -> int Phi . nu``."""
    return trace_functional(space, lambda x, n: n, degree=2)


def trace_mass(space: MixedSpace) -> sp.csr_matrix:
    """Vector P2 mass matrix on the interface in trace coordinates."""
    fq = interface_quad(space, 4)
    d = space.dim
    m = np.einsum("fq,qk,ql->flk", fq.weights, fq.phi, fq.phi)
    local = np.einsum("flk,ij->flikj", m, np.eye(d))
    t = space.iface_facet_tnodes
    return _scatter(space, local, t, t, d, d, (space.n_trace, space.n_trace))


def trace_laplace_beltrami(space: MixedSpace) -> sp.csr_matrix:
    """Vector P2 surface stiffness matrix on the interface."""
    mesh = space.mesh
    d = space.dim
    lam, w = simplex_rule(d - 1, 2)
    pts = mesh.vertices[mesh.interface_facets]
    _, dlam = p2_basis(lam)
    # surface gradients of facet barycentrics via the pseudo-inverse of the facet Jacobian
    jac = np.swapaxes(pts[:, 1:, :] - pts[:, :1, :], 1, 2)  # (nf, d, d-1)
    pinv = np.linalg.pinv(jac)  # (nf, d-1, d)
    g = np.empty((len(pts), d, d))
    g[:, 1:, :] = pinv
    g[:, 0, :] = -pinv.sum(axis=1)
    dphi = np.einsum("qki,fid->fqkd", dlam, g)
    meas = mesh.interface_measures()
    k = np.einsum("f,q,fqkd,fqld->flk", meas, w, dphi, dphi)
    local = np.einsum("flk,ij->flikj", k, np.eye(d))
    t = space.iface_facet_tnodes
    return _scatter(space, local, t, t, d, d, (space.n_trace, space.n_trace))


class TraceNorms:
    """Trace-space inner product ``mass + Laplace-Beltrami`` and its dual norm."""

    def __init__(self, space: MixedSpace):
        self.space = space
        self.S = (trace_mass(space) + trace_laplace_beltrami(space)).tocsc()
        self._lu = spla.splu(self.S)

    def norm(self, phi: np.ndarray) -> float:
        return float(np.sqrt(max(phi @ (self.S @ phi), 0.0)))

    def dual_norm(self, psi: np.ndarray) -> float:
        return float(np.sqrt(max(psi @ self._lu.solve(psi), 0.0)))


def trace(space: MixedSpace, u: np.ndarray, side) -> np.ndarray:
    """Side trace of a broken velocity field as trace-space coefficients."""
    return u[space.trace_bdofs[SIDES[side]]].copy()


def trace_of_function(space: MixedSpace, func: Callable) -> np.ndarray:
    """Trace coefficients of ``func(points) -> (m, dim)`` at interface nodes."""
    return np.asarray(func(space.nodes[space.trace_nodes]), dtype=float).reshape(-1)


def rigid_traces(space: MixedSpace) -> np.ndarray:
    """Trace coefficients of the rigid motion basis, shape ``(nr, n_trace)``."""
    from .mesh import rigid_motion_basis

    basis = rigid_motion_basis(space.dim)
    return basis(space.nodes[space.trace_nodes]).reshape(len(basis), -1)


class Lifting:
    """Right inverses of the side traces.

    ``variant="nodal"`` puts the trace values on the side copies of interface
    nodes and zero elsewhere, so the lifted field lives on one layer of cells.
    ``variant="harmonic"`` extends by the discrete vector-harmonic extension
    into the side region, vanishing on constrained outer nodes.
    """

    def __init__(self, space: MixedSpace, X: sp.csr_matrix | None = None):
        self.space = space
        self._X = X
        self._harm = {}

    def _interior(self, side: int):
        sp_ = self.space
        dofs = sp_.side_dofs(side)
        excl = np.zeros(sp_.n_velocity, dtype=bool)
        excl[sp_.trace_bdofs[side]] = True
        excl[sp_.constrained_bdofs()] = True
        return dofs[~excl[dofs]]

    def _harmonic(self, side: int):
        if side not in self._harm:
            X = self._X if self._X is not None else assemble_gradient_seminorm(self.space)
            I = self._interior(side)
            G = self.space.trace_bdofs[side]
            XII = X[I][:, I].tocsc()
            self._harm[side] = (I, G, spla.splu(XII), X[I][:, G].tocsr(), X[G][:, I].tocsr())
        return self._harm[side]

    def __call__(self, phi: np.ndarray, side, variant: str = "nodal") -> np.ndarray:
        side = SIDES[side]
        u = np.zeros(self.space.n_velocity)
        u[self.space.trace_bdofs[side]] = phi
        if variant == "nodal":
            return u
        if variant != "harmonic":
            raise SpaceError(f"unknown lifting variant {variant!r}")
        I, G, lu, XIG, _ = self._harmonic(side)
        u[I] = -lu.solve(XIG @ phi)
        return u

    def adjoint(self, residual: np.ndarray, side, variant: str = "nodal") -> np.ndarray:
        """Values ``residual . lift(Phi_k)`` for every trace basis function."""
        side = SIDES[side]
        G = self.space.trace_bdofs[side]
        if variant == "nodal":
            return residual[G].copy()
        I, G, lu, _, XGI = self._harmonic(side)
        return residual[G] - XGI @ lu.solve(residual[I])


def stokes_residual(forms: AssembledForms, u: np.ndarray, p: np.ndarray,
                    load: np.ndarray | None = None) -> np.ndarray:
    """Broken residual ``A u + B.T p + load``; tests with ``v`` give ``a(u,v) + b(v,p) + <f,v>``."""
    r = forms.A @ u + forms.B.T @ p
    if load is not None:
        r = r + load
    return r


def conormal_derivative(forms: AssembledForms, u: np.ndarray, p: np.ndarray,
                        load: np.ndarray | None, side, lifting: Lifting | None = None,
                        variant: str = "nodal") -> np.ndarray:
    """Generalized conormal derivative on one side as a trace density.

    ``+<t+, Phi> = a_+(u, lift Phi) - (p, div lift Phi)_+ + <f, lift Phi>_+`` and
    ``-<t-, Phi>`` the same on the outer side. ``load`` is the broken load
    functional (only its entries on the requested side matter).
    """
    side = SIDES[side]
    r = stokes_residual(forms, u, p, load)
    lifting = lifting or Lifting(forms.space, forms.X)
    vals = lifting.adjoint(r, side, variant)
    return vals if side == INNER else -vals


def conormal_jump(forms: AssembledForms, u: np.ndarray, p: np.ndarray,
                  load: np.ndarray | None = None, lifting: Lifting | None = None,
                  variant: str = "nodal") -> np.ndarray:
    """``t+ - t-`` for a two-sided state and per-side loads."""
    lifting = lifting or Lifting(forms.space, forms.X)
    return (conormal_derivative(forms, u, p, load, INNER, lifting, variant)
            - conormal_derivative(forms, u, p, load, OUTER, lifting, variant))


def convection_load(space: MixedSpace, w: np.ndarray, u: np.ndarray, degree: int = 6,
                    skew: bool = False) -> np.ndarray:
    """Broken vector ``v -> <(w . grad) u, v>``.

    With ``skew=True`` the term ``(1/2) <(div w) u, v>`` is added (Temam's
    skew-symmetric form; not the raw trilinear form).
    """
    q = space.quad(degree)
    d = space.dim
    wv, wg = evaluate_velocity(space, w, degree)
    uv, ug = evaluate_velocity(space, u, degree)
    conv = np.einsum("cqb,cqib->cqi", wv, ug)
    if skew:
        conv = conv + 0.5 * np.einsum("cqbb->cq", wg)[:, :, None] * uv
    local = np.einsum("cq,qk,cqi->cki", q.weights, q.phi, conv)
    out = np.zeros(space.n_velocity)
    idx = space.cell_bnodes[:, :, None] * d + np.arange(d)
    np.add.at(out, idx.ravel(), local.ravel())
    return out


def lp_norm(space: MixedSpace, u: np.ndarray, p: float = 2.0, degree: int = 8) -> float:
    q = space.quad(degree)
    val, _ = evaluate_velocity(space, u, degree)
    mag = np.linalg.norm(val, axis=-1)
    return float(np.sum(q.weights * mag ** p) ** (1.0 / p))


def strain_norm_sq(space: MixedSpace, u: np.ndarray, regions=None, degree: int = 4) -> float:
    q = space.quad(degree)
    _, g = evaluate_velocity(space, u, degree)
    e = 0.5 * (g + np.swapaxes(g, -1, -2))
    mask = region_mask(space, regions)
    return float(np.sum(q.weights[mask] * np.sum(e[mask] ** 2, axis=(-1, -2))))


def composite_rigid_norm(space: MixedSpace, w: np.ndarray) -> float:
    """Strain energy on both sides plus the rigid moments of the trace jump."""
    jump = trace(space, w, INNER) - trace(space, w, OUTER)
    M = trace_mass(space)
    moments = rigid_traces(space) @ (M @ jump)
    return float(np.sqrt(strain_norm_sq(space, w) + np.sum(moments ** 2)))


@dataclass
class KornReport:
    max_ratio: float
    n_samples: int
    passed: bool


def korn_check(space: MixedSpace, n_samples: int = 100, seed: int = 0,
               tol: float = 1e-10) -> KornReport:
    """Check ``|grad v|^2 <= 2 |E(v)|^2`` on random constrained continuous fields."""
    rng = np.random.default_rng(seed)
    X = assemble_gradient_seminorm(space)
    half = make_strain_tensor(space.dim)
    E = assemble_a(half, space)
    worst = 0.0
    for _ in range(n_samples):
        v = space.free_to_broken(rng.standard_normal(space.n_free))
        g2, e2 = v @ (X @ v), v @ (E @ v)
        if e2 > 0:
            worst = max(worst, g2 / e2)
    return KornReport(worst, n_samples, worst <= 2.0 + tol)


def make_strain_tensor(dim: int) -> CoeffTensor:
    """Tensor whose form is ``|E(v)|^2`` (isotropic with mu = 1/2, lambda = 0)."""
    from .tensor import from_constant

    return from_constant(isotropic_array(dim, 0.5, 0.0), "strain")


# ------------------------------------------------------------------- errors
def h1_seminorm_error(space: MixedSpace, u: np.ndarray, exact_grad: Callable | None,
                      regions=None, degree: int = 6) -> float:
    """``|| grad(u - exact) ||`` over regions; ``exact_grad(points, regions) -> (m, d, d)``."""
    q = space.quad(degree)
    nc, nq, d = q.points.shape
    _, g = evaluate_velocity(space, u, degree)
    if exact_grad is not None:
        ex = np.asarray(exact_grad(q.points.reshape(-1, d), np.repeat(q.regions, nq)))
        g = g - ex.reshape(nc, nq, d, d)
    mask = region_mask(space, regions)
    return float(np.sqrt(np.sum(q.weights[mask] * np.sum(g[mask] ** 2, axis=(-1, -2)))))


def l2_velocity_error(space: MixedSpace, u: np.ndarray, exact: Callable | None,
                      regions=None, degree: int = 6) -> float:
    q = space.quad(degree)
    nc, nq, d = q.points.shape
    v, _ = evaluate_velocity(space, u, degree)
    if exact is not None:
        v = v - np.asarray(exact(q.points.reshape(-1, d), np.repeat(q.regions, nq))).reshape(nc, nq, d)
    mask = region_mask(space, regions)
    return float(np.sqrt(np.sum(q.weights[mask] * np.sum(v[mask] ** 2, axis=-1))))


def l2_pressure_error(space: MixedSpace, p: np.ndarray, exact: Callable | None,
                      regions=None, degree: int = 6) -> float:
    q = space.quad(degree)
    nc, nq, d = q.points.shape
    v = evaluate_pressure(space, p, degree)
    if exact is not None:
        v = v - np.asarray(exact(q.points.reshape(-1, d), np.repeat(q.regions, nq))).reshape(nc, nq)
    mask = region_mask(space, regions)
    return float(np.sqrt(np.sum(q.weights[mask] * v[mask] ** 2)))


def h1_norm(space: MixedSpace, u: np.ndarray, regions=None) -> float:
    """Full H1 norm of a broken velocity field over regions."""
    return float(np.hypot(h1_seminorm_error(space, u, None, regions, 4),
                          l2_velocity_error(space, u, None, regions, 4)))


# ------------------------------------------------------------ serialization
def write_columns(path, values: np.ndarray, header: str = "") -> None:
    """Columnar text: one ``index value`` pair per line."""
    values = np.asarray(values, dtype=float).ravel()
    lines = [f"# {header}"] if header else []
    lines += [f"{i} {v!r}" for i, v in enumerate(values.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_columns(path) -> np.ndarray:
    rows = [ln.split() for ln in Path(path).read_text().splitlines()
            if ln.strip() and not ln.startswith("#")]
    idx = np.array([int(r[0]) for r in rows])
    out = np.zeros(idx.max() + 1 if len(idx) else 0)
    out[idx] = [float(r[1]) for r in rows]
    return out


def write_coo(path, matrix: sp.spmatrix) -> None:
    """Coordinate text format: ``row col value`` per stored entry."""
    m = sp.coo_matrix(matrix)
    lines = [f"{m.shape[0]} {m.shape[1]} {m.nnz}"]
    lines += [f"{int(r)} {int(c)} {float(v)!r}" for r, c, v in zip(m.row, m.col, m.data)]
    Path(path).write_text("\n".join(lines) + "\n")
