"""Interface-conforming simplicial meshes of a truncated composite domain.

The computational domain is a box or ball of radius ``R`` containing an inner
square/cube or disk/ball of radius ``r0``. Cells carry a region tag (inner or
outer), facets on the inner shape's boundary are interface facets, and facets
on the outer boundary are tagged Dirichlet or Neumann.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .tensor import INNER, OUTER

DIRICHLET = 0
NEUMANN = 1
TAG_NAMES = {DIRICHLET: "D", NEUMANN: "N"}
TAG_CODES = {"D": DIRICHLET, "N": NEUMANN}


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class CompositeMesh:
    """Simplicial mesh of the composite domain.

    Attributes
    ----------
    vertices : (nv, dim) array
    cells : (nc, dim + 1) int array, positively oriented
    regions : (nc,) int array, ``INNER`` or ``OUTER``
    interface_facets : (nfi, dim) int array of vertex ids on the interface
    interface_cells : (nfi, 2) int array, the inner and outer neighbour cell
    interface_tags : (nfi,) int array, Dirichlet/Neumann role of the facet
        when the interface carries mixed boundary conditions
    outer_facets : (nfo, dim) int array on the truncation boundary
    outer_tags : (nfo,) int array, ``DIRICHLET`` or ``NEUMANN``
    R, r0 : truncation radius and inner radius (half width for square/cube)
    """

    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    regions: np.ndarray
    interface_facets: np.ndarray
    interface_cells: np.ndarray
    interface_tags: np.ndarray
    outer_facets: np.ndarray
    outer_tags: np.ndarray
    R: float
    r0: float
    inner_shape: str = "square"
    outer_shape: str = "box"
    h: float = float("nan")
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def nv(self) -> int:
        return len(self.vertices)

    @property
    def nc(self) -> int:
        return len(self.cells)

    def cell_volumes(self) -> np.ndarray:
        return simplex_volumes(self.vertices[self.cells])

    def region_measure(self, region: int) -> float:
        return float(np.sum(self.cell_volumes()[self.regions == region]))

    def interface_measures(self) -> np.ndarray:
        return facet_measures(self.vertices[self.interface_facets])

    def outer_measures(self) -> np.ndarray:
        return facet_measures(self.vertices[self.outer_facets])

    def interface_normals(self) -> np.ndarray:
        """Unit normals of all interface facets, pointing out of the inner region."""
        pts = self.vertices[self.interface_facets]
        nrm = facet_normals(pts)
        inner_cells = self.cells[self.interface_cells[:, 0]]
        centroid = self.vertices[inner_cells].mean(axis=1)
        flip = np.einsum("ij,ij->i", nrm, pts.mean(axis=1) - centroid) < 0
        nrm[flip] *= -1
        return nrm

    def outer_normals(self) -> np.ndarray:
        """Unit outward normals of the truncation boundary facets."""
        pts = self.vertices[self.outer_facets]
        nrm = facet_normals(pts)
        flip = np.einsum("ij,ij->i", nrm, pts.mean(axis=1)) < 0
        nrm[flip] *= -1
        return nrm

    def interface_vertices(self) -> np.ndarray:
        return np.unique(self.interface_facets)

    def outer_vertices(self) -> np.ndarray:
        return np.unique(self.outer_facets)

    def collar_cells(self) -> np.ndarray:
        """Cells touching the truncation boundary (used for the pressure gauge)."""
        on_bnd = np.zeros(self.nv, dtype=bool)
        on_bnd[self.outer_facets] = True
        return np.flatnonzero(on_bnd[self.cells].any(axis=1))


def simplex_volumes(pts: np.ndarray) -> np.ndarray:
    """Unsigned volumes of simplices given as ``(m, dim + 1, dim)`` coordinates."""
    d = pts.shape[-1]
    jac = pts[:, 1:, :] - pts[:, :1, :]
    return np.abs(np.linalg.det(jac)) / _factorial(d)


def signed_volumes(pts: np.ndarray) -> np.ndarray:
    d = pts.shape[-1]
    jac = pts[:, 1:, :] - pts[:, :1, :]
    return np.linalg.det(jac) / _factorial(d)


def _factorial(d: int) -> int:
    return {1: 1, 2: 2, 3: 6}[d]


def facet_measures(pts: np.ndarray) -> np.ndarray:
    """Length (2D) or area (3D) of facets given as ``(m, dim, dim)`` coordinates."""
    d = pts.shape[-1]
    if d == 2:
        return np.linalg.norm(pts[:, 1] - pts[:, 0], axis=1)
    return 0.5 * np.linalg.norm(np.cross(pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 0]), axis=1)


def facet_normals(pts: np.ndarray) -> np.ndarray:
    """Unit normals of facets (orientation arbitrary)."""
    d = pts.shape[-1]
    if d == 2:
        t = pts[:, 1] - pts[:, 0]
        nrm = np.stack([t[:, 1], -t[:, 0]], axis=1)
    else:
        nrm = np.cross(pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 0])
    return nrm / np.linalg.norm(nrm, axis=1, keepdims=True)


def grid_coordinates(R: float, h: float, r0: float, uniform_radius: float | None = None,
                     growth: float = 1.5) -> np.ndarray:
    """Symmetric 1D node coordinates on ``[-R, R]``.

    Spacing is ``h`` on ``[-a, a]`` with ``a = uniform_radius`` (default ``R``)
    and grows geometrically by ``growth`` beyond ``a``. Both ``r0`` and ``a``
    must be integer multiples of ``h``.
    """
    a = R if uniform_radius is None else min(uniform_radius, R)
    for name, val in (("r0", r0), ("uniform radius", a)):
        k = val / h
        if k < 1 - 1e-9 or abs(k - round(k)) > 1e-9:
            raise MeshError(f"h={h} does not resolve {name}={val}: need an integer multiple of h")
    if a < R:
        steps = []
        total, s = 0.0, h
        while total < R - a - 1e-12:
            s *= growth
            steps.append(s)
            total += s
        steps = np.array(steps) * (R - a) / total
        outer = a + np.cumsum(steps)
        outer[-1] = R
    else:
        outer = np.array([])
    m = int(round(a / h))
    inner = np.linspace(0.0, a, m + 1)
    inner[int(round(r0 / h))] = r0
    pos = np.concatenate([inner, outer])
    return np.concatenate([-pos[:0:-1], pos])


def _kuhn_local(dim: int) -> list[list[tuple[int, ...]]]:
    """Kuhn simplices of the unit cube as lists of corner bit tuples."""
    simplices = []
    for perm in itertools.permutations(range(dim)):
        corner = [0] * dim
        verts = [tuple(corner)]
        for ax in perm:
            corner[ax] = 1
            verts.append(tuple(corner))
        simplices.append(verts)
    return simplices


def _structured_cells(coords: np.ndarray, dim: int) -> np.ndarray:
    """Split the tensor grid into simplices, mirrored per orthant.

    The Kuhn pattern is reflected in every coordinate half-space so the
    triangulation is symmetric about the origin and every boundary corner cell
    is cut through its corner.
    """
    m = len(coords) - 1
    centres = 0.5 * (coords[:-1] + coords[1:])
    flip = centres < 0
    shape = (m + 1,) * dim
    idx = np.indices((m,) * dim).reshape(dim, -1).T
    cells = []
    for local in _kuhn_local(dim):
        verts = []
        for bits in local:
            gi = []
            for ax in range(dim):
                b = np.full(len(idx), bits[ax])
                b = np.where(flip[idx[:, ax]], 1 - b, b)
                gi.append(idx[:, ax] + b)
            verts.append(np.ravel_multi_index(tuple(gi), shape))
        cells.append(np.stack(verts, axis=1))
    return np.concatenate(cells)


def _orient(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    vol = signed_volumes(vertices[cells])
    if np.any(np.abs(vol) < 1e-14 * np.max(np.abs(vol))):
        bad = int(np.argmin(np.abs(vol)))
        raise MeshError(f"degenerate cell {bad}")
    cells = cells.copy()
    neg = vol < 0
    cells[neg, 0], cells[neg, 1] = cells[neg, 1].copy(), cells[neg, 0].copy()
    return cells


def _cell_facets(cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All facets (sorted vertex ids) with the owning cell index."""
    k = cells.shape[1]
    faces, owner = [], []
    for drop in range(k):
        keep = [c for c in range(k) if c != drop]
        faces.append(np.sort(cells[:, keep], axis=1))
        owner.append(np.arange(len(cells)))
    return np.concatenate(faces), np.concatenate(owner)


def classify_facets(cells: np.ndarray, regions: np.ndarray):
    """Return (interface facets, their (inner, outer) cells, boundary facets)."""
    faces, owner = _cell_facets(cells)
    uniq, inv, counts = np.unique(faces, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    boundary = uniq[counts == 1]
    order = np.argsort(inv, kind="stable")
    inv_sorted = inv[order]
    first = np.searchsorted(inv_sorted, np.arange(len(uniq)))
    shared = np.flatnonzero(counts == 2)
    c0 = owner[order[first[shared]]]
    c1 = owner[order[first[shared] + 1]]
    mixed = regions[c0] != regions[c1]
    c0, c1 = c0[mixed], c1[mixed]
    inner = np.where(regions[c0] == INNER, c0, c1)
    outer = np.where(regions[c0] == INNER, c1, c0)
    return uniq[shared[mixed]], np.stack([inner, outer], axis=1), boundary


def _ease(t: np.ndarray) -> np.ndarray:
    return 1.0 - (1.0 - t) ** 2


def _round_map(x: np.ndarray, start: float, stop: float) -> np.ndarray:
    """Blend square level sets of the max norm into circles between two radii."""
    s = np.max(np.abs(x), axis=1)
    e = np.linalg.norm(x, axis=1)
    t = np.clip((s - start) / (stop - start), 0.0, 1.0)
    w = _ease(t)
    ratio = np.divide(s, e, out=np.ones_like(s), where=e > 0)
    return x * (1.0 - w + w * ratio)[:, None]


def build_composite(dim: int, inner_shape: str = "square", R: float = 4.0, h: float = 0.25,
                    r0: float = 0.5, outer_shape: str = "box",
                    uniform_radius: float | None = None, growth: float = 1.5,
                    blend_start: float | None = None) -> CompositeMesh:
    """Build a structured composite mesh.

    Parameters
    ----------
    dim : 2 or 3
    inner_shape : "square"/"cube" or "disk"/"ball"
    R : truncation radius (half width of the box, or radius of the ball)
    h : mesh size at the interface
    r0 : inner half width (square/cube) or radius (disk/ball)
    outer_shape : "box" or "ball"
    uniform_radius : keep spacing ``h`` up to this max-norm radius and grade beyond
    growth : geometric growth factor of the graded spacing
    blend_start : max-norm radius where the outer box starts bending into a ball
    """
    if dim not in (2, 3):
        raise MeshError(f"dimension must be 2 or 3, got {dim}")
    inner_shape = {"cube": "square", "ball": "disk"}.get(inner_shape, inner_shape)
    if inner_shape not in ("square", "disk"):
        raise MeshError(f"unknown inner shape {inner_shape!r}")
    if outer_shape not in ("box", "ball"):
        raise MeshError(f"unknown outer shape {outer_shape!r}")
    if R <= r0:
        raise MeshError(f"truncation radius R={R} must exceed the inner radius r0={r0}")
    if h > r0 + 1e-12:
        raise MeshError(f"h={h} is too large to resolve the interface of radius {r0}")
    coords = grid_coordinates(R, h, r0, uniform_radius, growth)
    m = len(coords)
    grids = np.meshgrid(*([coords] * dim), indexing="ij")
    vertices = np.stack([g.ravel() for g in grids], axis=1)
    cells = _structured_cells(coords, dim)
    centres = vertices[cells].mean(axis=1)
    regions = np.where(np.max(np.abs(centres), axis=1) < r0, INNER, OUTER)

    if inner_shape == "disk":
        stop = min(2.0 * r0, 0.5 * (r0 + R))
        vertices = _map_inner_disk(vertices, r0, stop)
    if outer_shape == "ball":
        start = blend_start if blend_start is not None else 0.4 * R
        if start <= r0:
            raise MeshError("ball blending must start outside the inner shape")
        vertices = _round_map(vertices, start, R)
    cells = _orient(vertices, cells)
    iface, iface_cells, bnd = classify_facets(cells, regions)
    mesh = CompositeMesh(
        dim=dim, vertices=vertices, cells=cells, regions=regions,
        interface_facets=iface, interface_cells=iface_cells,
        interface_tags=np.full(len(iface), DIRICHLET),
        outer_facets=bnd, outer_tags=np.full(len(bnd), DIRICHLET),
        R=float(R), r0=float(r0), inner_shape=inner_shape, outer_shape=outer_shape,
        h=float(h), meta={"grid_size": m},
    )
    return mesh


def _map_inner_disk(x: np.ndarray, r0: float, stop: float) -> np.ndarray:
    """Map the inner square onto the disk of radius r0, fading out by ``stop``."""
    s = np.max(np.abs(x), axis=1)
    e = np.linalg.norm(x, axis=1)
    ratio = np.divide(s, e, out=np.ones_like(s), where=e > 0)
    w = np.where(s <= r0, 1.0, np.clip((stop - s) / (stop - r0), 0.0, 1.0))
    return x * (1.0 - w + w * ratio)[:, None]


def tag_outer(mesh: CompositeMesh, neumann) -> CompositeMesh:
    """Retag outer facets; ``neumann(centroids)`` returns True where Neumann."""
    cen = mesh.vertices[mesh.outer_facets].mean(axis=1)
    tags = np.where(np.asarray(neumann(cen), dtype=bool), NEUMANN, DIRICHLET)
    return replace(mesh, outer_tags=tags)


def tag_interface(mesh: CompositeMesh, neumann) -> CompositeMesh:
    """Split the interface into Dirichlet and Neumann parts by facet centroid."""
    cen = mesh.vertices[mesh.interface_facets].mean(axis=1)
    tags = np.where(np.asarray(neumann(cen), dtype=bool), NEUMANN, DIRICHLET)
    return replace(mesh, interface_tags=tags)


def _midpoints(cells: np.ndarray, nv: int):
    """Unique edges of the cells and a lookup from vertex pair to new vertex id."""
    k = cells.shape[1]
    pairs = np.concatenate([np.sort(cells[:, [a, b]], axis=1)
                            for a, b in itertools.combinations(range(k), 2)])
    edges = np.unique(pairs, axis=0)
    lookup = {(int(a), int(b)): nv + i for i, (a, b) in enumerate(edges)}
    return edges, lookup


def _mid(lookup, a, b):
    a, b = int(a), int(b)
    return lookup[(a, b) if a < b else (b, a)]


def _refine_facets(facets: np.ndarray, lookup, dim: int) -> np.ndarray:
    out = []
    for f in facets:
        if dim == 2:
            a, b = f
            m = _mid(lookup, a, b)
            out += [(a, m), (m, b)]
        else:
            a, b, c = f
            ab, bc, ca = _mid(lookup, a, b), _mid(lookup, b, c), _mid(lookup, c, a)
            out += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    return np.sort(np.array(out, dtype=int).reshape(-1, dim), axis=1)


def _refine_cells(cells: np.ndarray, verts: np.ndarray, lookup, dim: int) -> np.ndarray:
    out = []
    if dim == 2:
        for a, b, c in cells:
            ab, bc, ca = _mid(lookup, a, b), _mid(lookup, b, c), _mid(lookup, c, a)
            out += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        return np.array(out, dtype=int)
    for x0, x1, x2, x3 in cells:
        m = {}
        for i, j in itertools.combinations(range(4), 2):
            m[(i, j)] = _mid(lookup, (x0, x1, x2, x3)[i], (x0, x1, x2, x3)[j])
        out += [(x0, m[0, 1], m[0, 2], m[0, 3]), (m[0, 1], x1, m[1, 2], m[1, 3]),
                (m[0, 2], m[1, 2], x2, m[2, 3]), (m[0, 3], m[1, 3], m[2, 3], x3)]
        pairs = [(m[0, 1], m[2, 3]), (m[0, 2], m[1, 3]), (m[0, 3], m[1, 2])]
        lengths = [np.linalg.norm(verts[p] - verts[q]) for p, q in pairs]
        k = int(np.argmin(lengths))
        p, q = pairs[k]
        (a, a2), (b, b2) = [pairs[i] for i in range(3) if i != k]
        out += [(p, q, a, b), (p, q, b, a2), (p, q, a2, b2), (p, q, b2, a)]
    return np.array(out, dtype=int)


def refine(mesh: CompositeMesh) -> CompositeMesh:
    """Uniform red refinement preserving region and facet tags.

    New vertices on a curved boundary (ball outer shape, disk inner shape) are
    moved onto the curve so the geometry improves under refinement.
    """
    dim = mesh.dim
    edges, lookup = _midpoints(mesh.cells, mesh.nv)
    verts = np.concatenate([mesh.vertices, mesh.vertices[edges].mean(axis=1)])
    cells = _refine_cells(mesh.cells, verts, lookup, dim)
    regions = np.repeat(mesh.regions, 2 ** dim)
    iface = _refine_facets(mesh.interface_facets, lookup, dim)
    itags = np.repeat(mesh.interface_tags, 2 ** (dim - 1))
    outer = _refine_facets(mesh.outer_facets, lookup, dim)
    otags = np.repeat(mesh.outer_tags, 2 ** (dim - 1))
    if mesh.outer_shape == "ball":
        new = np.unique(outer)
        new = new[new >= mesh.nv]
        verts[new] *= (mesh.R / np.linalg.norm(verts[new], axis=1))[:, None]
    if mesh.inner_shape == "disk":
        new = np.unique(iface)
        new = new[new >= mesh.nv]
        verts[new] *= (mesh.r0 / np.linalg.norm(verts[new], axis=1))[:, None]
    cells = _orient(verts, cells)
    found, iface_cells, bnd = classify_facets(cells, regions)
    iface, itags = _match_facets(found, iface, itags)
    outer, otags = _match_facets(bnd, outer, otags)
    return CompositeMesh(dim, verts, cells, regions, iface, iface_cells, itags, outer, otags,
                         mesh.R, mesh.r0, mesh.inner_shape, mesh.outer_shape, mesh.h / 2,
                         dict(mesh.meta, refined=mesh.meta.get("refined", 0) + 1))


def _match_facets(found: np.ndarray, children: np.ndarray, tags: np.ndarray):
    """Order child tags to match the classified facet list."""
    key = {tuple(f): t for f, t in zip(children, tags)}
    if len(key) != len(found) or any(tuple(f) not in key for f in found):
        raise MeshError("refined facets do not match the refined cells")
    return found, np.array([key[tuple(f)] for f in found], dtype=int)


@dataclass(frozen=True)
class RigidMotionBasis:
    """Rigid motions ``b + B x`` with skew ``B``; stored as (offset, matrix) pairs."""

    dim: int
    offsets: np.ndarray
    matrices: np.ndarray

    def __len__(self) -> int:
        return len(self.offsets)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Values with shape ``(len(basis), npts, dim)``."""
        points = np.atleast_2d(points)
        return self.offsets[:, None, :] + np.einsum("kij,pj->kpi", self.matrices, points)

    def gradients(self) -> np.ndarray:
        return self.matrices


def rigid_motion_basis(dim: int) -> RigidMotionBasis:
    """Translations followed by infinitesimal rotations in the coordinate planes."""
    if dim not in (2, 3):
        raise MeshError(f"dimension must be 2 or 3, got {dim}")
    offsets, mats = [], []
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = 1.0
        offsets.append(e)
        mats.append(np.zeros((dim, dim)))
    for i, j in itertools.combinations(range(dim), 2):
        b = np.zeros((dim, dim))
        b[i, j], b[j, i] = -1.0, 1.0
        offsets.append(np.zeros(dim))
        mats.append(b)
    return RigidMotionBasis(dim, np.array(offsets), np.array(mats))


def write_amesh(mesh: CompositeMesh, path) -> None:
    """Write the ``amesh 1`` text format."""
    lines = [f"amesh 1 dim {mesh.dim} R {mesh.R!r} r0 {mesh.r0!r} h {mesh.h!r} "
             f"inner {mesh.inner_shape} outer {mesh.outer_shape}",
             f"{mesh.nv} {mesh.nc} {len(mesh.interface_facets)} {len(mesh.outer_facets)}"]
    lines += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    lines += [" ".join(str(int(i)) for i in c) + f" {'inner' if r == INNER else 'outer'}"
              for c, r in zip(mesh.cells, mesh.regions)]
    lines += [" ".join(str(int(i)) for i in f) + f" interface {TAG_NAMES[int(t)]}"
              for f, t in zip(mesh.interface_facets, mesh.interface_tags)]
    lines += [" ".join(str(int(i)) for i in f) + f" outer {TAG_NAMES[int(t)]}"
              for f, t in zip(mesh.outer_facets, mesh.outer_tags)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_amesh(path) -> CompositeMesh:
    """Read the ``amesh 1`` text format and rebuild the facet adjacency."""
    text = Path(path).read_text().split("\n")
    head = text[0].split()
    if head[:2] != ["amesh", "1"]:
        raise MeshError(f"{path}: not an 'amesh 1' file")
    meta = dict(zip(head[2::2], head[3::2]))
    nv, nc, nfi, nfo = (int(t) for t in text[1].split())
    dim = int(meta.get("dim", 0)) or len(text[2].split())
    pos = 2
    vertices = np.array([[float(t) for t in text[pos + k].split()] for k in range(nv)])
    pos += nv
    cells, regions = [], []
    for k in range(nc):
        parts = text[pos + k].split()
        cells.append([int(t) for t in parts[:dim + 1]])
        regions.append(INNER if parts[dim + 1] == "inner" else OUTER)
    pos += nc
    facets = {"interface": ([], []), "outer": ([], [])}
    for k in range(nfi + nfo):
        parts = text[pos + k].split()
        ids, kind, tag = parts[:dim], parts[dim], parts[dim + 1]
        facets[kind][0].append(sorted(int(t) for t in ids))
        facets[kind][1].append(TAG_CODES[tag])
    cells = _orient(vertices, np.array(cells, dtype=int))
    regions = np.array(regions, dtype=int)
    found, iface_cells, bnd = classify_facets(cells, regions)
    iface, itags = _match_facets(found, np.array(facets["interface"][0], dtype=int).reshape(-1, dim),
                                 np.array(facets["interface"][1], dtype=int))
    outer, otags = _match_facets(bnd, np.array(facets["outer"][0], dtype=int).reshape(-1, dim),
                                 np.array(facets["outer"][1], dtype=int))
    return CompositeMesh(dim, vertices, cells, regions, iface, iface_cells, itags, outer, otags,
                         float(meta.get("R", "nan")), float(meta.get("r0", "nan")),
                         meta.get("inner", "square"), meta.get("outer", "box"),
                         float(meta.get("h", "nan")))
