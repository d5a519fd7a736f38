"""Manufactured two-sided Stokes states with exact loads and tractions.

The stress is ``sigma_ia = a_ij^ab E_jb(u) - p delta_ia`` with region-wise
constant tensors, the load is ``f = div sigma`` and the divergence datum is
``g = div u``. Outer fields are multiplied by a bubble that vanishes on the
truncation boundary, so the state satisfies the homogeneous outer condition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import sympy

from . import expr
from .fem import MixedSpace, load_functional, pressure_functional, trace_functional
from .mesh import CompositeMesh
from .tensor import INNER, OUTER, CoeffTensor


def bubble(mesh: CompositeMesh, dim: int) -> sympy.Expr:
    """Polynomial vanishing on the truncation boundary, equal to 1 at the origin."""
    xs = expr.symbols(dim)
    R = sympy.nsimplify(mesh.R)
    if mesh.outer_shape == "ball":
        return 1 - sum(x ** 2 for x in xs) / R ** 2
    out = sympy.Integer(1)
    for x in xs:
        out *= 1 - x ** 2 / R ** 2
    return out


@dataclass
class _RegionState:
    u: list
    p: sympy.Expr
    a: np.ndarray


class Manufactured:
    """Exact state with per-region velocity/pressure expressions and constant tensors."""

    def __init__(self, dim: int, u_in: Sequence, u_out: Sequence, p_in, p_out,
                 tensor: CoeffTensor, mesh: CompositeMesh | None = None, apply_bubble: bool = True):
        self.dim = dim
        xs = expr.symbols(dim)
        b = bubble(mesh, dim) if (mesh is not None and apply_bubble) else sympy.Integer(1)
        uo = [c * b for c in expr.vector(u_out, dim)]
        self.regions = {
            INNER: _RegionState(expr.vector(u_in, dim), expr.parse(p_in, dim), tensor.region_value(INNER)),
            OUTER: _RegionState(uo, expr.parse(p_out, dim), tensor.region_value(OUTER)),
        }
        self._f = {}
        for r, st in self.regions.items():
            grad = [[sympy.diff(st.u[i], xs[a]) for a in range(dim)] for i in range(dim)]
            E = [[(grad[j][b_] + grad[b_][j]) / 2 for b_ in range(dim)] for j in range(dim)]
            sigma = [[sum(sympy.nsimplify(st.a[i, j, a, b_]) * E[j][b_]
                          for j in range(dim) for b_ in range(dim) if st.a[i, j, a, b_] != 0)
                      - (st.p if i == a else 0) for a in range(dim)] for i in range(dim)]
            load = [sum(sympy.diff(sigma[i][a], xs[a]) for a in range(dim)) for i in range(dim)]
            div = sum(grad[i][i] for i in range(dim))
            self._f[r] = {
                "u": expr.lambdify(st.u, dim),
                "grad": expr.lambdify(grad, dim),
                "p": expr.lambdify(st.p, dim),
                "sigma": expr.lambdify(sigma, dim),
                "load": expr.lambdify(load, dim),
                "div": expr.lambdify(div, dim),
            }

    def _eval(self, key: str, points, regions):
        points = np.asarray(points, dtype=float)
        regions = np.broadcast_to(np.asarray(regions), points.shape[:1])
        # region -1 marks shared nodes of a continuous pressure; both sides agree there
        regions = np.where(regions < 0, OUTER, regions)
        out = None
        for r in (INNER, OUTER):
            sel = regions == r
            if not np.any(sel):
                continue
            vals = self._f[r][key](points[sel])
            if out is None:
                out = np.zeros(points.shape[:1] + vals.shape[1:])
            out[sel] = vals
        if out is None:
            raise ValueError("no points with a known region")
        return out

    # evaluators with the ``func(points, regions)`` signature used by fem
    def velocity(self, points, regions):
        return self._eval("u", points, regions)

    def grad(self, points, regions):
        return self._eval("grad", points, regions)

    def pressure(self, points, regions):
        return self._eval("p", points, regions)

    def load(self, points, regions):
        return self._eval("load", points, regions)

    def divergence(self, points, regions):
        return self._eval("div", points, regions)

    def traction(self, points, normals, region):
        """Classical traction ``sigma nu`` from one side (``nu`` out of the inner region)."""
        s = self._eval("sigma", points, region)
        return np.einsum("mia,ma->mi", s, normals)

    # discrete data
    def trace_jump(self, space: MixedSpace) -> np.ndarray:
        pts = space.nodes[space.trace_nodes]
        return (self.velocity(pts, INNER) - self.velocity(pts, OUTER)).reshape(-1)

    def side_trace(self, space: MixedSpace, side: int) -> np.ndarray:
        return self.velocity(space.nodes[space.trace_nodes], side).reshape(-1)

    def traction_density(self, space: MixedSpace, side: int, facet_mask=None) -> np.ndarray:
        return trace_functional(space, lambda x, n: self.traction(x, n, side), degree=6,
                                facet_mask=facet_mask)

    def traction_jump(self, space: MixedSpace) -> np.ndarray:
        return self.traction_density(space, INNER) - self.traction_density(space, OUTER)

    def load_functional(self, space: MixedSpace, regions=None) -> np.ndarray:
        return load_functional(space, self.load, regions)

    def divergence_functional(self, space: MixedSpace, regions=None) -> np.ndarray:
        return pressure_functional(space, self.divergence, regions)


def default_state(tensor: CoeffTensor, mesh: CompositeMesh, continuous_pressure: bool = True) -> Manufactured:
    """A smooth state with jumps in trace and traction used by the convergence studies."""
    dim = mesh.dim
    if dim == 2:
        u_in = ["sin(y) + x*y", "cos(x) - x**2/2"]
        u_out = ["cos(x)*sin(y)", "x*y - sin(x)"]
    else:
        u_in = ["sin(y) + z", "cos(z) - x*y", "x**2 - sin(y)"]
        u_out = ["cos(x)*sin(y)", "x*z - sin(x)", "y - cos(z)"]
    p_out = "x*y + sin(x)" if dim == 2 else "x*y + sin(z)"
    p_in = p_out if continuous_pressure else p_out + " + 1 + x"
    return Manufactured(dim, u_in, u_out, p_in, p_out, tensor, mesh)
