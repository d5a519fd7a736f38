# Exterior Dirichlet, Neumann and mixed problems, each solved two ways where possible.
import numpy as np

from anisostokes.bvp import (BVPData, solve_dirichlet, solve_dirichlet_by_potentials, solve_mixed,
                             solve_neumann_by_potentials)
from anisostokes.fem import h1_norm
from anisostokes.mesh import build_composite, tag_interface
from anisostokes.potentials import PotentialContext, project_nu, project_rigid_density
from anisostokes.tensor import OUTER, from_regions, random_symmetric_tensor

rng = np.random.default_rng(2)
A = from_regions(random_symmetric_tensor(2, rng), random_symmetric_tensor(2, rng))
mesh = build_composite(2, "square", 2.0, 0.25, 0.5, outer_shape="ball")
ctx = PotentialContext(A, mesh, "broken")
s = ctx.space

phi = project_nu(ctx, rng.standard_normal(s.n_trace))   # no net flux through the interface
data = BVPData("dirichlet", phi_D=phi)
a = solve_dirichlet(ctx, data)
b = solve_dirichlet(ctx, data, "harmonic")
c = solve_dirichlet_by_potentials(ctx, data)
ref = h1_norm(s, a.field.u, OUTER)
print("Dirichlet: lifting change", h1_norm(s, a.field.u - b.field.u, OUTER) / ref)
print("Dirichlet: single layer route", h1_norm(s, a.field.u - c.field.u, OUTER) / ref)

psi = project_rigid_density(ctx, rng.standard_normal(s.n_trace))
r = solve_neumann_by_potentials(ctx, psi)
print("Neumann: traction residual", r.report["boundary_residual"])

tagged = tag_interface(mesh, lambda c: c[:, 0] > 0)    # right half of the square is Neumann
mctx = PotentialContext(A, tagged, "broken")
m = solve_mixed(mctx, BVPData("mixed", phi_D=rng.standard_normal(s.n_trace),
                              psi_N=rng.standard_normal(s.n_trace)))
print("mixed:", {k: v for k, v in m.report.items()})
