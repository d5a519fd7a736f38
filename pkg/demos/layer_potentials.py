# Single and double layer potentials on a square-in-disk mesh.
# Every potential is one solve with the same factorized saddle matrix.
import numpy as np

from anisostokes.mesh import build_composite
from anisostokes.potentials import (PotentialContext, double_layer_operators, identity_suite,
                                    single_layer, single_layer_operators)
from anisostokes.tensor import INNER, OUTER, make_isotropic

mesh = build_composite(2, "square", 2.0, 0.25, 0.5, outer_shape="ball")
A = make_isotropic(2, {INNER: 1 / 3, OUTER: 1.0})
ctx = PotentialContext(A, mesh, "broken")
s = ctx.space
print("velocity dofs", s.n_free, "pressure dofs", s.n_pressure, "trace dofs", s.n_trace)

rng = np.random.default_rng(1)
psi = rng.standard_normal(s.n_trace)
sl = single_layer_operators(ctx, psi)
print("traction jump - psi:", np.abs(sl.t_plus - sl.t_minus - psi).max())

phi = rng.standard_normal(s.n_trace)
dl = double_layer_operators(ctx, phi)
print("trace jump + phi:", np.abs(dl.g_plus - dl.g_minus + phi).max())

# the normal density produces no velocity, only a pressure step
pair = single_layer(ctx, ctx.nu)
print("|V nu| =", np.abs(pair.u).max())
print("pressure inside / outside:", pair.p[s.pnode_region == INNER].mean(),
      pair.p[s.pnode_region == OUTER].mean())

for c in identity_suite(ctx, n_samples=5):
    print(f"{'ok ' if c.passed else 'BAD'} {c.name:60s} {c.value:.2e}")
