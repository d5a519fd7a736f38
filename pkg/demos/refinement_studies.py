# Convergence, inf-sup and traction studies on a coarse mesh (a few seconds each).
import numpy as np

from anisostokes.mesh import build_composite
from anisostokes.studies import (convergence_study, infsup_study, reconstruction_study,
                                 traction_study)
from anisostokes.tensor import from_regions, random_symmetric_tensor

rng = np.random.default_rng(3)
A = from_regions(random_symmetric_tensor(2, rng), random_symmetric_tensor(2, rng))
mesh = build_composite(2, "square", 2.0, 0.5, 0.5, outer_shape="ball")


def show(name, h, errors, rates):
    print(name)
    for row in zip(h, errors, rates):
        print("   h=%-7g error=%.3e rate=%s" % (row[0], row[1], "-" if row[2] is None else f"{row[2]:.2f}"))


for kind in ("transmission", "dirichlet", "mixed"):
    t = convergence_study(kind, A, mesh, 3)
    show(f"{kind} velocity (H1)", t.h, t.u_errors, t.u_rates)

st = traction_study(A, mesh, 3)
show("traction (trace dual norm)", st.h, st.errors, st.rates)

rs = reconstruction_study(A, mesh, 3)
show("Green reconstruction (H1)", rs.h, rs.errors, rs.rates)

inf = infsup_study(A, mesh, 3)
print("beta_h", inf.beta, "dense check", inf.dense_agreement)
