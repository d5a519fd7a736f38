# Ellipticity of viscosity tensors on trace-free symmetric matrices,
# and the ADN symbol check that goes with it.
import numpy as np

from anisostokes.tensor import (adjoint_tensor, adn_ellipticity_check, ellipticity_constant,
                                from_constant, from_regions, make_isotropic,
                                random_symmetric_tensor)

pts = np.random.default_rng(0).uniform(-1, 1, (10, 3))

# isotropic viscosity: the constant is 2 mu whatever lambda is
for lam in (0.0, 1.0, -0.5):
    rep = ellipticity_constant(make_isotropic(3, 0.7, lam), pts)
    print(f"mu=0.7 lam={lam:+.1f}  c_inv={rep.c_inv:.12f}")

# a random anisotropic pair of region tensors
rng = np.random.default_rng(5)
A = from_regions(random_symmetric_tensor(3, rng), random_symmetric_tensor(3, rng))
rep = ellipticity_constant(A, pts)
print("anisotropic c_inv", rep.c_inv, "c_A", rep.c_A())
print("adjoint has the same constant:", ellipticity_constant(adjoint_tensor(A), pts).c_inv)

adn = adn_ellipticity_check(A, pts, 1000)
print("ADN: smallest scaled |det|", adn.min_scaled_det, "failed", adn.n_failed, "of", adn.n_checked)

# zero viscosity is degenerate in every direction
zero = adn_ellipticity_check(from_constant(np.zeros((3, 3, 3, 3))), pts, 100)
print("zero tensor fails", zero.n_failed, "of", zero.n_checked)
