"""Anisotropic Stokes and Navier-Stokes transmission problems on composite domains.

Layer potentials are built as Galerkin solutions of variational transmission
problems on a truncated domain, with Taylor-Hood finite elements.
"""

__version__ = "0.1.0"

from .tensor import CoeffTensor, make_isotropic, from_constant, from_regions  # noqa: E402,F401
from .mesh import CompositeMesh, build_composite, refine  # noqa: E402,F401
from .fem import MixedSpace, assemble  # noqa: E402,F401
from .potentials import PotentialContext  # noqa: E402,F401
