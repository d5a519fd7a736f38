"""Simplex quadrature by collapsed (conical product) Gauss-Jacobi rules.

Rules are returned in barycentric coordinates with weights summing to one, so
an integral over a simplex is ``volume * sum(w * f(points))``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


def _gauss_jacobi01(k: int, a: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights on [0, 1] for the weight (1 - t)^a, weights summing to 1/(a+1)."""
    x, w = roots_jacobi(k, a, 0)
    t = 0.5 * (1.0 + x)
    return t, w / 2.0 ** (a + 1)


@lru_cache(maxsize=None)
def simplex_rule(dim: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points ``(nq, dim + 1)`` and weights ``(nq,)`` exact to ``degree``."""
    k = max(1, (degree + 2) // 2)
    if dim == 0:
        return np.ones((1, 1)), np.ones(1)
    if dim == 1:
        t, w = _gauss_jacobi01(k, 0)
        pts = np.stack([1.0 - t, t], axis=1)
        return pts, w / w.sum()
    if dim == 2:
        u, wu = _gauss_jacobi01(k, 1)
        v, wv = _gauss_jacobi01(k, 0)
        uu, vv = np.meshgrid(u, v, indexing="ij")
        x, y = uu.ravel(), (vv * (1.0 - uu)).ravel()
        w = np.outer(wu, wv).ravel()
        pts = np.stack([1.0 - x - y, x, y], axis=1)
        return pts, w / w.sum()
    if dim == 3:
        u, wu = _gauss_jacobi01(k, 2)
        v, wv = _gauss_jacobi01(k, 1)
        s, ws = _gauss_jacobi01(k, 0)
        uu, vv, ss = np.meshgrid(u, v, s, indexing="ij")
        x = uu.ravel()
        y = (vv * (1.0 - uu)).ravel()
        z = (ss * (1.0 - vv) * (1.0 - uu)).ravel()
        w = np.einsum("i,j,k->ijk", wu, wv, ws).ravel()
        pts = np.stack([1.0 - x - y - z, x, y, z], axis=1)
        return pts, w / w.sum()
    raise ValueError(f"unsupported simplex dimension {dim}")
