"""Viscosity coefficient tensors for the anisotropic Stokes operator.

A tensor is stored as a callable returning arrays indexed ``a[..., i, j, alpha, beta]``
for the coefficient ``a_ij^{alpha beta}``. The operator it defines acts as

    L(u, p)_i = d_alpha (a_ij^{alpha beta} E_{j beta}(u)) - d_i p

and the bilinear form is ``a(u, v) = <a_ij^{ab} E_jb(u), E_ia(v)>``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

INNER = 0
OUTER = 1
REGION_NAMES = {"inner": INNER, "outer": OUTER}

SYMMETRY_TOL = 1e-12

# evaluator(points, regions) -> array of shape (npts, n, n, n, n)
Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


class TensorError(ValueError):
    pass


@dataclass(frozen=True)
class CoeffTensor:
    """Coefficient tensor ``a_ij^{alpha beta}(x)``.

    Parameters
    ----------
    dim : int
        Space dimension, 2 or 3.
    evaluator : callable
        ``evaluator(points, regions)`` returns the coefficients at ``points``
        (shape ``(m, dim)``) with region tags ``regions`` (0 inner, 1 outer).
    label : str
        Free-form description used in reports.
    per_region : dict, optional
        Constant coefficient arrays keyed by region tag when the tensor is
        piecewise constant. Used for fast assembly and for reports.
    """

    dim: int
    evaluator: Evaluator = field(repr=False)
    label: str = ""
    per_region: Mapping[int, np.ndarray] | None = field(default=None, repr=False)

    def __call__(self, points: np.ndarray, regions: np.ndarray | None = None) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if regions is None:
            regions = np.zeros(len(points), dtype=int)
        regions = np.broadcast_to(np.asarray(regions, dtype=int), (len(points),))
        out = np.asarray(self.evaluator(points, regions), dtype=float)
        n = self.dim
        if out.shape != (len(points), n, n, n, n):
            raise TensorError(f"tensor evaluator returned shape {out.shape}")
        return out

    @property
    def is_piecewise_constant(self) -> bool:
        return self.per_region is not None

    def region_value(self, region: int) -> np.ndarray:
        if self.per_region is None:
            raise TensorError("tensor is not piecewise constant")
        return np.asarray(self.per_region[region])


def _kron(n: int) -> np.ndarray:
    return np.eye(n)


def isotropic_array(n: int, mu: float, lam: float) -> np.ndarray:
    """Constant isotropic coefficients ``lam d_ia d_jb + mu (d_aj d_bi + d_ab d_ij)``."""
    d = _kron(n)
    return (lam * np.einsum("ia,jb->ijab", d, d)
            + mu * (np.einsum("aj,bi->ijab", d, d) + np.einsum("ab,ij->ijab", d, d)))


def _constant_evaluator(values: Mapping[int, np.ndarray]) -> Evaluator:
    inner = np.asarray(values[INNER], dtype=float)
    outer = np.asarray(values[OUTER], dtype=float)

    def evaluate(points, regions):
        out = np.empty((len(points),) + inner.shape)
        out[regions == INNER] = inner
        out[regions != INNER] = outer
        return out

    return evaluate


def from_constant(values: np.ndarray, label: str = "constant") -> CoeffTensor:
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if values.shape != (n, n, n, n) or n not in (2, 3):
        raise TensorError(f"coefficient array must have shape (n,n,n,n) with n in (2,3), got {values.shape}")
    table = {INNER: values, OUTER: values}
    return CoeffTensor(n, _constant_evaluator(table), label, table)


def from_regions(inner: np.ndarray, outer: np.ndarray, label: str = "per_region") -> CoeffTensor:
    inner = np.asarray(inner, dtype=float)
    outer = np.asarray(outer, dtype=float)
    if inner.shape != outer.shape:
        raise TensorError("inner and outer coefficient arrays differ in shape")
    table = {INNER: inner, OUTER: outer}
    return CoeffTensor(inner.shape[0], _constant_evaluator(table), label, table)


def from_function(n: int, func: Callable[[np.ndarray, np.ndarray], np.ndarray],
                  label: str = "function") -> CoeffTensor:
    """Wrap a position-dependent callback ``func(points, regions)``."""
    return CoeffTensor(n, func, label, None)


def _check_mu(mu_values: np.ndarray, where: str) -> None:
    bad = ~(mu_values > 0)
    if np.any(bad):
        raise TensorError(f"non-positive shear viscosity mu={mu_values[bad][0]!r} {where}")


def make_isotropic(n: int, mu, lam=0.0, label: str | None = None,
                   validate: bool = True) -> CoeffTensor:
    """Isotropic tensor with shear viscosity ``mu`` and bulk-type coefficient ``lam``.

    ``mu`` and ``lam`` may be numbers, ``{"inner": .., "outer": ..}`` dicts, or
    callables of the point array returning one value per point.
    """
    if n not in (2, 3):
        raise TensorError(f"dimension must be 2 or 3, got {n}")
    label = label or "isotropic"

    def as_region_table(value):
        if isinstance(value, Mapping):
            return {REGION_NAMES.get(k, k): float(v) for k, v in value.items()}
        if callable(value):
            return None
        return {INNER: float(value), OUTER: float(value)}

    mu_tab, lam_tab = as_region_table(mu), as_region_table(lam)
    if mu_tab is not None and lam_tab is not None:
        if validate:
            _check_mu(np.array([mu_tab[INNER], mu_tab[OUTER]]), "in region table")
        inner = isotropic_array(n, mu_tab[INNER], lam_tab[INNER])
        outer = isotropic_array(n, mu_tab[OUTER], lam_tab[OUTER])
        return from_regions(inner, outer, label)

    d = _kron(n)
    e_lam = np.einsum("ia,jb->ijab", d, d)
    e_mu = np.einsum("aj,bi->ijab", d, d) + np.einsum("ab,ij->ijab", d, d)

    def pointwise(value, points, regions):
        if callable(value) and not isinstance(value, Mapping):
            return np.broadcast_to(np.asarray(value(points), dtype=float), (len(points),))
        tab = as_region_table(value)
        return np.where(regions == INNER, tab[INNER], tab[OUTER])

    def evaluate(points, regions):
        m = pointwise(mu, points, regions)
        if validate:
            _check_mu(m, "at sampled point")
        l = pointwise(lam, points, regions)
        return l[:, None, None, None, None] * e_lam + m[:, None, None, None, None] * e_mu

    return CoeffTensor(n, evaluate, label, None)


def symmetry_violation(values: np.ndarray) -> float:
    """Largest deviation from ``a_ij^{ab} = a_aj^{ib} = a_ib^{aj}`` over a batch."""
    values = np.asarray(values)
    swap_first = np.swapaxes(values, -4, -2)
    swap_second = np.swapaxes(values, -3, -1)
    return float(max(np.max(np.abs(values - swap_first), initial=0.0),
                     np.max(np.abs(values - swap_second), initial=0.0)))


def check_symmetry(A: CoeffTensor, sample_points, regions=None,
                   tol: float = SYMMETRY_TOL) -> tuple[bool, float]:
    """Check both index-swap identities at the sample points.

    With ``regions=None`` each point is sampled as inner and as outer.
    """
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    if len(pts) == 0:
        raise TensorError("no sample points")
    if regions is None:
        vals = np.concatenate([A(pts, np.full(len(pts), INNER)), A(pts, np.full(len(pts), OUTER))])
    else:
        vals = A(pts, regions)
    if not np.all(np.isfinite(vals)):
        raise TensorError("tensor has non-finite entries at sampled points")
    viol = symmetry_violation(vals)
    return viol <= tol, viol


def symmetrize(values: np.ndarray) -> np.ndarray:
    """Project an array onto the coefficient arrays with the two index-swap symmetries."""
    s1 = np.swapaxes(values, -4, -2)
    return 0.25 * (values + s1 + np.swapaxes(values, -3, -1) + np.swapaxes(s1, -3, -1))


def trace_free_basis(n: int) -> np.ndarray:
    """Orthonormal basis of symmetric trace-free ``n x n`` matrices.

    Off-diagonal pairs come first in lexicographic order, then the Helmert
    combinations of diagonal entries.
    """
    basis = []
    for i, j in itertools.combinations(range(n), 2):
        m = np.zeros((n, n))
        m[i, j] = m[j, i] = 1.0 / np.sqrt(2.0)
        basis.append(m)
    for k in range(1, n):
        m = np.zeros((n, n))
        m[np.arange(k), np.arange(k)] = 1.0
        m[k, k] = -float(k)
        basis.append(m / np.sqrt(k * (k + 1)))
    return np.array(basis)


def quadratic_form(values: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """``a_ij^{ab} xi_ia xi_jb`` for a single tensor and a batch of matrices."""
    return np.einsum("ijab,kia,kjb->k", values, xi, xi)


def form_gram(values: np.ndarray) -> np.ndarray:
    """Gram matrices of the quadratic form on the trace-free basis, one per point."""
    n = values.shape[-1]
    basis = trace_free_basis(n)
    return np.einsum("...ijab,pia,qjb->...pq", values, basis, basis)


@dataclass
class EllipticityReport:
    c_inv: float
    worst_point: np.ndarray
    worst_region: int
    worst_direction: np.ndarray
    elliptic: bool

    def c_A(self) -> float:
        return np.inf if self.c_inv <= 0 else 1.0 / self.c_inv


def ellipticity_constant(A: CoeffTensor, sample_points, regions=None) -> EllipticityReport:
    """Best constant ``c_inv`` with ``a xi:xi >= c_inv |xi|^2`` over sampled points.

    The form is restricted to symmetric trace-free matrices and the smallest
    eigenvalue of the symmetric part of its Gram matrix is minimized over the
    samples.
    """
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    if regions is None:
        pts_all = np.concatenate([pts, pts])
        regs = np.concatenate([np.full(len(pts), INNER), np.full(len(pts), OUTER)])
    else:
        pts_all = pts
        regs = np.broadcast_to(np.asarray(regions, dtype=int), (len(pts),))
    vals = A(pts_all, regs)
    ok, viol = (symmetry_violation(vals) <= SYMMETRY_TOL, symmetry_violation(vals))
    if not ok:
        raise TensorError(f"symmetry violated by {viol:.3e}; the ellipticity form is undefined")
    gram = form_gram(vals)
    gram = 0.5 * (gram + np.swapaxes(gram, -1, -2))
    eigval, eigvec = np.linalg.eigh(gram)
    k = int(np.argmin(eigval[:, 0]))
    basis = trace_free_basis(A.dim)
    direction = np.einsum("p,pij->ij", eigvec[k, :, 0], basis)
    c_inv = float(eigval[k, 0])
    return EllipticityReport(max(c_inv, 0.0) if c_inv > -1e-14 else c_inv,
                             pts_all[k], int(regs[k]), direction, c_inv > 0)


def adjoint_tensor(A: CoeffTensor) -> CoeffTensor:
    """Adjoint coefficients ``a*_ij^{ab} = a_ji^{ba}``."""

    def swap(values):
        return np.ascontiguousarray(np.transpose(values, (0, 2, 1, 4, 3)))

    def evaluate(points, regions):
        return swap(A(points, regions))

    per_region = None
    if A.per_region is not None:
        per_region = {k: np.transpose(v, (1, 0, 3, 2)).copy() for k, v in A.per_region.items()}
    return CoeffTensor(A.dim, evaluate, f"adjoint({A.label})", per_region)


def linf_norm(A: CoeffTensor, sample_points) -> float:
    """Entrywise maximum ``max |a_ij^{ab}|`` over sampled points and both regions."""
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    vals = np.concatenate([A(pts, np.full(len(pts), INNER)), A(pts, np.full(len(pts), OUTER))])
    return float(np.max(np.abs(vals)))


@dataclass
class ADNSymbol:
    matrix: np.ndarray
    point: np.ndarray
    direction: np.ndarray


def adn_symbol(A: CoeffTensor, x, xi, region: int = INNER) -> ADNSymbol:
    """Modified principal symbol ``[xi_a a_lj^{ab} xi_b, -xi_l; -xi_j, 0]``."""
    xi = np.asarray(xi, dtype=float)
    if not np.any(xi):
        raise TensorError("direction xi must be nonzero")
    n = A.dim
    x = np.asarray(x, dtype=float).reshape(1, n)
    vals = A(x, np.array([region]))[0]
    m = np.zeros((n + 1, n + 1))
    m[:n, :n] = np.einsum("a,ljab,b->lj", xi, vals, xi)
    m[:n, n] = -xi
    m[n, :n] = -xi
    return ADNSymbol(m, x[0], xi)


@dataclass
class ADNReport:
    passed: bool
    min_scaled_det: float
    n_checked: int
    n_failed: int
    worst_point: np.ndarray
    worst_direction: np.ndarray


def adn_ellipticity_check(A: CoeffTensor, sample_points, n_directions: int = 1000,
                          seed: int = 0, threshold: float = 1e-10,
                          regions=None) -> ADNReport:
    """Check that the modified symbol is nonsingular for random unit directions.

    The determinant is scaled by ``max(||A||, tiny)^(n-1)`` so that the test is
    invariant under multiplying the tensor by a constant.
    """
    if n_directions < 1:
        raise TensorError("n_directions must be positive")
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    if regions is None:
        regions = np.full(len(pts), INNER)
    regions = np.broadcast_to(np.asarray(regions, dtype=int), (len(pts),))
    rng = np.random.default_rng(seed)
    n = A.dim
    dirs = rng.standard_normal((n_directions, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    vals = A(pts, regions)
    worst = np.inf
    worst_at = (pts[0], dirs[0])
    failed = 0
    for p, v in zip(pts, vals):
        scale = max(float(np.max(np.abs(v))) ** (n - 1), np.finfo(float).tiny)
        blocks = np.einsum("ka,ljab,kb->klj", dirs, v, dirs)
        mats = np.zeros((n_directions, n + 1, n + 1))
        mats[:, :n, :n] = blocks
        mats[:, :n, n] = -dirs
        mats[:, n, :n] = -dirs
        dets = np.abs(np.linalg.det(mats)) / scale
        failed += int(np.sum(dets <= threshold))
        k = int(np.argmin(dets))
        if dets[k] < worst:
            worst = float(dets[k])
            worst_at = (p, dirs[k])
    return ADNReport(failed == 0, worst, len(pts) * n_directions, failed, worst_at[0], worst_at[1])


def random_symmetric_tensor(n: int, rng: np.random.Generator, shift: float = 1.0,
                            self_adjoint: bool = False) -> np.ndarray:
    """Random coefficient array with the index-swap symmetries.

    An isotropic part ``shift`` keeps the result elliptic for moderate noise.
    """
    noise = symmetrize(rng.standard_normal((n, n, n, n)) * 0.3)
    if self_adjoint:
        noise = 0.5 * (noise + np.transpose(noise, (1, 0, 3, 2)))
    return isotropic_array(n, shift, 0.0) + noise
