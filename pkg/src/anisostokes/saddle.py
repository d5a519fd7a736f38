"""Mixed (Babuska-Brezzi) systems: direct solves and discrete stability constants.

A saddle problem is

    A u + B^T p = f
    B u         = g

on the constrained velocity space, with the pressure constant fixed by one
Lagrange multiplier row ``c^T p = 0``. The multiplier also absorbs any
incompatibility of ``g`` with the constant pressure mode; its value is
reported so callers can reject incompatible data.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import AssembledForms


PIVOT_TOL = 1e-13


class SaddleError(RuntimeError):
    pass


def bordered_matrix(A: sp.spmatrix, B: sp.spmatrix, c: np.ndarray | None) -> sp.csc_matrix:
    """``[[A, B^T, 0], [B, 0, c], [0, c^T, 0]]`` (last row/column only with a gauge)."""
    if c is None:
        return sp.bmat([[A, B.T], [B, None]], format="csc")
    col = sp.csr_matrix(np.asarray(c, dtype=float).reshape(-1, 1))
    return sp.bmat([[A, B.T, None], [B, None, col], [None, col.T, None]], format="csc")


class SaddleOperator:
    """Factorized bordered saddle matrix, reusable for many right-hand sides."""

    def __init__(self, A: sp.spmatrix, B: sp.spmatrix, gauge: np.ndarray | None):
        self.A = sp.csr_matrix(A)
        self.B = sp.csr_matrix(B)
        self.gauge = None if gauge is None else np.asarray(gauge, dtype=float)
        self.n = self.A.shape[0]
        self.m = self.B.shape[0]
        K = bordered_matrix(self.A, self.B, self.gauge)
        try:
            self._lu = spla.splu(K, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SaddleError(f"saddle matrix is singular: {exc}; "
                              f"{describe_null_pressure(self.B, self.gauge)}") from exc
        piv = np.abs(self._lu.U.diagonal())
        if piv.min() <= PIVOT_TOL * piv.max():
            raise SaddleError(f"saddle matrix is numerically singular (pivot ratio "
                              f"{piv.min() / piv.max():.1e}); "
                              f"{describe_null_pressure(self.B, self.gauge)}")
        self.K = K

    def solve(self, f: np.ndarray, g: np.ndarray | None = None, transpose: bool = False):
        """Return ``(u, p, multiplier)``; several right-hand sides may be stacked as columns."""
        f = np.asarray(f, dtype=float)
        cols = f.ndim == 2
        f2 = f if cols else f[:, None]
        if g is None:
            g2 = np.zeros((self.m, f2.shape[1]))
        else:
            g = np.asarray(g, dtype=float)
            g2 = g if g.ndim == 2 else g[:, None]
        extra = 0 if self.gauge is None else 1
        rhs = np.vstack([f2, g2, np.zeros((extra, f2.shape[1]))])
        x = self._lu.solve(rhs, trans="T" if transpose else "N")
        if not np.all(np.isfinite(x)):
            raise SaddleError("non-finite solution; the saddle matrix is numerically singular; "
                              + describe_null_pressure(self.B, self.gauge))
        u, p = x[:self.n], x[self.n:self.n + self.m]
        lam = x[self.n + self.m:] if extra else np.zeros((0, f2.shape[1]))
        if not cols:
            return u[:, 0], p[:, 0], (lam[0, 0] if extra else 0.0)
        return u, p, (lam[0] if extra else np.zeros(f2.shape[1]))


def near_null_pressure(B: sp.spmatrix, gauge: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Unit pressure vector ``q`` (orthogonal to the gauge) minimizing ``|B^T q|``."""
    Bd = sp.csr_matrix(B).toarray()
    m = Bd.shape[0]
    if gauge is not None:
        basis = sla.null_space(np.asarray(gauge, dtype=float).reshape(1, -1))
    else:
        basis = np.eye(m)
    Bq = Bd.T @ basis
    sv, vecs = np.linalg.eigh(Bq.T @ Bq)
    q = basis @ vecs[:, 0]
    return q / np.linalg.norm(q), float(np.sqrt(max(sv[0], 0.0)))


def describe_null_pressure(B: sp.spmatrix, gauge: np.ndarray | None = None) -> str:
    """Name the pressure mode responsible for a singular saddle system."""
    if B.shape[0] > 4000:
        return "pressure system too large for a null-mode diagnosis"
    q, sigma = near_null_pressure(B, gauge)
    ones = np.ones_like(q) / np.sqrt(len(q))
    align = abs(q @ ones)
    if align > 1 - 1e-6:
        kind = "the constant pressure"
    else:
        vals = np.round(q, 8)
        levels = np.unique(vals)
        if len(levels) <= 3:
            kind = f"a piecewise constant pressure taking values {levels.tolist()}"
        else:
            kind = f"a pressure mode concentrated at node {int(np.argmax(np.abs(q)))}"
    return f"near-null mode is {kind} (|B^T q| = {sigma:.2e})"


@dataclass
class SaddleProblem:
    A: sp.spmatrix
    B: sp.spmatrix
    rhs_f: np.ndarray
    rhs_g: np.ndarray
    gauge: np.ndarray | None = None


@dataclass
class SaddleSolution:
    u: np.ndarray
    p: np.ndarray
    multiplier: float
    residual_f: float
    residual_g: float
    constants: dict = field(default_factory=dict)


def solve_saddle(problem: SaddleProblem, rtol: float = 1e-10,
                 operator: SaddleOperator | None = None) -> SaddleSolution:
    """Solve a saddle problem directly and check both block residuals."""
    op = operator or SaddleOperator(problem.A, problem.B, problem.gauge)
    u, p, lam = op.solve(problem.rhs_f, problem.rhs_g)
    rf = problem.rhs_f - op.A @ u - op.B.T @ p
    rg = problem.rhs_g - op.B @ u
    if op.gauge is not None:
        rg = rg - lam * op.gauge
    scale = max(np.linalg.norm(problem.rhs_f) + np.linalg.norm(problem.rhs_g), 1e-300)
    sol = SaddleSolution(u, p, float(lam), float(np.linalg.norm(rf) / scale),
                         float(np.linalg.norm(rg) / scale))
    if max(sol.residual_f, sol.residual_g) > rtol and scale > 1e-290:
        raise SaddleError(f"saddle residual {max(sol.residual_f, sol.residual_g):.2e} exceeds {rtol:.1e}")
    return sol


@dataclass
class UzawaResult:
    u: np.ndarray
    p: np.ndarray
    iterations: int
    history: list


def uzawa_solve(A: sp.spmatrix, B: sp.spmatrix, f: np.ndarray, g: np.ndarray,
                Mp: sp.spmatrix, tol: float = 1e-10, maxit: int = 500) -> UzawaResult:
    """Pressure Schur complement CG, preconditioned by the pressure mass matrix.

    Solves ``S p = B A^{-1} f - g`` with ``S = B A^{-1} B^T`` restricted to
    mass-mean-zero pressures, then recovers ``u``. ``A`` must be symmetric
    positive definite. The inner velocity solves reuse one factorization.
    """
    lu = spla.splu(sp.csc_matrix(A))
    Mlu = spla.splu(sp.csc_matrix(Mp))
    Bc = sp.csr_matrix(B)
    m1 = Mp @ np.ones(Bc.shape[0])

    def project(r):
        # drop the component along the constant pressure (mass-orthogonal complement)
        return r - m1 * (np.sum(r) / np.sum(m1))

    def schur(q):
        return Bc @ lu.solve(Bc.T @ q)

    def precond(r):
        z = Mlu.solve(project(r))
        return z - np.sum(m1 * z) / np.sum(m1)

    b = project(Bc @ lu.solve(f) - g)
    p = np.zeros(Bc.shape[0])
    r = b.copy()
    z = precond(r)
    d = z.copy()
    rz = r @ z
    bnorm = max(np.sqrt(abs(b @ precond(b))), 1e-300)
    history = [np.sqrt(abs(rz)) / bnorm]
    it = 0
    while history[-1] > tol and it < maxit:
        Sd = project(schur(d))
        step = rz / (d @ Sd)
        p += step * d
        r -= step * Sd
        z = precond(r)
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
        it += 1
        history.append(np.sqrt(abs(rz)) / bnorm)
    if history[-1] > tol:
        raise SaddleError(f"Uzawa iteration stalled at {history[-1]:.2e} after {it} steps")
    u = lu.solve(f - Bc.T @ p)
    return UzawaResult(u, p, it, history)


# ------------------------------------------------------------------ inf-sup
def _constant_mode_index(vecs: np.ndarray, Mp: sp.spmatrix) -> int:
    ones = np.ones(Mp.shape[0])
    m1 = Mp @ ones
    norms = np.sqrt(np.einsum("ik,ik->k", vecs, Mp @ vecs))
    align = np.abs(m1 @ vecs) / (norms * np.sqrt(ones @ m1))
    return int(np.argmax(align))


def _schur_pencil(forms: AssembledForms):
    X = forms.X_free.tocsc()
    B = forms.B_free
    return X, B, forms.Mp.tocsc()


def infsup_estimate(forms: AssembledForms, gauge: str | None = "auto", method: str = "arpack",
                    k: int = 3, shift: float = -1e-2, seed: int = 0) -> float:
    """Discrete inf-sup constant of ``b`` on the constrained velocity space.

    ``beta_h = sqrt(lambda_min)`` of ``B X^{-1} B^T p = lambda Mp p`` where ``X`` is the
    gradient-seminorm matrix. With a gauge the constant pressure mode is
    removed, so ``beta_h`` is measured in the quotient norm of ``L2 / R``; with
    ``gauge=None`` constants are retained and ``beta_h`` vanishes whenever
    constants lie in the kernel of ``B^T``.
    """
    space = forms.space
    if gauge == "auto":
        gauge = None if space.gauge == "none" else space.gauge
    X, B, Mp = _schur_pencil(forms)
    if method == "dense":
        Xd = X.toarray()
        Bd = B.toarray()
        S = Bd @ sla.solve(Xd, Bd.T, assume_a="pos")
        S = 0.5 * (S + S.T)
        vals, vecs = sla.eigh(S, Mp.toarray())
    elif method == "arpack":
        xlu = spla.splu(X)
        n = X.shape[0]
        m = B.shape[0]

        def schur(p):
            return B @ xlu.solve(B.T @ p)

        # (S - shift Mp)^{-1} r through the saddle matrix [[X, B^T], [B, shift Mp]]
        K = sp.bmat([[X, B.T], [B, shift * Mp]], format="csc")
        klu = spla.splu(K)

        def shifted_inverse(r):
            x = klu.solve(np.concatenate([np.zeros(n), -r]))
            return x[n:]

        Sop = spla.LinearOperator((m, m), matvec=schur, dtype=float)
        OPinv = spla.LinearOperator((m, m), matvec=shifted_inverse, dtype=float)
        v0 = np.random.default_rng(seed).standard_normal(m)
        vals, vecs = spla.eigsh(Sop, k=min(k, m - 1), M=Mp, sigma=shift, OPinv=OPinv,
                                which="LM", v0=v0, tol=0.0)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    else:
        raise ValueError(f"unknown method {method!r}")
    if gauge is not None:
        drop = _constant_mode_index(vecs[:, :min(len(vals), k)], Mp)
        vals = np.delete(vals, drop)
    lam_min = float(vals[0])
    scale = max(float(np.max(np.abs(vals))), 1.0)
    if lam_min < -1e-8 * scale:
        raise SaddleError(f"negative Schur eigenvalue {lam_min:.3e}")
    return float(np.sqrt(max(lam_min, 0.0)))


def infsup_random_directions(forms: AssembledForms, n_samples: int = 1000, seed: int = 0) -> float:
    """Minimum over random pressures of ``sup_v b(v,q) / (|v|_X |q|)`` (an upper bound on beta_h)."""
    X, B, Mp = _schur_pencil(forms)
    xlu = spla.splu(X)
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((B.shape[0], n_samples))
    ones = np.ones(B.shape[0])
    Q -= np.outer(ones, (ones @ (Mp @ Q)) / (ones @ (Mp @ ones)))
    BtQ = B.T @ Q
    sup = np.sqrt(np.einsum("ik,ik->k", BtQ, xlu.solve(BtQ)))
    qn = np.sqrt(np.einsum("ik,ik->k", Q, Mp @ Q))
    return float(np.min(sup / qn))


def bt_bounded_below(forms: AssembledForms, seed: int = 0) -> float:
    """``min |B^T q|_{X'} / |q|`` over gauged pressures (equals beta_h)."""
    return infsup_estimate(forms, method="dense", seed=seed)


def b_surjectivity(forms: AssembledForms, seed: int = 0, n_samples: int = 20) -> float:
    """Largest ratio ``|u|_X / |g|_{M'}`` of minimal-norm solutions of ``B u = g``.

    Its reciprocal bounds ``beta_h`` from below when ``B`` maps onto gauged pressures.
    """
    X, B, Mp = _schur_pencil(forms)
    rng = np.random.default_rng(seed)
    Xd, Bd, Md = X.toarray(), B.toarray(), Mp.toarray()
    S = Bd @ sla.solve(Xd, Bd.T, assume_a="pos")
    ones = np.ones(Bd.shape[0])
    worst = 0.0
    for _ in range(n_samples):
        g = rng.standard_normal(Bd.shape[0])
        g -= ones * (ones @ g) / len(ones)
        y = sla.lstsq(S, g)[0]
        u = sla.solve(Xd, Bd.T @ y, assume_a="pos")
        gnorm = np.sqrt(g @ sla.solve(Md, g, assume_a="pos"))
        worst = max(worst, np.sqrt(u @ Xd @ u) / gnorm)
    return worst


def coercivity_on_kernel(forms: AssembledForms) -> float:
    """Smallest ``a(v, v) / |grad v|^2`` over discretely divergence-free fields (dense)."""
    A = forms.A_free.toarray()
    X = forms.X_free.toarray()
    B = forms.B_free.toarray()
    Z = sla.null_space(B)
    As = 0.5 * (A + A.T)
    vals = sla.eigh(Z.T @ As @ Z, Z.T @ X @ Z, eigvals_only=True)
    return float(vals[0])


def bilinear_norm(A: sp.spmatrix, X: sp.spmatrix) -> float:
    """``sup a(u,v) / (|u|_X |v|_X)`` via the largest generalized singular value."""
    xlu = spla.splu(sp.csc_matrix(X))
    n = A.shape[0]
    op = spla.LinearOperator((n, n), matvec=lambda v: A.T @ xlu.solve(A @ v), dtype=float)
    Minv = spla.LinearOperator((n, n), matvec=xlu.solve, dtype=float)
    v0 = np.ones(n)
    val = spla.eigsh(op, k=1, M=sp.csc_matrix(X), Minv=Minv, which="LM", v0=v0,
                     return_eigenvectors=False)
    return float(np.sqrt(val[0]))


@dataclass
class BrezziConstants:
    C_a: float
    C_b: float
    norm_a: float


def brezzi_constants(forms: AssembledForms, beta: float | None = None,
                     alpha: float | None = None) -> BrezziConstants:
    alpha = alpha if alpha is not None else coercivity_on_kernel(forms)
    beta = beta if beta is not None else infsup_estimate(forms, method="dense")
    if alpha <= 0 or beta <= 0:
        raise SaddleError("non-positive stability constant")
    return BrezziConstants(1.0 / alpha, 1.0 / beta, bilinear_norm(forms.A_free, forms.X_free))


@dataclass
class BrezziReport:
    u_norm: float
    u_bound: float
    p_norm: float
    p_bound: float

    @property
    def passed(self) -> bool:
        return self.u_norm <= self.u_bound * (1 + 1e-10) + 1e-14 and \
            self.p_norm <= self.p_bound * (1 + 1e-10) + 1e-14


def brezzi_bound_check(forms: AssembledForms, sol: SaddleSolution, rhs_f: np.ndarray,
                       rhs_g: np.ndarray, const: BrezziConstants) -> BrezziReport:
    """Check the a-priori bounds with discrete norms.

    ``|u|_X <= C_a |f|_X' + C_b (1 + |a| C_a) |g|_M'`` and
    ``|p|_M <= C_b (1 + |a| C_a) |f|_X' + |a| C_b^2 (1 + |a| C_a) |g|_M'``,
    with the pressure measured in the quotient norm modulo constants.
    """
    X = forms.X_free.tocsc()
    Mp = forms.Mp.tocsc()
    f_norm = float(np.sqrt(rhs_f @ spla.spsolve(X, rhs_f)))
    g_norm = float(np.sqrt(max(rhs_g @ spla.spsolve(Mp, rhs_g), 0.0)))
    ones = np.ones(len(sol.p))
    p = sol.p - ones * (ones @ (Mp @ sol.p)) / (ones @ (Mp @ ones))
    u_norm = float(np.sqrt(sol.u @ (X @ sol.u)))
    p_norm = float(np.sqrt(p @ (Mp @ p)))
    Ca, Cb, na = const.C_a, const.C_b, const.norm_a
    return BrezziReport(u_norm, Ca * f_norm + Cb * (1 + na * Ca) * g_norm,
                        p_norm, Cb * (1 + na * Ca) * f_norm + na * Cb ** 2 * (1 + na * Ca) * g_norm)


def check_broken_mode(forms: AssembledForms, floor: float = 0.02) -> float:
    """Return beta_h for an interface-broken pressure space, refusing it below ``floor``."""
    beta = infsup_estimate(forms)
    if forms.space.pressure_mode == "broken" and beta < floor:
        raise SaddleError(f"broken pressure mode disabled: beta_h={beta:.3e} < {floor}")
    if beta < 2 * floor:
        warnings.warn(f"small inf-sup constant beta_h={beta:.3e}", stacklevel=2)
    return beta
