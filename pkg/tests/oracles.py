"""Independent reference computations used by the tests.

None of these call into the package's eigen-solvers or determinant code; they
recompute the same quantities by sampling, cofactor expansion or plain loops.
"""

import itertools

import numpy as np


def random_trace_free(n, m, rng):
    """``m`` random symmetric trace-free ``n x n`` matrices of unit Frobenius norm."""
    x = rng.standard_normal((m, n, n))
    x = 0.5 * (x + np.swapaxes(x, 1, 2))
    tr = np.trace(x, axis1=1, axis2=2)
    x -= tr[:, None, None] * np.eye(n) / n
    return x / np.sqrt(np.sum(x * x, axis=(1, 2)))[:, None, None]


def form_by_loops(a, xi):
    """``a_ij^{ab} xi_ia xi_jb`` summed explicitly for one matrix."""
    n = a.shape[0]
    total = 0.0
    for i, j, al, be in itertools.product(range(n), repeat=4):
        total += a[i, j, al, be] * xi[i, al] * xi[j, be]
    return total


def _project(g, n):
    g = 0.5 * (g + g.T)
    return g - np.trace(g) * np.eye(n) / n


def brute_force_ellipticity(a, n_samples=100_000, seed=0, polish_steps=200):
    """Minimum of the form over random unit trace-free symmetric matrices.

    The best few samples are then refined by projected gradient descent on the
    unit sphere of the trace-free subspace, using only form evaluations and
    their gradients. No eigen-solver is involved.
    """
    rng = np.random.default_rng(seed)
    n = a.shape[0]
    xs = random_trace_free(n, n_samples, rng)
    vals = np.einsum("kia,ijab,kjb->k", xs, a, xs, optimize=True)
    best = float(vals.min())
    for k in np.argsort(vals)[:5]:
        x = xs[k].copy()
        step = 0.1
        f = form_by_loops(a, x)
        for _ in range(polish_steps):
            g = np.einsum("ijab,jb->ia", a, x) + np.einsum("jiba,jb->ia", a, x)
            g = _project(g, n)
            g -= np.sum(g * x) * x
            # re-project: the tangent correction would otherwise amplify round-off in the trace
            trial = _project(x - step * g, n)
            trial /= np.sqrt(np.sum(trial * trial))
            ft = form_by_loops(a, trial)
            if ft < f:
                x, f = trial, ft
                step *= 1.2
            else:
                step *= 0.5
            if step < 1e-12:
                break
        best = min(best, f)
    return best


def cofactor_det(m):
    """Determinant by Laplace expansion along the first row."""
    m = np.asarray(m, dtype=float)
    k = m.shape[0]
    if k == 1:
        return float(m[0, 0])
    if k == 2:
        return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
    total = 0.0
    for j in range(k):
        if m[0, j] == 0.0:
            continue
        minor = np.delete(np.delete(m, 0, axis=0), j, axis=1)
        total += (-1) ** j * m[0, j] * cofactor_det(minor)
    return total


def symbol_by_loops(a, xi):
    """The modified principal symbol assembled entry by entry."""
    n = len(xi)
    m = np.zeros((n + 1, n + 1))
    for l, j in itertools.product(range(n), repeat=2):
        m[l, j] = sum(xi[al] * a[l, j, al, be] * xi[be]
                      for al, be in itertools.product(range(n), repeat=2))
    for l in range(n):
        m[l, n] = m[n, l] = -xi[l]
    return m


def isotropic_by_loops(n, mu, lam):
    a = np.zeros((n, n, n, n))
    d = np.eye(n)
    for i, j, al, be in itertools.product(range(n), repeat=4):
        a[i, j, al, be] = lam * d[i, al] * d[j, be] + mu * (d[al, j] * d[be, i] + d[al, be] * d[i, j])
    return a


def p2_dof_count(mesh):
    """Velocity node count of a P2 space from vertices plus distinct edges."""
    edges = set()
    for c in mesh.cells:
        for a, b in itertools.combinations(c, 2):
            edges.add((min(a, b), max(a, b)))
    return mesh.nv + len(edges)


def observed_order(errors):
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])
