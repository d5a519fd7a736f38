import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisostokes.tensor import (INNER, OUTER, TensorError, adjoint_tensor, adn_ellipticity_check,
                                adn_symbol, check_symmetry, ellipticity_constant, form_gram,
                                from_constant, from_regions, isotropic_array, make_isotropic,
                                quadratic_form, random_symmetric_tensor, symmetry_violation,
                                trace_free_basis)
from oracles import (brute_force_ellipticity, cofactor_det, form_by_loops, isotropic_by_loops,
                     random_trace_free, symbol_by_loops)

PTS = np.random.default_rng(0).uniform(-1, 1, (10, 3))

mu_st = st.floats(0.05, 20.0)
lam_st = st.floats(-5.0, 5.0)


def test_isotropic_entries_follow_delta_formula():
    a = isotropic_array(3, 1.0, 0.0)
    assert a[0, 0, 0, 0] == 2.0
    assert a[0, 1, 1, 0] == 1.0          # a_12^21
    assert a[0, 0, 1, 1] == 1.0          # a_11^22
    # a_12^12 = lam under lam d_ia d_jb + mu (d_aj d_bi + d_ab d_ij)
    assert a[0, 1, 0, 1] == 0.0
    assert isotropic_array(3, 1.0, 0.7)[0, 1, 0, 1] == 0.7


@given(mu=mu_st, lam=lam_st, n=st.sampled_from([2, 3]))
def test_isotropic_matches_loop_construction(mu, lam, n):
    assert np.allclose(isotropic_array(n, mu, lam), isotropic_by_loops(n, mu, lam), atol=0, rtol=0)


def test_make_isotropic_rejects_nonpositive_mu():
    with pytest.raises(TensorError):
        make_isotropic(2, 0.0)
    with pytest.raises(TensorError):
        make_isotropic(3, {INNER: 1.0, OUTER: -1.0})


@given(mu=mu_st, lam=lam_st)
def test_symmetry_holds_for_any_isotropic(mu, lam):
    ok, viol = check_symmetry(make_isotropic(3, mu, lam), PTS)
    assert ok and viol == 0.0


def test_perturbed_entry_breaks_symmetry():
    a = isotropic_array(2, 1.0, 0.0)
    a[0, 1, 0, 0] += 0.1                  # a_12^11 changed, a_21^11 kept
    ok, viol = check_symmetry(from_constant(a), PTS[:, :2])
    assert not ok and viol == pytest.approx(0.1)


def test_per_region_isotropic_is_symmetric():
    ok, _ = check_symmetry(make_isotropic(2, {INNER: 1.0, OUTER: 3.0}), PTS[:, :2])
    assert ok


def test_ellipticity_rejects_nonsymmetric_input():
    a = isotropic_array(2, 1.0, 0.0)
    a[0, 1, 0, 0] += 0.1
    with pytest.raises(TensorError):
        ellipticity_constant(from_constant(a), PTS[:, :2])


def test_trace_free_basis_is_orthonormal():
    for n in (2, 3):
        b = trace_free_basis(n)
        assert len(b) == n * (n + 1) // 2 - 1
        gram = np.einsum("pij,qij->pq", b, b)
        assert np.allclose(gram, np.eye(len(b)), atol=1e-15)
        assert np.allclose(np.trace(b, axis1=1, axis2=2), 0.0)
        assert np.allclose(b, np.swapaxes(b, 1, 2))


@given(mu=mu_st, lam=lam_st, n=st.sampled_from([2, 3]))
def test_isotropic_ellipticity_is_twice_mu(mu, lam, n):
    rep = ellipticity_constant(make_isotropic(n, mu, lam), PTS[:, :n])
    assert abs(rep.c_inv - 2 * mu) <= 1e-10 * max(1.0, mu)
    assert rep.elliptic


def test_zero_tensor_is_not_elliptic():
    rep = ellipticity_constant(from_constant(np.zeros((3, 3, 3, 3))), PTS)
    assert rep.c_inv == 0.0 and not rep.elliptic


def test_perturbed_isotropic_matches_brute_force():
    a = isotropic_array(3, 1.0, 0.0)
    a[0, 0, 0, 0] += 0.5                  # the entry is its own symmetry mate
    rep = ellipticity_constant(from_constant(a), PTS)
    assert abs(rep.c_inv - brute_force_ellipticity(a, 100_000)) <= 1e-3
    # the worst direction is unit and attains the constant
    x = rep.worst_direction
    assert np.sum(x * x) == pytest.approx(1.0)
    assert form_by_loops(a, x) == pytest.approx(rep.c_inv, abs=1e-12)


@given(seed=st.integers(0, 10_000), n=st.sampled_from([2, 3]))
@settings(max_examples=20, deadline=None)
def test_ellipticity_is_a_lower_bound_on_samples(seed, n):
    rng = np.random.default_rng(seed)
    a = random_symmetric_tensor(n, rng)
    c = ellipticity_constant(from_constant(a), PTS[:1, :n]).c_inv
    xs = random_trace_free(n, 2000, rng)
    assert np.all(quadratic_form(a, xs) >= c - 1e-12)


@given(seed=st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_adjoint_is_an_involution_preserving_ellipticity(seed):
    rng = np.random.default_rng(seed)
    A = from_regions(random_symmetric_tensor(3, rng), random_symmetric_tensor(3, rng))
    adj = adjoint_tensor(A)
    assert np.array_equal(adjoint_tensor(adj)(PTS, OUTER), A(PTS, OUTER))
    assert abs(ellipticity_constant(adj, PTS).c_inv - ellipticity_constant(A, PTS).c_inv) <= 1e-10
    vals, avals = A(PTS[:1]), adj(PTS[:1])
    assert np.array_equal(avals[0], np.transpose(vals[0], (1, 0, 3, 2)))


def test_isotropic_is_self_adjoint():
    A = make_isotropic(3, 1.5, 0.3)
    assert np.array_equal(adjoint_tensor(A)(PTS), A(PTS))


@given(seed=st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_form_agrees_under_swapped_index_order(seed):
    rng = np.random.default_rng(seed)
    a = random_symmetric_tensor(3, rng)
    swapped = np.transpose(a, (2, 1, 0, 3))   # a_aj^{ib}
    xs = random_trace_free(3, 50, rng)
    assert np.allclose(quadratic_form(a, xs), quadratic_form(swapped, xs), atol=1e-12)


@given(mu=mu_st, lam=lam_st, seed=st.integers(0, 1000))
def test_isotropic_form_is_twice_mu_norm(mu, lam, seed):
    xs = random_trace_free(3, 20, np.random.default_rng(seed))
    q = quadratic_form(isotropic_array(3, mu, lam), xs)
    assert np.allclose(q, 2 * mu, rtol=1e-12)


def test_gram_matrix_matches_loops():
    a = random_symmetric_tensor(3, np.random.default_rng(4))
    g = form_gram(a)
    b = trace_free_basis(3)
    for p in range(len(b)):
        assert g[p, p] == pytest.approx(form_by_loops(a, b[p]), abs=1e-13)


def test_symmetry_violation_of_batch():
    a = np.stack([isotropic_array(2, 1.0, 0.0)] * 3)
    a[2, 0, 1, 1, 1] += 0.25
    assert symmetry_violation(a) == pytest.approx(0.25)


# ------------------------------------------------------------------ ADN symbol
def test_adn_isotropic_first_axis():
    sym = adn_symbol(make_isotropic(3, 1.0, 0.0), np.zeros(3), [1.0, 0.0, 0.0])
    m = sym.matrix
    assert np.array_equal(m[:3, :3], np.diag([2.0, 1.0, 1.0]))
    assert np.array_equal(m[:3, 3], [-1.0, 0.0, 0.0])
    assert np.array_equal(m[3, :3], [-1.0, 0.0, 0.0])
    assert cofactor_det(m) == -1.0
    assert np.linalg.det(m) == pytest.approx(-1.0, abs=1e-14)


@given(t=st.floats(0.1, 10.0), seed=st.integers(0, 1000))
def test_adn_symbol_homogeneity(t, seed):
    rng = np.random.default_rng(seed)
    A = from_constant(random_symmetric_tensor(3, rng))
    xi = rng.standard_normal(3)
    m1 = adn_symbol(A, np.zeros(3), xi).matrix
    m2 = adn_symbol(A, np.zeros(3), t * xi).matrix
    assert np.allclose(m2[:3, :3], t ** 2 * m1[:3, :3], rtol=1e-12, atol=1e-14)
    assert np.allclose(m2[:3, 3], t * m1[:3, 3], rtol=1e-12)
    assert np.allclose(m2[3, :3], t * m1[3, :3], rtol=1e-12)


def test_adn_symbol_matches_loop_layout():
    rng = np.random.default_rng(7)
    a = random_symmetric_tensor(3, rng)
    xi = rng.standard_normal(3)
    assert np.allclose(adn_symbol(from_constant(a), np.zeros(3), xi).matrix, symbol_by_loops(a, xi),
                       atol=1e-13)


def test_adn_zero_direction_rejected():
    with pytest.raises(TensorError):
        adn_symbol(make_isotropic(2, 1.0), np.zeros(2), [0.0, 0.0])


def test_adn_zero_tensor_singular_everywhere():
    A = from_constant(np.zeros((3, 3, 3, 3)))
    rep = adn_ellipticity_check(A, PTS, 1000)
    assert not rep.passed and rep.n_failed == rep.n_checked == 10_000
    assert cofactor_det(adn_symbol(A, np.zeros(3), [0.3, -0.2, 0.9]).matrix) == 0.0


def test_adn_random_elliptic_cross_checked_by_cofactors():
    rng = np.random.default_rng(11)
    a = random_symmetric_tensor(3, rng)
    A = from_constant(a)
    assert ellipticity_constant(A, PTS).elliptic
    rep = adn_ellipticity_check(A, PTS, 1000)
    assert rep.passed
    dirs = rng.standard_normal((100, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    scale = np.max(np.abs(a)) ** 2
    dets = [abs(cofactor_det(symbol_by_loops(a, d))) / scale for d in dirs]
    assert min(dets) >= rep.min_scaled_det - 1e-12


def test_adn_check_needs_directions():
    with pytest.raises(TensorError):
        adn_ellipticity_check(make_isotropic(2, 1.0), PTS[:, :2], 0)
