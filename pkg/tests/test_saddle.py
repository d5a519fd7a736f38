import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from anisostokes.fem import MixedSpace, assemble
from anisostokes.saddle import (SaddleError, SaddleOperator, SaddleProblem, b_surjectivity,
                                bilinear_norm, brezzi_bound_check, brezzi_constants,
                                check_broken_mode, coercivity_on_kernel, describe_null_pressure,
                                infsup_estimate, infsup_random_directions, solve_saddle,
                                uzawa_solve)

# dense generalized eigensolve of the pressure Schur pencil on the coarse mesh
BETA_COARSE = 0.5776130380843293
BETA_COARSE_BROKEN = 0.5776130324929235


@pytest.fixture(scope="module")
def forms(ctx_cont):
    return ctx_cont.forms


@pytest.fixture(scope="module")
def mean_forms(iso, mesh2):
    return assemble(iso, MixedSpace(mesh2, "continuous", gauge="mean"))


def _problem(f, seed=0, with_g=True):
    rng = np.random.default_rng(seed)
    s = f.space
    rhs_f = rng.standard_normal(s.n_free)
    rhs_g = rng.standard_normal(s.n_pressure) if with_g else np.zeros(s.n_pressure)
    return SaddleProblem(f.A_free, f.B_free, rhs_f, rhs_g, s.gauge_vector())


def test_infsup_frozen_value(forms):
    assert infsup_estimate(forms) == pytest.approx(BETA_COARSE, rel=1e-9)


def test_infsup_iterative_matches_dense(forms):
    a = infsup_estimate(forms)
    d = infsup_estimate(forms, method="dense")
    assert abs(a - d) <= 1e-8 * d


def test_ungauged_infsup_vanishes(forms):
    assert infsup_estimate(forms, gauge=None) < 1e-8


def test_broken_mode_passes_floor(ctx_broken):
    beta = check_broken_mode(ctx_broken.forms, 0.02)
    assert beta == pytest.approx(BETA_COARSE_BROKEN, rel=1e-9)
    with pytest.raises(SaddleError):
        check_broken_mode(ctx_broken.forms, 0.9)


def test_random_directions_bound_beta_from_above(forms):
    assert infsup_random_directions(forms, 200) >= BETA_COARSE
    assert 1.0 / b_surjectivity(forms, n_samples=5) >= BETA_COARSE * (1 - 1e-10)


def test_coercivity_and_norm_of_isotropic_form(mean_forms):
    # for discretely solenoidal fields a(v,v) = 2 mu |E v|^2 = mu |grad v|^2 up to the
    # boundary term, so the constant is the smaller viscosity and the norm twice the larger
    assert coercivity_on_kernel(mean_forms) == pytest.approx(1.0 / 3.0, rel=1e-10)
    assert bilinear_norm(mean_forms.A_free, mean_forms.X_free) == pytest.approx(2.0, rel=1e-8)


def test_zero_data_gives_zero_solution(forms):
    s = forms.space
    p = SaddleProblem(forms.A_free, forms.B_free, np.zeros(s.n_free), np.zeros(s.n_pressure),
                      s.gauge_vector())
    sol = solve_saddle(p)
    assert not np.any(sol.u) and not np.any(sol.p)


def test_residuals_below_tolerance(forms):
    sol = solve_saddle(_problem(forms), rtol=1e-10)
    assert max(sol.residual_f, sol.residual_g) <= 1e-10


@given(scale=st.floats(0.01, 100.0))
@settings(max_examples=5, deadline=None)
def test_solution_is_linear_in_data(forms, scale):
    op = SaddleOperator(forms.A_free, forms.B_free, forms.space.gauge_vector())
    p = _problem(forms, with_g=False)
    u1, p1, _ = op.solve(p.rhs_f)
    u2, p2, _ = op.solve(scale * p.rhs_f)
    assert np.allclose(u2 / scale, u1, rtol=0, atol=1e-10 * np.abs(u1).max())
    assert np.allclose(p2 / scale, p1, rtol=0, atol=1e-10 * np.abs(p1).max())


def test_column_stacks_match_single_solves(forms):
    op = SaddleOperator(forms.A_free, forms.B_free, forms.space.gauge_vector())
    rng = np.random.default_rng(3)
    F = rng.standard_normal((forms.space.n_free, 3))
    U, P, lam = op.solve(F)
    for k in range(3):
        u, p, l = op.solve(F[:, k])
        assert np.allclose(U[:, k], u) and np.allclose(P[:, k], p)


def test_gauge_satisfied_exactly(forms):
    sol = solve_saddle(_problem(forms, with_g=False))
    c = forms.space.gauge_vector()
    assert abs(c @ sol.p) <= 1e-12 * np.linalg.norm(sol.p) * np.linalg.norm(c)


def test_uzawa_agrees_with_direct_solve(mean_forms):
    s = mean_forms.space
    rng = np.random.default_rng(4)
    f = rng.standard_normal(s.n_free)
    g = np.zeros(s.n_pressure)
    op = SaddleOperator(mean_forms.A_free, mean_forms.B_free, s.gauge_vector())
    u, p, _ = op.solve(f, g)
    it = uzawa_solve(mean_forms.A_free, mean_forms.B_free, f, g, mean_forms.Mp, tol=1e-12)
    assert np.linalg.norm(it.u - u) <= 1e-9 * np.linalg.norm(u)
    assert np.linalg.norm(it.p - p) <= 1e-9 * np.linalg.norm(p)
    assert it.iterations < 60


def test_singular_system_names_the_constant_pressure(forms):
    with pytest.raises(SaddleError, match="constant pressure"):
        SaddleOperator(forms.A_free, forms.B_free, None)


def test_null_mode_diagnostic_for_two_level_pressure():
    # two disconnected pressure blocks each carry a constant null mode
    B = sp.csr_matrix(np.array([[1.0, -1.0, 0.0, 0.0], [-1.0, 1.0, 0.0, 0.0],
                                [0.0, 0.0, 1.0, -1.0], [0.0, 0.0, -1.0, 1.0]]))
    msg = describe_null_pressure(B, gauge=np.array([1.0, 1.0, 1.0, 1.0]))
    assert "piecewise constant" in msg


def test_brezzi_bounds_hold(mean_forms):
    const = brezzi_constants(mean_forms, beta=infsup_estimate(mean_forms), alpha=1.0 / 3.0)
    for seed in range(3):
        prob = _problem(mean_forms, seed)
        # compatible divergence data: zero mean
        prob.rhs_g = prob.rhs_g - mean_forms.Mp @ np.ones(len(prob.rhs_g)) * (
            prob.rhs_g.sum() / (mean_forms.Mp @ np.ones(len(prob.rhs_g))).sum())
        sol = solve_saddle(prob)
        rep = brezzi_bound_check(mean_forms, sol, prob.rhs_f, prob.rhs_g, const)
        assert rep.passed, rep
