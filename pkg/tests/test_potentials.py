import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisostokes.potentials import (AdmissibilityError, admit_nu_orthogonal,
                                    admit_rigid_orthogonal, characteristic_pressure,
                                    compressibility, double_layer, double_layer_operators,
                                    duality_transpose_checks, green_representation,
                                    hypersingular_matrix, identity_suite, inverse_checks,
                                    invert_hypersingular, invert_single_layer, kernel_checks,
                                    newtonian, project_nu, project_rigid_density,
                                    project_rigid_moments, single_layer, single_layer_matrix,
                                    single_layer_operators)
from anisostokes.tensor import INNER, OUTER


def _names(checks):
    return {c.name: c for c in checks}


@pytest.mark.parametrize("which", ["ctx_broken", "ctx_nsa"])
def test_identity_suite_passes(request, which):
    checks = identity_suite(request.getfixturevalue(which), n_samples=5)
    failed = [c.record() for c in checks if not c.passed]
    assert not failed


def test_continuous_mode_identities_pass(ctx_cont):
    checks = identity_suite(ctx_cont, n_samples=5)
    assert all(c.passed for c in checks)
    # the exact normal-kernel relations need the broken pressure space
    assert "single layer of normal: velocity" not in _names(checks)


def test_dense_single_layer_transposes_into_adjoint(ctx_nsa):
    V = single_layer_matrix(ctx_nsa)
    Va = single_layer_matrix(ctx_nsa.adjoint)
    assert np.abs(Va - V.T).max() <= 1e-12 * np.abs(V).max()
    # a genuinely nonsymmetric tensor gives a nonsymmetric operator
    assert np.abs(V - V.T).max() > 1e-4 * np.abs(V).max()


def test_isotropic_operators_are_symmetric(ctx_broken):
    V = single_layer_matrix(ctx_broken)
    D = hypersingular_matrix(ctx_broken)
    assert np.abs(V - V.T).max() <= 1e-12 * np.abs(V).max()
    assert np.abs(D - D.T).max() <= 1e-12 * np.abs(D).max()


def test_dense_kernels(ctx_broken):
    V = single_layer_matrix(ctx_broken)
    D = hypersingular_matrix(ctx_broken)
    assert np.linalg.norm(V @ ctx_broken.nu) <= 1e-12 * np.abs(V).max() * np.linalg.norm(ctx_broken.nu)
    for r in ctx_broken.rigid:
        assert np.linalg.norm(D @ r) <= 1e-12 * np.abs(D).max() * np.linalg.norm(r)
    # V and -D are positive on the complements of their kernels
    ev = np.linalg.eigvalsh(0.5 * (V + V.T))
    ed = np.linalg.eigvalsh(-0.5 * (D + D.T))
    assert np.sum(ev < 1e-10 * ev.max()) == 1
    assert np.sum(ed < 1e-10 * ed.max()) == 3


def test_single_layer_of_normal_is_inner_pressure(ctx_broken):
    pair = single_layer(ctx_broken, ctx_broken.nu)
    assert np.max(np.abs(pair.u)) <= 1e-12
    assert np.max(np.abs(pair.p + characteristic_pressure(ctx_broken))) <= 1e-11


def test_characteristic_pressure_needs_broken_space(ctx_cont):
    with pytest.raises(AdmissibilityError):
        characteristic_pressure(ctx_cont)


def test_double_layer_of_rigid_trace(ctx_broken):
    s = ctx_broken.space
    inner = np.repeat(s.bnode_region == INNER, 2)
    pts = s.nodes[s.bnode_geo]
    # the rotation field (-y, x) restricted to the inner region
    rot = np.stack([-pts[:, 1], pts[:, 0]], axis=1).reshape(-1)
    phi = ctx_broken.trace(rot, INNER)
    pair = double_layer(ctx_broken, phi)
    assert np.max(np.abs(pair.u - np.where(inner, -rot, 0.0))) <= 1e-11
    assert np.max(np.abs(pair.p)) <= 1e-11


@given(a=st.floats(-10, 10), b=st.floats(-10, 10), seed=st.integers(0, 500))
@settings(max_examples=10, deadline=None)
def test_layer_potentials_are_linear(ctx_broken, a, b, seed):
    rng = np.random.default_rng(seed)
    n = ctx_broken.space.n_trace
    x, y = rng.standard_normal(n), rng.standard_normal(n)
    for make in (single_layer, double_layer):
        lhs = make(ctx_broken, a * x + b * y)
        u = a * make(ctx_broken, x).u + b * make(ctx_broken, y).u
        scale = 1.0 + abs(a) + abs(b)
        assert np.max(np.abs(lhs.u - u)) <= 1e-11 * scale


def test_traction_jump_equals_density(ctx_nsa):
    psi = np.random.default_rng(1).standard_normal(ctx_nsa.space.n_trace)
    ops = single_layer_operators(ctx_nsa, psi)
    assert np.max(np.abs(ops.t_plus - ops.t_minus - psi)) <= 1e-12 * np.abs(psi).max()


def test_trace_jump_equals_minus_field(ctx_nsa):
    phi = np.random.default_rng(2).standard_normal(ctx_nsa.space.n_trace)
    ops = double_layer_operators(ctx_nsa, phi)
    assert np.max(np.abs(ops.g_plus - ops.g_minus + phi)) <= 1e-13
    assert np.max(np.abs(ops.D - ops.t_minus)) <= 1e-11 * np.abs(ops.D).max()


def test_duality_report(ctx_nsa):
    rep = duality_transpose_checks(ctx_nsa, n_samples=5)
    assert rep.passed and rep.single_layer <= 1e-12 and rep.double_layer <= 1e-12


def test_inverses_round_trip(ctx_nsa):
    assert all(c.passed for c in inverse_checks(ctx_nsa, n_samples=3))


def test_inverse_residuals_and_projections(ctx_broken):
    rng = np.random.default_rng(3)
    phi = project_nu(ctx_broken, rng.standard_normal(ctx_broken.space.n_trace))
    assert invert_single_layer(ctx_broken, phi).residual <= 1e-10
    psi = project_rigid_density(ctx_broken, rng.standard_normal(ctx_broken.space.n_trace))
    res = invert_hypersingular(ctx_broken, psi)
    assert res.residual <= 1e-10
    assert np.allclose(project_rigid_moments(ctx_broken, res.value), res.value, atol=1e-12)


def test_admissibility_accepts_projects_and_rejects(ctx_broken):
    rng = np.random.default_rng(4)
    nu = ctx_broken.nu
    good = project_nu(ctx_broken, rng.standard_normal(len(nu)))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert admit_nu_orthogonal(ctx_broken, good) is not None
    nearly = good + 1e-7 * np.linalg.norm(good) * nu / np.linalg.norm(nu)
    with pytest.warns(UserWarning, match="projecting"):
        fixed = admit_nu_orthogonal(ctx_broken, nearly)
    assert abs(fixed @ nu) <= 1e-12 * np.linalg.norm(fixed) * np.linalg.norm(nu)
    with pytest.raises(AdmissibilityError):
        admit_nu_orthogonal(ctx_broken, good + nu)
    with pytest.raises(AdmissibilityError):
        admit_rigid_orthogonal(ctx_broken, ctx_broken.rigid[0])


def test_compressibility_requires_zero_total(ctx_cont):
    g = np.zeros(ctx_cont.space.n_pressure)
    g[0] = 1.0
    with pytest.raises(AdmissibilityError):
        compressibility(ctx_cont, g)
    g[1] = -1.0
    pair = compressibility(ctx_cont, g)
    # b(u, q) = -<g, q>, i.e. div u = g
    assert np.max(np.abs(ctx_cont.forms.B @ pair.u + g)) <= 1e-12


def test_newtonian_satisfies_momentum_equation(ctx_nsa):
    s = ctx_nsa.space
    f = np.random.default_rng(5).standard_normal(s.n_velocity)
    pair = newtonian(ctx_nsa, f)
    r = s.Pf.T @ ctx_nsa.residual(pair.u, pair.p, f)
    assert np.linalg.norm(r) <= 1e-11 * np.linalg.norm(s.Pf.T @ f)


def test_green_representation_reproduces_state(ctx_nsa):
    s = ctx_nsa.space
    rng = np.random.default_rng(6)
    f = rng.standard_normal(s.n_velocity)
    psi = rng.standard_normal(s.n_trace)
    phi = rng.standard_normal(s.n_trace)
    # a two-sided state with a trace jump, a traction jump and a body force
    u = newtonian(ctx_nsa, f).u + single_layer(ctx_nsa, psi).u + double_layer(ctx_nsa, phi).u
    p = newtonian(ctx_nsa, f).p + single_layer(ctx_nsa, psi).p + double_layer(ctx_nsa, phi).p
    rep = green_representation(ctx_nsa, u, p, f)
    assert rep.input_residual <= 1e-10
    assert max(rep.u_error.values()) <= 1e-10 * np.linalg.norm(u)
    assert max(rep.p_error.values()) <= 1e-10 * np.linalg.norm(p)


def test_one_sided_representation_vanishes_outside(ctx_nsa):
    s = ctx_nsa.space
    f = np.random.default_rng(7).standard_normal(s.n_velocity)
    pair = newtonian(ctx_nsa, f)
    rep = green_representation(ctx_nsa, pair.u, pair.p, f, side=INNER)
    outside = np.repeat(s.bnode_region == OUTER, 2)
    assert np.max(np.abs(rep.pair.u[outside])) <= 1e-10 * np.max(np.abs(pair.u))
    assert max(rep.u_error.values()) <= 1e-10 * np.linalg.norm(pair.u)


def test_representation_rejects_non_solutions(ctx_nsa):
    rng = np.random.default_rng(8)
    s = ctx_nsa.space
    with pytest.raises(AdmissibilityError):
        green_representation(ctx_nsa, s.free_to_broken(rng.standard_normal(s.n_free)),
                             rng.standard_normal(s.n_pressure))


def test_one_sided_representation_needs_broken_space(ctx_cont):
    s = ctx_cont.space
    with pytest.raises(AdmissibilityError):
        green_representation(ctx_cont, np.zeros(s.n_velocity), np.zeros(s.n_pressure), side=INNER)


def test_kernel_checks_in_continuous_space_skip_exact_normal_relations(ctx_cont):
    names = _names(kernel_checks(ctx_cont))
    assert "hypersingular of rigid traces" in names
    assert "single layer range has zero normal flux" not in names
