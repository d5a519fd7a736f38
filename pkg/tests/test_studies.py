import math

import pytest

from anisostokes.studies import (ConvergenceTable, convergence_study, infsup_study,
                                 observed_rates, reconstruction_study, solve_manufactured,
                                 traction_study)
from conftest import coarse_mesh, nonsymmetric_tensor
from oracles import observed_order


def test_observed_rates_halving_errors():
    assert observed_rates([1.0, 0.25, 0.0625]) == [None, 2.0, 2.0]


def test_undefined_rates_are_none():
    assert observed_rates([0.0, 0.0]) == [None, None]
    assert observed_rates([1.0, 0.0, 0.5]) == [None, None, None]


def test_rates_match_oracle():
    errs = [0.3, 0.08, 0.021]
    assert observed_rates(errs)[1:] == pytest.approx(list(observed_order(errs)), rel=1e-14)


def test_table_rows_keep_none_rates():
    t = ConvergenceTable("x", [0.5, 0.25], [0.0, 0.0], [0.0, 0.0])
    rows = t.rows()
    assert rows[0]["rate_u"] is None and rows[1]["rate_p"] is None


def test_single_level_study_rejected():
    with pytest.raises(ValueError):
        convergence_study("transmission", nonsymmetric_tensor(), coarse_mesh(0.5), 1)


def test_neumann_has_no_manufactured_study(ctx_cont):
    with pytest.raises(ValueError):
        solve_manufactured("neumann", ctx_cont, None)


@pytest.mark.parametrize("kind", ["transmission", "dirichlet", "mixed"])
def test_zero_data_gives_zero_errors(kind):
    t = convergence_study(kind, nonsymmetric_tensor(), coarse_mesh(0.5), 2, zero=True)
    assert max(t.u_errors + t.p_errors) == 0.0


@pytest.mark.parametrize("kind", ["transmission", "dirichlet", "mixed"])
def test_manufactured_errors_decay(kind):
    t = convergence_study(kind, nonsymmetric_tensor(), coarse_mesh(0.5), 2)
    assert t.u_errors[1] < 0.4 * t.u_errors[0]
    assert t.u_rates[1] > 1.5 and t.p_rates[1] > 1.5


def test_infsup_study_on_two_levels(iso):
    st = infsup_study(iso, coarse_mesh(0.5), 2, broken_levels=1)
    assert len(st.beta) == 2 and len(st.broken_beta) == 1
    assert st.dense_agreement <= 1e-8
    assert st.min_ratio > 0.5


def test_infsup_study_without_dense_reports_nan(iso):
    st = infsup_study(iso, coarse_mesh(0.5), 1, dense=False, broken=False)
    assert math.isnan(st.dense_agreement) and st.min_ratio == 1.0 and st.broken_beta == []


def test_traction_study_converges():
    st = traction_study(nonsymmetric_tensor(), coarse_mesh(0.5), 2)
    assert st.rates[1] >= 1.0
    assert max(st.lifting_spread) <= 1e-10


def test_reconstruction_study_converges():
    st = reconstruction_study(nonsymmetric_tensor(), coarse_mesh(0.5), 2)
    assert st.rates[1] >= 1.5
    assert max(st.self_errors) <= 1e-10
