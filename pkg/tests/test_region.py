import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coopstab import presets
from coopstab.rates import TOL, ScenarioParams, bound_table
from coopstab.region import (Side, f_grid, inner_envelope_point, lambda_p_grid,
                             max_primary_rate, min_admission, optimal_beta,
                             outer_envelope_point, primary_edge, sweep_envelope)

FIG1 = presets.FIG1


def brute_inner(base, lambda_p, f, n=10_001):
    """Maximize the inner secondary rate over a dense beta grid."""
    betas = np.linspace(0.0, 1.0, n)
    t = bound_table(base, f=f, beta=betas, lambda_p=lambda_p)
    ok = t.inner_ok & (t.lam_ps_o <= t.mu_ps_i + TOL)
    if not ok.any():
        return None, None
    # ties go to the largest beta, as in the closed form
    k = n - 1 - int(np.argmax(np.where(ok, t.mu_s_i, -np.inf)[::-1]))
    return betas[k], t.mu_s_i[k]


def test_f_grid_spacing():
    g = f_grid(1e-3)
    assert g[0] == 0.0 and g[-1] == 1.0 and len(g) == 1001
    assert np.diff(f_grid(0.3)).max() <= 0.3
    with pytest.raises(ValueError):
        f_grid(0.0)


def test_grid_step_validated():
    with pytest.raises(ValueError):
        outer_envelope_point(FIG1, 0.1, f_grid_step=0.05)
    with pytest.raises(ValueError):
        outer_envelope_point(FIG1, 0.1, f_values=[1.2])


def test_outer_at_zero_primary_load():
    pt = outer_envelope_point(FIG1, 0.0)
    assert pt.feasible and pt.lambda_s_max == pytest.approx(0.8)
    assert pt.f_opt == 0.0  # every f ties; the smaller wins
    assert pt.bound_side is Side.OUTER


def test_outer_beyond_primary_edge():
    assert primary_edge(FIG1) == pytest.approx(0.98)
    assert min_admission(FIG1, 0.99) == pytest.approx(0.19 / 0.18)
    pt = outer_envelope_point(FIG1, 0.99)
    assert not pt.feasible and pt.lambda_s_max == 0.0 and pt.f_opt is None


def test_inner_at_zero_primary_load():
    for le in (0.2, 0.8, 1.0):
        pt = inner_envelope_point(FIG1.replace(lambda_e=le), 0.0)
        assert pt.lambda_s_max == pytest.approx(0.8 * le)
        assert pt.beta_opt == 1.0


def test_no_cooperation_corner():
    # f forced to 0: nothing is relayed and the SU always serves its own queue
    for lp in (0.1, 0.5, 0.79):
        pt = inner_envelope_point(FIG1, lp, f_values=[0.0])
        assert pt.f_opt == 0.0 and pt.beta_opt == 1.0
        t = bound_table(FIG1, f=0.0, lambda_p=lp)
        assert pt.lambda_s_max == pytest.approx(float(t.mu_s_i))
    assert not outer_envelope_point(FIG1, 0.81, f_values=[0.0]).feasible


def test_no_direct_link_needs_cooperation():
    base = presets.FIG3.replace(lambda_e=0.5)
    assert min_admission(base, 0.1) > 0
    assert not outer_envelope_point(base, 0.1, f_values=[0.0]).feasible
    assert not inner_envelope_point(base, 0.1, f_values=[0.0]).feasible
    assert outer_envelope_point(base, 0.1).feasible


def test_fig1_sweep_shape():
    outer = sweep_envelope(FIG1, "outer", 60)
    inner = sweep_envelope(FIG1, Side.INNER, 60)
    np.testing.assert_array_equal(outer.lambda_p, lambda_p_grid(FIG1, 60))
    assert np.all(inner.lambda_s <= outer.lambda_s + 1e-12)
    assert np.all(np.diff(outer.lambda_s) <= 1e-12)
    assert np.all(np.diff(inner.lambda_s) <= 1e-12)
    # the relaying constraint binds before the primary edge
    assert 0.8 < outer.max_feasible_lambda_p < 0.98
    for p in inner:
        if not p.feasible:
            assert p.lambda_s_max == 0.0


def test_explicit_lambda_p_grid_sorted():
    env = sweep_envelope(FIG1, "outer", [0.5, 0.1, 0.3])
    np.testing.assert_array_equal(env.lambda_p, [0.1, 0.3, 0.5])
    assert len(env) == 3


def test_optimal_beta_infeasible_returns_none():
    # no energy at all: the inner side cannot serve relayed packets
    base = FIG1.replace(lambda_e=0.0)
    assert optimal_beta(base, 0.5, 0.0) == 1.0
    assert optimal_beta(base, 0.81, 1.0) is None


def test_grid_refinement_converges():
    for lp in (0.2, 0.6, 0.9):
        for solve in (inner_envelope_point, outer_envelope_point):
            coarse = solve(FIG1, lp, 1e-2).lambda_s_max
            fine = solve(FIG1, lp, 1e-4).lambda_s_max
            assert fine >= coarse - 1e-12
            assert fine - coarse < 5e-3


@st.composite
def inner_cases(draw):
    p = st.floats(0.0, 1.0)
    base = ScenarioParams(draw(p), draw(p), draw(p), draw(p), lambda_e=draw(p))
    lp = draw(st.floats(0.0, primary_edge(base)))
    return base, lp, draw(p)


@settings(max_examples=150, deadline=None)
@given(inner_cases())
def test_closed_form_beta_matches_grid(case):
    base, lp, f = case
    beta = optimal_beta(base, lp, f)
    b_ref, obj_ref = brute_inner(base, lp, f)
    if beta is None:
        # the grid can only see feasibility that the closed form also finds
        assert b_ref is None or b_ref < 1e-4
        return
    assert b_ref is not None
    assert abs(beta - b_ref) <= 1e-4 + 1e-12
    obj = float(bound_table(base, f=f, beta=beta, lambda_p=lp).mu_s_i)
    assert obj == pytest.approx(obj_ref, abs=1e-4)


def test_max_primary_rate_ordering_and_limits():
    r = np.array([1e-4, 0.5, 1.0, 2.0, 4.0, 6.0])
    for g in presets.FIG4_GAMMA_PS_PD:
        pts = max_primary_rate(presets.fig4_snr(g), presets.FIG4_SENSING_FRACTION, r,
                               presets.FIG4_LAMBDA_P, presets.FIG4_LAMBDA_E, 1e-2)
        outer = np.array([p.outer for p in pts])
        inner = np.array([p.inner for p in pts])
        nc = np.array([p.non_cooperative for p in pts])
        assert np.all(outer >= inner - 1e-12) and np.all(inner >= nc - 1e-12)
        assert np.all(np.diff(nc) <= 0)
        assert 1 - outer[0] < 1e-3 and 1 - inner[0] < 1e-3 and 1 - nc[0] < 1e-3
        assert nc[1] == pytest.approx(np.exp(-(2 ** 0.5 - 1) / g))


def test_max_primary_rate_needs_feasible_grid():
    with pytest.raises(ValueError):
        max_primary_rate(presets.fig4_snr(0.2), 0.1, [6.0], 0.1, 0.7, f_values=[1.0])
