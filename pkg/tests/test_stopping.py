import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finfuel import model, stopping
from finfuel.errors import DomainError, MonotonicityError

import golden
from conftest import REFL_F, REFL_P, REPL_F, REPL_P


@pytest.mark.parametrize("c", sorted(golden.BETA_STAR))
def test_beta_frozen(c):
    assert stopping.beta_star(c, REFL_P, REFL_F) == pytest.approx(golden.BETA_STAR[c], abs=1e-11)


def test_tabulated_boundary_shape(beta_tab):
    b = beta_tab
    assert b.c_grid.size == 201 and b.kind == "beta"
    assert np.all(np.diff(b.x_values) < 0)
    for c, x in zip(b.c_grid[::10], b.x_values[::10]):
        top = min(float(model.x0(c, REFL_P, REFL_F)), float(model.x_hat0(c, REFL_P, REFL_F)))
        assert x < top
        assert abs(stopping.H(x, c, REFL_P, REFL_F)) <= 1e-10


def test_interpolated_boundary_between_nodes(beta_tab):
    # monotone cubic on a 0.005 spacing; worst midpoint error is about 5e-7 near c = 0
    for c in (0.0025, 0.3333, 0.618, 0.9991):
        assert beta_tab(c) == pytest.approx(stopping.beta_star(c, REFL_P, REFL_F), abs=1e-6)


def test_smooth_fit(beta_tab):
    for c in (0.0, 0.4, 0.95):
        b = beta_tab(c)
        u, ux, _ = stopping.u_derivs(b + 1e-7, c, REFL_P, REFL_F, beta_tab)
        assert abs(u) < 1e-10 and abs(ux) < 1e-5


def test_threshold_rule_is_optimal():
    p, f = REFL_P, REFL_F
    for c in (0.2, 0.5, 0.8):
        b = stopping.beta_star(c, p, f)
        x = b + 0.4
        best = stopping.u_threshold(x, c, b, p, f)
        for d in (-0.2, -0.02, 0.02, 0.2):
            assert stopping.u_threshold(x, c, b + d, p, f) < best


def test_u_solves_the_ode_above_boundary(beta_tab):
    p, f = REFL_P, REFL_F
    for x, c in [(1.0, 0.5), (2.0, 0.1), (0.5, 0.9)]:
        u, ux, uxx = stopping.u_derivs(x, c, p, f, beta_tab)
        lhs = 0.5 * p.sigma**2 * uxx + p.theta * (p.mu - x) * ux - p.lam * u
        rhs = -(float(model.k(c, p, f)) * x - p.theta * p.mu)
        assert lhs == pytest.approx(rhs, abs=1e-10)
        assert u >= 0


def test_refinement_is_stable(beta_tab):
    fine = stopping.tabulate_beta(REFL_P, REFL_F, n=401)
    cs = np.linspace(0.0, 1.0, 57)
    assert np.max(np.abs(fine(cs) - beta_tab(cs))) < 1e-6


def test_repelling_parameters_rejected():
    with pytest.raises(DomainError):
        stopping.beta_star(0.5, REPL_P, REPL_F)


def test_boundary_serialization(tmp_path, beta_tab):
    path = tmp_path / "b.csv"
    beta_tab.to_csv(path)
    back = stopping.Boundary.from_csv(path)
    assert np.array_equal(back.x_values, beta_tab.x_values)
    assert np.array_equal(back.c_grid, beta_tab.c_grid)
    again = stopping.Boundary.from_json(beta_tab.to_json())
    assert np.array_equal(again.x_values, beta_tab.x_values)
    assert json.loads(beta_tab.to_json())["kind"] == "beta"


def test_non_monotone_boundary_rejected():
    with pytest.raises(MonotonicityError):
        stopping.Boundary([0.0, 0.5, 1.0], [1.0, 1.2, 0.0])
    with pytest.raises(MonotonicityError):
        stopping.Boundary([0.0, 0.0, 1.0], [1.0, 0.5, 0.0])


def test_inverse_consistency(beta_tab):
    for c in (0.05, 0.5, 0.93):
        x = beta_tab(c)
        assert beta_tab.inverse(x) == pytest.approx(c, abs=1e-9)
        assert float(beta_tab.inverse_vec(x)) == pytest.approx(c, abs=1e-6)
    assert np.allclose(beta_tab.inverse_vec(beta_tab.x_values), beta_tab.c_grid, atol=1e-13)
    assert stopping.g_star(10.0, beta_tab) == 0.0
    assert stopping.g_star(-10.0, beta_tab) == 1.0


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(-1.0, 3.0))
def test_u_nonnegative_and_v_bounds(c, x):
    b = stopping.Boundary(np.linspace(0, 1, 21), [stopping.beta_star(cc, REFL_P, REFL_F) for cc in np.linspace(0, 1, 21)])
    u = stopping.u_value(x, c, REFL_P, REFL_F, b)
    assert u >= 0
    assert stopping.v_value(x, c, REFL_P, REFL_F, b) == pytest.approx(-x + u)
