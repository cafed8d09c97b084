import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finfuel import simulate as sim
from finfuel import value

from conftest import REFL_F, REFL_P, REPL_F, REPL_P

SMALL = sim.SimConfig(dt=2e-3, horizon=3.0, n_paths=400, seed=11, block_size=100, bias_study=False)


def test_step_ou_degenerate_cases():
    x = np.array([-1.0, 0.3, 2.0])
    assert np.allclose(sim.step_ou(x, 0.0, REFL_P, np.ones(3)), x, rtol=0, atol=1e-15)
    a, s = sim.ou_coeffs(50.0, REFL_P)
    assert a < 1e-40 and s == pytest.approx(REFL_P.length_scale)
    assert np.allclose(sim.step_ou(x, 50.0, REFL_P, np.zeros(3)), REFL_P.mu)


def test_step_ou_moments():
    rng = np.random.default_rng(3)
    x = np.full(200_000, 2.0)
    y = sim.step_ou(x, 0.4, REFL_P, rng.standard_normal(x.size))
    a, s = sim.ou_coeffs(0.4, REFL_P)
    assert y.mean() == pytest.approx(REFL_P.mu + a, abs=4 * s / math.sqrt(x.size))
    assert y.var() == pytest.approx(s * s, rel=0.02)


def test_config_validation():
    with pytest.raises(ValueError):
        sim.SimConfig(n_paths=3)
    with pytest.raises(ValueError):
        sim.SimConfig(dt=0.0)
    with pytest.raises(ValueError):
        sim.SimConfig(block_size=3)


def test_apply_policy_examples(beta_tab):
    path = np.array([1.0, 0.8, 0.9, 0.5, 0.6, 0.2])
    nu, C = sim.apply_policy(sim.NoControl(), path, 0.3)
    assert np.all(nu == 0) and np.all(C == 0.3)
    nu, C = sim.apply_policy(sim.ImmediateFull(), path, 0.3)
    assert np.all(C == 1.0) and nu[0] == pytest.approx(0.7)
    nu, C = sim.apply_policy(sim.StopAndFillAt(0.55, "below"), path, 0.0)
    assert list(C) == [0, 0, 0, 1, 1, 1]
    nu, C = sim.apply_policy(sim.ReflectAtBoundary(beta_tab), path, 0.0)
    assert np.all(np.diff(C) >= 0) and C[0] >= 0 and C[-1] <= 1
    assert C[2] == C[1]  # no new minimum, no purchase


def test_path_cost_by_hand():
    p, f = REFL_P, REFL_F
    x = np.array([1.0, 2.0, 3.0])
    C = np.array([0.0, 0.5, 0.5])
    dt = 0.1
    w = np.exp(-p.lam * np.arange(3) * dt) * x
    run = p.lam * (f(0.0) * 0.5 * dt * (w[0] + w[1]) + f(0.5) * 0.5 * dt * (w[1] + w[2]))
    assert sim.path_cost(x, C, 0.0, dt, p, f) == pytest.approx(run + 0.5 * w[1])


def test_trivial_policies():
    p, f = REFL_P, REFL_F
    est = sim.estimate_cost(sim.ImmediateFull(), 1.3, 0.2, p, f, SMALL)
    assert est.mean == pytest.approx(1.3 * 0.8) and est.std_error == 0.0
    assert sim.estimate_cost(sim.NoControl(), 1.3, 1.0, p, f, SMALL).mean == 0.0


def test_fast_and_dense_costs_agree(beta_tab, gamma_tab):
    cfg = SMALL
    n = sim._n_steps(cfg.horizon, cfg.dt)
    grid = sim._Grid(n, cfg.dt, REFL_P)
    cases = [
        (REFL_P, REFL_F, sim.ReflectAtBoundary(beta_tab), 1.2, 0.3),
        (REFL_P, REFL_F, sim.ReflectAtBoundary(beta_tab, 0.3), 0.5, 0.0),
        (REPL_P, REPL_F, sim.BangBangAtBoundary(gamma_tab), -0.8, 0.4),
        (REPL_P, REPL_F, sim.StopAndFillAt(0.2, "below"), 1.0, 0.1),
        (REPL_P, REPL_F, sim.NoControl(), 1.0, 0.1),
    ]
    for p, f, pol, x, c in cases:
        grid = sim._Grid(n, cfg.dt, p)
        z, _ = sim._path_streams(cfg, 0, 60, n)
        noise = sim._noise(z, grid)
        X = sim._paths(x, noise, grid, p)
        dense = sim._dense_costs(sim._policy_C(pol, X, c), X, c, grid, p, f)
        fast = sim._block_costs(sim._BlockData(noise, grid, p), x, c, [pol], p, f)[0]
        assert np.allclose(fast, dense, rtol=1e-12, atol=1e-12)
        one = sim.path_cost(X[7], sim._policy_C(pol, X[7:8], c)[0], c, cfg.dt, p, f)
        assert one == pytest.approx(dense[7], abs=1e-12)


def test_antithetic_pairs_mirror_noise():
    z, _ = sim._path_streams(SMALL, 0, 4, 50)
    assert np.array_equal(z[0], -z[1]) and np.array_equal(z[2], -z[3])
    assert not np.array_equal(z[0], z[2])


def test_reproducible_across_blocks_and_threads(beta_tab):
    pol = sim.ReflectAtBoundary(beta_tab)
    base = sim.estimate_cost(pol, 1.0, 0.5, REFL_P, REFL_F, SMALL)
    again = sim.estimate_cost(pol, 1.0, 0.5, REFL_P, REFL_F, SMALL)
    assert base == again
    for kw in ({"threads": 1}, {"threads": 3}, {"block_size": 40}):
        other = sim.SimConfig(**{**SMALL.to_dict(), **kw})
        assert sim.estimate_cost(pol, 1.0, 0.5, REFL_P, REFL_F, other).mean == base.mean
    moved = sim.SimConfig(**{**SMALL.to_dict(), "seed": 12})
    assert sim.estimate_cost(pol, 1.0, 0.5, REFL_P, REFL_F, moved).mean != base.mean


def test_horizon_rule_and_bound():
    T = sim.horizon_for([1.0], 0.0, REFL_P, REFL_F, 1e-4)
    assert sim.truncation_bound([1.0], 0.0, REFL_P, REFL_F, T) == pytest.approx(1e-4, rel=1e-9)


def test_no_control_matches_closed_form():
    from finfuel.oracle import no_control_cost

    cfg = sim.SimConfig(dt=2e-3, n_paths=4000, seed=5, block_size=500, bias_study=False)
    est = sim.estimate_cost(sim.NoControl(), 1.4, 0.2, REFL_P, REFL_F, cfg)
    exact = float(no_control_cost(1.4, 0.2, REFL_P, REFL_F))
    assert abs(est.mean - exact) <= est.allowance() + 1e-4


def test_sscds_stop_now_is_immediate_purchase():
    est = sim.estimate_sscds_cost(sim.NoControl(), sim.StopNow(), 0.7, 0.25, REPL_P, REPL_F, SMALL)
    assert est.mean == pytest.approx(0.7 * 0.75) and est.std_error < 1e-15


def test_random_maturity_immediate_full():
    est = sim.estimate_random_maturity_cost(sim.ImmediateFull(), 0.7, 0.25, REPL_P, REPL_F, SMALL)
    assert est.mean == pytest.approx(0.7 * 0.75)


def test_laplace_exact_edge_cases():
    assert sim.laplace_hitting_exact(1.0, 1.0, REFL_P) == 1.0
    assert 0 < sim.laplace_hitting_exact(1.5, 1.0, REFL_P) < 1
    assert 0 < sim.laplace_hitting_exact(0.5, 1.0, REFL_P) < 1
    assert sim.estimate_laplace_hitting(1.0, 1.0, REFL_P, SMALL).mean == 1.0


def test_skorokhod_deep_inaction_has_no_pushes(beta_tab):
    cfg = sim.SimConfig(dt=2e-3, horizon=1.0, n_paths=200, seed=2, block_size=100)
    rep = sim.skorokhod_check(2.5, 0.9, REFL_P, REFL_F, beta_tab, cfg)
    assert rep.ok
    bad = sim.skorokhod_check(1.0, 0.2, REFL_P, REFL_F, beta_tab, cfg, policy=sim.ReflectAtBoundary(beta_tab, 0.5))
    assert not bad.ok and bad.examples


def test_dump_and_json(tmp_path, beta_tab):
    path = tmp_path / "paths.csv"
    sim.dump_paths_csv(path, sim.ReflectAtBoundary(beta_tab), 0.6, 0.2, REFL_P, SMALL, k=3, horizon=0.1)
    rows = list(csv.DictReader(open(path)))
    assert {r["path"] for r in rows} == {"0", "1", "2"}
    for r in rows:
        assert float(r["nu"]) == pytest.approx(float(r["C"]) - 0.2)
    est = {"a": sim.estimate_cost(sim.ImmediateFull(), 1.0, 0.0, REFL_P, REFL_F, SMALL)}
    text = sim.estimate_json(est, {"k": 1})
    assert json.loads(text)["estimates"]["a"]["mean"] == 1.0
    assert text == sim.estimate_json(est, {"k": 1})


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.5, 2.5), st.floats(0.0, 0.95), st.floats(-0.3, 0.3), st.integers(0, 2**32))
def test_controls_are_admissible(x, c, shift, seed):
    b = _beta()
    cfg = sim.SimConfig(dt=5e-3, horizon=1.0, n_paths=8, seed=seed, block_size=8)
    n = sim._n_steps(cfg.horizon, cfg.dt)
    grid = sim._Grid(n, cfg.dt, REFL_P)
    z, _ = sim._path_streams(cfg, 0, 8, n)
    X = sim._paths(x, sim._noise(z, grid), grid, REFL_P)
    for pol in (sim.ReflectAtBoundary(b, shift), sim.BangBangAtBoundary(b, shift), sim.NoControl()):
        C = sim._policy_C(pol, X, c)
        assert np.all(C >= c) and np.all(C <= 1.0)
        assert np.all(np.diff(C, axis=1) >= 0)


_B = {}


def _beta():
    if "b" not in _B:
        from finfuel.stopping import tabulate_beta

        _B["b"] = tabulate_beta(REFL_P, REFL_F, n=51)
    return _B["b"]


def test_reflect_policy_tracks_F_roughly(beta_tab):
    cfg = sim.SimConfig(dt=2e-3, n_paths=2000, seed=9, block_size=500)
    est = sim.estimate_cost(sim.ReflectAtBoundary(beta_tab), 1.0, 0.5, REFL_P, REFL_F, cfg)
    F = value.F_value(1.0, 0.5, REFL_P, REFL_F, beta_tab).value
    assert abs(est.mean - F) <= est.allowance()
