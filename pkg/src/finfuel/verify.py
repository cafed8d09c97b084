"""Invariant suite for one configuration.

Each check returns a :class:`Check`; exceptions raised inside a check are
recorded as failures rather than propagated, so a single run reports
everything that is wrong.
"""

from __future__ import annotations

import math
import traceback
from dataclasses import asdict, dataclass, field

import numpy as np

from . import model, oracle, simulate, special, stopping, value
from .model import RegimeKind


@dataclass
class Check:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _run(name, fn):
    try:
        ok, detail = fn()
        return Check(name, bool(ok), detail)
    except Exception as exc:  # recorded, not raised
        return Check(name, False, {"error": f"{type(exc).__name__}: {exc}",
                                   "where": traceback.format_exc(limit=2).splitlines()[-1]})


def _xgrid(p, n):
    lo, hi = oracle.interior(p)
    return np.linspace(lo, hi, n)


# ---------------------------------------------------------------------------
# shared


def check_special(p, n=201):
    xs = _xgrid(p, n)
    worst = max(special.ode_relative_residual(x, p, w) for x in xs for w in ("phi", "psi"))
    return worst <= 1e-6, {"max_relative_ode_residual": worst}


def check_mc_reproducible(p, f, pol, x, c, sim):
    cfg = simulate.SimConfig(**{**sim.to_dict(), "n_paths": min(sim.n_paths, 1000), "bias_study": False})
    a = simulate.estimate_cost(pol, x, c, p, f, cfg)
    b = simulate.estimate_cost(pol, x, c, p, f, cfg)
    return a == b, {"first": a.mean, "second": b.mean}


def check_laplace(p, sim, x, y):
    cfg = simulate.SimConfig(**{**sim.to_dict(), "bias_study": False})
    est = simulate.estimate_laplace_hitting(x, y, p, cfg)
    exact = simulate.laplace_hitting_exact(x, y, p)
    return abs(est.mean - exact) <= est.allowance(), {"mc": est.mean, "exact": exact, "se": est.std_error}


def _oracle_checks(p, f, bnd, side, ref, tol):
    try:
        return _oracle_checks_inner(p, f, bnd, side, ref, tol)
    except Exception as exc:  # recorded, not raised
        return [Check("oracle_checks", False, {"error": f"{type(exc).__name__}: {exc}"})]


def _oracle_checks_inner(p, f, bnd, side, ref, tol):
    grid = oracle.default_grid(p, 201, 51, bnd.x_values)
    surf = oracle.solve_hjb_grid(p, f, grid, tol["oracle"], int(tol["oracle_max_sweeps"]))
    out = []
    err = oracle.relative_error(surf, ref, oracle.interior(p))
    out.append(Check("oracle_relative_error", err <= tol["oracle_rel_error"], {"relative_error": err, "n_x": 201, "n_c": 51}))
    ends = oracle.region_endpoints(surf, side)
    gaps = [abs(x - bnd(c)) / grid.dx for c, x in ends[1:-1]]
    worst = max(gaps) if gaps and not any(math.isnan(g) for g in gaps) else math.inf
    out.append(Check("oracle_boundary_within_2_cells", worst <= 2.0, {"max_gap_cells": worst}))
    out.append(Check("oracle_terminal_column_zero", bool(np.all(surf.values[:, -1] == 0.0)), {}))
    xs, cs = grid.x, grid.c
    upper = np.minimum(xs[:, None] * (1.0 - cs[None, :]), oracle.no_control_cost(xs[:, None], cs[None, :], p, f))
    excess = float(np.max(surf.values - upper))
    out.append(Check("oracle_below_action_and_no_control", excess <= 1e-12 * max(1.0, float(np.max(np.abs(upper)))),
                     {"max_excess": excess}))
    return out


# ---------------------------------------------------------------------------
# reflecting


def reflecting_checks(p, f, sim, tol, boundary=None):
    res = [_run("special_ode_residual", lambda: check_special(p))]
    b = boundary
    if b is None:
        b = stopping.tabulate_beta(p, f, int(tol["boundary_nodes"]), tol["boundary_eps"], tol["root"])
    cs = b.c_grid

    def smooth_fit():
        worst_h = worst_ux = 0.0
        for c, x in zip(cs, b.x_values):
            scale = max(1.0, abs(float(model.G_x(c, p, f))))
            worst_h = max(worst_h, abs(stopping.H(x, c, p, f)) / scale)
            worst_ux = max(worst_ux, abs(stopping.u_derivs(x + 1e-6, c, p, f, b)[1]))
        return worst_h <= 1e-10 and worst_ux <= 1e-4, {"max_H": worst_h, "max_u_x": worst_ux}

    def ordering():
        ok = bool(np.all(np.diff(b.x_values) < 0))
        gap = min(min(float(model.x0(c, p, f)), float(model.x_hat0(c, p, f))) - x for c, x in zip(cs, b.x_values))
        return ok and gap > 0, {"strictly_decreasing": ok, "min_gap_below_x0_xhat0": gap}

    res += [_run("beta_smooth_fit", smooth_fit), _run("beta_ordering", ordering)]

    xs = _xgrid(p, 21)
    cgrid = np.linspace(0.0, 1.0, 11)

    def hjb():
        worst_eq = worst_ineq = 0.0
        for x in xs:
            for c in cgrid:
                pde, grad = value.hjb_residual_reflecting(x, c, p, f, b)
                ev = value.F_value(x, c, p, f, b)
                s = value.residual_scale(x, c, p, f, ev.value)
                eq = abs(grad) if ev.region is value.Region.ACTION else abs(pde)
                worst_eq = max(worst_eq, eq / s)
                worst_ineq = max(worst_ineq, max(pde, grad) / s)
        return worst_eq <= tol["residual"] and worst_ineq <= tol["residual"], \
            {"max_equality_residual": worst_eq, "max_inequality_excess": worst_ineq}

    def concavity_and_derivs():
        h = 1e-3 * p.length_scale
        worst_conc = worst_d = 0.0
        for c in (0.0, 0.3, 0.7):
            vals = np.array([value.F_value(x, c, p, f, b).value for x in xs])
            worst_conc = max(worst_conc, float(np.max(np.diff(vals, 2))))
            for x in xs[::4]:
                ev = value.F_value(x, c, p, f, b)
                fp, fm = value.F_value(x + h, c, p, f, b).value, value.F_value(x - h, c, p, f, b).value
                d1 = (fp - fm) / (2 * h)
                worst_d = max(worst_d, abs(d1 - ev.d_x) / max(1.0, abs(ev.d_x)))
        return worst_conc <= 1e-8 and worst_d <= 1e-5, {"max_second_difference": worst_conc, "max_dx_mismatch": worst_d}

    res += [_run("hjb_residual_reflecting", hjb), _run("F_concave_and_derivatives", concavity_and_derivs)]
    res += _oracle_checks(p, f, b, "left", lambda x, c: value.F_value(x, c, p, f, b).value, tol)

    x_mc, c_mc = float(b(0.5)) + p.length_scale, 0.5

    def mc_value():
        est = simulate.estimate_cost(simulate.ReflectAtBoundary(b), x_mc, c_mc, p, f, sim)
        ref = value.F_value(x_mc, c_mc, p, f, b).value
        return abs(est.mean - ref) <= est.allowance(tol["n_se"]) + 1e-12, \
            {"mc": est.mean, "F": ref, "se": est.std_error, "dt_bias": est.dt_bias}

    def skorokhod():
        cfg = simulate.SimConfig(**{**sim.to_dict(), "n_paths": min(sim.n_paths, 2000)})
        good = simulate.skorokhod_check(x_mc, c_mc, p, f, b, cfg, grid_tol=tol["skorokhod"])
        bad = simulate.skorokhod_check(x_mc, c_mc, p, f, b, cfg,
                                       policy=simulate.ReflectAtBoundary(b, 0.5), grid_tol=tol["skorokhod"])
        return good.ok and bad.push_violations > 0, {"violations": good.push_violations + good.inside_violations,
                                                      "corrupted_violations": bad.push_violations}

    res += [
        _run("mc_reflect_matches_F", mc_value),
        _run("skorokhod_conditions", skorokhod),
        _run("mc_reproducible", lambda: check_mc_reproducible(p, f, simulate.ReflectAtBoundary(b), x_mc, c_mc, sim)),
        _run("laplace_hitting", lambda: check_laplace(p, simulate.SimConfig(
            **{**sim.to_dict(), "n_paths": min(sim.n_paths, 4000)}), p.mu + p.length_scale, p.mu)),
    ]
    return res


# ---------------------------------------------------------------------------
# repelling


def repelling_checks(p, f, sim, tol, boundary=None):
    res = [_run("special_ode_residual", lambda: check_special(p))]
    g = boundary
    if g is None:
        g = value.tabulate_gamma(p, f, int(tol["boundary_nodes"]), tol["boundary_eps"], tol["root"])
    cs = g.c_grid

    def root_and_order():
        ok = bool(np.all(np.diff(g.x_values) < 0))
        worst_root = 0.0
        gap = math.inf
        for c, x in zip(cs, g.x_values):
            worst_root = max(worst_root, abs(value.H_bar(x, c, p, f)))
            gap = min(gap, x - max(float(model.x_bar0(c, p, f)), float(model.x_tilde(c, p, f))))
        return ok and gap > 0 and worst_root <= 1e-9, \
            {"strictly_decreasing": ok, "min_gap_above_xbar0_xtilde": gap, "max_H_bar": worst_root}

    def a_consistency():
        for c, x in zip(cs, g.x_values):
            value.A_coeff(c, p, f, x, rel_tol=tol["a_coeff_rel"])
        return True, {"nodes": int(cs.size)}

    def jump_sign():
        vals = [value.w_cx_jump(c, p, f, x) for c, x in zip(cs, g.x_values) if c < 1.0]
        return max(vals) < 0, {"max_jump": max(vals)}

    res += [_run("gamma_root_and_ordering", root_and_order), _run("A_two_forms_agree", a_consistency),
            _run("w_cx_jump_negative", jump_sign)]

    xs = _xgrid(p, 21)
    cgrid = np.linspace(0.0, 1.0, 11)

    def hjb():
        worst_eq = worst_ineq = 0.0
        for x in xs:
            for c in cgrid:
                pde, grad = value.hjb_residual_repelling(x, c, p, f, g)
                ev = value.W_value(x, c, p, f, g)
                s = value.residual_scale(x, c, p, f, ev.value)
                eq = abs(grad) if ev.region is value.Region.ACTION else abs(pde)
                worst_eq = max(worst_eq, eq / s)
                worst_ineq = max(worst_ineq, max(pde, grad) / s)
        return worst_eq <= tol["residual"] and worst_ineq <= tol["residual"], \
            {"max_equality_residual": worst_eq, "max_inequality_excess": worst_ineq}

    def growth():
        big = np.linspace(oracle.interior(p)[0] - 10, oracle.interior(p)[1] + 10, 41)
        k = max(abs(value.W_value(x, c, p, f, g).value) / (1 + abs(x)) for x in big for c in cgrid)
        return math.isfinite(k), {"fitted_K": k}

    res += [_run("hjb_residual_repelling", hjb), _run("W_linear_growth", growth)]
    res += _oracle_checks(p, f, g, "right", lambda x, c: value.W_value(x, c, p, f, g).value, tol)

    c_mc = 0.5
    x_mc = float(g(c_mc)) - 2 * p.length_scale

    def mc_value():
        est = simulate.estimate_cost(simulate.BangBangAtBoundary(g), x_mc, c_mc, p, f, sim)
        ref = value.W_value(x_mc, c_mc, p, f, g).value
        return abs(est.mean - ref) <= est.allowance(tol["n_se"]) + 1e-12, \
            {"mc": est.mean, "W": ref, "se": est.std_error, "dt_bias": est.dt_bias}

    res += [
        _run("mc_bang_bang_matches_W", mc_value),
        _run("mc_reproducible", lambda: check_mc_reproducible(p, f, simulate.BangBangAtBoundary(g), x_mc, c_mc, sim)),
        _run("laplace_hitting", lambda: check_laplace(p, simulate.SimConfig(
            **{**sim.to_dict(), "n_paths": min(sim.n_paths, 4000)}), p.mu - p.length_scale, p.mu)),
    ]
    return res


def mixed_checks(p, f, sim, tol):
    res = [_run("special_ode_residual", lambda: check_special(p))]

    def solve():
        grid = oracle.default_grid(p, 201, 51)
        surf = oracle.solve_hjb_grid(p, f, grid, tol["oracle"], int(tol["oracle_max_sweeps"]))
        zero = bool(np.all(surf.values[:, -1] == 0.0))
        return zero, {"residual": surf.residual, "max_policy_iterations": int(surf.iterations.max())}

    res.append(_run("oracle_mixed_solves", solve))
    return res


def run_all(p, f, sim, tol, boundary=None):
    reg = model.regime(p, f)
    if reg.kind is RegimeKind.REFLECTING:
        checks = reflecting_checks(p, f, sim, tol, boundary)
    elif reg.kind is RegimeKind.REPELLING:
        checks = repelling_checks(p, f, sim, tol, boundary)
    else:
        checks = mixed_checks(p, f, sim, tol)
    return reg, checks
