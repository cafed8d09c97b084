import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from finfuel import model
from finfuel.errors import DomainError
from finfuel.model import CostFn, ModelParams, RegimeKind

from conftest import REFL_F, REFL_P, REPL_F, REPL_P


def test_params_validation():
    with pytest.raises(DomainError):
        ModelParams(0.0, 1.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        ModelParams(1.0, 1.0, 1.0, float("nan"))
    p = ModelParams(1.0, 2.0, 1.0, 0.5)
    assert p.length_scale == pytest.approx(0.25)
    assert p.nu == 0.5
    assert p.to_dict() == {"lambda": 1.0, "theta": 2.0, "mu": 1.0, "sigma": 0.5}


def test_cost_families_pass_check():
    for f in (CostFn.quadratic(1.0), CostFn.linear_quadratic(4.0), CostFn.quadratic(0.3)):
        f.check()
        assert f(1.0) == 0.0


@pytest.mark.parametrize("spec", [
    {"family": "quadratic", "kappa": -1.0},
    {"family": "quadratic", "kappa": 0.0},
])
def test_cost_check_rejects_bad_kappa(spec):
    with pytest.raises(DomainError):
        CostFn.from_spec(spec).check()


def test_cost_spec_errors():
    with pytest.raises(DomainError):
        CostFn.from_spec({"family": "cubic", "kappa": 1.0})
    with pytest.raises(DomainError):
        CostFn.from_spec({"family": "quadratic", "kappa": 1.0, "kapa": 2.0})
    bad = CostFn(lambda c: (1 - c) ** 2, lambda c: 2 * (1 - c), lambda c: 2.0 + 0 * c)
    with pytest.raises(DomainError):
        bad.check()


def test_reference_regimes():
    r = model.regime(REFL_P, REFL_F)
    assert r.kind is RegimeKind.REFLECTING and r.c_hat == pytest.approx(-0.5)
    r = model.regime(REPL_P, REPL_F)
    assert r.kind is RegimeKind.REPELLING and r.c_hat == pytest.approx(1.5)
    r = model.regime(REPL_P, CostFn.linear_quadratic(1.5))
    assert r.kind is RegimeKind.MIXED and r.c_hat == pytest.approx(2.0 / 3.0)


def test_regime_ties():
    # k(0) = 0 exactly: lam + theta = 2 lam kappa
    r = model.regime(ModelParams(1.0, 1.0, 1.0, 0.5), CostFn.quadratic(1.0))
    assert r.kind is RegimeKind.REFLECTING and r.c_hat == 0.0
    # k(1) = 0 exactly for linear-quadratic: lam + theta = lam kappa
    r = model.regime(ModelParams(1.0, 1.0, 1.0, 0.5), CostFn.linear_quadratic(2.0))
    assert r.kind is RegimeKind.REPELLING and r.c_hat == 1.0


def test_perpetual_flow_matches_quadrature():
    p, f = REFL_P, REFL_F
    for x, c in [(0.3, 0.2), (1.7, 0.8), (-0.5, 0.0)]:
        kc = float(model.k(c, p, f))
        val, _ = integrate.quad(lambda s: math.exp(-p.lam * s) * (kc * model.mean_X(x, s, p) - p.theta * p.mu), 0, np.inf)
        assert float(model.G(x, c, p, f)) == pytest.approx(val, rel=1e-9)
        assert float(model.G(model.x0(c, p, f), c, p, f)) == pytest.approx(0.0, abs=1e-12)


def test_zeta_is_integral_of_k():
    for p, f in [(REFL_P, REFL_F), (REPL_P, REPL_F)]:
        for c in (0.0, 0.3, 0.9):
            val, _ = integrate.quad(lambda y: float(model.k(y, p, f)), c, 1.0)
            assert float(model.zeta(c, p, f)) == pytest.approx(val, rel=1e-10)


def test_repelling_levels_continuous_at_one():
    p, f = REPL_P, REPL_F
    for fn in (model.x_bar0, model.x_tilde):
        assert fn(1.0 - 1e-7, p, f) == pytest.approx(fn(1.0, p, f), rel=1e-5)


def test_x_hat0_needs_positive_k():
    with pytest.raises(DomainError):
        model.x_hat0(0.5, REPL_P, REPL_F)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.floats(0.1, 5.0), st.sampled_from(["quadratic", "linear_quadratic"]))
def test_regime_agrees_with_sign_of_k(lam, theta, kappa, fam):
    p = ModelParams(lam, theta, 1.0, 0.5)
    f = CostFn.from_spec({"family": fam, "kappa": kappa})
    r = model.regime(p, f)
    k0, k1 = float(model.k(0.0, p, f)), float(model.k(1.0, p, f))
    if r.kind is RegimeKind.REFLECTING:
        assert k0 >= -1e-12
    elif r.kind is RegimeKind.REPELLING:
        assert k1 <= 1e-12
    else:
        assert k0 < 0 < k1
