"""Control value functions in the two solvable regimes.

Reflecting regime (k > 0 on [0, 1]):
    F(x, c) = x (1 - c) - int_c^1 u(x; y) dy,
which on the inaction set reduces to an affine part plus
``phi(x) * int_c^1 G(beta(y); y) / phi(beta(y)) dy``.

Repelling regime (k < 0 on [0, 1]):
    W(x, c) = x (1 - c) on x >= gamma(c), and a psi-branch below it.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from . import model
from .errors import BracketError, DomainError, InconsistencyError
from .model import CostFn, ModelParams
from .special import DEFAULT_QUAD, QuadratureConfig, log_phi_derivs, log_psi_derivs
from .stopping import Boundary, u_derivs

_MAX_DOUBLINGS = 200


class Region(enum.Enum):
    INACTION = "inaction"
    ACTION = "action"


@dataclass(frozen=True)
class ValueEval:
    value: float
    d_x: float
    d_xx: float
    d_c: float
    region: Region


# ---------------------------------------------------------------------------
# quadrature


def adaptive_simpson(fn, a: float, b: float, rel_tol: float = 1e-9, max_depth: int = 40) -> float:
    """Adaptive Simpson rule with Richardson correction."""
    if b == a:
        return 0.0
    fa, fm, fb = fn(a), fn(0.5 * (a + b)), fn(b)
    whole = (b - a) / 6.0 * (fa + 4 * fm + fb)
    tol = rel_tol * max(abs(whole), 1e-300)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = fn(lm), fn(rm)
        left = (m - a) / 6.0 * (fa + 4 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4 * frm + fb)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15 * tol:
            return left + right + delta / 15.0
        return rec(a, m, fa, flm, fm, left, tol / 2, depth - 1) + rec(m, b, fm, frm, fb, right, tol / 2, depth - 1)

    return rec(a, b, fa, fm, fb, whole, tol, max_depth)


# ---------------------------------------------------------------------------
# reflecting regime


class _ReflectTables:
    """Per-boundary data for F: y -> log(-G(beta(y); y)) - log phi(beta(y))."""

    def __init__(self, p, f, b: Boundary, cfg, rel_tol):
        ys = b.c_grid
        gb = np.array([float(model.G(bx, y, p, f)) for y, bx in zip(ys, b.x_values)])
        if np.any(gb >= 0):
            j = int(np.argmax(gb >= 0))
            raise DomainError(f"boundary value {b.x_values[j]:.6g} at c={ys[j]:.6g} is not below x0(c)")
        lw = np.log(-gb) - np.array([log_phi_derivs(bx, p, cfg)[0] for bx in b.x_values])
        self.ref = float(lw.max())
        self.spline = CubicSpline(ys, lw - self.ref)
        self.ys = ys
        pieces = [
            adaptive_simpson(self._weight, float(ys[j]), float(ys[j + 1]), rel_tol) for j in range(len(ys) - 1)
        ]
        # tail[j] = int_{ys[j]}^{1} exp(lw - ref)
        self.tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
        self.rel_tol = rel_tol

    def _weight(self, y):
        return math.exp(float(self.spline(y)))

    def tail_from(self, a: float) -> float:
        if a >= self.ys[-1]:
            return 0.0
        a = max(a, float(self.ys[0]))
        j = int(np.searchsorted(self.ys, a))
        if self.ys[j] == a:
            return float(self.tail[j])
        return adaptive_simpson(self._weight, a, float(self.ys[j]), self.rel_tol) + float(self.tail[j])


def _tables(p, f, b, cfg, rel_tol):
    key = ("reflect", p, f.family, f.params, cfg, rel_tol)
    t = b._cache.get(key)
    if t is None:
        t = _ReflectTables(p, f, b, cfg, rel_tol)
        b._cache[key] = t
    return t


def _int_G(x, a, p, f):
    """int_a^1 G(x; y) dy in closed form."""
    z = float(model.zeta(a, p, f))
    return p.mu * (z - p.theta * (1.0 - a)) / p.lam + z * (x - p.mu) / (p.lam + p.theta)


def F_value(
    x, c, p: ModelParams, f: CostFn, b: Boundary, cfg: QuadratureConfig = DEFAULT_QUAD, rel_tol: float = 1e-9
) -> ValueEval:
    """Value of the reflecting-regime control problem with derivatives."""
    x, c = float(x), float(c)
    action = x <= b(c)
    if c >= 1.0:
        return ValueEval(0.0, 0.0, 0.0, -x + (0.0 if action else u_derivs(x, 1.0, p, f, b, cfg)[0]),
                         Region.ACTION if action else Region.INACTION)
    a = b.inverse(x) if action else c
    a = max(a, c)
    tab = _tables(p, f, b, cfg, rel_tol)
    lx, r1, r2 = log_phi_derivs(x, p, cfg)
    q = tab.tail_from(a)
    e = math.exp(lx + tab.ref) * q if q > 0 else 0.0
    val = x * (1.0 - c) - _int_G(x, a, p, f) - e
    dx = (1.0 - c) - float(model.zeta(a, p, f)) / (p.lam + p.theta) - e * r1
    dxx = -e * r2
    dc = -x + (0.0 if action else u_derivs(x, c, p, f, b, cfg)[0])
    return ValueEval(val, dx, dxx, dc, Region.ACTION if action else Region.INACTION)


def generator_minus_lam(ev: ValueEval, x, p: ModelParams) -> float:
    """(L_X - lam) applied through the analytic derivatives of ``ev``."""
    return 0.5 * p.sigma**2 * ev.d_xx + p.theta * (p.mu - x) * ev.d_x - p.lam * ev.value


def _fd_generator(fn, x, h, p):
    v0, vp, vm = fn(x), fn(x + h), fn(x - h)
    d1 = (vp - vm) / (2 * h)
    d2 = (vp - 2 * v0 + vm) / (h * h)
    return 0.5 * p.sigma**2 * d2 + p.theta * (p.mu - x) * d1 - p.lam * v0


def hjb_residual_reflecting(
    x, c, p: ModelParams, f: CostFn, b: Boundary, cfg: QuadratureConfig = DEFAULT_QUAD,
    method: str = "analytic", h: float | None = None,
):
    """(pde_term, gradient_term) of max{-L w + lam w - lam x Phi, -w_c - x} on F."""
    ev = F_value(x, c, p, f, b, cfg)
    if method == "analytic":
        lw = generator_minus_lam(ev, x, p)
    elif method == "fd":
        h = h or 1e-4 * p.length_scale
        lw = _fd_generator(lambda y: F_value(y, c, p, f, b, cfg).value, x, h, p)
    else:
        raise ValueError(f"unknown method {method!r}")
    pde = -lw - p.lam * x * float(f.phi(c))
    grad = -ev.d_c - x
    return pde, grad


def residual_scale(x, c, p: ModelParams, f: CostFn, value: float) -> float:
    return max(1.0, abs(p.lam * x * float(f.phi(c))), abs(value))


# ---------------------------------------------------------------------------
# repelling regime


def _affine_coeffs(c, p, f):
    """(slope, b(x) pieces) of the bracketed terms in H_bar."""
    ph = float(f.phi(c))
    a = (1.0 - c) - p.lam * ph / (p.lam + p.theta)
    return ph, a


def _b_term(x, c, p, f):
    ph = float(f.phi(c))
    return x * (1.0 - c) - p.lam * ph * ((x - p.mu) / (p.lam + p.theta) + p.mu / p.lam)


def H_bar(x, c, p: ModelParams, f: CostFn, x_ref: float | None = None, cfg: QuadratureConfig = DEFAULT_QUAD):
    """psi(x) a(c) - psi'(x) b(x, c), divided by psi(x_ref) (x_ref=None: by psi(x))."""
    lx, s1, _ = log_psi_derivs(x, p, cfg)
    ratio = 1.0 if x_ref is None else math.exp(lx - log_psi_derivs(x_ref, p, cfg)[0])
    _, a = _affine_coeffs(c, p, f)
    return ratio * (a - s1 * _b_term(x, c, p, f))


def _require_repelling(c, p, f):
    if float(c) < 1.0:
        z = float(model.zeta(c, p, f))
        if not z < 0:
            raise DomainError(f"zeta({c}) = {z:.6g} >= 0: no repelling boundary at this level")
    elif not float(model.k(1.0, p, f)) < 0:
        raise DomainError("k(1) >= 0: no repelling boundary at c = 1")


def _m(x, xb, p, cfg):
    """1 - (psi'/psi)(x) (x - xb) and its derivative; same root as H_bar."""
    _, s1, s2 = log_psi_derivs(x, p, cfg)
    return 1.0 - s1 * (x - xb), -(s2 - s1 * s1) * (x - xb) - s1


def gamma_star(c, p: ModelParams, f: CostFn, tol: float = 1e-12, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Unique solution above x_bar0(c) of psi/psi' = x - x_bar0(c)."""
    _require_repelling(c, p, f)
    xb = float(model.x_bar0(c, p, f))
    lo = xb
    step = p.length_scale
    hi = xb + step
    n = 0
    while _m(hi, xb, p, cfg)[0] > 0:
        lo = hi
        step *= 2.0
        hi = xb + step
        n += 1
        if n > _MAX_DOUBLINGS:
            raise BracketError(
                f"no sign change of H_bar above x_bar0={xb:.6g} for c={c} after {n} doublings"
            )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _m(mid, xb, p, cfg)[0] > 0:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(4):
        val, dval = _m(x, xb, p, cfg)
        if val == 0.0 or dval >= 0:
            break
        xn = x - val / dval
        if not (lo - tol <= xn <= hi + tol):
            break
        done = abs(xn - x) < 1e-16 * max(1.0, abs(x))
        x = xn
        if done:
            break
    return x


def tabulate_gamma(
    p: ModelParams, f: CostFn, n: int = 201, eps: float = 1e-3, tol: float = 1e-12, cfg: QuadratureConfig = DEFAULT_QUAD
) -> Boundary:
    """gamma_star on a uniform c-grid; stops at 1 - eps when k(1) = 0."""
    top = 1.0 if float(model.k(1.0, p, f)) < -1e-12 else 1.0 - eps
    cs = np.linspace(0.0, top, n)
    xs = np.array([gamma_star(float(c), p, f, tol, cfg) for c in cs])
    return Boundary(cs, xs, "gamma")


def A_coeff(c, p: ModelParams, f: CostFn, gamma: float, cfg: QuadratureConfig = DEFAULT_QUAD, rel_tol: float = 1e-8) -> float:
    """Coefficient of psi in W below gamma; both closed forms must agree."""
    if float(c) == 1.0:
        return 0.0
    lg, s1, _ = log_psi_derivs(gamma, p, cfg)
    _, a = _affine_coeffs(c, p, f)
    inv = math.exp(-lg)
    a1 = _b_term(gamma, c, p, f) * inv
    a2 = a * inv / s1
    if abs(a1 - a2) > rel_tol * max(abs(a1), abs(a2)):
        raise InconsistencyError(f"A(c) forms disagree at c={c}: {a1!r} vs {a2!r}")
    return a1


def W_value(x, c, p: ModelParams, f: CostFn, g: Boundary, cfg: QuadratureConfig = DEFAULT_QUAD) -> ValueEval:
    x, c = float(x), float(c)
    gam = g(c)
    if x >= gam:
        return ValueEval(x * (1.0 - c), 1.0 - c, 0.0, -x, Region.ACTION)
    ph = float(f.phi(c))
    lx, s1, s2 = log_psi_derivs(x, p, cfg)
    lg = log_psi_derivs(gam, p, cfg)[0]
    ratio = math.exp(lx - lg)
    bg = _b_term(gam, c, p, f)
    aff = p.lam * ph * ((x - p.mu) / (p.lam + p.theta) + p.mu / p.lam)
    val = ratio * bg + aff
    dx = ratio * s1 * bg + p.lam * ph / (p.lam + p.theta)
    dxx = ratio * s2 * bg
    dc = -x + float(model.G(x, c, p, f)) - ratio * float(model.G(gam, c, p, f))
    return ValueEval(val, dx, dxx, dc, Region.INACTION)


def w_cx_jump(c, p: ModelParams, f: CostFn, gamma: float) -> float:
    """Left limit W_cx(gamma-, c) + 1; the right limit is exactly zero."""
    if float(c) == 1.0:
        return 0.0
    ph, dph = float(f.phi(c)), float(f.phi_prime(c))
    z = float(model.zeta(c, p, f))
    xb = float(model.x_bar0(c, p, f))
    return -(p.theta * p.mu / z) / (gamma - xb) * (dph * (1.0 - c) + ph)


def hjb_residual_repelling(
    x, c, p: ModelParams, f: CostFn, g: Boundary, cfg: QuadratureConfig = DEFAULT_QUAD,
    method: str = "analytic", h: float | None = None,
):
    ev = W_value(x, c, p, f, g, cfg)
    if method == "analytic":
        lw = generator_minus_lam(ev, x, p)
    elif method == "fd":
        h = h or 1e-4 * p.length_scale
        lw = _fd_generator(lambda y: W_value(y, c, p, f, g, cfg).value, x, h, p)
    else:
        raise ValueError(f"unknown method {method!r}")
    pde = -lw - p.lam * x * float(f.phi(c))
    grad = -ev.d_c - x
    return pde, grad


# ---------------------------------------------------------------------------
# export


def value_rows(evaluator, xs, cs):
    """Rows (x, c, value, d_x, d_c, region) over the product grid."""
    rows = []
    for x in xs:
        for c in cs:
            ev = evaluator(float(x), float(c))
            rows.append((float(x), float(c), ev.value, ev.d_x, ev.d_c, ev.region.value))
    return rows


def write_value_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "c", "value", "d_x", "d_c", "region"])
        for r in rows:
            w.writerow([repr(r[0]), repr(r[1]), repr(float(r[2])), repr(float(r[3])), repr(float(r[4])), r[5]])
