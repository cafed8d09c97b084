"""Cylinder functions and the fundamental solutions of the OU resolvent equation.

The decreasing and increasing positive solutions of
``0.5 sigma^2 f'' + theta (mu - x) f' = lam f`` are

    phi(x) = exp(theta (x-mu)^2 / (2 sigma^2)) D_{-nu}(z),   z = (x-mu) sqrt(2 theta) / sigma
    psi(x) = exp(theta (x-mu)^2 / (2 sigma^2)) D_{-nu}(-z)

with ``nu = lam / theta``.  Substituting the integral representation of
``D_alpha`` the Gaussian prefactor cancels exactly, leaving

    phi(x) = I_0(z) / Gamma(nu),   I_n(z) = int_0^inf t^(nu-1+n) exp(-t^2/2 - z t) dt.

Everything here is computed from the log of the moments ``I_n``, so ratios
``phi(x)/phi(y)`` never overflow even where ``phi`` itself does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import ConvergenceError, DomainError
from .model import ModelParams

# Lanczos approximation, g = 7
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-250
    rel_tol: float = 1e-13
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0 and self.max_subdivisions >= 16):
            raise DomainError("QuadratureConfig needs abs_tol > 0, rel_tol > 0, max_subdivisions >= 16")


DEFAULT_QUAD = QuadratureConfig()


def log_gamma(x: float) -> float:
    if not x > 0:
        raise DomainError(f"Gamma is only evaluated for positive arguments, got {x!r}")
    if x < 0.5:
        return math.log(math.pi / math.sin(math.pi * x)) - log_gamma(1.0 - x)
    x -= 1.0
    a = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        a += _LANCZOS_COEF[i] / (x + i)
    t = x + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (x + 0.5) * math.log(t) - t + math.log(a)


def gamma_fn(x: float) -> float:
    return math.exp(log_gamma(x))


def _check(res, what):
    val, err, info = res[0], res[1], res[2]
    ier = 0 if len(res) == 3 else 1
    if ier and info.get("last", 0) >= info.get("limit", 10**9):
        raise ConvergenceError(f"{what}: subdivision limit reached (estimate {val!r}, error {err!r})")
    return val, err


@lru_cache(maxsize=200_000)
def _log_moment(q: float, z: float, cfg: QuadratureConfig) -> float:
    """log of int_0^inf t^q exp(-t^2/2 - z t) dt for q > -1.

    For z < 0 the factor exp(z^2/2) is pulled out analytically so the
    integrand peaks at O(1).
    """
    if q <= -1.0:
        raise DomainError("moment exponent must exceed -1")
    if z < 0:
        shift = 0.5 * z * z

        def expo(t):
            return -0.5 * (t + z) ** 2
    else:
        shift = 0.0

        def expo(t):
            return -t * (0.5 * t + z)

    # stationary points of q log t - t^2/2 - z t
    disc = z * z + 4.0 * q
    breaks = []
    if disc > 0:
        for r in ((-z + math.sqrt(disc)) / 2.0, (-z - math.sqrt(disc)) / 2.0):
            if r > 1.0:
                breaks.append(r)
    top = max([1.0] + breaks) + 40.0 + max(q, 0.0)

    kw = dict(epsabs=cfg.abs_tol, epsrel=cfg.rel_tol, limit=cfg.max_subdivisions, full_output=1)
    if q == 0.0:
        lo = _check(integrate.quad(lambda t: math.exp(expo(t)), 0.0, 1.0, **kw), "moment [0,1]")
    else:
        # algebraic weight t^q handles the endpoint singularity when q < 0
        lo = _check(
            integrate.quad(lambda t: math.exp(expo(t)), 0.0, 1.0, weight="alg", wvar=(q, 0.0), **kw),
            "moment [0,1]",
        )
    hi = _check(
        integrate.quad(
            lambda t: math.exp(q * math.log(t) + expo(t)),
            1.0,
            top,
            points=sorted(breaks) or None,
            **kw,
        ),
        "moment [1,inf)",
    )
    total = lo[0] + hi[0]
    err = lo[1] + hi[1]
    if not total > 0:
        raise ConvergenceError(f"non-positive moment integral for q={q}, z={z}")
    if err > max(cfg.abs_tol, 1e3 * cfg.rel_tol * total):
        raise ConvergenceError(f"moment integral error {err:.3e} exceeds tolerance (value {total:.6e})")
    return shift + math.log(total)


def log_cylinder_D(alpha: float, z: float, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    if not alpha < 0:
        raise DomainError("the integral representation needs alpha < 0")
    return -0.25 * z * z - log_gamma(-alpha) + _log_moment(-alpha - 1.0, float(z), cfg)


def cylinder_D(alpha: float, z: float, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Parabolic cylinder function D_alpha(z) for real alpha < 0."""
    return math.exp(log_cylinder_D(alpha, z, cfg))


def _z(x, p: ModelParams) -> float:
    return (float(x) - p.mu) * math.sqrt(2.0 * p.theta) / p.sigma


def _log_derivs(x, p: ModelParams, cfg: QuadratureConfig, sign: int):
    """(log f, f'/f, f''/f) for f = phi (sign=+1) or psi (sign=-1)."""
    z = sign * _z(x, p)
    q = p.nu - 1.0
    l0 = _log_moment(q, z, cfg)
    l1 = _log_moment(q + 1.0, z, cfg)
    dzdx = math.sqrt(2.0 * p.theta) / p.sigma
    logf = l0 - log_gamma(p.nu)
    # d/dz I_0(z) = -I_1(z); chain rule supplies the sign of dz/dx
    r1 = -sign * dzdx * math.exp(l1 - l0)
    r2 = 2.0 / p.sigma**2 * (p.lam - p.theta * (p.mu - float(x)) * r1)
    return logf, r1, r2


def log_derivs_direct(x, p: ModelParams, which: str = "phi", cfg: QuadratureConfig = DEFAULT_QUAD):
    """(log f, f'/f, f''/f) with f'' from its own moment integral, not the ODE.

    f'' = (dz/dx)^2 I_2 / Gamma(nu) for either solution, so this gives an
    independent check of the differential equation.
    """
    sign = {"phi": 1, "psi": -1}[which]
    z = sign * _z(x, p)
    q = p.nu - 1.0
    l0, l1, l2 = (_log_moment(q + k, z, cfg) for k in range(3))
    dzdx = math.sqrt(2.0 * p.theta) / p.sigma
    return l0 - log_gamma(p.nu), -sign * dzdx * math.exp(l1 - l0), dzdx * dzdx * math.exp(l2 - l0)


def ode_relative_residual(x, p: ModelParams, which: str = "phi", cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """|0.5 sigma^2 f'' + theta (mu - x) f' - lam f| / (lam f) with directly computed derivatives."""
    _, r1, r2 = log_derivs_direct(x, p, which, cfg)
    return abs(0.5 * p.sigma**2 * r2 + p.theta * (p.mu - float(x)) * r1 - p.lam) / p.lam


def log_phi_derivs(x, p: ModelParams, cfg: QuadratureConfig = DEFAULT_QUAD):
    """Return (log phi(x), phi'(x)/phi(x), phi''(x)/phi(x))."""
    return _log_derivs(x, p, cfg, +1)


def log_psi_derivs(x, p: ModelParams, cfg: QuadratureConfig = DEFAULT_QUAD):
    """Return (log psi(x), psi'(x)/psi(x), psi''(x)/psi(x))."""
    return _log_derivs(x, p, cfg, -1)


def log_phi_lambda(x, p: ModelParams, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    return _log_moment(p.nu - 1.0, _z(x, p), cfg) - log_gamma(p.nu)


def log_psi_lambda(x, p: ModelParams, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    return _log_moment(p.nu - 1.0, -_z(x, p), cfg) - log_gamma(p.nu)


def _exp_or_raise(v: float, name: str) -> float:
    if v > _LOG_MAX:
        raise OverflowError(f"{name} overflows (log value {v:.6g}); use the log_* variant")
    return math.exp(v)


def phi_lambda(x, p: ModelParams, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    return _exp_or_raise(log_phi_lambda(x, p, cfg), "phi_lambda")


def psi_lambda(x, p: ModelParams, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    return _exp_or_raise(log_psi_lambda(x, p, cfg), "psi_lambda")


def phi_derivs(x, p: ModelParams, cfg: QuadratureConfig = DEFAULT_QUAD):
    """(phi, phi', phi''); phi'' comes from the ODE."""
    lf, r1, r2 = log_phi_derivs(x, p, cfg)
    f = _exp_or_raise(lf, "phi_lambda")
    return f, f * r1, f * r2


def psi_derivs(x, p: ModelParams, cfg: QuadratureConfig = DEFAULT_QUAD):
    lf, r1, r2 = log_psi_derivs(x, p, cfg)
    f = _exp_or_raise(lf, "psi_lambda")
    return f, f * r1, f * r2


def ode_residual(x, f, d1, d2, p: ModelParams) -> float:
    """0.5 sigma^2 f'' + theta (mu - x) f' - lam f."""
    return 0.5 * p.sigma**2 * d2 + p.theta * (p.mu - x) * d1 - p.lam * f
