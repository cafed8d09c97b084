"""Problem data and the scalar auxiliary functions of the purchasing problem.

The price follows ``dX = theta (mu - X) dt + sigma dB`` and the inventory
``C = c + nu`` is pushed upward by a nondecreasing control with ``C <= 1``.
A running penalty ``lam * X * Phi(C)`` is paid until the inventory is full.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError

_ZERO_DIV = 1e-14


@dataclass(frozen=True)
class ModelParams:
    """Ornstein-Uhlenbeck and discounting constants (all strictly positive)."""

    lam: float
    theta: float
    mu: float
    sigma: float

    def __post_init__(self):
        for name in ("lam", "theta", "mu", "sigma"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be a positive finite number, got {v!r}")

    @property
    def length_scale(self) -> float:
        """Natural OU length scale sigma / sqrt(2 theta)."""
        return self.sigma / math.sqrt(2.0 * self.theta)

    @property
    def nu(self) -> float:
        """Ratio lam / theta; the cylinder functions have order -nu."""
        return self.lam / self.theta

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "theta": self.theta, "mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class CostFn:
    """Penalty Phi with its first two derivatives.

    Built-in families are created with :meth:`quadratic` and
    :meth:`linear_quadratic`; anything else can be wrapped by passing the
    three callables directly (family ``"custom"``).
    """

    phi: Callable = field(compare=False)
    phi_prime: Callable = field(compare=False)
    phi_second: Callable = field(compare=False)
    family: str = "custom"
    params: tuple = ()

    def __call__(self, c):
        return self.phi(c)

    @classmethod
    def quadratic(cls, kappa: float) -> "CostFn":
        kappa = float(kappa)
        return cls(
            phi=lambda c: kappa * (1.0 - np.asarray(c, dtype=float)) ** 2 + 0.0,
            phi_prime=lambda c: -2.0 * kappa * (1.0 - np.asarray(c, dtype=float)),
            phi_second=lambda c: 2.0 * kappa + 0.0 * np.asarray(c, dtype=float),
            family="quadratic",
            params=(("kappa", kappa),),
        )

    @classmethod
    def linear_quadratic(cls, kappa: float) -> "CostFn":
        kappa = float(kappa)

        def phi(c):
            d = 1.0 - np.asarray(c, dtype=float)
            return kappa * (d + 0.5 * d * d)

        return cls(
            phi=phi,
            phi_prime=lambda c: -kappa * (2.0 - np.asarray(c, dtype=float)),
            phi_second=lambda c: kappa + 0.0 * np.asarray(c, dtype=float),
            family="linear_quadratic",
            params=(("kappa", kappa),),
        )

    @classmethod
    def from_spec(cls, spec: dict) -> "CostFn":
        family = spec.get("family")
        builders = {"quadratic": cls.quadratic, "linear_quadratic": cls.linear_quadratic}
        if family not in builders:
            raise DomainError(f"unknown cost family {family!r}; expected one of {sorted(builders)}")
        extra = set(spec) - {"family", "kappa"}
        if extra:
            raise DomainError(f"unknown cost keys {sorted(extra)}")
        return builders[family](spec["kappa"])

    def to_dict(self) -> dict:
        return {"family": self.family, **dict(self.params)}

    def check(self, n: int = 1001, rel_tol: float = 1e-6) -> None:
        """Grid surrogate for the standing assumption on Phi.

        Raises DomainError unless Phi(1) = 0, Phi > 0 on [0, 1),
        Phi' < 0 on [0, 1), Phi'' > 0, and Phi' agrees with a central
        difference of Phi.
        """
        c = np.linspace(0.0, 1.0, n)
        v = np.asarray(self.phi(c), dtype=float)
        d1 = np.asarray(self.phi_prime(c), dtype=float)
        d2 = np.asarray(self.phi_second(c), dtype=float)
        if abs(float(self.phi(1.0))) > 1e-14:
            raise DomainError("Phi(1) must vanish")
        if np.any(v[:-1] <= 0):
            raise DomainError("Phi must be positive on [0, 1)")
        if np.any(d1[:-1] >= 0):
            raise DomainError("Phi must be strictly decreasing on [0, 1)")
        if np.any(d2 <= 0):
            raise DomainError("Phi must be strictly convex")
        h = 1e-5
        fd = (np.asarray(self.phi(c + h)) - np.asarray(self.phi(c - h))) / (2 * h)
        scale = np.maximum(np.abs(d1), 1e-8)
        if np.max(np.abs(fd - d1) / scale) > rel_tol:
            raise DomainError("phi_prime is inconsistent with phi")


class RegimeKind(enum.Enum):
    REFLECTING = "Reflecting"
    REPELLING = "Repelling"
    MIXED = "Mixed"


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind
    c_hat: Optional[float]

    def __str__(self):
        if self.c_hat is None:
            return f"{self.kind.value}, no root of k"
        return f"{self.kind.value}, c_hat={self.c_hat:.12g}"


def k(c, p: ModelParams, f: CostFn):
    """Marginal-effect coefficient lam + theta + lam Phi'(c)."""
    return p.lam + p.theta + p.lam * f.phi_prime(c)


def c_hat(p: ModelParams, f: CostFn, c_max: float = 10.0, tol: float = 1e-12) -> Optional[float]:
    lo, hi = -c_max, 1.0 + c_max
    klo, khi = float(k(lo, p, f)), float(k(hi, p, f))
    if klo == 0.0:
        return lo
    if khi == 0.0:
        return hi
    if klo * khi > 0:
        return None
    # k is increasing, so klo < 0 < khi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        km = float(k(mid, p, f))
        if km == 0.0:
            return mid
        if km < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def regime(p: ModelParams, f: CostFn, c_max: float = 10.0) -> Regime:
    ch = c_hat(p, f, c_max)
    if ch is None:
        kind = RegimeKind.REFLECTING if float(k(0.5, p, f)) > 0 else RegimeKind.REPELLING
        return Regime(kind, None)
    # exact roots at the endpoints are snapped so the tie rule is not at the mercy of bisection
    if abs(float(k(0.0, p, f))) <= 1e-13:
        ch = 0.0
    elif abs(float(k(1.0, p, f))) <= 1e-13:
        ch = 1.0
    if ch <= 0.0:
        return Regime(RegimeKind.REFLECTING, ch)
    if ch >= 1.0:
        return Regime(RegimeKind.REPELLING, ch)
    return Regime(RegimeKind.MIXED, ch)


def G(x, c, p: ModelParams, f: CostFn):
    """Perpetual discounted flow E int_0^inf e^{-lam s} (k(c) X_s - theta mu) ds."""
    kc = k(c, p, f)
    return p.mu * (kc - p.theta) / p.lam + kc * (x - p.mu) / (p.lam + p.theta)


def G_x(c, p: ModelParams, f: CostFn):
    return k(c, p, f) / (p.lam + p.theta)


def x0(c, p: ModelParams, f: CostFn):
    """Zero of G(.; c)."""
    kc = k(c, p, f)
    if np.any(np.abs(kc) < _ZERO_DIV):
        raise ZeroDivisionError("k(c) vanishes")
    return -p.theta * p.mu * f.phi_prime(c) / kc


def x_hat0(c, p: ModelParams, f: CostFn):
    kc = k(c, p, f)
    if np.any(kc <= 0):
        raise DomainError("x_hat0 requires k(c) > 0")
    return p.theta * p.mu / kc


def zeta(c, p: ModelParams, f: CostFn):
    """Integral of k over [c, 1]."""
    return (p.lam + p.theta) * (1.0 - c) - p.lam * f.phi(c)


def x_bar0(c, p: ModelParams, f: CostFn):
    """theta mu Phi(c) / zeta(c); at c = 1 the 0/0 limit -theta mu Phi'(1)/k(1) is used."""
    if np.ndim(c) == 0 and float(c) == 1.0:
        return float(x0(1.0, p, f))
    z = zeta(c, p, f)
    if np.any(np.abs(z) < _ZERO_DIV):
        raise ZeroDivisionError("zeta(c) vanishes")
    return p.theta * p.mu * f.phi(c) / z


def x_tilde(c, p: ModelParams, f: CostFn):
    """(1 - c) theta mu / zeta(c); limit theta mu / k(1) at c = 1."""
    if np.ndim(c) == 0 and float(c) == 1.0:
        return p.theta * p.mu / float(k(1.0, p, f))
    z = zeta(c, p, f)
    if np.any(np.abs(z) < _ZERO_DIV):
        raise ZeroDivisionError("zeta(c) vanishes")
    return (1.0 - c) * p.theta * p.mu / z


def mean_X(x, t, p: ModelParams):
    return p.mu + (x - p.mu) * np.exp(-p.theta * t)
