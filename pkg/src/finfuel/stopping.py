"""Optimal stopping family behind the reflecting regime.

For each inventory level ``c`` the stopping value is
``u(x; c) = G(x; c) - G(b; c) phi(x) / phi(b)`` above the threshold
``b = beta_star(c)`` and zero below it; the threshold is fixed by smooth fit.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import model
from .errors import BracketError, DomainError, MonotonicityError
from .model import CostFn, ModelParams
from .special import DEFAULT_QUAD, QuadratureConfig, log_phi_derivs

_MAX_DOUBLINGS = 200


@dataclass
class Boundary:
    """Strictly decreasing tabulation c -> x of a free boundary.

    ``kind`` is ``"beta"`` (reflecting regime) or ``"gamma"`` (repelling
    regime).  Evaluation uses a shape-preserving cubic interpolant, so values
    between nodes stay inside the bracketing node values.
    """

    c_grid: np.ndarray
    x_values: np.ndarray
    kind: str = "beta"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.c_grid = np.asarray(self.c_grid, dtype=float)
        self.x_values = np.asarray(self.x_values, dtype=float)
        self.check()

    def check(self) -> None:
        c, x = self.c_grid, self.x_values
        if c.ndim != 1 or c.shape != x.shape or c.size < 2:
            raise ValueError("c_grid and x_values must be 1-d arrays of equal length >= 2")
        if np.any(np.diff(c) <= 0):
            raise MonotonicityError("c_grid must be strictly increasing")
        if np.any(np.diff(x) >= 0):
            bad = int(np.argmax(np.diff(x) >= 0))
            raise MonotonicityError(
                f"boundary not strictly decreasing between c={c[bad]:.6g} and c={c[bad + 1]:.6g}"
            )
        if not np.all(np.isfinite(x)):
            raise MonotonicityError("boundary contains non-finite values")

    @property
    def c_min(self) -> float:
        return float(self.c_grid[0])

    @property
    def c_max(self) -> float:
        return float(self.c_grid[-1])

    def _interp(self):
        if "pchip" not in self._cache:
            self._cache["pchip"] = PchipInterpolator(self.c_grid, self.x_values, extrapolate=False)
        return self._cache["pchip"]

    def __call__(self, c):
        cc = np.clip(c, self.c_min, self.c_max)
        out = self._interp()(cc)
        return float(out) if np.ndim(out) == 0 else out

    def inverse(self, x: float, tol: float = 1e-10) -> float:
        """c with boundary(c) = x, by bisection; clamped to the tabulated range."""
        if x >= self.x_values[0]:
            return self.c_min
        if x <= self.x_values[-1]:
            return self.c_max
        j = int(np.searchsorted(-self.x_values, -x))
        lo, hi = float(self.c_grid[j - 1]), float(self.c_grid[j])
        interp = self._interp()
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if interp(mid) > x:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def inverse_vec(self, x):
        """Vectorised inverse from a monotone interpolant of the (x, c) nodes.

        Exact at the nodes; between them it differs from :meth:`inverse` by
        the interpolation error only.  Used where many evaluations are needed.
        """
        if "pchip_inv" not in self._cache:
            self._cache["pchip_inv"] = PchipInterpolator(self.x_values[::-1], self.c_grid[::-1])
        xx = np.clip(x, self.x_values[-1], self.x_values[0])
        return self._cache["pchip_inv"](xx)

    def shifted(self, dx: float) -> "Boundary":
        return Boundary(self.c_grid.copy(), self.x_values + dx, self.kind)

    # serialization -----------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["c", "x"])
            for c, x in zip(self.c_grid, self.x_values):
                w.writerow([repr(float(c)), repr(float(x))])

    @classmethod
    def from_csv(cls, path, kind: str = "beta") -> "Boundary":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls([float(r["c"]) for r in rows], [float(r["x"]) for r in rows], kind)

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "c": [float(c) for c in self.c_grid],
                "x": [float(x) for x in self.x_values],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Boundary":
        d = json.loads(text)
        return cls(d["c"], d["x"], d.get("kind", "beta"))


def _require_reflecting(c, p, f):
    kc = float(model.k(c, p, f))
    if not kc > 0:
        raise DomainError(f"k({c}) = {kc:.6g} <= 0: no reflecting stopping boundary at this level")
    return kc


def _h_scaled(x, c, p, f, cfg):
    """H(x; c) / phi(x) and its x-derivative."""
    _, r1, r2 = log_phi_derivs(x, p, cfg)
    gx = float(model.G_x(c, p, f))
    g = float(model.G(x, c, p, f))
    val = gx - g * r1
    dval = -gx * r1 - g * (r2 - r1 * r1)
    return val, dval


def H(x, c, p: ModelParams, f: CostFn, x_ref: Optional[float] = None, cfg: QuadratureConfig = DEFAULT_QUAD):
    """Smooth-fit function G_x phi - G phi', divided by phi(x_ref).

    With ``x_ref=None`` the scaling point is ``x`` itself.  Roots do not depend
    on the scaling.
    """
    lf, r1, _ = log_phi_derivs(x, p, cfg)
    ratio = 1.0 if x_ref is None else math.exp(lf - log_phi_derivs(x_ref, p, cfg)[0])
    return ratio * (float(model.G_x(c, p, f)) - float(model.G(x, c, p, f)) * r1)


def beta_star(c, p: ModelParams, f: CostFn, tol: float = 1e-12, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Unique root of H(.; c) below x0(c)."""
    _require_reflecting(c, p, f)
    top = float(model.x0(c, p, f))
    hi = top
    step = p.length_scale
    lo = top - step
    n = 0
    while _h_scaled(lo, c, p, f, cfg)[0] >= 0:
        hi = lo
        step *= 2.0
        lo = top - step
        n += 1
        if n > _MAX_DOUBLINGS:
            raise BracketError(f"no sign change of H below x0={top:.6g} for c={c}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _h_scaled(mid, c, p, f, cfg)[0] < 0:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    # H is increasing and concave below x0; keep Newton inside the bracket anyway
    for _ in range(4):
        val, dval = _h_scaled(x, c, p, f, cfg)
        if val == 0.0 or dval <= 0:
            break
        xn = x - val / dval
        if not (lo - tol <= xn <= hi + tol):
            break
        if abs(xn - x) < 1e-16 * max(1.0, abs(x)):
            x = xn
            break
        x = xn
    return x


def beta_grid(n: int, p: ModelParams, f: CostFn, eps: float = 1e-3) -> np.ndarray:
    """c-nodes for the beta tabulation; geometric toward c = 0 when k(0) = 0."""
    if n < 2:
        raise ValueError("need at least two nodes")
    if abs(float(model.k(0.0, p, f))) > 1e-12:
        return np.linspace(0.0, 1.0, n)
    n_geo = max(2, n // 5)
    head = np.geomspace(eps, 0.1, n_geo, endpoint=False)
    return np.concatenate([head, np.linspace(0.1, 1.0, n - n_geo)])


def tabulate_beta(
    p: ModelParams, f: CostFn, n: int = 201, eps: float = 1e-3, tol: float = 1e-12, cfg: QuadratureConfig = DEFAULT_QUAD
) -> Boundary:
    cs = beta_grid(n, p, f, eps)
    xs = np.array([beta_star(float(c), p, f, tol, cfg) for c in cs])
    return Boundary(cs, xs, "beta")


def u_derivs(x, c, p: ModelParams, f: CostFn, b: Boundary, cfg: QuadratureConfig = DEFAULT_QUAD):
    """(u, u_x, u_xx) at (x; c) with the threshold read off ``b``."""
    beta = b(c)
    if x <= beta:
        return 0.0, 0.0, 0.0
    lx, r1, r2 = log_phi_derivs(x, p, cfg)
    lb = log_phi_derivs(beta, p, cfg)[0]
    w = float(model.G(beta, c, p, f)) * math.exp(lx - lb)
    return (
        float(model.G(x, c, p, f)) - w,
        float(model.G_x(c, p, f)) - w * r1,
        -w * r2,
    )


def u_value(x, c, p: ModelParams, f: CostFn, b: Boundary, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    return u_derivs(x, c, p, f, b, cfg)[0]


def u_threshold(x, c, beta, p: ModelParams, f: CostFn, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Value of the threshold rule 'stop when X <= beta' for an arbitrary beta."""
    if x <= beta:
        return 0.0
    lx = log_phi_derivs(x, p, cfg)[0]
    lb = log_phi_derivs(beta, p, cfg)[0]
    return float(model.G(x, c, p, f)) - float(model.G(beta, c, p, f)) * math.exp(lx - lb)


def v_value(x, c, p: ModelParams, f: CostFn, b: Boundary, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    return -x + u_value(x, c, p, f, b, cfg)


def g_star(x: float, b: Boundary) -> float:
    """Inverse of the reflecting boundary, clamped to [c_min, 1]."""
    return b.inverse(x)
