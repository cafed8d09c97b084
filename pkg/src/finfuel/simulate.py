"""Monte Carlo of the OU price under purchasing policies.

Paths use the exact Gaussian transition, so the only time-discretisation
effects come from applying the control and monitoring crossings at grid
times.  Each path draws from its own Philox stream keyed by
``(seed, path index)``; results therefore do not depend on block size or on
the number of worker threads.

Cost conventions on the grid t_n = n dt, n = 0..N:

* ``C[n]`` is the inventory right after the decision at t_n, and it is held
  on (t_n, t_{n+1}]; ``C[-1]`` is the initial level c.
* running cost  sum_n lam Phi(C[n]) * dt/2 (w_n X_n + w_{n+1} X_{n+1}),
  with w_n = exp(-lam t_n),
* purchase cost sum_n w_n X_n (C[n] - C[n-1]).
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.signal import lfilter

from .model import CostFn, ModelParams
from .special import log_phi_lambda, log_psi_lambda
from .stopping import Boundary

# ---------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    horizon: Optional[float] = None  # None: truncation rule
    n_paths: int = 10_000
    seed: int = 0
    antithetic: bool = True
    trunc_tol: float = 1e-4
    block_size: int = 500
    threads: Optional[int] = None
    bridge: bool = True
    bias_study: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.horizon is not None and not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.antithetic and self.n_paths % 2:
            raise ValueError("antithetic sampling needs an even number of paths")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not self.trunc_tol > 0:
            raise ValueError("trunc_tol must be positive")
        if self.block_size < 2 or self.block_size % 2:
            raise ValueError("block_size must be an even integer >= 2")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CostEstimate:
    """Sample mean with standard error.

    With antithetic sampling each pair is averaged first and the standard
    error is computed over the pair means.  ``dt_bias`` is the allowance for
    grid-monitoring bias obtained by re-running on every second grid point.
    """

    mean: float
    std_error: float
    n_paths: int
    truncation_bound: float
    dt_bias: float = 0.0
    mean_coarse: Optional[float] = None
    horizon: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def allowance(self, n_se: float = 3.0) -> float:
        return n_se * self.std_error + self.dt_bias + self.truncation_bound


def combined_se(a: CostEstimate, b: CostEstimate) -> float:
    return math.hypot(a.std_error, b.std_error)


# ---------------------------------------------------------------------------
# policies


@dataclass(frozen=True)
class NoControl:
    name = "no_control"


@dataclass(frozen=True)
class ImmediateFull:
    name = "immediate_full"


@dataclass(frozen=True)
class ReflectAtBoundary:
    """nu_t = [g*(running min of X) - c]^+, with g* the inverse of ``boundary + shift``."""

    boundary: Boundary = field(compare=False)
    shift: float = 0.0
    name = "reflect"

    def g(self, x):
        return self.boundary.inverse_vec(np.asarray(x) - self.shift)

    def level(self, c) -> float:
        return float(self.boundary(c)) + self.shift


@dataclass(frozen=True)
class BangBangAtBoundary:
    """Buy everything at the first grid time with X >= boundary(c) + shift."""

    boundary: Boundary = field(compare=False)
    shift: float = 0.0
    name = "bang_bang"

    def level(self, c) -> float:
        return float(self.boundary(c)) + self.shift


@dataclass(frozen=True)
class StopAndFillAt:
    """Buy everything the first time X is at or beyond ``level`` (side 'above' or 'below')."""

    level_value: float
    side: str = "above"
    name = "stop_and_fill"

    def __post_init__(self):
        if self.side not in ("above", "below"):
            raise ValueError("side must be 'above' or 'below'")

    def level(self, c) -> float:
        return self.level_value


Policy = Union[NoControl, ImmediateFull, ReflectAtBoundary, BangBangAtBoundary, StopAndFillAt]


@dataclass(frozen=True)
class StopNow:
    pass


@dataclass(frozen=True)
class StopNever:
    """Stop at the truncation horizon."""


@dataclass(frozen=True)
class StopAtLevel:
    level_value: float
    side: str = "above"


StopRule = Union[StopNow, StopNever, StopAtLevel]


# ---------------------------------------------------------------------------
# OU transitions and noise


def ou_coeffs(dt: float, p: ModelParams):
    """(a, s): X_{t+dt} = mu + (X_t - mu) a + s Z."""
    a = math.exp(-p.theta * dt)
    s = p.sigma * math.sqrt(-math.expm1(-2.0 * p.theta * dt) / (2.0 * p.theta))
    return a, s


def step_ou(x, dt, p: ModelParams, gaussian_draw):
    """Exact OU transition over ``dt`` driven by a standard normal draw."""
    a, s = ou_coeffs(dt, p)
    return p.mu + (np.asarray(x) - p.mu) * a + s * np.asarray(gaussian_draw)


def horizon_for(x_values, c, p: ModelParams, f: CostFn, tol: float) -> float:
    """T = log(bound / tol) / lam with bound = M (Phi(0) + 1 - c)."""
    m = _moment_bound(x_values, p)
    bound = m * (float(f.phi(0.0)) + 1.0 - min(c, 1.0) + 1e-300)
    return max(math.log(max(bound, tol) / tol) / p.lam, 1.0)


def _moment_bound(x_values, p):
    """Crude bound on sup_t E|X_t| (plus slack for excursions)."""
    xs = np.atleast_1d(np.asarray(x_values, dtype=float))
    return abs(p.mu) + float(np.max(np.abs(xs - p.mu))) + 4.0 * p.length_scale


def truncation_bound(x_values, c, p: ModelParams, f: CostFn, horizon: float) -> float:
    return math.exp(-p.lam * horizon) * _moment_bound(x_values, p) * (float(f.phi(c)) + 1.0 - c)


class _Grid:
    def __init__(self, n_steps, dt, p):
        self.n = n_steps
        self.dt = dt
        self.t = np.arange(n_steps + 1) * dt
        self.w = np.exp(-p.lam * self.t)
        self.a, self.s = ou_coeffs(dt, p)
        self.decay = np.exp(-p.theta * self.t)

    def coarse(self, p):
        if self.n % 2:
            raise ValueError("coarse grid needs an even number of steps")
        return _Grid(self.n // 2, 2 * self.dt, p)


def _path_streams(cfg: SimConfig, lo: int, hi: int, n_steps: int, n_extra: int = 0):
    """Standard normals for paths lo..hi-1 (rows) plus trailing extra draws.

    The first ``n_steps`` normals drive the path; ``extra`` holds one
    exponential followed by one normal (used by the random-maturity estimator).
    """
    z = np.empty((hi - lo, n_steps))
    extra = np.empty((hi - lo, 2))
    for r, i in enumerate(range(lo, hi)):
        j, sign = (i // 2, -1.0 if i % 2 else 1.0) if cfg.antithetic else (i, 1.0)
        gen = np.random.Generator(np.random.Philox(key=(cfg.seed << 64) + j))
        z[r] = gen.standard_normal(n_steps)
        if n_extra:
            extra[r, 0] = gen.standard_exponential()
            extra[r, 1] = gen.standard_normal()
        if sign < 0:
            z[r] *= -1.0
            extra[r, 1] *= -1.0
    return z, extra


def _noise(z, grid: _Grid):
    """Zero-started OU noise N with X^x_n = mu + (x - mu) a^n + N_n."""
    out = np.zeros((z.shape[0], grid.n + 1))
    out[:, 1:] = lfilter([grid.s], [1.0, -grid.a], z, axis=1)
    return out


def _paths(x, noise, grid, p):
    return (p.mu + (x - p.mu) * grid.decay)[None, :] + noise


# ---------------------------------------------------------------------------
# dense policy application (reference implementation)


def _first_cross(x_paths, level, side):
    """Index of first n with X_n at/over level; n_steps + 1 when never."""
    hit = x_paths >= level if side == "above" else x_paths <= level
    idx = np.argmax(hit, axis=1)
    none = ~hit[np.arange(hit.shape[0]), idx]
    idx[none] = x_paths.shape[1]
    return idx


def _policy_C(policy: Policy, x_paths, c0):
    """Dense inventory matrix C (rows = paths) under ``policy``."""
    x_paths = np.atleast_2d(x_paths)
    n = x_paths.shape[1]
    if isinstance(policy, NoControl) or c0 >= 1.0:
        return np.full(x_paths.shape, float(c0))
    if isinstance(policy, ImmediateFull):
        return np.ones(x_paths.shape)
    if isinstance(policy, ReflectAtBoundary):
        m = np.minimum.accumulate(x_paths, axis=1)
        return np.clip(np.maximum(c0, policy.g(m)), c0, 1.0)
    if isinstance(policy, (BangBangAtBoundary, StopAndFillAt)):
        side = getattr(policy, "side", "above")
        tau = _first_cross(x_paths, policy.level(c0), side)
        cols = np.arange(n)[None, :]
        return np.where(cols >= tau[:, None], 1.0, float(c0))
    raise TypeError(f"unknown policy {policy!r}")


def apply_policy(policy: Policy, x_path, c0: float):
    """Control path nu and inventory path C for one price path on the grid."""
    C = _policy_C(policy, np.asarray(x_path, dtype=float)[None, :], c0)[0]
    return C - c0, C


def path_cost(x_path, C_path, c0, dt, p: ModelParams, f: CostFn) -> float:
    """Discounted running plus purchase cost of one discrete path."""
    x_path = np.asarray(x_path, dtype=float)
    C_path = np.asarray(C_path, dtype=float)
    t = np.arange(x_path.size) * dt
    wx = np.exp(-p.lam * t) * x_path
    run = p.lam * np.sum(np.asarray(f.phi(C_path[:-1])) * 0.5 * dt * (wx[:-1] + wx[1:]))
    dC = np.diff(np.concatenate([[c0], C_path]))
    return float(run + np.sum(wx * dC))


def _dense_costs(C, x_paths, c0, grid, p, f):
    wx = grid.w[None, :] * x_paths
    step = 0.5 * grid.dt * (wx[:, :-1] + wx[:, 1:])
    run = p.lam * np.sum(np.asarray(f.phi(C[:, :-1])) * step, axis=1)
    dC = np.diff(C, axis=1, prepend=c0)
    return run + np.sum(wx * dC, axis=1)


# ---------------------------------------------------------------------------
# fast per-block estimators (reflect / bang-bang via records and crossings)


class _BlockData:
    """Noise-derived quantities shared by all starting points and policies."""

    def __init__(self, noise, grid: _Grid, p: ModelParams):
        self.grid = grid
        self.noise = noise
        step = 0.5 * grid.dt * (grid.w[:-1] * noise[:, :-1] + grid.w[1:] * noise[:, 1:])
        # S[:, n] = sum_{k<n} step_k
        self.S = np.zeros_like(noise)
        np.cumsum(step, axis=1, out=self.S[:, 1:])

    def det_S(self, x, p):
        g = self.grid
        base = g.w * (p.mu + (x - p.mu) * g.decay)
        out = np.zeros(g.n + 1)
        out[1:] = np.cumsum(0.5 * g.dt * (base[:-1] + base[1:]))
        return out


def _reflect_costs(bd: _BlockData, x, c, policies, p, f):
    """Per-path costs for several ReflectAtBoundary policies at one start."""
    g = bd.grid
    X = _paths(x, bd.noise, g, p)
    m = np.minimum.accumulate(X, axis=1)
    dS = bd.det_S(x, p)
    total = bd.S[:, -1] + dS[-1]
    phic = float(f.phi(c))
    top = max(pol.level(c) for pol in policies)
    mask = np.empty(X.shape, dtype=bool)
    mask[:, 0] = X[:, 0] < top
    np.less(X[:, 1:], m[:, :-1], out=mask[:, 1:])
    mask[:, 1:] &= X[:, 1:] < top
    rows, cols = np.nonzero(mask)
    xr = X[rows, cols]
    tail = total[rows] - (bd.S[rows, cols] + dS[cols])
    wr = g.w[cols]
    first = np.ones(rows.size, dtype=bool)
    first[1:] = rows[1:] != rows[:-1]
    nrow = X.shape[0]
    out = []
    for pol in policies:
        Cr = np.clip(np.maximum(c, pol.g(xr)), c, 1.0)
        prev = np.empty_like(Cr)
        prev[first] = c
        prev[~first] = Cr[:-1][~first[1:]]
        dC = Cr - prev
        dphi = np.asarray(f.phi(Cr)) - np.asarray(f.phi(prev))
        contrib = wr * xr * dC + p.lam * dphi * tail
        cost = p.lam * phic * total + np.bincount(rows, weights=contrib, minlength=nrow)
        out.append(cost)
    return out


def _crossing_costs(bd: _BlockData, x, c, policies, p, f):
    """Per-path costs for first-crossing fill policies at one start."""
    g = bd.grid
    X = _paths(x, bd.noise, g, p)
    dS = bd.det_S(x, p)
    phic = float(f.phi(c))
    out = []
    M_up = M_dn = None
    for pol in policies:
        side = getattr(pol, "side", "above")
        if side == "above":
            if M_up is None:
                M_up = np.maximum.accumulate(X, axis=1)
            tau = np.array([np.searchsorted(row, pol.level(c), "left") for row in M_up])
        else:
            if M_dn is None:
                M_dn = -np.minimum.accumulate(X, axis=1)
            tau = np.array([np.searchsorted(row, -pol.level(c), "left") for row in M_dn])
        hit = tau <= g.n
        ti = np.minimum(tau, g.n)
        rows = np.arange(X.shape[0])
        run = p.lam * phic * (bd.S[rows, ti] + dS[ti])
        cost = np.where(hit, run + g.w[ti] * X[rows, ti] * (1.0 - c), run)
        out.append(cost)
    return out


def _block_costs(bd: _BlockData, x, c, policies, p, f):
    """Costs for a list of policies at one (x, c), grouped by policy kind."""
    res = [None] * len(policies)
    refl = [i for i, q in enumerate(policies) if isinstance(q, ReflectAtBoundary)]
    cross = [i for i, q in enumerate(policies) if isinstance(q, (BangBangAtBoundary, StopAndFillAt))]
    nrow = bd.noise.shape[0]
    if c >= 1.0:
        return [np.zeros(nrow) for _ in policies]
    if refl:
        for i, v in zip(refl, _reflect_costs(bd, x, c, [policies[i] for i in refl], p, f)):
            res[i] = v
    if cross:
        for i, v in zip(cross, _crossing_costs(bd, x, c, [policies[i] for i in cross], p, f)):
            res[i] = v
    for i, q in enumerate(policies):
        if isinstance(q, NoControl):
            res[i] = p.lam * float(f.phi(c)) * (bd.S[:, -1] + bd.det_S(x, p)[-1])
        elif isinstance(q, ImmediateFull):
            res[i] = np.full(nrow, x * (1.0 - c))
        elif res[i] is None:
            raise TypeError(f"unknown policy {q!r}")
    return res


# ---------------------------------------------------------------------------
# driver


def _blocks(cfg: SimConfig):
    b = cfg.block_size
    return [(lo, min(lo + b, cfg.n_paths)) for lo in range(0, cfg.n_paths, b)]


def _map_blocks(fn, cfg: SimConfig):
    blocks = _blocks(cfg)
    workers = cfg.threads or os.cpu_count() or 1
    if workers <= 1 or len(blocks) == 1:
        return [fn(lo, hi) for lo, hi in blocks]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda b: fn(*b), blocks))


def _summarise(samples, cfg: SimConfig):
    samples = np.asarray(samples, dtype=float)
    if cfg.antithetic:
        samples = 0.5 * (samples[0::2] + samples[1::2])
    n = samples.size
    mean = float(np.sum(samples) / n)
    se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def _n_steps(horizon, dt):
    n = int(math.ceil(horizon / dt - 1e-9))
    return n + (n % 2)


def estimate_costs(
    policies: Sequence[Policy], points: Sequence, p: ModelParams, f: CostFn, cfg: SimConfig
) -> dict:
    """Estimates for every (policy, (x, c)) pair on common random numbers.

    Returns ``{(i_point, i_policy): CostEstimate}``.
    """
    points = [(float(x), float(c)) for x, c in points]
    xs = [x for x, _ in points]
    cmin = min(c for _, c in points)
    horizon = cfg.horizon or horizon_for(xs, cmin, p, f, cfg.trunc_tol)
    n = _n_steps(horizon, cfg.dt)
    horizon = n * cfg.dt
    grid = _Grid(n, cfg.dt, p)
    coarse = grid.coarse(p) if cfg.bias_study else None

    def work(lo, hi):
        z, _ = _path_streams(cfg, lo, hi, n)
        noise = _noise(z, grid)
        del z
        fine = _BlockData(noise, grid, p)
        res = {}
        for i, (x, c) in enumerate(points):
            for j, v in enumerate(_block_costs(fine, x, c, policies, p, f)):
                res[(i, j, 0)] = v
        if coarse is not None:
            cb = _BlockData(np.ascontiguousarray(noise[:, ::2]), coarse, p)
            for i, (x, c) in enumerate(points):
                for j, v in enumerate(_block_costs(cb, x, c, policies, p, f)):
                    res[(i, j, 1)] = v
        return res

    parts = _map_blocks(work, cfg)
    out = {}
    for i, (x, c) in enumerate(points):
        tb = truncation_bound([x], c, p, f, horizon)
        for j in range(len(policies)):
            fine = np.concatenate([r[(i, j, 0)] for r in parts])
            mean, se = _summarise(fine, cfg)
            bias, mc = 0.0, None
            if coarse is not None:
                cs = np.concatenate([r[(i, j, 1)] for r in parts])
                mc, _ = _summarise(cs, cfg)
                # first-order-in-sqrt(dt) error model, conservative if the bias is O(dt)
                bias = abs(mean - mc) / (math.sqrt(2.0) - 1.0)
            out[(i, j)] = CostEstimate(mean, se, cfg.n_paths, tb, bias, mc, horizon)
    return out


def estimate_cost(policy: Policy, x, c, p: ModelParams, f: CostFn, cfg: SimConfig) -> CostEstimate:
    """Expected discounted running plus purchase cost of ``policy`` from (x, c)."""
    if isinstance(policy, ImmediateFull) or float(c) >= 1.0:
        v = float(x) * (1.0 - float(c)) if float(c) < 1.0 else 0.0
        return CostEstimate(v, 0.0, cfg.n_paths, 0.0, 0.0, v, cfg.horizon)
    return estimate_costs([policy], [(x, c)], p, f, cfg)[(0, 0)]


# ---------------------------------------------------------------------------
# dense estimators: SSCDS and random maturity


def _dense_driver(cfg, x, c, p, f, per_block, n_extra=0):
    horizon = cfg.horizon or horizon_for([x], c, p, f, cfg.trunc_tol)
    n = _n_steps(horizon, cfg.dt)
    horizon = n * cfg.dt
    grid = _Grid(n, cfg.dt, p)

    def work(lo, hi):
        z, extra = _path_streams(cfg, lo, hi, n, n_extra)
        X = _paths(x, _noise(z, grid), grid, p)
        return per_block(X, extra, grid)

    samples = np.concatenate(_map_blocks(work, cfg))
    mean, se = _summarise(samples, cfg)
    return CostEstimate(mean, se, cfg.n_paths, truncation_bound([x], c, p, f, horizon), 0.0, None, horizon)


def _stop_index(rule: StopRule, X, grid):
    if isinstance(rule, StopNow):
        return np.zeros(X.shape[0], dtype=int)
    if isinstance(rule, StopNever):
        return np.full(X.shape[0], grid.n)
    if isinstance(rule, StopAtLevel):
        return np.minimum(_first_cross(X, rule.level_value, rule.side), grid.n)
    raise TypeError(f"unknown stopping rule {rule!r}")


def estimate_sscds_cost(
    policy: Policy, stop_rule: StopRule, x, c, p: ModelParams, f: CostFn, cfg: SimConfig
) -> CostEstimate:
    """Control-and-stop cost: both integrals up to tau plus exp(-lam tau) X_tau (1 - C_tau).

    Purchases are counted at grid times strictly before tau; the terminal
    term settles the remaining fuel at X_tau.
    """
    x, c = float(x), float(c)

    def per_block(X, _extra, grid):
        C = _policy_C(policy, X, c)
        tau = _stop_index(stop_rule, X, grid)
        cols = np.arange(grid.n + 1)[None, :]
        before = cols < tau[:, None]
        wx = grid.w[None, :] * X
        step = 0.5 * grid.dt * (wx[:, :-1] + wx[:, 1:])
        run = p.lam * np.sum(np.asarray(f.phi(C[:, :-1])) * step * before[:, :-1], axis=1)
        dC = np.diff(C, axis=1, prepend=c)
        buy = np.sum(wx * dC * before, axis=1)
        rows = np.arange(X.shape[0])
        c_tau = np.where(tau > 0, C[rows, np.maximum(tau - 1, 0)], c)
        term = wx[rows, tau] * (1.0 - c_tau)
        return run + buy + term

    return _dense_driver(cfg, x, c, p, f, per_block)


def estimate_random_maturity_cost(policy: Policy, x, c, p: ModelParams, f: CostFn, cfg: SimConfig) -> CostEstimate:
    """Undiscounted purchases up to an independent Exp(lam) maturity plus X_tau Phi(C_tau).

    X_tau is drawn exactly from the OU transition out of the last grid point
    before tau.  Maturities beyond the horizon are truncated (no terminal
    charge); their probability exp(-lam T) is covered by the truncation bound.
    """
    x, c = float(x), float(c)

    def per_block(X, extra, grid):
        tau = extra[:, 0] / p.lam
        k = np.floor(tau / grid.dt).astype(np.int64)
        inside = k < grid.n
        k = np.minimum(k, grid.n)
        C = _policy_C(policy, X, c)
        dC = np.diff(C, axis=1, prepend=c)
        cols = np.arange(grid.n + 1)[None, :]
        buy = np.sum(X * dC * (cols <= k[:, None]), axis=1)
        rows = np.arange(X.shape[0])
        r = tau - k * grid.dt
        a = np.exp(-p.theta * r)
        s = p.sigma * np.sqrt(-np.expm1(-2.0 * p.theta * r) / (2.0 * p.theta))
        x_tau = p.mu + (X[rows, k] - p.mu) * a + s * extra[:, 1]
        term = np.where(inside, x_tau * np.asarray(f.phi(C[rows, k])), 0.0)
        return buy + term

    return _dense_driver(cfg, x, c, p, f, per_block, n_extra=2)


# ---------------------------------------------------------------------------
# Skorokhod conditions along reflected paths


@dataclass
class SkorokhodReport:
    n_paths: int
    grid_tol: float
    inside_violations: int = 0
    push_violations: int = 0
    examples: list = field(default_factory=list)
    max_running_cost: float = 0.0

    @property
    def ok(self) -> bool:
        return self.inside_violations == 0 and self.push_violations == 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        return d


def skorokhod_check(
    x, c, p: ModelParams, f: CostFn, b: Boundary, cfg: SimConfig,
    policy: Optional[Policy] = None, grid_tol: float = 1e-8, max_examples: int = 10,
) -> SkorokhodReport:
    """Check that the reflected pair stays in the closed inaction set and pushes only on its edge.

    ``policy`` defaults to reflection at ``b``; passing a different policy
    (for instance a shifted boundary) checks it against the true ``b``.
    """
    x, c = float(x), float(c)
    policy = policy if policy is not None else ReflectAtBoundary(b)
    horizon = cfg.horizon or horizon_for([x], c, p, f, cfg.trunc_tol)
    n = _n_steps(horizon, cfg.dt)
    grid = _Grid(n, cfg.dt, p)

    def work(lo, hi):
        z, _ = _path_streams(cfg, lo, hi, n)
        X = _paths(x, _noise(z, grid), grid, p)
        C = _policy_C(policy, X, c)
        g = np.clip(np.maximum(b.inverse_vec(X), 0.0), 0.0, 1.0)
        below = C[:, 1:] < g[:, 1:] - grid_tol
        dC = np.diff(C, axis=1, prepend=c)
        pushed_inside = (C > g + grid_tol) & (dC > 0)
        push_sum = np.sum(grid.w[None, :] * dC * pushed_inside, axis=1)
        wx = grid.w[None, :] * X
        run = p.lam * np.cumsum(np.asarray(f.phi(C[:, :-1])) * 0.5 * grid.dt * (wx[:, :-1] + wx[:, 1:]), axis=1)
        ex = []
        for r in np.nonzero(below.any(axis=1) | (push_sum > 0))[0][:max_examples]:
            tb = np.nonzero(below[r])[0]
            tp = np.nonzero(pushed_inside[r])[0]
            ex.append({"path": int(lo + r), "t_inside": [float(grid.t[i + 1]) for i in tb[:5]],
                       "t_push": [float(grid.t[i]) for i in tp[:5]]})
        return int(below.any(axis=1).sum()), int((push_sum > 0).sum()), ex, float(np.max(np.abs(run)))

    rep = SkorokhodReport(cfg.n_paths, grid_tol)
    for nb, npush, ex, mx in _map_blocks(work, cfg):
        rep.inside_violations += nb
        rep.push_violations += npush
        rep.examples.extend(ex[: max(0, max_examples - len(rep.examples))])
        rep.max_running_cost = max(rep.max_running_cost, mx)
    return rep


# ---------------------------------------------------------------------------
# hitting times


def laplace_hitting_exact(x, y, p: ModelParams) -> float:
    """E_x[exp(-lam tau_y)] from the fundamental solutions."""
    if x == y:
        return 1.0
    if x > y:
        return math.exp(log_phi_lambda(x, p) - log_phi_lambda(y, p))
    return math.exp(log_psi_lambda(x, p) - log_psi_lambda(y, p))


def estimate_laplace_hitting(x, y, p: ModelParams, cfg: SimConfig) -> CostEstimate:
    """MC estimate of E_x[exp(-lam tau_y)].

    With ``cfg.bridge`` each step contributes the conditional probability
    that the path crossed y between grid points (Brownian-bridge formula with
    the local variance sigma^2 dt), and the estimator is the resulting
    conditional expectation, with the crossing time placed mid-step.
    Without it, tau_y is the first grid time at or beyond y.
    """
    x, y = float(x), float(y)
    if x == y:
        return CostEstimate(1.0, 0.0, cfg.n_paths, 0.0, 0.0, 1.0, 0.0)
    horizon = cfg.horizon or max(math.log(1.0 / cfg.trunc_tol) / p.lam, 1.0)
    n = _n_steps(horizon, cfg.dt)
    horizon = n * cfg.dt
    grid = _Grid(n, cfg.dt, p)
    down = x > y
    var = p.sigma**2 * cfg.dt

    def work(lo, hi):
        z, _ = _path_streams(cfg, lo, hi, n)
        X = _paths(x, _noise(z, grid), grid, p)
        d = (X - y) if down else (y - X)  # > 0 before crossing
        past = d[:, 1:] <= 0
        if cfg.bridge:
            q = np.exp(-2.0 * np.clip(d[:, :-1], 0, None) * np.clip(d[:, 1:], 0, None) / var)
            q = np.where(past, 1.0, q)
            surv = np.ones_like(q)
            np.cumprod(1.0 - q[:, :-1], axis=1, out=surv[:, 1:])
            wt = np.exp(-p.lam * (grid.t[:-1] + 0.5 * grid.dt))
            return np.sum(surv * q * wt[None, :], axis=1)
        idx = np.argmax(past, axis=1)
        hit = past[np.arange(past.shape[0]), idx]
        return np.where(hit, grid.w[idx + 1], 0.0)

    samples = np.concatenate(_map_blocks(work, cfg))
    mean, se = _summarise(samples, cfg)
    return CostEstimate(mean, se, cfg.n_paths, math.exp(-p.lam * horizon), 0.0, None, horizon)


# ---------------------------------------------------------------------------
# output


def dump_paths_csv(path, policy: Policy, x, c, p: ModelParams, cfg: SimConfig, k: int = 5, horizon=None) -> None:
    """Write (path, t, X, C, nu) rows for the first ``k`` simulated paths."""
    horizon = horizon or cfg.horizon or 1.0
    n = _n_steps(horizon, cfg.dt)
    grid = _Grid(n, cfg.dt, p)
    k = min(k, cfg.n_paths)
    z, _ = _path_streams(cfg, 0, k, n)
    X = _paths(float(x), _noise(z, grid), grid, p)
    C = _policy_C(policy, X, float(c))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "t", "X", "C", "nu"])
        for r in range(k):
            for i in range(n + 1):
                w.writerow([r, repr(float(grid.t[i])), repr(float(X[r, i])), repr(float(C[r, i])),
                            repr(float(C[r, i] - c))])


def estimate_json(estimates: dict, config_echo: dict) -> str:
    """Canonical JSON text (sorted keys) so equal inputs give equal bytes."""
    payload = {"config": config_echo, "estimates": {k: v.to_dict() for k, v in estimates.items()}}
    return json.dumps(payload, sort_keys=True, indent=2)
