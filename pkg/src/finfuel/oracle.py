"""Markov-chain approximation of the variational inequality

    max{ -L w + lam w - lam x Phi(c),  -w_c - x } = 0,   w(x, 1) = 0.

The price is replaced by a birth-death chain on a uniform x-grid with
locally consistent transition probabilities; inventory moves on a uniform
c-grid.  Levels are solved backward from c = 1.  Each level is an obstacle
problem (continue under the chain, or buy one c-step at price x and land on
the level above) solved exactly with Howard's policy iteration on a
tridiagonal system.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConvergenceError, DomainError
from .model import CostFn, ModelParams

_MAGIC = b"FFVS"
_VERSION = 1


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n_x: int = 401
    n_c: int = 101
    boundary_condition: str = "reflecting"

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise DomainError("x_max must exceed x_min")
        if self.n_x < 3 or self.n_c < 2:
            raise DomainError("grid too small")
        if self.boundary_condition != "reflecting":
            raise DomainError("only the reflecting truncation is implemented")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_x)

    @property
    def c(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_c)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x - 1)

    def check(self, p: ModelParams, boundary_values=()) -> None:
        """Size and coverage requirements for production runs."""
        if self.n_x < 201 or self.n_c < 51:
            raise DomainError("need n_x >= 201 and n_c >= 51")
        lo, hi = interior(p)
        vals = [lo, hi, *np.ravel(boundary_values)]
        if min(vals) < self.x_min or max(vals) > self.x_max:
            raise DomainError("x-range must contain mu +- 6 sigma/sqrt(2 theta) and the free boundary")

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "n_x": self.n_x, "n_c": self.n_c,
                "boundary_condition": self.boundary_condition}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(float(d["x_min"]), float(d["x_max"]), int(d["n_x"]), int(d["n_c"]),
                   d.get("boundary_condition", "reflecting"))


def interior(p: ModelParams):
    """The x-window on which the oracle is compared with closed forms."""
    return p.mu - 6.0 * p.length_scale, p.mu + 6.0 * p.length_scale


def default_grid(p: ModelParams, n_x: int = 401, n_c: int = 101, boundary_values=(), pad: float = 3.0) -> Grid:
    lo, hi = interior(p)
    vals = [lo, hi, *np.ravel(boundary_values)]
    return Grid(min(vals) - pad * p.length_scale, max(vals) + pad * p.length_scale, n_x, n_c)


@dataclass
class ValueSurface:
    grid: Grid
    values: np.ndarray  # (n_x, n_c)
    action_mask: np.ndarray
    iterations: np.ndarray = field(default=None)
    residual: float = 0.0

    def column(self, c) -> np.ndarray:
        j = int(round(float(c) * (self.grid.n_c - 1)))
        return self.values[:, j]

    # export --------------------------------------------------------------

    def to_csv(self, path) -> None:
        xs, cs = self.grid.x, self.grid.c
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "c", "value", "action"])
            for i, x in enumerate(xs):
                for j, c in enumerate(cs):
                    w.writerow([repr(float(x)), repr(float(c)), repr(float(self.values[i, j])),
                                int(self.action_mask[i, j])])

    def to_bytes(self) -> bytes:
        """Magic, version, header length, JSON grid header, then row-major '<f8' values and u1 mask."""
        head = json.dumps(self.grid.to_dict(), sort_keys=True).encode()
        vals = np.ascontiguousarray(self.values, dtype="<f8").tobytes()
        mask = np.ascontiguousarray(self.action_mask, dtype="u1").tobytes()
        return _MAGIC + struct.pack("<II", _VERSION, len(head)) + head + vals + mask

    @classmethod
    def from_bytes(cls, buf: bytes) -> "ValueSurface":
        if buf[:4] != _MAGIC:
            raise ValueError("not a value-surface file")
        version, n = struct.unpack("<II", buf[4:12])
        if version != _VERSION:
            raise ValueError(f"unsupported version {version}")
        grid = Grid.from_dict(json.loads(buf[12 : 12 + n]))
        off = 12 + n
        size = grid.n_x * grid.n_c
        vals = np.frombuffer(buf, dtype="<f8", count=size, offset=off).reshape(grid.n_x, grid.n_c)
        mask = np.frombuffer(buf, dtype="u1", count=size, offset=off + 8 * size).reshape(grid.n_x, grid.n_c)
        return cls(grid, vals.astype(float), mask.astype(bool))


# ---------------------------------------------------------------------------
# chain


def transition(p: ModelParams, x: np.ndarray, h: float):
    """Up/down probabilities and time steps of the locally consistent chain.

    Central differencing where it keeps probabilities nonnegative
    (sigma^2 >= h |b|), upwind elsewhere.
    """
    b = p.theta * (p.mu - x)
    s2 = p.sigma**2
    central = s2 >= h * np.abs(b)
    up = np.where(central, 0.5 + 0.5 * h * b / s2, (0.5 * s2 + h * np.maximum(b, 0)) / (s2 + h * np.abs(b)))
    dn = np.where(central, 0.5 - 0.5 * h * b / s2, (0.5 * s2 + h * np.maximum(-b, 0)) / (s2 + h * np.abs(b)))
    dt = np.where(central, h * h / s2, h * h / (s2 + h * np.abs(b)))
    if np.any(up < 0) or np.any(dn < 0):
        raise DomainError("negative transition probability")
    return up, dn, dt


def _level_system(p, f, c, x, up, dn, dt):
    """Banded matrix and rhs of the continuation equation at one c-level."""
    n = x.size
    ab = np.zeros((3, n))
    diag = 1.0 + p.lam * dt
    lower = -dn.copy()
    upper = -up.copy()
    # reflecting truncation: the blocked move stays put
    diag[0] -= dn[0]
    lower[0] = 0.0
    diag[-1] -= up[-1]
    upper[-1] = 0.0
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    rhs = p.lam * x * float(f.phi(c)) * dt
    return ab, rhs


def _apply(ab, w):
    out = ab[1] * w
    out[:-1] += ab[0, 1:] * w[1:]
    out[1:] += ab[2, :-1] * w[:-1]
    return out


def _solve_level(ab, rhs, obstacle, max_iter):
    """Howard iteration for max(A w - rhs, w - obstacle) = 0.

    This is w = min(T w, obstacle) written with A = (1 + lam dt) I - P.
    """
    n = rhs.size
    act = np.zeros(n, dtype=bool)
    for it in range(1, max_iter + 1):
        m = ab.copy()
        r = rhs.copy()
        # action rows become w_r = obstacle_r; in banded storage row r's
        # neighbours sit at m[0, r + 1] and m[2, r - 1]
        rows = np.nonzero(act)[0]
        m[1, rows] = 1.0
        m[0, rows[rows + 1 < n] + 1] = 0.0
        m[2, rows[rows >= 1] - 1] = 0.0
        r[act] = obstacle[act]
        w = solve_banded((1, 1), m, r)
        new = (w - obstacle) > (_apply(ab, w) - rhs)
        if np.array_equal(new, act):
            return w, act, it
        act = new
    raise ConvergenceError(f"policy iteration did not settle in {max_iter} iterations")


def solve_hjb_grid(
    p: ModelParams, f: CostFn, grid: Grid, tol: float = 1e-9, max_sweeps: int = 200
) -> ValueSurface:
    """Grid value and action mask for any regime.

    ``max_sweeps`` caps the policy iterations per c-level; ``tol`` bounds the
    fixed-point residual sup |min(T w, obstacle) - w| checked at the end.
    """
    x, cs, h = grid.x, grid.c, grid.dx
    up, dn, dt = transition(p, x, h)
    dc = cs[1] - cs[0]
    vals = np.zeros((grid.n_x, grid.n_c))
    mask = np.zeros((grid.n_x, grid.n_c), dtype=bool)
    iters = np.zeros(grid.n_c, dtype=int)
    resid = 0.0
    for j in range(grid.n_c - 2, -1, -1):
        ab, rhs = _level_system(p, f, cs[j], x, up, dn, dt)
        obstacle = x * dc + vals[:, j + 1]
        w, act, it = _solve_level(ab, rhs, obstacle, max_sweeps)
        vals[:, j] = w
        mask[:, j] = act
        iters[j] = it
        # one explicit application of the dynamic-programming operator
        cont = (rhs - _apply(ab, w) + (1.0 + p.lam * dt) * w) / (1.0 + p.lam * dt)
        resid = max(resid, float(np.max(np.abs(np.minimum(cont, obstacle) - w))))
    if resid > tol * max(1.0, float(np.max(np.abs(vals)))):
        raise ConvergenceError(f"fixed-point residual {resid:.3e} exceeds tolerance {tol:.1e}")
    return ValueSurface(grid, vals, mask, iters, resid)


# ---------------------------------------------------------------------------
# post-processing


def _runs(mask):
    """(start, end) index pairs of the maximal runs of True in a 1-d mask."""
    m = np.concatenate([[False], np.asarray(mask, dtype=bool), [False]])
    d = np.diff(m.astype(np.int8))
    return list(zip(np.nonzero(d == 1)[0], np.nonzero(d == -1)[0] - 1))


def extract_action_region(surface: ValueSurface):
    """Per c-level list of closed x-intervals (node to node) where the action branch is active."""
    xs = surface.grid.x
    return [
        (float(c), [(float(xs[i]), float(xs[k])) for i, k in _runs(surface.action_mask[:, j])])
        for j, c in enumerate(surface.grid.c)
    ]


def region_endpoints(surface: ValueSurface, side: str):
    """Boundary estimate per level for a half-line action set.

    ``side='left'``: the action set is a left half-line and its right end is
    wanted; ``'right'``: a right half-line and its left end.  The boundary
    lies between the outermost action node and its inaction neighbour, so the
    midpoint of the two is returned.  NaN when the level has no action node.
    """
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    xs = surface.grid.x
    res = []
    for j, c in enumerate(surface.grid.c):
        runs = _runs(surface.action_mask[:, j])
        if not runs:
            res.append((float(c), math.nan))
            continue
        i, nb = (runs[0][1], runs[0][1] + 1) if side == "left" else (runs[-1][0], runs[-1][0] - 1)
        x = 0.5 * (xs[i] + xs[nb]) if 0 <= nb < xs.size else xs[i]
        res.append((float(c), float(x)))
    return res


def write_regions_csv(path, surface: ValueSurface) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["c", "x_lo", "x_hi"])
        for c, ivs in extract_action_region(surface):
            for lo, hi in ivs:
                w.writerow([repr(c), repr(lo), repr(hi)])


def relative_error(surface: ValueSurface, reference, x_window=None, stride: int = 1):
    """sup |w - ref| / sup |ref| over grid nodes inside ``x_window``.

    ``reference(x, c)`` is called on every ``stride``-th node in each direction.
    """
    xs, cs = surface.grid.x, surface.grid.c
    lo, hi = x_window if x_window is not None else (xs[0], xs[-1])
    ix = [i for i in range(0, xs.size, stride) if lo <= xs[i] <= hi]
    jc = list(range(0, cs.size, stride))
    num = den = 0.0
    for i in ix:
        for j in jc:
            r = float(reference(float(xs[i]), float(cs[j])))
            num = max(num, abs(surface.values[i, j] - r))
            den = max(den, abs(r))
    return num / den if den > 0 else num


def no_control_cost(x, c, p: ModelParams, f: CostFn):
    """Perpetual cost of never buying: lam Phi(c) (mu/lam + (x - mu)/(lam + theta))."""
    return p.lam * f.phi(c) * (p.mu / p.lam + (np.asarray(x) - p.mu) / (p.lam + p.theta))
