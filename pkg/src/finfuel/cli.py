"""Command-line entry point: ``finfuel <command> --config run.json``.

Exit codes: 0 success, 1 invalid configuration or input, 2 numerical
failure, 3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import model, oracle, simulate, stopping, value, verify
from .errors import (
    BracketError,
    ConfigError,
    ConvergenceError,
    DomainError,
    InconsistencyError,
    MonotonicityError,
    RegimeError,
)
from .model import RegimeKind

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3

POLICIES = ("optimal", "reflect", "bang_bang", "no_control", "immediate_full")


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, default=_plain) + "\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _regime_line(reg) -> str:
    if reg.c_hat is None:
        return f"{reg.kind.value}, no root of k"
    return f"{reg.kind.value}, ĉ={reg.c_hat:.12g}"


def _boundary(cfg, reg):
    tol = cfg.tolerances
    if reg.kind is RegimeKind.REFLECTING:
        return stopping.tabulate_beta(cfg.model, cfg.cost, int(tol["boundary_nodes"]), tol["boundary_eps"], tol["root"])
    if reg.kind is RegimeKind.REPELLING:
        return value.tabulate_gamma(cfg.model, cfg.cost, int(tol["boundary_nodes"]), tol["boundary_eps"], tol["root"])
    raise RegimeError(f"{_regime_line(reg)}: no closed-form boundary; use the explore-mixed command")


# ---------------------------------------------------------------------------
# commands


def cmd_regime(cfg, out: Path, args) -> int:
    p, f = cfg.model, cfg.cost
    reg = model.regime(p, f)
    line = _regime_line(reg)
    if reg.kind is RegimeKind.MIXED:
        line += " (no closed form; only the grid oracle applies)"
    print(line)
    cs = np.linspace(0.0, 1.0, 101)
    with open(out / "thresholds.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        if reg.kind is RegimeKind.REFLECTING:
            w.writerow(["c", "x0", "x_hat0"])
            for c in cs:
                w.writerow([repr(float(c)), repr(float(model.x0(c, p, f))), repr(float(model.x_hat0(c, p, f)))])
        else:
            w.writerow(["c", "x_bar0", "x_tilde"])
            for c in cs:
                try:
                    row = [float(model.x_bar0(c, p, f)), float(model.x_tilde(c, p, f))]
                except ZeroDivisionError:
                    row = [float("nan"), float("nan")]
                w.writerow([repr(float(c))] + [repr(v) for v in row])
    _write_json(out / "regime.json", {
        "regime": reg.kind.value, "c_hat": reg.c_hat,
        "k0": float(model.k(0.0, p, f)), "k1": float(model.k(1.0, p, f)),
        "config": cfg.echo(),
    })
    return EXIT_OK


def cmd_boundary(cfg, out: Path, args) -> int:
    reg = model.regime(cfg.model, cfg.cost)
    b = _boundary(cfg, reg)
    name = "beta_star.csv" if b.kind == "beta" else "gamma_star.csv"
    b.to_csv(out / name)
    _write_json(out / "boundary_manifest.json", {
        "regime": reg.kind.value, "c_hat": reg.c_hat, "file": name, "rows": int(b.c_grid.size),
        "tolerances": cfg.tolerances, "config": cfg.echo(), "build": _git_describe(),
    })
    print(f"{_regime_line(reg)}: wrote {out / name}")
    return EXIT_OK


def cmd_value(cfg, out: Path, args) -> int:
    p, f = cfg.model, cfg.cost
    reg = model.regime(p, f)
    b = _boundary(cfg, reg)
    xs, cs = _floats(args.x), _floats(args.c)
    for c in cs:
        if not 0.0 <= c <= 1.0:
            raise ConfigError(f"inventory level {c} outside [0, 1]")
    if reg.kind is RegimeKind.REFLECTING:
        ev = lambda x, c: value.F_value(x, c, p, f, b, rel_tol=cfg.tolerances["f_integral_rel"])  # noqa: E731
    else:
        ev = lambda x, c: value.W_value(x, c, p, f, b)  # noqa: E731
    value.write_value_csv(out / "value.csv", value.value_rows(ev, xs, cs))
    print(f"wrote {out / 'value.csv'} ({len(xs) * len(cs)} rows)")
    return EXIT_OK


def _policy(name, reg, b):
    if name == "no_control":
        return simulate.NoControl()
    if name == "immediate_full":
        return simulate.ImmediateFull()
    if name == "optimal":
        name = "reflect" if reg.kind is RegimeKind.REFLECTING else "bang_bang"
    if b is None:
        raise RegimeError("boundary policies need the Reflecting or Repelling regime")
    if name == "reflect":
        return simulate.ReflectAtBoundary(b)
    if name == "bang_bang":
        return simulate.BangBangAtBoundary(b)
    raise ConfigError(f"unknown policy {name!r}; choose from {', '.join(POLICIES)}")


def cmd_simulate(cfg, out: Path, args) -> int:
    p, f = cfg.model, cfg.cost
    if args.policy not in POLICIES:
        raise ConfigError(f"unknown policy {args.policy!r}; choose from {', '.join(POLICIES)}")
    reg = model.regime(p, f)
    b = None
    if args.policy in ("optimal", "reflect", "bang_bang"):
        b = _boundary(cfg, reg)
    pol = _policy(args.policy, reg, b)
    xs, cs = _floats(args.x), _floats(args.c)
    points = [(x, c) for x in xs for c in cs]
    sim = cfg.sim
    est = simulate.estimate_costs([pol], points, p, f, sim)
    results = {}
    for i, (x, c) in enumerate(points):
        key = f"x={x!r},c={c!r}"
        entry = {"discounted": est[(i, 0)].to_dict()}
        if args.random_maturity:
            entry["random_maturity"] = simulate.estimate_random_maturity_cost(pol, x, c, p, f, sim).to_dict()
        if args.sscds and b is not None:
            rule = simulate.StopNever()
            pol_s = pol
            if isinstance(pol, simulate.BangBangAtBoundary):
                rule, pol_s = simulate.StopAtLevel(float(b(c))), simulate.NoControl()
            entry["sscds"] = simulate.estimate_sscds_cost(pol_s, rule, x, c, p, f, sim).to_dict()
        results[key] = entry
        if args.dump_paths:
            simulate.dump_paths_csv(out / f"paths_{i}.csv", pol, x, c, p, sim, k=args.dump_paths,
                                    horizon=est[(i, 0)].horizon)
    payload = {"policy": args.policy, "regime": reg.kind.value, "config": cfg.echo(), "results": results}
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    (out / "simulate.json").write_text(text)
    for key, entry in results.items():
        d = entry["discounted"]
        print(f"{key}: {d['mean']:.8g} +- {d['std_error']:.3g}")
    return EXIT_OK


def cmd_verify(cfg, out: Path, args) -> int:
    p, f = cfg.model, cfg.cost
    boundary = None
    reg = model.regime(p, f)
    checks = []
    if args.boundary_csv:
        kind = "beta" if reg.kind is RegimeKind.REFLECTING else "gamma"
        try:
            boundary = stopping.Boundary.from_csv(args.boundary_csv, kind)
        except (MonotonicityError, ValueError, KeyError, OSError) as exc:
            checks.append(verify.Check("boundary_file_valid", False, {"error": f"{type(exc).__name__}: {exc}"}))
    if not checks:
        reg, checks = verify.run_all(p, f, cfg.sim, cfg.tolerances, boundary)
    passed = all(c.passed for c in checks)
    _write_json(out / "verify.json", {
        "regime": reg.kind.value, "passed": passed,
        "checks": [c.to_dict() for c in checks], "config": cfg.echo(),
    })
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}")
    return EXIT_OK if passed else EXIT_VERIFY


def cmd_explore_mixed(cfg, out: Path, args) -> int:
    p, f = cfg.model, cfg.cost
    reg = model.regime(p, f)
    bvals = ()
    if reg.kind is not RegimeKind.MIXED:
        bvals = _boundary(cfg, reg).x_values
    gd = cfg.grid
    grid = oracle.default_grid(p, int(gd["n_x"]), int(gd["n_c"]), bvals)
    if gd.get("x_min") is not None or gd.get("x_max") is not None:
        grid = oracle.Grid(gd.get("x_min") if gd.get("x_min") is not None else grid.x_min,
                           gd.get("x_max") if gd.get("x_max") is not None else grid.x_max,
                           int(gd["n_x"]), int(gd["n_c"]))
    grid.check(p, bvals)
    surf = oracle.solve_hjb_grid(p, f, grid, cfg.tolerances["oracle"], int(cfg.tolerances["oracle_max_sweeps"]))
    surf.to_csv(out / "surface.csv")
    (out / "surface.bin").write_bytes(surf.to_bytes())
    oracle.write_regions_csv(out / "regions.csv", surf)
    _write_json(out / "explore_manifest.json", {
        "regime": reg.kind.value, "c_hat": reg.c_hat, "grid": grid.to_dict(),
        "residual": surf.residual, "max_policy_iterations": int(surf.iterations.max()), "config": cfg.echo(),
    })
    print(f"{_regime_line(reg)}: wrote surface and regions to {out}")
    return EXIT_OK


COMMANDS = {
    "regime": cmd_regime,
    "boundary": cmd_boundary,
    "value": cmd_value,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "explore-mixed": cmd_explore_mixed,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="finfuel", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--out", help="output directory (default: output_dir from the config)")
    common.add_argument("--threads", type=int, help="worker cap for simulation (default: all cores)")
    common.add_argument("--seed", type=int, help="override sim.seed")
    common.add_argument("--paths", type=int, help="override sim.n_paths")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("regime", parents=[common], help="classify the parameter set")
    sub.add_parser("boundary", parents=[common], help="tabulate the free boundary")
    v = sub.add_parser("value", parents=[common], help="evaluate F or W on a product grid")
    v.add_argument("--x", required=True, help="comma-separated prices")
    v.add_argument("--c", required=True, help="comma-separated inventory levels")
    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo cost of a policy")
    s.add_argument("--policy", default="optimal", help=f"one of {', '.join(POLICIES)}")
    s.add_argument("--x", required=True)
    s.add_argument("--c", required=True)
    s.add_argument("--random-maturity", action="store_true", help="also run the exponential-maturity estimator")
    s.add_argument("--sscds", action="store_true", help="also run the control-and-stop estimator")
    s.add_argument("--dump-paths", type=int, default=0, metavar="K", help="write the first K paths to CSV")
    vf = sub.add_parser("verify", parents=[common], help="run the invariant suite")
    vf.add_argument("--boundary-csv", help="verify this boundary table instead of recomputing it")
    sub.add_parser("explore-mixed", parents=[common], help="grid oracle and action-region geometry")
    return ap


def _resolve(args):
    cfg = config_mod.load(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.paths is not None:
        over["n_paths"] = args.paths
    if args.threads is not None:
        over["threads"] = args.threads
    if over:
        try:
            cfg.sim = simulate.SimConfig(**{**cfg.sim.to_dict(), **over})
        except ValueError as exc:
            raise ConfigError(f"sim: {exc}") from None
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        out = Path(args.out or cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args)
    except (ConfigError, DomainError, RegimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, BracketError, MonotonicityError, InconsistencyError, OverflowError,
            ZeroDivisionError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
