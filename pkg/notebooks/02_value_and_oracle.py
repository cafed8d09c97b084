# %% [markdown]
# # Value functions and the grid oracle
#
# F (reflecting) and W (repelling) have closed forms.  A Markov-chain
# discretisation of the variational inequality, solved level by level in
# c with policy iteration, gives an independent approximation that also
# works when neither closed form applies.

# %%
import numpy as np

from finfuel import CostFn, ModelParams
from finfuel import oracle, stopping, value

p, f = ModelParams(1.0, 2.0, 1.0, 0.5), CostFn.quadratic(1.0)
b = stopping.tabulate_beta(p, f)

xs = np.linspace(-0.5, 2.5, 7)
for c in (0.0, 0.5, 0.9):
    row = [value.F_value(x, c, p, f, b) for x in xs]
    print(f"c={c}: " + "  ".join(f"{ev.value:+.4f}{'*' if ev.region is value.Region.ACTION else ' '}" for ev in row))
print("(* = action region, F_c = -x there)")

# %% [markdown]
# HJB residuals at a few points: the PDE branch vanishes in inaction,
# the gradient branch in action, and neither is positive.

# %%
for x, c in [(1.0, 0.5), (0.2, 0.5), (2.0, 0.0)]:
    pde, grad = value.hjb_residual_reflecting(x, c, p, f, b)
    print(f"({x}, {c}): pde={pde:+.2e} grad={grad:+.2e}")

# %% [markdown]
# ## Oracle vs closed form

# %%
for n_x, n_c in ((201, 51), (401, 101)):
    grid = oracle.default_grid(p, n_x, n_c, b.x_values)
    surf = oracle.solve_hjb_grid(p, f, grid)
    err = oracle.relative_error(surf, lambda x, c: value.F_value(x, c, p, f, b).value, oracle.interior(p))
    print(f"n_x={n_x} n_c={n_c}: sup relative error {err:.2e}")

ends = oracle.region_endpoints(surf, "left")
for c, x in ends[10:100:20]:
    print(f"c={c:.2f}: grid boundary {x:+.4f}, beta* {b(c):+.4f}")

# %% [markdown]
# ## The mixed regime
#
# With kappa = 1.5 the sign of k changes at c_hat = 2/3.  Only the oracle
# applies; the action set per level is printed as x-intervals.

# %%
pm, fm = ModelParams(1.0, 1.0, 1.0, 0.5), CostFn.linear_quadratic(1.5)
surf = oracle.solve_hjb_grid(pm, fm, oracle.default_grid(pm, 401, 101))
for c, ivs in oracle.extract_action_region(surf)[::20]:
    print(f"c={c:.2f}: " + ", ".join(f"[{lo:+.3f}, {hi:+.3f}]" for lo, hi in ivs))
