# %% [markdown]
# # Regimes and free boundaries
#
# The sign of k(c) = lam + theta + lam Phi'(c) over [0, 1] decides how
# the fuel should be bought.  If k stays positive the buyer reflects the
# price at a boundary beta*(c); if it stays negative the buyer waits for a
# high enough price and then buys everything at once.

# %%
import numpy as np

from finfuel import CostFn, ModelParams, regime
from finfuel import model, stopping, value

refl = ModelParams(lam=1.0, theta=2.0, mu=1.0, sigma=0.5), CostFn.quadratic(1.0)
repl = ModelParams(lam=1.0, theta=1.0, mu=1.0, sigma=0.5), CostFn.linear_quadratic(4.0)
mixed = ModelParams(lam=1.0, theta=1.0, mu=1.0, sigma=0.5), CostFn.linear_quadratic(1.5)

for name, (p, f) in [("reflecting", refl), ("repelling", repl), ("mixed", mixed)]:
    print(f"{name:>10}: {regime(p, f)}   k(0)={float(model.k(0, p, f)):+.3f}  k(1)={float(model.k(1, p, f)):+.3f}")

# %% [markdown]
# ## Reflecting: beta*(c)
#
# beta* solves G_x phi - G phi' = 0 below x0(c).  It decreases in c: the
# fuller the tank, the lower the price must go before buying more.

# %%
p, f = refl
b = stopping.tabulate_beta(p, f, n=201)
for c in (0.0, 0.25, 0.5, 0.75, 1.0):
    print(f"c={c:4.2f}  beta*={b(c):+.6f}  x0={float(model.x0(c, p, f)):+.4f}  x_hat0={float(model.x_hat0(c, p, f)):+.4f}")

# %% [markdown]
# Smooth fit: the stopping value u(.; c) leaves zero with zero slope.

# %%
for c in (0.1, 0.5, 0.9):
    u, ux, uxx = stopping.u_derivs(b(c) + 1e-6, c, p, f, b)
    print(f"c={c}: u={u:.2e}  u_x={ux:.2e}  u_xx={uxx:.3f}")

# %% [markdown]
# ## Repelling: gamma*(c)
#
# Here the buyer fills the tank the first time the price climbs to
# gamma*(c).  W_c is continuous across gamma* but W_cx is not: the jump
# below is strictly negative for every c < 1.

# %%
p, f = repl
g = value.tabulate_gamma(p, f, n=201)
for c in (0.0, 0.25, 0.5, 0.75, 0.99):
    gam = g(c)
    print(f"c={c:4.2f}  gamma*={gam:+.6f}  x_bar0={float(model.x_bar0(c, p, f)):+.4f}  "
          f"jump W_cx={value.w_cx_jump(c, p, f, gam):+.4f}")

# %%
b.to_csv("beta_star.csv")
g.to_csv("gamma_star.csv")
print("tables written; the arrays are", np.shape(b.x_values), np.shape(g.x_values))
