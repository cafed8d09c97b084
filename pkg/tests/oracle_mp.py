"""High-precision reference values, computed independently with mpmath.

Uses ``mpmath.pcfd`` for the cylinder functions, numerical differentiation
for derivatives and plain bisection for the free boundaries; nothing from
the package is imported.  Run as a script to print the values frozen in
``golden.py``::

    python tests/oracle_mp.py
"""

from __future__ import annotations

import mpmath as mp

mp.mp.dps = 30


def phi(x, lam, theta, mu, sigma):
    z = (x - mu) * mp.sqrt(2 * theta) / sigma
    return mp.exp(z * z / 4) * mp.pcfd(-lam / theta, z)


def psi(x, lam, theta, mu, sigma):
    z = (x - mu) * mp.sqrt(2 * theta) / sigma
    return mp.exp(z * z / 4) * mp.pcfd(-lam / theta, -z)


def _bisect(fn, lo, hi, tol=mp.mpf("1e-24")):
    flo = fn(lo)
    for _ in range(400):
        mid = (lo + hi) / 2
        fm = fn(mid)
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return (lo + hi) / 2


# reflecting reference: lam=1, theta=2, mu=1, sigma=0.5, Phi = (1-c)^2
REFL = dict(lam=mp.mpf(1), theta=mp.mpf(2), mu=mp.mpf(1), sigma=mp.mpf("0.5"))


def _refl_k(c):
    p = REFL
    return p["lam"] + p["theta"] - 2 * p["lam"] * (1 - c)


def _refl_G(x, c):
    p = REFL
    k = _refl_k(c)
    return p["mu"] * (k - p["theta"]) / p["lam"] + k * (x - p["mu"]) / (p["lam"] + p["theta"])


def beta_star(c):
    p = REFL
    c = mp.mpf(c)
    k = _refl_k(c)
    x0 = p["theta"] * p["mu"] * 2 * (1 - c) / k
    gx = k / (p["lam"] + p["theta"])

    def h(x):
        f = lambda y: phi(y, **p)  # noqa: E731
        return gx * f(x) - _refl_G(x, c) * mp.diff(f, x)

    lo = x0 - mp.mpf("0.25")
    while h(lo) >= 0:
        lo -= mp.mpf("0.25")
    return _bisect(h, lo, x0)


def F_reflecting(x, c):
    """x (1 - c) - int_c^1 u(x; y) dy with u built from fresh boundary solves."""
    p = REFL
    x, c = mp.mpf(x), mp.mpf(c)

    def u(y):
        b = beta_star(y)
        if x <= b:
            return mp.mpf(0)
        return _refl_G(x, y) - _refl_G(b, y) * phi(x, **p) / phi(b, **p)

    mp.mp.dps = 20
    try:
        integral = mp.quad(u, [c, 1], method="gauss-legendre", maxdegree=4)
    finally:
        mp.mp.dps = 30
    return x * (1 - c) - integral


# repelling reference: lam=1, theta=1, mu=1, sigma=0.5, Phi = 4((1-c) + (1-c)^2/2)
REPL = dict(lam=mp.mpf(1), theta=mp.mpf(1), mu=mp.mpf(1), sigma=mp.mpf("0.5"))


def _repl_Phi(c):
    d = 1 - c
    return 4 * (d + d * d / 2)


def gamma_star(c):
    p = REPL
    c = mp.mpf(c)
    zeta = (p["lam"] + p["theta"]) * (1 - c) - p["lam"] * _repl_Phi(c)
    xb = p["theta"] * p["mu"] * _repl_Phi(c) / zeta
    f = lambda y: psi(y, **p)  # noqa: E731
    m = lambda x: f(x) / mp.diff(f, x) - (x - xb)  # noqa: E731
    hi = xb + mp.mpf("0.25")
    while m(hi) > 0:
        hi += mp.mpf("0.25")
    return _bisect(m, xb, hi), xb


def A_coeff(c):
    p = REPL
    g, _ = gamma_star(c)
    c = mp.mpf(c)
    ph = _repl_Phi(c)
    b = g * (1 - c) - p["lam"] * ph * ((g - p["mu"]) / (p["lam"] + p["theta"]) + p["mu"] / p["lam"])
    return b / psi(g, **p)


def main():
    print("D_{-0.5}(1) =", mp.pcfd(-0.5, 1))
    ref = dict(lam=1, theta=2, mu=1, sigma=mp.mpf("0.5"))
    print("phi(2) =", phi(2, **ref))
    print("psi(2) =", psi(2, **ref))
    for c in ("0", "0.25", "0.5", "0.75", "1"):
        print(f"beta*({c}) =", beta_star(c))
    for c in ("0", "0.25", "0.5", "0.75"):
        g, xb = gamma_star(c)
        print(f"gamma*({c}) =", g, " x_bar0 =", xb, " A =", A_coeff(c))
    print("F(1.0, 0.5) =", F_reflecting("1.0", "0.5"))


if __name__ == "__main__":
    main()
