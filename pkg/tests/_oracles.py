"""Independent numerical oracles shared by the test suite.

These implementations deliberately use different discretizations from the
package code paths they check.
"""

import numpy as np


def volterra_equality_solution(h_fn, g_fn, alpha, horizon, n=800):
    """Solve f(t) = h(t) + int_0^t (t-s)^(-alpha) g(s) f(s) ds by product
    integration with piecewise-linear g*f (exact singular cell weights).

    Returns (ts, f).
    """
    ts = np.linspace(0.0, horizon, n + 1)
    hs = np.array([h_fn(t) for t in ts])
    gs = np.array([g_fn(t) for t in ts])
    f = np.zeros_like(ts)
    f[0] = hs[0]

    def basis_weights(T, a, b):
        # integral over [a,b] of (T-s)^(-alpha) times the linear hat values at a,b
        ua, ub = T - a, T - b
        i1 = (ua ** (1.0 - alpha) - ub ** (1.0 - alpha)) / (1.0 - alpha)
        i2 = (ua ** (2.0 - alpha) - ub ** (2.0 - alpha)) / (2.0 - alpha)
        den = ua - ub
        wa = (i2 - ub * i1) / den
        wb = (ua * i1 - i2) / den
        return wa, wb

    for j in range(1, n + 1):
        T = ts[j]
        acc = hs[j]
        for i in range(j):
            wa, wb = basis_weights(T, ts[i], ts[i + 1])
            acc += wa * gs[i] * f[i]
            if i + 1 < j:
                acc += wb * gs[i + 1] * f[i + 1]
            else:
                # the f[j] term stays on the left-hand side
                denom_w = wb
        f[j] = acc / (1.0 - denom_w * gs[j])
        if not np.isfinite(f[j]) or f[j] < 0:
            raise RuntimeError("oracle blow-up; refine the grid")
    return ts, f


def rk4_path(f, y0, t0, t1, n):
    """Classical fixed-step RK4 integrator for dy/dt = f(t, y)."""
    y = float(y0)
    t = float(t0)
    dt = (t1 - t0) / n
    for _ in range(n):
        k1 = f(t, y)
        k2 = f(t + dt / 2, y + dt * k1 / 2)
        k3 = f(t + dt / 2, y + dt * k2 / 2)
        k4 = f(t + dt, y + dt * k3)
        y += dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6
        t += dt
    return y


def heat_gaussian(t, xi, width, nu=1.0):
    """Closed-form evolution of exp(-xi^2/width^2) under d/dt = 4 nu d^2/dxi^2."""
    s2 = width**2 + 16.0 * nu * t
    return width / np.sqrt(s2) * np.exp(-(xi**2) / s2)


def heat_erf(t, xi, width, nu=1.0):
    """Closed-form evolution of erf(xi/width) under the same operator."""
    from scipy.special import erf

    return erf(xi / np.sqrt(width**2 + 16.0 * nu * t))
