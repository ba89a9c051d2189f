"""Independent numerical oracles used by the acceptance suite.

Nothing here imports the package, so agreement with it is evidence rather
than a re-run of the same arithmetic.
"""

import math

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded


def tanh_diffusion(x):
    return 0.5 * (1 + 0.5 * np.tanh(x))


def tanh_drift(x):
    # d/dx of tanh_diffusion
    return 0.25 / np.cosh(x) ** 2


def std_normal(x):
    return np.exp(-x * x / 2) / math.sqrt(2 * math.pi)


def euler_chain_value(dt, x0=0.0, T=1.0, L=12.0, nodes=4801, order=40):
    """E[phi(X_0)] for the discrete Euler chain started at x0, by quadrature.

    Iterates the one-step transition u <- E[u(x + mu dt + sqrt(2 D dt) Z)]
    with Gauss-Hermite nodes on a cubic-spline grid.  The result differs from
    the exact solution only by the time-discretisation bias.
    """
    xs = np.linspace(-L, L, nodes)
    z, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / w.sum()
    u = std_normal(xs)
    n = int(round(T / dt))
    shift = tanh_drift(xs)[:, None] * dt
    spread = np.sqrt(2 * tanh_diffusion(xs))[:, None] * math.sqrt(dt) * z[None, :]
    y = np.clip(xs[:, None] + shift + spread, -L, L)
    for _ in range(n):
        u = (CubicSpline(xs, u)(y) * w).sum(axis=1)
    return float(CubicSpline(xs, u)(x0))


def crank_nicolson_value(nodes, steps, x0=0.0, T=1.0, L=12.0):
    """Flux-form Crank-Nicolson solution of the tanh benchmark at x0."""
    x = np.linspace(-L, L, nodes)
    h = x[1] - x[0]
    dt = T / steps
    f = std_normal(x)
    dh = tanh_diffusion(0.5 * (x[1:] + x[:-1]))
    lo = dh[:-1] / h ** 2
    up = dh[1:] / h ** 2
    di = -(lo + up)
    m = nodes - 2
    ab = np.zeros((3, m))
    ab[0, 1:] = -0.5 * dt * up[:-1]
    ab[1] = 1 - 0.5 * dt * di
    ab[2, :-1] = -0.5 * dt * lo[1:]
    for _ in range(steps):
        fi = f[1:-1]
        rhs = fi + 0.5 * dt * (di * fi + lo * f[:-2] + up * f[2:])
        f[1:-1] = solve_banded((1, 1), ab, rhs)
    return float(np.interp(x0, x, f))
