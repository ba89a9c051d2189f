"""Independent oracles: closed-form Gaussian solutions and finite differences.

``fd_solve`` discretises the PDE directly in divergence form on a truncated
box with zero Dirichlet boundaries.  It differences ``D`` itself and never
uses the symbolic drift or any Monte-Carlo kernel, so agreement with the
particle solvers is independent evidence.

* ``d = 1``: Crank-Nicolson, flux form with ``D`` at half nodes, solved with
  a tridiagonal (Thomas) sweep each step.
* ``d = 2``: explicit Euler in time, flux form for the diagonal terms and
  centred differences for the ``D12`` cross terms.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from . import expr, kernels
from .errors import StabilityError
from .problem import normalize_box

#: |phi| on the box boundary must stay below this fraction of max |phi|
BOX_TOL = 1e-8
#: warn once |f| next to the boundary exceeds this fraction of max |f|
BOUNDARY_WARN = 1e-6


def gaussian_oracle(D_const, s, x, T, lam=0.0):
    """``exp(lam T)`` times the N(0, sqrt(s^2 + 2 D T)) density at ``x``.

    Exact solution for constant ``D``, constant ``lam``, no source and the
    N(0, s) density as initial condition.
    """
    if D_const < 0:
        raise ValueError(f"D must be >= 0, got {D_const}")
    if not s > 0:
        raise ValueError(f"s must be > 0, got {s}")
    x = np.asarray(x, dtype=np.float64)
    sigma = s if T == 0 else math.sqrt(s * s + 2.0 * D_const * T)
    val = np.exp(-x * x / (2.0 * sigma * sigma)) / (sigma * math.sqrt(2.0 * math.pi))
    val = val * math.exp(lam * T)
    return float(val) if val.ndim == 0 else val


def gaussian_oracle_mv(cov0, D, x, T, lam=0.0):
    """Multivariate analogue: N(0, cov0 + 2 D T) density times ``exp(lam T)``.

    ``x`` has shape ``(d,)`` or ``(d, n)``.
    """
    cov = np.asarray(cov0, dtype=np.float64) + 2.0 * T * np.asarray(D, dtype=np.float64)
    d = cov.shape[0]
    x = np.asarray(x, dtype=np.float64)
    pts = x.reshape(d, -1)
    inv = np.linalg.inv(cov)
    quad = np.einsum("in,ij,jn->n", pts, inv, pts)
    norm = math.sqrt((2.0 * math.pi) ** d * np.linalg.det(cov))
    val = np.exp(-0.5 * quad) / norm * math.exp(lam * T)
    return float(val[0]) if x.ndim == 1 else val


@dataclass(frozen=True, eq=False)
class GridSolution:
    """Field values at ``time`` on a uniform tensor grid."""

    axes: tuple
    dt: float
    values: np.ndarray
    box: tuple
    time: float
    steps: int
    warnings: tuple = ()
    meta: dict = field(default_factory=dict)

    @property
    def dimension(self):
        return len(self.axes)

    @property
    def spacing(self):
        return tuple(float(a[1] - a[0]) for a in self.axes)

    def interpolant(self):
        if self.dimension == 1:
            return CubicSpline(self.axes[0], self.values)
        return RegularGridInterpolator(self.axes, self.values, method="cubic")

    def at(self, points):
        """Interpolated values at ``points``: scalars/1-D array for d=1, ``(n, d)`` for d=2."""
        pts = np.asarray(points, dtype=np.float64)
        if self.dimension == 1:
            out = self.interpolant()(pts)
            return float(out) if np.ndim(out) == 0 else np.asarray(out)
        single = pts.ndim == 1
        out = self.interpolant()(np.atleast_2d(pts))
        return float(out[0]) if single else out

    def node_value(self, point):
        """Value at the grid node nearest to ``point`` (exact when it is a node)."""
        idx = tuple(int(np.argmin(np.abs(ax - p))) for ax, p in zip(self.axes, np.atleast_1d(point)))
        return float(self.values[idx])

    def mass(self):
        """Grid sum of the field times the cell volume."""
        return float(np.sum(self.values) * np.prod(self.spacing))


def _eval(node, pts, t, shape):
    if node is None:
        return np.zeros(shape)
    return np.broadcast_to(np.asarray(expr.evaluate(node, pts, t), dtype=np.float64), shape)


def _time_dependent(nodes):
    return any(n is not None and expr.depends_on(n, "t") for n in nodes)


def _check_box(spec, f0, box):
    scale = np.max(np.abs(f0))
    if f0.ndim == 1:
        edge = max(abs(f0[0]), abs(f0[-1]))
    else:
        edge = max(np.abs(f0[0]).max(), np.abs(f0[-1]).max(), np.abs(f0[:, 0]).max(),
                   np.abs(f0[:, -1]).max())
    if scale > 0 and edge >= BOX_TOL * scale:
        raise ValueError(f"box {box} is too small: |phi| on its boundary is {edge:.3g}, "
                         f"more than {BOX_TOL:g} of max |phi| = {scale:.3g}")


def _ring_max(f):
    if f.ndim == 1:
        return max(abs(f[1]), abs(f[-2]))
    return max(np.abs(f[1, 1:-1]).max(), np.abs(f[-2, 1:-1]).max(),
               np.abs(f[1:-1, 1]).max(), np.abs(f[1:-1, -2]).max())


class _BoundaryWatch:
    def __init__(self):
        self.hit = None

    def check(self, f, t):
        if self.hit is None:
            peak = np.max(np.abs(f))
            if peak > 0 and _ring_max(f) > BOUNDARY_WARN * peak:
                self.hit = t


def fd_solve(spec, box=None, nodes=None, steps=None, *, time=None) -> GridSolution:
    """Finite-difference solution of the spec at ``time`` (default ``T``).

    ``box`` defaults to the spec's sample box; ``nodes`` is the node count per
    axis (int or tuple) and ``steps`` the number of time steps.
    """
    d = spec.dimension
    if d not in (1, 2):
        raise ValueError(f"fd_solve supports d = 1 or 2, got {d}")
    box = spec.sample_box if box is None else normalize_box(box, d)
    if box is None:
        raise ValueError("fd_solve needs a box (argument or the spec's sample box)")
    if nodes is None or steps is None:
        raise ValueError("fd_solve needs explicit node and step counts")
    nodes = (int(nodes),) * d if np.ndim(nodes) == 0 else tuple(int(v) for v in nodes)
    if len(nodes) != d or min(nodes) < 5:
        raise ValueError(f"need at least 5 nodes per axis, got {nodes}")
    steps = int(steps)
    if steps < 1:
        raise ValueError(f"need at least one time step, got {steps}")
    horizon = spec.horizon if time is None else float(time)
    axes = tuple(np.linspace(lo, hi, n) for (lo, hi), n in zip(box, nodes))
    if d == 1:
        return _cn_1d(spec, axes[0], box, horizon, steps)
    return _explicit_2d(spec, axes, box, horizon, steps)


def _cn_1d(spec, x, box, horizon, steps):
    n = x.shape[0]
    h = x[1] - x[0]
    dt = horizon / steps
    pts = x[None, :]
    half = (0.5 * (x[1:] + x[:-1]))[None, :]
    f = _eval(spec.initial, pts, 0.0, (n,)).astype(np.float64).copy()
    _check_box(spec, f, box)
    D = spec.diffusion[0][0]
    moving = _time_dependent([D, spec.reaction, spec.source])

    def operator(t):
        dh = _eval(D, half, t, (n - 1,))
        lam = _eval(spec.reaction, pts, t, (n,))[1:-1]
        src = _eval(spec.source, pts, t, (n,))[1:-1]
        lo = dh[:-1] / (h * h)
        up = dh[1:] / (h * h)
        return lo, up, lam - (lo + up), src

    def apply(op, v):
        lo, up, di, _ = op
        return lo * v[:-2] + di * v[1:-1] + up * v[2:]

    watch = _BoundaryWatch()
    op_now = operator(0.0)
    m = n - 2
    for step in range(steps):
        t1 = horizon if step == steps - 1 else (step + 1) * dt
        op_next = operator(t1) if moving else op_now
        rhs = f[1:-1] + 0.5 * dt * apply(op_now, f) + 0.5 * dt * (op_now[3] + op_next[3])
        lo, up, di, _ = op_next
        lower = np.empty(m)
        upper = np.empty(m)
        lower[1:] = -0.5 * dt * lo[1:]
        lower[0] = 0.0
        upper[:-1] = -0.5 * dt * up[:-1]
        upper[-1] = 0.0
        f[1:-1] = kernels.thomas(lower, 1.0 - 0.5 * dt * di, upper, rhs)
        f[0] = f[-1] = 0.0
        watch.check(f, t1)
        op_now = op_next
    return _finish((x,), dt, f, box, horizon, steps, watch, "crank-nicolson")


def stable_dt(spec, axes, times):
    """Largest explicit step allowed by ``h^2 / (4 max row-sum |D|)``."""
    X, Y = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()])
    worst = 0.0
    for t in times:
        ent = [[_eval(spec.diffusion[k][l], pts, t, (pts.shape[1],)) for l in range(2)]
               for k in range(2)]
        rows = [np.abs(ent[k][0]) + np.abs(ent[k][1]) for k in range(2)]
        worst = max(worst, float(np.max(rows)))
    h = min(float(a[1] - a[0]) for a in axes)
    return math.inf if worst == 0 else h * h / (4.0 * worst)


def _explicit_2d(spec, axes, box, horizon, steps):
    xa, ya = axes
    nx, ny = xa.shape[0], ya.shape[0]
    hx = xa[1] - xa[0]
    hy = ya[1] - ya[0]
    dt = horizon / steps
    X, Y = np.meshgrid(xa, ya, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()])
    shape = (nx, ny)
    f = _eval(spec.initial, pts, 0.0, (nx * ny,)).reshape(shape).astype(np.float64).copy()
    _check_box(spec, f, box)
    d11, d12, d22 = spec.diffusion[0][0], spec.diffusion[0][1], spec.diffusion[1][1]
    moving = _time_dependent([d11, d12, d22, spec.reaction, spec.source])
    # half nodes in x (between i and i+1) and in y
    xh = np.stack([(0.5 * (X[1:] + X[:-1])).ravel(), Y[1:].ravel()])
    yh = np.stack([X[:, 1:].ravel(), (0.5 * (Y[:, 1:] + Y[:, :-1])).ravel()])

    def coefficients(t):
        return (
            _eval(d11, xh, t, (xh.shape[1],)).reshape(nx - 1, ny),
            _eval(d22, yh, t, (yh.shape[1],)).reshape(nx, ny - 1),
            _eval(d12, pts, t, (nx * ny,)).reshape(shape),
            _eval(spec.reaction, pts, t, (nx * ny,)).reshape(shape),
            _eval(spec.source, pts, t, (nx * ny,)).reshape(shape),
        )

    limit = stable_dt(spec, axes, [0.0, 0.5 * horizon, horizon] if moving else [0.0])
    if dt > limit * (1.0 + 1e-12):
        raise StabilityError(f"explicit step {dt:.4g} exceeds the stability bound "
                             f"{limit:.4g}; use at least {math.ceil(horizon / limit)} steps")
    coef = coefficients(0.0)
    watch = _BoundaryWatch()
    for step in range(steps):
        t = step * dt
        if moving and step:
            coef = coefficients(t)
        a11, a22, a12, lam, src = coef
        fx = a11 * (f[1:] - f[:-1]) / (hx * hx)
        fy = a22 * (f[:, 1:] - f[:, :-1]) / (hy * hy)
        lap = (fx[1:, 1:-1] - fx[:-1, 1:-1]) + (fy[1:-1, 1:] - fy[1:-1, :-1])
        c = 1.0 / (4.0 * hx * hy)
        # d/dx (D12 df/dy) and d/dy (D12 df/dx), centred
        cross_x = (a12[2:, 1:-1] * (f[2:, 2:] - f[2:, :-2])
                   - a12[:-2, 1:-1] * (f[:-2, 2:] - f[:-2, :-2]))
        cross_y = (a12[1:-1, 2:] * (f[2:, 2:] - f[:-2, 2:])
                   - a12[1:-1, :-2] * (f[2:, :-2] - f[:-2, :-2]))
        rate = lap + c * (cross_x + cross_y) + lam[1:-1, 1:-1] * f[1:-1, 1:-1] + src[1:-1, 1:-1]
        new = np.zeros_like(f)
        new[1:-1, 1:-1] = f[1:-1, 1:-1] + dt * rate
        f = new
        watch.check(f, t + dt)
    return _finish(axes, dt, f, box, horizon, steps, watch, "explicit", limit=limit)


def _finish(axes, dt, f, box, horizon, steps, watch, scheme, **meta):
    notes = ()
    if watch.hit is not None:
        msg = (f"solution next to the boundary exceeded {BOUNDARY_WARN:g} of its maximum "
               f"at t={watch.hit:.4g}; the box may be too small")
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        notes = (msg,)
    if not np.all(np.isfinite(f)):
        raise StabilityError("finite-difference solution became non-finite")
    meta["scheme"] = scheme
    return GridSolution(tuple(axes), dt, f, box, horizon, steps, notes, meta)


def refine_counts(spec, nodes, steps):
    """Node and step counts after halving ``h`` (and scaling ``dt`` to match).

    Crank-Nicolson is second order in time, so ``dt`` halves with ``h``; the
    explicit scheme keeps ``dt / h^2`` fixed so it quarters.
    """
    nodes = (int(nodes),) * spec.dimension if np.ndim(nodes) == 0 else tuple(nodes)
    factor = 2 if spec.dimension == 1 else 4
    return tuple(2 * n - 1 for n in nodes), int(steps) * factor


@dataclass(frozen=True)
class SelfConvergence:
    probes: np.ndarray
    values: np.ndarray
    ratios: np.ndarray
    sigma: np.ndarray
    solutions: tuple

    @property
    def best(self):
        return self.values[-1]


def self_convergence(spec, box, nodes, steps, probes, levels=3):
    """Solve on ``levels`` nested grids and compare at node-aligned ``probes``.

    ``ratios`` holds ``(f_h - f_{h/2}) / (f_{h/2} - f_{h/4})`` per probe (for
    three levels) and ``sigma`` the conservative error estimate
    ``|f_finest - f_previous|`` of the finest value.
    """
    probes = np.asarray(probes, dtype=np.float64)
    sols = []
    n, s = nodes, steps
    for lev in range(levels):
        sols.append(fd_solve(spec, box, n, s))
        if lev < levels - 1:
            n, s = refine_counts(spec, n, s)
    pts = probes.reshape(-1, spec.dimension)
    vals = np.array([[sol.node_value(p) for p in pts] for sol in sols])
    diffs = vals[:-1] - vals[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = diffs[:-1] / diffs[1:] if levels >= 3 else np.full((0, len(pts)), np.nan)
    sigma = np.abs(vals[-1] - vals[-2])
    return SelfConvergence(pts, vals, ratios, sigma, tuple(sols))
