"""Conventional forward Monte-Carlo with a binned (histogram) solution.

Particles start uniformly on a launch interval ``[a0, b0]`` at ``t = 0``,
carry the weight ``phi(Y_i(0))`` and are integrated forward to ``T``.  The
final positions are histogrammed on ``[a, b]``; the factor ``(b0 - a0)``
undoes the uniform launch density so each bin estimates the bin average of
``f(., T)``.  This module is deliberately one-dimensional and has no
reaction or source term.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import expr, kernels, parallel, sde

#: launch mass outside ``[a0, b0]`` allowed before a warning (relative)
LAUNCH_MASS_TOL = 1e-6
LAUNCH_GRID = 10_000

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True, eq=False)
class BinnedSolution:
    """Histogram estimate of ``f(y, T)`` on ``B`` equal bins of ``[a, b]``.

    ``sum_c`` and ``sum_c2`` are the per-bin sums of the particle
    contributions ``c_i = (b0 - a0) / h * w_i`` and their squares; they let
    callers rebuild standard errors of derived quantities.
    """

    interval: tuple
    bins: int
    width: float
    centers: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    n: int
    dt: float
    launch: tuple
    underflow: int
    overflow: int
    faulted: int
    empty: np.ndarray
    sum_c: np.ndarray
    sum_c2: np.ndarray
    warnings: tuple = ()

    @property
    def edges(self):
        a, b = self.interval
        return np.linspace(a, b, self.bins + 1)

    @property
    def n_eff(self):
        return self.n - self.faulted

    def mass(self):
        """``sum(estimate * h)`` and its standard error."""
        h = self.width
        n = self.n_eff
        total = float(np.sum(self.sum_c) * h / n)
        # particles land in one bin only, so squared totals add bin by bin
        second = float(np.sum(self.sum_c2) * h * h / n)
        var = (second - total * total) * n / (n - 1) if n > 1 else np.nan
        return total, float(np.sqrt(max(var, 0.0) / n))


def launch_mass_fraction(phi, launch, grid=LAUNCH_GRID):
    """Fraction of ``int |phi|`` lying outside the launch interval.

    Estimated on ``grid`` points spanning the launch interval widened by its
    own length on both sides.
    """
    a0, b0 = launch
    span = b0 - a0
    y = np.linspace(a0 - span, b0 + span, grid)
    vals = np.abs(np.broadcast_to(np.asarray(expr.evaluate(phi, y[None, :], 0.0)), y.shape))
    total = _trapezoid(vals, y)
    if not total > 0:
        return 0.0
    outside = np.where((y < a0) | (y > b0), vals, 0.0)
    out = _trapezoid(outside, y)
    return float(out / total)


def _check_spec(spec):
    if spec.dimension != 1:
        raise ValueError("the forward solver is one-dimensional")
    for name, node in (("lambda", spec.reaction), ("source", spec.source)):
        if node is None:
            continue
        if not (expr.is_constant(node) and expr.evaluate(node, np.zeros(1), 0.0) == 0.0):
            raise ValueError(f"the forward solver requires {name} = 0")


def _chunk(args):
    spec, launch, interval, bins, seed, dt, lo, hi = args
    a0, b0 = launch
    a, b = interval
    h = (b - a) / bins
    ids = np.arange(lo, hi, dtype=np.uint64)
    k0, k1 = sde.seed_key(seed)
    u = kernels.uniforms(k0, k1, sde.LANE_LAUNCH, 0, ids, 0, 1)[0]
    y0 = a0 + u * (b0 - a0)
    weights = np.broadcast_to(np.asarray(expr.evaluate(spec.initial, y0[None, :], 0.0)),
                              y0.shape)
    y_end, _, _, bad = sde.trace(spec, y0[None, :], ids, 0, seed, dt, "forward")
    y = y_end[0]
    bad = bad | ~np.isfinite(weights)
    good = ~bad
    y, w = y[good], weights[good]
    under = int(np.count_nonzero(y < a))
    over = int(np.count_nonzero(y > b))
    inside = (y >= a) & (y <= b)
    idx = np.minimum(((y[inside] - a) / h).astype(np.int64), bins - 1)
    c = (b0 - a0) / h * w[inside]
    s1 = np.bincount(idx, weights=c, minlength=bins)
    s2 = np.bincount(idx, weights=c * c, minlength=bins)
    counts = np.bincount(idx, minlength=bins)
    return s1, s2, counts, under, over, int(bad.sum())


def solve_forward(spec, launch, interval, B, N, dt, seed, *, workers=None) -> BinnedSolution:
    """Forward Monte-Carlo histogram of ``f(y, T)``.

    ``launch = (a0, b0)`` is where particles start; ``interval = (a, b)``
    with ``B`` bins is where they are counted.  Particles ending outside
    ``[a, b]`` are tallied as under/overflow.
    """
    _check_spec(spec)
    a0, b0 = (float(v) for v in launch)
    a, b = (float(v) for v in interval)
    B, N = int(B), int(N)
    if not a0 < b0:
        raise ValueError(f"launch interval needs a0 < b0, got {launch}")
    if not a < b:
        raise ValueError(f"output interval needs a < b, got {interval}")
    if B < 1:
        raise ValueError(f"need at least one bin, got {B}")
    if N < B:
        raise ValueError(f"need N >= B particles, got N={N}, B={B}")
    if not (0 < dt <= spec.horizon):
        raise ValueError(f"dt must satisfy 0 < dt <= T={spec.horizon}, got {dt}")
    notes = []
    frac = launch_mass_fraction(spec.initial, (a0, b0))
    if frac > LAUNCH_MASS_TOL:
        notes.append(f"{frac:.3g} of the initial-condition mass lies outside the launch "
                     f"interval [{a0}, {b0}]")
    tasks = [(spec, (a0, b0), (a, b), B, seed, dt, lo, hi)
             for lo, hi in parallel.chunk_ranges(N)]
    parts = parallel.run_ordered(_chunk, tasks, workers)
    s1 = np.zeros(B)
    s2 = np.zeros(B)
    counts = np.zeros(B, dtype=np.int64)
    under = over = faults = 0
    for p1, p2, cnt, u_, o_, f_ in parts:
        s1 += p1
        s2 += p2
        counts += cnt
        under += u_
        over += o_
        faults += f_
    n_eff = N - faults
    h = (b - a) / B
    if n_eff < 2:
        raise ValueError(f"only {n_eff} forward particles survived")
    est = s1 / n_eff
    var = np.maximum(s2 - n_eff * est * est, 0.0) / (n_eff - 1)
    se = np.sqrt(var / n_eff)
    empty = counts == 0
    est[empty] = 0.0
    se[empty] = 0.0
    if empty.any():
        notes.append(f"{int(empty.sum())} of {B} bins are empty")
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    centers = a + (np.arange(B) + 0.5) * h
    return BinnedSolution((a, b), B, h, centers, est, se, N, float(dt), (a0, b0), under, over,
                          faults, empty, s1, s2, tuple(notes))
