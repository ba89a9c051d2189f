"""Backward Monte-Carlo point estimates.

Each query point launches ``N`` particles at time ``T`` that follow the
associated SDE back to ``t = 0``.  Particle ``i`` contributes
``exp(J_i) * (phi(X_i(0)) + Q_i)`` with ``J_i`` the reaction integral over
``[0, T]`` and ``Q_i = sum_j exp(-K(t_j)) S(X(t_j), t_j) dt_j``; this equals
``Lambda(T) phi(X(0)) + sum_j Lambda(t_j) S dt_j`` without a second pass.

Particle ``i`` of the ``j``-th point in a batch always draws from the stream
``(point=j, particle=i)``.  Listing the same point twice therefore gives two
identical estimates rather than two independent ones.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import expr, parallel, sde
from .errors import SolverError

FAULT_WARN_FRACTION = 0.01


@dataclass(frozen=True)
class PointEstimate:
    x: tuple
    horizon: float
    f_hat: float
    se: float
    n: int
    dt: float
    faulted: int
    warnings: tuple = ()
    error: str | None = None

    @property
    def n_eff(self):
        return self.n - self.faulted


@dataclass(frozen=True, eq=False)
class EndpointSet:
    """Traced endpoints of one query point, reusable for any initial condition.

    ``positions`` is ``(d, m)`` over the ``m`` non-faulted particles;
    ``weights`` holds ``exp(J_i)`` and ``sources`` holds ``Q_i``.
    """

    x: tuple
    horizon: float
    dt: float
    seed: int
    n: int
    positions: np.ndarray
    weights: np.ndarray
    sources: np.ndarray
    trajectory_faults: int
    point: int = 0
    refine: int = 1
    fingerprint: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def dimension(self):
        return self.positions.shape[0]


def _check_args(spec, x, n, dt):
    xs = np.asarray(x, dtype=np.float64).reshape(-1)
    if xs.shape[0] != spec.dimension:
        raise ValueError(f"query point has {xs.shape[0]} coordinates, spec has d={spec.dimension}")
    if int(n) < 2:
        raise ValueError(f"need N >= 2 particles, got {n}")
    if not (0 < dt <= spec.horizon):
        raise ValueError(f"dt must satisfy 0 < dt <= T={spec.horizon}, got {dt}")
    return xs


def _trace_chunk(args):
    spec, xs, point, seed, dt, refine, lo, hi = args
    ids = np.arange(lo, hi, dtype=np.uint64)
    return sde.trace(spec, xs, ids, point, seed, dt, "backward", refine)


def _assemble(spec, xs, n, dt, seed, point, refine, parts):
    x_end = np.concatenate([p[0] for p in parts], axis=1)
    k = np.concatenate([p[1] for p in parts])
    q = np.concatenate([p[2] for p in parts])
    bad = np.concatenate([p[3] for p in parts])
    good = ~bad
    with np.errstate(over="ignore"):
        weights = np.exp(k[good])
    return EndpointSet(
        x=tuple(float(v) for v in xs),
        horizon=spec.horizon,
        dt=float(dt),
        seed=int(seed),
        n=int(n),
        positions=np.ascontiguousarray(x_end[:, good]),
        weights=weights,
        sources=q[good],
        trajectory_faults=int(bad.sum()),
        point=int(point),
        refine=int(refine),
        fingerprint=spec.fingerprint(),
    )


def _tasks(spec, xs, n, dt, seed, point, refine):
    return [(spec, xs, point, seed, dt, refine, lo, hi) for lo, hi in parallel.chunk_ranges(n)]


def trace_endpoints(spec, x, N, dt, seed, *, point=0, workers=None, refine=1) -> EndpointSet:
    """Trace ``N`` particles from ``(x, T)`` back to ``t = 0`` and keep endpoints."""
    xs = _check_args(spec, x, N, dt)
    parts = parallel.run_ordered(_trace_chunk, _tasks(spec, xs, int(N), dt, seed, point, refine),
                                 workers)
    return _assemble(spec, xs, int(N), dt, seed, point, refine, parts)


def evaluate_with_endpoints(endpoints: EndpointSet, phi) -> PointEstimate:
    """Estimate for initial condition ``phi`` from stored endpoints alone."""
    if endpoints.n - endpoints.trajectory_faults <= 0:
        raise SolverError(f"all {endpoints.n} particles faulted at x={endpoints.x}")
    node = _phi_node(phi, endpoints.dimension)
    contrib = _contributions(node, endpoints.positions, endpoints.weights, endpoints.sources)
    return _estimate(endpoints.x, endpoints.horizon, endpoints.dt, endpoints.n,
                     endpoints.trajectory_faults, contrib)


def _phi_node(phi, d):
    return phi if isinstance(phi, expr.ExpressionNode) else expr.parse(phi, d)


def _contributions(node, positions, weights, sources):
    """Per-particle ``exp(J) (phi(X(0)) + Q)``; non-finite entries flag faults."""
    m = positions.shape[1]
    vals = np.broadcast_to(np.asarray(expr.evaluate(node, positions, 0.0)), (m,))
    with np.errstate(all="ignore"):
        return weights * (vals + sources)


def _estimate(x, horizon, dt, n, trajectory_faults, contrib):
    good = np.isfinite(contrib)
    faulted = trajectory_faults + int(contrib.shape[0] - good.sum())
    if n - faulted <= 0:
        raise SolverError(f"all {n} particles faulted at x={x}")
    f_hat, se = parallel.mean_and_se(contrib if good.all() else contrib[good])
    notes = ()
    if faulted > FAULT_WARN_FRACTION * n:
        msg = f"{faulted} of {n} particles faulted at x={x}"
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        notes = (msg,)
    return PointEstimate(x, horizon, f_hat, se, n, dt, faulted, notes)


def solve_point(spec, x, N, dt, seed, *, point=0, workers=None, refine=1) -> PointEstimate:
    """Feynman-Kac estimate of ``f(x, T)`` with its standard error."""
    ends = trace_endpoints(spec, x, N, dt, seed, point=point, workers=workers, refine=refine)
    return evaluate_with_endpoints(ends, spec.initial)


def _per_point_n(points, N):
    if np.ndim(N) == 0:
        return [int(N)] * len(points)
    ns = [int(v) for v in N]
    if len(ns) != len(points):
        raise ValueError(f"{len(ns)} particle counts given for {len(points)} points")
    return ns


def trace_grid(spec, points, N, dt, seed, *, workers=None, refine=1):
    """Endpoint sets for a batch of points, in input order.

    A point whose arguments are invalid yields the exception instead of a set.
    """
    points = [np.asarray(p, dtype=np.float64).reshape(-1) for p in points]
    if not points:
        raise ValueError("no query points given")
    ns = _per_point_n(points, N)
    tasks, owners, results = [], [], [None] * len(points)
    # a repeated point reuses the stream id of its first occurrence
    first, ids = {}, []
    for j, p in enumerate(points):
        ids.append(first.setdefault(tuple(p.tolist()), j))
    for j, (p, n) in enumerate(zip(points, ns)):
        try:
            xs = _check_args(spec, p, n, dt)
        except ValueError as exc:
            results[j] = exc
            continue
        for task in _tasks(spec, xs, n, dt, seed, ids[j], refine):
            tasks.append(task)
            owners.append(j)
    parts = parallel.run_ordered(_trace_chunk, tasks, workers)
    grouped = {}
    for j, part in zip(owners, parts):
        grouped.setdefault(j, []).append(part)
    for j, chunk_parts in grouped.items():
        results[j] = _assemble(spec, points[j], ns[j], dt, seed, ids[j], refine, chunk_parts)
    return results


def solve_grid(spec, points, N, dt, seed, *, workers=None, refine=1):
    """Estimates at many points; ``N`` may be a scalar or one count per point.

    Per-point failures come back as estimates with ``error`` set and NaN
    values; the rest of the batch is unaffected.
    """
    out = []
    for j, ends in enumerate(trace_grid(spec, points, N, dt, seed, workers=workers, refine=refine)):
        p = tuple(float(v) for v in np.asarray(points[j], dtype=np.float64).reshape(-1))
        if isinstance(ends, Exception):
            out.append(_failed(spec, p, N, j, dt, ends))
            continue
        try:
            out.append(evaluate_with_endpoints(ends, spec.initial))
        except SolverError as exc:
            out.append(_failed(spec, p, ends.n, j, dt, exc))
    return out


def _failed(spec, p, N, j, dt, exc):
    n = int(N if np.ndim(N) == 0 else N[j])
    return PointEstimate(p, spec.horizon, float("nan"), float("nan"), n, float(dt), n,
                         (), str(exc))


def _levels_chunk(args):
    spec, xs, point, seed, dt, refines, lo, hi = args
    ids = np.arange(lo, hi, dtype=np.uint64)
    out = []
    for x_end, k, q, bad in sde.trace_levels(spec, xs, ids, point, seed, dt, refines):
        good = ~bad
        with np.errstate(over="ignore"):
            weights = np.exp(k[good])
        contrib = _contributions(spec.initial, np.ascontiguousarray(x_end[:, good]), weights,
                                 q[good])
        out.append((contrib, int(bad.sum())))
    return out


def solve_point_levels(spec, x, N, dt, seed, refines, *, point=0, workers=None):
    """Coupled estimates at steps ``m * dt`` for each ``m`` in ``refines``.

    Entry ``j`` equals ``solve_point(spec, x, N, refines[j] * dt, seed,
    refine=refines[j])`` exactly; the levels share one Brownian path per
    particle, so their differences carry little sampling noise.  Only the
    per-particle contributions are kept, which bounds memory at large ``N``.
    """
    refines = [int(m) for m in refines]
    xs = _check_args(spec, x, N, max(refines) * dt)
    tasks = [(spec, xs, point, seed, dt, refines, lo, hi)
             for lo, hi in parallel.chunk_ranges(int(N))]
    parts = parallel.run_ordered(_levels_chunk, tasks, workers)
    point_x = tuple(float(v) for v in xs)
    out = []
    for lev, m in enumerate(refines):
        contrib = np.concatenate([p[lev][0] for p in parts])
        faults = sum(p[lev][1] for p in parts)
        for p in parts:
            p[lev] = None
        out.append(_estimate(point_x, spec.horizon, float(m * dt), int(N), faults, contrib))
        del contrib
    return out
