"""Counter-based Gaussian streams and Euler-Maruyama steps.

Streams are Philox4x32-10 counters keyed by the 64-bit master seed.  The
128-bit counter is ``(block, lane, particle, point)``, so any variate of any
particle can be regenerated without touching another stream.  Lanes separate
uses of the same (point, particle) identifier.

A backward step from time ``t`` uses coefficients frozen at ``(X, t)``::

    X' = X + mu dt + A zeta sqrt(dt)
    Q' = Q + exp(-K) S dt
    K' = K + lambda dt

``K`` and ``Q`` (and the clock) are carried with Kahan compensation, so a run
of equal steps sums to the horizon without drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .problem import coefficient, diffusion_factor, drift

LANE_INCREMENTS = 0
LANE_LAUNCH = 1
LANE_QV = 2

#: a step whose remainder is within this fraction of ``dt`` lands on the end
SNAP = 1e-9
_STEP_BATCH = 32


def seed_key(seed):
    """Split a seed into the two 32-bit Philox key words."""
    s = int(seed) & 0xFFFFFFFFFFFFFFFF
    return s & 0xFFFFFFFF, s >> 32


@dataclass
class RandomStream:
    """Normal variates for one (point, particle) stream identifier.

    ``particle`` may be an integer array to address many streams at once.
    """

    seed: int
    point: int = 0
    particle: int | np.ndarray = 0
    counter: int = 0
    lane: int = LANE_INCREMENTS

    def draw(self, count):
        """Next ``count`` variates, shape ``(count,)`` or ``(count, n)``."""
        k0, k1 = seed_key(self.seed)
        scalar = np.ndim(self.particle) == 0
        ids = np.atleast_1d(np.asarray(self.particle, dtype=np.uint64))
        out = kernels.normals(k0, k1, self.lane, self.point, ids, self.counter, count)
        self.counter += count
        return out[:, 0] if scalar else out


def next_normal(stream: RandomStream):
    """One standard normal per addressed stream; advances the counter by one."""
    out = stream.draw(1)
    return float(out[0]) if np.ndim(out) == 1 else out[0]


def _kahan(s, c, v):
    y = v - c
    t = s + y
    return t, (t - s) - y


def next_time_backward(t, tc, dt):
    """``(step, t_new, tc_new)`` for a backward step of at most ``dt``."""
    rem = t - tc
    if rem <= dt * (1.0 + SNAP):
        return rem, 0.0, 0.0
    tn, tcn = _kahan(t, tc, -dt)
    return dt, tn, tcn


def next_time_forward(t, tc, dt, horizon):
    """``(step, t_new, tc_new)`` for a forward step clipped to ``horizon``."""
    rem = (horizon - t) + tc
    if rem <= dt * (1.0 + SNAP):
        return rem, horizon, 0.0
    tn, tcn = _kahan(t, tc, dt)
    return dt, tn, tcn


def schedule(horizon, dt, direction="backward"):
    """Start times and lengths of every step covering ``[0, horizon]``.

    Produces exactly the sequence that repeated :func:`backward_step` (or
    :func:`forward_step`) calls would follow.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    dt = float(dt)
    times, steps = [], []
    if direction == "backward":
        t, tc = float(horizon), 0.0
        while t > 0.0:
            h, tn, tc = next_time_backward(t, tc, dt)
            times.append(t)
            steps.append(h)
            t = tn
    elif direction == "forward":
        t, tc = 0.0, 0.0
        while t < horizon:
            h, tn, tc = next_time_forward(t, tc, dt, horizon)
            times.append(t)
            steps.append(h)
            t = tn
    else:
        raise ValueError(f"direction must be 'backward' or 'forward', got {direction!r}")
    return np.array(times), np.array(steps)


@dataclass
class ParticleState:
    """Ensemble of ``n`` particles sharing a clock.

    ``x`` has shape ``(d, n)``.  ``k`` is the reaction integral accumulated
    from the launch time, ``q`` the discounted source sum; ``*_comp`` are
    their Kahan compensations.
    """

    x: np.ndarray
    t: float
    k: np.ndarray
    q: np.ndarray
    faulted: np.ndarray
    k_comp: np.ndarray
    q_comp: np.ndarray
    t_comp: float = 0.0

    @classmethod
    def launch(cls, x, t, n=1):
        xs = np.asarray(x, dtype=np.float64)
        if xs.ndim == 1:
            xs = np.repeat(xs[:, None], n, axis=1)
        n = xs.shape[1]
        z = np.zeros(n)
        return cls(xs.copy(), float(t), z.copy(), z.copy(), np.zeros(n, dtype=bool),
                   z.copy(), z.copy(), 0.0)

    @property
    def n(self):
        return self.x.shape[1]


def _coefficients(spec, x, t, n):
    """``(A, mu)`` with shapes ``(n, d, d)`` and ``(d, n)``."""
    d = spec.dimension
    if spec.constant_factor is not None:
        a_const, mu_const = spec.constant_factor
        return np.broadcast_to(a_const, (n, d, d)), np.broadcast_to(mu_const[:, None], (d, n))
    return diffusion_factor(spec, x, t), drift(spec, x, t)


def _apply(spec, state, t, h, z, accumulate):
    """One explicit update of all particles from time ``t`` with step ``h``."""
    x = state.x
    d, n = x.shape
    k, kc, q, qc = state.k, state.k_comp, state.q, state.q_comp
    checks = []
    with np.errstate(all="ignore"):
        if accumulate and spec.source is not None:
            src = coefficient(spec.source, x, t, n)
            q_new, qc_new = _kahan(q, qc, np.exp(-k) * src * h)
            checks += [src, q_new]
        else:
            q_new, qc_new = q, qc
        if accumulate and spec.reaction is not None:
            lam = coefficient(spec.reaction, x, t, n)
            k_new, kc_new = _kahan(k, kc, lam * h)
            checks += [lam, k_new]
        else:
            k_new, kc_new = k, kc
        a, mu = _coefficients(spec, x, t, n)
        sdt = math.sqrt(h)
        x_new = np.empty_like(x)
        for r in range(d):
            inc = 0.0 + a[:, r, 0] * z[0]
            for c in range(1, d):
                inc = inc + a[:, r, c] * z[c]
            x_new[r] = x[r] + mu[r] * h + inc * sdt
    checks.append(x_new)
    if all(np.isfinite(v).all() for v in checks):
        if not state.faulted.any():
            return x_new, k_new, kc_new, q_new, qc_new, state.faulted
        keep = state.faulted
    else:
        ok = ~state.faulted
        for v in checks:
            fin = np.isfinite(v)
            ok &= fin.all(axis=0) if fin.ndim == 2 else fin
        keep = ~ok
    x_new[:, keep] = x[:, keep]
    return (x_new, np.where(keep, k, k_new), np.where(keep, kc, kc_new),
            np.where(keep, q, q_new), np.where(keep, qc, qc_new), state.faulted | keep)


def _zeta(state, spec, stream, zeta):
    d = spec.dimension
    if zeta is not None:
        z = np.asarray(zeta, dtype=np.float64).reshape(d, -1)
        return np.broadcast_to(z, (d, state.n))
    z = stream.draw(d)
    return z.reshape(d, -1) if z.ndim == 1 else z


def backward_step(state: ParticleState, spec, dt, stream=None, zeta=None):
    """Move every particle back by ``min(dt, t)``; returns a new state.

    ``zeta`` forces the Gaussian vector (shape ``(d,)`` or ``(d, n)``);
    otherwise ``d`` variates per particle are taken from ``stream``.
    Faulted particles are frozen and flagged.
    """
    if state.t <= 0.0:
        raise ValueError("particles already reached t = 0")
    h, tn, tcn = next_time_backward(state.t, state.t_comp, float(dt))
    z = _zeta(state, spec, stream, zeta)
    x, k, kc, q, qc, bad = _apply(spec, state, state.t, h, z, accumulate=True)
    return ParticleState(x, tn, k, q, bad, kc, qc, tcn)


def forward_step(state: ParticleState, spec, dt, stream=None, zeta=None):
    """Move every particle forward by ``dt``, clipped to land on ``T``."""
    horizon = spec.horizon
    if state.t >= horizon:
        raise ValueError("particles already reached t = T")
    h, tn, tcn = next_time_forward(state.t, state.t_comp, float(dt), horizon)
    z = _zeta(state, spec, stream, zeta)
    x, _, _, _, _, bad = _apply(spec, state, state.t, h, z, accumulate=False)
    return replace(state, x=x, t=tn, t_comp=tcn, faulted=bad)


def trace(spec, x0, particles, point, seed, dt, direction="backward", refine=1):
    """Integrate a chunk of particles over the whole horizon.

    ``x0`` is ``(d,)`` (common launch point) or ``(d, n)``.  ``refine > 1``
    builds each step's increment from ``refine`` finer raw increments (see
    :func:`fkmc.kernels.increments`).  Returns ``(x_end, k, q, faulted)``.
    """
    d = spec.dimension
    particles = np.asarray(particles, dtype=np.uint64)
    n = particles.shape[0]
    times, steps = schedule(spec.horizon, dt, direction)
    state = ParticleState.launch(x0, times[0], n)
    k0, k1 = seed_key(seed)
    accumulate = direction == "backward"

    if spec.constant_factor is not None:
        a_const, mu_const = spec.constant_factor
        x = kernels.trace_constant(state.x, particles, steps, mu_const, a_const,
                                   k0, k1, LANE_INCREMENTS, point, refine)
        k = np.zeros(n)
        q = np.zeros(n)
        if accumulate:
            lam = coefficient(spec.reaction, np.zeros(d), 0.0)
            src = coefficient(spec.source, np.zeros(d), 0.0)
            ks, kcs, qs, qcs = 0.0, 0.0, 0.0, 0.0
            for h in steps:
                if spec.source is not None:
                    qs, qcs = _kahan(qs, qcs, np.exp(-ks) * src * h)
                if spec.reaction is not None:
                    ks, kcs = _kahan(ks, kcs, lam * h)
            k[:] = ks
            q[:] = qs
        faulted = ~(np.isfinite(x).all(axis=0) & np.isfinite(k) & np.isfinite(q))
        return x, k, q, faulted

    for s0 in range(0, len(steps), _STEP_BATCH):
        nb = min(_STEP_BATCH, len(steps) - s0)
        z = kernels.increments(k0, k1, LANE_INCREMENTS, point, particles, s0, nb, d, refine)
        for s in range(nb):
            x, k, kc, q, qc, bad = _apply(spec, state, times[s0 + s], steps[s0 + s], z[s], accumulate)
            state = ParticleState(x, 0.0, k, q, bad, kc, qc)
    return state.x, state.k, state.q, state.faulted


def trace_levels(spec, x0, particles, point, seed, dt, refines, direction="backward"):
    """Coupled traces at steps ``m * dt`` for each ``m`` in ``refines``.

    Level ``m`` reproduces ``trace(spec, x0, particles, point, seed, m * dt,
    direction, refine=m)`` bit for bit, but the raw variates are generated
    once and shared by all levels.  Every ``m`` must divide ``max(refines)``.
    Returns one ``(x_end, k, q, faulted)`` tuple per level.
    """
    refines = [int(m) for m in refines]
    if not refines or min(refines) < 1:
        raise ValueError(f"refinement factors must be >= 1, got {refines}")
    top = max(refines)
    if any(top % m for m in refines):
        raise ValueError(f"every refinement factor must divide {top}, got {refines}")
    if spec.constant_factor is not None:
        return [trace(spec, x0, particles, point, seed, m * dt, direction, m) for m in refines]
    d = spec.dimension
    particles = np.asarray(particles, dtype=np.uint64)
    n = particles.shape[0]
    k0, k1 = seed_key(seed)
    accumulate = direction == "backward"
    plans = [schedule(spec.horizon, m * dt, direction) for m in refines]
    states = [ParticleState.launch(x0, times[0], n) for times, _ in plans]
    # fine raw steps needed by each level
    needed = max(len(steps) * m for (_, steps), m in zip(plans, refines))
    width = top * _STEP_BATCH
    for f0 in range(0, needed, width):
        w = min(width, needed - f0)
        raw = kernels.normals(k0, k1, LANE_INCREMENTS, point, particles, f0 * d, w * d)
        raw = raw.reshape(w, d, n)
        for lev, m in enumerate(refines):
            times, steps = plans[lev]
            s0 = f0 // m
            s1 = min(len(steps), (f0 + w) // m)
            if s1 <= s0:
                continue
            z = _coarsen(raw[: (s1 - s0) * m], m, d, n)
            state = states[lev]
            for s in range(s1 - s0):
                x, k, kc, q, qc, bad = _apply(spec, state, times[s0 + s], steps[s0 + s], z[s],
                                              accumulate)
                state = ParticleState(x, 0.0, k, q, bad, kc, qc)
            states[lev] = state
    return [(st.x, st.k, st.q, st.faulted) for st in states]


def _coarsen(raw, m, d, n):
    """Sum groups of ``m`` raw vectors exactly as :func:`kernels.increments` does."""
    grouped = raw.reshape(-1, m, d, n)
    if m == 1:
        return grouped[:, 0]
    z = grouped[:, 0].copy()
    for j in range(1, m):
        z = z + grouped[:, j]
    return z / math.sqrt(m)
