"""Validated PDE definitions and pointwise coefficient evaluation.

The equation solved is

    df/dt = d/dx^k ( D^{kl}(x, t) df/dx^l ) + lambda(x, t) f + S(x, t),
    f(x, 0) = phi(x),  x in R^d,  0 <= t <= T.

Its associated SDE has drift ``mu^k = sum_l dD^{kl}/dx^l`` and diffusion
matrix ``A`` with ``A A^T = 2 D``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.stats import qmc

from . import expr, kernels
from .errors import TrajectoryFault

#: pivots down to ``-FACTOR_TOL * max|2D|`` are clamped to zero
FACTOR_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Full description of a linear parabolic problem.

    ``diffusion`` is the full symmetric ``d x d`` matrix of expressions; build
    it from upper-triangle entries with :meth:`from_strings`.
    """

    dimension: int
    diffusion: tuple
    initial: expr.ExpressionNode
    horizon: float
    reaction: expr.ExpressionNode | None = None
    source: expr.ExpressionNode | None = None
    extra_initial: dict = field(default_factory=dict)
    sample_box: tuple | None = None

    def __post_init__(self):
        d = self.dimension
        if not 1 <= d <= 9:
            raise ValueError(f"dimension must be in 1..9, got {d}")
        if not (self.horizon > 0 and np.isfinite(self.horizon)):
            raise ValueError(f"horizon T must be positive, got {self.horizon}")
        if len(self.diffusion) != d or any(len(row) != d for row in self.diffusion):
            raise ValueError("diffusion must be a d x d matrix of expressions")
        for k in range(d):
            for l in range(k):
                if self.diffusion[k][l] != self.diffusion[l][k]:
                    raise ValueError("diffusion matrix must be symmetric")

    @classmethod
    def from_strings(cls, dimension, T, diffusion, phi, reaction=None, source=None,
                     extra_phi=None, sample_box=None):
        """Build a spec from expression strings.

        ``diffusion`` maps 1-based ``(k, l)`` with ``k <= l`` to an expression;
        missing entries are zero.  A bare string is accepted for ``d = 1``.
        """
        d = int(dimension)
        if isinstance(diffusion, (str, expr.ExpressionNode)):
            diffusion = {(1, 1): diffusion}
        grid = [[expr.ZERO] * d for _ in range(d)]
        for (k, l), text in diffusion.items():
            if not (1 <= k <= l <= d):
                raise ValueError(f"diffusion entry D.{k}.{l} must satisfy 1 <= k <= l <= {d}")
            node = _as_node(text, d)
            grid[k - 1][l - 1] = node
            grid[l - 1][k - 1] = node
        extras = {name: _as_node(text, d) for name, text in (extra_phi or {}).items()}
        box = None if sample_box is None else normalize_box(sample_box, d)
        return cls(
            dimension=d,
            diffusion=tuple(tuple(row) for row in grid),
            initial=_as_node(phi, d),
            horizon=float(T),
            reaction=None if reaction is None else _as_node(reaction, d),
            source=None if source is None else _as_node(source, d),
            extra_initial=extras,
            sample_box=box,
        )

    def with_initial(self, phi):
        """Copy of this spec with a different initial condition."""
        return ProblemSpec(self.dimension, self.diffusion, _as_node(phi, self.dimension),
                           self.horizon, self.reaction, self.source,
                           dict(self.extra_initial), self.sample_box)

    @cached_property
    def drift_exprs(self):
        """Symbolic ``mu^k = sum_l dD^{kl}/dx^l``, one tree per component."""
        d = self.dimension
        out = []
        for k in range(d):
            acc = expr.ZERO
            for l in range(d):
                acc = expr._add(acc, expr.differentiate(self.diffusion[k][l], f"x{l + 1}"))
            out.append(acc)
        return tuple(out)

    @cached_property
    def constant_coefficients(self):
        """True when D, lambda and S are all free of ``x`` and ``t``."""
        nodes = [n for row in self.diffusion for n in row]
        nodes += [n for n in (self.reaction, self.source) if n is not None]
        return all(expr.is_constant(n) for n in nodes)

    @cached_property
    def constant_factor(self):
        """Cached ``(A, mu)`` for constant coefficients, else ``None``."""
        if not self.constant_coefficients:
            return None
        x = np.zeros(self.dimension)
        return diffusion_factor(self, x, 0.0), drift(self, x, 0.0)

    def fingerprint(self):
        """Text identifying D, lambda, S, T and d (not phi)."""
        d = self.dimension
        parts = [f"d={d}", f"T={self.horizon!r}"]
        for k in range(d):
            for l in range(k, d):
                parts.append(f"D.{k + 1}.{l + 1}={expr.to_string(self.diffusion[k][l])}")
        parts.append(f"lambda={'' if self.reaction is None else expr.to_string(self.reaction)}")
        parts.append(f"source={'' if self.source is None else expr.to_string(self.source)}")
        return ";".join(parts)


def _as_node(value, d):
    if isinstance(value, expr.ExpressionNode):
        return value
    if isinstance(value, (int, float)):
        return expr.Const(float(value))
    return expr.parse(value, d)


def normalize_box(box, d):
    """Accept ``[a, b]`` (any d), ``[a1, b1, a2, b2, ...]`` or ``[[a1, b1], ...]``."""
    arr = np.asarray(box, dtype=np.float64)
    if arr.shape == (2,):
        arr = np.tile(arr, (d, 1))
    elif arr.shape == (2 * d,):
        arr = arr.reshape(d, 2)
    if arr.shape != (d, 2):
        raise ValueError(f"sample box must give one (min, max) pair per axis, got {box!r}")
    if not np.all(arr[:, 0] < arr[:, 1]):
        raise ValueError(f"sample box needs min < max on every axis, got {box!r}")
    return tuple((float(a), float(b)) for a, b in arr)


def _broadcast(value, n):
    v = np.asarray(value, dtype=np.float64)
    return np.broadcast_to(v, (n,)) if n is not None else v


def _points(x):
    xs = np.asarray(x, dtype=np.float64)
    if xs.ndim == 1:
        return xs, None
    return xs, xs.shape[1]


def coefficient(node, x, t, n=None):
    """Evaluate ``node`` (``None`` meaning zero) broadcast to ``n`` points."""
    if node is None:
        val = 0.0
    else:
        val = expr.evaluate(node, x, t)
    if n is None:
        return float(val) if np.ndim(val) == 0 else val
    return _broadcast(val, n)


def diffusion_matrix(spec, x, t):
    """``D(x, t)`` with shape ``(d, d)`` or ``(n, d, d)`` for ``(d, n)`` input."""
    xs, n = _points(x)
    d = spec.dimension
    shape = (d, d) if n is None else (n, d, d)
    out = np.empty(shape)
    for k in range(d):
        for l in range(k, d):
            val = coefficient(spec.diffusion[k][l], xs, t, n)
            out[..., k, l] = val
            out[..., l, k] = val
    return out


def drift(spec, x, t):
    """Drift vector; shape follows ``x`` (``(d,)`` or ``(d, n)``)."""
    xs, n = _points(x)
    d = spec.dimension
    out = np.empty((d,) if n is None else (d, n))
    for k, node in enumerate(spec.drift_exprs):
        out[k] = coefficient(node, xs, t, n)
    return out


def factor_matrix(two_d):
    """Lower-triangular factor of each matrix in a ``(n, d, d)`` stack."""
    if two_d.shape[-1] == 1:
        # a 1x1 pivot can only be clamped at zero itself, so sqrt decides:
        # negative entries give NaN and infinite ones stay infinite
        with np.errstate(invalid="ignore"):
            a = np.sqrt(two_d)
        ok = np.isfinite(a[:, 0, 0])
        if not ok.all():
            a = a.copy()
            a[~ok] = np.nan
        return a, ok
    return kernels.cholesky_batch(two_d, FACTOR_TOL)


def diffusion_factor(spec, x, t):
    """Lower-triangular ``A`` with ``A A^T = 2 D(x, t)``.

    For a single point returns a ``(d, d)`` array and raises
    :class:`TrajectoryFault` if the factorization fails.  For ``(d, n)`` input
    returns ``(n, d, d)`` with NaN factors at failing points.
    """
    xs, n = _points(x)
    two_d = 2.0 * diffusion_matrix(spec, xs, t)
    if n is None:
        a, ok = factor_matrix(two_d[None])
        if not ok[0]:
            raise TrajectoryFault(f"2D is not positive semi-definite at x={xs.tolist()}, t={t}")
        return a[0]
    a, _ = factor_matrix(two_d)
    return a


@dataclass
class ValidationReport:
    ok: bool
    point: tuple | None = None
    time: float | None = None
    coefficient: str | None = None
    message: str = "ok"

    def __bool__(self):
        return self.ok


def default_sample_points(spec, box=None, count=128):
    """Unscrambled Halton points in ``box x [0, T]``."""
    box = spec.sample_box if box is None else normalize_box(box, spec.dimension)
    if box is None:
        raise ValueError("a sample box is required to validate a spec")
    d = spec.dimension
    u = qmc.Halton(d=d + 1, scramble=False).random(count + 1)[1:]
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    xs = lo + u[:, :d] * (hi - lo)
    ts = u[:, d] * spec.horizon
    return [(xs[i], float(ts[i])) for i in range(count)]


def validate(spec, sample_points=None):
    """Check coefficients are finite and ``2D`` factorizes at each sample point.

    Returns a :class:`ValidationReport` describing the first failure.
    """
    if sample_points is None:
        sample_points = default_sample_points(spec)
    if len(sample_points) == 0:
        raise ValueError("sample_points must be non-empty")
    d = spec.dimension
    named = []
    for k in range(d):
        for l in range(k, d):
            named.append((f"D.{k + 1}.{l + 1}", spec.diffusion[k][l]))
    for k, node in enumerate(spec.drift_exprs):
        named.append((f"drift.{k + 1}", node))
    named.append(("lambda", spec.reaction))
    named.append(("source", spec.source))
    named.append(("phi", spec.initial))
    named.extend((f"phi_extra.{m}", node) for m, node in spec.extra_initial.items())
    for x, t in sample_points:
        x = np.asarray(x, dtype=np.float64)
        for name, node in named:
            if node is None:
                continue
            val = expr.evaluate(node, x, t)
            if not np.isfinite(val):
                return ValidationReport(False, tuple(x.tolist()), t, name,
                                        f"{name} is not finite ({val}) at x={x.tolist()}, t={t}")
        two_d = 2.0 * diffusion_matrix(spec, x, t)
        _, ok = factor_matrix(two_d[None])
        if not ok[0]:
            return ValidationReport(False, tuple(x.tolist()), t, "D",
                                    f"factorization failure: 2D is not positive semi-definite "
                                    f"at x={x.tolist()}, t={t}")
    return ValidationReport(True)
