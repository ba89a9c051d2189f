"""Verification studies for the error structure of the particle solvers.

Every study returns a :class:`ConvergenceReport` whose rows carry explicit
acceptance bounds; the verdict is the AND of the rows.  Studies only call the
public solvers and never mutate the spec, so rows are reproducible from the
seed and the parameters.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import backward, forward, kernels, parallel, reference, sde

_GOLDEN = 0x9E3779B97F4A7C15


def derive_seed(seed, index):
    """Seed of replicate ``index``; distinct keys give independent Philox streams."""
    return (int(seed) + (int(index) + 1) * _GOLDEN) % (1 << 64)


@dataclass(frozen=True)
class ReportRow:
    """One checked quantity: passes when ``low <= measured <= high``."""

    parameter: str
    measured: float
    expected: float | None
    low: float
    high: float
    passed: bool
    note: str = ""
    values: dict = field(default_factory=dict)

    @classmethod
    def window(cls, parameter, measured, expected, low, high, note="", values=None):
        ok = bool(np.isfinite(measured) and low <= measured <= high)
        return cls(parameter, float(measured), None if expected is None else float(expected),
                   float(low), float(high), ok, note, dict(values or {}))

    @classmethod
    def around(cls, parameter, measured, expected, tol, note="", values=None):
        return cls.window(parameter, measured, expected, expected - tol, expected + tol, note,
                          values)

    @property
    def tolerance(self):
        return f"[{self.low!r}, {self.high!r}]"


@dataclass
class ConvergenceReport:
    kind: str
    rows: list
    warnings: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    degenerate: bool = False

    @property
    def verdict(self):
        return all(r.passed for r in self.rows)

    def row(self, parameter):
        for r in self.rows:
            if r.parameter == parameter:
                return r
        raise KeyError(parameter)

    def to_dict(self):
        return {
            "kind": self.kind,
            "verdict": self.verdict,
            "degenerate": self.degenerate,
            "rows": [asdict(r) for r in self.rows],
            "warnings": list(self.warnings),
            "meta": self.meta,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_jsonable)

    def to_text(self):
        lines = [f"{self.kind}: {'PASS' if self.verdict else 'FAIL'}"
                 + (" (degenerate)" if self.degenerate else "")]
        for r in self.rows:
            exp = "" if r.expected is None else f" expected {r.expected!r}"
            lines.append(f"  [{'pass' if r.passed else 'FAIL'}] {r.parameter}: {r.measured!r}"
                         f"{exp} within {r.tolerance}" + (f"  ({r.note})" if r.note else ""))
        for w in self.warnings:
            lines.append(f"  warning: {w}")
        return "\n".join(lines)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return str(obj)


def quadratic_variation_experiment(tau, n, M, seed) -> ConvergenceReport:
    """Sample ``M`` realisations of ``S_n = sum_j (dW_j)^2`` over ``[0, tau]``.

    Realisation ``m`` uses the quadratic-variation lane of stream ``m``.
    Checks the sample mean against ``tau`` (3 standard errors of
    ``sqrt(2 tau^2 / n / M)``) and the sample variance against ``2 tau^2 / n``
    (10 %).
    """
    if n < 10 or M < 100:
        raise ValueError(f"need n >= 10 and M >= 100, got n={n}, M={M}")
    k0, k1 = sde.seed_key(seed)
    scale = math.sqrt(tau / n)
    sums = np.empty(M)
    block = max(1, 2_000_000 // n)
    for lo in range(0, M, block):
        ids = np.arange(lo, min(M, lo + block), dtype=np.uint64)
        dw = kernels.normals(k0, k1, sde.LANE_QV, 0, ids, 0, n) * scale
        sums[lo:lo + ids.shape[0]] = np.sum(dw * dw, axis=0)
    mean, se = parallel.mean_and_se(sums)
    var = float(np.var(sums, ddof=1))
    exp_var = 2.0 * tau * tau / n
    rows = [
        ReportRow.around("mean S_n", mean, tau, 3.0 * math.sqrt(exp_var / M),
                         "3 standard errors"),
        ReportRow.around("variance S_n", var, exp_var, 0.1 * exp_var, "10 % relative"),
    ]
    return ConvergenceReport("quadratic-variation", rows,
                             meta={"tau": tau, "n": n, "M": M, "seed": seed, "mean_se": se})


def replicate_estimates(spec, x, N, dt, seed, M, *, workers=None):
    """``M`` independent estimates at ``x`` using derived seeds."""
    return [backward.solve_point(spec, x, N, dt, derive_seed(seed, m), workers=workers)
            for m in range(M)]


def _fit_slope(n_values, stds):
    lx = np.log(np.asarray(n_values, dtype=np.float64))
    ly = np.log(np.asarray(stds, dtype=np.float64))
    slope, _ = np.polyfit(lx, ly, 1)
    return float(slope)


def _bootstrap_slope(n_values, samples, seed, reps=200):
    # resample the M replicate estimates at each N and refit
    rng = np.random.default_rng(seed & 0xFFFFFFFF)
    slopes = []
    for _ in range(reps):
        stds = [np.std(s[rng.integers(0, len(s), len(s))], ddof=1) for s in samples]
        if min(stds) > 0:
            slopes.append(_fit_slope(n_values, stds))
    return float(np.std(slopes, ddof=1)) if len(slopes) > 1 else math.nan


def n_scaling_study(spec, x, dt, N_list, M, seed, *, quadrupling=(1000, 200),
                    workers=None) -> ConvergenceReport:
    """Empirical std of ``f_hat`` over ``M`` seeds versus ``N``.

    Fits ``log std`` against ``log N`` (slope -0.5 within 0.1) and compares
    the mean reported se with the empirical std (ratio in [0.7, 1.4]).
    ``quadrupling = (N0, M_pair)`` adds a separate ``N0`` versus ``4 N0``
    run with ``M_pair`` seeds each; its std ratio must be 0.5 within 20 %.
    Pass ``None`` to skip it.
    """
    N_list = [int(v) for v in N_list]
    if len(N_list) < 2 or any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValueError(f"N_list must be strictly increasing with >= 2 entries, got {N_list}")
    samples, se_means, rows = [], [], []
    for j, N in enumerate(N_list):
        est = replicate_estimates(spec, x, N, dt, derive_seed(seed, 1000 + j), M,
                                  workers=workers)
        samples.append(np.array([e.f_hat for e in est]))
        se_means.append(float(np.mean([e.se for e in est])))
    stds = [float(np.std(s, ddof=1)) for s in samples]
    meta = {"N": N_list, "M": M, "dt": dt, "seed": seed, "std": stds, "mean_se": se_means}
    if max(stds) == 0.0:
        rows.append(ReportRow.around("empirical std", 0.0, 0.0, 0.0,
                                     "deterministic trajectories; slope undefined"))
        return ConvergenceReport("N-scaling", rows, meta=meta, degenerate=True)
    slope = _fit_slope(N_list, stds)
    meta["slope_bootstrap_sd"] = _bootstrap_slope(N_list, samples, seed)
    rows.append(ReportRow.around("slope log std / log N", slope, -0.5, 0.1))
    for N, s, m in zip(N_list, stds, se_means):
        rows.append(ReportRow.window(f"std / mean se at N={N}", s / m, 1.0, 0.7, 1.4,
                                     "se estimator cross-check"))
    meta["fit_quadrupling_ratio"] = 4.0 ** slope
    if quadrupling is not None:
        n0, m_pair = (int(v) for v in quadrupling)
        pair = []
        for j, N in enumerate((n0, 4 * n0)):
            est = replicate_estimates(spec, x, N, dt, derive_seed(seed, 2000 + j), m_pair,
                                      workers=workers)
            pair.append(float(np.std([e.f_hat for e in est], ddof=1)))
        rows.append(ReportRow.window(f"std(4N)/std(N) at N={n0}", pair[1] / pair[0], 0.5,
                                     0.4, 0.6, f"{m_pair} seeds per N"))
        meta["quadrupling_std"] = pair
    return ConvergenceReport("N-scaling", rows, meta=meta)


def relative_error_study(spec, points, N, dt, seed, *, threshold=0.6,
                         workers=None) -> ConvergenceReport:
    """Relative se ``se / f_hat`` at equal ``N`` across ``points``.

    Among points with ``f_hat > threshold * max f_hat`` the largest relative
    se must be within a factor 2 of the smallest.
    """
    est = backward.solve_grid(spec, points, N, dt, seed, workers=workers)
    f = np.array([e.f_hat for e in est])
    rel = np.array([e.se / e.f_hat if e.f_hat != 0 else math.inf for e in est])
    keep = f > threshold * np.max(f)
    spread = float(np.max(rel[keep]) / np.min(rel[keep]))
    rows = [ReportRow.window(f"max/min relative se where f > {threshold} max f", spread, 1.0,
                             1.0, 2.0, values={"relative_se": rel.tolist()})]
    return ConvergenceReport("relative-error", rows,
                             meta={"points": [list(np.atleast_1d(p)) for p in points],
                                   "f_hat": f.tolist(), "relative_se": rel.tolist()})


def _refinements(dt_list):
    base = min(dt_list)
    out = []
    for dt in dt_list:
        m = dt / base
        r = int(round(m))
        if abs(m - r) > 1e-9 * m:
            return None
        out.append(r)
    top = max(out)
    return out if all(top % r == 0 for r in out) else None


def dt_scaling_study(spec, x, N, dt_list, oracle, seed, *, coupled=True,
                     workers=None) -> ConvergenceReport:
    """Bias ``|f_hat(dt) - oracle|`` for each step in ``dt_list``.

    When the steps are integer multiples of the smallest one and
    ``coupled`` is set, every level is driven by the same Brownian path (see
    :func:`fkmc.backward.solve_point_levels`), so the bias differences are
    not swamped by independent sampling noise.  For consecutive steps with
    ratio ``r`` the bias ratio must lie in ``[0.75 r, 1.3 r]`` (``[1.5, 2.6]``
    when halving).  Constant-coefficient specs are exact in law; for them
    the rows only require ``bias <= 3 se``.
    """
    dts = sorted((float(v) for v in dt_list), reverse=True)
    refines = _refinements(dts) if coupled else None
    if refines is not None:
        est = backward.solve_point_levels(spec, x, N, min(dts), seed, refines, workers=workers)
    else:
        est = [backward.solve_point(spec, x, N, dt, seed, workers=workers) for dt in dts]
    bias = [abs(e.f_hat - oracle) for e in est]
    ses = [e.se for e in est]
    meta = {"dt": dts, "N": int(N), "seed": seed, "oracle": oracle, "coupled": refines is not None,
            "f_hat": [e.f_hat for e in est], "se": ses, "bias": bias}
    notes = []
    rows = []
    if spec.constant_coefficients:
        for dt, b, s in zip(dts, bias, ses):
            rows.append(ReportRow.window(f"bias at dt={dt!r}", b, 0.0, 0.0, 3.0 * s,
                                         "exact in law: bias within 3 se"))
        return ConvergenceReport("dt-scaling", rows, meta=meta, degenerate=True)
    for (d1, b1), (d2, b2) in zip(zip(dts, bias), zip(dts[1:], bias[1:])):
        r = d1 / d2
        rows.append(ReportRow.window(f"bias ratio dt={d1!r}/dt={d2!r}", b1 / b2, r, 0.75 * r,
                                     1.3 * r))
    rows.append(ReportRow.window(f"se / bias at dt={dts[0]!r}", ses[0] / bias[0], 0.0, 0.0, 0.2,
                                 "sizing: se <= bias/5 at the largest step"))
    for dt, b, s in zip(dts, bias, ses):
        if s > b / 3.0:
            notes.append(f"se {s:.3g} exceeds bias/3 = {b / 3.0:.3g} at dt={dt!r}")
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return ConvergenceReport("dt-scaling", rows, notes, meta)


def compare_methods(spec, interval, B, N_fwd, N_bwd, dt, seed, *, launch=None, oracle=None,
                    fd_nodes=1601, fd_steps=1000, average_points=20,
                    workers=None) -> ConvergenceReport:
    """Forward histogram versus backward point estimates on ``B`` bins.

    ``oracle`` is a :class:`fkmc.reference.GridSolution`; by default it is a
    Crank-Nicolson solve on the spec's sample box.  Each interior bin passes
    when ``|forward - backward| <= 3 sqrt(se_f^2 + se_b^2) + C h^2`` with
    ``C = max|f''| / 24`` (the bin-average bias).  With ``B = 1`` the single
    bin is compared with the mean of backward estimates at
    ``average_points`` midpoints of the bin.
    """
    if oracle is None:
        oracle = reference.fd_solve(spec, None, fd_nodes, fd_steps)
    a, b = (float(v) for v in interval)
    launch = tuple(spec.sample_box[0]) if launch is None else tuple(float(v) for v in launch)
    fwd = forward.solve_forward(spec, launch, (a, b), B, N_fwd, dt, seed, workers=workers)
    h = fwd.width
    spline = oracle.interpolant()
    grid = oracle.axes[0]
    curvature = float(np.max(np.abs(spline(grid, 2)))) / 24.0
    rows = []
    meta = {"interval": (a, b), "B": B, "N_fwd": N_fwd, "N_bwd": N_bwd, "dt": dt, "seed": seed,
            "launch": launch, "curvature_C": curvature, "width": h}
    if B == 1:
        mids = a + (np.arange(average_points) + 0.5) * (b - a) / average_points
        est = backward.solve_grid(spec, [[m] for m in mids], N_bwd, dt, seed, workers=workers)
        avg = float(np.mean([e.f_hat for e in est]))
        se_avg = math.sqrt(sum(e.se ** 2 for e in est)) / average_points
        sub = (b - a) / average_points
        tol = 3.0 * math.hypot(fwd.se[0], se_avg) + curvature * sub * sub
        rows.append(ReportRow.around("single bin vs backward bin average", fwd.estimate[0], avg,
                                     tol, values={"forward_se": float(fwd.se[0]),
                                                  "backward_se": se_avg}))
        meta["table"] = [{"center": float(fwd.centers[0]), "forward": float(fwd.estimate[0]),
                          "forward_se": float(fwd.se[0]), "backward": avg,
                          "backward_se": se_avg, "oracle": float(np.mean(spline(mids)))}]
        return ConvergenceReport("oracle-comparison", rows, list(fwd.warnings), meta)
    est = backward.solve_grid(spec, [[c] for c in fwd.centers], N_bwd, dt, seed, workers=workers)
    table = []
    for j, (c, e) in enumerate(zip(fwd.centers, est)):
        orc = float(spline(c))
        table.append({"center": float(c), "forward": float(fwd.estimate[j]),
                      "forward_se": float(fwd.se[j]), "backward": e.f_hat,
                      "backward_se": e.se, "oracle": orc})
        if j in (0, B - 1):
            continue
        tol = 3.0 * math.hypot(fwd.se[j], e.se) + curvature * h * h
        rows.append(ReportRow.around(f"bin {j} at y={float(c)!r}", fwd.estimate[j], e.f_hat, tol,
                                     values={"oracle": orc, "forward_se": float(fwd.se[j]),
                                             "backward_se": e.se}))
    meta["table"] = table
    occupancy = N_fwd * h / (launch[1] - launch[0])
    meta["occupancy_per_bin"] = occupancy
    if occupancy < N_bwd:
        peak = int(np.argmax([t["oracle"] for t in table]))
        ratio = table[peak]["backward_se"] / table[peak]["forward_se"]
        rows.append(ReportRow.window("backward se / forward se at the peak bin", ratio, None,
                                     0.0, 1.0, f"bin occupancy {occupancy:.3g} < N_bwd"))
    return ConvergenceReport("oracle-comparison", rows, list(fwd.warnings), meta)
