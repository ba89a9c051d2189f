"""Command-line front end.

Subcommands::

    fkmc solve      backward point estimates on a point list or grid
    fkmc forward    forward Monte-Carlo histogram (1-D)
    fkmc endpoints  trace backward endpoints into a binary cache
    fkmc reapply    evaluate cached endpoints for one or more initial conditions
    fkmc reference  finite-difference or closed-form Gaussian reference values
    fkmc converge   verification studies (qv, n, dt, compare)

Exit status is 0 on success, 1 on a solver error (or a failed study) and 2 on
a configuration error.
"""

from __future__ import annotations

import argparse
import io
import itertools
import json
import math
import os
import struct
import sys
from dataclasses import dataclass, field

import numpy as np

from . import backward, diagnostics, expr, forward, problem, reference
from .errors import (CacheError, ExpressionError, FkmcError, SolverError, SpecError,
                     StabilityError, TrajectoryFault, ValidationError)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MAX_GRID_POINTS = 10_000_000
SPEC_KEYS = {"dimension", "T", "D", "lambda", "source", "phi", "phi_extra", "sample_box"}
REQUIRED_KEYS = ("dimension", "T", "D", "phi", "sample_box")

CACHE_MAGIC = b"FKMCEPS\0"
CACHE_VERSION = 1
_HEAD = struct.Struct("<8sIIQddIII")
_SET = struct.Struct("<QQQQ")


class ConfigError(FkmcError):
    """Bad command-line arguments."""


# ----------------------------------------------------------------------------- spec files


def load_spec(path) -> problem.ProblemSpec:
    """Read and validate a problem-spec file (TOML key/value syntax)."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise SpecError(f"spec file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise SpecError(f"{path}: {exc}") from None
    return spec_from_mapping(data, source=str(path))


def _field(name, value, kind):
    if kind == "expr":
        if isinstance(value, bool) or not isinstance(value, (str, int, float)):
            raise SpecError(f"field '{name}' must be an expression string, got {value!r}")
        return str(value)
    if kind == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SpecError(f"field '{name}' must be a number, got {value!r}")
        return value
    raise AssertionError(kind)


def spec_from_mapping(data, source="<spec>") -> problem.ProblemSpec:
    unknown = sorted(set(data) - SPEC_KEYS)
    if unknown:
        raise SpecError(f"{source}: unknown field '{unknown[0]}'")
    for key in REQUIRED_KEYS:
        if key not in data:
            raise SpecError(f"{source}: missing required field '{key}'")
    d = _field("dimension", data["dimension"], "number")
    if not isinstance(d, int) or not 1 <= d <= 9:
        raise SpecError(f"{source}: field 'dimension' must be an integer in 1..9, got {d!r}")
    T = float(_field("T", data["T"], "number"))
    if not (T > 0 and math.isfinite(T)):
        raise SpecError(f"{source}: field 'T' must be positive, got {T!r}")
    if not isinstance(data["D"], dict):
        raise SpecError(f"{source}: field 'D' must be given as D.k.l entries")
    diffusion = {}
    for k, row in data["D"].items():
        if not isinstance(row, dict):
            raise SpecError(f"{source}: field 'D.{k}' must be given as D.{k}.l entries")
        for l, text in row.items():
            name = f"D.{k}.{l}"
            try:
                kk, ll = int(k), int(l)
            except ValueError:
                raise SpecError(f"{source}: bad diffusion key '{name}'") from None
            if not 1 <= kk <= ll <= d:
                raise SpecError(f"{source}: field '{name}' needs 1 <= k <= l <= {d}")
            diffusion[(kk, ll)] = _field(name, text, "expr")
    extras = data.get("phi_extra", {})
    if not isinstance(extras, dict):
        raise SpecError(f"{source}: field 'phi_extra' must be given as phi_extra.name entries")
    fields = {"phi": _field("phi", data["phi"], "expr")}
    for key in ("lambda", "source"):
        if key in data:
            fields[key] = _field(key, data[key], "expr")
    extra_text = {m: _field(f"phi_extra.{m}", v, "expr") for m, v in extras.items()}
    try:
        box = problem.normalize_box(np.asarray(data["sample_box"], dtype=np.float64).ravel(), d)
    except (ValueError, TypeError) as exc:
        raise SpecError(f"{source}: field 'sample_box': {exc}") from None
    nodes = {}
    for name, text in list(fields.items()) + [(f"phi_extra.{m}", t) for m, t in extra_text.items()]:
        nodes[name] = _parse_field(source, name, text, d)
    diff_nodes = {key: _parse_field(source, f"D.{key[0]}.{key[1]}", text, d)
                  for key, text in diffusion.items()}
    spec = problem.ProblemSpec.from_strings(
        d, T, diff_nodes, nodes["phi"], reaction=nodes.get("lambda"), source=nodes.get("source"),
        extra_phi={m: nodes[f"phi_extra.{m}"] for m in extra_text}, sample_box=box)
    report = problem.validate(spec)
    if not report.ok:
        raise ValidationError(report)
    return spec


def _parse_field(source, name, text, d):
    try:
        return expr.parse(text, d)
    except ExpressionError as exc:
        raise SpecError(f"{source}: field '{name}': {exc}") from None


# ----------------------------------------------------------------------------- arguments


@dataclass
class RunConfig:
    subcommand: str
    spec_path: str | None = None
    points: list | None = None
    n: int | list | None = None
    dt: float | list | None = None
    seed: int | None = None
    workers: int | None = None
    fmt: str = "csv"
    out: str | None = None
    options: dict = field(default_factory=dict)


def parse_points(text, d=None):
    """``"0;0.5;1"`` or ``"0,0;1,1"``: points split by ``;``, coordinates by ``,``."""
    pts = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        coords = [float(v) for v in chunk.split(",")]
        pts.append(coords)
    if not pts:
        raise ConfigError("no query points given")
    dims = {len(p) for p in pts}
    if len(dims) != 1 or (d is not None and dims != {d}):
        raise ConfigError(f"every point needs {d or 'the same number of'} coordinates")
    return pts


def parse_grid(text):
    """``"min:max:count[,min:max:count...]"`` expanded to a point list."""
    axes = []
    for part in text.split(","):
        bits = part.split(":")
        if len(bits) != 3:
            raise ConfigError(f"grid axis must be min:max:count, got {part!r}")
        lo, hi, cnt = float(bits[0]), float(bits[1]), int(bits[2])
        if cnt < 1:
            raise ConfigError(f"grid count must be >= 1, got {cnt}")
        axes.append(np.linspace(lo, hi, cnt) if cnt > 1 else np.array([lo]))
    total = math.prod(len(a) for a in axes)
    if total > MAX_GRID_POINTS:
        raise ConfigError(f"grid expands to {total} points (limit {MAX_GRID_POINTS})")
    return [list(map(float, p)) for p in itertools.product(*axes)]


def _pair(text, name):
    bits = text.split(":")
    if len(bits) != 2:
        raise ConfigError(f"--{name} must be a:b, got {text!r}")
    a, b = float(bits[0]), float(bits[1])
    if not a < b:
        raise ConfigError(f"--{name} needs a < b, got {text!r}")
    return a, b


def _counts(text):
    vals = [int(float(v)) for v in str(text).split(",") if v.strip()]
    if not vals or min(vals) < 1:
        raise ConfigError(f"--n must be positive integers, got {text!r}")
    return vals[0] if len(vals) == 1 else vals


def _floats(text):
    vals = [float(v) for v in str(text).split(",") if v.strip()]
    if not vals or min(vals) <= 0:
        raise ConfigError(f"--dt must be positive, got {text!r}")
    return vals[0] if len(vals) == 1 else vals


def build_parser():
    p = argparse.ArgumentParser(prog="fkmc", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp, points=True, seed=True):
        sp.add_argument("--spec", help="problem-spec file")
        if points:
            g = sp.add_mutually_exclusive_group()
            g.add_argument("--points", help='query points, e.g. "0;0.5" or "0,0;1,1"')
            g.add_argument("--grid", help='grid, e.g. "-3:3:21" or "-1:1:5,-1:1:5"')
        sp.add_argument("--n", help="particle count, or one count per point (comma list)")
        sp.add_argument("--dt", help="time step")
        if seed:
            sp.add_argument("--seed", type=int, help="master seed (required)")
        sp.add_argument("--workers", type=int, help="worker threads (default FKMC_WORKERS or 1)")
        sp.add_argument("--out", help="output path (default stdout)")
        sp.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")

    common(sub.add_parser("solve", help="backward point estimates"))
    fw = sub.add_parser("forward", help="forward histogram solution")
    common(fw, points=False)
    fw.add_argument("--launch", required=False, help="launch interval a:b")
    fw.add_argument("--interval", help="output interval a:b (default: the launch interval)")
    fw.add_argument("--bins", type=int, help="number of bins")
    ep = sub.add_parser("endpoints", help="trace endpoints into a cache")
    common(ep)
    ra = sub.add_parser("reapply", help="evaluate cached endpoints")
    ra.add_argument("--cache", help="endpoint cache written by 'endpoints'")
    ra.add_argument("--spec", help="problem-spec file the cache was traced with")
    ra.add_argument("--phi", action="append", default=[],
                    help="'phi', a phi_extra name, or an expression (repeatable)")
    ra.add_argument("--workers", type=int, help="accepted for symmetry; evaluation is serial")
    ra.add_argument("--out")
    ra.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    rf = sub.add_parser("reference", help="finite-difference or Gaussian reference")
    common(rf, seed=False)
    rf.add_argument("--method", choices=("fd", "gaussian"), default="fd")
    rf.add_argument("--grid-nodes", type=int, default=401, help="fd nodes per axis")
    rf.add_argument("--steps", type=int, default=None, help="fd time steps")
    rf.add_argument("--s", type=float, default=1.0, help="initial Gaussian width (gaussian)")
    cv = sub.add_parser("converge", help="verification studies")
    common(cv)
    cv.set_defaults(fmt="text")
    for action in cv._actions:
        if action.dest == "fmt":
            action.choices = ("text", "json")
    cv.add_argument("--study", choices=("qv", "n", "dt", "compare"), required=True)
    cv.add_argument("--tau", type=float, default=1.0)
    cv.add_argument("--steps", type=int, default=1000, help="qv: increments per path")
    cv.add_argument("--replicas", type=int, default=None, help="M: paths or seeds")
    cv.add_argument("--oracle", type=float, default=None, help="dt: reference value")
    cv.add_argument("--grid-nodes", type=int, default=2401)
    cv.add_argument("--fd-steps", type=int, default=1000)
    cv.add_argument("--interval", help="compare: output interval a:b")
    cv.add_argument("--launch", help="compare: launch interval a:b")
    cv.add_argument("--bins", type=int, default=50)
    cv.add_argument("--n-fwd", type=int, default=None)
    return p


def config_from_args(args) -> RunConfig:
    opts = {k: v for k, v in vars(args).items()
            if k not in ("subcommand", "spec", "points", "grid", "n", "dt", "seed", "workers",
                         "fmt", "out")}
    points = None
    if getattr(args, "points", None):
        points = parse_points(args.points)
    elif getattr(args, "grid", None):
        points = parse_grid(args.grid)
    workers = getattr(args, "workers", None)
    if workers is None:
        env = os.environ.get("FKMC_WORKERS", "").strip()
        workers = int(env) if env else None
    if workers is not None and workers < 1:
        raise ConfigError(f"--workers must be >= 1, got {workers}")
    n = _counts(args.n) if getattr(args, "n", None) else None
    dt = _floats(args.dt) if getattr(args, "dt", None) else None
    return RunConfig(args.subcommand, getattr(args, "spec", None), points, n, dt,
                     getattr(args, "seed", None), workers, args.fmt, args.out, opts)


def _require(cfg, *names):
    for name in names:
        if getattr(cfg, name, None) is None:
            flag = {"spec_path": "spec", "points": "points/--grid"}.get(name, name)
            raise ConfigError(f"--{flag} is required for '{cfg.subcommand}'")


# ----------------------------------------------------------------------------- output


def fmt_float(v):
    """Shortest round-trip decimal form."""
    return repr(float(v))


def _table(header, rows, fmt):
    buf = io.StringIO()
    if fmt == "json":
        data = [dict(zip(header, r)) for r in rows]
        buf.write(json.dumps(data, indent=1))
        buf.write("\n")
        return buf.getvalue()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(v if isinstance(v, str) else
                           (str(v) if isinstance(v, (int, np.integer)) else fmt_float(v))
                           for v in r) + "\n")
    return buf.getvalue()


def _estimate_rows(estimates):
    return [list(e.x) + [e.f_hat, e.se, int(e.n_eff), int(e.faulted)] for e in estimates]


def _estimate_header(d):
    return [f"x{k + 1}" for k in range(d)] + ["f_hat", "se", "n_eff", "faults"]


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)


# ----------------------------------------------------------------------------- cache


def save_endpoints(path, sets, seed, dt, spec):
    """Write endpoint sets (one per query point) to a versioned binary file."""
    fp = spec.fingerprint().encode("utf-8")
    refine = sets[0].refine if sets else 1
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(CACHE_MAGIC, CACHE_VERSION, spec.dimension, int(seed), float(dt),
                            float(spec.horizon), int(refine), len(sets), len(fp)))
        fh.write(fp)
        for s in sets:
            m = s.positions.shape[1]
            fh.write(_SET.pack(s.point, s.n, s.trajectory_faults, m))
            fh.write(np.asarray(s.x, dtype="<f8").tobytes())
            rec = np.empty((m, spec.dimension + 2), dtype="<f8")
            rec[:, :spec.dimension] = s.positions.T
            rec[:, -2] = s.weights
            rec[:, -1] = s.sources
            fh.write(rec.tobytes())


def load_endpoints(path, spec=None, seed=None, dt=None):
    """Read a cache; refuses on version, spec, seed or step mismatch."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError:
        raise CacheError(f"endpoint cache not found: {path}") from None
    if len(blob) < _HEAD.size or blob[:8] != CACHE_MAGIC:
        raise CacheError(f"{path} is not an endpoint cache")
    magic, version, d, c_seed, c_dt, horizon, refine, n_sets, fp_len = _HEAD.unpack_from(blob)
    if version != CACHE_VERSION:
        raise CacheError(f"cache format version {version} is not supported "
                         f"(expected {CACHE_VERSION})")
    pos = _HEAD.size
    fp = blob[pos:pos + fp_len].decode("utf-8")
    pos += fp_len
    if spec is not None and fp != spec.fingerprint():
        raise CacheError("cache was traced with different coefficients, dimension or horizon")
    if seed is not None and int(seed) != c_seed:
        raise CacheError(f"cache seed {c_seed} does not match {seed}")
    if dt is not None and float(dt) != c_dt:
        raise CacheError(f"cache step {c_dt!r} does not match {dt!r}")
    sets = []
    try:
        for _ in range(n_sets):
            point, n, faults, m = _SET.unpack_from(blob, pos)
            pos += _SET.size
            x = tuple(np.frombuffer(blob, "<f8", d, pos).tolist())
            pos += 8 * d
            rec = np.frombuffer(blob, "<f8", m * (d + 2), pos).reshape(m, d + 2)
            pos += rec.nbytes
            sets.append(backward.EndpointSet(
                x=x, horizon=horizon, dt=c_dt, seed=c_seed, n=n,
                positions=np.ascontiguousarray(rec[:, :d].T), weights=rec[:, -2].copy(),
                sources=rec[:, -1].copy(), trajectory_faults=faults, point=point,
                refine=refine, fingerprint=fp))
    except (struct.error, ValueError):
        raise CacheError(f"{path} is truncated") from None
    if pos != len(blob):
        raise CacheError(f"{path} has trailing bytes")
    return sets


# ----------------------------------------------------------------------------- commands


def _cmd_solve(cfg):
    _require(cfg, "spec_path", "points", "n", "dt", "seed")
    spec = load_spec(cfg.spec_path)
    _check_points(cfg.points, spec.dimension)
    est = backward.solve_grid(spec, cfg.points, cfg.n, cfg.dt, cfg.seed, workers=cfg.workers)
    _emit(_table(_estimate_header(spec.dimension), _estimate_rows(est), cfg.fmt), cfg.out)
    return 1 if any(e.error for e in est) else 0


def _check_points(points, d):
    if any(len(p) != d for p in points):
        raise ConfigError(f"query points need {d} coordinates")


def _cmd_forward(cfg):
    _require(cfg, "spec_path", "n", "dt", "seed")
    if not cfg.options.get("launch") or not cfg.options.get("bins"):
        raise ConfigError("--launch and --bins are required for 'forward'")
    spec = load_spec(cfg.spec_path)
    launch = _pair(cfg.options["launch"], "launch")
    interval = _pair(cfg.options["interval"], "interval") if cfg.options.get("interval") else launch
    sol = forward.solve_forward(spec, launch, interval, cfg.options["bins"], cfg.n, cfg.dt,
                                cfg.seed, workers=cfg.workers)
    rows = [[c, e, s] for c, e, s in zip(sol.centers, sol.estimate, sol.se)]
    _emit(_table(["bin_center", "estimate", "se"], rows, cfg.fmt), cfg.out)
    return 0


def _cmd_endpoints(cfg):
    _require(cfg, "spec_path", "points", "n", "dt", "seed", "out")
    spec = load_spec(cfg.spec_path)
    _check_points(cfg.points, spec.dimension)
    sets = backward.trace_grid(spec, cfg.points, cfg.n, cfg.dt, cfg.seed, workers=cfg.workers)
    for s in sets:
        if isinstance(s, Exception):
            raise s
    save_endpoints(cfg.out, sets, cfg.seed, cfg.dt, spec)
    return 0


def _resolve_phi(spec, name):
    if name == "phi":
        return spec.initial
    if name in spec.extra_initial:
        return spec.extra_initial[name]
    try:
        return expr.parse(name, spec.dimension)
    except ExpressionError as exc:
        raise ConfigError(f"--phi {name!r}: {exc}") from None


def _cmd_reapply(cfg):
    cache = cfg.options.get("cache")
    if not cache:
        raise ConfigError("--cache is required for 'reapply'")
    _require(cfg, "spec_path")
    spec = load_spec(cfg.spec_path)
    sets = load_endpoints(cache, spec=spec)
    names = cfg.options.get("phi") or ["phi"]
    header = _estimate_header(spec.dimension)
    rows = []
    status = 0
    for name in names:
        node = _resolve_phi(spec, name)
        for s in sets:
            try:
                e = backward.evaluate_with_endpoints(s, node)
            except SolverError as exc:
                e = backward._failed(spec, s.x, s.n, 0, s.dt, exc)
                status = 1
            row = _estimate_rows([e])[0]
            rows.append(row if len(names) == 1 else [name] + row)
    if len(names) > 1:
        header = ["phi"] + header
    _emit(_table(header, rows, cfg.fmt), cfg.out)
    return status


def _cmd_reference(cfg):
    _require(cfg, "spec_path")
    spec = load_spec(cfg.spec_path)
    d = spec.dimension
    if cfg.options["method"] == "gaussian":
        _require(cfg, "points")
        _check_points(cfg.points, d)
        if d != 1 or not spec.constant_coefficients or not _is_zero(spec.source):
            raise ConfigError("the Gaussian oracle needs a 1-D spec with constant D, "
                              "constant lambda and no source")
        D = float(expr.evaluate(spec.diffusion[0][0], np.zeros(1), 0.0))
        lam = 0.0 if spec.reaction is None else float(expr.evaluate(spec.reaction, np.zeros(1)))
        vals = reference.gaussian_oracle(D, cfg.options["s"], np.array([p[0] for p in cfg.points]),
                                         spec.horizon, lam)
        rows = [list(p) + [v] for p, v in zip(cfg.points, np.atleast_1d(vals))]
    else:
        nodes = cfg.options["grid_nodes"]
        steps = cfg.options["steps"]
        if steps is None:
            h = min(b - a for a, b in spec.sample_box) / (nodes - 1)
            if d == 1:
                steps = max(1, math.ceil(spec.horizon / h))
            else:
                limit = reference.stable_dt(
                    spec, [np.linspace(a, b, nodes) for a, b in spec.sample_box],
                    [0.0, 0.5 * spec.horizon, spec.horizon])
                steps = max(1, math.ceil(spec.horizon / limit))
        sol = reference.fd_solve(spec, None, nodes, steps)
        if cfg.points is not None:
            _check_points(cfg.points, d)
            pts = np.array(cfg.points)
            vals = sol.at(pts[:, 0]) if d == 1 else sol.at(pts)
            rows = [list(p) + [float(v)] for p, v in zip(cfg.points, np.atleast_1d(vals))]
        else:
            mesh = np.meshgrid(*sol.axes, indexing="ij")
            coords = np.stack([m.ravel() for m in mesh], axis=1)
            rows = [list(c) + [v] for c, v in zip(coords.tolist(), sol.values.ravel().tolist())]
    header = [f"x{k + 1}" for k in range(d)] + ["f"]
    _emit(_table(header, rows, cfg.fmt), cfg.out)
    return 0


def _cmd_converge(cfg):
    _require(cfg, "seed")
    o = cfg.options
    study = o["study"]
    if study == "qv":
        rep = diagnostics.quadratic_variation_experiment(o["tau"], o["steps"],
                                                         o["replicas"] or 10_000, cfg.seed)
    else:
        _require(cfg, "spec_path", "dt")
        spec = load_spec(cfg.spec_path)
        if study == "n":
            _require(cfg, "points", "n")
            ns = cfg.n if isinstance(cfg.n, list) else [cfg.n]
            rep = diagnostics.n_scaling_study(spec, cfg.points[0], _scalar(cfg.dt, "--dt"), ns,
                                              o["replicas"] or 50, cfg.seed, workers=cfg.workers)
        elif study == "dt":
            _require(cfg, "points", "n")
            dts = cfg.dt if isinstance(cfg.dt, list) else [cfg.dt]
            if len(dts) < 2:
                raise ConfigError("--dt needs at least two steps for the dt study")
            oracle = o["oracle"]
            if oracle is None:
                sol = reference.fd_solve(spec, None, o["grid_nodes"], o["fd_steps"])
                oracle = sol.at(np.array(cfg.points[0]))
                oracle = float(np.ravel(oracle)[0])
            rep = diagnostics.dt_scaling_study(spec, cfg.points[0], _scalar(cfg.n, "--n"), dts,
                                               oracle, cfg.seed, workers=cfg.workers)
        else:
            _require(cfg, "n")
            if not o.get("interval"):
                raise ConfigError("--interval is required for the compare study")
            interval = _pair(o["interval"], "interval")
            launch = _pair(o["launch"], "launch") if o.get("launch") else None
            n_bwd = _scalar(cfg.n, "--n")
            rep = diagnostics.compare_methods(spec, interval, o["bins"], o["n_fwd"] or n_bwd,
                                              n_bwd, _scalar(cfg.dt, "--dt"), cfg.seed,
                                              launch=launch, fd_nodes=o["grid_nodes"],
                                              fd_steps=o["fd_steps"], workers=cfg.workers)
    _emit(rep.to_json() + "\n" if cfg.fmt == "json" else rep.to_text() + "\n", cfg.out)
    return 0 if rep.verdict else 1


def _is_zero(node):
    return node is None or (expr.is_constant(node) and expr.evaluate(node, np.zeros(1)) == 0.0)


def _scalar(v, flag):
    if isinstance(v, list):
        raise ConfigError(f"{flag} takes a single value here")
    return v


COMMANDS = {
    "solve": _cmd_solve,
    "forward": _cmd_forward,
    "endpoints": _cmd_endpoints,
    "reapply": _cmd_reapply,
    "reference": _cmd_reference,
    "converge": _cmd_converge,
}


def run(config: RunConfig) -> int:
    """Execute one subcommand; returns the process exit status."""
    try:
        return COMMANDS[config.subcommand](config)
    except (ConfigError, SpecError, ValidationError, CacheError, ExpressionError) as exc:
        print(f"fkmc: error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, StabilityError, TrajectoryFault) as exc:
        print(f"fkmc: solver error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"fkmc: error: {exc}", file=sys.stderr)
        return 2


def _join_values(argv):
    """``--grid -2:2:5`` -> ``--grid=-2:2:5`` so values may start with ``-``."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok in _VALUE_FLAGS:
            nxt = next(it, None)
            if nxt is not None and nxt.startswith("-") and not nxt.startswith("--"):
                out.append(f"{tok}={nxt}")
                continue
            out.append(tok)
            if nxt is not None:
                out.append(nxt)
            continue
        out.append(tok)
    return out


_VALUE_FLAGS = {"--points", "--grid", "--launch", "--interval", "--phi", "--oracle"}


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_join_values(argv))
    try:
        config = config_from_args(args)
    except (ConfigError, ValueError) as exc:
        print(f"fkmc: error: {exc}", file=sys.stderr)
        return 2
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
