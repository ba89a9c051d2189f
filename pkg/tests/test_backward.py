import math
import warnings

import numpy as np
import pytest

from fkmc import backward, expr, sde
from fkmc.errors import SolverError
from fkmc.problem import ProblemSpec

GAUSS = "exp(-x1^2/2)/sqrt(2*3.141592653589793)"


def spec1(D="0.5", phi=GAUSS, **kw):
    return ProblemSpec.from_strings(1, 1.0, D, phi, sample_box=[-8, 8], **kw)


@pytest.mark.parametrize("D", ["0.5", "0.5*(1 + 0.5*tanh(x1))", "1 + x1^2"])
def test_constant_phi_exact(D):
    est = backward.solve_point(spec1(D, "2.5"), [0.3], 500, 0.05, seed=1)
    assert est.f_hat == 2.5 and est.se == 0.0


def test_reaction_gives_e():
    est = backward.solve_point(spec1(phi="1", reaction="1"), [0.0], 300, 0.01, seed=2)
    assert abs(est.f_hat - math.e) < 1e-12 and est.se == 0.0


def test_source_gives_horizon():
    est = backward.solve_point(spec1("0.5*(1 + 0.5*tanh(x1))", "0", source="1"), [0.0], 300,
                               0.01, seed=2)
    assert abs(est.f_hat - 1.0) < 1e-12 and est.se == 0.0


def test_gaussian_benchmark_small():
    est = backward.solve_point(spec1(), [0.0], 20_000, 0.01, seed=3)
    assert abs(est.f_hat - 1 / math.sqrt(4 * math.pi)) < 3 * est.se
    assert est.n_eff == 20_000


def test_grid_worker_independence():
    spec = spec1("0.5*(1 + 0.5*tanh(x1))")
    pts = [[-1.0], [0.0], [2.0]]
    a = backward.solve_grid(spec, pts, 10_000, 0.05, 4, workers=1)
    b = backward.solve_grid(spec, pts, 10_000, 0.05, 4, workers=8)
    assert [(e.f_hat, e.se) for e in a] == [(e.f_hat, e.se) for e in b]


def test_per_point_n_scaling():
    spec = spec1()
    ests = backward.solve_grid(spec, [[0.0], [0.0001]], [100, 10_000], 0.05, 5)
    ratio = ests[1].se / ests[0].se
    assert 0.08 <= ratio <= 0.12


def test_duplicate_points_identical():
    ests = backward.solve_grid(spec1(), [[0.5], [1.0], [0.5]], 1000, 0.05, 6)
    assert ests[0].f_hat == ests[2].f_hat and ests[0].se == ests[2].se
    assert ests[0].f_hat != ests[1].f_hat


def test_distinct_points_have_independent_streams():
    ests = backward.solve_grid(spec1(), [[0.0], [1e-9]], 2000, 0.05, 6)
    assert ests[0].f_hat != ests[1].f_hat


def test_bad_point_reported_not_raised():
    ests = backward.solve_grid(spec1(), [[0.0], [0.0, 1.0]], 100, 0.05, 1)
    assert math.isfinite(ests[0].f_hat)
    assert ests[1].error and math.isnan(ests[1].f_hat)


def test_endpoints_reproduce_solve_point():
    spec = spec1("0.5*(1 + 0.5*tanh(x1))", source="0.1*x1^2", reaction="-0.2")
    ends = backward.trace_endpoints(spec, [0.2], 3000, 0.05, 8)
    a = backward.evaluate_with_endpoints(ends, spec.initial)
    b = backward.solve_point(spec, [0.2], 3000, 0.05, 8)
    assert (a.f_hat, a.se) == (b.f_hat, b.se)


def test_standstill_endpoints():
    ends = backward.trace_endpoints(spec1("0"), [1.5], 100, 0.1, 1)
    assert np.all(ends.positions == 1.5)
    assert np.all(ends.weights == 1.0)


def test_reuse_evaluates_only_phi(monkeypatch):
    spec = spec1()
    ends = backward.trace_endpoints(spec, [0.0], 5000, 0.05, 9)
    calls = []
    real_eval = expr.evaluate

    def counting(node, x, t=0.0):
        calls.append(np.size(x))
        return real_eval(node, x, t)

    def no_trace(*a, **k):
        raise AssertionError("re-simulation during reuse")

    monkeypatch.setattr(expr, "evaluate", counting)
    monkeypatch.setattr(sde, "trace", no_trace)
    backward.evaluate_with_endpoints(ends, "x1^2")
    assert calls == [5000]


def test_zero_and_one_initial_conditions():
    ends = backward.trace_endpoints(spec1("0.5*(1 + 0.5*tanh(x1))"), [0.0], 2000, 0.05, 3)
    zero = backward.evaluate_with_endpoints(ends, "0")
    one = backward.evaluate_with_endpoints(ends, "1")
    assert (zero.f_hat, zero.se) == (0.0, 0.0)
    assert (one.f_hat, one.se) == (1.0, 0.0)


def test_linearity_over_endpoints():
    ends = backward.trace_endpoints(spec1(), [0.3], 4000, 0.05, 10)
    fa = backward.evaluate_with_endpoints(ends, "exp(-x1^2)").f_hat
    fb = backward.evaluate_with_endpoints(ends, "sin(x1) + 2").f_hat
    fab = backward.evaluate_with_endpoints(ends, "exp(-x1^2) + (sin(x1) + 2)").f_hat
    assert abs(fab - (fa + fb)) <= 1e-12 * (1 + abs(fab))


def test_nonnegative_for_nonnegative_data():
    spec = spec1("0.5*(1 + 0.5*tanh(x1))", "exp(-x1^2)*x1^2", source="0.1*(1+sin(x1))")
    ends = backward.trace_endpoints(spec, [3.0], 2000, 0.1, 11)
    contrib = ends.weights * (expr.evaluate(spec.initial, ends.positions) + ends.sources)
    assert np.all(contrib >= 0)
    assert backward.evaluate_with_endpoints(ends, spec.initial).f_hat >= 0


def test_faulted_particles_excluded_and_counted():
    # D = x1 cannot be factorized once a particle crosses zero
    spec = spec1("x1", "1")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = backward.solve_point(spec, [0.3], 2000, 0.05, 12)
    assert est.faulted > 0 and est.n_eff == 2000 - est.faulted
    assert est.f_hat == 1.0 and est.se == 0.0
    assert any("faulted" in str(w.message) for w in caught)


def test_all_faulted_raises():
    spec = spec1("0.5", "1/(x1 - x1)")
    with pytest.raises(SolverError):
        backward.solve_point(spec, [0.0], 100, 0.5, 1)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        backward.solve_point(spec1(), [0.0], 1, 0.1, 1)
    with pytest.raises(ValueError):
        backward.solve_point(spec1(), [0.0], 10, 2.0, 1)
    with pytest.raises(ValueError):
        backward.solve_point(spec1(), [0.0, 1.0], 10, 0.1, 1)


def test_se_formula():
    spec = spec1()
    ends = backward.trace_endpoints(spec, [0.0], 3000, 0.1, 13)
    c = ends.weights * expr.evaluate(spec.initial, ends.positions)
    est = backward.evaluate_with_endpoints(ends, spec.initial)
    assert abs(est.f_hat - c.mean()) < 1e-15
    assert abs(est.se - c.std(ddof=1) / math.sqrt(3000)) < 1e-15


@pytest.mark.parametrize("D", ["0.5", "0.5*(1 + 0.5*tanh(x1))"])
def test_levels_match_refined_solves(D):
    spec = spec1(D)
    levels = backward.solve_point_levels(spec, [0.0], 3000, 0.01, 14, [4, 2, 1])
    for est, m in zip(levels, [4, 2, 1]):
        ref = backward.solve_point(spec, [0.0], 3000, m * 0.01, 14, refine=m)
        assert (est.f_hat, est.se) == (ref.f_hat, ref.se)
