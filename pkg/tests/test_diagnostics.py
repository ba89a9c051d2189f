import json
import math

import numpy as np
import pytest

from fkmc import diagnostics, reference
from fkmc.problem import ProblemSpec

GAUSS = "exp(-x1^2/2)/sqrt(2*3.141592653589793)"


def spec1(D="0.5", phi=GAUSS, **kw):
    return ProblemSpec.from_strings(1, 1.0, D, phi, sample_box=[-8, 8], **kw)


def test_derive_seed_distinct():
    seeds = {diagnostics.derive_seed(7, m) for m in range(1000)}
    assert len(seeds) == 1000
    assert all(0 <= s < 2 ** 64 for s in seeds)
    assert diagnostics.derive_seed(7, 3) == diagnostics.derive_seed(7, 3)


def test_qv_small_horizon_two():
    rep = diagnostics.quadratic_variation_experiment(2.0, 10, 20_000, 3)
    mean = rep.row("mean S_n")
    assert mean.expected == 2.0
    assert abs(mean.measured - 2.0) <= 3 * math.sqrt(0.8 / 20_000)
    assert rep.verdict


def test_qv_reproducible_and_exportable():
    a = diagnostics.quadratic_variation_experiment(1.0, 100, 1000, 9)
    b = diagnostics.quadratic_variation_experiment(1.0, 100, 1000, 9)
    assert a.to_json() == b.to_json()
    data = json.loads(a.to_json())
    assert data["kind"] == "quadratic-variation" and len(data["rows"]) == 2
    assert a.to_text().splitlines()[0].startswith("quadratic-variation:")


def test_qv_rejects_tiny_runs():
    with pytest.raises(ValueError):
        diagnostics.quadratic_variation_experiment(1.0, 5, 1000, 1)


def test_n_scaling_degenerate():
    rep = diagnostics.n_scaling_study(spec1("0"), [0.5], 0.1, [100, 1000], 5, 1)
    assert rep.degenerate and rep.verdict


def test_n_scaling_small():
    rep = diagnostics.n_scaling_study(spec1(), [0.0], 0.1, [200, 3200], 40, 2,
                                      quadrupling=(200, 60))
    slope = rep.row("slope log std / log N").measured
    assert -0.7 < slope < -0.3
    assert len(rep.rows) == 4


def test_relative_error_study():
    pts = [[x] for x in np.linspace(-1.2, 1.2, 9)]
    rep = diagnostics.relative_error_study(spec1(), pts, 5000, 0.1, 4)
    assert rep.verdict
    assert rep.rows[0].measured >= 1.0


def test_relative_error_grows_in_tails():
    rep = diagnostics.relative_error_study(spec1(), [[0.0], [4.0]], 5000, 0.1, 4, threshold=0.0)
    # relative variance (2/sqrt(3)) exp(x^2/6) - 1 is about 20 times larger at x = 4
    assert rep.rows[0].measured > 2.0 and not rep.verdict


def test_dt_study_constant_coefficients_degenerate():
    spec = spec1()
    exact = reference.gaussian_oracle(0.5, 1, 0.0, 1.0)
    rep = diagnostics.dt_scaling_study(spec, [0.0], 20_000, [0.2, 0.1, 0.05], exact, 5)
    assert rep.degenerate and rep.verdict


def test_dt_equal_horizon_single_step():
    spec = spec1()
    exact = reference.gaussian_oracle(0.5, 1, 0.0, 1.0)
    rep = diagnostics.dt_scaling_study(spec, [0.0], 20_000, [1.0, 0.5], exact, 6)
    assert rep.verdict


def test_refinement_factors():
    assert diagnostics._refinements([0.04, 0.02, 0.01]) == [4, 2, 1]
    assert diagnostics._refinements([0.03, 0.02]) is None


def test_dt_study_warns_when_undersized():
    spec = spec1("0.5*(1 + 0.5*tanh(x1))")
    oracle = 0.2824239816
    with pytest.warns(RuntimeWarning, match="exceeds bias"):
        rep = diagnostics.dt_scaling_study(spec, [0.0], 2000, [0.5, 0.25], oracle, 7)
    assert rep.meta["coupled"]
    assert len(rep.rows) == 2
    assert not rep.row("se / bias at dt=0.5").passed or rep.meta["se"][0] < rep.meta["bias"][0]


def test_compare_single_bin():
    rep = diagnostics.compare_methods(spec1(), (-1, 1), 1, 200_000, 5000, 0.05, 8,
                                      launch=(-8, 8), fd_nodes=801, fd_steps=400)
    assert rep.verdict and len(rep.rows) == 1


def test_compare_tradeoff_row():
    rep = diagnostics.compare_methods(spec1(), (-3, 3), 30, 1000, 1000, 0.1, 9,
                                      launch=(-8, 8), fd_nodes=801, fd_steps=400)
    row = rep.row("backward se / forward se at the peak bin")
    assert row.passed and rep.meta["occupancy_per_bin"] < 1000


def test_studies_do_not_mutate_spec():
    spec = spec1()
    before = (spec.fingerprint(), spec.initial)
    diagnostics.n_scaling_study(spec, [0.0], 0.2, [100, 400], 5, 1, quadrupling=None)
    assert (spec.fingerprint(), spec.initial) == before


def test_report_row_window():
    r = diagnostics.ReportRow.window("x", 1.5, 2.0, 1.0, 2.6)
    assert r.passed and r.tolerance == "[1.0, 2.6]"
    assert not diagnostics.ReportRow.window("x", math.nan, None, 0, 1).passed
