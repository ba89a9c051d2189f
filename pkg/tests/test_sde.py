import math

import numpy as np
import pytest

from fkmc import sde
from fkmc.problem import ProblemSpec


def gauss_spec(D="0.5", **kw):
    return ProblemSpec.from_strings(1, 1.0, D, "exp(-x1^2/2)/sqrt(2*3.141592653589793)",
                                    sample_box=[-8, 8], **kw)


def test_next_normal_moments():
    stream = sde.RandomStream(seed=2024, point=0, particle=np.arange(1000))
    draws = stream.draw(1000).ravel()
    assert draws.shape == (1_000_000,)
    assert abs(draws.mean()) < 0.004
    assert abs(draws.var() - 1.0) < 0.005


def test_next_normal_repeatable():
    a = sde.next_normal(sde.RandomStream(seed=7, point=3, particle=11, counter=5))
    b = sde.next_normal(sde.RandomStream(seed=7, point=3, particle=11, counter=5))
    assert a == b
    s = sde.RandomStream(seed=7, point=3, particle=11)
    seq = [sde.next_normal(s) for _ in range(6)]
    assert seq[5] == a and s.counter == 6


def test_seed_key_split():
    assert sde.seed_key(0x0123456789ABCDEF) == (0x89ABCDEF, 0x01234567)
    assert sde.seed_key(-1) == (0xFFFFFFFF, 0xFFFFFFFF)


def test_schedule_backward_lands_on_zero():
    times, steps = sde.schedule(1.0, 0.3)
    assert len(steps) == math.ceil(1.0 / 0.3)
    np.testing.assert_allclose(steps, [0.3, 0.3, 0.3, 0.1], rtol=1e-12)
    assert times[0] == 1.0


def test_schedule_snaps_exact_multiples():
    for dt in (0.1, 0.01, 0.001, 0.04, 1 / 3):
        _, steps = sde.schedule(1.0, dt)
        assert len(steps) == round(1.0 / dt)
        assert abs(math.fsum(steps) - 1.0) < 1e-14


def test_schedule_forward_matches_steps():
    spec = gauss_spec()
    times, steps = sde.schedule(1.0, 0.3, "forward")
    state = sde.ParticleState.launch(np.zeros(1), 0.0)
    for t, h in zip(times, steps):
        assert state.t == t
        state = sde.forward_step(state, spec, 0.3, zeta=[0.0])
    assert state.t == 1.0


def test_standstill():
    spec = gauss_spec("0")
    state = sde.ParticleState.launch(np.array([0.7]), 1.0, n=5)
    stream = sde.RandomStream(seed=1, particle=np.arange(5))
    for _ in range(10):
        state = sde.backward_step(state, spec, 0.1, stream)
    np.testing.assert_array_equal(state.x, 0.7)
    assert state.t == 0.0


def test_forced_unit_increment():
    state = sde.ParticleState.launch(np.array([0.25]), 1.0)
    out = sde.backward_step(state, gauss_spec(), 0.01, zeta=[1.0])
    assert abs(out.x[0, 0] - 0.35) < 1e-15
    assert abs(out.t - 0.99) < 1e-15


def test_reaction_integral_exact():
    spec = gauss_spec(reaction="1")
    state = sde.ParticleState.launch(np.zeros(1), 1.0, n=3)
    stream = sde.RandomStream(seed=3, particle=np.arange(3))
    for _ in range(10):
        state = sde.backward_step(state, spec, 0.1, stream)
    assert state.t == 0.0
    assert np.all(state.k == 1.0)


def test_source_accumulator():
    spec = gauss_spec(source="1", reaction="0.5")
    state = sde.ParticleState.launch(np.zeros(1), 1.0)
    for _ in range(4):
        state = sde.backward_step(state, spec, 0.25, zeta=[0.0])
    # Q = sum exp(-K_j) dt with K_j = 0.5 * 0.25 * j
    expected = sum(math.exp(-0.125 * j) * 0.25 for j in range(4))
    assert abs(state.q[0] - expected) < 1e-15


def test_pure_drift_forward():
    # D = x1 gives mu = 1 and sigma = 0 at the origin
    spec = gauss_spec("x1")
    state = sde.ParticleState.launch(np.zeros(1), 0.0)
    out = sde.forward_step(state, spec, 0.1, zeta=[2.5])
    assert out.x[0, 0] == 0.1


def test_forward_clips_to_horizon():
    spec = gauss_spec()
    state = sde.ParticleState.launch(np.zeros(1), 0.9)
    out = sde.forward_step(state, spec, 0.5, zeta=[0.0])
    assert out.t == 1.0
    with pytest.raises(ValueError):
        sde.forward_step(out, spec, 0.1, zeta=[0.0])


def test_backward_forward_reversal():
    spec = ProblemSpec.from_strings(2, 1.0, {(1, 1): "0.3", (1, 2): "0.1", (2, 2): "0.7"}, "1")
    rng = np.random.default_rng(8)
    zs = rng.standard_normal((10, 2))
    state = sde.ParticleState.launch(np.array([0.4, -0.2]), 1.0)
    for z in zs:
        state = sde.backward_step(state, spec, 0.1, zeta=z)
    fwd = sde.ParticleState.launch(state.x[:, 0], 0.0)
    for z in zs[::-1]:
        fwd = sde.forward_step(fwd, spec, 0.1, zeta=-z)
    np.testing.assert_allclose(fwd.x[:, 0], [0.4, -0.2], atol=1e-12)


def test_fault_freezes_particle():
    spec = gauss_spec("x1")   # negative positions cannot be factorized
    state = sde.ParticleState.launch(np.array([[0.01, 2.0]]), 1.0)
    out = sde.backward_step(state, spec, 0.01, zeta=np.array([[-5.0, 0.0]]))
    out = sde.backward_step(out, spec, 0.01, zeta=np.array([[0.0, 0.0]]))
    assert out.faulted.tolist() == [True, False]
    assert np.isfinite(out.x).all()


def _trace_by_steps(spec, x0, ids, seed, dt):
    state = sde.ParticleState.launch(x0, spec.horizon, len(ids))
    stream = sde.RandomStream(seed=seed, point=0, particle=ids)
    while state.t > 0:
        state = sde.backward_step(state, spec, dt, stream)
    return state


@pytest.mark.parametrize("D", ["0.5", "0.5*(1 + 0.5*tanh(x1))"])
def test_trace_matches_step_loop(D):
    spec = gauss_spec(D, reaction="0.2*x1^2", source="cos(x1)")
    ids = np.arange(64, dtype=np.uint64)
    x, k, q, bad = sde.trace(spec, np.array([0.3]), ids, 0, 99, 0.07)
    st_ = _trace_by_steps(spec, np.array([0.3]), ids, 99, 0.07)
    if spec.constant_factor is not None:
        np.testing.assert_allclose(x, st_.x, rtol=1e-13, atol=1e-14)
    else:
        np.testing.assert_array_equal(x, st_.x)
        np.testing.assert_array_equal(k, st_.k)
        np.testing.assert_array_equal(q, st_.q)
    assert not bad.any()


def test_trace_is_chunk_independent():
    spec = gauss_spec("0.5*(1 + 0.5*tanh(x1))")
    ids = np.arange(100, dtype=np.uint64)
    whole = sde.trace(spec, np.array([0.1]), ids, 2, 5, 0.05)[0]
    parts = np.concatenate([sde.trace(spec, np.array([0.1]), ids[a:b], 2, 5, 0.05)[0]
                            for a, b in [(0, 13), (13, 60), (60, 100)]], axis=1)
    np.testing.assert_array_equal(whole, parts)


@pytest.mark.parametrize("D", ["0.5", "0.5*(1 + 0.5*tanh(x1))"])
def test_trace_levels_match_single_traces(D):
    spec = gauss_spec(D)
    ids = np.arange(50, dtype=np.uint64)
    levels = sde.trace_levels(spec, np.array([0.0]), ids, 1, 17, 0.01, [4, 2, 1])
    for (x, k, q, bad), m in zip(levels, [4, 2, 1]):
        ref = sde.trace(spec, np.array([0.0]), ids, 1, 17, m * 0.01, refine=m)
        np.testing.assert_array_equal(x, ref[0])


def test_trace_levels_rejects_non_divisors():
    with pytest.raises(ValueError):
        sde.trace_levels(gauss_spec(), np.zeros(1), np.arange(2), 0, 1, 0.01, [2, 3])


def test_coarse_increment_is_standard_normal():
    ids = np.arange(200_000, dtype=np.uint64)
    from fkmc import kernels
    z = kernels.increments(1, 2, 0, 0, ids, 0, 1, 1, 4).ravel()
    assert abs(z.mean()) < 3 / math.sqrt(2e5)
    assert abs(z.var() - 1) < 3 * math.sqrt(2 / 2e5)


def test_quadratic_variation_identity():
    # sum of squared increments over [0, tau] has mean tau and variance 2 tau^2 / n
    tau, n, m = 2.0, 10, 20_000
    ids = np.arange(m, dtype=np.uint64)
    from fkmc import kernels
    z = kernels.normals(5, 0, sde.LANE_QV, 0, ids, 0, n)
    s = (z * z * (tau / n)).sum(axis=0)
    assert abs(s.mean() - tau) < 3 * math.sqrt(0.8 / m)
    assert abs(s.var(ddof=1) - 0.8) < 0.05
