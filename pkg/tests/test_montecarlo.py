import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdmp import expr as ex
from pdmp.model import ModelSpec
from pdmp.montecarlo import (PathConfig, SampleEnsemble, ecdf, histogram, integrate_drift,
                             path_rng, read_ensemble_csv, run_ensemble, sample_initial,
                             sample_next_state, sample_waiting_time, simulate_path, waiting_time,
                             write_ensemble_csv)
from pdmp.solver import InitialCondition

from conftest import relax4_model, telegraph


def test_waiting_time_zero_rate():
    assert waiting_time(0.3, 0.0) == math.inf
    assert sample_waiting_time(path_rng(1, 0), 0.0) == math.inf


def test_waiting_time_inverse_cdf():
    assert waiting_time(math.exp(-1), 2.0) == pytest.approx(0.5, rel=1e-15)
    assert waiting_time(1.0, 3.0) == 0.0


def test_waiting_time_mean():
    rng = path_rng(2024, 0)
    mu = 4.0
    u = 1.0 - rng.random(10**6)
    tau = -np.log(u) / mu
    # 4 standard errors of the mean of Exp(mu): 4 / (mu sqrt(N))
    assert abs(tau.mean() - 0.25) <= 4 / (mu * 1e3)
    assert abs(tau.mean() - 0.25) <= 1e-3


def test_waiting_time_scalar_matches_vector_draws():
    a, b = path_rng(5, 7), path_rng(5, 7)
    scalar = [sample_waiting_time(a, 4.0) for _ in range(100)]
    vector = -np.log(1.0 - b.random(100)) / 4.0
    np.testing.assert_array_equal(scalar, vector)


def test_next_state_deterministic_column():
    q = np.zeros((4, 4))
    q[1, :] = 1.0
    rng = path_rng(0, 0)
    assert {sample_next_state(rng, q, j) for j in range(4) for _ in range(50)} == {1}


def test_next_state_self_jump():
    q = np.eye(3)
    rng = path_rng(0, 1)
    assert all(sample_next_state(rng, q, 2) == 2 for _ in range(100))


def test_next_state_uniform_frequencies():
    q = np.full((4, 4), 0.25)
    rng = path_rng(11, 0)
    draws = np.array([sample_next_state(rng, q, 2) for _ in range(10**5)])
    freq = np.bincount(draws, minlength=4) / len(draws)
    np.testing.assert_allclose(freq, 0.25, atol=0.01)


def test_next_state_skips_zero_probability_states():
    q = np.array([[0.0, 0.3], [0.0, 0.0], [1.0, 0.7]])
    q = np.column_stack([q, [0, 0, 1.0]])
    rng = path_rng(3, 3)
    seen = {sample_next_state(rng, q, 1) for _ in range(2000)}
    assert seen == {0, 2}


def test_flow_fixed_point():
    assert integrate_drift(ex.parse("-x+1"), 1.0, 17.3) == 1.0


def test_flow_closed_form():
    x = integrate_drift(ex.parse("-0.001*x + 2"), 0.0, 1000.0)
    assert x == pytest.approx(2000 * (1 - math.exp(-1)), rel=1e-14)
    assert x == pytest.approx(1264.24, abs=5e-3)


def test_flow_constant_drift():
    assert integrate_drift(ex.parse("3"), 1.0, 2.0) == 7.0


def test_rk4_matches_closed_form():
    # a zero-weighted tanh term defeats affine detection and forces RK4
    drift = ex.parse("-0.001*x + 2")
    wrapped = ex.parse("-0.001*x + 2 + 0*tanh(x)")
    assert ex.affine_coefficients(wrapped) is None
    tau = 1000.0
    exact = integrate_drift(drift, 0.0, tau)
    rk = integrate_drift(wrapped, 0.0, tau, h=tau / 100)
    # per-step RK4 error (a h)^5/120 on |x| ~ 2000 over 100 steps: ~1e-7 absolute
    assert abs(rk - exact) <= 1e-10 * abs(exact)
    assert abs(integrate_drift(wrapped, 0.0, tau, h=1.0) - exact) <= 1e-10


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(0, 10), st.floats(-2, -0.05), st.floats(-2, 2))
def test_rk4_vs_closed_form_random(x0, tau, a, b):
    exact = integrate_drift(ex.parse(f"{a!r}*x + {b!r}".replace("+ -", "- ")), x0, tau)
    wrapped = ex.parse(f"{a!r}*x + {b!r} + 0*sin(x)".replace("+ -", "- "))
    assert abs(integrate_drift(wrapped, x0, tau, h=1e-2) - exact) <= 1e-8


def test_rk4_nonlinear():
    # dx/dt = -x^3, x(t) = x0 / sqrt(1 + 2 x0^2 t)
    x = integrate_drift(ex.parse("-x^3"), 1.5, 2.0, h=1e-3)
    assert x == pytest.approx(1.5 / math.sqrt(1 + 2 * 1.5**2 * 2.0), rel=1e-10)


def test_flow_rejects_bad_duration():
    with pytest.raises(ValueError):
        integrate_drift(ex.parse("x"), 0.0, -1.0)
    with pytest.raises(ex.DriftEvalError):
        integrate_drift(ex.parse("x^2"), 1.0, 5.0, h=1e-2)


def test_path_without_switching_is_ode():
    spec = ModelSpec(["-x + 1", "-x - 1"], [0.0, 0.0], [[0, 1], [1, 0]])
    x, s = simulate_path(spec, 0.0, 1, 2.0, path_rng(9, 0))
    assert s == 1
    assert x == pytest.approx(-1 + math.exp(-2.0), rel=1e-14)


def test_path_stays_in_invariant_domain():
    spec = relax4_model()
    for m in range(300):
        x, s = simulate_path(spec, 0.0, m % 4, 3000.0, path_rng(77, m))
        assert -2000 <= x <= 2000
        assert 0 <= s < 4


def test_path_deterministic():
    spec = relax4_model(0.2, 0.1)
    a = simulate_path(spec, 0.0, 2, 20.0, path_rng(5, 3))
    b = simulate_path(spec, 0.0, 2, 20.0, path_rng(5, 3))
    assert a == b


def test_initial_sampler_steps():
    ic = InitialCondition(steps=(((0.25, -1.0), (0.25, 1.0)), ((0.5, 0.0),)))
    rng = path_rng(1, 1)
    draws = [sample_initial(ic, rng) for _ in range(20000)]
    states = np.array([s for _, s in draws])
    xs = np.array([x for x, _ in draws])
    assert set(map(tuple, draws)) == {(-1.0, 0), (1.0, 0), (0.0, 1)}
    assert abs(states.mean() - 0.5) < 0.02
    assert abs((xs == -1.0).mean() - 0.25) < 0.02


def test_initial_sampler_table():
    ic = InitialCondition(tables=(([0.0, 1.0], [0.0, 0.5]), ([0.0, 2.0], [0.0, 0.5])))
    rng = path_rng(4, 2)
    draws = [sample_initial(ic, rng) for _ in range(20000)]
    x1 = np.array([x for x, s in draws if s == 1])
    assert 0 <= x1.min() and x1.max() <= 2
    assert abs(x1.mean() - 1.0) < 0.03


def test_telegraph_state_occupation():
    spec = telegraph(1.0)
    ic = InitialCondition(steps=(((1.0, 0.0),), ()))
    ens = run_ensemble(spec, PathConfig(20000, 10.0, 31, ic))
    p1 = (ens.states == 0).mean()
    assert abs(p1 - 0.5) <= 4 * math.sqrt(0.25 / 20000)


def test_ensemble_single_path_matches_simulate_path():
    spec = relax4_model(0.2, 0.1)
    ic = InitialCondition.heaviside(4)
    ens = run_ensemble(spec, PathConfig(1, 20.0, 123, ic))
    rng = path_rng(123, 0)
    x0, s0 = sample_initial(ic, rng)
    assert (ens.endpoints[0], ens.states[0]) == simulate_path(spec, x0, s0, 20.0, rng)


def test_ensemble_independent_of_workers(tmp_path):
    spec = relax4_model(0.2, 0.1)
    cfg = PathConfig(400, 8.0, 99, InitialCondition.heaviside(4))
    one = run_ensemble(spec, cfg, workers=1)
    three = run_ensemble(spec, cfg, workers=3)
    np.testing.assert_array_equal(one.endpoints, three.endpoints)
    np.testing.assert_array_equal(one.states, three.states)
    assert np.all(np.diff(one.endpoints) >= 0)
    write_ensemble_csv(one, tmp_path / "a.csv")
    write_ensemble_csv(three, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_ensemble_csv_round_trip(tmp_path):
    spec = telegraph(2.0)
    ens = run_ensemble(spec, PathConfig(50, 1.0, 2**63 + 5, InitialCondition.heaviside(2)))
    path = tmp_path / "e.csv"
    write_ensemble_csv(ens, path)
    first = path.read_text().splitlines()[0]
    assert first.startswith(f"# seed={2**63 + 5} N=50 T=1.0 generator=")
    back = read_ensemble_csv(path)
    np.testing.assert_array_equal(back.endpoints, ens.endpoints)
    np.testing.assert_array_equal(back.states, ens.states)
    assert back.seed == ens.seed


def test_path_config_validation():
    ic = InitialCondition.heaviside(1)
    for kw in ({"N": 0}, {"T": -1.0}, {"substep": 0.0}, {"seed": -1}, {"seed": 2**64}):
        args = {"N": 1, "T": 1.0, "seed": 0, "initial": ic, **kw}
        with pytest.raises(ValueError):
            PathConfig(**args)


def _ens(values):
    v = np.sort(np.asarray(values, dtype=float))
    return SampleEnsemble(v, np.zeros(len(v), dtype=int), 0, 0.0)


def test_ecdf_single_point_is_heaviside():
    e = _ens([0.0])
    np.testing.assert_array_equal(ecdf(e, [-1.0, -1e-12, 0.0, 3.0]), [0, 0, 1, 1])


def test_ecdf_counting():
    assert ecdf(_ens([1, 2, 3, 4]), 2.5) == 0.5


def test_ecdf_monotone_limits(rng):
    e = _ens(rng.normal(size=500))
    x = np.linspace(-10, 10, 1001)
    F = ecdf(e, x)
    assert F[0] == 0 and F[-1] == 1
    assert np.all(np.diff(F) >= 0)


def test_histogram_normalised(rng):
    e = _ens(rng.normal(size=5000))
    edges = np.linspace(-6, 6, 49)
    dens = histogram(e, edges)
    assert np.sum(dens * np.diff(edges)) == pytest.approx(1.0, rel=1e-12)
    assert histogram(_ens([100.0]), edges).sum() == 0.0
