import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcell_sd.engine import (IntegrationConfig, NegativeStockError, NonFiniteError, StateVector,
                             StepSizeUnderflow, integrate, step_euler, step_rk4, step_rkf45)


def zero(t, y):
    return [0.0] * len(y)


def decay(t, y):
    return [-y[0]]


def cos_rate(t, y):
    return [math.cos(t)]


def cfg(**kw):
    base = dict(t0=0.0, t_end=1.0, method="rk4", dt=0.01, record_interval=0.1)
    base.update(kw)
    return IntegrationConfig(**base)


# --- single steps

def test_euler_zero_derivative_is_identity():
    assert step_euler(zero, 0.0, StateVector.of([5.0]), 1.0).values == (5.0,)


def test_euler_decay_step():
    assert step_euler(decay, 0.0, StateVector.of([1.0]), 0.1).values[0] == pytest.approx(0.9, abs=1e-15)


def test_euler_constant_rate():
    assert step_euler(lambda t, y: [1.0], 0.0, [0.0], 0.25).values == (0.25,)


def test_rk4_zero_derivative_is_identity():
    assert step_rk4(zero, 0.0, [5.0], 1.0).values == (5.0,)


def test_rk4_decay_unit_step_matches_hand_expansion():
    # k1=-1, k2=-1/2, k3=-3/4, k4=-1/4 -> 1 + (-1 - 1 - 3/2 - 1/4)/6 = 3/8
    assert step_rk4(decay, 0.0, [1.0], 1.0).values[0] == pytest.approx(0.375, abs=1e-15)


def test_rk4_repeated_steps_follow_exponential():
    y = StateVector.of([1.0])
    for i in range(100):
        y = step_rk4(decay, i * 0.01, y, 0.01)
    assert y.values[0] == pytest.approx(math.exp(-1.0), abs=1e-8)


def test_rkf45_step_error_estimate_is_small_for_smooth_problem():
    y, err = step_rkf45(decay, 0.0, [1.0], 0.1)
    assert y.values[0] == pytest.approx(math.exp(-0.1), abs=1e-6)
    assert 0 < err[0] < 1e-6


def test_step_rejects_non_positive_dt():
    with pytest.raises(ValueError):
        step_euler(decay, 0.0, [1.0], 0.0)


def test_non_finite_derivative_names_stock_and_time():
    def bad(t, y):
        return [0.0, math.nan]
    with pytest.raises(NonFiniteError) as info:
        step_rk4(bad, 2.5, StateVector((1.0, 1.0), ("A", "B")), 0.1)
    assert info.value.stock == "B"
    assert info.value.time == 2.5


def test_integrate_non_finite_mid_run():
    def blowup(t, y):
        return [math.inf if t > 0.5 else 0.0]
    with pytest.raises(NonFiniteError) as info:
        integrate(blowup, StateVector((1.0,), ("X",)), cfg())
    assert info.value.stock == "X"
    assert info.value.time > 0.5


# --- integrate

def test_rk4_decay_to_five():
    traj = integrate(decay, [1.0], cfg(t_end=5.0, dt=0.001))
    assert traj.final.values[0] == pytest.approx(math.exp(-5.0), rel=1e-9)


def test_rkf45_cosine_to_pi():
    traj = integrate(cos_rate, [0.0], cfg(t_end=math.pi, method="rkf45", abs_tol=1e-8, rel_tol=1e-8,
                                          record_interval=math.pi))
    assert abs(traj.final.values[0]) < 1e-6


@pytest.mark.parametrize("method", ["euler", "rk4", "rkf45"])
def test_zero_derivative_gives_constant_trajectory(method):
    traj = integrate(zero, [3.0, 7.5], cfg(method=method))
    assert all(v == (3.0, 7.5) for v in traj.values)


@pytest.mark.parametrize("method", ["euler", "rk4", "rkf45"])
def test_trajectory_shape(method):
    c = cfg(t0=2.0, t_end=12.0, method=method, record_interval=0.1)
    traj = integrate(decay, [1.0], c)
    assert len(traj.times) == len(traj.values) == 101
    assert traj.times[0] == 2.0 and traj.times[-1] == 12.0
    assert all(a < b for a, b in zip(traj.times, traj.times[1:]))


def test_record_interval_not_dividing_span_closes_on_t_end():
    traj = integrate(decay, [1.0], cfg(t_end=1.05))
    assert traj.times[-2:] == (1.0, 1.05)
    assert traj.final.values[0] == pytest.approx(math.exp(-1.05), rel=1e-9)


def test_dt_not_dividing_record_interval_is_refined():
    traj = integrate(decay, [1.0], cfg(dt=0.03))
    assert traj.step_log.accepted == 40   # four equal sub-steps per 0.1
    assert traj.final.values[0] == pytest.approx(math.exp(-1.0), rel=1e-7)


def _final_error(method, dt):
    traj = integrate(decay, [1.0], cfg(method=method, dt=dt, record_interval=1.0))
    return abs(traj.final.values[0] - math.exp(-1.0))


@pytest.mark.parametrize("method,lo,hi", [("rk4", 12, 20), ("euler", 1.8, 2.2)])
def test_order_of_convergence(method, lo, hi):
    errors = [_final_error(method, 0.1 / 2 ** k) for k in range(4)]
    factors = [a / b for a, b in zip(errors, errors[1:])]
    assert len(factors) == 3
    assert all(lo <= f <= hi for f in factors), factors


def test_rkf45_agrees_with_fine_rk4():
    tol = 1e-8
    a = integrate(decay, [1.0], cfg(method="rkf45", abs_tol=tol, rel_tol=tol)).final.values[0]
    b = integrate(decay, [1.0], cfg(dt=1e-4)).final.values[0]
    assert abs(a - b) <= 10 * tol


def test_rkf45_respects_dt_max_and_counts_steps():
    traj = integrate(decay, [1.0], cfg(method="rkf45", dt_max=0.01, record_interval=1.0))
    assert traj.step_log.accepted >= 100


def test_rkf45_step_size_underflow():
    def stiff(t, y):
        return [-1e12 * (y[0] - math.cos(t))]
    with pytest.raises(StepSizeUnderflow):
        integrate(stiff, [0.0], cfg(method="rkf45", dt_min=1e-3, dt=0.1))


def test_determinism_bit_identical():
    def f(t, y):
        return [-0.3 * y[0] + math.sin(t), 0.3 * y[0] - 0.1 * y[1]]
    for method in ("euler", "rk4", "rkf45"):
        a = integrate(f, [1.0, 0.0], cfg(method=method, t_end=10.0))
        b = integrate(f, [1.0, 0.0], cfg(method=method, t_end=10.0))
        assert a.times == b.times and a.values == b.values


def test_purity_inputs_untouched():
    y0 = StateVector((1.0, 2.0), ("a", "b"))
    c = cfg()
    before = (y0.values, c)
    integrate(lambda t, y: [-y[0], -y[1]], y0, c)
    assert (y0.values, c) == before
    plain = [1.0, 2.0]
    integrate(lambda t, y: [-y[0], -y[1]], plain, c)
    assert plain == [1.0, 2.0]


def _overshoot(t, y):
    # forward Euler with dt * 30 > 1 undershoots zero
    return [-30.0 * y[0] - 1.0, 1.0]


def test_clamp_policy_sets_zero_and_logs():
    traj = integrate(_overshoot, StateVector((1.0, 0.0), ("S", "T")), cfg(method="euler", dt=0.05))
    assert min(v for row in traj.values for v in row) >= 0.0
    assert traj.step_log.clamps
    assert traj.step_log.clamps[0].stock == "S"


def test_reject_policy_raises_with_stock_and_time():
    c = cfg(method="euler", dt=0.05, negativity_policy="reject")
    with pytest.raises(NegativeStockError) as info:
        integrate(_overshoot, StateVector((1.0, 0.0), ("S", "T")), c)
    assert info.value.stock == "S"
    assert info.value.time == pytest.approx(0.05)


@pytest.mark.parametrize("bad", [
    dict(t_end=0.0), dict(dt=0.0), dict(dt_min=0.0), dict(dt_min=2.0, dt_max=1.0),
    dict(abs_tol=0.0), dict(rel_tol=-1.0), dict(record_interval=0.0), dict(method="rk2"),
    dict(negativity_policy="ignore"), dict(dt=math.nan),
])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        cfg(**bad)


def test_non_finite_initial_value_rejected():
    with pytest.raises(NonFiniteError):
        integrate(decay, [math.nan], cfg())


def test_wrong_derivative_length_rejected():
    from tcell_sd.engine import IntegrationError
    with pytest.raises(IntegrationError):
        integrate(lambda t, y: [0.0], [1.0, 2.0], cfg())


@settings(max_examples=60, deadline=None)
@given(t0=st.floats(-50, 50), span=st.floats(0.01, 100), ri=st.floats(0.001, 10))
def test_record_times_properties(t0, span, ri):
    c = IntegrationConfig(t0=t0, t_end=t0 + span, record_interval=ri)
    times = c.record_times()
    if not t0 + span > t0:
        return
    assert times[0] == t0 and times[-1] == c.t_end
    assert all(a < b for a, b in zip(times, times[1:]))
    assert c.t_end - times[-2] <= ri * (1 + 1e-9) if len(times) > 1 else True


@settings(max_examples=40, deadline=None)
@given(rates=st.lists(st.floats(0.0, 80.0), min_size=1, max_size=4),
       dt=st.floats(0.005, 0.1), method=st.sampled_from(["euler", "rk4"]))
def test_clamp_soundness_property(rates, dt, method):
    def f(t, y):
        return [-r * v - 0.5 for r, v in zip(rates, y)]
    traj = integrate(f, [1.0] * len(rates), cfg(method=method, dt=dt, t_end=2.0))
    assert all(v >= 0.0 for row in traj.values for v in row)


@settings(max_examples=25, deadline=None)
@given(k=st.floats(0.01, 3.0), y0=st.floats(0.0, 100.0))
def test_rk4_linear_decay_property(k, y0):
    traj = integrate(lambda t, y: [-k * y[0]], [y0], cfg(t_end=2.0))
    for t, (v,) in zip(traj.times, traj.values):
        assert v == pytest.approx(y0 * math.exp(-k * t), rel=1e-7, abs=1e-12)
