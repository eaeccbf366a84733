import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minereg.errors import ValidationError
from minereg.grid import (
    ContingencyScenario,
    Disturbance,
    FrequencyTrace,
    GridParams,
    GridState,
    bundled_scenario_path,
    load_scenarios,
    recovery_time,
    run_scenarios,
    simulate_contingency,
    step_frequency,
)

PARAMS = GridParams(8000.0, 1000.0)


def closed_form(p_mw, t, params=PARAMS):
    """Frequency deviation after a constant imbalance ``p_mw`` applied at t=0."""
    d, m = params.damping_mw_per_hz, params.inertia_mws_per_hz
    return p_mw / d * (1 - math.exp(-t * d / m))


def euler(p_mw, t_end, dt, params=PARAMS):
    state = GridState()
    state = step_frequency(state, params, p_mw, dt)
    for _ in range(int(round(t_end / dt)) - 1):
        state = step_frequency(state, params, 0.0, dt)
    return state.freq_hz - params.nominal_hz


def scenario(loss=450.0, ramp=1.5, cap=500.0, sim=600.0, gain=400.0, params=PARAMS):
    return ContingencyScenario(
        params, Disturbance.generation_loss(loss, 5.0), ramp, cap, sim, 0.1, gain
    )


def test_equilibrium_holds():
    state = GridState()
    for _ in range(1000):
        state = step_frequency(state, PARAMS, 0.0, 0.1)
    assert state.freq_hz == 60.0


def test_steady_state_deviation():
    tau = PARAMS.time_constant_s
    df = euler(-450.0, 10 * tau, 0.01)
    assert df == pytest.approx(-0.45, rel=0.01)


def test_euler_first_order_convergence():
    t = 8.0
    exact = closed_form(-450.0, t)
    err_h = abs(euler(-450.0, t, 0.2) - exact)
    err_h2 = abs(euler(-450.0, t, 0.1) - exact)
    assert err_h / err_h2 == pytest.approx(2.0, rel=0.2)


def test_coarse_step_warns(caplog):
    with caplog.at_level("WARNING"):
        step_frequency(GridState(), PARAMS, 0.0, 5.0)
    assert "coarse" in caplog.text


def test_params_validation():
    with pytest.raises(ValidationError):
        GridParams(0.0, 1.0)
    with pytest.raises(ValidationError):
        GridParams(1.0, -1.0)
    with pytest.raises(ValidationError):
        Disturbance(((5.0, -1.0), (5.0, -1.0)))


def test_disturbance_window():
    dist = Disturbance(((1.0, -10.0), (2.0, 4.0)))
    assert dist.change_in(0.0, 1.0) == 0.0
    assert dist.change_in(1.0, 2.0) == -10.0
    assert dist.change_in(0.0, 3.0) == -6.0


def test_no_disturbance_is_flat():
    trace = simulate_contingency(scenario(loss=0.0))
    assert np.all(trace.freq_hz == 60.0)
    assert np.all(trace.regulation_mw == 0.0)
    assert recovery_time(trace, (59.99, 60.01)) == 0.0


def test_saturated_regulation_settles_below_band():
    trace = simulate_contingency(scenario(loss=600.0, ramp=50.0, sim=900.0))
    expected = 60.0 - (600.0 - 500.0) / PARAMS.damping_mw_per_hz
    assert trace.freq_hz[-1] == pytest.approx(expected, abs=1e-3)
    assert recovery_time(trace, (59.99, 60.01)) is None


def test_zero_ramp_never_recovers():
    trace = simulate_contingency(scenario(ramp=0.0))
    assert np.all(trace.regulation_mw == 0.0)
    assert recovery_time(trace, (59.99, 60.01)) is None


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 80.0), st.floats(50.0, 800.0), st.floats(100.0, 700.0))
def test_regulation_respects_cap_and_ramp(ramp, cap, loss):
    trace = simulate_contingency(scenario(loss=loss, ramp=ramp, cap=cap, sim=120.0))
    reg = trace.regulation_mw
    assert np.all(np.abs(reg) <= cap + 1e-9)
    assert np.all(np.abs(np.diff(reg)) <= ramp * 0.1 + 1e-9)


def test_recovery_time_non_increasing_in_ramp():
    times = []
    for ramp in (1.0, 1.5, 3.0, 6.0, 15.0, 30.0, 50.0, 100.0):
        rec = recovery_time(simulate_contingency(scenario(ramp=ramp)), (59.99, 60.01))
        times.append(math.inf if rec is None else rec)
    assert all(a >= b for a, b in zip(times, times[1:]))
    assert times[0] > times[-1]


def test_linear_in_loss_when_unconstrained():
    # Doubling the loss, cap and ramp doubles every deviation.
    a = simulate_contingency(scenario(loss=200.0, ramp=5.0, cap=300.0, sim=200.0))
    b = simulate_contingency(scenario(loss=400.0, ramp=10.0, cap=600.0, sim=200.0))
    assert np.allclose(b.freq_hz - 60.0, 2 * (a.freq_hz - 60.0), atol=1e-9)


@pytest.mark.parametrize(
    "freq, expected",
    [
        ([60.0, 60.005, 59.995], 0.0),
        # Out at t=5, back at 25, out again at t=47 only.
        ([60.0] * 5 + [59.9] * 20 + [60.0] * 22 + [59.98] + [60.0] * 10, 48.0),
    ],
)
def test_recovery_time_examples(freq, expected):
    f = np.asarray(freq, float)
    t = np.arange(len(f), dtype=float)
    assert recovery_time(FrequencyTrace(t, f, np.zeros_like(f)), (59.99, 60.01)) == expected


def test_recovery_time_final_reentry():
    f = np.full(60, 60.0)
    f[5:47] = 59.9
    t = np.arange(60, dtype=float)
    assert recovery_time(FrequencyTrace(t, f, np.zeros(60)), (59.99, 60.01)) == 47.0


def test_recovery_time_ends_outside():
    f = np.full(10, 60.0)
    f[-1] = 59.0
    t = np.arange(10, dtype=float)
    assert recovery_time(FrequencyTrace(t, f, np.zeros(10)), (59.99, 60.01)) is None


def test_bundled_trio_ordering():
    results = run_scenarios(load_scenarios(bundled_scenario_path()))
    rec = {name: r for name, (_, r) in results.items()}
    assert set(rec) == {"existing", "tenfold", "miners"}
    assert rec["existing"] > 60.0
    assert rec["tenfold"] < 60.0
    assert rec["miners"] < rec["tenfold"]


def test_scenario_file_sections_and_bare(tmp_path):
    bare = tmp_path / "one.scenario"
    bare.write_text(
        "inertia = 8000\ndamping = 1000\nloss_mw = 0\nloss_time_s = 5\n"
        "ramp_mw_per_s = 1\ncap_mw = 10\ndt_s = 0.1\nsim_s = 10  # short\n"
    )
    loaded = load_scenarios(bare)
    assert list(loaded) == ["one"]
    sc, band = loaded["one"]
    assert sc.sim_seconds == 10.0 and band == 0.01


def test_scenario_file_errors(tmp_path):
    bad = tmp_path / "bad.scenario"
    bad.write_text("[a]\ninertia = 8000\n")
    with pytest.raises(ValidationError, match="missing key"):
        load_scenarios(bad)
    bad.write_text("[a]\ninertia = 8000\ndamping=1\nloss_mw=1\nloss_time_s=1\nramp_mw_per_s=1\n"
                   "cap_mw=1\ndt_s=0.1\nsim_s=1\ncolour=red\n")
    with pytest.raises(ValidationError, match="unknown key"):
        load_scenarios(bad)


def test_trace_csv():
    trace = simulate_contingency(scenario(sim=1.0))
    lines = trace.to_csv().splitlines()
    assert lines[0] == "time_s,freq_hz,regulation_mw"
    assert len(lines) == 12
