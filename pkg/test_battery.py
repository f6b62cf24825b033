"""Tests for the 2RC cell model, the power chain and the zero-current oracle."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.helpers.battery import (
    BatteryParams,
    BatteryState,
    UnitScaling,
    VehicleBodyParams,
    cell_power_from_motor,
    max_cell_power,
    motor_power_from_dynamics,
    open_circuit_voltage,
    power_loss,
    rc_derivatives,
    resistive_force,
    soc_derivative,
    solve_cell_current,
    solve_cell_current_saturating,
    step_battery,
    terminal_voltage,
    verify_zero_current_optimality,
)
from src.helpers.core import BatteryCapabilityError, ConstraintBreachError, DomainError, ParameterError

CELL = BatteryParams()
BODY = VehicleBodyParams()


def test_default_time_constants():
    assert CELL.tau_1 == pytest.approx(36.0)
    assert CELL.tau_2 == pytest.approx(100.0)


def test_ocv_interpolation():
    assert open_circuit_voltage(0.5, CELL) == pytest.approx(3.55)
    assert open_circuit_voltage(1.0, CELL) == pytest.approx(3.9)


def test_terminal_voltage_at_rest_is_ocv():
    state = BatteryState(S=0.8)
    assert terminal_voltage(state, 0.0, CELL) == pytest.approx(open_circuit_voltage(0.8, CELL))


@pytest.mark.parametrize(
    "changes, rule",
    [
        ({"R_s": 0.0}, "R_s must be positive"),
        ({"eta": 1.5}, "eta must lie in (0, 1]"),
        ({"ocv_soc": (0.0, 0.5)}, "ocv soc breakpoints must cover [0, 1]"),
        ({"ocv_soc": (0.0, 0.5, 1.0), "ocv_voltage": (3.2, 3.9, 3.5)}, "ocv curve must be monotone non-decreasing in soc"),
    ],
)
def test_invalid_battery_params(changes, rule):
    with pytest.raises(ParameterError) as info:
        BatteryParams(**changes)
    assert rule in info.value.violations


def test_invalid_body_params():
    with pytest.raises(ParameterError):
        VehicleBodyParams(m=0.0)


# =============================================================================
# Cell stepping
# =============================================================================


@pytest.mark.parametrize("current", [-2.0, 0.5, 3.0])
@pytest.mark.parametrize("substeps", [2, 7, 50])
def test_exponential_step_matches_substeps(current, substeps):
    state = BatteryState(V_1=0.01, V_2=-0.004, S=0.7)
    once = step_battery(state, current, 20.0, CELL)
    many = state
    for _ in range(substeps):
        many = step_battery(many, current, 20.0 / substeps, CELL)
    assert many.V_1 == pytest.approx(once.V_1, abs=1e-12)
    assert many.V_2 == pytest.approx(once.V_2, abs=1e-12)
    assert many.S == pytest.approx(once.S, abs=1e-12)


def test_soc_conservation():
    profile = [1.5, -0.5, 2.0, 0.0, -1.0]
    dt = 12.0
    state = BatteryState(S=0.6)
    for current in profile:
        state = step_battery(state, current, dt, CELL)
    expected = 0.6 - sum(profile) * dt / (3600.0 * CELL.C_n)
    assert state.S == pytest.approx(expected, abs=1e-14)


def test_rc_voltage_relaxes_to_ir():
    state = BatteryState()
    for _ in range(100):
        state = step_battery(state, 1.0, 50.0, CELL)
    assert state.V_1 == pytest.approx(CELL.R_1 * 1.0, rel=1e-9)
    assert state.V_2 == pytest.approx(CELL.R_2 * 1.0, rel=1e-6)


def test_derivatives_at_rest_and_under_load():
    d1, d2 = rc_derivatives(BatteryState(), 0.0, CELL)
    assert (d1, d2) == (0.0, 0.0)
    d1, d2 = rc_derivatives(BatteryState(V_1=CELL.R_1 * 2.0, V_2=0.0), 2.0, CELL)
    assert d1 == pytest.approx(0.0, abs=1e-15)
    assert d2 == pytest.approx(2.0 / CELL.C_2)
    assert soc_derivative(CELL.C_n, CELL) == pytest.approx(-1.0 / 3600.0)
    assert soc_derivative(-1.0, CELL) > 0.0


def test_step_rejects_bad_dt():
    with pytest.raises(DomainError):
        step_battery(BatteryState(), 1.0, 0.0, CELL)


def test_step_soc_breach():
    with pytest.raises(ConstraintBreachError):
        step_battery(BatteryState(S=0.01), 100.0, 3600.0, CELL)
    drained = step_battery(BatteryState(S=0.01), 100.0, 3600.0, CELL, on_breach="ignore")
    assert drained.S < 0.0


# =============================================================================
# Power loss
# =============================================================================


def test_power_loss_zero_at_zero_current():
    assert power_loss(BatteryState(V_1=0.02, V_2=0.01), 0.0, CELL) == 0.0


def test_power_loss_breach_raises():
    with pytest.raises(ConstraintBreachError):
        power_loss(BatteryState(V_1=-1.0), 1.0, CELL)


def test_power_loss_clamps_float_noise():
    state = BatteryState(V_1=-CELL.R_s - 5e-10)
    assert power_loss(state, 1.0, CELL) == 0.0


@given(
    current=st.floats(min_value=-5.0, max_value=5.0).filter(lambda i: abs(i) > 1e-3),
    seconds=st.floats(min_value=0.1, max_value=200.0),
)
@settings(max_examples=100, deadline=None)
def test_constant_current_from_rest_heats(current, seconds):
    state = step_battery(BatteryState(), current, seconds, CELL)
    assert power_loss(state, current, CELL) > 0.0


# =============================================================================
# Power chain
# =============================================================================


def test_resistive_force_at_rest_is_rolling():
    assert resistive_force(0.0, BODY) == pytest.approx(BODY.C_r * BODY.m * BODY.g)


def test_resistive_force_rejects_reverse():
    with pytest.raises(DomainError):
        resistive_force(-0.1, BODY)


def test_motor_power_signs():
    assert motor_power_from_dynamics(0.0, 1.0, BODY) == 0.0
    assert motor_power_from_dynamics(10.0, 0.5, BODY) > 0.0
    assert motor_power_from_dynamics(10.0, -2.0, BODY) < 0.0


def test_cell_power_efficiency():
    cells = CELL.N_s * CELL.N_p
    assert cell_power_from_motor(8000.0, CELL) == pytest.approx(8000.0 / (0.8 * cells))
    assert cell_power_from_motor(-8000.0, CELL) == pytest.approx(-8000.0 * 0.8 / cells)


def test_cell_power_monotone_and_continuous_at_zero():
    motor = np.linspace(-20000.0, 20000.0, 4001)
    cell = cell_power_from_motor(motor, CELL)
    assert np.all(np.diff(cell) >= 0.0)
    assert cell_power_from_motor(0.0, CELL) == 0.0
    assert abs(cell_power_from_motor(1e-9, CELL)) < 1e-11
    assert abs(cell_power_from_motor(-1e-9, CELL)) < 1e-11


def test_unit_scaling():
    scaling = UnitScaling(length_scale=10.0, time_scale=2.0)
    assert scaling.velocity(1.0) == pytest.approx(5.0)
    assert scaling.acceleration(1.0) == pytest.approx(2.5)
    assert scaling.seconds(0.1) == pytest.approx(0.2)


def test_current_solve_residuals():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        state = BatteryState(
            V_1=rng.uniform(-0.05, 0.05), V_2=rng.uniform(-0.02, 0.02), S=rng.uniform(0.05, 0.95)
        )
        p_max = max_cell_power(state, CELL)
        power = rng.uniform(-p_max, 0.999 * p_max)
        current = solve_cell_current(power, state, CELL)
        residual = current * terminal_voltage(state, current, CELL) - power
        assert abs(residual) < 1e-9


def test_current_solve_picks_small_root():
    state = BatteryState(S=0.8)
    current = solve_cell_current(10.0, state, CELL)
    v_ocv = open_circuit_voltage(0.8, CELL)
    assert 0.0 < current < v_ocv / (2 * CELL.R_s)
    assert solve_cell_current(0.0, state, CELL) == 0.0
    assert solve_cell_current(-10.0, state, CELL) < 0.0


def test_current_solve_capability():
    state = BatteryState(S=0.5)
    p_max = max_cell_power(state, CELL)
    with pytest.raises(BatteryCapabilityError) as info:
        solve_cell_current(1.5 * p_max, state, CELL)
    assert info.value.max_power == pytest.approx(p_max)
    assert info.value.demanded == pytest.approx(1.5 * p_max)


def test_current_solve_worked_examples():
    # OCV(4/7) = 3.2 + 0.7 * 4/7 = 3.6
    state = BatteryState(S=4.0 / 7.0)
    assert open_circuit_voltage(state.S, CELL) == pytest.approx(3.6)
    current = solve_cell_current(1.0, state, CELL)
    assert current == pytest.approx(0.27800, abs=2e-5)
    assert abs(0.01 * current**2 - 3.6 * current + 1.0) < 1e-9
    with pytest.raises(BatteryCapabilityError) as info:
        solve_cell_current(400.0, state, CELL)
    assert info.value.max_power == pytest.approx(324.0)


def test_saturating_solve_marks_infeasible():
    state = BatteryState(S=np.array([0.5, 0.5]), V_1=np.zeros(2), V_2=np.zeros(2))
    p_max = max_cell_power(state, CELL)
    current, infeasible = solve_cell_current_saturating(np.array([0.5, 2.0]) * p_max, state, CELL)
    assert infeasible.tolist() == [False, True]
    assert current[1] == pytest.approx(open_circuit_voltage(0.5, CELL) / (2 * CELL.R_s))


# =============================================================================
# Zero-current optimality
# =============================================================================


def test_zero_current_uniquely_minimises_heat():
    report = verify_zero_current_optimality(
        horizon=40.0,
        grid=(-2.0, -1.0, 0.0, 1.0, 2.0),
        steps=4,
        state0=BatteryState(V_1=0.0, V_2=0.0, S=0.8),
        params=CELL,
    )
    assert len(report.ranking) == 5**4
    assert report.best.profile == (0.0, 0.0, 0.0, 0.0)
    assert report.best.heat == 0.0
    assert report.zero_is_optimal
    assert report.zero_is_unique
    assert all(not score.feasible for score in report.ranking[len(report.feasible):])


def test_zero_current_grid_needs_zero():
    with pytest.raises(DomainError):
        verify_zero_current_optimality(10.0, (1.0, 2.0), 2, BatteryState(), CELL)
