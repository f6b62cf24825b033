"""Tests for the batched RK4 platoon integrator."""

import numpy as np
import pytest

from src.helpers.battery import BatteryParams
from src.helpers.core import TANH2, DomainError, LeadProfileError, ModelParams, PlatoonState, VehicleState
from src.helpers.models import LeadProfile
from src.helpers.sim import (
    BATTERY_CHANNELS,
    BatteryBlock,
    Scenario,
    SimOptions,
    integrate_many,
    integrate_platoon,
    state_at,
)

PARAMS = ModelParams(alpha=2.0, beta=3.0, kappa=0.03)


def _scenario(followers, lead=(10.0, 1.0), profile=None, tf=20.0, dt=0.01, **kwargs):
    return Scenario(
        params=kwargs.pop("params", PARAMS),
        lead=profile or LeadProfile.constant(0.0),
        initial=PlatoonState(
            time=0.0,
            lead=VehicleState(*lead),
            followers=tuple(VehicleState(x, v) for x, v in followers),
        ),
        tf=tf,
        dt=dt,
        **kwargs,
    )


def test_equilibrium_is_a_fixed_point():
    scenario = _scenario([(0.0, TANH2)], lead=(2.0, TANH2), tf=50.0)
    trajectory = integrate_platoon(scenario)
    np.testing.assert_allclose(trajectory.spacing(), 2.0, atol=1e-9)
    np.testing.assert_allclose(trajectory.velocities, TANH2, atol=1e-9)
    np.testing.assert_allclose(trajectory.accelerations, 0.0, atol=1e-9)
    assert trajectory.events == []


def test_time_axis_covers_horizon():
    scenario = _scenario([(0.0, 0.5)], tf=1.0, dt=0.3)
    assert scenario.n_steps == 4
    assert scenario.step == pytest.approx(0.25)
    trajectory = integrate_platoon(scenario)
    np.testing.assert_allclose(trajectory.times, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert trajectory.positions.shape == (5, 2)


def test_constant_lead_acceleration_is_exact():
    scenario = _scenario([(0.0, 0.5)], lead=(10.0, 0.5), profile=LeadProfile.constant(0.05), tf=10.0)
    trajectory = integrate_platoon(scenario)
    t = trajectory.times
    np.testing.assert_allclose(trajectory.velocities[:, 0], 0.5 + 0.05 * t, atol=1e-12)
    np.testing.assert_allclose(trajectory.positions[:, 0], 10.0 + 0.5 * t + 0.025 * t * t, atol=1e-10)


def test_kappa_zero_matches_ovfl():
    base = _scenario([(0.0, 0.5), (-4.0, 1.2)], tf=30.0)
    proposed = integrate_platoon(base.with_kappa(0.0))
    ovfl = integrate_platoon(base.with_model("ovfl"))
    np.testing.assert_allclose(proposed.positions, ovfl.positions, rtol=0, atol=1e-13)
    np.testing.assert_allclose(proposed.omega(), ovfl.omega(), rtol=1e-13)


def test_mixed_kinds_label():
    scenario = _scenario([(0.0, 0.5), (-4.0, 1.2)], kinds=("proposed", "ovfl"))
    assert scenario.label == "mixed"
    assert integrate_platoon(scenario).kinds == ("proposed", "ovfl")


def test_lead_out_of_range_freezes_run():
    scenario = _scenario([(0.0, 1.0)], lead=(10.0, 1.0), profile=LeadProfile.constant(-1.0), tf=5.0)
    trajectory = integrate_platoon(scenario, raise_on_error=False)
    assert trajectory.failed
    assert isinstance(trajectory.error, LeadProfileError)
    assert trajectory.end_time == pytest.approx(1.01)
    assert trajectory.times[-1] == pytest.approx(1.0)
    assert trajectory.events[-1].kind == "lead_out_of_range"
    assert trajectory.events[-1].time == trajectory.end_time
    assert trajectory.events[-1].severity == "error"
    with pytest.raises(LeadProfileError):
        integrate_platoon(scenario)


def test_failed_run_does_not_disturb_its_batch():
    healthy = _scenario([(0.0, 1.0)], lead=(10.0, 1.0), tf=5.0)
    doomed = _scenario([(0.0, 1.0)], lead=(10.0, 1.0), profile=LeadProfile.constant(-1.0), tf=5.0)
    together = integrate_many([doomed, healthy])
    alone = integrate_platoon(healthy)
    assert together[0].failed and not together[1].failed
    np.testing.assert_allclose(together[1].positions, alone.positions, rtol=1e-12)


def test_results_independent_of_jobs():
    scenarios = [
        _scenario([(0.0, v), (-3.0, v)], tf=10.0, name=f"run-{i}")
        for i, v in enumerate(np.linspace(0.2, 1.8, 6))
    ]
    serial = integrate_many(scenarios, n_jobs=1, chunk_size=2)
    parallel = integrate_many(scenarios, n_jobs=2, chunk_size=2)
    for a, b in zip(serial, parallel):
        np.testing.assert_array_equal(a.positions, b.positions)
        np.testing.assert_array_equal(a.omega(), b.omega())


def test_output_order_matches_input_with_mixed_batches():
    short = _scenario([(0.0, 0.5)], tf=5.0, name="short")
    long = _scenario([(0.0, 0.5)], tf=8.0, name="long")
    pair = _scenario([(0.0, 0.5), (-3.0, 0.5)], tf=5.0, name="pair")
    results = integrate_many([short, long, pair, short])
    assert [r.times[-1] for r in results] == pytest.approx([5.0, 8.0, 5.0, 5.0])
    assert [r.n_vehicles for r in results] == [2, 2, 3, 2]


def test_record_stride_keeps_energy():
    base = _scenario([(0.0, 0.5), (-3.0, 1.5)], profile=LeadProfile.table([(0.0, 0.05), (5.0, 0.0)]))
    full = integrate_platoon(base)
    sparse = integrate_platoon(base.with_options(record_every=7))
    assert len(sparse.times) < len(full.times)
    assert sparse.times[-1] == pytest.approx(full.times[-1])
    np.testing.assert_allclose(sparse.omega(), full.omega(), rtol=1e-12)
    np.testing.assert_allclose(sparse.positions[-1], full.positions[-1], rtol=1e-12)


def test_online_energy_matches_quadrature_of_samples():
    scenario = _scenario([(0.0, 0.5)], profile=LeadProfile.table([(0.0, 0.05), (5.0, 0.0)]), dt=1e-3)
    trajectory = integrate_platoon(scenario)
    v, a = trajectory.velocities, trajectory.accelerations
    direct = np.trapezoid(v * np.where(a >= 0, a / 0.8, 0.8 * a), trajectory.times, axis=0)
    np.testing.assert_allclose(trajectory.omega(0.8), direct, rtol=1e-9, atol=1e-12)


def test_state_at():
    trajectory = integrate_platoon(_scenario([(0.0, 0.5)], tf=2.0))
    state = state_at(trajectory)
    assert state.time == pytest.approx(2.0)
    assert state.lead.position == pytest.approx(12.0)


def test_trajectory_frame():
    trajectory = integrate_platoon(_scenario([(0.0, 0.5)], tf=1.0, dt=0.5))
    frame = trajectory.to_frame()
    assert list(frame.columns) == ["t", "vehicle", "x", "v", "a"]
    assert len(frame) == 3 * 2


def test_battery_channels_recorded():
    scenario = _scenario([(0.0, 0.5)], tf=10.0, dt=0.01).with_battery(BatteryBlock())
    trajectory = integrate_platoon(scenario)
    assert set(trajectory.battery) == set(BATTERY_CHANNELS)
    for values in trajectory.battery.values():
        assert values.shape == trajectory.positions.shape
        assert np.all(np.isfinite(values))
    soc = trajectory.battery["S"]
    assert np.all(soc[-1] < soc[0])
    assert np.all(trajectory.battery["Q"] >= 0.0)
    assert list(trajectory.to_frame().columns)[-6:] == list(BATTERY_CHANNELS)


def test_battery_capability_is_logged():
    tiny = BatteryParams(N_s=1, N_p=1)
    scenario = _scenario([(0.0, 0.5)], tf=5.0).with_battery(BatteryBlock(cell=tiny))
    trajectory = integrate_platoon(scenario)
    assert trajectory.events_of("battery_capability")
    assert not trajectory.failed


@pytest.mark.parametrize(
    "changes",
    [
        {"dt": 0.0},
        {"dt": float("nan")},
        {"tf": 0.0},
        {"kinds": ("proposed", "ovfl")},
        {"kinds": ("idm",)},
        {"eta": 0.0},
    ],
)
def test_scenario_validation(changes):
    with pytest.raises(DomainError):
        _scenario([(0.0, 0.5)], **changes)


def test_initial_velocity_above_vmax():
    with pytest.raises(DomainError, match="initial velocity of vehicle 1"):
        _scenario([(0.0, 2.5)])


def test_record_every_validated():
    with pytest.raises(DomainError):
        SimOptions(record_every=0)
    with pytest.raises(DomainError):
        SimOptions(negative_velocity="ignore")
