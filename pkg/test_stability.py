"""Tests for equilibria, linearisation, trajectory metrics and the kappa sweep."""

import math

import numpy as np
import pytest
from scipy.optimize import bisect

from src.helpers.core import TANH2, V_INF, V_SUP, DomainError, ModelParams, PlatoonState, VehicleState, optimal_velocity
from src.helpers.models import LeadProfile
from src.helpers.sim import Scenario, Trajectory, integrate_platoon
from src.helpers.stability import (
    CENTER,
    SADDLE,
    STABLE_DEGENERATE,
    STABLE_FOCUS,
    STABLE_NODE,
    STABLE_STAR,
    UNSTABLE_NODE,
    classify_fixed_point,
    convergence_time,
    equilibrium,
    finite_difference_jacobian,
    linearize_at_equilibrium,
    relative_field,
    stability_metrics,
    stalled_vehicles,
    sweep_kappa,
)

PARAMS = ModelParams(alpha=2.0, beta=3.0, kappa=0.03)


def test_equilibrium_examples():
    assert equilibrium(TANH2) == pytest.approx((2.0, 0.0))
    z, y = equilibrium(0.0)
    assert z == pytest.approx(0.0, abs=1e-12)
    assert y == 0.0


@pytest.mark.parametrize("v_bar", [0.3, 1.0, 1.5, 1.9])
def test_equilibrium_against_bisection(v_bar):
    oracle = bisect(lambda z: optimal_velocity(z) - v_bar, -5.0, 20.0, xtol=1e-14)
    assert equilibrium(v_bar)[0] == pytest.approx(oracle, abs=1e-10)


@pytest.mark.parametrize("v_bar", [V_SUP, V_INF, 3.0])
def test_equilibrium_out_of_range(v_bar):
    with pytest.raises(DomainError):
        equilibrium(v_bar)


def test_linearisation_at_z_two():
    report = linearize_at_equilibrium(PARAMS, TANH2)
    np.testing.assert_allclose(report.jacobian, [[0.0, 1.0], [-2.0, -2.75]])
    trace = np.trace(report.jacobian)
    det = np.linalg.det(report.jacobian)
    assert trace == pytest.approx(-2.75)
    assert det == pytest.approx(2.0)
    assert report.locally_stable
    assert report.classification == STABLE_FOCUS
    np.testing.assert_allclose(np.sort_complex(np.linalg.eigvals(report.jacobian)), report.eigenvalues)


def test_linearisation_independent_of_kappa():
    for v_bar in (0.4, TANH2, 1.7):
        with_kappa = linearize_at_equilibrium(PARAMS, v_bar).jacobian
        without = linearize_at_equilibrium(PARAMS.with_kappa(0.0), v_bar).jacobian
        assert np.array_equal(with_kappa, without)


@pytest.mark.parametrize("v_bar", [0.5, TANH2, 1.7])
@pytest.mark.parametrize("kind", ["proposed", "ovfl"])
def test_jacobian_matches_finite_differences(v_bar, kind):
    analytic = linearize_at_equilibrium(PARAMS, v_bar).jacobian
    numeric = finite_difference_jacobian(PARAMS, v_bar, kind)
    np.testing.assert_allclose(numeric, analytic, rtol=1e-6, atol=1e-9)


def test_degenerate_equilibrium():
    with pytest.raises(DomainError, match="degenerate"):
        linearize_at_equilibrium(PARAMS, 0.0)


def test_relative_field_at_equilibrium_vanishes():
    dz, dy = relative_field(2.0, 0.0, PARAMS, TANH2)
    assert dz == 0.0
    assert dy == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize(
    "jacobian, expected",
    [
        ([[0.0, 1.0], [1.0, 0.0]], SADDLE),
        ([[0.0, 1.0], [-1.0, 0.0]], CENTER),
        ([[0.0, 1.0], [-1.0, -3.0]], STABLE_NODE),
        ([[0.0, 1.0], [-1.0, 3.0]], UNSTABLE_NODE),
        ([[-1.0, 0.0], [0.0, -1.0]], STABLE_STAR),
        ([[0.0, 1.0], [-1.0, -2.0]], STABLE_DEGENERATE),
    ],
)
def test_classification(jacobian, expected):
    assert classify_fixed_point(np.array(jacobian)) == expected


# =============================================================================
# Trajectory metrics
# =============================================================================


def _synthetic(times, spacing, relative):
    """Trajectory of one follower with the given spacing and relative-velocity series."""
    n = len(times)
    lead_v = np.full(n, TANH2)
    positions = np.column_stack([spacing, np.zeros(n)])
    velocities = np.column_stack([lead_v, lead_v - relative])
    return Trajectory(
        label="ovfl", kinds=("ovfl",), times=np.asarray(times, dtype=float),
        positions=positions, velocities=velocities, accelerations=np.zeros((n, 2)),
        energy_positive=np.zeros(2), energy_negative=np.zeros(2), t0=0.0, end_time=float(times[-1]),
    )


def test_convergence_time_on_synthetic_decay():
    t = np.linspace(0.0, 20.0, 2001)
    trajectory = _synthetic(t, 2.0 + np.exp(-t), np.zeros_like(t))
    settled = convergence_time(trajectory, 2.0, tol=1e-3)
    assert settled == pytest.approx(-math.log(1e-3), abs=0.011)


def test_convergence_time_infinite_when_unsettled():
    t = np.linspace(0.0, 10.0, 101)
    trajectory = _synthetic(t, 2.0 + 0.1 * np.sin(t), np.zeros_like(t))
    assert convergence_time(trajectory, 2.0) == math.inf


def test_metrics_at_fixed_point_are_zero():
    scenario = Scenario(
        params=PARAMS,
        lead=LeadProfile.constant(0.0),
        initial=PlatoonState(
            0.0, VehicleState(4.0, TANH2), (VehicleState(2.0, TANH2), VehicleState(0.0, TANH2))
        ),
        tf=20.0,
        dt=0.01,
    )
    report = stability_metrics(integrate_platoon(scenario), TANH2, params=PARAMS)
    np.testing.assert_allclose(report.peak_spacing_deviation, 0.0, atol=1e-9)
    np.testing.assert_allclose(report.terminal_deviation, 0.0, atol=1e-9)
    assert report.convergence_time == 0.0
    assert report.classification == STABLE_FOCUS


def test_metrics_attenuation_ratios():
    t = np.linspace(0.0, 10.0, 11)
    lead_v = np.full(t.size, TANH2)
    # three followers with peak spacing deviations 0.4, 0.2, 0.1
    offsets = np.array([0.4, 0.2, 0.1])
    gaps = 2.0 + np.outer(np.where(t == 3.0, 1.0, 0.0), offsets)
    positions = np.column_stack([np.zeros(t.size), -np.cumsum(gaps, axis=1)])
    trajectory = Trajectory(
        label="ovfl", kinds=("ovfl",) * 3, times=t, positions=positions,
        velocities=np.column_stack([lead_v] * 4), accelerations=np.zeros((t.size, 4)),
        energy_positive=np.zeros(4), energy_negative=np.zeros(4), t0=0.0, end_time=10.0,
    )
    report = stability_metrics(trajectory, TANH2)
    np.testing.assert_allclose(report.peak_spacing_deviation, offsets)
    np.testing.assert_allclose(report.attenuation_ratios, [0.5, 0.5])
    assert report.string_stable
    frame = report.to_frame()
    assert list(frame["vehicle"]) == [1, 2, 3]
    assert math.isnan(frame["attenuation_ratio"][0])


def test_metrics_window_after_t_star():
    t = np.linspace(0.0, 10.0, 11)
    spacing = np.where(t < 5.0, 3.0, 2.0)
    report = stability_metrics(_synthetic(t, spacing, np.zeros_like(t)), TANH2, t_star=5.0)
    assert report.peak_spacing_deviation == pytest.approx([0.0])


def test_stalled_vehicle_detection():
    t = np.linspace(0.0, 30.0, 301)
    relative = np.where((t > 5.0) & (t < 20.0), 0.9 * TANH2, 0.0)
    trajectory = _synthetic(t, np.full_like(t, 2.0), relative)
    assert stalled_vehicles(trajectory) == [1]
    assert stalled_vehicles(trajectory, window=20.0) == []


# =============================================================================
# Kappa sweep
# =============================================================================


def _sweep_base():
    return Scenario(
        params=PARAMS,
        lead=LeadProfile.table([(0.0, -0.05), (10.0, 0.0)]),
        initial=PlatoonState(0.0, VehicleState(0.0, 1.5), (VehicleState(-3.0, 1.5), VehicleState(-6.0, 1.5))),
        tf=60.0,
        dt=0.01,
        name="sweep",
    )


def test_sweep_kappa_zero_matches_ovfl():
    base = _sweep_base()
    table = sweep_kappa(base, [0.0, 0.03])
    frame = table.to_frame()
    assert list(frame.columns) == ["kappa", "vehicle", "omega", "convergence_time", "stall", "error"]
    assert frame["kappa"].tolist() == [0.0, 0.0, 0.03, 0.03]
    ovfl = integrate_platoon(base.with_model("ovfl")).omega()
    assert table.omega(0.0) == pytest.approx({1: ovfl[1], 2: ovfl[2]}, rel=1e-12)


def test_sweep_large_kappa_stalls():
    table = sweep_kappa(_sweep_base(), [50.0])
    assert any(row.stall for row in table.rows)
    assert all(not row.error for row in table.rows)


def test_sweep_rejects_empty_and_negative():
    with pytest.raises(DomainError):
        sweep_kappa(_sweep_base(), [])
    with pytest.raises(DomainError):
        sweep_kappa(_sweep_base(), [0.03, -1.0])
