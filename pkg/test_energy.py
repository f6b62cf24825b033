"""Tests for the energy functional and model comparison tables."""

import math

import numpy as np
import pytest

from src.helpers.core import DomainError, ModelParams, PlatoonState, VehicleState
from src.helpers.energy import (
    EnergyReport,
    combine_split_energy,
    comparison_from_reports,
    energy_per_unit_mass,
    g_leaky,
    g_relu,
    instantaneous_energy,
    percent_change,
    weight,
)
from src.helpers.models import LeadProfile
from src.helpers.sim import Scenario, integrate_many


def test_leaky_weighting_exact_values():
    assert g_leaky(1.0, 0.8) == 1.25
    assert g_leaky(-1.0, 0.8) == -0.8
    assert g_leaky(0.0, 0.8) == 0.0


def test_relu_weighting():
    assert g_relu(-3.0) == 0.0
    assert g_relu(2.0) == 2.0
    np.testing.assert_array_equal(weight(np.array([-1.0, 1.0]), 0.8, "relu"), [0.0, 1.0])


@pytest.mark.parametrize("eta", [0.0, -0.5, 1.2])
def test_eta_out_of_range(eta):
    with pytest.raises(DomainError):
        g_leaky(1.0, eta)


def test_unknown_weighting():
    with pytest.raises(DomainError):
        weight(1.0, 0.8, "quadratic")


def test_instantaneous_energy_rejects_negative_velocity():
    with pytest.raises(DomainError):
        instantaneous_energy(-0.1, 1.0, 0.8)


def test_constant_velocity_costs_nothing():
    t = np.linspace(0, 10, 101)
    assert energy_per_unit_mass(t, np.full_like(t, 1.5), np.zeros_like(t), 0.8) == 0.0


def test_uniform_acceleration_closed_form():
    # v = a t from rest: omega = (1/eta) a^2 T^2 / 2
    a, T, eta = 0.3, 4.0, 0.8
    t = np.linspace(0, T, 4001)
    omega = energy_per_unit_mass(t, a * t, np.full_like(t, a), eta)
    assert omega == pytest.approx(a * a * T * T / (2 * eta), rel=1e-12)


def test_regeneration_credit():
    # decelerating from 1 to 0 at rate 0.5 returns eta * 1/2
    t = np.linspace(0, 2, 2001)
    omega = energy_per_unit_mass(t, 1.0 - 0.5 * t, np.full_like(t, -0.5), 0.8)
    assert omega == pytest.approx(-0.8 * 0.5, rel=1e-12)
    relu = energy_per_unit_mass(t, 1.0 - 0.5 * t, np.full_like(t, -0.5), 0.8, "relu")
    assert relu == 0.0


def test_per_vehicle_columns():
    t = np.linspace(0, 1, 11)
    v = np.column_stack([t, 2 * t])
    a = np.column_stack([np.ones_like(t), 2 * np.ones_like(t)])
    omega = energy_per_unit_mass(t, v, a, 1.0)
    np.testing.assert_allclose(omega, [0.5, 2.0])


def test_needs_two_sorted_samples():
    with pytest.raises(DomainError):
        energy_per_unit_mass([0.0], [1.0], [0.0])
    with pytest.raises(DomainError):
        energy_per_unit_mass([1.0, 0.0], [1.0, 1.0], [0.0, 0.0])


def test_split_energy_matches_direct_quadrature():
    rng = np.random.default_rng(1)
    t = np.linspace(0, 5, 501)
    v = 1.0 + 0.3 * np.sin(t)
    a = rng.normal(size=t.size)
    positive = np.trapezoid(v * np.maximum(a, 0), t)
    negative = np.trapezoid(v * np.minimum(a, 0), t)
    for weighting in ("leaky", "relu"):
        direct = energy_per_unit_mass(t, v, a, 0.7, weighting)
        assert combine_split_energy(positive, negative, 0.7, weighting) == pytest.approx(direct, rel=1e-12)


def test_percent_change():
    assert percent_change(1.827, 1.856) == pytest.approx(-1.5625, abs=1e-3)
    assert percent_change(0.0, 0.0) == 0.0
    assert math.isnan(percent_change(1.0, 0.0))


def _report(model, values):
    return EnergyReport(
        model=model, eta=0.8, weighting="leaky", window=(0.0, 70.0),
        per_vehicle=list(enumerate(values, start=1)),
    )


def test_comparison_table_layout():
    reports = {"proposed": _report("proposed", [1.0, 0.5]), "ovfl": _report("ovfl", [1.1, 0.5])}
    table = comparison_from_reports(reports, "ovfl", 0.8, "leaky")
    frame = table.to_frame()
    assert list(frame.columns) == ["vehicle", "model", "omega", "pct_change"]
    assert frame["vehicle"].tolist() == [1, 1, 2, 2]
    assert table.pct_change("proposed", 1) == pytest.approx(-100 / 11)
    assert table.pct_change("proposed", 2) == 0.0
    assert table.pct_change("ovfl", 1) == 0.0
    assert table.omega("ovfl", 1) == 1.1


def test_energy_report_window_must_be_open():
    with pytest.raises(DomainError):
        EnergyReport(model="ovfl", eta=0.8, weighting="leaky", window=(5.0, 5.0))


@pytest.mark.parametrize("eta", [0.5, 0.8, 1.0])
def test_leaky_slope_ratio_at_zero(eta):
    h = 1e-6
    right = (g_leaky(h, eta) - g_leaky(0.0, eta)) / h
    left = (g_leaky(0.0, eta) - g_leaky(-h, eta)) / h
    assert g_leaky(0.0, eta) == 0.0
    assert abs(g_leaky(h, eta)) <= 1e-5 and abs(g_leaky(-h, eta)) <= 1e-5
    assert right / left == pytest.approx(1.0 / eta**2, rel=1e-9)


def test_quadrature_converges_at_second_order():
    # eta = 1 makes g linear, so the integrand v * a is smooth and
    # omega tends to the kinetic-energy change (v_T^2 - v_0^2) / 2
    base = Scenario(
        params=ModelParams(alpha=2.0, beta=3.0, kappa=0.03),
        lead=LeadProfile.constant(0.0),
        initial=PlatoonState(time=0.0, lead=VehicleState(10.0, 1.0), followers=(VehicleState(0.0, 0.5),)),
        tf=20.0,
        dt=0.1,
        kinds=("ovfl",),
        eta=1.0,
    )
    runs = integrate_many([base.with_dt(dt) for dt in (0.1, 0.05, 0.025)])
    omega = [run.omega(1.0)[1] for run in runs]
    first, second = abs(omega[0] - omega[1]), abs(omega[1] - omega[2])
    assert second > 0.0
    assert 3.5 < first / second < 4.5

    exact = 0.5 * (runs[2].velocities[-1, 1] ** 2 - 0.5**2)
    assert abs(omega[2] - exact) < abs(omega[0] - exact)
