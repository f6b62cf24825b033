"""Car-following models, battery chain, platoon integrator and analyses."""

from .core import (
    DomainError,
    EvPlatoonError,
    ModelParams,
    ParameterError,
    PlatoonState,
    ScenarioFileError,
    SimulationError,
    VehicleState,
    optimal_velocity,
    optimal_velocity_inverse,
    validate_params,
)
from .models import LeadProfile, ovfl_accel, proposed_accel
from .battery import (
    BatteryParams,
    BatteryState,
    VehicleBodyParams,
    UnitScaling,
    solve_cell_current,
    step_battery,
    verify_zero_current_optimality,
)
from .energy import ComparisonTable, EnergyReport, compare_models, energy_per_unit_mass
from .sim import BatteryBlock, Scenario, SimOptions, Trajectory, integrate_many, integrate_platoon
from .stability import (
    StabilityReport,
    SweepTable,
    equilibrium,
    linearize_at_equilibrium,
    stability_metrics,
    sweep_kappa,
)
from .scenario import BUILTIN_SCENARIOS, dump_scenario, load_scenario, parse_scenario
from .verify import SuiteReport, verify_properties

__all__ = [
    "DomainError",
    "EvPlatoonError",
    "ModelParams",
    "ParameterError",
    "PlatoonState",
    "ScenarioFileError",
    "SimulationError",
    "VehicleState",
    "optimal_velocity",
    "optimal_velocity_inverse",
    "validate_params",
    "LeadProfile",
    "ovfl_accel",
    "proposed_accel",
    # Battery
    "BatteryParams",
    "BatteryState",
    "VehicleBodyParams",
    "UnitScaling",
    "solve_cell_current",
    "step_battery",
    "verify_zero_current_optimality",
    # Energy
    "ComparisonTable",
    "EnergyReport",
    "compare_models",
    "energy_per_unit_mass",
    # Simulation
    "BatteryBlock",
    "Scenario",
    "SimOptions",
    "Trajectory",
    "integrate_many",
    "integrate_platoon",
    # Stability
    "StabilityReport",
    "SweepTable",
    "equilibrium",
    "linearize_at_equilibrium",
    "stability_metrics",
    "sweep_kappa",
    # Scenarios
    "BUILTIN_SCENARIOS",
    "dump_scenario",
    "load_scenario",
    "parse_scenario",
    "SuiteReport",
    "verify_properties",
]
