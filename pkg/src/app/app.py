from __future__ import annotations

from pathlib import Path

from fastmcp import FastMCP

from ..helpers.core import ModelParams, validate_params
from ..helpers.energy import compare_models
from ..helpers.report import (
    format_table,
    plot_phase_portrait,
    plot_time_series,
    write_events,
    write_frame_csv,
    write_table_to_excel,
    write_trajectory_csv,
)
from ..helpers.scenario import BUILTIN_SCENARIOS, load_scenario
from ..helpers.sim import integrate_platoon
from ..helpers.stability import equilibrium, linearize_at_equilibrium, scenario_stability, sweep_kappa
from ..helpers.verify import verify_properties

from . import settings


server = FastMCP(
    name="evplatoon",
    instructions=(
        "Simulate platoons of electric vehicles under the energy-aware car-following model "
        "and the OVFL baseline. "
        f"Scenarios are YAML files or one of the built-in names: {', '.join(BUILTIN_SCENARIOS)}. "
        "Use run_scenario to integrate one scenario, compare_models to tabulate the energy "
        "functional omega per vehicle for both models, and sweep_kappa to trade energy "
        "against convergence. equilibrium_point and linearize describe the fixed point "
        "for a given lead velocity. verify_properties runs the property suite."
    ),
)


def _output_dir(output_dir: str | None, name: str) -> Path:
    directory = Path(output_dir) if output_dir else settings.DEFAULT_OUTPUT / name
    directory.mkdir(parents=True, exist_ok=True)
    return directory


# =============================================================================
# Simulation Tools
# =============================================================================


@server.tool(name="run_scenario")
def run_scenario_tool(
    scenario: str,
    output_dir: str | None = None,
    dt: float | None = None,
    plot: bool = False,
    battery: bool = False,
) -> str:
    """Integrate one scenario and write its trajectory CSV and event log.

    Args:
        scenario: Path to a scenario YAML file or a built-in name (fig1a, fig1b, table1)
        output_dir: Directory for the outputs (default: output/<scenario name>)
        dt: Optional integration step override
        plot: Also write SVG phase portrait and time series
        battery: Attach the default battery block when the scenario has none

    Returns:
        Summary of the run with the output location
    """
    try:
        loaded = load_scenario(scenario)
        if dt is not None:
            loaded = loaded.with_dt(dt)
        if battery and loaded.battery is None:
            loaded = loaded.with_battery()
        directory = _output_dir(output_dir, loaded.name)
        trajectory = integrate_platoon(loaded, raise_on_error=False)
        write_trajectory_csv(trajectory, directory / "trajectory.csv")
        write_events(trajectory, directory / "events.log")

        lines = [f"Scenario '{loaded.name}' ({trajectory.label}), {loaded.n_steps} steps of {loaded.step:.3g}"]
        try:
            report = scenario_stability(loaded, trajectory)
            z_eq = report.equilibrium[0]
            lines.append(
                f"Equilibrium spacing {z_eq:.6g} ({report.classification}), "
                f"converged at t={report.convergence_time:.6g}"
            )
        except Exception as e:
            z_eq = None
            lines.append(f"No equilibrium: {e}")
        if plot:
            plot_phase_portrait(trajectory, z_eq, directory / "phase.svg")
            plot_time_series(trajectory, z_eq, directory / "timeseries.svg")

        omega = trajectory.omega(loaded.eta)
        lines += [f"  vehicle {n}: omega = {omega[n]:.6f}" for n in range(1, trajectory.n_vehicles)]
        lines.append(f"{len(trajectory.events)} events")
        for event in trajectory.events[:10]:
            lines.append(f"  {event.to_line()}")
        if trajectory.error is not None:
            lines.append(f"Run failed: {trajectory.error}")
        lines.append(f"Outputs written to {directory}")
        return "\n".join(lines)
    except Exception as e:
        return f"Error running scenario: {str(e)}"


@server.tool(name="compare_models")
def compare_models_tool(
    scenario: str = "table1",
    weighting: str = "leaky",
    eta: float | None = None,
    output_path: str | None = None,
    jobs: int = 1,
) -> str:
    """Run the proposed model and OVFL on one scenario and compare omega per vehicle.

    Args:
        scenario: Path to a scenario YAML file or a built-in name (default: table1)
        weighting: 'leaky' for electric drive with regeneration, 'relu' for no regeneration
        eta: Regeneration efficiency override (default: the scenario's eta)
        output_path: Optional path for an .xlsx or .csv copy of the table
        jobs: Parallel workers

    Returns:
        The comparison table as text
    """
    try:
        loaded = load_scenario(scenario)
        table = compare_models(loaded, eta=eta, weighting=weighting, n_jobs=jobs)
        frame = table.to_frame()
        if output_path:
            if output_path.endswith(".xlsx"):
                write_table_to_excel(
                    frame,
                    output_path,
                    title=f"Energy comparison: {loaded.name}",
                    info={"eta": table.eta, "weighting": weighting},
                    highlight="pct_change",
                )
            else:
                write_frame_csv(frame, output_path)
        header = f"omega per vehicle for '{loaded.name}' (eta={table.eta}, {weighting}, baseline {table.baseline})"
        return header + "\n" + format_table(frame)
    except Exception as e:
        return f"Error comparing models: {str(e)}"


@server.tool(name="sweep_kappa")
def sweep_kappa_tool(
    kappas: list[float],
    scenario: str = "table1",
    output_path: str | None = None,
    jobs: int = 1,
) -> str:
    """Run the proposed model for each kappa and tabulate omega, convergence time and stall.

    Args:
        kappas: Kappa values to run
        scenario: Path to a scenario YAML file or a built-in name (default: table1)
        output_path: Optional path for an .xlsx or .csv copy of the table
        jobs: Parallel workers

    Returns:
        The sweep table as text
    """
    try:
        loaded = load_scenario(scenario)
        frame = sweep_kappa(loaded, kappas, n_jobs=jobs).to_frame()
        if output_path:
            if output_path.endswith(".xlsx"):
                write_table_to_excel(frame, output_path, title=f"Kappa sweep: {loaded.name}")
            else:
                write_frame_csv(frame, output_path)
        return format_table(frame)
    except Exception as e:
        return f"Error sweeping kappa: {str(e)}"


@server.tool(name="verify_properties")
def verify_properties_tool(seed: int = 0, trials: int = 100, jobs: int = 1) -> str:
    """Run the property suite: zero-current optimality, energy ordering, Jacobian check, orderings."""
    try:
        report = verify_properties(seed=seed, trials=trials, n_jobs=jobs)
        lines = [f"seed={seed}, trials={trials}: {'all properties pass' if report.passed else 'FAILURES'}"]
        for result in report.results:
            lines.append(f"[{'pass' if result.passed else 'FAIL'}] {result.name}: {result.detail}")
            if result.counterexample:
                lines.append(f"    counterexample: {result.counterexample}")
        return "\n".join(lines)
    except Exception as e:
        return f"Error running property suite: {str(e)}"


# =============================================================================
# Analysis Tools
# =============================================================================


@server.tool(name="equilibrium_point")
def equilibrium_point_tool(v_bar: float) -> str:
    """Equilibrium (spacing, relative velocity) behind a lead cruising at v_bar."""
    try:
        z_eq, y_eq = equilibrium(v_bar)
        return f"Equilibrium for v_bar={v_bar}: spacing={z_eq:.9g}, relative velocity={y_eq:g}"
    except Exception as e:
        return f"Error: {str(e)}"


@server.tool(name="linearize")
def linearize_tool(
    v_bar: float,
    alpha: float = 2.0,
    beta: float = 3.0,
    kappa: float = 0.03,
    epsilon: float = 1e-6,
) -> str:
    """Jacobian, eigenvalues and fixed-point type at the equilibrium for v_bar.

    Args:
        v_bar: Lead cruising velocity
        alpha: Optimal-velocity gain
        beta: Relative-velocity gain, must satisfy beta > alpha
        kappa: Energy-control gain
        epsilon: Smoothing constant of the control term

    Returns:
        Jacobian entries, eigenvalues and classification
    """
    try:
        params = validate_params(ModelParams(alpha=alpha, beta=beta, kappa=kappa, epsilon=epsilon))
        report = linearize_at_equilibrium(params, v_bar)
        J = report.jacobian
        eigenvalues = ", ".join(f"{ev.real:.6g}{ev.imag:+.6g}j" for ev in report.eigenvalues)
        return (
            f"Equilibrium spacing {report.equilibrium[0]:.9g}\n"
            f"J = [[{J[0, 0]:.6g}, {J[0, 1]:.6g}], [{J[1, 0]:.6g}, {J[1, 1]:.6g}]]\n"
            f"eigenvalues: {eigenvalues}\n"
            f"classification: {report.classification}"
        )
    except Exception as e:
        return f"Error: {str(e)}"


# =============================================================================
# Prompts
# =============================================================================


@server.prompt(name="reproduce_table1")
def reproduce_table1_prompt(output_path: str | None = None):
    """Prompt that asks the model to reproduce the platoon energy comparison and explain it."""
    output = output_path or str(settings.DEFAULT_OUTPUT / "table1" / "comparison.xlsx")
    return [
        {
            "role": "system",
            "content": (
                "You analyse car-following simulations of electric vehicle platoons. "
                "Energy is measured by omega, the integral of velocity times weighted "
                "acceleration, where braking is credited back at the regeneration efficiency eta. "
                "Lower omega means less energy drawn per unit mass."
            ),
        },
        {
            "role": "user",
            "content": (
                "Reproduce the five-vehicle platoon comparison:\n"
                f"1. Call `compare_models` with scenario='table1' and output_path='{output}'\n"
                "2. Report omega for both models and the percent change per vehicle\n"
                "3. Check that omega decreases along the platoon and say which vehicles "
                "save energy under the energy-aware model (the rear vehicles may not)\n"
                "4. Call `sweep_kappa` with kappas [0, 0.03, 0.1, 1] on the same scenario and "
                "describe how energy and convergence time trade off"
            ),
        },
    ]
