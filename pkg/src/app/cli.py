"""Command-line interface: run, compare, sweep, verify and serve."""

import logging
import math
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Annotated, Optional

import typer
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from ..helpers.core import DomainError, EvPlatoonError, ParameterError, ScenarioFileError
from ..helpers.energy import WEIGHTINGS, compare_models
from ..helpers.report import (
    battery_summary,
    plot_lead_kinematics,
    plot_model_overlay,
    plot_phase_portrait,
    plot_time_series,
    write_events,
    write_frame_csv,
    write_metadata,
    write_table_to_excel,
    write_trajectory_csv,
)
from ..helpers.scenario import BUILTIN_SCENARIOS, TABLE1_ASSUMPTION, dump_scenario, load_scenario
from ..helpers.sim import Scenario, integrate_platoon
from ..helpers.stability import scenario_stability, sweep_kappa
from ..helpers.verify import verify_properties

from .log import make_console, setup_logging
from .settings import Settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SIMULATION = 1
EXIT_INPUT = 2
EXIT_VERIFY = 3

VELOCITY_POLICY = "follower velocities are reported, not clamped, when they leave [0, v_max]"

app = typer.Typer(
    name="evplatoon",
    help="Energy-aware car-following simulator for electric vehicle platoons.",
    no_args_is_help=True,
    add_completion=False,
    pretty_exceptions_enable=False,
)


@dataclass
class CliState:
    settings: Settings
    console: Console
    err_console: Console


ScenarioArg = Annotated[
    str,
    typer.Argument(help=f"Scenario file, or a built-in name ({', '.join(BUILTIN_SCENARIOS)})"),
]
OutOption = Annotated[Optional[Path], typer.Option("--out", "-o", help="Output directory")]
DtOption = Annotated[Optional[float], typer.Option("--dt", help="Override the integration step")]
JobsOption = Annotated[Optional[int], typer.Option("--jobs", "-j", help="Parallel workers for independent runs")]
DumpOption = Annotated[
    Optional[Path], typer.Option("--dump-scenario", help="Write the effective scenario as YAML")
]


@app.callback()
def main(
    ctx: typer.Context,
    no_color: Annotated[bool, typer.Option("--no-color", help="Disable ANSI styling")] = False,
    log_level: Annotated[Optional[str], typer.Option("--log-level", help="DEBUG, INFO, WARNING, ...")] = None,
    log_format: Annotated[Optional[str], typer.Option("--log-format", help="rich or json")] = None,
) -> None:
    settings = Settings()
    updates = {}
    if no_color:
        updates["no_color"] = True
    if log_level:
        updates["log_level"] = log_level.upper()
    if log_format:
        if log_format not in ("rich", "json"):
            raise typer.BadParameter("must be 'rich' or 'json'", param_hint="--log-format")
        updates["log_format"] = log_format
    settings = settings.model_copy(update=updates)
    setup_logging(settings.log_level, settings.log_format, settings.no_color)
    ctx.obj = CliState(
        settings=settings,
        console=make_console(settings.no_color),
        err_console=make_console(settings.no_color, stderr=True),
    )


# =============================================================================
# Helpers
# =============================================================================


def _exit_code(error: EvPlatoonError) -> int:
    if isinstance(error, (ScenarioFileError, ParameterError, DomainError)):
        return EXIT_INPUT
    return EXIT_SIMULATION


@contextmanager
def _guard(state: CliState):
    """Map library errors to exit codes."""
    try:
        yield
    except EvPlatoonError as err:
        code = _exit_code(err)
        kind = "input error" if code == EXIT_INPUT else "simulation error"
        state.err_console.print(f"[bold red]{kind}:[/bold red] {escape(str(err))}")
        raise typer.Exit(code) from err


def _prepare(source: str, dt: float | None = None, battery: bool = False) -> Scenario:
    scenario = load_scenario(source)
    if dt is not None:
        scenario = scenario.with_dt(dt)
    if battery and scenario.battery is None:
        scenario = scenario.with_battery()
    return scenario


def _output_dir(state: CliState, out: Path | None, scenario: Scenario) -> Path:
    directory = out if out is not None else state.settings.output_dir / scenario.name
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _dump(scenario: Scenario, path: Path | None, state: CliState) -> None:
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_scenario(scenario), encoding="utf-8")
    state.console.print(f"scenario written to {escape(str(path))}")


def _fmt(value: float, spec: str = ".6g") -> str:
    if isinstance(value, float) and math.isnan(value):
        return "-"
    return format(value, spec)


def _scenario_metadata(scenario: Scenario) -> dict:
    return {
        "scenario": scenario.name,
        "kinds": list(scenario.kinds),
        "params": asdict(scenario.params),
        "t0": scenario.t0,
        "tf": scenario.tf,
        "dt": scenario.step,
        "steps": scenario.n_steps,
        "record_every": scenario.options.record_every,
        "negative_velocity": scenario.options.negative_velocity,
        "eta": scenario.eta,
        "battery": scenario.battery is not None,
        "velocity_policy": VELOCITY_POLICY,
    }


# =============================================================================
# Commands
# =============================================================================


@app.command()
def run(
    ctx: typer.Context,
    scenario: ScenarioArg,
    out: OutOption = None,
    dt: DtOption = None,
    plot: Annotated[bool, typer.Option("--plot", help="Write SVG phase portrait and time series")] = False,
    battery: Annotated[bool, typer.Option("--battery", help="Attach the default battery block")] = False,
    dump_scenario_path: DumpOption = None,
) -> None:
    """Integrate one scenario and write its trajectory, events and figures."""
    state: CliState = ctx.obj
    with _guard(state):
        loaded = _prepare(scenario, dt, battery)
        _dump(loaded, dump_scenario_path, state)
        directory = _output_dir(state, out, loaded)
        trajectory = integrate_platoon(loaded, raise_on_error=False)

        write_trajectory_csv(trajectory, directory / "trajectory.csv")
        write_events(trajectory, directory / "events.log")
        outputs = ["trajectory.csv", "events.log"]
        if loaded.battery is not None:
            write_frame_csv(battery_summary(trajectory, loaded.battery.scaling), directory / "battery.csv")
            outputs.append("battery.csv")

        try:
            stability = scenario_stability(loaded, trajectory)
        except DomainError as err:
            logger.warning("no equilibrium to measure against: %s", err)
            stability = None
        z_eq = stability.equilibrium[0] if stability is not None else None

        if plot:
            plot_phase_portrait(trajectory, z_eq, directory / "phase.svg")
            plot_time_series(trajectory, z_eq, directory / "timeseries.svg")
            plot_lead_kinematics(trajectory, directory / "lead.svg")
            outputs += ["phase.svg", "timeseries.svg", "lead.svg"]

        metadata = _scenario_metadata(loaded)
        metadata.update(
            {
                "end_time": trajectory.end_time,
                "events": len(trajectory.events),
                "error": str(trajectory.error) if trajectory.error else None,
                "outputs": outputs,
            }
        )
        if stability is not None:
            metadata["equilibrium"] = list(stability.equilibrium)
            metadata["classification"] = stability.classification
            metadata["convergence_time"] = stability.convergence_time
        write_metadata(directory / "metadata.json", metadata)

        omega = trajectory.omega(loaded.eta)
        table = Table(title=f"{loaded.name} ({trajectory.label})")
        table.add_column("vehicle", justify="right")
        table.add_column("omega", justify="right")
        table.add_column("peak |z - z_eq|", justify="right")
        table.add_column("terminal deviation", justify="right")
        for n in range(1, trajectory.n_vehicles):
            peak = stability.peak_spacing_deviation[n - 1] if stability else math.nan
            terminal = stability.terminal_deviation[n - 1] if stability else math.nan
            table.add_row(str(n), _fmt(float(omega[n])), _fmt(peak), _fmt(terminal))
        state.console.print(table)
        if stability is not None:
            state.console.print(
                f"equilibrium z={stability.equilibrium[0]:.6g} ({stability.classification}), "
                f"converged at t={stability.convergence_time:.6g}"
            )
        state.console.print(f"{len(trajectory.events)} events; outputs in {escape(str(directory))}")

        if trajectory.error is not None:
            raise trajectory.error


@app.command()
def compare(
    ctx: typer.Context,
    scenario: ScenarioArg,
    out: OutOption = None,
    dt: DtOption = None,
    jobs: JobsOption = None,
    weighting: Annotated[str, typer.Option("--weighting", help="leaky (electric) or relu (combustion)")] = "leaky",
    eta: Annotated[Optional[float], typer.Option("--eta", help="Regeneration efficiency")] = None,
    plot: Annotated[bool, typer.Option("--plot", help="Overlay phase portraits of both models")] = False,
    xlsx: Annotated[Optional[Path], typer.Option("--xlsx", help="Also write an Excel workbook")] = None,
    dump_scenario_path: DumpOption = None,
) -> None:
    """Run the proposed model and OVFL on one scenario and tabulate omega."""
    state: CliState = ctx.obj
    if weighting not in WEIGHTINGS:
        raise typer.BadParameter(f"must be one of {', '.join(WEIGHTINGS)}", param_hint="--weighting")
    with _guard(state):
        loaded = _prepare(scenario, dt)
        _dump(loaded, dump_scenario_path, state)
        directory = _output_dir(state, out, loaded)
        comparison = compare_models(
            loaded,
            eta=eta,
            weighting=weighting,
            n_jobs=jobs or state.settings.jobs,
        )
        frame = comparison.to_frame()
        write_frame_csv(frame, directory / "comparison.csv")
        outputs = ["comparison.csv"]

        if plot:
            try:
                z_eq = scenario_stability(loaded, comparison.trajectories["proposed"]).equilibrium[0]
            except DomainError:
                z_eq = None
            plot_model_overlay(comparison.trajectories, z_eq, directory / "overlay.svg")
            outputs.append("overlay.svg")
        if xlsx is not None:
            write_table_to_excel(
                frame,
                xlsx,
                title=f"Energy comparison: {loaded.name}",
                info={"eta": comparison.eta, "weighting": weighting, "baseline": comparison.baseline},
                highlight="pct_change",
            )
            outputs.append(str(xlsx))

        metadata = _scenario_metadata(loaded)
        metadata.update({"eta": comparison.eta, "weighting": weighting, "outputs": outputs})
        if loaded.name == "table1":
            metadata["assumption"] = TABLE1_ASSUMPTION
        write_metadata(directory / "metadata.json", metadata)

        models = list(comparison.reports)
        table = Table(title=f"omega per vehicle: {loaded.name}")
        table.add_column("vehicle", justify="right")
        for model in models:
            table.add_column(model, justify="right")
        others = [m for m in models if m != comparison.baseline]
        for model in others:
            table.add_column(f"% change ({model})", justify="right")
        for vehicle in sorted(comparison.reports[comparison.baseline].as_dict()):
            cells = [_fmt(comparison.omega(m, vehicle), ".4f") for m in models]
            cells += [_fmt(comparison.pct_change(m, vehicle), "+.2f") for m in others]
            table.add_row(str(vehicle), *cells)
        state.console.print(table)
        if loaded.name == "table1":
            state.console.print(f"assumption: {TABLE1_ASSUMPTION}")
        state.console.print(f"outputs in {escape(str(directory))}")


def _parse_kappas(text: str) -> list[float]:
    values = [item.strip() for item in text.replace(";", ",").split(",") if item.strip()]
    if not values:
        raise typer.BadParameter("kappa list must not be empty", param_hint="--kappas")
    try:
        return [float(item) for item in values]
    except ValueError as err:
        raise typer.BadParameter(str(err), param_hint="--kappas") from err


@app.command()
def sweep(
    ctx: typer.Context,
    scenario: ScenarioArg,
    kappas: Annotated[str, typer.Option("--kappas", "-k", help="Comma-separated kappa values")],
    out: OutOption = None,
    dt: DtOption = None,
    jobs: JobsOption = None,
    tol: Annotated[float, typer.Option("--tol", help="Convergence tolerance")] = 1e-3,
    stall_fraction: Annotated[float, typer.Option("--stall-fraction")] = 0.5,
    stall_window: Annotated[float, typer.Option("--stall-window")] = 10.0,
    weighting: Annotated[str, typer.Option("--weighting")] = "leaky",
    xlsx: Annotated[Optional[Path], typer.Option("--xlsx", help="Also write an Excel workbook")] = None,
) -> None:
    """Run the proposed model over a list of kappa values."""
    state: CliState = ctx.obj
    values = _parse_kappas(kappas)
    if weighting not in WEIGHTINGS:
        raise typer.BadParameter(f"must be one of {', '.join(WEIGHTINGS)}", param_hint="--weighting")
    with _guard(state):
        loaded = _prepare(scenario, dt)
        directory = _output_dir(state, out, loaded)
        result = sweep_kappa(
            loaded,
            values,
            n_jobs=jobs or state.settings.jobs,
            tol=tol,
            stall_fraction=stall_fraction,
            stall_window=stall_window,
            weighting=weighting,
        )
        frame = result.to_frame()
        write_frame_csv(frame, directory / "sweep.csv")
        if xlsx is not None:
            write_table_to_excel(
                frame,
                xlsx,
                title=f"Kappa sweep: {loaded.name}",
                info={"kappas": ", ".join(f"{k:g}" for k in values), "tolerance": tol},
            )

        table = Table(title=f"kappa sweep: {loaded.name}")
        for column in ("kappa", "vehicle", "omega", "convergence time"):
            table.add_column(column, justify="right")
        table.add_column("stall", justify="center")
        for row in result.rows:
            table.add_row(
                f"{row.kappa:g}",
                str(row.vehicle),
                _fmt(row.omega, ".4f"),
                _fmt(row.convergence_time, ".4g"),
                "yes" if row.stall else "",
            )
        state.console.print(table)
        failed = sorted({row.kappa for row in result.rows if row.error})
        for kappa in failed:
            reason = escape(result.block(kappa)[0].error)
            state.err_console.print(f"[yellow]kappa={kappa:g} failed:[/yellow] {reason}")
        state.console.print(f"outputs in {escape(str(directory))}")


@app.command()
def verify(
    ctx: typer.Context,
    seed: Annotated[Optional[int], typer.Option("--seed", help="Seed of the random scenario family")] = None,
    trials: Annotated[Optional[int], typer.Option("--trials", help="Random scenarios to check")] = None,
    jobs: JobsOption = None,
    out: OutOption = None,
) -> None:
    """Run the property suite; exits with 3 when any property fails."""
    state: CliState = ctx.obj
    seed = state.settings.seed if seed is None else seed
    trials = state.settings.trials if trials is None else trials
    if trials < 1:
        raise typer.BadParameter("must be at least 1", param_hint="--trials")
    with _guard(state):
        report = verify_properties(seed=seed, trials=trials, n_jobs=jobs or state.settings.jobs)

    table = Table(title=f"property suite (seed={seed}, trials={trials})")
    table.add_column("property")
    table.add_column("result", justify="center")
    table.add_column("detail")
    table.add_column("seconds", justify="right")
    for result in report.results:
        verdict = "[green]pass[/green]" if result.passed else "[bold red]FAIL[/bold red]"
        table.add_row(escape(result.name), verdict, escape(result.detail), f"{result.seconds:.1f}")
    state.console.print(table)

    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_metadata(
            out / "verify.json",
            {
                "seed": seed,
                "trials": trials,
                "passed": report.passed,
                "results": [asdict(result) for result in report.results],
            },
        )
    for failure in report.failures():
        if failure.counterexample is None:
            continue
        state.err_console.print(f"[bold red]counterexample for {escape(failure.name)}:[/bold red]")
        for key, value in failure.counterexample.items():
            separator = "\n" if key == "scenario" else " "
            state.err_console.print(f"{key}:{separator}{escape(str(value))}")
    if not report.passed:
        raise typer.Exit(EXIT_VERIFY)


@app.command()
def serve() -> None:
    """Start the MCP tool server on stdio."""
    from .app import server

    server.run()
