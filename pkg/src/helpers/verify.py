"""Executable property checks run by ``verify``.

- zero current minimises heat generation (brute-force enumeration)
- the energy-aware model never uses more energy than OVFL (seeded random scenarios)
- the analytic Jacobian matches finite differences and does not depend on kappa
- acceleration ordering along the platoon run, and the measured velocity gap
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .battery import BatteryParams, BatteryState, verify_zero_current_optimality
from .core import TANH2, ModelParams, PlatoonState, VehicleState
from .models import LeadProfile, control_kernel
from .scenario import REFERENCE_PARAMS, dump_scenario, fig1b, table1
from .sim import Scenario, SimOptions, integrate_many
from .stability import finite_difference_jacobian, linearize_at_equilibrium

logger = logging.getLogger(__name__)

DEFAULT_SEED = 0
DEFAULT_TRIALS = 100
ORDERING_SLACK = 1e-9
REDRAW_ROUNDS = 5


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str
    counterexample: dict[str, Any] | None = None
    seconds: float = 0.0


@dataclass
class SuiteReport:
    seed: int
    trials: int
    results: list[PropertyResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(result.passed for result in self.results)

    def failures(self) -> list[PropertyResult]:
        return [result for result in self.results if not result.passed]


def _timed(check):
    def wrapper(*args, **kwargs) -> PropertyResult:
        start = time.perf_counter()
        result = check(*args, **kwargs)
        result.seconds = time.perf_counter() - start
        logger.info("%s: %s (%.2fs)", result.name, "pass" if result.passed else "FAIL", result.seconds)
        return result

    wrapper.__name__ = check.__name__
    wrapper.__doc__ = check.__doc__
    return wrapper


# =============================================================================
# Zero-current optimality
# =============================================================================


@_timed
def check_zero_current(
    grid=(-2.0, -1.0, 0.0, 1.0, 2.0),
    steps: int = 4,
    step_seconds: float = 10.0,
    params: BatteryParams | None = None,
    state0: BatteryState | None = None,
) -> PropertyResult:
    """All-zero current profile is the unique heat minimiser."""
    report = verify_zero_current_optimality(
        horizon=steps * step_seconds,
        grid=grid,
        steps=steps,
        state0=state0 or BatteryState(V_1=0.0, V_2=0.0, S=0.8),
        params=params or BatteryParams(),
    )
    passed = report.zero_is_optimal and report.zero_is_unique
    detail = (
        f"{len(report.ranking)} profiles, {report.discarded} discarded, "
        f"best {report.best.profile} with heat {report.best.heat:.3g} J"
    )
    counterexample = None
    if not passed:
        if report.zero_is_optimal:
            offender = next(s for s in report.feasible if any(s.profile) and s.heat <= 0.0)
        else:
            offender = report.best
        counterexample = {"profile": list(offender.profile), "heat": offender.heat}
    return PropertyResult("zero current minimises heat", passed, detail, counterexample)


# =============================================================================
# Energy ordering over random scenarios
# =============================================================================


def random_scenario(rng: np.random.Generator, index: int, params: ModelParams = REFERENCE_PARAMS) -> Scenario:
    """Three followers behind a lead whose piecewise-constant acceleration keeps v_l in range."""
    v_max = params.v_max
    spacings = rng.uniform(0.5, 10.0, size=3)
    velocities = rng.uniform(0.0, v_max, size=3)
    v_lead = float(rng.uniform(0.2, v_max - 0.2))

    knots = np.concatenate([[0.0], np.cumsum(rng.uniform(5.0, 15.0, size=3))])
    targets = rng.uniform(0.1, v_max - 0.1, size=3)
    breakpoints = []
    speed = v_lead
    for start, end, target in zip(knots[:-1], knots[1:], targets):
        breakpoints.append((float(start), float((target - speed) / (end - start))))
        speed = float(target)
    breakpoints.append((float(knots[-1]), 0.0))

    position = 0.0
    followers = []
    for gap, velocity in zip(spacings, velocities):
        position -= gap
        followers.append(VehicleState(float(position), float(velocity)))
    tf, dt = 70.0, 1e-3
    return Scenario(
        params=params,
        lead=LeadProfile.table(breakpoints),
        initial=PlatoonState(time=0.0, lead=VehicleState(0.0, v_lead), followers=tuple(followers)),
        tf=tf,
        dt=dt,
        name=f"random-{index}",
        options=SimOptions(record_every=round(tf / dt)),
    )


@dataclass
class OrderingOutcome:
    checked: int
    redrawn: int
    worst_margin: float
    violations: list[tuple[Scenario, int, float]]


def energy_ordering_suite(
    trials: int = DEFAULT_TRIALS, seed: int = DEFAULT_SEED, n_jobs: int = 1, eta: float = 0.8
) -> OrderingOutcome:
    """omega_proposed <= omega_ovfl + 1e-9 for every follower of ``trials`` random scenarios.

    Scenarios with any event under either model are redrawn, for at most
    ``REDRAW_ROUNDS`` rounds.
    """
    rng = np.random.default_rng(seed)
    accepted: list[tuple[Scenario, np.ndarray, np.ndarray]] = []
    redrawn = 0
    drawn = 0
    for _ in range(REDRAW_ROUNDS):
        needed = trials - len(accepted)
        if needed <= 0:
            break
        candidates = [random_scenario(rng, drawn + i) for i in range(needed)]
        drawn += needed
        runs = [s.with_model(kind) for s in candidates for kind in ("proposed", "ovfl")]
        trajectories = integrate_many(runs, n_jobs=n_jobs, quiet=True)
        for i, scenario in enumerate(candidates):
            proposed, ovfl = trajectories[2 * i], trajectories[2 * i + 1]
            if proposed.events or ovfl.events:
                redrawn += 1
                continue
            accepted.append((scenario, proposed.omega(eta), ovfl.omega(eta)))

    worst = -math.inf
    violations = []
    for scenario, omega_p, omega_o in accepted:
        margins = omega_p[1:] - omega_o[1:]
        worst = max(worst, float(margins.max()))
        for n, margin in enumerate(margins, start=1):
            if margin > ORDERING_SLACK:
                violations.append((scenario, n, float(margin)))
    return OrderingOutcome(len(accepted), redrawn, worst, violations)


@_timed
def check_energy_ordering(
    trials: int = DEFAULT_TRIALS, seed: int = DEFAULT_SEED, n_jobs: int = 1
) -> PropertyResult:
    outcome = energy_ordering_suite(trials, seed, n_jobs)
    passed = outcome.checked == trials and not outcome.violations
    detail = (
        f"{outcome.checked}/{trials} scenarios checked, {outcome.redrawn} redrawn, "
        f"max(omega_proposed - omega_ovfl) = {outcome.worst_margin:.3g}"
    )
    counterexample = None
    if outcome.violations:
        scenario, vehicle, margin = outcome.violations[0]
        counterexample = {"vehicle": vehicle, "margin": margin, "scenario": dump_scenario(scenario)}
    elif outcome.checked < trials:
        detail += "; too few valid scenarios after redraws"
    return PropertyResult("proposed uses no more energy than OVFL", passed, detail, counterexample)


# =============================================================================
# Jacobian
# =============================================================================


@_timed
def check_jacobian(
    params: ModelParams = REFERENCE_PARAMS,
    v_bars=(0.5, TANH2, 1.7),
    rtol: float = 1e-6,
    atol: float = 1e-9,
) -> PropertyResult:
    """Analytic Jacobian against central differences, and kappa invariance."""
    worst = 0.0
    for v_bar in v_bars:
        analytic = linearize_at_equilibrium(params, v_bar).jacobian
        numeric = finite_difference_jacobian(params, v_bar)
        without_kappa = linearize_at_equilibrium(params.with_kappa(0.0), v_bar).jacobian
        error = np.abs(numeric - analytic)
        worst = max(worst, float((error / (atol + rtol * np.abs(analytic))).max()))
        if not np.all(error <= atol + rtol * np.abs(analytic)):
            return PropertyResult(
                "Jacobian matches finite differences",
                False,
                f"mismatch at v_bar={v_bar}",
                {"v_bar": v_bar, "analytic": analytic.tolist(), "numeric": numeric.tolist()},
            )
        if not np.array_equal(analytic, without_kappa):
            return PropertyResult(
                "Jacobian matches finite differences",
                False,
                f"kappa changes the Jacobian at v_bar={v_bar}",
                {"v_bar": v_bar, "kappa": analytic.tolist(), "no_kappa": without_kappa.tolist()},
            )
    return PropertyResult(
        "Jacobian matches finite differences",
        True,
        f"{len(v_bars)} equilibria, worst error {worst:.3g} of tolerance, kappa-invariant",
    )


# =============================================================================
# Orderings along shared runs
# =============================================================================


def acceleration_gap(trajectory, params: ModelParams) -> float:
    """Largest proposed-minus-OVFL acceleration over every sampled follower state."""
    v = trajectory.velocities
    gap = control_kernel(v[:, 1:], v[:, :-1], params.kappa, params.epsilon)
    return float(gap.max())


def velocity_gap(proposed, ovfl) -> float:
    """Largest v_proposed - v_ovfl over shared samples and followers."""
    n = min(len(proposed.times), len(ovfl.times))
    return float((proposed.velocities[:n, 1:] - ovfl.velocities[:n, 1:]).max())


@_timed
def check_orderings(n_jobs: int = 1) -> PropertyResult:
    """Acceleration ordering along the platoon run; velocity gap measured and reported."""
    scenarios = [table1(), fig1b()]
    runs = [s.with_model(kind) for s in scenarios for kind in ("proposed", "ovfl")]
    trajectories = integrate_many(runs, n_jobs=n_jobs, quiet=True)
    platoon_proposed, platoon_ovfl, single_proposed, single_ovfl = trajectories
    accel = acceleration_gap(platoon_proposed, scenarios[0].params)
    gaps = {
        "table1": velocity_gap(platoon_proposed, platoon_ovfl),
        "fig1b": velocity_gap(single_proposed, single_ovfl),
    }
    passed = accel <= 0.0 and not any(t.failed for t in trajectories)
    detail = f"max(a_proposed - a_ovfl) = {accel:.3g}; measured max(v_proposed - v_ovfl): " + ", ".join(
        f"{name} {gap:.3g}" for name, gap in gaps.items()
    )
    return PropertyResult("acceleration ordering", passed, detail)


def verify_properties(
    seed: int = DEFAULT_SEED, trials: int = DEFAULT_TRIALS, n_jobs: int = 1
) -> SuiteReport:
    """Run the whole property suite."""
    report = SuiteReport(seed=seed, trials=trials)
    report.results.append(check_zero_current())
    report.results.append(check_energy_ordering(trials, seed, n_jobs))
    report.results.append(check_jacobian())
    report.results.append(check_orderings(n_jobs))
    return report
