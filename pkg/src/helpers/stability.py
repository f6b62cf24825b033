"""Equilibrium, linearisation and string-stability metrics in the relative (z, y) frame.

z = x_l - x is the spacing and y = v_l - v the relative velocity of a follower.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from .core import (
    DomainError,
    ModelParams,
    optimal_velocity_derivative,
    optimal_velocity_inverse,
    param_violations,
)
from .models import COLLISION_SPACING, effective_kappa, follower_accel

if TYPE_CHECKING:
    from .sim import Scenario, Trajectory

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-3
DEFAULT_STALL_FRACTION = 0.5
DEFAULT_STALL_WINDOW = 10.0

SADDLE = "saddle"
CENTER = "center"
CENTER_MANIFOLD = "center manifold"
STABLE_NODE = "stable node"
STABLE_FOCUS = "stable focus"
STABLE_DEGENERATE = "stable degenerate"
STABLE_STAR = "stable star"
UNSTABLE_NODE = "unstable node"
UNSTABLE_FOCUS = "unstable focus"
UNSTABLE_DEGENERATE = "unstable degenerate"
UNSTABLE_STAR = "unstable star"
UNSTABLE_LINE = "unstable line"


@dataclass
class StabilityReport:
    v_bar: float
    equilibrium: tuple[float, float]
    jacobian: NDArray[np.float64] | None = None
    eigenvalues: NDArray[np.complex128] | None = None
    classification: str = ""
    t_star: float = 0.0
    peak_spacing_deviation: list[float] = field(default_factory=list)
    peak_relative_velocity: list[float] = field(default_factory=list)
    attenuation_ratios: list[float] = field(default_factory=list)
    terminal_deviation: list[float] = field(default_factory=list)
    convergence_time: float = math.nan

    @property
    def locally_stable(self) -> bool:
        return self.eigenvalues is not None and bool(np.all(self.eigenvalues.real < 0))

    @property
    def string_stable(self) -> bool:
        """Peak spacing deviation strictly decreasing along the platoon."""
        return bool(self.attenuation_ratios) and all(r < 1.0 for r in self.attenuation_ratios)

    def to_frame(self) -> pd.DataFrame:
        n = len(self.peak_spacing_deviation)
        return pd.DataFrame(
            {
                "vehicle": np.arange(1, n + 1),
                "peak_spacing_deviation": self.peak_spacing_deviation,
                "peak_relative_velocity": self.peak_relative_velocity,
                "attenuation_ratio": [math.nan, *self.attenuation_ratios][:n],
                "terminal_deviation": self.terminal_deviation,
            }
        )


# =============================================================================
# Equilibrium and linearisation
# =============================================================================


def equilibrium(v_bar: float) -> tuple[float, float]:
    """(z_eq, y_eq) = (V^-1(v_bar), 0)."""
    return float(optimal_velocity_inverse(v_bar)), 0.0


def _nondegenerate_equilibrium(v_bar: float) -> float:
    z_eq, _ = equilibrium(v_bar)
    if z_eq <= COLLISION_SPACING:
        raise DomainError(
            f"degenerate equilibrium: z_eq={z_eq:.3g} for v_bar={v_bar}, the beta/z^2 term is singular"
        )
    return z_eq


def relative_field(
    z: float, y: float, params: ModelParams, v_lead: float, kind: str = "proposed"
) -> tuple[float, float]:
    """(dz/dt, dy/dt) of one follower behind a lead moving at constant ``v_lead``."""
    kappa = effective_kappa(kind, params)
    v = v_lead - y
    accel = follower_accel(z, v_lead, v, params.alpha, params.beta, kappa, params.epsilon)
    return float(y), float(-accel)


def classify_fixed_point(jacobian: NDArray[np.float64]) -> str:
    """Type of a planar fixed point from the trace and determinant of its Jacobian."""
    (a, b), (c, d) = jacobian
    p = a + d
    q = a * d - b * c
    if q < 0:
        return SADDLE
    if q == 0:
        return CENTER_MANIFOLD if p <= 0 else UNSTABLE_LINE
    e = p * p - 4 * q
    if p == 0:
        return CENTER
    stable = p < 0
    if e < 0:
        return STABLE_FOCUS if stable else UNSTABLE_FOCUS
    if e > 0:
        return STABLE_NODE if stable else UNSTABLE_NODE
    # repeated eigenvalue: a star only when the Jacobian is a multiple of the identity
    if b == 0 and c == 0:
        return STABLE_STAR if stable else UNSTABLE_STAR
    return STABLE_DEGENERATE if stable else UNSTABLE_DEGENERATE


def linearize_at_equilibrium(params: ModelParams, v_bar: float) -> StabilityReport:
    """Analytic Jacobian of the (z, y) field at (V^-1(v_bar), 0).

    The control term has zero gradient at y = 0, so the result is the same for
    every kappa.

    Raises:
        DomainError: If v_bar is outside the range of V or z_eq is not positive
    """
    z_eq = _nondegenerate_equilibrium(v_bar)
    jacobian = np.array(
        [
            [0.0, 1.0],
            [-params.alpha * optimal_velocity_derivative(z_eq), -params.alpha - params.beta / z_eq**2],
        ]
    )
    trace = jacobian[0, 0] + jacobian[1, 1]
    det = jacobian[0, 0] * jacobian[1, 1] - jacobian[0, 1] * jacobian[1, 0]
    eigenvalues = np.sort_complex(np.roots([1.0, -trace, det]).astype(complex))
    return StabilityReport(
        v_bar=float(v_bar),
        equilibrium=(z_eq, 0.0),
        jacobian=jacobian,
        eigenvalues=eigenvalues,
        classification=classify_fixed_point(jacobian),
    )


def finite_difference_jacobian(
    params: ModelParams,
    v_bar: float,
    kind: str = "proposed",
    h_z: float = 1e-5,
    h_y: float | None = None,
) -> NDArray[np.float64]:
    """Central-difference Jacobian of the nonlinear (z, y) field at equilibrium.

    The control term curves on the scale sqrt(epsilon) around y = 0, so the y
    step defaults to min(1e-5, 1e-3 sqrt(epsilon)).
    """
    z_eq = _nondegenerate_equilibrium(v_bar)
    if h_y is None:
        h_y = min(1e-5, 1e-3 * math.sqrt(params.epsilon))

    def field_at(z, y):
        return np.array(relative_field(z, y, params, v_bar, kind))

    d_z = (field_at(z_eq + h_z, 0.0) - field_at(z_eq - h_z, 0.0)) / (2 * h_z)
    d_y = (field_at(z_eq, h_y) - field_at(z_eq, -h_y)) / (2 * h_y)
    return np.column_stack([d_z, d_y])


# =============================================================================
# Trajectory metrics
# =============================================================================


def _deviations(trajectory: Trajectory, z_eq: float):
    return np.abs(trajectory.spacing() - z_eq), np.abs(trajectory.relative_velocity())


def convergence_time(
    trajectory: Trajectory, z_eq: float, tol: float = DEFAULT_TOLERANCE, t_star: float = 0.0
) -> float:
    """First sample time after ``t_star`` from which every deviation stays below ``tol``.

    Returns inf when the run has not settled by its last sample.
    """
    spacing_dev, velocity_dev = _deviations(trajectory, z_eq)
    after = trajectory.times >= t_star
    if not after.any():
        return math.inf
    times = trajectory.times[after]
    outside = ((spacing_dev >= tol) | (velocity_dev >= tol)).any(axis=1)[after]
    if not outside.any():
        return float(times[0])
    last = int(np.flatnonzero(outside)[-1])
    if last == len(times) - 1:
        return math.inf
    return float(times[last + 1])


def stability_metrics(
    trajectory: Trajectory,
    v_bar: float,
    *,
    t_star: float = 0.0,
    tol: float = DEFAULT_TOLERANCE,
    params: ModelParams | None = None,
) -> StabilityReport:
    """Peak and terminal deviations from (V^-1(v_bar), 0) after ``t_star``.

    With ``params`` the Jacobian part is filled in as well.

    Raises:
        DomainError: If v_bar is outside the range of V
    """
    z_eq, _ = equilibrium(v_bar)
    report = linearize_at_equilibrium(params, v_bar) if params is not None else StabilityReport(
        v_bar=float(v_bar), equilibrium=(z_eq, 0.0)
    )
    report.t_star = float(t_star)
    spacing_dev, velocity_dev = _deviations(trajectory, z_eq)
    after = trajectory.times >= t_star
    if not after.any():
        raise DomainError(f"trajectory ends before t*={t_star}")
    peaks = spacing_dev[after].max(axis=0)
    report.peak_spacing_deviation = [float(p) for p in peaks]
    report.peak_relative_velocity = [float(p) for p in velocity_dev[after].max(axis=0)]
    report.attenuation_ratios = [
        float(b / a) if a > 0 else math.nan for a, b in zip(peaks[:-1], peaks[1:])
    ]
    report.terminal_deviation = [
        float(max(s, v)) for s, v in zip(spacing_dev[-1], velocity_dev[-1])
    ]
    report.convergence_time = convergence_time(trajectory, z_eq, tol, t_star)
    return report


def lead_velocity_at(trajectory: Trajectory, t: float) -> float:
    return float(np.interp(t, trajectory.times, trajectory.velocities[:, 0]))


def scenario_stability(
    scenario: Scenario, trajectory: Trajectory, tol: float = DEFAULT_TOLERANCE
) -> StabilityReport:
    """Stability metrics with t* at the end of the lead's active window and v_bar = v_l(t*)."""
    t_star = max(scenario.lead.active_until, scenario.t0)
    v_bar = lead_velocity_at(trajectory, t_star)
    return stability_metrics(trajectory, v_bar, t_star=t_star, tol=tol, params=scenario.params)


def stalled_vehicles(
    trajectory: Trajectory,
    fraction: float = DEFAULT_STALL_FRACTION,
    window: float = DEFAULT_STALL_WINDOW,
) -> list[int]:
    """Followers whose velocity stays below ``fraction`` * v_l(t) for at least ``window``."""
    times = trajectory.times
    below = trajectory.velocities[:, 1:] < fraction * trajectory.velocities[:, [0]]
    stalled = []
    for m in range(below.shape[1]):
        # run boundaries of the boolean series
        edges = np.diff(np.concatenate([[0], below[:, m].astype(np.int8), [0]]))
        starts = np.flatnonzero(edges == 1)
        ends = np.flatnonzero(edges == -1) - 1
        if any(times[e] - times[s] >= window for s, e in zip(starts, ends)):
            stalled.append(m + 1)
    return stalled


# =============================================================================
# Kappa sweep
# =============================================================================


@dataclass(frozen=True)
class SweepRow:
    kappa: float
    vehicle: int
    omega: float
    convergence_time: float
    stall: bool
    error: str = ""


@dataclass
class SweepTable:
    rows: list[SweepRow] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.kappa, r.vehicle, r.omega, r.convergence_time, r.stall, r.error) for r in self.rows],
            columns=["kappa", "vehicle", "omega", "convergence_time", "stall", "error"],
        )

    def block(self, kappa: float) -> list[SweepRow]:
        return [row for row in self.rows if row.kappa == kappa]

    def omega(self, kappa: float) -> dict[int, float]:
        return {row.vehicle: row.omega for row in self.block(kappa)}


def sweep_kappa(
    base: Scenario,
    kappas: Sequence[float],
    *,
    n_jobs: int = 1,
    tol: float = DEFAULT_TOLERANCE,
    stall_fraction: float = DEFAULT_STALL_FRACTION,
    stall_window: float = DEFAULT_STALL_WINDOW,
    eta: float | None = None,
    weighting: str = "leaky",
) -> SweepTable:
    """Run the proposed model for every kappa and tabulate omega, convergence time and stall.

    Kappa values that break the stability rule are run with a warning. A run
    that fails is recorded in its rows instead of aborting the sweep.
    """
    from .sim import integrate_many

    kappas = [float(k) for k in kappas]
    if not kappas:
        raise DomainError("kappa list must not be empty")
    if any(not (math.isfinite(k) and k >= 0) for k in kappas):
        raise DomainError("kappa values must be finite and non-negative")
    eta = base.eta if eta is None else eta

    scenarios = []
    for kappa in kappas:
        violations = param_violations(base.params.with_kappa(kappa))
        enforce = not violations
        if violations:
            logger.warning(
                "kappa=%g breaks the stability rule (%s); running anyway", kappa, "; ".join(violations)
            )
        scenarios.append(base.with_model("proposed").with_kappa(kappa, enforce_stability_rule=enforce))

    trajectories = integrate_many(scenarios, n_jobs=n_jobs)
    table = SweepTable()
    for kappa, scenario, trajectory in zip(kappas, scenarios, trajectories):
        followers = range(1, scenario.n_followers + 1)
        if trajectory.error is not None:
            for n in followers:
                table.rows.append(SweepRow(kappa, n, math.nan, math.nan, False, str(trajectory.error)))
            continue
        omega = trajectory.omega(eta, weighting)
        t_star = max(scenario.lead.active_until, scenario.t0)
        try:
            z_eq, _ = equilibrium(lead_velocity_at(trajectory, t_star))
            settled = convergence_time(trajectory, z_eq, tol, t_star)
        except DomainError:
            settled = math.nan
        stalled = set(stalled_vehicles(trajectory, stall_fraction, stall_window))
        for n in followers:
            table.rows.append(SweepRow(kappa, n, float(omega[n]), settled, n in stalled))
        logger.debug("kappa=%g converged at %s, stalled %s", kappa, settled, sorted(stalled))
    return table
