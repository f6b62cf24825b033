"""Energy consumption per unit mass with regenerative-braking weighting.

omega = integral of v * g(dv/dt) dt, where g charges acceleration at 1/eta and
credits deceleration at eta (LeakyReLU), or ignores deceleration (ReLU).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Literal, Sequence

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike

from .core import DomainError, FloatOrArray, SimulationError
from .models import MODEL_KINDS

if TYPE_CHECKING:
    from .sim import Scenario, Trajectory

logger = logging.getLogger(__name__)

Weighting = Literal["leaky", "relu"]
WEIGHTINGS: tuple[str, ...] = ("leaky", "relu")
DEFAULT_ETA = 0.8


def _check_eta(eta: float) -> None:
    if not 0 < eta <= 1:
        raise DomainError(f"eta must lie in (0, 1], got {eta}")


def _check_weighting(weighting: str) -> None:
    if weighting not in WEIGHTINGS:
        raise DomainError(f"unknown weighting '{weighting}', expected one of {WEIGHTINGS}")


def g_leaky(u: ArrayLike, eta: float) -> FloatOrArray:
    """u / eta for u >= 0, eta * u otherwise."""
    _check_eta(eta)
    u_arr = np.asarray(u, dtype=float)
    value = np.where(u_arr >= 0, u_arr / eta, eta * u_arr)
    return float(value) if np.ndim(u) == 0 else value


def g_relu(u: ArrayLike) -> FloatOrArray:
    """max(u, 0): no credit for deceleration."""
    value = np.maximum(np.asarray(u, dtype=float), 0.0)
    return float(value) if np.ndim(u) == 0 else value


def weight(u: ArrayLike, eta: float, weighting: Weighting = "leaky") -> FloatOrArray:
    _check_weighting(weighting)
    return g_leaky(u, eta) if weighting == "leaky" else g_relu(u)


def instantaneous_energy(
    v: ArrayLike, v_dot: ArrayLike, eta: float, weighting: Weighting = "leaky"
) -> FloatOrArray:
    """Instantaneous energy cost per unit mass, v * g(v_dot)."""
    if np.any(np.asarray(v) < 0):
        raise DomainError("instantaneous_energy is defined for v >= 0")
    value = np.asarray(v, dtype=float) * weight(v_dot, eta, weighting)
    return float(value) if np.ndim(value) == 0 else value


def energy_per_unit_mass(
    times: ArrayLike,
    v: ArrayLike,
    v_dot: ArrayLike,
    eta: float = DEFAULT_ETA,
    weighting: Weighting = "leaky",
) -> FloatOrArray:
    """Trapezoidal quadrature of v * g(v_dot) over the sampled window.

    ``v`` and ``v_dot`` may be 1-D (one vehicle) or 2-D with time along
    axis 0 (one column per vehicle).

    Raises:
        DomainError: Fewer than two samples, or times not sorted
    """
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise DomainError("energy_per_unit_mass needs at least two samples")
    if np.any(np.diff(t) < 0):
        raise DomainError("sample times must be sorted")
    v_arr = np.asarray(v, dtype=float)
    integrand = v_arr * weight(np.asarray(v_dot, dtype=float), eta, weighting)
    value = np.trapezoid(integrand, t, axis=0)
    return float(value) if np.ndim(value) == 0 else value


def combine_split_energy(
    positive: ArrayLike, negative: ArrayLike, eta: float, weighting: Weighting = "leaky"
) -> FloatOrArray:
    """omega from the split integrals of v*max(a, 0) and v*min(a, 0).

    g is piecewise linear with its kink at a = 0, so omega separates into
    positive / eta + eta * negative for LeakyReLU and positive for ReLU.
    """
    _check_eta(eta)
    _check_weighting(weighting)
    positive = np.asarray(positive, dtype=float)
    if weighting == "relu":
        return positive.copy()
    return positive / eta + eta * np.asarray(negative, dtype=float)


# =============================================================================
# Reports
# =============================================================================


@dataclass
class EnergyReport:
    """omega per follower for one model run."""

    model: str
    eta: float
    weighting: str
    window: tuple[float, float]
    per_vehicle: list[tuple[int, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.window[1] > self.window[0]:
            raise DomainError(f"energy window must be non-degenerate, got {self.window}")

    @classmethod
    def from_trajectory(
        cls, trajectory: Trajectory, eta: float = DEFAULT_ETA, weighting: Weighting = "leaky"
    ) -> EnergyReport:
        omega = trajectory.omega(eta, weighting)
        return cls(
            model=trajectory.label,
            eta=eta,
            weighting=weighting,
            window=(trajectory.t0, trajectory.end_time),
            per_vehicle=[(n, float(omega[n])) for n in range(1, omega.shape[0])],
        )

    def as_dict(self) -> dict[int, float]:
        return dict(self.per_vehicle)


@dataclass(frozen=True)
class ComparisonRow:
    vehicle: int
    model: str
    omega: float
    pct_change: float


@dataclass
class ComparisonTable:
    """Per-vehicle omega per model, with percent change against ``baseline``."""

    baseline: str
    eta: float
    weighting: str
    rows: list[ComparisonRow] = field(default_factory=list)
    reports: dict[str, EnergyReport] = field(default_factory=dict)
    trajectories: dict[str, Trajectory] = field(default_factory=dict, repr=False)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.vehicle, r.model, r.omega, r.pct_change) for r in self.rows],
            columns=["vehicle", "model", "omega", "pct_change"],
        )

    def omega(self, model: str, vehicle: int) -> float:
        return self.reports[model].as_dict()[vehicle]

    def pct_change(self, model: str, vehicle: int) -> float:
        for row in self.rows:
            if row.model == model and row.vehicle == vehicle:
                return row.pct_change
        raise KeyError((model, vehicle))


def percent_change(value: float, baseline: float) -> float:
    if baseline == 0.0:
        return 0.0 if value == 0.0 else float("nan")
    return (value - baseline) / baseline * 100.0


def comparison_from_reports(
    reports: dict[str, EnergyReport], baseline: str, eta: float, weighting: str
) -> ComparisonTable:
    table = ComparisonTable(baseline=baseline, eta=eta, weighting=weighting, reports=reports)
    base = reports[baseline].as_dict()
    vehicles = sorted(base)
    for vehicle in vehicles:
        for model, report in reports.items():
            omega = report.as_dict()[vehicle]
            table.rows.append(
                ComparisonRow(vehicle, model, omega, percent_change(omega, base[vehicle]))
            )
    return table


def compare_models(
    scenario: Scenario,
    models: Sequence[str] = ("proposed", "ovfl"),
    *,
    eta: float | None = None,
    weighting: Weighting = "leaky",
    baseline: str = "ovfl",
    n_jobs: int = 1,
) -> ComparisonTable:
    """Run every model on the identical scenario and tabulate omega per vehicle.

    Raises:
        SimulationError: If a run fails; carries the model label and the cause
    """
    from .sim import integrate_many

    models = list(dict.fromkeys(models))
    if not models:
        raise DomainError("compare_models needs at least one model")
    for kind in models:
        if kind not in MODEL_KINDS:
            raise DomainError(f"unknown model kind '{kind}', expected one of {MODEL_KINDS}")
    if baseline not in models:
        baseline = models[0]
    eta = scenario.eta if eta is None else eta
    _check_eta(eta)
    _check_weighting(weighting)

    trajectories = integrate_many([scenario.with_model(kind) for kind in models], n_jobs=n_jobs)
    reports: dict[str, EnergyReport] = {}
    for kind, trajectory in zip(models, trajectories):
        if trajectory.error is not None:
            raise SimulationError(kind, trajectory.error)
        reports[kind] = EnergyReport.from_trajectory(trajectory, eta, weighting)
    logger.info("compared %s on '%s' against %s", ", ".join(models), scenario.name, baseline)
    table = comparison_from_reports(reports, baseline, eta, weighting)
    table.trajectories = dict(zip(models, trajectories))
    return table
