"""Batched fixed-step RK4 integration of a platoon, with event detection and battery coupling.

Runs that share (t0, step count, dt, platoon size, battery block) advance
together as numpy arrays of shape (batch, vehicles). A failed run (collision,
fatal negative velocity, lead out of range) is frozen in place while the rest
of its batch continues.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from numpy.typing import NDArray

from . import battery as bat
from .core import (
    CollisionError,
    DomainError,
    EvPlatoonError,
    LeadProfileError,
    ModelParams,
    NegativeVelocityError,
    PlatoonState,
    VehicleState,
    validate_params,
)
from .energy import DEFAULT_ETA, Weighting, combine_split_energy
from .models import COLLISION_SPACING, MODEL_KINDS, LeadProfile, follower_accel

logger = logging.getLogger(__name__)

# Slack on the velocity bounds before an event is logged.
VELOCITY_SLACK = 1e-9
DEFAULT_DT = 1e-3
DEFAULT_CHUNK_SIZE = 256
# Steps per block of precomputed lead accelerations.
LEAD_BLOCK = 2048

BATTERY_CHANNELS = ("I", "V_T", "S", "Q", "V1", "V2")


@dataclass(frozen=True)
class BatteryBlock:
    """Battery, body and unit scaling attached to every vehicle of a scenario."""

    cell: bat.BatteryParams = field(default_factory=bat.BatteryParams)
    body: bat.VehicleBodyParams = field(default_factory=bat.VehicleBodyParams)
    scaling: bat.UnitScaling = field(default_factory=bat.UnitScaling)
    initial: bat.BatteryState = field(default_factory=bat.BatteryState)


@dataclass(frozen=True)
class SimOptions:
    negative_velocity: Literal["warn", "fail"] = "warn"
    # Store every k-th step; energy is still accumulated at every step.
    record_every: int = 1

    def __post_init__(self) -> None:
        if self.negative_velocity not in ("warn", "fail"):
            raise DomainError("negative_velocity must be 'warn' or 'fail'")
        if self.record_every < 1:
            raise DomainError("record_every must be at least 1")


@dataclass(frozen=True)
class Scenario:
    """Everything needed to integrate one platoon run."""

    params: ModelParams
    lead: LeadProfile
    initial: PlatoonState
    tf: float
    dt: float = DEFAULT_DT
    kinds: tuple[str, ...] = ()
    battery: BatteryBlock | None = None
    eta: float = DEFAULT_ETA
    name: str = "scenario"
    options: SimOptions = field(default_factory=SimOptions)
    enforce_stability_rule: bool = True

    def __post_init__(self) -> None:
        kinds = tuple(self.kinds) or ("proposed",) * len(self.initial.followers)
        object.__setattr__(self, "kinds", kinds)
        validate_params(self.params, enforce_stability_rule=self.enforce_stability_rule)
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise DomainError(f"dt must be positive, got {self.dt}")
        if not self.tf > self.t0:
            raise DomainError(f"horizon must satisfy tf > t0, got [{self.t0}, {self.tf}]")
        if not self.initial.followers:
            raise DomainError("a scenario needs at least one follower")
        if len(kinds) != len(self.initial.followers):
            raise DomainError("one model kind per follower is required")
        for kind in kinds:
            if kind not in MODEL_KINDS:
                raise DomainError(f"unknown model kind '{kind}', expected one of {MODEL_KINDS}")
        for n, vehicle in enumerate(self.initial.vehicles):
            if not 0.0 <= vehicle.velocity <= self.params.v_max:
                raise DomainError(
                    f"initial velocity of vehicle {n} must lie in [0, {self.params.v_max:.9g}], "
                    f"got {vehicle.velocity}"
                )
        if not 0 < self.eta <= 1:
            raise DomainError(f"eta must lie in (0, 1], got {self.eta}")

    @property
    def t0(self) -> float:
        return self.initial.time

    @property
    def n_followers(self) -> int:
        return len(self.initial.followers)

    @property
    def n_steps(self) -> int:
        """Steps covering [t0, tf]; the step is shrunk slightly if dt does not divide it."""
        return max(1, math.ceil((self.tf - self.t0) / self.dt - 1e-9))

    @property
    def step(self) -> float:
        return (self.tf - self.t0) / self.n_steps

    @property
    def label(self) -> str:
        kinds = set(self.kinds)
        return self.kinds[0] if len(kinds) == 1 else "mixed"

    def with_model(self, kind: str) -> Scenario:
        return replace(self, kinds=(kind,) * self.n_followers)

    def with_kappa(self, kappa: float, *, enforce_stability_rule: bool = True) -> Scenario:
        return replace(
            self,
            params=self.params.with_kappa(kappa),
            enforce_stability_rule=enforce_stability_rule,
        )

    def with_dt(self, dt: float) -> Scenario:
        return replace(self, dt=float(dt))

    def with_battery(self, block: BatteryBlock | None = None) -> Scenario:
        return replace(self, battery=block or BatteryBlock())

    def with_options(self, **changes) -> Scenario:
        return replace(self, options=replace(self.options, **changes))


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: str
    vehicle: int
    severity: Literal["error", "warning"]
    message: str

    def to_line(self) -> str:
        return f"t={self.time:.9g} {self.severity.upper()} {self.kind} vehicle={self.vehicle} {self.message}"


@dataclass
class Trajectory:
    """Recorded samples of one run. Arrays have shape (samples, vehicles); vehicle 0 is the lead."""

    label: str
    kinds: tuple[str, ...]
    times: NDArray[np.float64]
    positions: NDArray[np.float64]
    velocities: NDArray[np.float64]
    accelerations: NDArray[np.float64]
    energy_positive: NDArray[np.float64]
    energy_negative: NDArray[np.float64]
    t0: float
    end_time: float
    events: list[SimEvent] = field(default_factory=list)
    battery: dict[str, NDArray[np.float64]] | None = None
    error: EvPlatoonError | None = None

    @property
    def n_vehicles(self) -> int:
        return self.positions.shape[1]

    @property
    def failed(self) -> bool:
        return self.error is not None

    def spacing(self) -> NDArray[np.float64]:
        """x_{n-1} - x_n for followers n = 1..N, shape (samples, N)."""
        return self.positions[:, :-1] - self.positions[:, 1:]

    def relative_velocity(self) -> NDArray[np.float64]:
        return self.velocities[:, :-1] - self.velocities[:, 1:]

    def omega(self, eta: float = DEFAULT_ETA, weighting: Weighting = "leaky") -> NDArray[np.float64]:
        """Energy per unit mass of every vehicle, accumulated at every integration step."""
        return combine_split_energy(self.energy_positive, self.energy_negative, eta, weighting)

    def events_of(self, kind: str) -> list[SimEvent]:
        return [event for event in self.events if event.kind == kind]

    def to_frame(self) -> pd.DataFrame:
        """One row per (time, vehicle): t, vehicle, x, v, a and battery channels if present."""
        n_samples, n_vehicles = self.positions.shape
        columns = {
            "t": np.repeat(self.times, n_vehicles),
            "vehicle": np.tile(np.arange(n_vehicles), n_samples),
            "x": self.positions.ravel(),
            "v": self.velocities.ravel(),
            "a": self.accelerations.ravel(),
        }
        if self.battery is not None:
            for name in BATTERY_CHANNELS:
                columns[name] = self.battery[name].ravel()
        return pd.DataFrame(columns)


# =============================================================================
# Batched RK4
# =============================================================================


def _batch_key(scenario: Scenario):
    return (
        scenario.t0,
        scenario.n_steps,
        scenario.step,
        scenario.n_followers + 1,
        scenario.options.record_every,
        scenario.battery,
    )


def _lead_block(scenarios: Sequence[Scenario], t0: float, h: float, start: int, count: int):
    """Lead accelerations on the half-step grid of steps [start, start + count], shape (B, 2 count + 1)."""
    times = t0 + (start + 0.5 * np.arange(2 * count + 1)) * h
    return np.stack([np.asarray(s.lead.accel_at(times), dtype=float) for s in scenarios])


class _EventTracker:
    """Onset bookkeeping for warning events that stay active over many steps."""

    def __init__(self, batch: int, width: int):
        self.active = np.zeros((batch, width), dtype=bool)

    def onsets(self, condition):
        new = condition & ~self.active
        self.active = condition
        return np.argwhere(new)


def integrate_batch(scenarios: Sequence[Scenario]) -> list[Trajectory]:
    """Integrate runs sharing a batch key in lockstep."""
    first = scenarios[0]
    if any(_batch_key(s) != _batch_key(first) for s in scenarios):
        raise DomainError("runs in one batch must share horizon, dt, platoon size, stride and battery")

    B = len(scenarios)
    M = first.n_followers + 1
    n = first.n_steps
    h = first.step
    t0 = first.t0
    stride = first.options.record_every

    col = lambda values: np.array(values, dtype=float)[:, None]
    alpha = col([s.params.alpha for s in scenarios])
    beta = col([s.params.beta for s in scenarios])
    epsilon = col([s.params.epsilon for s in scenarios])
    v_max = col([s.params.v_max for s in scenarios])
    kappa = np.array(
        [[s.params.kappa if kind == "proposed" else 0.0 for kind in s.kinds] for s in scenarios]
    )
    fail_on_negative = np.array([s.options.negative_velocity == "fail" for s in scenarios])

    X = np.array([[v.position for v in s.initial.vehicles] for s in scenarios], dtype=float)
    V = np.array([[v.velocity for v in s.initial.vehicles] for s in scenarios], dtype=float)

    def accel(X, V, a_lead):
        A = np.empty_like(V)
        A[:, 0] = a_lead
        A[:, 1:] = follower_accel(X[:, :-1] - X[:, 1:], V[:, :-1], V[:, 1:], alpha, beta, kappa, epsilon)
        return A

    n_records = n // stride + 1 + (1 if n % stride else 0)
    rec_t = np.empty(n_records)
    rec_x = np.empty((n_records, B, M))
    rec_v = np.empty((n_records, B, M))
    rec_a = np.empty((n_records, B, M))

    block = first.battery
    if block is not None:
        rec_b = {name: np.empty((n_records, B, M)) for name in BATTERY_CHANNELS}
        cell_state = bat.BatteryState(
            V_1=np.full((B, M), float(block.initial.V_1)),
            V_2=np.full((B, M), float(block.initial.V_2)),
            S=np.full((B, M), float(block.initial.S)),
        )
        dt_si = block.scaling.seconds(h)
        capability = _EventTracker(B, M)
        q_breach = _EventTracker(B, M)
        soc_breach = _EventTracker(B, M)

    alive = np.ones(B, dtype=bool)
    died_at = np.full(B, n, dtype=int)
    died_time = np.full(B, math.nan)
    errors: list[EvPlatoonError | None] = [None] * B
    events: list[list[SimEvent]] = [[] for _ in range(B)]
    negative = _EventTracker(B, M - 1)
    overspeed = _EventTracker(B, M - 1)
    P = np.zeros((B, M))
    N = np.zeros((B, M))

    def kill(b: int, k: int, error: EvPlatoonError, kind: str, vehicle: int, time: float):
        alive[b] = False
        died_at[b] = k
        died_time[b] = time
        errors[b] = error
        events[b].append(SimEvent(time, kind, vehicle, "error", str(error)))

    def battery_step(V, A, t):
        nonlocal cell_state
        v_si = block.scaling.velocity(np.maximum(V, 0.0))
        a_si = block.scaling.acceleration(A)
        p_cell = bat.cell_power_from_motor(bat.motor_power_from_dynamics(v_si, a_si, block.body), block.cell)
        current, infeasible = bat.solve_cell_current_saturating(p_cell, cell_state, block.cell)
        q = bat.raw_power_loss(cell_state, current, block.cell)
        channels = {
            "I": current,
            "V_T": bat.terminal_voltage(cell_state, current, block.cell),
            "S": cell_state.S,
            "Q": np.maximum(q, 0.0),
            "V1": cell_state.V_1,
            "V2": cell_state.V_2,
        }
        for b, m in capability.onsets(infeasible & alive[:, None]):
            events[b].append(SimEvent(t, "battery_capability", int(m), "warning",
                                      "power demand exceeds battery capability; current saturated"))
        for b, m in q_breach.onsets((q < bat.Q_BREACH) & alive[:, None]):
            events[b].append(SimEvent(t, "constraint_breach", int(m), "warning",
                                      f"power loss Q={q[b, m]:.3g} W below zero"))
        cell_state = bat.step_battery(cell_state, current, dt_si, block.cell, on_breach="ignore")
        out_of_range = ~bat.soc_in_range(cell_state)
        for b, m in soc_breach.onsets(out_of_range & alive[:, None]):
            events[b].append(SimEvent(t + h, "constraint_breach", int(m), "warning",
                                      f"state of charge S={cell_state.S[b, m]:.6g} outside [0, 1]"))
        return channels

    def record(r: int, t: float, X, V, A, channels):
        rec_t[r] = t
        rec_x[r], rec_v[r], rec_a[r] = X, V, A
        if channels is not None:
            for name in BATTERY_CHANNELS:
                rec_b[name][r] = channels[name]

    lead = _lead_block(scenarios, t0, h, 0, min(LEAD_BLOCK, n))
    lead_start = 0
    A = accel(X, V, lead[:, 0])
    r = 0
    channels = None
    with np.errstate(all="ignore"):
        for k in range(n):
            if k - lead_start == LEAD_BLOCK:
                lead_start = k
                lead = _lead_block(scenarios, t0, h, k, min(LEAD_BLOCK, n - k))
            j = 2 * (k - lead_start)
            a_mid, a_end = lead[:, j + 1], lead[:, j + 2]
            t = t0 + k * h

            if block is not None:
                channels = battery_step(V, A, t)
            if k % stride == 0:
                record(r, t, X, V, A, channels)
                r += 1

            V2 = V + 0.5 * h * A
            K2 = accel(X + 0.5 * h * V, V2, a_mid)
            V3 = V + 0.5 * h * K2
            K3 = accel(X + 0.5 * h * V2, V3, a_mid)
            V4 = V + h * K3
            K4 = accel(X + h * V3, V4, a_end)
            X_new = X + (h / 6.0) * (V + 2.0 * V2 + 2.0 * V3 + V4)
            V_new = V + (h / 6.0) * (A + 2.0 * K2 + 2.0 * K3 + K4)
            A_new = accel(X_new, V_new, a_end)

            # events on the new state
            t_new = t + h
            spacing = X_new[:, :-1] - X_new[:, 1:]
            crashed = ~(spacing > COLLISION_SPACING) & alive[:, None]
            v_lead = V_new[:, 0]
            lead_bad = ~((v_lead >= -VELOCITY_SLACK) & (v_lead <= v_max[:, 0] + VELOCITY_SLACK)) & alive
            if crashed.any() or lead_bad.any():
                for b in np.flatnonzero(lead_bad):
                    kill(b, k, LeadProfileError(
                        f"lead velocity {v_lead[b]:.6g} left [0, {v_max[b, 0]:.6g}] at t={t_new:.6g}"
                    ), "lead_out_of_range", 0, t_new)
                for b in np.flatnonzero(crashed.any(axis=1) & alive):
                    rear = int(np.argmax(crashed[b])) + 1
                    kill(b, k, CollisionError(rear - 1, rear, t_new, float(spacing[b, rear - 1])),
                         "collision", rear, t_new)
            followers = V_new[:, 1:]
            below = (followers < -VELOCITY_SLACK) & alive[:, None]
            if below.any() or negative.active.any():
                for b, m in negative.onsets(below):
                    vehicle = int(m) + 1
                    message = f"velocity {followers[b, m]:.6g} below zero"
                    if fail_on_negative[b] and alive[b]:
                        kill(b, k, NegativeVelocityError(
                            f"vehicle {vehicle} velocity {followers[b, m]:.6g} below zero at t={t_new:.6g}"
                        ), "negative_velocity", vehicle, t_new)
                    else:
                        events[b].append(SimEvent(t_new, "negative_velocity", vehicle, "warning", message))
            above = (followers > v_max + VELOCITY_SLACK) & alive[:, None]
            if above.any() or overspeed.active.any():
                for b, m in overspeed.onsets(above):
                    events[b].append(SimEvent(t_new, "overspeed", int(m) + 1, "warning",
                                              f"velocity {followers[b, m]:.6g} above v_max"))

            live = alive[:, None]
            P += np.where(live, 0.5 * h * (V * np.maximum(A, 0.0) + V_new * np.maximum(A_new, 0.0)), 0.0)
            N += np.where(live, 0.5 * h * (V * np.minimum(A, 0.0) + V_new * np.minimum(A_new, 0.0)), 0.0)
            if alive.all():
                X, V, A = X_new, V_new, A_new
            else:
                X = np.where(live, X_new, X)
                V = np.where(live, V_new, V)
                A = np.where(live, A_new, A)
            if not alive.any():
                break

        if alive.any():
            if block is not None:
                channels = battery_step(V, A, t0 + n * h)
            record(r, t0 + n * h, X, V, A, channels)
            r += 1

    trajectories = []
    for b, scenario in enumerate(scenarios):
        end_step = died_at[b]
        # a failed run ends at the detected event, one step past its last sample
        end_time = float(died_time[b]) if errors[b] is not None else t0 + n * h
        step_of = np.rint((rec_t[:r] - t0) / h).astype(int)
        mask = step_of <= end_step
        trajectories.append(
            Trajectory(
                label=scenario.label,
                kinds=scenario.kinds,
                times=rec_t[:r][mask].copy(),
                positions=rec_x[:r, b][mask].copy(),
                velocities=rec_v[:r, b][mask].copy(),
                accelerations=rec_a[:r, b][mask].copy(),
                energy_positive=P[b].copy(),
                energy_negative=N[b].copy(),
                t0=t0,
                end_time=end_time,
                events=sorted(events[b], key=lambda e: e.time),
                battery=None if block is None else {
                    name: rec_b[name][:r, b][mask].copy() for name in BATTERY_CHANNELS
                },
                error=errors[b],
            )
        )
    logger.debug("integrated batch of %d runs, %d steps of %.3g", B, n, h)
    return trajectories


def _log_events(scenario: Scenario, trajectory: Trajectory) -> None:
    for event in trajectory.events:
        level = logging.ERROR if event.severity == "error" else logging.WARNING
        logger.log(level, "[%s/%s] %s", scenario.name, trajectory.label, event.to_line())


def integrate_many(
    scenarios: Sequence[Scenario],
    *,
    n_jobs: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    quiet: bool = False,
) -> list[Trajectory]:
    """Integrate independent runs, returning trajectories in input order.

    Runs are grouped by batch key and cut into fixed-size chunks in input
    order, so results do not depend on ``n_jobs``. Failed runs carry their
    error in ``Trajectory.error`` instead of raising.
    """
    groups: dict[tuple, list[int]] = {}
    for index, scenario in enumerate(scenarios):
        groups.setdefault(_batch_key(scenario), []).append(index)
    chunks = [
        members[start:start + chunk_size]
        for members in groups.values()
        for start in range(0, len(members), chunk_size)
    ]
    logger.info("integrating %d runs in %d batches (jobs=%d)", len(scenarios), len(chunks), n_jobs)
    results = Parallel(n_jobs=n_jobs)(
        delayed(integrate_batch)([scenarios[i] for i in chunk]) for chunk in chunks
    )
    trajectories: list[Trajectory | None] = [None] * len(scenarios)
    for chunk, batch in zip(chunks, results):
        for index, trajectory in zip(chunk, batch):
            trajectories[index] = trajectory
            if not quiet:
                _log_events(scenarios[index], trajectory)
    return trajectories


def integrate_platoon(scenario: Scenario, *, raise_on_error: bool = True) -> Trajectory:
    """Integrate a single scenario with classical RK4.

    Raises:
        CollisionError: If two consecutive vehicles close to spacing <= 1e-9
        LeadProfileError: If the lead velocity leaves [0, v_max]
        NegativeVelocityError: If a follower velocity drops below zero and
            the scenario is configured to fail on it
    """
    (trajectory,) = integrate_many([scenario])
    if raise_on_error and trajectory.error is not None:
        raise trajectory.error
    return trajectory


def state_at(trajectory: Trajectory, index: int = -1) -> PlatoonState:
    """PlatoonState of one recorded sample."""
    vehicles = [
        VehicleState(float(x), float(v))
        for x, v in zip(trajectory.positions[index], trajectory.velocities[index])
    ]
    return PlatoonState(time=float(trajectory.times[index]), lead=vehicles[0], followers=tuple(vehicles[1:]))
