"""2RC equivalent-circuit cell model and the mechanical-power-to-cell-current chain.

All quantities are SI. Functions broadcast over numpy arrays so the integrator
can evaluate one battery chain per vehicle and per run in a single call.

Current sign convention: positive while discharging, negative while charging
(regenerative braking).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from numpy.typing import ArrayLike

from .core import (
    BatteryCapabilityError,
    ConstraintBreachError,
    DomainError,
    FloatOrArray,
    ParameterError,
)

logger = logging.getLogger(__name__)

GRAVITY = 9.81
# Power loss below this value is a breach of Q >= 0, above it float noise.
Q_BREACH = -1e-9


@dataclass(frozen=True)
class BatteryParams:
    """Cell constants and pack layout.

    Defaults describe a representative small Li-ion cell. They are engineering
    placeholders, not authoritative parameterisations.
    """

    R_s: float = 0.01
    R_1: float = 0.015
    C_1: float = 2400.0
    R_2: float = 0.002
    C_2: float = 50000.0
    C_n: float = 2.3
    N_s: int = 100
    N_p: int = 10
    eta: float = 0.8
    ocv_soc: tuple[float, ...] = (0.0, 1.0)
    ocv_voltage: tuple[float, ...] = (3.2, 3.9)

    def __post_init__(self) -> None:
        object.__setattr__(self, "ocv_soc", tuple(float(s) for s in self.ocv_soc))
        object.__setattr__(self, "ocv_voltage", tuple(float(v) for v in self.ocv_voltage))
        violations = battery_violations(self)
        if violations:
            raise ParameterError(violations)

    @property
    def tau_1(self) -> float:
        return self.R_1 * self.C_1

    @property
    def tau_2(self) -> float:
        return self.R_2 * self.C_2


def battery_violations(params: BatteryParams) -> list[str]:
    violations = []
    for name in ("R_s", "R_1", "C_1", "R_2", "C_2", "C_n"):
        if not getattr(params, name) > 0:
            violations.append(f"{name} must be positive")
    if params.N_s < 1 or params.N_p < 1:
        violations.append("N_s and N_p must be at least 1")
    if not 0 < params.eta <= 1:
        violations.append("eta must lie in (0, 1]")
    soc, volt = params.ocv_soc, params.ocv_voltage
    if len(soc) < 2 or len(soc) != len(volt):
        violations.append("ocv curve needs at least two (soc, voltage) breakpoints")
    else:
        if any(b <= a for a, b in zip(soc, soc[1:])):
            violations.append("ocv soc breakpoints must be strictly increasing")
        if soc[0] > 0.0 or soc[-1] < 1.0:
            violations.append("ocv soc breakpoints must cover [0, 1]")
        if any(b < a for a, b in zip(volt, volt[1:])):
            violations.append("ocv curve must be monotone non-decreasing in soc")
    return violations


@dataclass(frozen=True)
class BatteryState:
    """Dynamic cell states. Fields may be floats or equally shaped arrays."""

    V_1: FloatOrArray = 0.0
    V_2: FloatOrArray = 0.0
    S: FloatOrArray = 0.8


@dataclass(frozen=True)
class VehicleBodyParams:
    m: float = 1500.0
    rho: float = 1.2
    A: float = 2.0
    C_d: float = 0.3
    C_r: float = 0.01
    theta: float = 0.0
    g: float = GRAVITY

    def __post_init__(self) -> None:
        violations = []
        for name in ("m", "rho", "A"):
            if not getattr(self, name) > 0:
                violations.append(f"{name} must be positive")
        if self.C_d < 0 or self.C_r < 0:
            violations.append("C_d and C_r must be non-negative")
        if not abs(self.theta) < math.pi / 2:
            violations.append("|theta| must be below pi/2")
        if violations:
            raise ParameterError(violations)


@dataclass(frozen=True)
class UnitScaling:
    """Maps dimensionless model units onto SI units for the battery chain."""

    length_scale: float = 10.0
    time_scale: float = 1.0

    def __post_init__(self) -> None:
        if not (self.length_scale > 0 and self.time_scale > 0):
            raise ParameterError(["length_scale and time_scale must be positive"])

    def velocity(self, v: ArrayLike) -> FloatOrArray:
        return np.asarray(v) * (self.length_scale / self.time_scale)

    def acceleration(self, a: ArrayLike) -> FloatOrArray:
        return np.asarray(a) * (self.length_scale / self.time_scale**2)

    def seconds(self, dt: float) -> float:
        return dt * self.time_scale


# =============================================================================
# Cell dynamics
# =============================================================================


def open_circuit_voltage(S: ArrayLike, params: BatteryParams) -> FloatOrArray:
    return np.interp(S, params.ocv_soc, params.ocv_voltage)


def terminal_voltage(state: BatteryState, I: ArrayLike, params: BatteryParams) -> FloatOrArray:
    """V_T = V_OCV(S) - V_1 - V_2 - I R_s."""
    return open_circuit_voltage(state.S, params) - state.V_1 - state.V_2 - np.asarray(I) * params.R_s


def rc_derivatives(
    state: BatteryState, I: ArrayLike, params: BatteryParams
) -> tuple[FloatOrArray, FloatOrArray]:
    """(dV_1/dt, dV_2/dt) with dV_i/dt = -V_i / (R_i C_i) + I / C_i."""
    I = np.asarray(I, dtype=float)
    d1 = -state.V_1 / params.tau_1 + I / params.C_1
    d2 = -state.V_2 / params.tau_2 + I / params.C_2
    return d1, d2


def soc_derivative(I: ArrayLike, params: BatteryParams) -> FloatOrArray:
    return -np.asarray(I, dtype=float) / (3600.0 * params.C_n)


def raw_power_loss(state: BatteryState, I: ArrayLike, params: BatteryParams) -> FloatOrArray:
    """Q = I (V_1 + V_2 + R_s I) without clamping."""
    I = np.asarray(I, dtype=float)
    return I * (state.V_1 + state.V_2 + params.R_s * I)


def power_loss(state: BatteryState, I: ArrayLike, params: BatteryParams) -> FloatOrArray:
    """Heat generation Q = I (V_OCV - V_T), clamped at zero.

    Raises:
        ConstraintBreachError: If Q falls below -1e-9 (physically Q >= 0)
    """
    q = raw_power_loss(state, I, params)
    if np.any(q < Q_BREACH):
        raise ConstraintBreachError(f"power loss Q={np.min(q):.6g} W breaches Q >= 0")
    q = np.maximum(q, 0.0)
    return float(q) if np.ndim(q) == 0 else q


# =============================================================================
# Power chain
# =============================================================================


def resistive_force(v: ArrayLike, body: VehicleBodyParams) -> FloatOrArray:
    """Aerodynamic drag + rolling resistance + grade force (N)."""
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise DomainError("resistive_force is defined for v >= 0")
    drag = 0.5 * body.rho * body.A * body.C_d * v * v
    rolling = body.C_r * body.m * body.g
    grade = body.m * body.g * math.sin(body.theta)
    return drag + rolling + grade


def motor_power_from_dynamics(v: ArrayLike, a: ArrayLike, body: VehicleBodyParams) -> FloatOrArray:
    """Mechanical motor power (m a + F_total) v; negative means regeneration."""
    v = np.asarray(v, dtype=float)
    return (body.m * np.asarray(a, dtype=float) + resistive_force(v, body)) * v


def cell_power_from_motor(P_motor: ArrayLike, params: BatteryParams) -> FloatOrArray:
    """Per-cell power: motoring draws P/eta, regeneration returns eta P."""
    P_motor = np.asarray(P_motor, dtype=float)
    cells = params.N_s * params.N_p
    return np.where(P_motor > 0, P_motor / (params.eta * cells), params.eta * P_motor / cells)


def max_cell_power(state: BatteryState, params: BatteryParams) -> FloatOrArray:
    v_eff = open_circuit_voltage(state.S, params) - state.V_1 - state.V_2
    return v_eff * v_eff / (4.0 * params.R_s)


def _cell_current(P_output, v_eff, R_s):
    """Smaller-magnitude root of R_s I^2 - v_eff I + P = 0 and an infeasibility mask.

    The root is written as 2P / (v_eff + sqrt(disc)) to avoid cancellation.
    Infeasible entries get the maximum-power current v_eff / (2 R_s).
    """
    disc = v_eff * v_eff - 4.0 * R_s * P_output
    infeasible = disc < 0
    root = np.sqrt(np.maximum(disc, 0.0))
    current = np.where(infeasible, v_eff / (2.0 * R_s), 2.0 * P_output / (v_eff + root))
    return current, infeasible


def solve_cell_current(P_output: ArrayLike, state: BatteryState, params: BatteryParams) -> FloatOrArray:
    """Cell current delivering ``P_output`` at the terminal, I V_T(I) = P_output.

    Raises:
        BatteryCapabilityError: If the demand exceeds V_eff^2 / (4 R_s)
    """
    P = np.asarray(P_output, dtype=float)
    v_eff = open_circuit_voltage(state.S, params) - state.V_1 - state.V_2
    current, infeasible = _cell_current(P, v_eff, params.R_s)
    if np.any(infeasible):
        P_b, v_b = (np.ravel(x) for x in np.broadcast_arrays(P, v_eff))
        worst = int(np.argmax(np.where(np.ravel(infeasible), P_b, -np.inf)))
        raise BatteryCapabilityError(
            demanded=float(P_b[worst]),
            max_power=float(v_b[worst] ** 2 / (4.0 * params.R_s)),
        )
    return float(current) if np.ndim(current) == 0 else current


def solve_cell_current_saturating(P_output, state: BatteryState, params: BatteryParams):
    """Like ``solve_cell_current`` but returns (current, infeasible mask) instead of raising."""
    v_eff = open_circuit_voltage(state.S, params) - state.V_1 - state.V_2
    return _cell_current(np.asarray(P_output, dtype=float), v_eff, params.R_s)


def soc_in_range(state: BatteryState):
    S = np.asarray(state.S)
    return (S >= 0.0) & (S <= 1.0)


def step_battery(
    state: BatteryState,
    I: ArrayLike,
    dt: float,
    params: BatteryParams,
    on_breach: Literal["raise", "ignore"] = "raise",
) -> BatteryState:
    """Advance the cell over ``dt`` seconds with current held constant.

    The RC branches use the exact exponential solution of their linear ODE,
    so n substeps of dt/n agree with one step of dt.

    Raises:
        DomainError: If dt is not positive
        ConstraintBreachError: If S leaves [0, 1] and ``on_breach`` is "raise"
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    I = np.asarray(I, dtype=float)
    e1 = math.exp(-dt / params.tau_1)
    e2 = math.exp(-dt / params.tau_2)
    v1 = state.V_1 * e1 + params.R_1 * I * (1.0 - e1)
    v2 = state.V_2 * e2 + params.R_2 * I * (1.0 - e2)
    s = state.S - I * dt / (3600.0 * params.C_n)
    if np.ndim(v1) == 0:
        v1, v2, s = float(v1), float(v2), float(s)
    new_state = BatteryState(V_1=v1, V_2=v2, S=s)
    if on_breach == "raise" and not np.all(soc_in_range(new_state)):
        raise ConstraintBreachError(f"state of charge left [0, 1]: S={s}")
    return new_state


# =============================================================================
# Zero-current optimality oracle
# =============================================================================


@dataclass
class ProfileScore:
    profile: tuple[float, ...]
    heat: float
    feasible: bool
    reason: str = ""


@dataclass
class ZeroCurrentReport:
    """Ranking of every piecewise-constant current profile by total heat."""

    horizon: float
    grid: tuple[float, ...]
    steps: int
    ranking: list[ProfileScore] = field(default_factory=list)

    @property
    def feasible(self) -> list[ProfileScore]:
        return [score for score in self.ranking if score.feasible]

    @property
    def best(self) -> ProfileScore:
        return self.feasible[0]

    @property
    def discarded(self) -> int:
        return len(self.ranking) - len(self.feasible)

    @property
    def zero_is_optimal(self) -> bool:
        best = self.best
        return all(i == 0.0 for i in best.profile) and all(
            s.heat >= best.heat for s in self.feasible
        )

    @property
    def zero_is_unique(self) -> bool:
        """Every feasible profile carrying current has strictly positive heat."""
        return all(
            s.heat > 0.0 for s in self.feasible if any(i != 0.0 for i in s.profile)
        )


def _segment_heat(state: BatteryState, I: float, dt: float, params: BatteryParams, samples: int):
    """Exact integral of Q over one constant-current segment, and min Q on a sample grid."""
    heat = params.R_s * I * I * dt
    for v0, R, tau in ((state.V_1, params.R_1, params.tau_1), (state.V_2, params.R_2, params.tau_2)):
        # integral of V_i over the segment
        heat += I * (R * I * dt + (v0 - R * I) * tau * (1.0 - math.exp(-dt / tau)))
    ts = np.linspace(0.0, dt, samples)
    v1 = state.V_1 * np.exp(-ts / params.tau_1) + params.R_1 * I * (1 - np.exp(-ts / params.tau_1))
    v2 = state.V_2 * np.exp(-ts / params.tau_2) + params.R_2 * I * (1 - np.exp(-ts / params.tau_2))
    q_min = float(np.min(I * (v1 + v2 + params.R_s * I)))
    return heat, q_min


def verify_zero_current_optimality(
    horizon: float,
    grid: Sequence[float],
    steps: int,
    state0: BatteryState,
    params: BatteryParams,
    samples_per_step: int = 17,
) -> ZeroCurrentReport:
    """Enumerate every piecewise-constant current profile over ``grid`` and rank by heat.

    Profiles that breach Q >= 0 or S in [0, 1] anywhere are kept in the ranking
    but marked infeasible.
    """
    grid = tuple(float(i) for i in grid)
    if 0.0 not in grid:
        raise DomainError("current grid must include 0")
    if steps < 1 or not horizon > 0:
        raise DomainError("steps must be >= 1 and horizon positive")
    dt = horizon / steps
    report = ZeroCurrentReport(horizon=horizon, grid=grid, steps=steps)
    for profile in itertools.product(grid, repeat=steps):
        state = state0
        heat = 0.0
        reason = ""
        for current in profile:
            segment, q_min = _segment_heat(state, current, dt, params, samples_per_step)
            heat += segment
            state = step_battery(state, current, dt, params, on_breach="ignore")
            if q_min < Q_BREACH:
                reason = "Q < 0"
            elif not soc_in_range(state):
                reason = "S outside [0, 1]"
            if reason:
                break
        report.ranking.append(ProfileScore(profile, heat, feasible=not reason, reason=reason))
    report.ranking.sort(key=lambda s: (not s.feasible, s.heat, [abs(i) for i in s.profile]))
    logger.debug(
        "enumerated %d current profiles, %d discarded", len(report.ranking), report.discarded
    )
    return report
