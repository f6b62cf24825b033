"""Core domain types, the optimal velocity function and parameter validation."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

FloatOrArray = Union[float, NDArray[np.float64]]

TANH2 = float(np.tanh(2.0))
# Open range of the optimal velocity function.
V_INF = TANH2 - 1.0
V_SUP = TANH2 + 1.0

DEFAULT_EPSILON = 1e-6
DEFAULT_V_MAX = V_SUP


# =============================================================================
# Errors
# =============================================================================


class EvPlatoonError(Exception):
    """Base class for every error raised by the simulation engine."""


class DomainError(EvPlatoonError, ValueError):
    """Raised when an argument lies outside the domain of an operation."""


class ParameterError(EvPlatoonError, ValueError):
    """Raised when parameters violate one or more model rules.

    The complete list of violated rules is kept in ``violations``.
    """

    def __init__(self, violations: Iterable[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))

    def __reduce__(self):
        return type(self), (self.violations,)


class CollisionError(EvPlatoonError):
    """Raised when the spacing between two consecutive vehicles closes."""

    def __init__(self, front: int, rear: int, time: float, spacing: float):
        self.front = front
        self.rear = rear
        self.time = time
        self.spacing = spacing
        super().__init__(
            f"collision between vehicle {front} and vehicle {rear} at t={time:.6g} "
            f"(spacing {spacing:.3g})"
        )

    def __reduce__(self):
        return type(self), (self.front, self.rear, self.time, self.spacing)


class LeadProfileError(EvPlatoonError):
    """Raised when a lead profile drives the lead velocity out of [0, v_max]."""


class NegativeVelocityError(EvPlatoonError):
    """Raised when a follower velocity becomes negative and that is configured as fatal."""


class ConstraintBreachError(EvPlatoonError):
    """Raised when a physical constraint (Q >= 0, S in [0, 1]) is breached."""


class BatteryCapabilityError(EvPlatoonError):
    """Raised when the demanded cell power exceeds what the cell can deliver."""

    def __init__(self, demanded: float, max_power: float):
        self.demanded = demanded
        self.max_power = max_power
        super().__init__(
            f"power demand exceeds battery capability: demanded {demanded:.6g} W, "
            f"maximum deliverable {max_power:.6g} W"
        )

    def __reduce__(self):
        return type(self), (self.demanded, self.max_power)


class ScenarioFileError(EvPlatoonError, ValueError):
    """Raised when a scenario file cannot be parsed or validated."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line is not None else ""
        self.message = message
        super().__init__(f"{where}{message}")

    def __reduce__(self):
        return type(self), (self.message, self.line, self.column)


class SimulationError(EvPlatoonError):
    """Wraps a failed run together with the label of the model that failed."""

    def __init__(self, label: str, cause: Exception):
        self.label = label
        self.cause = cause
        super().__init__(f"[{label}] {cause}")

    def __reduce__(self):
        return type(self), (self.label, self.cause)


# =============================================================================
# Domain types
# =============================================================================


@dataclass(frozen=True)
class ModelParams:
    """Car-following coefficients in dimensionless model units."""

    alpha: float = 2.0
    beta: float = 3.0
    kappa: float = 0.03
    epsilon: float = DEFAULT_EPSILON
    v_max: float = DEFAULT_V_MAX

    def with_kappa(self, kappa: float) -> ModelParams:
        return replace(self, kappa=float(kappa))


@dataclass(frozen=True)
class VehicleState:
    position: float
    velocity: float


@dataclass(frozen=True)
class PlatoonState:
    """Lead vehicle (index 0) and followers 1..N, front to back."""

    time: float
    lead: VehicleState
    followers: tuple[VehicleState, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "followers", tuple(self.followers))
        for n, gap in enumerate(self.spacings(), start=1):
            if not gap > 0.0:
                raise DomainError(
                    f"spacing between vehicle {n - 1} and vehicle {n} must be positive, got {gap}"
                )

    @property
    def vehicles(self) -> tuple[VehicleState, ...]:
        return (self.lead, *self.followers)

    def spacings(self) -> list[float]:
        vehicles = self.vehicles
        return [
            vehicles[n - 1].position - vehicles[n].position
            for n in range(1, len(vehicles))
        ]


# =============================================================================
# Optimal velocity function
# =============================================================================


def _as_output(values: NDArray[np.float64], like: ArrayLike) -> FloatOrArray:
    return float(values) if np.ndim(like) == 0 else values


def optimal_velocity(u: ArrayLike) -> FloatOrArray:
    """Evaluate V(u) = tanh(u - 2) + tanh(2).

    Accepts scalars or arrays. Raises ``DomainError`` on non-finite input.
    """
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("optimal_velocity requires a finite headway")
    return _as_output(np.tanh(arr - 2.0) + TANH2, u)


def optimal_velocity_derivative(u: ArrayLike) -> FloatOrArray:
    """V'(u) = sech^2(u - 2)."""
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("optimal_velocity_derivative requires a finite headway")
    th = np.tanh(arr - 2.0)
    return _as_output(1.0 - th * th, u)


def optimal_velocity_inverse(v_bar: ArrayLike) -> FloatOrArray:
    """Return the headway z with V(z) = v_bar.

    Raises:
        DomainError: If v_bar is outside the open interval (tanh(2)-1, tanh(2)+1)
    """
    arr = np.asarray(v_bar, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= V_INF) or np.any(arr >= V_SUP):
        raise DomainError(
            f"v_bar must lie in the open interval ({V_INF:.9g}, {V_SUP:.9g}), got {v_bar}"
        )
    return _as_output(2.0 + np.arctanh(arr - TANH2), v_bar)


# =============================================================================
# Validation
# =============================================================================


def param_violations(params: ModelParams, *, enforce_stability_rule: bool = True) -> list[str]:
    """Return every rule that ``params`` violates (empty when valid)."""
    violations: list[str] = []
    values = (params.alpha, params.beta, params.kappa, params.epsilon, params.v_max)
    if not all(np.isfinite(values)):
        violations.append("all parameters must be finite")
    if not params.alpha > 0:
        violations.append("alpha must be positive")
    if not params.beta > 0:
        violations.append("beta must be positive")
    if not params.kappa >= 0:
        violations.append("kappa must be non-negative")
    if not params.epsilon > 0:
        violations.append("epsilon must be positive")
    if not params.v_max > 0:
        violations.append("v_max must be positive")
    if not params.beta > params.alpha:
        violations.append("beta must exceed alpha")
    if enforce_stability_rule and not (params.kappa < params.alpha and params.kappa < params.beta):
        violations.append("kappa must be below alpha and beta")
    return violations


def validate_params(params: ModelParams, *, enforce_stability_rule: bool = True) -> ModelParams:
    """Return ``params`` unchanged if every rule holds.

    Raises:
        ParameterError: Carrying the complete list of violated rules
    """
    violations = param_violations(params, enforce_stability_rule=enforce_stability_rule)
    if violations:
        raise ParameterError(violations)
    return params
