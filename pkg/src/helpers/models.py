"""Acceleration laws for the energy-aware model and the OVFL baseline, plus lead profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import (
    TANH2,
    CollisionError,
    DomainError,
    FloatOrArray,
    ModelParams,
)

# Spacing at or below which two vehicles are considered to have collided.
COLLISION_SPACING = 1e-9

ModelKind = Literal["proposed", "ovfl"]
MODEL_KINDS: tuple[str, ...] = ("proposed", "ovfl")


@dataclass(frozen=True)
class FollowerInput:
    """State of one (lead, ego) pair."""

    lead_position: float
    lead_velocity: float
    ego_position: float
    ego_velocity: float

    @property
    def spacing(self) -> float:
        return self.lead_position - self.ego_position

    @property
    def relative_velocity(self) -> float:
        return self.lead_velocity - self.ego_velocity


# =============================================================================
# Kernels (no checks, broadcast over arrays; used by the integrator)
# =============================================================================


def ovfl_kernel(spacing, v_lead, v, alpha, beta):
    return alpha * (np.tanh(spacing - 2.0) + TANH2 - v) + beta * (v_lead - v) / (spacing * spacing)


def control_kernel(v, v_lead, kappa, epsilon):
    dv2 = (v_lead - v) * (v_lead - v)
    return -kappa * (v * v) * (dv2 / (dv2 + epsilon))


def follower_accel(spacing, v_lead, v, alpha, beta, kappa, epsilon):
    """Proposed law as OVFL plus the control term; kappa = 0 gives OVFL exactly."""
    return ovfl_kernel(spacing, v_lead, v, alpha, beta) + control_kernel(v, v_lead, kappa, epsilon)


# =============================================================================
# Public operations
# =============================================================================


def _checked_spacing(inp: FollowerInput) -> float:
    values = (inp.lead_position, inp.lead_velocity, inp.ego_position, inp.ego_velocity)
    if not all(math.isfinite(v) for v in values):
        raise DomainError("follower input must be finite")
    spacing = inp.spacing
    if spacing <= COLLISION_SPACING:
        raise CollisionError(front=0, rear=1, time=float("nan"), spacing=spacing)
    return spacing


def energy_control_term(v: ArrayLike, v_l: ArrayLike, kappa: float, epsilon: float) -> FloatOrArray:
    """Return -kappa v^2 (v_l - v)^2 / ((v_l - v)^2 + epsilon), never positive."""
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    v_arr = np.asarray(v, dtype=float)
    vl_arr = np.asarray(v_l, dtype=float)
    if not (np.all(np.isfinite(v_arr)) and np.all(np.isfinite(vl_arr)) and math.isfinite(kappa)):
        raise DomainError("energy_control_term requires finite inputs")
    value = control_kernel(v_arr, vl_arr, kappa, epsilon)
    return float(value) if np.ndim(value) == 0 else value


def ovfl_accel(inp: FollowerInput, params: ModelParams) -> float:
    """OVFL acceleration alpha (V(s) - v) + beta (v_l - v) / s^2.

    Raises:
        CollisionError: If the spacing is at or below the collision threshold
    """
    spacing = _checked_spacing(inp)
    return float(ovfl_kernel(spacing, inp.lead_velocity, inp.ego_velocity, params.alpha, params.beta))


def proposed_accel(inp: FollowerInput, params: ModelParams) -> float:
    """Energy-aware acceleration: the OVFL law plus the energy control term."""
    base = ovfl_accel(inp, params)
    return base + energy_control_term(inp.ego_velocity, inp.lead_velocity, params.kappa, params.epsilon)


def accel_for(kind: str, inp: FollowerInput, params: ModelParams) -> float:
    if kind == "proposed":
        return proposed_accel(inp, params)
    if kind == "ovfl":
        return ovfl_accel(inp, params)
    raise DomainError(f"unknown model kind '{kind}', expected one of {MODEL_KINDS}")


def effective_kappa(kind: str, params: ModelParams) -> float:
    """Gain of the control term actually applied by a model kind."""
    if kind not in MODEL_KINDS:
        raise DomainError(f"unknown model kind '{kind}', expected one of {MODEL_KINDS}")
    return params.kappa if kind == "proposed" else 0.0


# =============================================================================
# Lead profiles
# =============================================================================

FLUCTUATING_AMPLITUDE = 1.65 / 1.37
FLUCTUATING_FREQUENCIES = (0.5 * math.pi, 3.2 * math.pi)
FLUCTUATING_WINDOW = (0.0, 20.0)

LEAD_KINDS = ("constant", "table", "fluctuating")
# accepted spellings mapped to their canonical kind
LEAD_KIND_ALIASES = {"paper_fluctuating": "fluctuating"}


@dataclass(frozen=True)
class LeadProfile:
    """Acceleration profile of the lead vehicle.

    kind:
    - constant: ``accel`` for all t
    - table: piecewise-constant hold-last over ``breakpoints`` (time, accel);
      zero before the first breakpoint
    - fluctuating (alias paper_fluctuating): -amplitude [sin(w1 t) + cos(w2 t)]
      inside ``window``, else 0
    """

    kind: Literal["constant", "table", "fluctuating", "paper_fluctuating"] = "constant"
    accel: float = 0.0
    breakpoints: tuple[tuple[float, float], ...] = ()
    amplitude: float = FLUCTUATING_AMPLITUDE
    frequencies: tuple[float, float] = FLUCTUATING_FREQUENCIES
    window: tuple[float, float] = FLUCTUATING_WINDOW

    def __post_init__(self) -> None:
        points = tuple((float(t), float(a)) for t, a in self.breakpoints)
        object.__setattr__(self, "breakpoints", points)
        object.__setattr__(self, "frequencies", tuple(float(w) for w in self.frequencies))
        object.__setattr__(self, "window", tuple(float(w) for w in self.window))
        object.__setattr__(self, "kind", LEAD_KIND_ALIASES.get(self.kind, self.kind))
        if self.kind not in LEAD_KINDS:
            raise DomainError(f"unknown lead profile kind '{self.kind}'")
        if self.kind == "table":
            if not points:
                raise DomainError("table lead profile needs at least one breakpoint")
            times = [t for t, _ in points]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise DomainError("table breakpoints must be strictly increasing in time")
        if self.kind == "fluctuating" and not self.window[1] > self.window[0]:
            raise DomainError("fluctuating window must be non-degenerate")

    @classmethod
    def constant(cls, accel: float = 0.0) -> LeadProfile:
        return cls(kind="constant", accel=float(accel))

    @classmethod
    def table(cls, breakpoints) -> LeadProfile:
        return cls(kind="table", breakpoints=tuple(breakpoints))

    @classmethod
    def fluctuating(cls) -> LeadProfile:
        return cls(kind="fluctuating")

    @property
    def active_until(self) -> float:
        """Time after which the lead acceleration no longer changes."""
        if self.kind == "fluctuating":
            return self.window[1]
        if self.kind == "table":
            return self.breakpoints[-1][0]
        return 0.0

    def accel_at(self, t: ArrayLike) -> FloatOrArray:
        times = np.asarray(t, dtype=float)
        if self.kind == "constant":
            values = np.full(times.shape, self.accel)
        elif self.kind == "table":
            knots = np.array([p[0] for p in self.breakpoints])
            accels = np.array([0.0] + [p[1] for p in self.breakpoints])
            values = accels[np.searchsorted(knots, times, side="right")]
        else:
            w1, w2 = self.frequencies
            lo, hi = self.window
            inside = (times >= lo) & (times <= hi)
            values = np.where(
                inside, -self.amplitude * (np.sin(w1 * times) + np.cos(w2 * times)), 0.0
            )
        return float(values) if np.ndim(t) == 0 else values


def lead_accel(profile: LeadProfile, t: ArrayLike) -> FloatOrArray:
    """Lead acceleration at time(s) ``t``."""
    if np.any(np.asarray(t) < 0):
        raise DomainError("lead_accel is defined for t >= 0")
    return profile.accel_at(t)
