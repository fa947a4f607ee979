"""Bang-bang pneumatic stage simulation.

Each stage is driven by a 3-state valve (forward / reverse / off) and observed
through an incremental encoder. The controller closes the valve once the
encoder error magnitude drops to the stop threshold; the piston then coasts a
direction-dependent distance (speed x coast_time) before resting. There is no
proportional control anywhere, which is what makes the stage MR-compatible
and also what produces the characteristic settle residuals this package
models.

Determinism notes:

* The valve-off point inside a tick is located exactly (the crossing count is
  computed in closed form), so the settled position does not depend on dt.
* The coast is tracked as a precomputed rest position rather than a running
  remainder, so the final position is a single float expression, again
  independent of dt.
* The encoder is quadrature-like: its count updates as boundaries are crossed
  in the direction of motion, so a boundary landed on exactly reads the count
  of the arrival side. counts_per_mm=None selects an ideal continuous
  encoder.
* The controller latches off once the stop condition is met; it re-engages
  only on a new command_setpoint. Hence valve off + coast finished implies
  the position never changes again.

State objects are small mutable dataclasses; tick/command mutate in place and
return the state for chaining. Use snapshot() when handing one across a
thread boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from typing import Optional, Tuple

import numpy as np

from .errors import SettleTimeout, TargetOutOfTravel


class AxisId(IntEnum):
    """Stage numbering: upper carriage first, x before y."""

    UPPER_X = 1
    UPPER_Y = 2
    LOWER_X = 3
    LOWER_Y = 4

    @property
    def is_x(self) -> bool:
        return self in (AxisId.UPPER_X, AxisId.LOWER_X)

    @property
    def is_upper(self) -> bool:
        return self in (AxisId.UPPER_X, AxisId.UPPER_Y)


class Valve(Enum):
    OFF = 0
    FORWARD = 1
    REVERSE = -1


@dataclass(frozen=True)
class AxisParams:
    """Static description of one pneumatic stage."""

    speed_fwd_mm_s: float = 0.5
    speed_rev_mm_s: float = 0.5
    stop_threshold_mm: float = 0.3
    coast_time_s: float = 0.3
    travel_mm: Tuple[float, float] = (-27.5, 27.5)
    counts_per_mm: Optional[float] = 100.0
    delay_s: float = 0.0

    def __post_init__(self):
        for v in (self.speed_fwd_mm_s, self.speed_rev_mm_s):
            if not 0.0 < v <= 5.0:
                raise ValueError(f"stage speed {v} mm/s outside (0, 5]")
        if self.stop_threshold_mm < 0.0:
            raise ValueError("stop threshold must be >= 0")
        if self.coast_time_s < 0.0:
            raise ValueError("coast time must be >= 0")
        if self.travel_mm[0] >= self.travel_mm[1]:
            raise ValueError("travel range is empty")
        if self.counts_per_mm is not None and self.counts_per_mm <= 0.0:
            raise ValueError("counts_per_mm must be positive (or None)")
        if self.delay_s < 0.0:
            raise ValueError("delay must be >= 0")

    def speed(self, direction: int) -> float:
        return self.speed_fwd_mm_s if direction > 0 else self.speed_rev_mm_s

    def coast_distance_mm(self, direction: int) -> float:
        return self.speed(direction) * self.coast_time_s

    def to_json_dict(self) -> dict:
        return {
            "speed_fwd_mm_s": self.speed_fwd_mm_s,
            "speed_rev_mm_s": self.speed_rev_mm_s,
            "stop_threshold_mm": self.stop_threshold_mm,
            "coast_time_s": self.coast_time_s,
            "travel_mm": list(self.travel_mm),
            "counts_per_mm": self.counts_per_mm,
            "delay_s": self.delay_s,
        }

    @classmethod
    def from_json_dict(cls, doc: dict, base: "AxisParams" = None) -> "AxisParams":
        base = base or cls()
        kw = {}
        for key in (
            "speed_fwd_mm_s",
            "speed_rev_mm_s",
            "stop_threshold_mm",
            "coast_time_s",
            "delay_s",
        ):
            if key in doc:
                kw[key] = float(doc[key])
        if "travel_mm" in doc:
            lo, hi = doc["travel_mm"]
            kw["travel_mm"] = (float(lo), float(hi))
        if "counts_per_mm" in doc:
            cpm = doc["counts_per_mm"]
            kw["counts_per_mm"] = None if cpm is None else float(cpm)
        return replace(base, **kw)


@dataclass
class AxisState:
    """Instantaneous stage state. Mutable; copy with snapshot()."""

    position_mm: float = 0.0
    setpoint_mm: Optional[float] = None
    valve: Valve = Valve.OFF
    # Rest position the piston coasts to after valve close; None when parked.
    coast_target_mm: Optional[float] = None
    delay_remaining_s: float = 0.0
    last_direction: int = 1
    at_min_limit: bool = False
    at_max_limit: bool = False

    def snapshot(self) -> "AxisState":
        return AxisState(
            self.position_mm,
            self.setpoint_mm,
            self.valve,
            self.coast_target_mm,
            self.delay_remaining_s,
            self.last_direction,
            self.at_min_limit,
            self.at_max_limit,
        )


def encoder_counts(params: AxisParams, position_mm: float, direction: int) -> float:
    """Encoder count at a position, given the direction it was approached from."""
    cpm = params.counts_per_mm
    if cpm is None:
        return position_mm
    if direction >= 0:
        return math.floor(position_mm * cpm + 0.5)
    return math.ceil(position_mm * cpm - 0.5)


def encoder_position(params: AxisParams, state: AxisState) -> float:
    """Position as the encoder reports it, mm."""
    cpm = params.counts_per_mm
    if cpm is None:
        return state.position_mm
    return encoder_counts(params, state.position_mm, state.last_direction) / cpm


def is_settled(state: AxisState) -> bool:
    """True when no further motion can occur without a new command."""
    return (
        state.valve is Valve.OFF
        and state.coast_target_mm is None
        and state.delay_remaining_s == 0.0
    )


def _stop_position(params: AxisParams, setpoint: float, direction: int) -> float:
    """Exact position at which the encoder error first reaches the threshold.

    Moving with `direction`, the valve closes at the first encoder count whose
    error magnitude is <= the threshold; this returns the true position where
    that count is produced (a half-count boundary for a quantised encoder).
    """
    cpm = params.counts_per_mm
    if cpm is None:
        return setpoint - direction * params.stop_threshold_mm
    target_counts = math.floor(setpoint * cpm + 0.5)
    thr_counts = math.floor(params.stop_threshold_mm * cpm + 0.5)
    if direction > 0:
        return (target_counts - thr_counts - 0.5) / cpm
    return (target_counts + thr_counts + 0.5) / cpm


def _clamp_to_travel(params: AxisParams, state: AxisState) -> bool:
    """Apply limit switches. Returns True if a limit was hit."""
    lo, hi = params.travel_mm
    if state.position_mm <= lo:
        state.position_mm = lo
        state.at_min_limit = True
    elif state.position_mm >= hi:
        state.position_mm = hi
        state.at_max_limit = True
    else:
        state.at_min_limit = False
        state.at_max_limit = False
        return False
    # A tripped limit switch kills the valve and any residual coast.
    state.valve = Valve.OFF
    state.coast_target_mm = None
    return True


def command_setpoint(params: AxisParams, state: AxisState, target_mm: float) -> AxisState:
    """Issue a new setpoint; decides the valve from the current encoder error."""
    lo, hi = params.travel_mm
    if not lo <= target_mm <= hi:
        raise TargetOutOfTravel(
            f"setpoint {target_mm:.3f} mm outside travel [{lo:.3f}, {hi:.3f}]"
        )
    state.setpoint_mm = target_mm
    state.coast_target_mm = None
    err = target_mm - encoder_position(params, state)
    if abs(err) <= params.stop_threshold_mm:
        state.valve = Valve.OFF
        state.delay_remaining_s = 0.0
        return state
    state.valve = Valve.FORWARD if err > 0 else Valve.REVERSE
    state.delay_remaining_s = params.delay_s
    # Leaving a limit switch under power is allowed.
    if state.valve is Valve.FORWARD and state.at_min_limit:
        state.at_min_limit = False
    if state.valve is Valve.REVERSE and state.at_max_limit:
        state.at_max_limit = False
    return state


def tick(params: AxisParams, state: AxisState, dt: float) -> AxisState:
    """Advance the stage by dt seconds of simulated time."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    remaining = dt

    if state.delay_remaining_s > 0.0:
        if state.delay_remaining_s >= remaining:
            state.delay_remaining_s -= remaining
            if state.delay_remaining_s < 1e-15:
                state.delay_remaining_s = 0.0
            return state
        remaining -= state.delay_remaining_s
        state.delay_remaining_s = 0.0

    if state.valve is not Valve.OFF:
        d = 1 if state.valve is Valve.FORWARD else -1
        speed = params.speed(d)
        state.last_direction = d
        stride = speed * remaining
        stop = _stop_position(params, state.setpoint_mm, d)
        dist_to_stop = (stop - state.position_mm) * d
        if dist_to_stop <= stride:
            # Valve closes inside this tick: land exactly on the crossing,
            # then spend the leftover time coasting.
            state.position_mm = stop
            state.valve = Valve.OFF
            coast = params.coast_distance_mm(d)
            state.coast_target_mm = stop + d * coast if coast > 0.0 else None
            if _clamp_to_travel(params, state):
                return state
            remaining -= dist_to_stop / speed
        else:
            state.position_mm += d * stride
            _clamp_to_travel(params, state)
            return state

    if state.coast_target_mm is not None and remaining > 0.0:
        d = 1 if state.coast_target_mm > state.position_mm else -1
        speed = params.speed(d)
        state.last_direction = d
        reach = state.position_mm + d * speed * remaining
        if (state.coast_target_mm - reach) * d <= 0.0:
            state.position_mm = state.coast_target_mm
            state.coast_target_mm = None
        else:
            state.position_mm = reach
        _clamp_to_travel(params, state)
    return state


def settle(
    params: AxisParams,
    state: AxisState,
    target_mm: float,
    dt: float = 0.1,
    timeout_s: float = 600.0,
) -> float:
    """Command a setpoint and tick until motion stops. Returns elapsed sim s.

    Ends when the stage is settled (valve off, coast spent) or at a limit
    switch; raises SettleTimeout past timeout_s.
    """
    command_setpoint(params, state, target_mm)
    elapsed = 0.0
    while not is_settled(state):
        if elapsed >= timeout_s:
            raise SettleTimeout(
                f"stage not settled after {elapsed:.1f} s (setpoint {target_mm} mm)"
            )
        tick(params, state, dt)
        elapsed += dt
    return elapsed


def simulate_move(
    params: AxisParams,
    state: AxisState,
    target_mm: float,
    dt: float = 0.1,
    timeout_s: float = 600.0,
):
    """Like settle() but records a trace.

    Returns (trace, elapsed) with trace rows (t_s, position_mm, encoder_mm,
    valve) including the initial sample at t=0.
    """
    command_setpoint(params, state, target_mm)
    rows = [(0.0, state.position_mm, encoder_position(params, state), state.valve.value)]
    elapsed = 0.0
    while not is_settled(state):
        if elapsed >= timeout_s:
            raise SettleTimeout(f"stage not settled after {elapsed:.1f} s")
        tick(params, state, dt)
        elapsed += dt
        rows.append(
            (elapsed, state.position_mm, encoder_position(params, state), state.valve.value)
        )
    return np.array(rows), elapsed


def write_trace_csv(path, trace: np.ndarray) -> None:
    header = "t_s,position_mm,encoder_mm,valve"
    np.savetxt(path, trace, delimiter=",", header=header, comments="", fmt="%.10g")
