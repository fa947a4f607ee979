"""Whole-robot simulation: four bang-bang stages plus a shared clock.

Only one stage moves at a time (the compressor cannot feed two cylinders),
so the simulator exposes settle_axis rather than simultaneous motion. The
clock advances with whichever stage is being driven.
"""

from __future__ import annotations

from typing import Callable, Dict, Optional

import numpy as np

from .axis import (
    AxisId,
    AxisState,
    Valve,
    encoder_position,
    is_settled,
    settle,
    tick,
    command_setpoint,
)
from .config import RobotConfig
from .errors import SettleTimeout, TargetOutOfTravel
from .kinematics import CarriagePose, forward_kinematics, incline_deg

_AXIS_ORDER = (AxisId.UPPER_X, AxisId.UPPER_Y, AxisId.LOWER_X, AxisId.LOWER_Y)


class RobotSim:
    """Mutable stage states for one robot, addressed by AxisId."""

    def __init__(self, config: RobotConfig, start: Optional[CarriagePose] = None):
        self.config = config
        self.params = config.params
        start = start or CarriagePose.home()
        self.states: Dict[AxisId, AxisState] = {}
        for axis, pos in self._validated(start):
            self.states[axis] = AxisState(position_mm=float(pos))
        self.time_s = 0.0

    def _validated(self, pose: CarriagePose):
        pairs = list(zip(_AXIS_ORDER, pose.as_array()))
        for axis, pos in pairs:
            lo, hi = self.config.axes[axis].travel_mm
            if not lo <= pos <= hi:
                raise TargetOutOfTravel(
                    f"{axis.name.lower()} position {pos} mm outside travel "
                    f"[{lo}, {hi}]"
                )
        return pairs

    # -- state access ------------------------------------------------------

    def axis_params(self, axis: AxisId):
        return self.config.axes[axis]

    def true_positions(self) -> np.ndarray:
        return np.array([self.states[a].position_mm for a in _AXIS_ORDER])

    def encoder_positions(self) -> np.ndarray:
        return np.array(
            [encoder_position(self.config.axes[a], self.states[a]) for a in _AXIS_ORDER]
        )

    def true_pose(self) -> CarriagePose:
        return CarriagePose.from_array(self.true_positions())

    def encoder_pose(self) -> CarriagePose:
        return CarriagePose.from_array(self.encoder_positions())

    def incline_true_deg(self) -> float:
        return incline_deg(self.true_pose(), self.params)

    def incline_encoder_deg(self) -> float:
        return incline_deg(self.encoder_pose(), self.params)

    def needle_line(self):
        return forward_kinematics(self.true_pose(), self.params)

    def settled(self) -> bool:
        return all(is_settled(s) for s in self.states.values())

    # -- motion ------------------------------------------------------------

    def command_axis(self, axis: AxisId, setpoint_mm: float) -> None:
        command_setpoint(self.config.axes[axis], self.states[axis], setpoint_mm)

    def tick_axis(self, axis: AxisId, dt: float) -> None:
        tick(self.config.axes[axis], self.states[axis], dt)
        self.time_s += dt

    def settle_axis(
        self,
        axis: AxisId,
        setpoint_mm: float,
        dt: float = 0.1,
        timeout_s: float = 600.0,
        tick_hook: Optional[Callable[[float], None]] = None,
    ) -> float:
        """Drive one stage to its setpoint; returns elapsed sim seconds.

        tick_hook(time_s) runs after every tick; the service uses it to pace
        execution against the wall clock.
        """
        if tick_hook is None:
            elapsed = settle(
                self.config.axes[axis], self.states[axis], setpoint_mm, dt, timeout_s
            )
            self.time_s += elapsed
            return elapsed
        params, state = self.config.axes[axis], self.states[axis]
        command_setpoint(params, state, setpoint_mm)
        elapsed = 0.0
        while not is_settled(state):
            if elapsed >= timeout_s:
                raise SettleTimeout(f"stage {axis.name} not settled after {elapsed:.1f} s")
            tick(params, state, dt)
            elapsed += dt
            self.time_s += dt
            tick_hook(self.time_s)
        return elapsed

    def teleport(self, pose: CarriagePose) -> None:
        """Jump stages to exact positions (test/reset helper, not physics)."""
        for axis, pos in self._validated(pose):
            st = self.states[axis]
            st.position_mm = float(pos)
            st.setpoint_mm = None
            st.valve = Valve.OFF
            st.coast_target_mm = None
            st.delay_remaining_s = 0.0

    def snapshot(self) -> dict:
        """JSON-ready state summary for telemetry."""
        axes = {}
        for axis in _AXIS_ORDER:
            st = self.states[axis]
            axes[axis.name.lower()] = {
                "position_mm": st.position_mm,
                "encoder_mm": encoder_position(self.config.axes[axis], st),
                "setpoint_mm": st.setpoint_mm,
                "valve": st.valve.name.lower(),
                "at_limit": st.at_min_limit or st.at_max_limit,
            }
        return {
            "time_s": self.time_s,
            "axes": axes,
            "incline_deg": self.incline_encoder_deg(),
        }
