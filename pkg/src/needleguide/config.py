"""Robot configuration: geometry plus per-stage controller parameters.

The JSON layout keeps the geometry keys flat and groups stage parameters
under "axes":

    {
      "z_u_mm": -36.5, "z_l_mm": -82.2,
      "travel_x_mm": 55.0, "travel_y_mm": 30.0, "max_incline_deg": 30.0,
      "axes": {
        "upper_x": {"speed_fwd_mm_s": 0.5, ...},
        ...
      }
    }

Omitted keys fall back to the bench defaults: x stages symmetric at
0.5 mm/s with a 0.3 mm stop threshold, y stages 0.5 mm/s forward and
30/35 mm/s in reverse (the retract stroke runs measurably faster) with a
0.6 mm threshold, 0.3 s valve coast and a 100 counts/mm encoder everywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

from .axis import AxisId, AxisParams
from .kinematics import RobotParams

AXIS_KEYS: Mapping[AxisId, str] = MappingProxyType(
    {
        AxisId.UPPER_X: "upper_x",
        AxisId.UPPER_Y: "upper_y",
        AxisId.LOWER_X: "lower_x",
        AxisId.LOWER_Y: "lower_y",
    }
)
_KEY_TO_AXIS = {v: k for k, v in AXIS_KEYS.items()}

# Reverse y speed: the 30 mm retract stroke takes 35 s on the bench.
Y_REVERSE_SPEED_MM_S = 30.0 / 35.0


def default_axis_params(axis: AxisId, params: RobotParams) -> AxisParams:
    travel = params.x_range if axis.is_x else params.y_range
    if axis.is_x:
        return AxisParams(
            speed_fwd_mm_s=0.5,
            speed_rev_mm_s=0.5,
            stop_threshold_mm=0.3,
            coast_time_s=0.3,
            travel_mm=travel,
            counts_per_mm=100.0,
        )
    return AxisParams(
        speed_fwd_mm_s=0.5,
        speed_rev_mm_s=Y_REVERSE_SPEED_MM_S,
        stop_threshold_mm=0.6,
        coast_time_s=0.3,
        travel_mm=travel,
        counts_per_mm=100.0,
    )


def ideal_axis_params(axis: AxisId, params: RobotParams) -> AxisParams:
    """Error-free stage: continuous encoder, effectively zero deadband, no coast."""
    travel = params.x_range if axis.is_x else params.y_range
    # Threshold far below any tolerance of interest but far above float
    # rounding at coordinate magnitude, so the planner's done check is stable.
    return AxisParams(
        speed_fwd_mm_s=0.5,
        speed_rev_mm_s=0.5,
        stop_threshold_mm=1e-11,
        coast_time_s=0.0,
        travel_mm=travel,
        counts_per_mm=None,
    )


@dataclass(frozen=True)
class RobotConfig:
    params: RobotParams
    axes: Mapping[AxisId, AxisParams]

    def __post_init__(self):
        axes = dict(self.axes)
        if set(axes) != set(AxisId):
            raise ValueError("config must provide parameters for all four stages")
        object.__setattr__(self, "axes", MappingProxyType(axes))

    # MappingProxyType does not pickle; hand multiprocessing a plain dict.
    def __getstate__(self):
        return {"params": self.params, "axes": dict(self.axes)}

    def __setstate__(self, state):
        object.__setattr__(self, "params", state["params"])
        object.__setattr__(self, "axes", MappingProxyType(dict(state["axes"])))

    @classmethod
    def default(cls) -> "RobotConfig":
        params = RobotParams()
        return cls(params, {a: default_axis_params(a, params) for a in AxisId})

    @classmethod
    def ideal(cls) -> "RobotConfig":
        params = RobotParams()
        return cls(params, {a: ideal_axis_params(a, params) for a in AxisId})

    def with_axes(self, **per_axis_overrides) -> "RobotConfig":
        """Rebuild with dataclasses.replace-style overrides applied to every axis."""
        axes = {a: replace(p, **per_axis_overrides) for a, p in self.axes.items()}
        return RobotConfig(self.params, axes)

    def to_json_dict(self) -> dict:
        doc = self.params.to_json_dict()
        doc["axes"] = {AXIS_KEYS[a]: p.to_json_dict() for a, p in self.axes.items()}
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "RobotConfig":
        params = RobotParams.from_json_dict(doc)
        axes = {}
        axis_docs = doc.get("axes", {})
        for key in axis_docs:
            if key not in _KEY_TO_AXIS:
                raise ValueError(f"unknown axis key {key!r} in config")
        for axis in AxisId:
            base = default_axis_params(axis, params)
            sub = axis_docs.get(AXIS_KEYS[axis], {})
            axes[axis] = AxisParams.from_json_dict(sub, base=base)
        return cls(params, axes)


def load_robot_config(path) -> RobotConfig:
    """Load a robot config JSON file; missing keys take bench defaults."""
    doc = json.loads(Path(path).read_text())
    return RobotConfig.from_json_dict(doc)


def save_robot_config(path, config: RobotConfig) -> None:
    Path(path).write_text(json.dumps(config.to_json_dict(), indent=2) + "\n")
