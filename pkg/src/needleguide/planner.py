"""Sequential moving strategy for the four stages.

The compressor can only feed one cylinder, so stages move one at a time. The
strategy alternates between the x pair (upper, lower) and the y pair each
iteration, always moving the stage of the active pair with the larger encoder
error, by at most 5 mm per step. Capping the step keeps the guide incline
transient bounded: both carriages track the target line in an interleaved
fashion instead of one running far ahead.

On top of the alternation an incline guard truncates any step whose settled
endpoint would push the relative carriage displacement past the bearing
limit. At the bench defaults the guard never engages for feasible targets
(the cap plus alternation keep the transient inside the cone), but it is what
makes the planner safe for arbitrary starting poses and sloppy stage tuning.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .axis import AxisId
from .errors import PlanTimeout, Stalled, TargetOutOfTravel
from .kinematics import CarriagePose, incline_from_rel
from .robot import RobotSim

MAX_STEP_MM = 5.0

# Numerical floor below which a truncated step is treated as "no move".
_MIN_STEP_MM = 1e-9

# Slack on the convergence check: a stage parks exactly threshold short of
# its setpoint, so float rounding can leave the error an ulp past it.
_DONE_EPS_MM = 1e-12

_X_PAIR = (AxisId.UPPER_X, AxisId.LOWER_X)
_Y_PAIR = (AxisId.UPPER_Y, AxisId.LOWER_Y)
_AXIS_INDEX = {
    AxisId.UPPER_X: 0,
    AxisId.UPPER_Y: 1,
    AxisId.LOWER_X: 2,
    AxisId.LOWER_Y: 3,
}


def plan_step(
    errors: Sequence[float],
    parity: int,
    stop_thresholds: Sequence[float],
    max_step_mm: float = MAX_STEP_MM,
) -> Optional[Tuple[AxisId, float]]:
    """One decision of the alternating strategy.

    errors are (upper_x, upper_y, lower_x, lower_y) setpoint-minus-position,
    parity selects the x pair (even) or y pair (odd). Returns (axis, delta)
    or None when the active pair is already within its stop thresholds.
    The larger-error stage of the pair moves; on a tie the lower stage does.
    """
    e = np.asarray(errors, dtype=float)
    pair = _X_PAIR if parity % 2 == 0 else _Y_PAIR
    ia, ib = _AXIS_INDEX[pair[0]], _AXIS_INDEX[pair[1]]
    ea, eb = e[ia], e[ib]
    if abs(ea) <= stop_thresholds[ia] and abs(eb) <= stop_thresholds[ib]:
        return None
    d = min(max(abs(ea), abs(eb)), max_step_mm)
    if abs(ea) > abs(eb):
        return pair[0], float(np.copysign(d, ea))
    return pair[1], float(np.copysign(d, eb))


def guard_step(
    rel_xy: np.ndarray,
    axis: AxisId,
    delta_mm: float,
    max_rel_mm: float,
    margin_mm: float = 0.0,
) -> float:
    """Truncate a single-stage step so the settled incline stays in bounds.

    rel_xy is the current relative carriage displacement (upper minus lower).
    Along a single-stage move the displacement norm is a convex parabola, so
    constraining the endpoint constrains the whole transient. Moves that only
    reduce an existing violation are always allowed.
    """
    if delta_mm == 0.0:
        return 0.0
    idx = 0 if axis.is_x else 1
    carriage_sign = 1.0 if axis.is_upper else -1.0
    c = rel_xy[idx]
    other = rel_xy[1 - idx]
    r_eff = max(max_rel_mm - margin_mm, 0.0)
    limit = np.sqrt(max(r_eff**2 - other**2, 0.0))
    bound = max(limit, abs(c))  # never increase an existing violation
    s = carriage_sign * np.sign(delta_mm)  # direction rel[idx] moves
    allowed = max(bound - s * c, 0.0)
    return float(np.copysign(min(abs(delta_mm), allowed), delta_mm))


@dataclass(frozen=True)
class PlanStep:
    """One executed stage move."""

    iteration: int
    axis: AxisId
    delta_mm: float
    t_s: float  # sim time when the stage settled
    incline_deg: float  # true incline after settling
    settle_s: float


@dataclass(frozen=True)
class MoveResult:
    reached: bool
    aborted: bool
    steps: List[PlanStep]
    iterations: int
    elapsed_s: float
    final_pose: CarriagePose
    final_encoder_pose: CarriagePose
    max_incline_deg: float


def execute_plan(
    robot: RobotSim,
    target: CarriagePose,
    dt: float = 0.1,
    guard: bool = True,
    max_iterations: int = 20000,
    cancel: Optional[threading.Event] = None,
    on_step: Optional[Callable[[PlanStep], None]] = None,
    tick_hook: Optional[Callable[[float], None]] = None,
) -> MoveResult:
    """Drive the robot to a target pose with the alternating strategy.

    Runs until all four encoder errors are inside their stop thresholds.
    cancel (checked between steps) turns the result into aborted=True rather
    than raising. Raises Stalled if a full x+y cycle passes with no motion
    while errors remain, and PlanTimeout past max_iterations.
    """
    params = robot.params
    thresholds = np.array(
        [robot.axis_params(a).stop_threshold_mm for a in _AXIS_INDEX]
    )
    target_arr = target.as_array()
    for axis, idx in _AXIS_INDEX.items():
        lo, hi = robot.axis_params(axis).travel_mm
        if not lo <= target_arr[idx] <= hi:
            raise TargetOutOfTravel(
                f"{axis.name.lower()} target {target_arr[idx]:.3f} mm outside "
                f"travel [{lo:.3f}, {hi:.3f}]"
            )
    steps: List[PlanStep] = []
    t0 = robot.time_s
    max_incline = robot.incline_true_deg()
    parity = 0
    iteration = 0
    idle_run = 0
    aborted = False

    while True:
        enc = robot.encoder_positions()
        errors = target_arr - enc
        if np.all(np.abs(errors) <= thresholds + _DONE_EPS_MM):
            reached = True
            break
        if cancel is not None and cancel.is_set():
            reached = False
            aborted = True
            break
        if iteration >= max_iterations:
            raise PlanTimeout(f"no convergence after {iteration} iterations")
        if idle_run >= 2:
            # Both pairs declined to move in one full cycle yet errors remain:
            # the guard or a limit switch has pinned the plan.
            raise Stalled(
                f"no progress at encoder pose {np.round(enc, 3).tolist()}, "
                f"errors {np.round(errors, 3).tolist()}"
            )

        choice = plan_step(errors, parity, thresholds)
        moved = False
        if choice is not None:
            axis, delta = choice
            ap = robot.axis_params(axis)
            if guard:
                rel = np.array([enc[0] - enc[2], enc[1] - enc[3]])
                direction = 1 if delta > 0 else -1
                quant = 1.0 / ap.counts_per_mm if ap.counts_per_mm else 0.0
                margin = max(
                    0.0,
                    ap.coast_distance_mm(direction) - ap.stop_threshold_mm + quant,
                )
                delta = guard_step(
                    rel, axis, delta, params.max_rel_displacement_mm, margin
                )
            if abs(delta) > _MIN_STEP_MM:
                idx = _AXIS_INDEX[axis]
                lo, hi = ap.travel_mm
                if abs(delta) >= abs(errors[idx]) - 1e-6:
                    # Step covers (essentially) the whole remaining error:
                    # anchor on the target itself so stage shortfalls cannot
                    # accumulate into a residual too small to re-command.
                    setpoint = float(np.clip(target_arr[idx], lo, hi))
                else:
                    setpoint = float(np.clip(enc[idx] + delta, lo, hi))
                # A setpoint inside the stop threshold never opens the valve,
                # so commanding it is not progress; let the stall check see it.
                if abs(setpoint - enc[idx]) <= ap.stop_threshold_mm:
                    delta = 0.0
            if abs(delta) > _MIN_STEP_MM:
                settle_s = robot.settle_axis(axis, setpoint, dt=dt, tick_hook=tick_hook)
                step = PlanStep(
                    iteration=iteration,
                    axis=axis,
                    delta_mm=delta,
                    t_s=robot.time_s - t0,
                    incline_deg=robot.incline_true_deg(),
                    settle_s=settle_s,
                )
                steps.append(step)
                max_incline = max(max_incline, step.incline_deg)
                if on_step is not None:
                    on_step(step)
                moved = True
        idle_run = 0 if moved else idle_run + 1
        parity ^= 1
        iteration += 1

    return MoveResult(
        reached=reached,
        aborted=aborted,
        steps=steps,
        iterations=iteration,
        elapsed_s=robot.time_s - t0,
        final_pose=robot.true_pose(),
        final_encoder_pose=robot.encoder_pose(),
        max_incline_deg=max_incline,
    )


def write_step_log(path, steps: Sequence[PlanStep]) -> None:
    """Step log as JSON lines: {"t", "axis", "delta_mm", "incline_deg"}."""
    with open(path, "w") as fh:
        for s in steps:
            fh.write(
                json.dumps(
                    {
                        "t": s.t_s,
                        "axis": int(s.axis),
                        "delta_mm": s.delta_mm,
                        "incline_deg": s.incline_deg,
                    }
                )
                + "\n"
            )


def read_step_log(path) -> List[dict]:
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows
