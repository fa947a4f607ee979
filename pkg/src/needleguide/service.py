"""HTTP control service for one robot session.

Exposes the planning/execution pipeline over a small JSON API plus a
server-sent-event telemetry stream:

    POST /registration   fiducial pairs -> rigid fit, stored for the session
    POST /plan           entry/target -> carriage pose + feasibility
    POST /execute        start executing a plan (one at a time)
    POST /abort          request stop at the next step boundary
    GET  /state          current snapshot
    GET  /events         SSE stream of telemetry/step/lifecycle events

Execution runs in a background thread against the simulated stages, paced so
sim time advances time_scale times faster than the wall clock. A telemetry
publisher thread emits snapshots at a fixed wall rate; every event carries a
session-wide strictly increasing sequence number, and subscribers get a
gapless view from the moment they join.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from contextlib import asynccontextmanager
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from . import __version__
from .config import RobotConfig
from .errors import (
    DegenerateFiducials,
    DegeneratePlan,
    InclineExceeded,
    InsufficientPairs,
    NeedleGuideError,
    NoRegistration,
    OutOfTravel,
    ParallelToPlane,
    PlanActive,
)
from .geometry import (
    MR_FRAME,
    ROBOT_FRAME,
    Point3,
    fiducials_from_json,
    fit_rigid_transform,
)
from .kinematics import CarriagePose, TargetPlan, evaluate_plan, forward_kinematics
from .planner import execute_plan
from .robot import RobotSim

_HTTP_STATUS = {
    NoRegistration: 409,
    PlanActive: 409,
    OutOfTravel: 422,
    InclineExceeded: 422,
    DegeneratePlan: 422,
    DegenerateFiducials: 422,
    InsufficientPairs: 422,
    ParallelToPlane: 422,
}


class Session:
    """All mutable state behind the API: robot, registration, plan registry."""

    def __init__(
        self,
        config: Optional[RobotConfig] = None,
        time_scale: float = 10.0,
        telemetry_hz: float = 10.0,
        seed: int = 0,
    ):
        if time_scale <= 0:
            raise ValueError("time_scale must be positive")
        self.config = config or RobotConfig.default()
        self.time_scale = time_scale
        self.telemetry_period_s = 1.0 / telemetry_hz
        self.seed = seed
        self.robot = RobotSim(self.config)
        self.registration = None  # RegistrationResult
        self.plans: dict = {}
        self._next_plan = 1
        self.executing = False
        self.active_plan_id: Optional[int] = None
        self.last_result: Optional[dict] = None
        self.cancel = threading.Event()
        self.lock = threading.RLock()
        self._seq = 0
        self._subscribers: list = []
        self._exec_thread: Optional[threading.Thread] = None
        self._stop = threading.Event()
        self._publisher = threading.Thread(target=self._telemetry_loop, daemon=True)
        self._publisher.start()

    # -- events ----------------------------------------------------------

    def publish(self, event: dict) -> None:
        with self.lock:
            self._seq += 1
            event["seq"] = self._seq
            for q in self._subscribers:
                q.put(event)

    def subscribe(self) -> "queue.SimpleQueue":
        q: queue.SimpleQueue = queue.SimpleQueue()
        with self.lock:
            self._subscribers.append(q)
            # Joining snapshot so a fresh client can render immediately. It
            # reuses the current seq instead of consuming one: a seq consumed
            # here would appear as a gap to every other open stream.
            q.put({"type": "telemetry", "seq": self._seq, **self._snapshot()})
        return q

    def unsubscribe(self, q) -> None:
        with self.lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def _telemetry_loop(self) -> None:
        while not self._stop.is_set():
            time.sleep(self.telemetry_period_s)
            with self.lock:
                if self._subscribers:
                    self.publish({"type": "telemetry", **self._snapshot()})

    def close(self) -> None:
        self._stop.set()
        self.cancel.set()

    # -- snapshots ---------------------------------------------------------

    def _snapshot(self) -> dict:
        snap = self.robot.snapshot()
        snap.update(
            {
                "executing": self.executing,
                "active_plan_id": self.active_plan_id,
                "registered": self.registration is not None,
            }
        )
        return snap

    def state_doc(self) -> dict:
        with self.lock:
            doc = self._snapshot()
            doc["seq"] = self._seq
            doc["time_scale"] = self.time_scale
            doc["version"] = __version__
            doc["config"] = self.config.to_json_dict()
            doc["plans"] = sorted(self.plans)
            doc["last_result"] = self.last_result
            if self.registration is not None:
                doc["registration"] = {
                    "rms_residual_mm": self.registration.rms_residual_mm,
                    "n_pairs": len(self.registration.residuals_mm),
                }
            return doc

    # -- operations ----------------------------------------------------------

    def set_registration(self, doc: dict) -> dict:
        fids = fiducials_from_json(doc)
        result = fit_rigid_transform(fids)
        with self.lock:
            self.registration = result
        self.publish(
            {"type": "registration", "rms_residual_mm": result.rms_residual_mm}
        )
        return {
            "rms_residual_mm": result.rms_residual_mm,
            "residuals_mm": result.residuals_mm.tolist(),
            "rotation": result.transform.rotation.tolist(),
            "translation_mm": result.transform.translation.tolist(),
        }

    def make_plan(self, doc: dict) -> dict:
        frame = doc.get("frame", ROBOT_FRAME)
        if frame not in (ROBOT_FRAME, MR_FRAME):
            raise ValueError(f"unknown frame {frame!r}")
        entry = Point3.from_xyz(doc["entry_mm"], frame)
        target = Point3.from_xyz(doc["target_mm"], frame)
        if frame == MR_FRAME:
            with self.lock:
                reg = self.registration
            if reg is None:
                raise NoRegistration("plan requested in mr frame before registration")
            entry = reg.transform.apply(entry)
            target = reg.transform.apply(target)
        sol = evaluate_plan(TargetPlan(entry, target), self.config.params)
        if not sol.travel_ok:
            raise OutOfTravel(
                "pose infeasible: "
                + ", ".join(f"{name} over by {amt:.3f}" for name, amt in sol.violations),
                violations=sol.violations,
            )
        if not sol.incline_ok:
            raise InclineExceeded(
                f"incline {sol.incline_deg:.3f} deg over limit",
                incline_deg=sol.incline_deg,
            )
        params = self.config.params
        line = forward_kinematics(sol.pose, params)
        # Path polyline: entry-side bearing down to 30 mm past the target.
        z_stop = min(target.z, entry.z) - 30.0
        path = [
            [sol.pose.x_u, sol.pose.y_u, params.z_upper_mm],
            [sol.pose.x_l, sol.pose.y_l, params.z_lower_mm],
            list(line.point_at_plane(z_stop).xyz),
        ]
        with self.lock:
            plan_id = self._next_plan
            self._next_plan += 1
            self.plans[plan_id] = sol.pose
        doc_out = {
            "plan_id": plan_id,
            "pose_mm": {
                "x_u": sol.pose.x_u,
                "y_u": sol.pose.y_u,
                "x_l": sol.pose.x_l,
                "y_l": sol.pose.y_l,
            },
            "incline_deg": sol.incline_deg,
            "feasible": sol.ok,
            "travel_ok": sol.travel_ok,
            "incline_ok": sol.incline_ok,
            "path_mm": path,
            "entry_robot_mm": list(entry.xyz),
            "target_robot_mm": list(target.xyz),
        }
        self.publish({"type": "plan", "plan_id": plan_id, "incline_deg": sol.incline_deg})
        return doc_out

    def start_execute(self, doc: dict) -> dict:
        with self.lock:
            if self.executing:
                raise PlanActive("a plan is already executing")
            if "plan_id" in doc:
                plan_id = int(doc["plan_id"])
                if plan_id not in self.plans:
                    raise KeyError(f"unknown plan_id {plan_id}")
                pose = self.plans[plan_id]
            elif "pose_mm" in doc:
                p = doc["pose_mm"]
                pose = CarriagePose(
                    float(p["x_u"]), float(p["y_u"]), float(p["x_l"]), float(p["y_l"])
                )
                plan_id = None
            else:
                raise ValueError("execute needs plan_id or pose_mm")
            self.executing = True
            self.active_plan_id = plan_id
            self.cancel.clear()
            self._exec_thread = threading.Thread(
                target=self._run_plan, args=(pose, plan_id), daemon=True
            )
            self._exec_thread.start()
        return {"status": "started", "plan_id": plan_id}

    def _run_plan(self, pose: CarriagePose, plan_id) -> None:
        dt = 0.1
        start_sim = self.robot.time_s
        start_wall = time.monotonic()

        def pace(t_sim: float) -> None:
            ahead = (t_sim - start_sim) / self.time_scale - (
                time.monotonic() - start_wall
            )
            if ahead > 0.02:
                time.sleep(ahead)

        def on_step(step) -> None:
            self.publish(
                {
                    "type": "step",
                    "t": step.t_s,
                    "axis": int(step.axis),
                    "axis_name": step.axis.name.lower(),
                    "delta_mm": step.delta_mm,
                    "incline_deg": step.incline_deg,
                }
            )

        self.publish({"type": "plan_started", "plan_id": plan_id})
        try:
            result = execute_plan(
                self.robot,
                pose,
                dt=dt,
                cancel=self.cancel,
                on_step=on_step,
                tick_hook=pace,
            )
            summary = {
                "reached": result.reached,
                "aborted": result.aborted,
                "steps": len(result.steps),
                "elapsed_s": result.elapsed_s,
                "max_incline_deg": result.max_incline_deg,
            }
        except NeedleGuideError as exc:
            summary = {"reached": False, "error": type(exc).__name__, "message": str(exc)}
        with self.lock:
            self.executing = False
            self.active_plan_id = None
            self.last_result = summary
        self.publish({"type": "plan_finished", "plan_id": plan_id, **summary})

    def abort(self) -> dict:
        with self.lock:
            if not self.executing:
                return {"status": "idle"}
            self.cancel.set()
        self.publish({"type": "abort_requested"})
        return {"status": "aborting"}


def create_app(
    config: Optional[RobotConfig] = None,
    time_scale: float = 10.0,
    telemetry_hz: float = 10.0,
    seed: int = 0,
    keepalive_s: float = 30.0,
) -> FastAPI:
    session = Session(config, time_scale=time_scale, telemetry_hz=telemetry_hz, seed=seed)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        session.close()

    app = FastAPI(
        title="needleguide control service", version=__version__, lifespan=lifespan
    )
    app.state.session = session

    @app.exception_handler(NeedleGuideError)
    async def _domain_error(request: Request, exc: NeedleGuideError):
        status = _HTTP_STATUS.get(type(exc), 400)
        body = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, OutOfTravel):
            body["violations"] = [[n, a] for n, a in exc.violations]
        if isinstance(exc, InclineExceeded) and np.isfinite(exc.incline_deg):
            body["incline_deg"] = exc.incline_deg
        return JSONResponse(status_code=status, content=body)

    @app.exception_handler(KeyError)
    async def _key_error(request: Request, exc: KeyError):
        return JSONResponse(
            status_code=404, content={"error": "NotFound", "message": str(exc)}
        )

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return JSONResponse(
            status_code=422, content={"error": "ValueError", "message": str(exc)}
        )

    @app.post("/registration")
    async def registration(doc: dict):
        return session.set_registration(doc)

    @app.post("/plan")
    async def plan(doc: dict):
        return session.make_plan(doc)

    @app.post("/execute")
    async def execute(doc: dict):
        return session.start_execute(doc)

    @app.post("/abort")
    async def abort():
        return session.abort()

    @app.get("/state")
    async def state():
        return session.state_doc()

    @app.get("/events")
    async def events(request: Request):
        q = session.subscribe()

        def stream():
            try:
                while True:
                    try:
                        event = q.get(timeout=keepalive_s)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    yield f"data: {json.dumps(event)}\n\n"
            finally:
                session.unsubscribe(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


def serve(
    config: Optional[RobotConfig] = None,
    host: str = "127.0.0.1",
    port: int = 8040,
    time_scale: float = 10.0,
    seed: int = 0,
) -> None:
    """Run the service with uvicorn (blocking)."""
    import uvicorn

    app = create_app(config, time_scale=time_scale, seed=seed)
    uvicorn.run(app, host=host, port=port, log_level="warning")
