/**
 * Console state model.
 *
 * Single source of truth for everything the panels render: connection
 * state, registration summary, the current plan with its projected path,
 * live axis telemetry, the streamed step log, and the error banner. Pure
 * logic, no DOM, no network; the app feeds it service responses and
 * events, the views subscribe to change notifications.
 *
 * Ordering rule: the rendered pose always reflects the newest telemetry
 * sequence number seen so far. A frame with a lower or equal seq than one
 * already applied is stale (reconnect races, delayed delivery) and is
 * discarded outright.
 */

import type {
  AxisDoc,
  AxisName,
  ConfigDoc,
  PlanFinishedDoc,
  PlanResponse,
  ServiceEvent,
  StateDoc,
  Vec3,
} from "./types.js";
import { AXIS_ORDER } from "./types.js";

export type ConnectionState = "disconnected" | "connecting" | "live" | "lost";

export interface StepEntry {
  seq: number;
  t_s: number;
  axisName: AxisName;
  deltaMm: number;
  inclineDeg: number;
}

export interface PlanError {
  error: string;
  message: string;
  inclineDeg?: number;
}

export interface MarkerSet {
  entry: Vec3;
  target: Vec3;
  frame: "robot" | "mr";
}

export type Listener = () => void;

export class ConsoleModel {
  connection: ConnectionState = "disconnected";
  config: ConfigDoc | null = null;
  version = "";

  // live pose, keyed by telemetry seq
  telemetrySeq = -1;
  axes: Record<AxisName, AxisDoc> | null = null;
  private settledEncoder: Record<AxisName, number> | null = null;
  liveInclineDeg: number | null = null;
  timeS = 0;
  executing = false;
  activePlanId: number | null = null;

  registered = false;
  registrationRms: number | null = null;
  registrationPairs: number | null = null;

  // planning: marker positions are operator input, everything else is the
  // service's answer for those markers
  markers: MarkerSet = { entry: [0, 0, 0], target: [0, 0, -120], frame: "robot" };
  plan: PlanResponse | null = null;
  planError: PlanError | null = null;
  planPending = false;

  executePending = false;
  stepLog: StepEntry[] = [];
  lastResult: PlanFinishedDoc | null = null;
  banner: string | null = null;

  private listeners: Listener[] = [];

  onChange(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((f) => f !== fn);
    };
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }

  // -- connection -----------------------------------------------------------

  setConnection(state: ConnectionState): void {
    this.connection = state;
    if (state === "lost") this.banner = "connection lost";
    this.notify();
  }

  /** Seed the model from GET /state when a session opens. */
  applyState(doc: StateDoc): void {
    this.config = doc.config;
    this.version = doc.version;
    this.applyPose(doc.seq, doc.axes, doc.incline_deg, doc.executing, doc.active_plan_id);
    this.timeS = doc.time_s;
    this.registered = doc.registered;
    if (doc.registration) {
      this.registrationRms = doc.registration.rms_residual_mm;
      this.registrationPairs = doc.registration.n_pairs;
    }
    this.lastResult = doc.last_result;
    this.notify();
  }

  // -- event stream ---------------------------------------------------------

  applyEvent(ev: ServiceEvent): void {
    switch (ev.type) {
      case "telemetry":
        if (ev.seq <= this.telemetrySeq) {
          return; // stale frame, nothing changed, nothing to render
        }
        this.telemetrySeq = ev.seq;
        this.mergeAxes(ev.axes, ev.executing);
        this.liveInclineDeg = ev.incline_deg;
        this.executing = ev.executing;
        this.activePlanId = ev.active_plan_id;
        this.timeS = ev.time_s;
        this.registered = ev.registered;
        break;
      case "step":
        this.stepLog.push({
          seq: ev.seq,
          t_s: ev.t,
          axisName: ev.axis_name,
          deltaMm: ev.delta_mm,
          inclineDeg: ev.incline_deg,
        });
        // settled-step notification: the executor commanded this delta from
        // the axis's last settled encoder reading, so that baseline plus the
        // delta is where the move was aimed; show the axis there without
        // waiting for the next telemetry frame
        if (this.axes && this.settledEncoder && ev.axis_name in this.axes) {
          const aimed = this.settledEncoder[ev.axis_name] + ev.delta_mm;
          this.settledEncoder[ev.axis_name] = aimed;
          const ax = this.axes[ev.axis_name];
          ax.position_mm = aimed;
          ax.encoder_mm = aimed;
        }
        break;
      case "plan_started":
        this.executePending = false;
        this.executing = true;
        this.activePlanId = ev.plan_id;
        this.stepLog = [];
        this.lastResult = null;
        break;
      case "plan_finished":
        this.executing = false;
        this.activePlanId = null;
        this.executePending = false;
        this.lastResult = {
          reached: ev.reached,
          aborted: ev.aborted,
          steps: ev.steps,
          elapsed_s: ev.elapsed_s,
          max_incline_deg: ev.max_incline_deg,
          error: ev.error,
          message: ev.message,
        };
        if (ev.error) this.banner = `${ev.error}: ${ev.message}`;
        break;
      case "registration":
        this.registered = true;
        this.registrationRms = ev.rms_residual_mm;
        break;
      case "plan":
      case "abort_requested":
        break;
    }
    this.notify();
  }

  private applyPose(
    seq: number,
    axes: Record<AxisName, AxisDoc>,
    inclineDeg: number,
    executing: boolean,
    activePlanId: number | null,
  ): boolean {
    if (seq <= this.telemetrySeq) return false;
    this.telemetrySeq = seq;
    this.axes = axes;
    this.settledEncoder = Object.fromEntries(
      AXIS_ORDER.map((name) => [name, axes[name].encoder_mm]),
    ) as Record<AxisName, number>;
    this.liveInclineDeg = inclineDeg;
    this.executing = executing;
    this.activePlanId = activePlanId;
    return true;
  }

  /**
   * Fold a telemetry frame into the axis views. While a plan is running,
   * an axis with its valve off cannot be moving, so its displayed position
   * holds steady (the sequencer opens one valve at a time, and twitching
   * settled bars by sub-threshold residuals while another axis runs reads
   * as noise). The moving axis tracks the frame, and any idle frame
   * reconciles everything, including the settled-encoder baselines that
   * step events advance from.
   */
  private mergeAxes(axes: Record<AxisName, AxisDoc>, executing: boolean): void {
    if (!this.axes || !this.settledEncoder || !executing) {
      this.axes = axes;
      this.settledEncoder = Object.fromEntries(
        AXIS_ORDER.map((name) => [name, axes[name].encoder_mm]),
      ) as Record<AxisName, number>;
      return;
    }
    for (const name of AXIS_ORDER) {
      const cur = this.axes[name];
      const doc = axes[name];
      if (doc.valve !== "off" || !cur) {
        this.axes[name] = doc;
      } else {
        this.axes[name] = {
          ...doc,
          position_mm: cur.position_mm,
          encoder_mm: cur.encoder_mm,
        };
      }
    }
  }

  // -- registration ---------------------------------------------------------

  setRegistration(rms: number, nPairs: number): void {
    this.registered = true;
    this.registrationRms = rms;
    this.registrationPairs = nPairs;
    this.banner = null;
    this.notify();
  }

  // -- planning -------------------------------------------------------------

  setMarkers(markers: MarkerSet): void {
    this.markers = markers;
    this.notify();
  }

  planRequested(): void {
    this.planPending = true;
    this.notify();
  }

  /** A successful PlanResponse for the current markers. */
  setPlan(plan: PlanResponse): void {
    this.plan = plan;
    this.planError = null;
    this.planPending = false;
    this.banner = null;
    this.notify();
  }

  /** The service rejected the requested pair; the old plan is void. */
  setPlanError(err: PlanError): void {
    this.plan = null;
    this.planError = err;
    this.planPending = false;
    this.banner = `${err.error}: ${err.message}`;
    this.notify();
  }

  setBanner(text: string | null): void {
    this.banner = text;
    this.notify();
  }

  // -- execution ------------------------------------------------------------

  executeRequested(): void {
    this.executePending = true;
    this.notify();
  }

  executeFailed(message: string): void {
    this.executePending = false;
    this.banner = message;
    this.notify();
  }

  /** Execute is offered iff the last plan answer was feasible and idle. */
  executeEnabled(): boolean {
    return (
      this.plan !== null &&
      this.plan.feasible &&
      this.planError === null &&
      !this.executing &&
      !this.executePending
    );
  }

  abortEnabled(): boolean {
    return this.executing;
  }

  /** Incline to show next to the plan, and whether it breaks the limit. */
  inclineReadout(): { value: number | null; over: boolean } {
    const limit = this.config ? this.config.max_incline_deg : 30.0;
    if (this.planError !== null) {
      const v = this.planError.inclineDeg ?? null;
      return { value: v, over: true };
    }
    if (this.plan !== null) {
      return { value: this.plan.incline_deg, over: this.plan.incline_deg > limit };
    }
    return { value: null, over: false };
  }

  axisOrder(): AxisName[] {
    return AXIS_ORDER;
  }

  /** Travel range for an axis, from the service config. */
  travelRange(name: AxisName): [number, number] {
    if (this.config && this.config.axes[name]) {
      return this.config.axes[name].travel_mm;
    }
    return name.endsWith("_x") ? [-27.5, 27.5] : [-15.0, 15.0];
  }
}
