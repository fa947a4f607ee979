/**
 * Wire types for the needleguide control service.
 *
 * These mirror the JSON documents the HTTP endpoints and the /events SSE
 * stream produce. The console never computes kinematics on its own: every
 * pose, path, and incline figure shown on screen originated in one of these
 * documents.
 */

export type Vec3 = [number, number, number];

export type AxisName = "upper_x" | "upper_y" | "lower_x" | "lower_y";

export const AXIS_ORDER: AxisName[] = ["upper_x", "upper_y", "lower_x", "lower_y"];

/** Per-axis slice of a telemetry snapshot. */
export interface AxisDoc {
  position_mm: number;
  encoder_mm: number;
  setpoint_mm: number;
  valve: string;
  at_limit: boolean;
}

/** Geometry and per-axis limits as served inside GET /state. */
export interface ConfigDoc {
  z_u_mm: number;
  z_l_mm: number;
  travel_x_mm: number;
  travel_y_mm: number;
  max_incline_deg: number;
  axes: Record<AxisName, { travel_mm: [number, number] } & Record<string, unknown>>;
}

export interface StateDoc {
  seq: number;
  time_s: number;
  axes: Record<AxisName, AxisDoc>;
  incline_deg: number;
  executing: boolean;
  active_plan_id: number | null;
  registered: boolean;
  time_scale: number;
  version: string;
  config: ConfigDoc;
  plans: number[];
  last_result: PlanFinishedDoc | null;
  registration?: { rms_residual_mm: number; n_pairs: number };
}

export interface RegistrationResponse {
  rms_residual_mm: number;
  residuals_mm: number[];
  rotation: number[][];
  translation_mm: number[];
}

export interface PlanRequest {
  entry_mm: Vec3;
  target_mm: Vec3;
  frame: "robot" | "mr";
}

export interface PlanResponse {
  plan_id: number;
  pose_mm: { x_u: number; y_u: number; x_l: number; y_l: number };
  incline_deg: number;
  feasible: boolean;
  travel_ok: boolean;
  incline_ok: boolean;
  path_mm: Vec3[];
  entry_robot_mm: Vec3;
  target_robot_mm: Vec3;
}

/** Error body every non-2xx endpoint response carries. */
export interface ErrorDoc {
  error: string;
  message: string;
  violations?: [string, number][];
  incline_deg?: number;
}

export interface PlanFinishedDoc {
  reached?: boolean;
  aborted?: boolean;
  steps?: number;
  elapsed_s?: number;
  max_incline_deg?: number;
  error?: string;
  message?: string;
}

/** Events on the /events stream. All carry a session-wide increasing seq. */
export interface TelemetryEvent {
  type: "telemetry";
  seq: number;
  time_s: number;
  axes: Record<AxisName, AxisDoc>;
  incline_deg: number;
  executing: boolean;
  active_plan_id: number | null;
  registered: boolean;
}

export interface StepEvent {
  type: "step";
  seq: number;
  t: number;
  axis: number;
  axis_name: AxisName;
  delta_mm: number;
  incline_deg: number;
}

export interface PlanStartedEvent {
  type: "plan_started";
  seq: number;
  plan_id: number | null;
}

export interface PlanFinishedEvent extends PlanFinishedDoc {
  type: "plan_finished";
  seq: number;
  plan_id: number | null;
}

export interface RegistrationEvent {
  type: "registration";
  seq: number;
  rms_residual_mm: number;
}

export interface PlanEvent {
  type: "plan";
  seq: number;
  plan_id: number;
  incline_deg: number;
}

export interface AbortRequestedEvent {
  type: "abort_requested";
  seq: number;
}

export type ServiceEvent =
  | TelemetryEvent
  | StepEvent
  | PlanStartedEvent
  | PlanFinishedEvent
  | RegistrationEvent
  | PlanEvent
  | AbortRequestedEvent;
