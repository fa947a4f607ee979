/**
 * Registration panel and execution dashboard.
 *
 * Plain DOM, one class per panel. Each panel builds its subtree once and
 * refreshes the dynamic bits from the model on every change notification.
 */

import type { ConsoleModel } from "../model.js";
import { AXIS_ORDER, type AxisName } from "../types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

const EXAMPLE_PAIRS = JSON.stringify(
  {
    pairs: [
      { mr: [30, 0, 0], robot: [30, 0, 0] },
      { mr: [-30, 0, 0], robot: [-30, 0, 0] },
      { mr: [0, 30, 0], robot: [0, 30, 0] },
      { mr: [0, 0, -40], robot: [0, 0, -40] },
    ],
  },
  null,
  1,
);

export interface RegistrationCallbacks {
  onRegister: (pairs: { mr: number[]; robot: number[] }[]) => void;
}

/**
 * Fiducial registration panel: paste pair coordinates, post them, read
 * back the fit residual.
 */
export class RegistrationPanel {
  readonly root: HTMLElement;
  private model: ConsoleModel;
  private pairsInput: HTMLTextAreaElement;
  private registerBtn: HTMLButtonElement;
  private summary: HTMLElement;

  constructor(model: ConsoleModel, callbacks: RegistrationCallbacks) {
    this.model = model;
    this.root = el("section", "panel registration-panel");
    this.root.appendChild(el("h2", "", "Registration"));

    this.pairsInput = el("textarea", "pairs-input");
    this.pairsInput.rows = 10;
    this.pairsInput.value = EXAMPLE_PAIRS;
    this.pairsInput.setAttribute("aria-label", "fiducial pairs");
    this.root.appendChild(this.pairsInput);

    this.registerBtn = el("button", "register-btn", "Register");
    this.registerBtn.addEventListener("click", () => {
      let doc: { pairs?: { mr: number[]; robot: number[] }[] };
      try {
        doc = JSON.parse(this.pairsInput.value);
      } catch (err) {
        model.setBanner(`fiducial document is not valid JSON: ${err}`);
        return;
      }
      callbacks.onRegister(doc.pairs ?? []);
    });
    this.root.appendChild(this.registerBtn);

    this.summary = el("div", "registration-summary");
    this.root.appendChild(this.summary);

    model.onChange(() => this.refresh());
    this.refresh();
  }

  private refresh(): void {
    if (!this.model.registered) {
      this.summary.textContent = "not registered";
      this.summary.classList.remove("ok");
      return;
    }
    const rms = this.model.registrationRms;
    const n = this.model.registrationPairs;
    const pairsTxt = n !== null ? `${n} pairs, ` : "";
    this.summary.textContent =
      rms !== null
        ? `registered (${pairsTxt}rms residual ${rms.toFixed(3)} mm)`
        : "registered";
    this.summary.classList.add("ok");
  }
}

export interface DashboardCallbacks {
  onExecute: () => void;
  onAbort: () => void;
}

interface AxisRow {
  bar: HTMLElement;
  setpointTick: HTMLElement;
  value: HTMLElement;
  valve: HTMLElement;
}

/**
 * Execution dashboard: one position bar per axis, the streaming step log,
 * and the Execute/Abort controls.
 */
export class ExecutionDashboard {
  readonly root: HTMLElement;
  private model: ConsoleModel;
  private rows = new Map<AxisName, AxisRow>();
  private executeBtn: HTMLButtonElement;
  private abortBtn: HTMLButtonElement;
  private stepList: HTMLOListElement;
  private resultLine: HTMLElement;
  private renderedSteps = 0;

  constructor(model: ConsoleModel, callbacks: DashboardCallbacks) {
    this.model = model;
    this.root = el("section", "panel dashboard-panel");
    this.root.appendChild(el("h2", "", "Execution"));

    const axesBox = el("div", "axis-rows");
    for (const name of AXIS_ORDER) {
      const row = el("div", "axis-row");
      row.dataset.axis = name;
      row.appendChild(el("span", "axis-name", name));

      const track = el("div", "axis-track");
      const bar = el("div", "axis-bar");
      bar.dataset.axis = name;
      const tick = el("div", "axis-setpoint");
      track.appendChild(bar);
      track.appendChild(tick);
      row.appendChild(track);

      const value = el("span", "axis-value", "--");
      const valve = el("span", "axis-valve", "");
      row.appendChild(value);
      row.appendChild(valve);

      axesBox.appendChild(row);
      this.rows.set(name, { bar, setpointTick: tick, value, valve });
    }
    this.root.appendChild(axesBox);

    const controls = el("div", "exec-controls");
    this.executeBtn = el("button", "execute-btn", "Execute");
    this.executeBtn.addEventListener("click", () => {
      if (!this.executeBtn.disabled) callbacks.onExecute();
    });
    this.abortBtn = el("button", "abort-btn", "Abort");
    this.abortBtn.addEventListener("click", () => callbacks.onAbort());
    controls.appendChild(this.executeBtn);
    controls.appendChild(this.abortBtn);
    this.root.appendChild(controls);

    this.resultLine = el("div", "exec-result");
    this.root.appendChild(this.resultLine);

    this.root.appendChild(el("h3", "", "Step log"));
    this.stepList = el("ol", "step-log");
    this.root.appendChild(this.stepList);

    model.onChange(() => this.refresh());
    this.refresh();
  }

  /** Bar fill fraction for a position inside the axis travel. */
  private fraction(name: AxisName, positionMm: number): number {
    const [lo, hi] = this.model.travelRange(name);
    const f = (positionMm - lo) / (hi - lo);
    return Math.min(1, Math.max(0, f));
  }

  private refresh(): void {
    const axes = this.model.axes;
    for (const name of AXIS_ORDER) {
      const row = this.rows.get(name)!;
      const doc = axes ? axes[name] : null;
      if (!doc) {
        row.value.textContent = "--";
        row.valve.textContent = "";
        continue;
      }
      row.bar.style.width = `${(this.fraction(name, doc.position_mm) * 100).toFixed(2)}%`;
      row.bar.dataset.positionMm = doc.position_mm.toFixed(4);
      row.setpointTick.style.left = `${(this.fraction(name, doc.setpoint_mm) * 100).toFixed(2)}%`;
      row.value.textContent = `${doc.position_mm.toFixed(2)} mm`;
      row.valve.textContent = doc.valve;
      row.valve.className = `axis-valve valve-${doc.valve}`;
      row.bar.classList.toggle("at-limit", doc.at_limit);
    }

    this.executeBtn.disabled = !this.model.executeEnabled();
    this.abortBtn.disabled = !this.model.abortEnabled();

    // step log only ever grows until a new plan starts and clears it
    if (this.model.stepLog.length < this.renderedSteps) {
      this.stepList.textContent = "";
      this.renderedSteps = 0;
    }
    for (const step of this.model.stepLog.slice(this.renderedSteps)) {
      const item = el(
        "li",
        "step-entry",
        `t=${step.t_s.toFixed(1)}s ${step.axisName} ` +
          `${step.deltaMm >= 0 ? "+" : ""}${step.deltaMm.toFixed(2)} mm ` +
          `incline ${step.inclineDeg.toFixed(2)} deg`,
      );
      item.dataset.axis = step.axisName;
      this.stepList.appendChild(item);
    }
    this.renderedSteps = this.model.stepLog.length;

    const res = this.model.lastResult;
    if (this.model.executing) {
      this.resultLine.textContent = `executing plan ${this.model.activePlanId ?? ""}`;
    } else if (res && res.error) {
      this.resultLine.textContent = `failed: ${res.error}: ${res.message}`;
    } else if (res) {
      this.resultLine.textContent =
        `${res.reached ? "reached" : res.aborted ? "aborted" : "stopped"} ` +
        `after ${res.steps} steps, ${res.elapsed_s?.toFixed(1)} s, ` +
        `max incline ${res.max_incline_deg?.toFixed(2)} deg`;
    } else {
      this.resultLine.textContent = "";
    }
  }
}

/** Error banner strip. Shows service messages verbatim, never rewrites. */
export class BannerBar {
  readonly root: HTMLElement;

  constructor(model: ConsoleModel) {
    this.root = el("div", "banner");
    this.root.hidden = true;
    model.onChange(() => {
      if (model.banner) {
        this.root.textContent = model.banner;
        this.root.hidden = false;
      } else {
        this.root.textContent = "";
        this.root.hidden = true;
      }
    });
  }
}
