// @vitest-environment jsdom
//
// Scripted operator session against a live control service. The service
// is the real thing spawned as a subprocess; the console runs in a
// headless DOM and talks to it over genuine HTTP and SSE. The script
// registers identity fiducials, plans a vertical insertion by dragging
// the markers, executes it while watching the axis bars, then drags the
// target somewhere unreachable and checks the console refuses to arm.
import { spawn, type ChildProcess } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { mountConsole, type Console } from "../src/app.js";
import type { AxisName } from "../src/types.js";
import { AXIS_ORDER } from "../src/types.js";

const PORT = 8473 + (process.pid % 400);
const BASE = `http://127.0.0.1:${PORT}`;
const TIME_SCALE = 150;

let service: ChildProcess;
let serviceLog = "";
let app: Console;

async function until(cond: () => boolean, timeoutMs = 15_000, what = "condition"): Promise<void> {
  const t0 = Date.now();
  while (!cond()) {
    if (Date.now() - t0 > timeoutMs) {
      throw new Error(`timed out waiting for ${what}\nservice log:\n${serviceLog}`);
    }
    await new Promise((r) => setTimeout(r, 10));
  }
}

function mouse(type: string, clientX: number, clientY: number): MouseEvent {
  return new MouseEvent(type, { clientX, clientY, bubbles: true });
}

/** Drag a marker in the top view to world (x, y) at 3 px/mm. */
function dragTop(which: "entry" | "target", x: number, y: number): void {
  const top = app.root.querySelector<SVGSVGElement>(".view-top")!;
  const marker = top.querySelector<SVGCircleElement>(`.marker-${which}`)!;
  const sx = (x + 60) * 3;
  const sy = (30 - y) * 3;
  marker.dispatchEvent(mouse("mousedown", sx, sy));
  top.dispatchEvent(mouse("mousemove", sx, sy));
  top.dispatchEvent(mouse("mouseup", sx, sy));
}

/** Wait for the live re-plan triggered by a drag to settle. */
async function planSettled(): Promise<void> {
  await until(
    () => !app.model.planPending && (app.model.plan !== null || app.model.planError !== null),
    15_000,
    "plan response",
  );
}

function readBars(): Record<AxisName, number> {
  const out = {} as Record<AxisName, number>;
  for (const name of AXIS_ORDER) {
    const bar = app.root.querySelector<HTMLElement>(`.axis-bar[data-axis="${name}"]`)!;
    out[name] = parseFloat(bar.dataset.positionMm ?? "nan");
  }
  return out;
}

function executeButton(): HTMLButtonElement {
  return app.root.querySelector<HTMLButtonElement>(".execute-btn")!;
}

function collapse(seq: string[]): string[] {
  const out: string[] = [];
  for (const s of seq) if (out[out.length - 1] !== s) out.push(s);
  return out;
}

beforeAll(async () => {
  service = spawn(
    "needleguide",
    ["serve", "--port", String(PORT), "--time-scale", String(TIME_SCALE)],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  service.stdout!.on("data", (d) => (serviceLog += d));
  service.stderr!.on("data", (d) => (serviceLog += d));
  const t0 = Date.now();
  for (;;) {
    try {
      const res = await fetch(`${BASE}/state`, { signal: AbortSignal.timeout(1000) });
      if (res.ok) break;
    } catch {
      // not up yet
    }
    if (Date.now() - t0 > 30_000) {
      throw new Error(`service did not come up\n${serviceLog}`);
    }
    await new Promise((r) => setTimeout(r, 300));
  }
  app = mountConsole(document.body, BASE);
});

afterAll(() => {
  service?.kill("SIGTERM");
});

describe("operator session", () => {
  it("connects and shows the initial pose", async () => {
    await app.connect();
    expect(app.model.connection).toBe("live");
    await until(() => app.model.axes !== null, 10_000, "first telemetry");
    expect(app.model.config!.max_incline_deg).toBe(30.0);
    const bars = readBars();
    for (const name of AXIS_ORDER) expect(bars[name]).toBeCloseTo(0, 6);
  });

  it("registers identity fiducials through the panel", async () => {
    const input = app.root.querySelector<HTMLTextAreaElement>(".pairs-input")!;
    input.value = JSON.stringify({
      pairs: [
        { mr: [40, 0, 0], robot: [40, 0, 0] },
        { mr: [0, 40, 0], robot: [0, 40, 0] },
        { mr: [0, 0, -50], robot: [0, 0, -50] },
        { mr: [-40, 10, -20], robot: [-40, 10, -20] },
      ],
    });
    app.root.querySelector<HTMLButtonElement>(".register-btn")!.click();
    await until(() => app.model.registered, 10_000, "registration");
    expect(app.model.registrationRms!).toBeLessThan(1e-9);
    const summary = app.root.querySelector<HTMLElement>(".registration-summary")!;
    expect(summary.textContent).toContain("rms residual 0.000 mm");
    // planning switches to scanner coordinates once a registration exists
    await planSettled();
    expect(app.model.markers.frame).toBe("mr");
    expect(app.model.plan).not.toBeNull();
  });

  it("plans a vertical insertion by dragging the markers", async () => {
    dragTop("entry", 10, 6);
    await planSettled();
    dragTop("target", 10, 6);
    await planSettled();

    const plan = app.model.plan!;
    expect(plan.feasible).toBe(true);
    expect(plan.incline_deg).toBeCloseTo(0.0, 9);
    expect(plan.pose_mm.x_u).toBeCloseTo(10, 9);
    expect(plan.pose_mm.y_l).toBeCloseTo(6, 9);

    const readout = app.root.querySelector<HTMLElement>(".incline-readout")!;
    expect(readout.textContent).toBe("incline: 0.00 deg");
    expect(readout.classList.contains("over")).toBe(false);

    // the drawn polyline is the service's, endpoint for endpoint
    const side = app.root.querySelector<SVGPolylineElement>(".view-side .plan-path")!;
    const pts = side
      .getAttribute("points")!
      .split(" ")
      .map((p) => p.split(",").map(Number));
    expect(pts).toHaveLength(plan.path_mm.length);
    for (let i = 0; i < pts.length; i++) {
      expect(pts[i][0]).toBeCloseTo((plan.path_mm[i][0] + 60) * 3, 6);
      expect(pts[i][1]).toBeCloseTo((15 - plan.path_mm[i][2]) * 3, 6);
    }

    expect(executeButton().disabled).toBe(false);
  });

  it("executes the plan, bars moving one axis at a time per the step log", async () => {
    const snaps: { executing: boolean; bars: Record<AxisName, number> }[] = [];
    const unhook = app.model.onChange(() => {
      snaps.push({ executing: app.model.executing, bars: readBars() });
    });

    executeButton().click();
    await until(() => app.model.executing, 10_000, "plan start");
    expect(executeButton().disabled).toBe(true);
    await until(
      () => !app.model.executing && app.model.lastResult !== null,
      20_000,
      "plan finish",
    );
    unhook();

    const result = app.model.lastResult!;
    expect(result.error).toBeUndefined();
    expect(result.reached).toBe(true);
    expect(app.model.stepLog.length).toBe(result.steps);
    expect(app.model.stepLog.length).toBeGreaterThanOrEqual(4);
    const loggedAxes = app.model.stepLog.map((s) => s.axisName);
    expect(new Set(loggedAxes)).toEqual(new Set(AXIS_ORDER));

    // inside the run, every DOM change touched at most one axis bar
    const run = snaps.filter((s) => s.executing);
    expect(run.length).toBeGreaterThan(1);
    const changes: string[] = [];
    for (let i = 1; i < run.length; i++) {
      const changed = AXIS_ORDER.filter(
        (name) => Math.abs(run[i].bars[name] - run[i - 1].bars[name]) > 1e-9,
      );
      expect(changed.length).toBeLessThanOrEqual(1);
      if (changed.length === 1) changes.push(changed[0]);
    }
    // and the order the bars moved in is the order the step log streamed
    expect(collapse(changes)).toEqual(collapse(loggedAxes));

    // settled pose: every carriage under the vertical line at (10, 6)
    await until(() => {
      const bars = readBars();
      return AXIS_ORDER.every(
        (name) => Math.abs(bars[name] - (name.endsWith("_x") ? 10 : 6)) < 1.0,
      );
    }, 10_000, "final telemetry");
    expect(executeButton().disabled).toBe(false);
  });

  it("disables Execute when a drag makes the plan infeasible", async () => {
    dragTop("entry", 25, 13);
    await planSettled();
    expect(app.model.plan).not.toBeNull(); // still reachable

    dragTop("target", -45, -7);
    await planSettled();

    expect(app.model.plan).toBeNull();
    expect(app.model.planError!.error).toBe("InclineExceeded");
    expect(executeButton().disabled).toBe(true);

    const banner = app.root.querySelector<HTMLElement>(".banner")!;
    expect(banner.hidden).toBe(false);
    expect(banner.textContent).toContain("InclineExceeded");
    expect(banner.textContent).toContain("over limit");

    const readout = app.root.querySelector<HTMLElement>(".incline-readout")!;
    expect(readout.classList.contains("over")).toBe(true);
    expect(parseFloat(readout.textContent!.replace("incline: ", ""))).toBeGreaterThan(30);
  });

  it("aborts a running plan from the dashboard", async () => {
    dragTop("target", -5, -4);
    await planSettled();
    dragTop("entry", -5, -4);
    await planSettled();
    expect(app.model.plan!.feasible).toBe(true);
    expect(executeButton().disabled).toBe(false);

    executeButton().click();
    await until(() => app.model.executing, 10_000, "plan start");
    app.root.querySelector<HTMLButtonElement>(".abort-btn")!.click();
    await until(
      () => !app.model.executing && app.model.lastResult !== null,
      20_000,
      "plan finish after abort",
    );
    const result = app.model.lastResult!;
    // the run is short at this time scale; the abort must stop it unless
    // it already reached the goal in the race
    expect(result.aborted === true || result.reached === true).toBe(true);
    expect(executeButton().disabled).toBe(false);
  });
});
